//! Command-line surface: estimate on data files, generate synthetic data,
//! run Monte Carlo simulations and sweeps, compute angles between stored
//! bases. Thin single-threaded orchestration over the library; `sweep` and
//! `simulate` fan out across `--workers` threads internally.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use subrec::harness::{
    self, EstimatorKind, ExperimentConfig, MPolicy, Setting, SweepRow, TrialResult,
};
use subrec::linmodel;
use subrec::pca::{self, NoiseProfile, WeightScheme};
use subrec::synth::{LinearNoiseSpec, MeanFamily, MeasurementFamily, NoiseSpec};
use subrec::{io, linalg, Error, Result};

#[derive(Parser)]
#[command(
    name = "subrec",
    about = "Subspace recovery from heterogeneous multi-sample user data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a shared subspace from a data CSV and write its basis.
    Estimate(EstimateArgs),
    /// Generate a synthetic dataset CSV.
    Generate(GenerateArgs),
    /// Run Monte Carlo trials for one configuration and print a summary.
    Simulate(SimArgs),
    /// Sweep the user count over a grid and emit one CSV row per point.
    Sweep(SweepArgs),
    /// Print the principal angles between two stored bases.
    Angles(AnglesArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Model {
    Pca,
    Linear,
}

#[derive(Args)]
struct EstimateArgs {
    /// Input data CSV (`user_id,x_0,...` or `user_id,y,x_0,...`).
    #[arg(long)]
    input: PathBuf,
    /// Target subspace dimension.
    #[arg(short, long)]
    k: usize,
    /// Where to write the basis CSV (d rows, k columns).
    #[arg(long)]
    output: PathBuf,
    /// Data model the file encodes.
    #[arg(long, value_enum, default_value = "pca")]
    model: Model,
    /// Weighting scheme.
    #[arg(long, default_value = "uniform")]
    weights: String,
    /// Shared in-subspace scale sigma (enables the Assumption-2 report).
    #[arg(long)]
    sigma: Option<f64>,
    /// Per-user noise scales, comma separated, cycled to the user count.
    #[arg(long, value_delimiter = ',')]
    eta: Vec<f64>,
    /// Failure probability for the Assumption-2 margin.
    #[arg(long, default_value = "0.05")]
    delta: f64,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "pca")]
    model: Model,
    #[arg(long)]
    d: usize,
    #[arg(short, long)]
    k: usize,
    #[arg(short, long)]
    n: usize,
    /// Samples per user: a single count or a cycled list like `2|6`.
    #[arg(short, long, default_value = "2")]
    m: String,
    #[arg(long, default_value = "1.0")]
    sigma: f64,
    /// Per-user noise scales, comma separated, cycled to n users.
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    eta: Vec<f64>,
    /// Noise model: spherical | adversarial (PCA) | independent | dependent (linear).
    #[arg(long, default_value = "spherical")]
    noise: String,
    /// Isotropic floor for adversarial noise.
    #[arg(long, default_value = "1.0")]
    alpha: f64,
    #[arg(long, default_value = "0")]
    seed: u64,
    /// Trial index within the seed's stream family.
    #[arg(long, default_value = "0")]
    trial: u64,
    #[arg(long)]
    output: PathBuf,
    /// Also write the ground-truth basis here.
    #[arg(long)]
    truth: Option<PathBuf>,
}

/// Flags shared by `simulate` and `sweep`; every flag overrides the same
/// key in `--config` when both are given.
#[derive(Args)]
struct RunArgs {
    /// key = value configuration file; '#' starts a comment.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<Model>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(short, long)]
    k: Option<usize>,
    #[arg(short, long)]
    n: Option<usize>,
    /// Samples per user: a single count or a cycled list like `2|6`.
    #[arg(short, long)]
    m: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Per-user noise scales, comma separated, cycled to n users.
    #[arg(long)]
    eta: Option<String>,
    /// uniform | optimal
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Constant C applied to every bound formula.
    #[arg(long)]
    constant: Option<f64>,
    /// pairwise | single
    #[arg(long)]
    estimator: Option<String>,
    /// spherical | adversarial | independent | dependent
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// gaussian | rademacher (PCA mean family / linear measurement family)
    #[arg(long)]
    means: Option<String>,
    #[arg(long)]
    measurement: Option<String>,
    /// Cap on ||beta|| in the linear model.
    #[arg(long)]
    r_cap: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
    /// Print every trial, not just the aggregate.
    #[arg(long)]
    per_trial: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Grid of user counts, comma separated (config key `n_grid`).
    #[arg(long)]
    n_grid: Option<String>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Zero the elapsed-time column so output is byte-reproducible.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct AnglesArgs {
    basis_a: PathBuf,
    basis_b: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Angles(args) => cmd_angles(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cycle(etas: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| etas[i % etas.len()]).collect()
}

fn parse_list<T: std::str::FromStr>(s: &str, sep: char, what: &str) -> Result<Vec<T>> {
    s.split(sep)
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|_| Error::InvalidParameter(format!("bad {what} entry {p:?}")))
        })
        .collect()
}

fn parse_m_policy(s: &str) -> Result<MPolicy> {
    let list: Vec<usize> = parse_list(s, '|', "sample count")?;
    match list.as_slice() {
        [] => Err(Error::InvalidParameter("empty sample-count list".into())),
        [m] => Ok(MPolicy::Constant(*m)),
        _ => Ok(MPolicy::Cycle(list)),
    }
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let text = io::read_file(&args.input)?;
    let (estimate, n_users, counts, d) = match args.model {
        Model::Pca => {
            let dataset = io::parse_pca_csv(&text)?;
            let scheme = estimate_scheme(&args, dataset.n_users())?;
            let est = pca::estimate_subspace(&dataset, args.k, &scheme)?;
            (est, dataset.n_users(), dataset.sample_counts(), dataset.d())
        }
        Model::Linear => {
            let dataset = io::parse_linear_csv(&text)?;
            let scheme = estimate_scheme(&args, dataset.n_users())?;
            let est = linmodel::estimate_subspace_linear(&dataset, args.k, &scheme)?;
            (est, dataset.n_users(), dataset.sample_counts(), dataset.d())
        }
    };
    io::write_file(&args.output, &io::basis_csv(&estimate.basis))?;

    // Assumption-2 margin is only defined when the noise scales are known.
    let assumption2 = match (args.sigma, args.eta.is_empty()) {
        (Some(sigma), false) => {
            let noise = NoiseProfile::new(sigma, cycle(&args.eta, n_users))?;
            let profile = pca::gamma_profile(&noise, &counts, args.k)?;
            Some(pca::check_assumption2(&profile, args.delta, 1.0)?)
        }
        _ => None,
    };

    match args.format {
        OutputFormat::Json => {
            let report = json!({
                "d": d,
                "k": args.k,
                "users": n_users,
                "dropped_users": estimate.dropped_users,
                "eigenvalues": estimate.eigen.values,
                "gap": estimate.eigen.gap,
                "degenerate_gap": estimate.degenerate_gap,
                "weights": estimate.weights,
                "assumption2_holds": assumption2.as_ref().map(|a| a.holds),
                "assumption2_margin": assumption2.as_ref().map(|a| a.margin),
                "basis_file": args.output,
            });
            println!("{report}");
        }
        OutputFormat::Text => {
            println!("users: {n_users}  d: {d}  k: {}", args.k);
            if !estimate.dropped_users.is_empty() {
                println!("dropped users (fewer than 2 samples): {:?}", estimate.dropped_users);
            }
            println!("eigenvalues: {:?}", estimate.eigen.values.as_slice());
            println!("gap: {}", estimate.eigen.gap);
            if estimate.degenerate_gap {
                println!("warning: nonpositive eigengap; angle guarantees void");
            }
            println!("weights: {:?}", estimate.weights);
            if let Some(a2) = &assumption2 {
                println!("assumption2: holds={} margin={}", a2.holds, a2.margin);
            }
            println!("basis written to {}", args.output.display());
        }
    }
    Ok(())
}

fn estimate_scheme(args: &EstimateArgs, n: usize) -> Result<WeightScheme> {
    match args.weights.as_str() {
        "uniform" => Ok(WeightScheme::Uniform),
        "optimal" => {
            let sigma = args.sigma.ok_or_else(|| {
                Error::InvalidParameter("--weights optimal requires --sigma and --eta".into())
            })?;
            if args.eta.is_empty() {
                return Err(Error::InvalidParameter(
                    "--weights optimal requires --sigma and --eta".into(),
                ));
            }
            Ok(WeightScheme::InformationOptimal(NoiseProfile::new(
                sigma,
                cycle(&args.eta, n),
            )?))
        }
        other => Err(Error::InvalidParameter(format!(
            "unknown weight scheme {other:?} (expected uniform | optimal)"
        ))),
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let ms = parse_m_policy(&args.m)?.counts(args.n);
    let etas = cycle(&args.eta, args.n);
    match args.model {
        Model::Pca => {
            let noise = match args.noise.as_str() {
                "spherical" => NoiseSpec::Spherical { etas },
                "adversarial" => NoiseSpec::ComplementAdversarial {
                    sigma: args.sigma,
                    alpha: args.alpha,
                },
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown PCA noise model {other:?}"
                    )))
                }
            };
            let (dataset, truth) = subrec::synth::gen_pca(
                args.d,
                args.k,
                args.n,
                &ms,
                args.sigma,
                &noise,
                MeanFamily::Gaussian,
                args.seed,
                args.trial,
            )?;
            io::write_file(&args.output, &io::pca_csv(&dataset))?;
            if let Some(path) = &args.truth {
                io::write_file(path, &io::basis_csv(&truth.basis))?;
            }
        }
        Model::Linear => {
            let noise = match args.noise.as_str() {
                "independent" | "spherical" => LinearNoiseSpec::IndependentGaussian { etas },
                "dependent" => LinearNoiseSpec::MeasurementDependent { sigma: args.sigma },
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown linear noise model {other:?}"
                    )))
                }
            };
            let (dataset, truth) = subrec::synth::gen_linear(
                args.d,
                args.k,
                args.n,
                &ms,
                args.sigma,
                None,
                MeasurementFamily::Gaussian,
                &noise,
                args.seed,
                args.trial,
            )?;
            io::write_file(&args.output, &io::linear_csv(&dataset))?;
            if let Some(path) = &args.truth {
                io::write_file(path, &io::basis_csv(&truth.basis))?;
            }
        }
    }
    println!("wrote {}", args.output.display());
    Ok(())
}

/// Keys accepted in a `--config` file; each has a flag of the same name
/// (dashes for underscores) and flags win.
const CONFIG_KEYS: &[&str] = &[
    "model", "d", "k", "n", "m", "sigma", "eta", "weights", "delta", "trials", "seed",
    "constant", "estimator", "noise", "alpha", "means", "measurement", "r_cap", "n_grid",
    "workers",
];

/// File values merged under flag values, everything still textual.
#[derive(Default)]
struct RawConfig {
    values: std::collections::HashMap<String, String>,
}

impl RawConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let mut values = std::collections::HashMap::new();
        if let Some(path) = path {
            let text = io::read_file(path)?;
            for (key, value, _line) in io::parse_config_file(&text, CONFIG_KEYS)? {
                values.insert(key, value);
            }
        }
        Ok(RawConfig { values })
    }

    fn set_opt(&mut self, key: &str, value: Option<String>) {
        if let Some(v) = value {
            self.values.insert(key.to_string(), v);
        }
    }

    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<T>()
                .map_err(|_| Error::InvalidParameter(format!("bad value {v:?} for {key}"))),
        }
    }

    fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self
            .values
            .get(key)
            .ok_or_else(|| Error::InvalidParameter(format!("missing required parameter {key}")))?;
        v.parse::<T>()
            .map_err(|_| Error::InvalidParameter(format!("bad value {v:?} for {key}")))
    }

    fn get_str(&self, key: &str, default: &str) -> String {
        self.values
            .get(key)
            .cloned()
            .unwrap_or_else(|| default.to_string())
    }
}

fn merge_run_args(args: &RunArgs) -> Result<RawConfig> {
    let mut cfg = RawConfig::load(args.config.as_deref())?;
    cfg.set_opt(
        "model",
        args.model.map(|m| {
            match m {
                Model::Pca => "pca",
                Model::Linear => "linear",
            }
            .to_string()
        }),
    );
    cfg.set_opt("d", args.d.map(|v| v.to_string()));
    cfg.set_opt("k", args.k.map(|v| v.to_string()));
    cfg.set_opt("n", args.n.map(|v| v.to_string()));
    cfg.set_opt("m", args.m.clone());
    cfg.set_opt("sigma", args.sigma.map(|v| v.to_string()));
    cfg.set_opt("eta", args.eta.clone());
    cfg.set_opt("weights", args.weights.clone());
    cfg.set_opt("delta", args.delta.map(|v| v.to_string()));
    cfg.set_opt("trials", args.trials.map(|v| v.to_string()));
    cfg.set_opt("seed", args.seed.map(|v| v.to_string()));
    cfg.set_opt("constant", args.constant.map(|v| v.to_string()));
    cfg.set_opt("estimator", args.estimator.clone());
    cfg.set_opt("noise", args.noise.clone());
    cfg.set_opt("alpha", args.alpha.map(|v| v.to_string()));
    cfg.set_opt("means", args.means.clone());
    cfg.set_opt("measurement", args.measurement.clone());
    cfg.set_opt("r_cap", args.r_cap.map(|v| v.to_string()));
    cfg.set_opt("workers", args.workers.map(|v| v.to_string()));
    Ok(cfg)
}

fn build_experiment(cfg: &RawConfig) -> Result<ExperimentConfig> {
    let d: usize = cfg.require("d")?;
    let k: usize = cfg.require("k")?;
    let n: usize = cfg.require("n")?;
    let sigma: f64 = cfg.get("sigma", 1.0)?;
    let m_policy = parse_m_policy(&cfg.get_str("m", "2"))?;
    let etas: Vec<f64> = parse_list(&cfg.get_str("eta", "1.0"), ',', "eta")?;
    let etas = cycle(&etas, n);
    let model = cfg.get_str("model", "pca");
    let noise_name = cfg.get_str("noise", "spherical");

    let setting = match model.as_str() {
        "pca" => {
            let noise = match noise_name.as_str() {
                "spherical" => NoiseSpec::Spherical { etas: etas.clone() },
                "adversarial" => NoiseSpec::ComplementAdversarial {
                    sigma,
                    alpha: cfg.get("alpha", 1.0)?,
                },
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown PCA noise model {other:?}"
                    )))
                }
            };
            let mean_family = match cfg.get_str("means", "gaussian").as_str() {
                "gaussian" => MeanFamily::Gaussian,
                "rademacher" => MeanFamily::SubspaceRademacher,
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown mean family {other:?}"
                    )))
                }
            };
            Setting::Pca { noise, mean_family }
        }
        "linear" => {
            let noise = match noise_name.as_str() {
                "independent" | "spherical" => LinearNoiseSpec::IndependentGaussian {
                    etas: etas.clone(),
                },
                "dependent" => LinearNoiseSpec::MeasurementDependent { sigma },
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown linear noise model {other:?}"
                    )))
                }
            };
            let measurement = match cfg.get_str("measurement", "gaussian").as_str() {
                "gaussian" => MeasurementFamily::Gaussian,
                "rademacher" => MeasurementFamily::Rademacher,
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown measurement family {other:?}"
                    )))
                }
            };
            let r_cap = match cfg.values.get("r_cap") {
                Some(v) => Some(v.parse::<f64>().map_err(|_| {
                    Error::InvalidParameter(format!("bad value {v:?} for r_cap"))
                })?),
                None => None,
            };
            Setting::Linear {
                measurement,
                noise,
                r_cap,
            }
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown model {other:?} (expected pca | linear)"
            )))
        }
    };

    let weights = match cfg.get_str("weights", "uniform").as_str() {
        "uniform" => WeightScheme::Uniform,
        "optimal" => WeightScheme::InformationOptimal(NoiseProfile::new(sigma, etas)?),
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown weight scheme {other:?} (expected uniform | optimal)"
            )))
        }
    };
    let estimator = match cfg.get_str("estimator", "pairwise").as_str() {
        "pairwise" => EstimatorKind::Pairwise,
        "single" => EstimatorKind::SingleSample,
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown estimator {other:?} (expected pairwise | single)"
            )))
        }
    };

    let config = ExperimentConfig {
        setting,
        d,
        k,
        n,
        m_policy,
        sigma,
        weights,
        delta: cfg.get("delta", 0.05)?,
        trials: cfg.get("trials", 20)?,
        master_seed: cfg.get("seed", 0)?,
        bound_constant: cfg.get("constant", 1.0)?,
        estimator,
    };
    config.validate()?;
    Ok(config)
}

fn cmd_simulate(args: SimArgs) -> Result<()> {
    let cfg = merge_run_args(&args.run)?;
    let workers: usize = cfg.get("workers", 1)?;
    let config = build_experiment(&cfg)?;
    let results = harness::run_trials(&config, workers)?;

    let sins: Vec<f64> = results
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| r.sin_theta)
        .collect();
    let failed = results.len() - sins.len();
    let median = harness::median(&sins);

    match args.format {
        OutputFormat::Json => {
            let body = json!({
                "trials": results.len(),
                "failed": failed,
                "median_sin": median,
                "results": if args.per_trial {
                    serde_json::to_value(&results).expect("serializable")
                } else {
                    serde_json::Value::Null
                },
            });
            println!("{body}");
        }
        OutputFormat::Text => {
            if args.per_trial {
                for r in &results {
                    print_trial(r);
                }
            }
            println!("trials: {}  failed: {failed}  median sin: {median}", results.len());
        }
    }
    Ok(())
}

fn print_trial(r: &TrialResult) {
    match &r.error {
        Some(e) => println!("trial {}: failed: {e}", r.trial),
        None => println!(
            "trial {}: sin={:.6} gap={:.6} upper_w={}",
            r.trial,
            r.sin_theta,
            r.gap,
            r.upper_weighted.map_or("-".into(), |v| format!("{v:.6}")),
        ),
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let mut cfg = merge_run_args(&args.run)?;
    cfg.set_opt("n_grid", args.n_grid.clone());
    let grid_text = cfg
        .values
        .get("n_grid")
        .ok_or_else(|| Error::InvalidParameter("missing required parameter n_grid".into()))?
        .clone();
    let n_values: Vec<usize> = parse_list(&grid_text, ',', "n_grid")?;
    let workers: usize = cfg.get("workers", 1)?;
    // `n` only seeds validation; each grid point overrides it.
    if !cfg.values.contains_key("n") {
        let first = n_values
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty n_grid".into()))?;
        cfg.values.insert("n".into(), first.to_string());
    }
    let config = build_experiment(&cfg)?;
    let rows: Vec<SweepRow> = harness::sweep(&config, &n_values, workers)?;
    let csv = io::sweep_csv(&rows, args.deterministic);
    match &args.output {
        Some(path) => {
            io::write_file(path, &csv)?;
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_angles(args: AnglesArgs) -> Result<()> {
    let a = io::parse_basis_csv(&io::read_file(&args.basis_a)?)?;
    let b = io::parse_basis_csv(&io::read_file(&args.basis_b)?)?;
    let (lo, hi) = if a.k() <= b.k() { (&a, &b) } else { (&b, &a) };
    let angles = linalg::all_principal_angles(lo, hi)?;
    let max_sin = linalg::max_principal_angle_sin(&a, &b)?;
    match args.format {
        OutputFormat::Json => {
            println!("{}", json!({ "angles": angles, "max_sin": max_sin }));
        }
        OutputFormat::Text => {
            for (i, theta) in angles.iter().enumerate() {
                println!("angle[{i}]: {theta}");
            }
            println!("max_sin: {max_sin}");
        }
    }
    Ok(())
}
