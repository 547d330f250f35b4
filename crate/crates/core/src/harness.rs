//! Monte Carlo experiment runner: trials, n-sweeps, slope fitting and
//! bound-vs-error comparison.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::linmodel;
use crate::pca::{self, NoiseProfile, WeightScheme};
use crate::rng;
use crate::synth::{self, LinearNoiseSpec, MeanFamily, MeasurementFamily, NoiseSpec};

/// Per-user sample-count policy.
#[derive(Debug, Clone)]
pub enum MPolicy {
    Constant(usize),
    /// Counts cycle through the list: user i gets list[i % len].
    Cycle(Vec<usize>),
}

impl MPolicy {
    pub fn counts(&self, n: usize) -> Vec<usize> {
        match self {
            MPolicy::Constant(m) => vec![*m; n],
            MPolicy::Cycle(list) => (0..n).map(|i| list[i % list.len()]).collect(),
        }
    }

    pub fn summary(&self) -> String {
        match self {
            MPolicy::Constant(m) => m.to_string(),
            MPolicy::Cycle(list) => list
                .iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join("|"),
        }
    }
}

/// Which estimator runs inside a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    /// The pairwise cross-moment estimator.
    Pairwise,
    /// The naive single-sample covariance baseline.
    SingleSample,
}

/// Problem setting plus its noise model.
#[derive(Debug, Clone)]
pub enum Setting {
    Pca {
        noise: NoiseSpec,
        mean_family: MeanFamily,
    },
    Linear {
        measurement: MeasurementFamily,
        noise: LinearNoiseSpec,
        r_cap: Option<f64>,
    },
}

impl Setting {
    pub fn name(&self) -> &'static str {
        match self {
            Setting::Pca { .. } => "pca",
            Setting::Linear { .. } => "linear",
        }
    }

    /// Short human-readable noise description for CSV rows.
    pub fn eta_summary(&self) -> String {
        fn span(etas: &[f64]) -> String {
            let min = etas.iter().cloned().fold(f64::MAX, f64::min);
            let max = etas.iter().cloned().fold(f64::MIN, f64::max);
            if min == max {
                format!("{min}")
            } else {
                format!("{min}..{max}")
            }
        }
        match self {
            Setting::Pca { noise, .. } => match noise {
                NoiseSpec::Spherical { etas } => span(etas),
                NoiseSpec::DiagonalAnisotropic { etas, .. } => format!("aniso:{}", span(etas)),
                NoiseSpec::ComplementAdversarial { sigma, alpha } => {
                    format!("adv:{sigma}:{alpha}")
                }
            },
            Setting::Linear { noise, .. } => match noise {
                LinearNoiseSpec::IndependentGaussian { etas } => span(etas),
                LinearNoiseSpec::MeasurementDependent { sigma } => format!("dep:{sigma}"),
            },
        }
    }

    /// Per-user sub-Gaussian constants when the noise model has them.
    fn etas(&self) -> Option<&[f64]> {
        match self {
            Setting::Pca {
                noise: NoiseSpec::Spherical { etas },
                ..
            }
            | Setting::Pca {
                noise: NoiseSpec::DiagonalAnisotropic { etas, .. },
                ..
            }
            | Setting::Linear {
                noise: LinearNoiseSpec::IndependentGaussian { etas },
                ..
            } => Some(etas),
            _ => None,
        }
    }

    /// Cycle per-user eta lists to length n, so one setting can serve every
    /// grid point of an n-sweep.
    fn with_n(&self, n: usize) -> Setting {
        fn cycle(etas: &[f64], n: usize) -> Vec<f64> {
            (0..n).map(|i| etas[i % etas.len()]).collect()
        }
        match self {
            Setting::Pca {
                noise: NoiseSpec::Spherical { etas },
                mean_family,
            } => Setting::Pca {
                noise: NoiseSpec::Spherical {
                    etas: cycle(etas, n),
                },
                mean_family: *mean_family,
            },
            Setting::Pca {
                noise: NoiseSpec::DiagonalAnisotropic { etas, profile },
                mean_family,
            } => Setting::Pca {
                noise: NoiseSpec::DiagonalAnisotropic {
                    etas: cycle(etas, n),
                    profile: profile.clone(),
                },
                mean_family: *mean_family,
            },
            Setting::Linear {
                noise: LinearNoiseSpec::IndependentGaussian { etas },
                measurement,
                r_cap,
            } => Setting::Linear {
                noise: LinearNoiseSpec::IndependentGaussian {
                    etas: cycle(etas, n),
                },
                measurement: *measurement,
                r_cap: *r_cap,
            },
            other => other.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub setting: Setting,
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub m_policy: MPolicy,
    pub sigma: f64,
    pub weights: WeightScheme,
    pub delta: f64,
    pub trials: usize,
    pub master_seed: u64,
    pub bound_constant: f64,
    pub estimator: EstimatorKind,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "delta must be in (0, 1/2), got {}",
                self.delta
            )));
        }
        if self.k == 0 || self.k >= self.d {
            return Err(Error::DimensionMismatch(format!(
                "requires 1 <= k < d, got d={}, k={}",
                self.d, self.k
            )));
        }
        Ok(())
    }

    fn weights_name(&self) -> &'static str {
        match self.weights {
            WeightScheme::Uniform => "uniform",
            WeightScheme::InformationOptimal(_) => "optimal",
            WeightScheme::Explicit(_) => "explicit",
        }
    }
}

/// Outcome of one trial. `elapsed_ms` is excluded from serialization so the
/// serialized form is a pure function of (config, trial index).
#[derive(Debug, Clone, Serialize)]
pub struct TrialResult {
    pub trial: u64,
    pub seed: u64,
    pub sin_theta: f64,
    pub gap: f64,
    pub upper_general: Option<f64>,
    pub upper_weighted: Option<f64>,
    pub lower: Option<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub elapsed_ms: f64,
}

fn failed_trial(trial: u64, seed: u64, err: Error, start: std::time::Instant) -> TrialResult {
    TrialResult {
        trial,
        seed,
        sin_theta: f64::NAN,
        gap: f64::NAN,
        upper_general: None,
        upper_weighted: None,
        lower: None,
        error: Some(err.to_string()),
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

/// Run a single trial: generate -> estimate -> angle -> bounds.
pub fn run_trial(config: &ExperimentConfig, trial: u64) -> TrialResult {
    let start = std::time::Instant::now();
    let seed = rng::derive_key(config.master_seed, &[trial]);
    let ms = config.m_policy.counts(config.n);
    let setting = config.setting.with_n(config.n);

    // cycle the scheme's eta list to this grid point's n as well
    let scheme = match &config.weights {
        WeightScheme::InformationOptimal(noise) => {
            let etas = (0..config.n)
                .map(|i| noise.etas[i % noise.etas.len()])
                .collect();
            match NoiseProfile::new(noise.sigma, etas) {
                Ok(p) => WeightScheme::InformationOptimal(p),
                Err(e) => return failed_trial(trial, seed, e, start),
            }
        }
        other => other.clone(),
    };

    let (sin_theta, gap, bounds) = match &setting {
        Setting::Pca { noise, mean_family } => {
            let generated = synth::gen_pca(
                config.d,
                config.k,
                config.n,
                &ms,
                config.sigma,
                noise,
                *mean_family,
                config.master_seed,
                trial,
            );
            let (dataset, truth) = match generated {
                Ok(v) => v,
                Err(e) => return failed_trial(trial, seed, e, start),
            };
            let est = match config.estimator {
                EstimatorKind::Pairwise => pca::estimate_subspace(&dataset, config.k, &scheme),
                EstimatorKind::SingleSample => {
                    pca::estimate_subspace_single_sample(&dataset, config.k, &scheme)
                }
            };
            let est = match est {
                Ok(v) => v,
                Err(e) => return failed_trial(trial, seed, e, start),
            };
            let s = match linalg::max_principal_angle_sin(&est.basis, &truth.basis) {
                Ok(v) => v,
                Err(e) => return failed_trial(trial, seed, e, start),
            };
            let bounds = setting.etas().and_then(|etas| {
                let noise_profile = NoiseProfile::new(config.sigma, etas.to_vec()).ok()?;
                pca::bound_report(
                    &truth.vectors,
                    &est.weights,
                    &noise_profile,
                    &ms,
                    config.d,
                    config.k,
                    config.delta,
                    config.bound_constant,
                )
                .ok()
            });
            (s, est.eigen.gap, bounds)
        }
        Setting::Linear {
            measurement,
            noise,
            r_cap,
        } => {
            let generated = synth::gen_linear(
                config.d,
                config.k,
                config.n,
                &ms,
                config.sigma,
                *r_cap,
                *measurement,
                noise,
                config.master_seed,
                trial,
            );
            let (dataset, truth) = match generated {
                Ok(v) => v,
                Err(e) => return failed_trial(trial, seed, e, start),
            };
            let est = match config.estimator {
                EstimatorKind::Pairwise => {
                    linmodel::estimate_subspace_linear(&dataset, config.k, &scheme)
                }
                EstimatorKind::SingleSample => {
                    linmodel::estimate_subspace_linear_single_sample(&dataset, config.k, &scheme)
                }
            };
            let est = match est {
                Ok(v) => v,
                Err(e) => return failed_trial(trial, seed, e, start),
            };
            let s = match linalg::max_principal_angle_sin(&est.basis, &truth.basis) {
                Ok(v) => v,
                Err(e) => return failed_trial(trial, seed, e, start),
            };
            (s, est.eigen.gap, None)
        }
    };

    TrialResult {
        trial,
        seed,
        sin_theta,
        gap,
        upper_general: bounds.as_ref().map(|b| b.upper_general),
        upper_weighted: bounds.as_ref().map(|b| b.upper_weighted),
        lower: bounds.as_ref().map(|b| b.lower),
        error: None,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

/// One aggregated grid point of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub setting: String,
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub m: String,
    pub sigma: f64,
    pub eta_summary: String,
    pub weights: String,
    pub delta: f64,
    pub trials: usize,
    pub median_sin: f64,
    pub q25: f64,
    pub q75: f64,
    pub upper_weighted: f64,
    pub lower: f64,
    pub failed: usize,
    pub elapsed_ms_total: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().cloned().filter(|x| x.is_finite()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile(&v, 0.5)
}

/// Run all trials of a config in parallel on `workers` threads. Results are
/// returned in trial order regardless of scheduling.
pub fn run_trials(config: &ExperimentConfig, workers: usize) -> Result<Vec<TrialResult>> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let results = pool.install(|| {
        (0..config.trials as u64)
            .into_par_iter()
            .map(|t| run_trial(config, t))
            .collect::<Vec<_>>()
    });
    Ok(results)
}

/// Sweep the user count over `n_values`, aggregating each grid point.
pub fn sweep(
    config: &ExperimentConfig,
    n_values: &[usize],
    workers: usize,
) -> Result<Vec<SweepRow>> {
    if n_values.is_empty() {
        return Err(Error::InvalidParameter("sweep grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let point = ExperimentConfig {
            n,
            setting: config.setting.with_n(n),
            ..config.clone()
        };
        let start = std::time::Instant::now();
        let results = run_trials(&point, workers)?;
        let mut sins: Vec<f64> = results
            .iter()
            .filter(|r| r.error.is_none())
            .map(|r| r.sin_theta)
            .collect();
        sins.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let failed = results.iter().filter(|r| r.error.is_some()).count();

        // theoretical envelope at this grid point (constants as configured)
        let ms = point.m_policy.counts(n);
        let envelope = point.setting.etas().and_then(|etas| {
            let noise = NoiseProfile::new(point.sigma, etas.to_vec()).ok()?;
            let profile = pca::gamma_profile(&noise, &ms, point.k).ok()?;
            let upper =
                pca::upper_bound_weighted(&profile, point.d, point.delta, point.bound_constant);
            let lower = pca::lower_bound(
                point.d,
                point.k,
                point.delta,
                &profile.gamma,
                point.bound_constant,
            )
            .ok()?;
            Some((upper, lower))
        });
        let (upper, lower) = envelope.unwrap_or((f64::NAN, f64::NAN));

        rows.push(SweepRow {
            setting: point.setting.name().to_string(),
            d: point.d,
            k: point.k,
            n,
            m: point.m_policy.summary(),
            sigma: point.sigma,
            eta_summary: point.setting.eta_summary(),
            weights: point.weights_name().to_string(),
            delta: point.delta,
            trials: point.trials,
            median_sin: quantile(&sins, 0.5),
            q25: quantile(&sins, 0.25),
            q75: quantile(&sins, 0.75),
            upper_weighted: upper,
            lower,
            failed,
            elapsed_ms_total: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(rows)
}

/// Ordinary least squares on (log x, log y).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "need >= 3 points for a slope fit, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(Error::InvalidParameter(
            "log-log fit requires strictly positive coordinates".into(),
        ));
    }
    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LogLogFit {
        slope,
        intercept,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn basic_pca_config() -> ExperimentConfig {
        ExperimentConfig {
            setting: Setting::Pca {
                noise: NoiseSpec::spherical_uniform(0.0, 10),
                mean_family: MeanFamily::Gaussian,
            },
            d: 8,
            k: 2,
            n: 10,
            m_policy: MPolicy::Constant(2),
            sigma: 1.0,
            weights: WeightScheme::Uniform,
            delta: 0.1,
            trials: 4,
            master_seed: 5,
            bound_constant: 1.0,
            estimator: EstimatorKind::Pairwise,
        }
    }

    #[test]
    fn zero_noise_trials_are_exact() {
        let cfg = ExperimentConfig {
            setting: Setting::Pca {
                noise: NoiseSpec::Spherical {
                    etas: vec![1e-30; 10],
                },
                mean_family: MeanFamily::Gaussian,
            },
            ..basic_pca_config()
        };
        let r = run_trial(&cfg, 0);
        assert!(r.error.is_none());
        assert!(r.sin_theta <= 1e-8, "sin theta {}", r.sin_theta);
    }

    #[test]
    fn trial_is_deterministic() {
        let cfg = basic_pca_config();
        let a = serde_json::to_vec(&run_trial(&cfg, 3)).unwrap();
        let b = serde_json::to_vec(&run_trial(&cfg, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trial_respects_davis_kahan_chain() {
        // verified at module level in the acceptance suite; here check the
        // trial output is sane
        let cfg = ExperimentConfig {
            setting: Setting::Pca {
                noise: NoiseSpec::spherical_uniform(0.1, 10),
                mean_family: MeanFamily::Gaussian,
            },
            ..basic_pca_config()
        };
        let r = run_trial(&cfg, 0);
        assert!(r.error.is_none());
        assert!((0.0..=1.0).contains(&r.sin_theta));
        assert!(r.upper_general.unwrap() > 0.0);
    }

    #[test]
    fn sweep_rows_match_grid() {
        let cfg = basic_pca_config();
        let rows = sweep(&cfg, &[10, 20], 2).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].n, 10);
        assert_eq!(rows[1].n, 20);
        assert_eq!(rows[0].failed, 0);
    }

    #[test]
    fn loglog_fit_exact_cases() {
        let pts: Vec<(f64, f64)> = [1.0, 10.0, 100.0]
            .iter()
            .map(|&x: &f64| (x, x.powf(-0.5)))
            .collect();
        let fit = fit_loglog_slope(&pts).unwrap();
        assert_abs_diff_eq!(fit.slope, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);

        let pts: Vec<(f64, f64)> = [1.0, 2.0, 5.0].iter().map(|&x| (x, 7.0)).collect();
        let fit = fit_loglog_slope(&pts).unwrap();
        assert_abs_diff_eq!(fit.slope, 0.0, epsilon = 1e-12);

        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&x: &f64| (x, 3.0 * x * x))
            .collect();
        let fit = fit_loglog_slope(&pts).unwrap();
        assert_abs_diff_eq!(fit.slope, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, 3.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn loglog_fit_rejects_bad_input() {
        assert!(fit_loglog_slope(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(fit_loglog_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
    }
}
