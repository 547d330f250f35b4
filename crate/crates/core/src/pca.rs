//! Weighted pairwise cross-moment estimation for PCA under heterogeneous,
//! non-isotropic, user-dependent noise.
//!
//! Each user contributes m_i samples x_ij = mu_i + z_ij. The estimator
//! averages the U-statistic kernel x_{j1} x_{j2}^T over distinct pairs per
//! user, so its expectation is sum_i w_i mu_i mu_i^T no matter what the
//! per-sample noise distributions are, and the shared subspace is read off
//! the top-k eigenvectors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, Basis, EigenResult};

/// Per-user sample blocks; column j of block i is sample x_ij.
#[derive(Debug, Clone)]
pub struct PcaDataset {
    d: usize,
    users: Vec<DMatrix<f64>>,
}

impl PcaDataset {
    pub fn new(users: Vec<DMatrix<f64>>) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::InvalidParameter("dataset has no users".into()));
        }
        let d = users[0].nrows();
        for (i, block) in users.iter().enumerate() {
            if block.nrows() != d {
                return Err(Error::DimensionMismatch(format!(
                    "user {i} has dimension {}, expected {d}",
                    block.nrows()
                )));
            }
            if block.ncols() == 0 {
                return Err(Error::InsufficientSamples {
                    user: i,
                    found: 0,
                    required: 1,
                });
            }
            if block.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("samples of user {i}")));
            }
        }
        Ok(PcaDataset { d, users })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn user(&self, i: usize) -> &DMatrix<f64> {
        &self.users[i]
    }

    pub fn sample_counts(&self) -> Vec<usize> {
        self.users.iter().map(|b| b.ncols()).collect()
    }

    pub fn total_samples(&self) -> usize {
        self.users.iter().map(|b| b.ncols()).sum()
    }
}

/// Known noise scales: signal sigma and one sub-Gaussian constant per user.
#[derive(Debug, Clone)]
pub struct NoiseProfile {
    pub sigma: f64,
    pub etas: Vec<f64>,
}

impl NoiseProfile {
    pub fn new(sigma: f64, etas: Vec<f64>) -> Result<Self> {
        if sigma <= 0.0 || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        if etas.is_empty() {
            return Err(Error::InvalidParameter("etas is empty".into()));
        }
        if etas.iter().any(|&e| e <= 0.0 || !e.is_finite()) {
            return Err(Error::InvalidParameter(
                "every eta must be positive and finite (eta = 0 makes gamma infinite)".into(),
            ));
        }
        Ok(NoiseProfile { sigma, etas })
    }

    pub fn uniform(sigma: f64, eta: f64, n: usize) -> Result<Self> {
        NoiseProfile::new(sigma, vec![eta; n])
    }
}

/// Per-user information scores gamma_i and their capped variants gamma_i'.
///
/// gamma_i = (eta_i^2/(sigma^2 m_i) + eta_i^4/(sigma^4 m_i^2))^{-1}. In
/// sorted (descending) order the top k-1 scores are capped at the k-th, so
/// gamma'_1 = ... = gamma'_k >= gamma'_{k+1} >= ...
#[derive(Debug, Clone)]
pub struct GammaProfile {
    /// gamma_i in original user order.
    pub gamma: Vec<f64>,
    /// gamma'_i in original user order.
    pub gamma_prime: Vec<f64>,
    /// order[rank] = user index; stable sort of gamma descending.
    pub order: Vec<usize>,
    pub k: usize,
}

impl GammaProfile {
    pub fn sum_gamma_prime(&self) -> f64 {
        self.gamma_prime.iter().sum()
    }

    /// sum of gamma over sorted ranks k..n (1-indexed), i.e. excluding the
    /// k-1 most informative users. This is the denominator of the lower
    /// bound.
    pub fn gamma_tail_sum(&self) -> f64 {
        self.order[self.k - 1..]
            .iter()
            .map(|&u| self.gamma[u])
            .sum()
    }

    /// gamma values in descending order.
    pub fn gamma_sorted(&self) -> Vec<f64> {
        self.order.iter().map(|&u| self.gamma[u]).collect()
    }
}

/// Compute the information scores for known (sigma, eta_i, m_i).
pub fn gamma_profile(noise: &NoiseProfile, m: &[usize], k: usize) -> Result<GammaProfile> {
    let n = noise.etas.len();
    if m.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "etas has length {n} but m has length {}",
            m.len()
        )));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k must satisfy 1 <= k <= n, got k={k}, n={n}")));
    }
    if m.contains(&0) {
        return Err(Error::InvalidParameter("every m_i must be >= 1".into()));
    }
    let s2 = noise.sigma * noise.sigma;
    let gamma: Vec<f64> = noise
        .etas
        .iter()
        .zip(m)
        .map(|(&eta, &mi)| {
            let a = eta * eta / (s2 * mi as f64);
            1.0 / (a + a * a)
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable on user index so ties at gamma_k are resolved reproducibly
    order.sort_by(|&i, &j| gamma[j].partial_cmp(&gamma[i]).unwrap().then(i.cmp(&j)));
    let gamma_k = gamma[order[k - 1]];
    let mut gamma_prime = gamma.clone();
    for &u in &order[..k - 1] {
        gamma_prime[u] = gamma_k;
    }
    Ok(GammaProfile {
        gamma,
        gamma_prime,
        order,
        k,
    })
}

/// How the per-user weights w_i are chosen.
#[derive(Debug, Clone)]
pub enum WeightScheme {
    Uniform,
    /// w_i proportional to gamma'_i computed from the given noise profile.
    InformationOptimal(NoiseProfile),
    Explicit(Vec<f64>),
}

/// The optimal weights w_i = gamma'_i / sum_l gamma'_l, in original user
/// order.
pub fn optimal_weights(profile: &GammaProfile) -> Vec<f64> {
    let total = profile.sum_gamma_prime();
    profile.gamma_prime.iter().map(|g| g / total).collect()
}

fn validate_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {n} users",
            weights.len()
        )));
    }
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidParameter("weights must be nonnegative and finite".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("weights sum to {total}, expected 1")));
    }
    Ok(())
}

/// Result of the Assumption-2 feasibility check for the optimal weights.
#[derive(Debug, Clone, Copy)]
pub struct Assumption2Check {
    pub holds: bool,
    /// LHS/RHS - 1 of the primary form; >= 0 iff the assumption holds.
    pub margin: f64,
}

/// Check sum_i gamma'_i >= C_* (k + log(1/delta)) gamma'_1 and its
/// algebraically equivalent tail form
/// sum_{i=k+1}^n gamma_i >= ((C_* - 1) k + C_* log(1/delta)) gamma_k.
pub fn check_assumption2(profile: &GammaProfile, delta: f64, c_star: f64) -> Result<Assumption2Check> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidParameter(format!("delta must be in (0, 1/2), got {delta}")));
    }
    if c_star < 1.0 {
        return Err(Error::InvalidParameter(format!("c_star must be >= 1, got {c_star}")));
    }
    let k = profile.k as f64;
    let log_term = (1.0 / delta).ln();
    let gamma_k = profile.gamma[profile.order[profile.k - 1]];

    let lhs = profile.sum_gamma_prime();
    let rhs = c_star * (k + log_term) * gamma_k;
    let margin = lhs / rhs - 1.0;

    // tail form, cross-checking the algebra
    let tail: f64 = profile.order[profile.k..].iter().map(|&u| profile.gamma[u]).sum();
    let tail_rhs = ((c_star - 1.0) * k + c_star * log_term) * gamma_k;
    let tail_margin = (tail - tail_rhs) / rhs;
    debug_assert!(
        (margin - tail_margin).abs() <= 1e-9 * (1.0 + margin.abs()),
        "primary and tail forms disagree: {margin} vs {tail_margin}"
    );

    Ok(Assumption2Check {
        holds: margin >= 0.0,
        margin,
    })
}

/// Pairwise outer-product U-statistic of the columns of `block`:
/// (1/(m(m-1))) sum_{j1 != j2} c_{j1} c_{j2}^T, via the expansion
/// (s s^T - sum_j c_j c_j^T) / (m(m-1)) with s the column sum. O(m d^2).
pub(crate) fn pairwise_outer_moment(block: &DMatrix<f64>) -> DMatrix<f64> {
    let m = block.ncols() as f64;
    let s: DVector<f64> = block.column_sum();
    let outer = &s * s.transpose();
    let gram = block * block.transpose();
    let raw = (outer - gram) / (m * (m - 1.0));
    (&raw + raw.transpose()) * 0.5
}

/// Per-user pairwise cross-moment matrix.
pub fn pair_moment(block: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if block.ncols() < 2 {
        return Err(Error::InsufficientSamples {
            user: 0,
            found: block.ncols(),
            required: 2,
        });
    }
    Ok(pairwise_outer_moment(block))
}

/// Weighted sum of per-user moment matrices, accumulated in ascending user
/// index with Kahan compensation so the result is reproducible and stays
/// accurate for large n * m.
pub(crate) fn weighted_moment_sum<F>(
    n: usize,
    d: usize,
    weights: &[f64],
    mut term: F,
) -> DMatrix<f64>
where
    F: FnMut(usize) -> DMatrix<f64>,
{
    let mut acc = DMatrix::zeros(d, d);
    let mut comp = DMatrix::zeros(d, d);
    for (i, &w) in weights.iter().enumerate().take(n) {
        if w == 0.0 {
            continue;
        }
        let t = term(i) * w;
        for idx in 0..d * d {
            let y: f64 = t[idx] - comp[idx];
            let s: f64 = acc[idx] + y;
            comp[idx] = (s - acc[idx]) - y;
            acc[idx] = s;
        }
    }
    acc
}

/// The estimator matrix A = sum_i w_i pair_moment(block_i).
pub fn aggregate(dataset: &PcaDataset, weights: &[f64]) -> Result<DMatrix<f64>> {
    let n = dataset.n_users();
    validate_weights(weights, n)?;
    for (i, block) in dataset.users.iter().enumerate() {
        if weights[i] > 0.0 && block.ncols() < 2 {
            return Err(Error::InsufficientSamples {
                user: i,
                found: block.ncols(),
                required: 2,
            });
        }
    }
    Ok(weighted_moment_sum(n, dataset.d, weights, |i| {
        pairwise_outer_moment(&dataset.users[i])
    }))
}

/// A recovered subspace with eigenvalue diagnostics.
#[derive(Debug, Clone)]
pub struct SubspaceEstimate {
    pub basis: Basis,
    pub eigen: EigenResult,
    /// Set when lambda_k - lambda_{k+1} <= 0 so angle guarantees are void.
    pub degenerate_gap: bool,
    /// Users dropped for having fewer than 2 samples (original indices).
    pub dropped_users: Vec<usize>,
    /// Weights actually used, in original user order (zero for dropped).
    pub weights: Vec<f64>,
}

fn resolve_weights(
    scheme: &WeightScheme,
    counts: &[usize],
    usable: &[bool],
    k: usize,
) -> Result<Vec<f64>> {
    let n = counts.len();
    let mut w = match scheme {
        WeightScheme::Uniform => vec![1.0; n],
        WeightScheme::Explicit(w) => {
            validate_weights(w, n)?;
            w.clone()
        }
        WeightScheme::InformationOptimal(noise) => {
            let profile = gamma_profile(noise, counts, k)?;
            optimal_weights(&profile)
        }
    };
    for i in 0..n {
        if !usable[i] {
            w[i] = 0.0;
        }
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::NoUsableUsers);
    }
    for wi in &mut w {
        *wi /= total;
    }
    Ok(w)
}

fn estimate_from_matrix(
    a: &DMatrix<f64>,
    k: usize,
    dropped: Vec<usize>,
    weights: Vec<f64>,
) -> Result<SubspaceEstimate> {
    let eigen = linalg::top_k_eigen(a, k)?;
    Ok(SubspaceEstimate {
        basis: eigen.vectors.clone(),
        degenerate_gap: eigen.gap <= 0.0,
        eigen,
        dropped_users: dropped,
        weights,
    })
}

/// Recover the shared subspace as the top-k eigenspace of the aggregate.
///
/// Users with a single sample carry no pair term; they are dropped with a
/// warning and the remaining weights renormalized.
pub fn estimate_subspace(
    dataset: &PcaDataset,
    k: usize,
    scheme: &WeightScheme,
) -> Result<SubspaceEstimate> {
    let counts = dataset.sample_counts();
    let usable: Vec<bool> = counts.iter().map(|&m| m >= 2).collect();
    let dropped: Vec<usize> = (0..counts.len()).filter(|&i| !usable[i]).collect();
    for &u in &dropped {
        log::warn!("dropping user {u}: only {} sample(s), pair moment undefined", counts[u]);
    }
    if dropped.len() == counts.len() {
        return Err(Error::NoUsableUsers);
    }
    let weights = resolve_weights(scheme, &counts, &usable, k)?;
    let a = aggregate(dataset, &weights)?;
    estimate_from_matrix(&a, k, dropped, weights)
}

/// Naive single-sample covariance baseline sum_i w_i (1/m_i) sum_j x x^T.
///
/// Included to demonstrate the one-sample-per-user impossibility: under
/// complement-adversarial noise its expectation is a multiple of I and it
/// carries no subspace information.
pub fn estimate_subspace_single_sample(
    dataset: &PcaDataset,
    k: usize,
    scheme: &WeightScheme,
) -> Result<SubspaceEstimate> {
    let counts = dataset.sample_counts();
    let usable = vec![true; counts.len()];
    let weights = resolve_weights(scheme, &counts, &usable, k)?;
    let a = weighted_moment_sum(counts.len(), dataset.d, &weights, |i| {
        let block = &dataset.users[i];
        (block * block.transpose()) / block.ncols() as f64
    });
    estimate_from_matrix(&a, k, Vec::new(), weights)
}

/// Heuristic per-user noise-scale estimate: mean within-user squared
/// deviation, eta_i^2 ~= ||x_ij - xbar_i||^2 m_i / ((m_i - 1) d) averaged
/// over j. No theoretical guarantee attaches to weights built from it.
pub fn estimate_etas(dataset: &PcaDataset) -> Result<Vec<f64>> {
    let d = dataset.d as f64;
    dataset
        .users
        .iter()
        .enumerate()
        .map(|(i, block)| {
            let m = block.ncols();
            if m < 2 {
                return Err(Error::InsufficientSamples {
                    user: i,
                    found: m,
                    required: 2,
                });
            }
            let mean = block.column_mean();
            let ss: f64 = block
                .column_iter()
                .map(|c| (c - &mean).norm_squared())
                .sum::<f64>()
                / m as f64;
            Ok((ss * m as f64 / ((m as f64 - 1.0) * d)).sqrt())
        })
        .collect()
}

/// Evaluated error-bound formulas for one synthetic configuration.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PcaBoundReport {
    pub sigma_k_sq: f64,
    pub sigma_1_sq: f64,
    pub xi: f64,
    pub delta: f64,
    pub upper_general: f64,
    pub upper_weighted: f64,
    pub lower: f64,
    pub constant_c: f64,
}

/// General fixed-means upper bound:
/// C * [ sigma_k^{-2} sqrt((d + log(1/delta)) (xi^2 + sum w_i^2 eta_i^4 / m_i^2))
///     + sigma_k^{-2} (d + log(1/delta)) max_i w_i eta_i^2 / m_i ]
/// with xi^2 = || sum w_i^2 mu_i mu_i^T eta_i^2 / m_i ||.
pub fn upper_bound_general(
    mus: &[DVector<f64>],
    weights: &[f64],
    etas: &[f64],
    m: &[usize],
    k: usize,
    delta: f64,
    constant: f64,
) -> Result<(f64, f64, f64, f64)> {
    let n = mus.len();
    if weights.len() != n || etas.len() != n || m.len() != n {
        return Err(Error::DimensionMismatch("mus/weights/etas/m lengths differ".into()));
    }
    let d = mus[0].nrows();
    let signal = weighted_moment_sum(n, d, weights, |i| &mus[i] * mus[i].transpose());
    let eig = linalg::top_k_eigen(&signal, k.min(d - 1))?;
    let sigma_k_sq = eig.values[k - 1];
    let sigma_1_sq = eig.values[0];
    if sigma_k_sq <= 1e-14 {
        return Err(Error::RankDeficient(sigma_k_sq));
    }
    let xi_weights: Vec<f64> = (0..n)
        .map(|i| weights[i] * weights[i] * etas[i] * etas[i] / m[i] as f64)
        .collect();
    let xi_mat = weighted_moment_sum(n, d, &xi_weights, |i| &mus[i] * mus[i].transpose());
    let xi_sq = linalg::spectral_norm_symmetric(&xi_mat);
    let quartic: f64 = (0..n)
        .map(|i| {
            let wi = weights[i];
            let e2 = etas[i] * etas[i];
            wi * wi * e2 * e2 / (m[i] * m[i]) as f64
        })
        .sum();
    let max_term = (0..n)
        .map(|i| weights[i] * etas[i] * etas[i] / m[i] as f64)
        .fold(0.0f64, f64::max);
    let dim_term = d as f64 + (1.0 / delta).ln();
    // square root distributed over the two variance terms; this makes the
    // equal-(eta, m) specialization reproduce the corollary form exactly
    let bound = constant
        * (dim_term.sqrt() * (xi_sq.sqrt() + quartic.sqrt()) + dim_term * max_term)
        / sigma_k_sq;
    Ok((bound, sigma_k_sq, sigma_1_sq, xi_sq.sqrt()))
}

/// Optimal-weights upper bound C * sqrt((d + log(1/delta)) / sum gamma'_i).
pub fn upper_bound_weighted(profile: &GammaProfile, d: usize, delta: f64, constant: f64) -> f64 {
    constant * ((d as f64 + (1.0 / delta).ln()) / profile.sum_gamma_prime()).sqrt()
}

/// Minimax lower bound
/// C * min{1, sqrt((d - k)(1 - delta) / sum_{i=k}^n gamma_i)},
/// the gamma sorted descending; the k-1 most informative users are excluded
/// from the sum.
pub fn lower_bound(d: usize, k: usize, delta: f64, gamma: &[f64], constant: f64) -> Result<f64> {
    if k == 0 || k > gamma.len() || k >= d {
        return Err(Error::InvalidParameter(format!(
            "lower_bound requires 1 <= k <= n and k < d, got k={k}, n={}, d={d}",
            gamma.len()
        )));
    }
    if !(0.0..0.5).contains(&delta) {
        return Err(Error::InvalidParameter(format!("delta must be in [0, 1/2), got {delta}")));
    }
    let mut sorted = gamma.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let tail: f64 = sorted[k - 1..].iter().sum();
    let value = ((d - k) as f64 * (1.0 - delta) / tail).sqrt();
    Ok(constant * value.min(1.0))
}

/// Build the full bound report for one synthetic configuration.
#[allow(clippy::too_many_arguments)]
pub fn bound_report(
    mus: &[DVector<f64>],
    weights: &[f64],
    noise: &NoiseProfile,
    m: &[usize],
    d: usize,
    k: usize,
    delta: f64,
    constant: f64,
) -> Result<PcaBoundReport> {
    let (upper_general, sigma_k_sq, sigma_1_sq, xi) =
        upper_bound_general(mus, weights, &noise.etas, m, k, delta, constant)?;
    let profile = gamma_profile(noise, m, k)?;
    let upper_weighted = upper_bound_weighted(&profile, d, delta, constant);
    let lower = lower_bound(d, k, delta, &profile.gamma, constant)?;
    Ok(PcaBoundReport {
        sigma_k_sq,
        sigma_1_sq,
        xi,
        delta,
        upper_general,
        upper_weighted,
        lower,
        constant_c: constant,
    })
}

/// KL divergence between N(0, sigma^2 B2 B2^T + eta^2 I) and
/// N(0, sigma^2 B1 B1^T + eta^2 I):
/// sigma^4 ||P1 - P2||_F^2 / (4 (sigma^2 eta^2 + eta^4)).
pub fn kl_structured_gaussians(sigma: f64, eta: f64, b1: &Basis, b2: &Basis) -> Result<f64> {
    if eta <= 0.0 {
        return Err(Error::SingularCovariance);
    }
    if b1.d() != b2.d() || b1.k() != b2.k() {
        return Err(Error::DimensionMismatch("bases must share d and k".into()));
    }
    // ||P1 - P2||_F^2 = 2 (k - ||B1^T B2||_F^2)
    let cross = b1.matrix().transpose() * b2.matrix();
    let fro_sq = 2.0 * (b1.k() as f64 - cross.norm_squared()).max(0.0);
    let s2 = sigma * sigma;
    let e2 = eta * eta;
    Ok(s2 * s2 * fro_sq / (4.0 * (s2 * e2 + e2 * e2)))
}
