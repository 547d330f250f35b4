//! Shared-subspace recovery for linear models: per-sample score vectors
//! x_ij y_ij enter the same pairwise U-statistic as the PCA path, so the
//! aggregate has expectation sum_i w_i beta_i beta_i^T even when the noise
//! depends on the measurements.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::pca::{pairwise_outer_moment, weighted_moment_sum, SubspaceEstimate, WeightScheme};
use crate::{linalg, pca};

/// One user's (x, y) pairs: column j of `xs` is x_ij, entry j of `ys` is
/// y_ij.
#[derive(Debug, Clone)]
pub struct LinearBlock {
    pub xs: DMatrix<f64>,
    pub ys: DVector<f64>,
}

impl LinearBlock {
    pub fn m(&self) -> usize {
        self.xs.ncols()
    }

    /// Score vectors x_ij y_ij as columns.
    fn scores(&self) -> DMatrix<f64> {
        let mut s = self.xs.clone();
        for (j, &y) in self.ys.iter().enumerate() {
            s.column_mut(j).scale_mut(y);
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct LinearDataset {
    d: usize,
    users: Vec<LinearBlock>,
}

impl LinearDataset {
    pub fn new(users: Vec<LinearBlock>) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::InvalidParameter("dataset has no users".into()));
        }
        let d = users[0].xs.nrows();
        for (i, block) in users.iter().enumerate() {
            if block.xs.nrows() != d {
                return Err(Error::DimensionMismatch(format!(
                    "user {i} has dimension {}, expected {d}",
                    block.xs.nrows()
                )));
            }
            if block.xs.ncols() != block.ys.len() || block.xs.ncols() == 0 {
                return Err(Error::DimensionMismatch(format!(
                    "user {i}: {} measurements vs {} outcomes",
                    block.xs.ncols(),
                    block.ys.len()
                )));
            }
            if block.xs.iter().any(|x| !x.is_finite()) || block.ys.iter().any(|y| !y.is_finite()) {
                return Err(Error::NonFinite(format!("samples of user {i}")));
            }
        }
        Ok(LinearDataset { d, users })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn user(&self, i: usize) -> &LinearBlock {
        &self.users[i]
    }

    pub fn sample_counts(&self) -> Vec<usize> {
        self.users.iter().map(|b| b.m()).collect()
    }
}

/// Per-user pairwise score moment
/// (1/(m(m-1))) sum_{j1 != j2} (x_{j1} y_{j1})(x_{j2} y_{j2})^T.
pub fn score_pair_moment(block: &LinearBlock) -> Result<DMatrix<f64>> {
    if block.m() < 2 {
        return Err(Error::InsufficientSamples {
            user: 0,
            found: block.m(),
            required: 2,
        });
    }
    Ok(pairwise_outer_moment(&block.scores()))
}

fn resolve_linear_weights(
    dataset: &LinearDataset,
    scheme: &WeightScheme,
    usable: &[bool],
    k: usize,
) -> Result<Vec<f64>> {
    let counts = dataset.sample_counts();
    let n = counts.len();
    let mut w = match scheme {
        WeightScheme::Uniform => vec![1.0; n],
        WeightScheme::Explicit(w) => {
            if w.len() != n {
                return Err(Error::DimensionMismatch(format!("{} weights for {n} users", w.len())));
            }
            w.clone()
        }
        WeightScheme::InformationOptimal(noise) => {
            let profile = pca::gamma_profile(noise, &counts, k)?;
            pca::optimal_weights(&profile)
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

/// Top-k eigenspace of sum_i w_i score_pair_moment(block_i).
///
/// The measurements are assumed zero-mean with identity covariance by the
/// data-source contract; no whitening is applied here.
pub fn estimate_subspace_linear(
    dataset: &LinearDataset,
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
    let weights = resolve_linear_weights(dataset, scheme, &usable, k)?;
    let a = weighted_moment_sum(counts.len(), dataset.d, &weights, |i| {
        pairwise_outer_moment(&dataset.users[i].scores())
    });
    let eigen = linalg::top_k_eigen(&a, k)?;
    Ok(SubspaceEstimate {
        basis: eigen.vectors.clone(),
        degenerate_gap: eigen.gap <= 0.0,
        eigen,
        dropped_users: dropped,
        weights,
    })
}

/// Naive single-sample baseline sum_i w_i (1/m_i) sum_j (x y)(x y)^T.
///
/// Under the measurement-dependent noise construction its expectation is
/// independent of the hidden subspace, so it fails to recover anything;
/// kept as the empirical counterpart of the one-sample impossibility.
pub fn estimate_subspace_linear_single_sample(
    dataset: &LinearDataset,
    k: usize,
    scheme: &WeightScheme,
) -> Result<SubspaceEstimate> {
    let counts = dataset.sample_counts();
    let usable = vec![true; counts.len()];
    let weights = resolve_linear_weights(dataset, scheme, &usable, k)?;
    let a = weighted_moment_sum(counts.len(), dataset.d, &weights, |i| {
        let s = dataset.users[i].scores();
        (&s * s.transpose()) / s.ncols() as f64
    });
    let eigen = linalg::top_k_eigen(&a, k)?;
    Ok(SubspaceEstimate {
        basis: eigen.vectors.clone(),
        degenerate_gap: eigen.gap <= 0.0,
        eigen,
        dropped_users: Vec::new(),
        weights,
    })
}

/// Corollary-style upper bound
/// C * log^3(nd/delta) sqrt(d (r^4 + r^2 eta^2 + eta^4/m) / (m n sigma_k^4)).
#[allow(clippy::too_many_arguments)]
pub fn linear_upper_bound(
    sigma_k_sq: f64,
    r: f64,
    eta: f64,
    m: usize,
    n: usize,
    d: usize,
    delta: f64,
    constant: f64,
) -> Result<f64> {
    if sigma_k_sq <= 0.0 {
        return Err(Error::RankDeficient(sigma_k_sq));
    }
    let log3 = ((n * d) as f64 / delta).ln().powi(3);
    let bracket = r.powi(4) + r * r * eta * eta + eta.powi(4) / m as f64;
    Ok(constant * log3 * (d as f64 * bracket / (m as f64 * n as f64 * sigma_k_sq * sigma_k_sq)).sqrt())
}

/// Evaluated linear-model bound inputs for one synthetic configuration.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LinearBoundReport {
    pub sigma_k_sq: f64,
    pub r: f64,
    pub eta: f64,
    pub m: usize,
    pub n: usize,
    pub d: usize,
    pub delta: f64,
    pub bound: f64,
}

/// Compute sigma_k^2 of (1/n) sum beta beta^T and evaluate the bound.
pub fn linear_bound_report(
    betas: &[DVector<f64>],
    eta: f64,
    m: usize,
    k: usize,
    delta: f64,
    constant: f64,
) -> Result<LinearBoundReport> {
    let n = betas.len();
    let d = betas[0].nrows();
    let w = vec![1.0 / n as f64; n];
    let gram = weighted_moment_sum(n, d, &w, |i| &betas[i] * betas[i].transpose());
    let eig = linalg::top_k_eigen(&gram, k)?;
    let sigma_k_sq = eig.values[k - 1];
    let r = betas.iter().map(|b| b.norm()).fold(0.0f64, f64::max);
    let bound = linear_upper_bound(sigma_k_sq, r, eta, m, n, d, delta, constant)?;
    Ok(LinearBoundReport {
        sigma_k_sq,
        r,
        eta,
        m,
        n,
        d,
        delta,
        bound,
    })
}
