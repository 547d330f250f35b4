//! Synthetic data generators for every distributional setting the library
//! analyzes, including both single-sample impossibility constructions.
//!
//! Randomness is drawn from counter-based streams keyed by
//! (master_seed, trial, role, user, sample), so generation is reproducible
//! under any parallel schedule.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{haar_basis, Basis};
use crate::linmodel::{LinearBlock, LinearDataset};
use crate::pca::PcaDataset;
use crate::rng::Stream;

// role tags for stream derivation
const ROLE_BASIS: u64 = 0;
const ROLE_MEAN: u64 = 1;
const ROLE_NOISE: u64 = 2;
const ROLE_MEASUREMENT: u64 = 3;

/// The hidden subspace and per-user signal vectors behind a synthetic
/// dataset.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub basis: Basis,
    /// mu_i for PCA data, beta_i for linear data; each lies in col(basis).
    pub vectors: Vec<DVector<f64>>,
    pub sigma: f64,
    /// cap on ||beta_i||, when one was applied.
    pub r: Option<f64>,
}

/// Noise model for the PCA setting.
#[derive(Debug, Clone)]
pub enum NoiseSpec {
    /// z ~ N(0, eta_i^2 I); one eta per user.
    Spherical { etas: Vec<f64> },
    /// Independent axis-aligned Gaussian noise. Axis a of user i has
    /// standard deviation eta_i * profile[a], profile normalized to max 1,
    /// so eta_i remains the sub-Gaussian constant of the vector.
    DiagonalAnisotropic { etas: Vec<f64>, profile: Vec<f64> },
    /// The one-sample impossibility construction
    /// z ~ N(0, sigma^2 (I - u u^T) + alpha^2 I) with u the first (and
    /// only) column of the hidden basis; k = 1 only.
    ComplementAdversarial { sigma: f64, alpha: f64 },
}

impl NoiseSpec {
    pub fn spherical_uniform(eta: f64, n: usize) -> Self {
        NoiseSpec::Spherical { etas: vec![eta; n] }
    }
}

/// Distribution of the user-specific means within the hidden subspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanFamily {
    /// mu = sigma * U g, g ~ N(0, I_k), i.e. mu ~ N(0, sigma^2 U U^T).
    Gaussian,
    /// mu = sigma * U rho, rho uniform on {-1, +1}^k; non-Gaussian but
    /// mean-zero sub-Gaussian in the subspace.
    SubspaceRademacher,
}

fn validate_dims(d: usize, k: usize, n: usize, ms: &[usize]) -> Result<()> {
    if k == 0 || k >= d {
        return Err(Error::DimensionMismatch(format!(
            "requires 1 <= k < d, got d={d}, k={k}"
        )));
    }
    if n == 0 || ms.len() != n {
        return Err(Error::InvalidParameter(format!(
            "n={n} users but {} sample counts",
            ms.len()
        )));
    }
    if ms.contains(&0) {
        return Err(Error::InvalidParameter("every m_i must be >= 1".into()));
    }
    Ok(())
}

fn draw_mean(
    family: MeanFamily,
    sigma: f64,
    basis: &Basis,
    rng: &mut Stream,
) -> DVector<f64> {
    let k = basis.k();
    let coeff = match family {
        MeanFamily::Gaussian => DVector::from_fn(k, |_, _| rng.next_normal()),
        MeanFamily::SubspaceRademacher => DVector::from_fn(k, |_, _| rng.next_sign()),
    };
    basis.matrix() * (coeff * sigma)
}

/// Gaussian vector projected off the hidden subspace:
/// scale * (I - U U^T) g with g ~ N(0, I).
fn complement_gaussian(basis: &Basis, scale: f64, rng: &mut Stream) -> DVector<f64> {
    let g = DVector::from_fn(basis.d(), |_, _| rng.next_normal());
    let proj = basis.matrix() * (basis.matrix().transpose() * &g);
    (g - proj) * scale
}

/// Generate a PCA dataset x_ij = mu_i + z_ij with attached ground truth.
#[allow(clippy::too_many_arguments)]
pub fn gen_pca(
    d: usize,
    k: usize,
    n: usize,
    ms: &[usize],
    sigma: f64,
    noise: &NoiseSpec,
    mean_family: MeanFamily,
    master_seed: u64,
    trial: u64,
) -> Result<(PcaDataset, GroundTruth)> {
    validate_dims(d, k, n, ms)?;
    match noise {
        NoiseSpec::Spherical { etas } | NoiseSpec::DiagonalAnisotropic { etas, .. } => {
            if etas.len() != n {
                return Err(Error::InvalidParameter(format!(
                    "{} etas for {n} users",
                    etas.len()
                )));
            }
            if etas.iter().any(|&e| e < 0.0) {
                return Err(Error::InvalidParameter("etas must be nonnegative".into()));
            }
        }
        NoiseSpec::ComplementAdversarial { .. } => {
            if k != 1 {
                return Err(Error::InvalidParameter(
                    "complement-adversarial noise is defined for k = 1".into(),
                ));
            }
        }
    }
    if let NoiseSpec::DiagonalAnisotropic { profile, .. } = noise {
        if profile.len() != d || profile.iter().any(|&p| p <= 0.0 || p.is_nan()) {
            return Err(Error::InvalidParameter(
                "anisotropy profile must have d positive entries".into(),
            ));
        }
    }

    let mut basis_rng = Stream::for_path(master_seed, &[trial, ROLE_BASIS]);
    let basis = haar_basis(d, k, &mut basis_rng)?;

    let profile_scaled: Option<Vec<f64>> = match noise {
        NoiseSpec::DiagonalAnisotropic { profile, .. } => {
            let max = profile.iter().cloned().fold(f64::MIN, f64::max);
            Some(profile.iter().map(|p| p / max).collect())
        }
        _ => None,
    };

    let mut vectors = Vec::with_capacity(n);
    let mut users = Vec::with_capacity(n);
    for i in 0..n {
        let mut mean_rng = Stream::for_path(master_seed, &[trial, ROLE_MEAN, i as u64]);
        let mu = draw_mean(mean_family, sigma, &basis, &mut mean_rng);
        let mut block = DMatrix::zeros(d, ms[i]);
        for j in 0..ms[i] {
            let mut z_rng = Stream::for_path(master_seed, &[trial, ROLE_NOISE, i as u64, j as u64]);
            let z: DVector<f64> = match noise {
                NoiseSpec::Spherical { etas } => {
                    DVector::from_fn(d, |_, _| z_rng.next_normal()) * etas[i]
                }
                NoiseSpec::DiagonalAnisotropic { etas, .. } => {
                    let profile = profile_scaled.as_ref().unwrap();
                    DVector::from_fn(d, |a, _| z_rng.next_normal() * etas[i] * profile[a])
                }
                NoiseSpec::ComplementAdversarial { sigma: s, alpha } => {
                    let comp = complement_gaussian(&basis, *s, &mut z_rng);
                    let iso = DVector::from_fn(d, |_, _| z_rng.next_normal()) * *alpha;
                    comp + iso
                }
            };
            block.set_column(j, &(&mu + z));
        }
        vectors.push(mu);
        users.push(block);
    }
    let dataset = PcaDataset::new(users)?;
    Ok((
        dataset,
        GroundTruth {
            basis,
            vectors,
            sigma,
            r: None,
        },
    ))
}

/// Measurement distribution for the linear-model setting; both are
/// zero-mean with identity covariance and O(1) sub-Gaussian constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasurementFamily {
    /// Coordinates uniform on {-1, +1}; the impossibility instance.
    Rademacher,
    Gaussian,
}

/// Noise model for the linear-model setting.
#[derive(Debug, Clone)]
pub enum LinearNoiseSpec {
    /// z ~ N(0, eta_i^2), independent of the measurements.
    IndependentGaussian { etas: Vec<f64> },
    /// z = x^T nu with nu ~ N(0, sigma^2 (I - U U^T)); mean-zero given x
    /// but measurement-dependent.
    MeasurementDependent { sigma: f64 },
}

/// Generate a linear-model dataset y_ij = x_ij^T beta_i + z_ij.
#[allow(clippy::too_many_arguments)]
pub fn gen_linear(
    d: usize,
    k: usize,
    n: usize,
    ms: &[usize],
    sigma: f64,
    r_cap: Option<f64>,
    measurement: MeasurementFamily,
    noise: &LinearNoiseSpec,
    master_seed: u64,
    trial: u64,
) -> Result<(LinearDataset, GroundTruth)> {
    validate_dims(d, k, n, ms)?;
    if let LinearNoiseSpec::IndependentGaussian { etas } = noise {
        if etas.len() != n {
            return Err(Error::InvalidParameter(format!("{} etas for {n} users", etas.len())));
        }
    }

    let mut basis_rng = Stream::for_path(master_seed, &[trial, ROLE_BASIS]);
    let basis = haar_basis(d, k, &mut basis_rng)?;

    let mut vectors = Vec::with_capacity(n);
    let mut users = Vec::with_capacity(n);
    for i in 0..n {
        let mut mean_rng = Stream::for_path(master_seed, &[trial, ROLE_MEAN, i as u64]);
        let mut beta = draw_mean(MeanFamily::Gaussian, sigma, &basis, &mut mean_rng);
        if let Some(r) = r_cap {
            let norm = beta.norm();
            if norm > r {
                beta *= r / norm;
            }
        }
        let m = ms[i];
        let mut xs = DMatrix::zeros(d, m);
        let mut ys = DVector::zeros(m);
        for j in 0..m {
            let mut x_rng =
                Stream::for_path(master_seed, &[trial, ROLE_MEASUREMENT, i as u64, j as u64]);
            let x = match measurement {
                MeasurementFamily::Rademacher => DVector::from_fn(d, |_, _| x_rng.next_sign()),
                MeasurementFamily::Gaussian => DVector::from_fn(d, |_, _| x_rng.next_normal()),
            };
            let mut z_rng = Stream::for_path(master_seed, &[trial, ROLE_NOISE, i as u64, j as u64]);
            let z = match noise {
                LinearNoiseSpec::IndependentGaussian { etas } => z_rng.next_normal() * etas[i],
                LinearNoiseSpec::MeasurementDependent { sigma: s } => {
                    let nu = complement_gaussian(&basis, *s, &mut z_rng);
                    x.dot(&nu)
                }
            };
            ys[j] = x.dot(&beta) + z;
            xs.set_column(j, &x);
        }
        vectors.push(beta);
        users.push(LinearBlock { xs, ys });
    }
    let dataset = LinearDataset::new(users)?;
    Ok((
        dataset,
        GroundTruth {
            basis,
            vectors,
            sigma,
            r: r_cap,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinism_bitwise() {
        let ms = vec![3; 10];
        let noise = NoiseSpec::spherical_uniform(0.5, 10);
        let (a, ta) = gen_pca(6, 2, 10, &ms, 1.0, &noise, MeanFamily::Gaussian, 42, 7).unwrap();
        let (b, tb) = gen_pca(6, 2, 10, &ms, 1.0, &noise, MeanFamily::Gaussian, 42, 7).unwrap();
        for i in 0..10 {
            assert_eq!(a.user(i), b.user(i));
        }
        assert_eq!(ta.basis.matrix(), tb.basis.matrix());
        let (c, _) = gen_pca(6, 2, 10, &ms, 1.0, &noise, MeanFamily::Gaussian, 42, 8).unwrap();
        assert_ne!(a.user(0), c.user(0));
    }

    #[test]
    fn zero_noise_reproduces_means() {
        let ms = vec![4; 5];
        let noise = NoiseSpec::spherical_uniform(0.0, 5);
        let (ds, truth) = gen_pca(5, 2, 5, &ms, 1.0, &noise, MeanFamily::Gaussian, 1, 0).unwrap();
        for i in 0..5 {
            for j in 0..4 {
                let col: DVector<f64> = ds.user(i).column(j).into();
                assert!((col - &truth.vectors[i]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn means_lie_in_subspace() {
        let ms = vec![2; 20];
        let noise = NoiseSpec::spherical_uniform(1.0, 20);
        for family in [MeanFamily::Gaussian, MeanFamily::SubspaceRademacher] {
            let (_, truth) = gen_pca(8, 3, 20, &ms, 2.0, &noise, family, 3, 0).unwrap();
            for mu in &truth.vectors {
                let proj = truth.basis.matrix() * (truth.basis.matrix().transpose() * mu);
                assert!((mu - proj).norm() <= 1e-10);
            }
        }
    }

    #[test]
    fn gaussian_mean_covariance() {
        // sample covariance of mu over many draws ~ sigma^2 U U^T
        let d = 4;
        let n = 100_000;
        let sigma = 1.0;
        let ms = vec![1; n];
        let noise = NoiseSpec::spherical_uniform(0.0, n);
        let (_, truth) = gen_pca(d, 2, n, &ms, sigma, &noise, MeanFamily::Gaussian, 11, 0).unwrap();
        let mut cov = DMatrix::zeros(d, d);
        for mu in &truth.vectors {
            cov += mu * mu.transpose();
        }
        cov /= n as f64;
        let target = truth.basis.projection() * sigma * sigma;
        let err = (cov - target).amax();
        assert!(err < 0.01 * sigma * sigma, "entrywise err {err}");
    }

    #[test]
    fn complement_adversarial_pooled_covariance_is_isotropic() {
        // with alpha = sigma, single samples pool to (sigma^2 + alpha^2) I
        let d = 5;
        let n = 100_000;
        let ms = vec![1; n];
        let noise = NoiseSpec::ComplementAdversarial {
            sigma: 1.0,
            alpha: 1.0,
        };
        let (ds, _) = gen_pca(d, 1, n, &ms, 1.0, &noise, MeanFamily::Gaussian, 13, 0).unwrap();
        let mut cov = DMatrix::zeros(d, d);
        for i in 0..n {
            let x = ds.user(i).column(0);
            cov += x * x.transpose();
        }
        cov /= n as f64;
        let target = DMatrix::identity(d, d) * 2.0;
        let err = (cov - target).amax();
        assert!(err < 0.04, "entrywise err {err}");
    }

    #[test]
    fn complement_adversarial_requires_k1() {
        let ms = vec![1; 4];
        let noise = NoiseSpec::ComplementAdversarial {
            sigma: 1.0,
            alpha: 1.0,
        };
        assert!(gen_pca(5, 2, 4, &ms, 1.0, &noise, MeanFamily::Gaussian, 0, 0).is_err());
    }

    #[test]
    fn rademacher_measurement_covariance_is_identity() {
        let d = 4;
        let n = 50_000;
        let ms = vec![2; n];
        let noise = LinearNoiseSpec::IndependentGaussian { etas: vec![0.0; n] };
        let (ds, _) = gen_linear(
            d,
            1,
            n,
            &ms,
            1.0,
            None,
            MeasurementFamily::Rademacher,
            &noise,
            17,
            0,
        )
        .unwrap();
        let mut cov = DMatrix::zeros(d, d);
        let mut count = 0usize;
        for i in 0..n {
            for j in 0..2 {
                let x = ds.user(i).xs.column(j);
                cov += x * x.transpose();
                count += 1;
            }
        }
        cov /= count as f64;
        let err = (cov - DMatrix::identity(d, d)).amax();
        assert!(err < 0.02, "entrywise err {err}");
    }

    #[test]
    fn noiseless_linear_outcomes_exact() {
        let ms = vec![3; 10];
        let noise = LinearNoiseSpec::IndependentGaussian { etas: vec![0.0; 10] };
        let (ds, truth) = gen_linear(
            6,
            2,
            10,
            &ms,
            1.0,
            None,
            MeasurementFamily::Gaussian,
            &noise,
            19,
            0,
        )
        .unwrap();
        for i in 0..10 {
            let b = ds.user(i);
            for j in 0..3 {
                let pred = b.xs.column(j).dot(&truth.vectors[i]);
                assert!((b.ys[j] - pred).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn measurement_dependent_noise_is_conditionally_unbiased() {
        // E[z | x] = 0: check the mean of z against 3 standard errors, and
        // that z^2 correlates with alignment of x to the complement
        let d = 6;
        let n = 20_000;
        let ms = vec![2; n];
        let noise = LinearNoiseSpec::MeasurementDependent { sigma: 1.0 };
        let (ds, truth) = gen_linear(
            d,
            1,
            n,
            &ms,
            1.0,
            None,
            MeasurementFamily::Rademacher,
            &noise,
            23,
            0,
        )
        .unwrap();
        let mut zs = Vec::new();
        for i in 0..n {
            let b = ds.user(i);
            for j in 0..2 {
                let z = b.ys[j] - b.xs.column(j).dot(&truth.vectors[i]);
                zs.push(z);
            }
        }
        let t = zs.len() as f64;
        let mean = zs.iter().sum::<f64>() / t;
        let var = zs.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / t;
        assert!(mean.abs() < 3.0 * (var / t).sqrt(), "mean {mean}");
        // nontrivial dependence: Var[z | x] = sigma^2 ||P_perp x||^2 = d - 1
        // for Rademacher x here, so overall variance should be near d - 1
        assert!((var - (d as f64 - 1.0)).abs() < 0.3, "var {var}");
    }
}
