//! Dense symmetric linear algebra: top-k eigenpairs, orthonormal bases,
//! principal angles between subspaces and the Davis-Kahan inequality.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::Stream;

const ORTHO_TOL: f64 = 1e-10;

/// An orthonormal d x k basis of a proper subspace (k < d).
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    entries: DMatrix<f64>,
}

impl Basis {
    /// Validate and wrap an orthonormal matrix. Columns must satisfy
    /// ||B^T B - I||_inf <= 1e-10 and k < d.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let (d, k) = entries.shape();
        if k == 0 || k >= d {
            return Err(Error::DimensionMismatch(format!(
                "basis requires 1 <= k < d, got d={d}, k={k}"
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("basis entries".into()));
        }
        let gram = entries.transpose() * &entries;
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { 1.0 } else { 0.0 };
                if (gram[(i, j)] - target).abs() > ORTHO_TOL {
                    return Err(Error::InvalidParameter(format!(
                        "columns not orthonormal: |(B^T B)[{i},{j}] - {target}| = {:e}",
                        (gram[(i, j)] - target).abs()
                    )));
                }
            }
        }
        Ok(Basis { entries })
    }

    /// Orthonormalize arbitrary full-column-rank columns via QR, then wrap.
    pub fn orthonormalize(raw: DMatrix<f64>) -> Result<Self> {
        let (d, k) = raw.shape();
        if k == 0 || k >= d {
            return Err(Error::DimensionMismatch(format!(
                "basis requires 1 <= k < d, got d={d}, k={k}"
            )));
        }
        let qr = raw.qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..k {
            if r[(j, j)].abs() < 1e-12 {
                return Err(Error::InvalidParameter(
                    "rank-deficient columns cannot be orthonormalized".into(),
                ));
            }
            if r[(j, j)] < 0.0 {
                for i in 0..d {
                    q[(i, j)] = -q[(i, j)];
                }
            }
        }
        Basis::new(q)
    }

    /// Span of the first k standard basis vectors.
    pub fn standard(d: usize, k: usize) -> Result<Self> {
        let mut m = DMatrix::zeros(d, k);
        for j in 0..k {
            m[(j, j)] = 1.0;
        }
        Basis::new(m)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn d(&self) -> usize {
        self.entries.nrows()
    }

    pub fn k(&self) -> usize {
        self.entries.ncols()
    }

    /// The projection matrix B B^T.
    pub fn projection(&self) -> DMatrix<f64> {
        &self.entries * self.entries.transpose()
    }
}

/// Top-k eigenpairs of a symmetric matrix plus the spectral gap.
#[derive(Debug, Clone)]
pub struct EigenResult {
    /// k largest eigenvalues, sorted descending.
    pub values: Vec<f64>,
    pub vectors: Basis,
    /// lambda_k - lambda_{k+1}; may be <= 0 for degenerate spectra.
    pub gap: f64,
}

fn check_square_finite(a: &DMatrix<f64>) -> Result<usize> {
    let (r, c) = a.shape();
    if r != c {
        return Err(Error::DimensionMismatch(format!("matrix is {r}x{c}, not square")));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix entries".into()));
    }
    Ok(r)
}

fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// All eigenvalues of a symmetric matrix, sorted descending, with
/// eigenvectors as columns in the same order and a fixed sign convention.
fn full_symmetric_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let d = a.nrows();
    let eig = symmetrize(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(d, d);
    for (col, &src) in order.iter().enumerate() {
        let mut v: DVector<f64> = eig.eigenvectors.column(src).into();
        // sign convention: first entry of significant magnitude is positive
        let flip = v
            .iter()
            .find(|x| x.abs() > 1e-9)
            .map(|&x| x < 0.0)
            .unwrap_or(false);
        if flip {
            v = -v;
        }
        vectors.set_column(col, &v);
    }
    (values, vectors)
}

/// Top-k eigenpairs (largest algebraic eigenvalues) of a symmetric matrix.
///
/// The input is symmetrized as (A + A^T)/2 before decomposition. The gap
/// lambda_k - lambda_{k+1} is returned for diagnostics; a nonpositive gap is
/// not an error here.
pub fn top_k_eigen(a: &DMatrix<f64>, k: usize) -> Result<EigenResult> {
    let d = check_square_finite(a)?;
    if k == 0 || k >= d {
        return Err(Error::DimensionMismatch(format!(
            "top_k_eigen requires 1 <= k < d, got d={d}, k={k}"
        )));
    }
    let (values, vectors) = full_symmetric_eigen(a);
    let gap = values[k - 1] - values[k];
    let top = DMatrix::from_fn(d, k, |i, j| vectors[(i, j)]);
    Ok(EigenResult {
        values: values[..k].to_vec(),
        vectors: Basis::new(top)?,
        gap,
    })
}

/// Spectral norm of a symmetric matrix (largest |eigenvalue|).
pub fn spectral_norm_symmetric(a: &DMatrix<f64>) -> f64 {
    symmetrize(a)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0, |acc, &v| acc.max(v.abs()))
}

fn check_same_d(b1: &Basis, b2: &Basis) -> Result<()> {
    if b1.d() != b2.d() {
        return Err(Error::DimensionMismatch(format!(
            "ambient dimensions differ: {} vs {}",
            b1.d(),
            b2.d()
        )));
    }
    Ok(())
}

/// sin of the maximum principal angle between two equal-dimension subspaces.
///
/// Computed as the largest singular value of (I - B1 B1^T) B2, which equals
/// ||U2^T B2|| for U2 an orthonormal complement of B1, in O(d k^2).
pub fn max_principal_angle_sin(b1: &Basis, b2: &Basis) -> Result<f64> {
    check_same_d(b1, b2)?;
    if b1.k() != b2.k() {
        return Err(Error::DimensionMismatch(format!(
            "subspace dimensions differ: {} vs {}",
            b1.k(),
            b2.k()
        )));
    }
    let cross = b1.matrix().transpose() * b2.matrix();
    let residual = b2.matrix() - b1.matrix() * cross;
    let s = residual.svd(false, false).singular_values;
    Ok(s.iter().fold(0.0f64, |acc, &v| acc.max(v)).min(1.0))
}

/// All principal angles between subspaces with dim(B1) <= dim(B2),
/// ascending in [0, pi/2]. Angles are arccos of the singular values of
/// B1^T B2.
pub fn all_principal_angles(b1: &Basis, b2: &Basis) -> Result<Vec<f64>> {
    check_same_d(b1, b2)?;
    if b1.k() > b2.k() {
        return Err(Error::DimensionMismatch(format!(
            "all_principal_angles requires dim(B1) <= dim(B2), got {} > {}",
            b1.k(),
            b2.k()
        )));
    }
    let cross = b1.matrix().transpose() * b2.matrix();
    let mut angles: Vec<f64> = cross
        .svd(false, false)
        .singular_values
        .iter()
        .map(|&s| s.clamp(-1.0, 1.0).acos())
        .collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(angles)
}

/// Davis-Kahan bound 2 ||A - A_hat|| / (lambda_k(A) - lambda_{k+1}(A)).
///
/// The bound dominates the sin of the maximum principal angle between the
/// top-k eigenspaces of A and A_hat. Requires a strictly positive gap.
pub fn davis_kahan_bound(a: &DMatrix<f64>, a_hat: &DMatrix<f64>, k: usize) -> Result<f64> {
    let d = check_square_finite(a)?;
    let d2 = check_square_finite(a_hat)?;
    if d != d2 {
        return Err(Error::DimensionMismatch(format!("matrix sizes differ: {d} vs {d2}")));
    }
    if k == 0 || k >= d {
        return Err(Error::DimensionMismatch(format!(
            "davis_kahan_bound requires 1 <= k < d, got d={d}, k={k}"
        )));
    }
    let (values, _) = full_symmetric_eigen(a);
    let gap = values[k - 1] - values[k];
    if gap <= 0.0 {
        return Err(Error::DegenerateGap(values[k - 1]));
    }
    let diff = symmetrize(a) - symmetrize(a_hat);
    Ok(2.0 * spectral_norm_symmetric(&diff) / gap)
}

/// Draw a basis from the rotation-invariant (Haar) distribution on
/// orthonormal d x k frames: QR of a standard Gaussian matrix with the
/// triangular factor's diagonal forced positive.
pub fn haar_basis(d: usize, k: usize, rng: &mut Stream) -> Result<Basis> {
    if k == 0 || k >= d {
        return Err(Error::DimensionMismatch(format!(
            "haar_basis requires 1 <= k < d, got d={d}, k={k}"
        )));
    }
    let raw = DMatrix::from_fn(d, k, |_, _| rng.next_normal());
    Basis::orthonormalize(raw)
}
