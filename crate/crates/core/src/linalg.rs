//! Small dense helpers on top of nalgebra: a symmetric solver, a
//! semi-definite Cholesky factor and the PSD projection.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen, LU};

use crate::error::{Result, SvoError};

/// Reciprocal condition threshold below which a matrix is treated as singular.
pub const RCOND_THRESHOLD: f64 = 1e-12;

pub(crate) fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for k in (i + 1)..n {
            if (m[(i, k)] - m[(k, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

/// Ratio of smallest to largest absolute eigenvalue of a symmetric matrix.
pub fn reciprocal_condition(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for &l in eig.eigenvalues.iter() {
        lo = lo.min(l.abs());
        hi = hi.max(l.abs());
    }
    if hi == 0.0 || !hi.is_finite() {
        0.0
    } else {
        lo / hi
    }
}

enum Factor {
    Chol(Cholesky<f64, Dyn>),
    Lu(LU<f64, Dyn, Dyn>),
}

/// Linear solver for a symmetric, numerically nonsingular matrix.
///
/// Uses a Cholesky factorization when the matrix is positive definite and
/// falls back to pivoted LU for indefinite input.
pub struct SymmetricSolver {
    factor: Factor,
    n: usize,
}

impl SymmetricSolver {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(SvoError::DimensionMismatch(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(SvoError::InvalidArgument("matrix has non-finite entries".into()));
        }
        let rcond = reciprocal_condition(m);
        if rcond < RCOND_THRESHOLD {
            return Err(SvoError::DegenerateCovariance { rcond });
        }
        let factor = match Cholesky::new(m.clone()) {
            Some(ch) => Factor::Chol(ch),
            None => Factor::Lu(LU::new(m.clone())),
        };
        Ok(Self { factor, n: m.nrows() })
    }

    pub fn is_positive_definite(&self) -> bool {
        matches!(self.factor, Factor::Chol(_))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.factor {
            Factor::Chol(ch) => Ok(ch.solve(b)),
            Factor::Lu(lu) => lu
                .solve(b)
                .ok_or(SvoError::DegenerateCovariance { rcond: 0.0 }),
        }
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match &self.factor {
            Factor::Chol(ch) => Ok(ch.solve(b)),
            Factor::Lu(lu) => lu
                .solve(b)
                .ok_or(SvoError::DegenerateCovariance { rcond: 0.0 }),
        }
    }
}

/// Lower-triangular `L` with `L Lᵀ = m` for a symmetric positive
/// semi-definite `m`. Pivots below `tol · max diag` are treated as zero, which
/// lets singular covariances (e.g. a zero random-walk term) be factored.
pub fn psd_factor(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if !m.is_square() {
        return Err(SvoError::DimensionMismatch("covariance must be square".into()));
    }
    if !is_symmetric(m, 1e-12) {
        return Err(SvoError::NotPsd("matrix is not symmetric".into()));
    }
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
    let mut l = DMatrix::<f64>::zeros(n, n);
    if scale == 0.0 {
        if m.amax() > 0.0 {
            return Err(SvoError::NotPsd("zero diagonal with nonzero off-diagonal".into()));
        }
        return Ok(l);
    }
    let eps = tol * scale;
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -eps {
            return Err(SvoError::NotPsd(format!("negative pivot {d:.3e} at column {j}")));
        }
        if d <= eps {
            for i in (j + 1)..n {
                let mut r = m[(i, j)];
                for k in 0..j {
                    r -= l[(i, k)] * l[(j, k)];
                }
                if r.abs() > eps.sqrt() * scale.sqrt() {
                    return Err(SvoError::NotPsd(format!(
                        "zero pivot at column {j} with nonzero coupling {r:.3e}"
                    )));
                }
            }
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut r = m[(i, j)];
            for k in 0..j {
                r -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = r / djj;
        }
    }
    Ok(l)
}

/// Nearest PSD matrix in Frobenius norm: symmetrize, then clip negative
/// eigenvalues at zero.
pub fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    symmetrize_upper(&mut out);
    out
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Copies the upper triangle onto the lower one.
pub(crate) fn symmetrize_upper(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for k in (i + 1)..n {
            m[(k, i)] = m[(i, k)];
        }
    }
}
