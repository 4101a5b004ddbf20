//! Dense helpers shared by the fitters and the covariance estimators.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{ResiError, Result};

/// Relative tolerance on the QR diagonal below which a column is treated as
/// linearly dependent on the columns before it.
pub(crate) const RANK_TOL: f64 = 1e-7;

/// Thin Householder QR of a full-column-rank matrix.
pub(crate) struct ThinQr {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl ThinQr {
    /// Factors `x`, reporting the first collinear column by label.
    pub fn new(x: &DMatrix<f64>, labels: &[String]) -> Result<Self> {
        let (n, p) = x.shape();
        if n < p {
            return Err(ResiError::TooFewObservations { n, p });
        }
        let qr = x.clone().qr();
        let r = qr.r();
        for j in 0..p {
            let norm = x.column(j).norm();
            if !r[(j, j)].is_finite() || r[(j, j)].abs() <= RANK_TOL * norm.max(f64::MIN_POSITIVE) {
                return Err(ResiError::RankDeficient {
                    column: labels.get(j).cloned().unwrap_or_else(|| format!("#{j}")),
                });
            }
        }
        Ok(ThinQr { q: qr.q(), r })
    }

    pub fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let qty = self.q.tr_mul(y);
        self.r
            .solve_upper_triangular(&qty)
            .expect("diagonal checked in ThinQr::new")
    }

    /// `(XᵀX)⁻¹ = R⁻¹R⁻ᵀ`.
    pub fn unscaled_cov(&self) -> DMatrix<f64> {
        let p = self.r.ncols();
        let rinv = self
            .r
            .solve_upper_triangular(&DMatrix::identity(p, p))
            .expect("diagonal checked in ThinQr::new");
        symmetrize(&rinv * rinv.transpose())
    }

    /// Diagonal of the hat matrix: squared row norms of Q.
    pub fn leverage(&self) -> DVector<f64> {
        DVector::from_iterator(self.q.nrows(), self.q.row_iter().map(|row| row.norm_squared()))
    }
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

pub(crate) fn submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

pub(crate) fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// `bᵀ A⁻¹ b` for symmetric positive definite `A`.
pub(crate) fn inverse_quadratic_form(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<f64> {
    let chol = Cholesky::new(a.clone())
        .ok_or_else(|| ResiError::Singular("covariance block is not positive definite".into()))?;
    let x = chol.solve(b);
    Ok(b.dot(&x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_solves_and_detects_collinearity() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0]);
        let labels = vec!["a".to_string(), "b".to_string()];
        let qr = ThinQr::new(&x, &labels).unwrap();
        let beta = qr.solve(&y);
        assert!((beta[0] - 1.0).abs() < 1e-12 && (beta[1] - 2.0).abs() < 1e-12);
        assert!((qr.leverage().sum() - 2.0).abs() < 1e-12);

        let x = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 1.0, 1.0, 2.0, 1.0, 2.0, 4.0]);
        let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        match ThinQr::new(&x, &labels) {
            Err(ResiError::RankDeficient { column }) => assert_eq!(column, "c"),
            other => panic!("expected rank deficiency, got {:?}", other.err()),
        }
    }

    #[test]
    fn quadratic_form_matches_explicit_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let direct = (b.transpose() * a.clone().try_inverse().unwrap() * &b)[(0, 0)];
        assert!((inverse_quadratic_form(&a, &b).unwrap() - direct).abs() < 1e-12);
    }
}
