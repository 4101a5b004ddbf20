//! Model fitting: ordinary least squares, canonical-link GLMs and nonlinear
//! least squares.
//!
//! Every fitter produces a [`FittedModel`] that carries what the covariance
//! estimators need: the effective regressor matrix (the design for linear
//! models, the Jacobian for nonlinear ones), the residuals entering the
//! sandwich meat, and for GLMs the IRLS working weights at convergence.
//! Case weights are applied by scaling rows with `sqrt(w)`, so a weighted
//! fit is an ordinary fit on transformed data.

mod glm;
mod nls;

use nalgebra::{DMatrix, DVector};

use crate::error::{ResiError, Result};
use crate::formula::{DesignMatrix, Expr, TermColumns};
use crate::linalg::ThinQr;

pub use glm::{fit_glm, fit_glm_with, Family, GlmControl};
pub use nls::{fit_nls, fit_nls_weighted, NlsControl, NlsProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Ols,
    Glm(Family),
    Nls,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Ols => "lm",
            ModelKind::Glm(_) => "glm",
            ModelKind::Nls => "nls",
        }
    }
}

/// Expression and parameter names of a nonlinear fit.
#[derive(Debug, Clone, PartialEq)]
pub struct NlsInfo {
    pub expr: Expr,
    pub response: String,
    pub parameters: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct FittedModel {
    pub(crate) kind: ModelKind,
    pub(crate) labels: Vec<String>,
    pub(crate) coefficients: DVector<f64>,
    pub(crate) fitted: DVector<f64>,
    pub(crate) residuals: DVector<f64>,
    pub(crate) dispersion: f64,
    pub(crate) deviance: f64,
    pub(crate) converged: bool,
    pub(crate) iterations: usize,
    pub(crate) regressors: DMatrix<f64>,
    pub(crate) score_residuals: DVector<f64>,
    pub(crate) work_weights: Option<DVector<f64>>,
    pub(crate) terms: Vec<TermColumns>,
    pub(crate) intercept: bool,
    pub(crate) nls: Option<NlsInfo>,
    pub(crate) source_rows: Vec<usize>,
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn coefficient(&self, label: &str) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.coefficients[i])
    }

    pub fn fitted_values(&self) -> &DVector<f64> {
        &self.fitted
    }

    /// Response-scale residuals `y − fitted`, without case weights.
    pub fn residuals(&self) -> &DVector<f64> {
        &self.residuals
    }

    pub fn n(&self) -> usize {
        self.regressors.nrows()
    }

    /// Number of estimated mean-model parameters.
    pub fn m(&self) -> usize {
        self.coefficients.len()
    }

    pub fn residual_df(&self) -> usize {
        self.n() - self.m()
    }

    /// σ̂² for least-squares fits, the GLM dispersion otherwise.
    pub fn dispersion(&self) -> f64 {
        self.dispersion
    }

    /// Residual sum of squares for least-squares fits, deviance for GLMs.
    pub fn deviance(&self) -> f64 {
        self.deviance
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Design matrix (weighted) or Jacobian at the estimate.
    pub fn regressors(&self) -> &DMatrix<f64> {
        &self.regressors
    }

    pub fn terms(&self) -> &[TermColumns] {
        &self.terms
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    pub fn nls_info(&self) -> Option<&NlsInfo> {
        self.nls.as_ref()
    }

    /// Indices of the source-frame rows used in the fit.
    pub fn source_rows(&self) -> &[usize] {
        &self.source_rows
    }
}

/// Least-squares fit of `y` on the design via Householder QR.
pub fn fit_ols(design: &DesignMatrix, y: &DVector<f64>) -> Result<FittedModel> {
    fit_ols_weighted(design, y, None)
}

/// Weighted least squares with positive case weights.
pub fn fit_ols_weighted(
    design: &DesignMatrix,
    y: &DVector<f64>,
    weights: Option<&[f64]>,
) -> Result<FittedModel> {
    let x = design.matrix();
    let (n, p) = x.shape();
    if n <= p {
        return Err(ResiError::TooFewObservations { n, p });
    }
    if y.len() != n {
        return Err(ResiError::InvalidArgument("response length differs from design".into()));
    }
    let sqrt_w: Option<DVector<f64>> = match weights {
        None => None,
        Some(w) => {
            if w.len() != n || w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(ResiError::InvalidArgument("case weights must be positive".into()));
            }
            Some(DVector::from_iterator(n, w.iter().map(|v| v.sqrt())))
        }
    };
    let (xw, yw) = match &sqrt_w {
        None => (x.clone(), y.clone()),
        Some(s) => (scale_rows(x, s), y.component_mul(s)),
    };

    let qr = ThinQr::new(&xw, design.labels())?;
    let beta = qr.solve(&yw);
    let fitted = x * &beta;
    let residuals = y - &fitted;
    let score_residuals = match &sqrt_w {
        None => residuals.clone(),
        Some(s) => residuals.component_mul(s),
    };
    let rss = score_residuals.norm_squared();
    Ok(FittedModel {
        kind: ModelKind::Ols,
        labels: design.labels().to_vec(),
        coefficients: beta,
        fitted,
        residuals,
        dispersion: rss / (n - p) as f64,
        deviance: rss,
        converged: true,
        iterations: 0,
        regressors: xw,
        score_residuals,
        work_weights: None,
        terms: design.terms().to_vec(),
        intercept: design.has_intercept(),
        nls: None,
        source_rows: design.source_rows().to_vec(),
    })
}

pub(crate) fn scale_rows(x: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for (mut row, &f) in out.row_iter_mut().zip(s.iter()) {
        row *= f;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::read_csv_from;
    use crate::formula::{build_design, parse_formula};
    use std::collections::HashMap;

    fn design(text: &str, formula: &str) -> (DesignMatrix, DVector<f64>) {
        let df = read_csv_from(text.as_bytes(), &HashMap::new()).unwrap();
        build_design(&parse_formula(formula).unwrap(), &df).unwrap()
    }

    #[test]
    fn three_point_line() {
        let (d, y) = design("x,y\n0,1\n1,3\n2,5\n", "y ~ x");
        let m = fit_ols(&d, &y).unwrap();
        assert!((m.coefficients()[0] - 1.0).abs() < 1e-12);
        assert!((m.coefficients()[1] - 2.0).abs() < 1e-12);
        assert!(m.residuals().iter().all(|e| e.abs() < 1e-12));
        assert!(m.dispersion() < 1e-24);
        assert_eq!(m.n(), 3);
        assert_eq!(m.m(), 2);
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        let (d, y) = design("x,g,y\n1,a,2.3\n2,b,2.9\n3,a,4.1\n4,b,5.5\n5,a,5.2\n6,b,7.9\n", "y ~ x * g");
        let m = fit_ols(&d, &y).unwrap();
        let xte = d.matrix().tr_mul(m.residuals());
        assert!(xte.amax() <= 1e-8 * y.norm());
    }

    #[test]
    fn rank_deficiency_names_the_column() {
        let (d, y) = design("x,z,y\n1,2,1\n2,4,3\n3,6,2\n4,8,5\n", "y ~ x + z");
        match fit_ols(&d, &y) {
            Err(ResiError::RankDeficient { column }) => assert_eq!(column, "z"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_few_rows() {
        let (d, y) = design("x,y\n0,1\n1,3\n", "y ~ x");
        assert!(matches!(fit_ols(&d, &y), Err(ResiError::TooFewObservations { .. })));
    }

    #[test]
    fn integer_weights_match_row_duplication() {
        let (d, y) = design("x,y\n0,1\n1,2.5\n2,5.5\n3,6\n", "y ~ x");
        let w = fit_ols_weighted(&d, &y, Some(&[1.0, 2.0, 1.0, 3.0])).unwrap();
        let (d2, y2) = design("x,y\n0,1\n1,2.5\n1,2.5\n2,5.5\n3,6\n3,6\n3,6\n", "y ~ x");
        let dup = fit_ols(&d2, &y2).unwrap();
        assert!((w.coefficients() - dup.coefficients()).amax() < 1e-12);
        assert!((w.deviance() - dup.deviance()).abs() < 1e-10);
    }
}
