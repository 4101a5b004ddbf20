//! Parameter covariance estimators: model-based and heteroskedasticity
//! consistent sandwiches.
//!
//! All estimators share one representation of the fit. `D` is the regressor
//! matrix (design, `sqrt(w)`-scaled design for weighted least squares, or the
//! Jacobian), `W` the GLM working weights (identity otherwise), and `r` the
//! score residuals. The bread is `(DᵀWD)⁻¹` and the HC meat is
//! `Σ ω_i r_i² d_i d_iᵀ`, with `ω_i` the variant's leverage adjustment.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ResiError, Result};
use crate::fit::{scale_rows, FittedModel, ModelKind};
use crate::linalg::{symmetrize, ThinQr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VcovKind {
    Naive,
    HC0,
    HC1,
    HC2,
    HC3,
    /// HC0 with the Jacobian as regressor matrix.
    NlsSandwich,
}

impl VcovKind {
    pub fn is_robust(&self) -> bool {
        !matches!(self, VcovKind::Naive)
    }

    /// HC3 for linear models and GLMs, the Jacobian sandwich for nls.
    pub fn default_for(kind: ModelKind) -> VcovKind {
        match kind {
            ModelKind::Nls => VcovKind::NlsSandwich,
            _ => VcovKind::HC3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            VcovKind::Naive => "naive",
            VcovKind::HC0 => "HC0",
            VcovKind::HC1 => "HC1",
            VcovKind::HC2 => "HC2",
            VcovKind::HC3 => "HC3",
            VcovKind::NlsSandwich => "nls-sandwich",
        }
    }
}

impl fmt::Display for VcovKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VcovKind {
    type Err = ResiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "naive" => Ok(VcovKind::Naive),
            "hc0" => Ok(VcovKind::HC0),
            "hc1" => Ok(VcovKind::HC1),
            "hc2" => Ok(VcovKind::HC2),
            "hc3" => Ok(VcovKind::HC3),
            "nls-sandwich" | "sandwich" => Ok(VcovKind::NlsSandwich),
            other => Err(ResiError::InvalidArgument(format!("unknown covariance estimator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<f64>,
    pub variant: VcovKind,
}

impl CovarianceEstimate {
    pub fn robust(&self) -> bool {
        self.variant.is_robust()
    }

    pub fn std_errors(&self) -> DVector<f64> {
        self.matrix.diagonal().map(|v| v.max(0.0).sqrt())
    }
}

/// QR of `W^½ D`, shared by bread and leverage.
fn weighted_qr(model: &FittedModel) -> Result<ThinQr> {
    let d = model.regressors();
    let scaled = match &model.work_weights {
        None => d.clone(),
        Some(w) => scale_rows(d, &w.map(f64::sqrt)),
    };
    ThinQr::new(&scaled, model.labels())
}

fn bread(qr: &ThinQr) -> Result<DMatrix<f64>> {
    let b = qr.unscaled_cov();
    if b.iter().all(|v| v.is_finite()) {
        Ok(b)
    } else {
        Err(ResiError::Singular("information matrix".into()))
    }
}

/// Diagonal of the (weighted) hat matrix.
pub fn leverage(model: &FittedModel) -> Result<DVector<f64>> {
    Ok(weighted_qr(model)?.leverage())
}

/// Model-based covariance `φ̂ (DᵀWD)⁻¹`.
pub fn vcov_naive(model: &FittedModel) -> Result<CovarianceEstimate> {
    if !model.converged() {
        return Err(ResiError::NotConverged);
    }
    let b = bread(&weighted_qr(model)?)?;
    Ok(CovarianceEstimate {
        matrix: b * model.dispersion(),
        variant: VcovKind::Naive,
    })
}

/// Sandwich estimator with the given leverage adjustment.
pub fn vcov_hc(model: &FittedModel, variant: VcovKind) -> Result<CovarianceEstimate> {
    if !model.converged() {
        return Err(ResiError::NotConverged);
    }
    let qr = weighted_qr(model)?;
    let b = bread(&qr)?;
    let (n, m) = (model.n(), model.m());
    let omega: DVector<f64> = match variant {
        VcovKind::HC0 | VcovKind::NlsSandwich => DVector::from_element(n, 1.0),
        VcovKind::HC1 => DVector::from_element(n, n as f64 / (n - m) as f64),
        VcovKind::HC2 | VcovKind::HC3 => {
            let h = qr.leverage();
            if let Some(row) = h.iter().position(|&v| v >= 1.0 - 1e-10) {
                return Err(ResiError::UnitLeverage { row });
            }
            let power = if variant == VcovKind::HC2 { 1 } else { 2 };
            h.map(|v| (1.0 - v).powi(power).recip())
        }
        VcovKind::Naive => return vcov_naive(model),
    };
    let d = model.regressors();
    let r = &model.score_residuals;
    let scale = DVector::from_iterator(n, (0..n).map(|i| r[i] * omega[i].sqrt()));
    let ds = scale_rows(d, &scale);
    let meat = ds.tr_mul(&ds);
    Ok(CovarianceEstimate {
        matrix: symmetrize(&b * meat * &b),
        variant,
    })
}

/// Jacobian sandwich `(JᵀJ)⁻¹ Jᵀ diag(e²) J (JᵀJ)⁻¹` of a nonlinear fit.
pub fn vcov_nls_sandwich(model: &FittedModel) -> Result<CovarianceEstimate> {
    if model.kind() != ModelKind::Nls {
        return Err(ResiError::Unsupported("the nls sandwich needs a nonlinear fit".into()));
    }
    vcov_hc(model, VcovKind::NlsSandwich)
}

/// Dispatches on `variant`.
pub fn vcov(model: &FittedModel, variant: VcovKind) -> Result<CovarianceEstimate> {
    match variant {
        VcovKind::Naive => vcov_naive(model),
        VcovKind::NlsSandwich => vcov_nls_sandwich(model),
        hc => vcov_hc(model, hc),
    }
}
