//! Wald tests on fitted models: per-coefficient, multi-parameter, term-wise
//! ANOVA tables and full-versus-reduced comparisons.
//!
//! Least-squares fits (`lm`, `nls`) report t statistics for coefficients;
//! `lm` reports F for multi-parameter tests. GLMs report z and chi-square, and
//! so does `nls` for multi-parameter tests.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceEstimate;
use crate::distributions;
use crate::error::{ResiError, Result};
use crate::fit::{FittedModel, ModelKind};
use crate::linalg::{inverse_quadratic_form, submatrix, subvector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatKind {
    Z,
    T,
    ChiSq,
    F,
}

impl StatKind {
    pub fn name(&self) -> &'static str {
        match self {
            StatKind::Z => "z",
            StatKind::T => "t",
            StatKind::ChiSq => "chisq",
            StatKind::F => "f",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldResult {
    pub statistic: f64,
    pub kind: StatKind,
    pub df1: usize,
    pub df2: Option<usize>,
    pub p_value: f64,
}

impl WaldResult {
    fn new(statistic: f64, kind: StatKind, df1: usize, df2: Option<usize>) -> Self {
        let p_value = match kind {
            StatKind::Z => distributions::normal_two_sided(statistic),
            StatKind::T => distributions::t_two_sided(statistic, df2.expect("t has df2") as f64),
            StatKind::ChiSq => distributions::chisq_upper(statistic, df1 as f64),
            StatKind::F => distributions::f_upper(statistic, df1 as f64, df2.expect("F has df2") as f64),
        };
        WaldResult {
            statistic,
            kind,
            df1,
            df2,
            p_value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefTest {
    pub label: String,
    pub estimate: f64,
    pub std_error: f64,
    pub test: WaldResult,
}

fn check_dims(model: &FittedModel, vcov: &CovarianceEstimate) -> Result<()> {
    let p = model.m();
    if vcov.matrix.shape() != (p, p) {
        return Err(ResiError::InvalidArgument(format!(
            "covariance is {}x{}, model has {p} parameters",
            vcov.matrix.nrows(),
            vcov.matrix.ncols()
        )));
    }
    Ok(())
}

/// Coefficient-wise `β̂_j / se_j`.
pub fn coef_tests(model: &FittedModel, vcov: &CovarianceEstimate) -> Result<Vec<CoefTest>> {
    check_dims(model, vcov)?;
    let (kind, df2) = match model.kind() {
        ModelKind::Glm(_) => (StatKind::Z, None),
        _ => (StatKind::T, Some(model.residual_df())),
    };
    model
        .labels()
        .iter()
        .enumerate()
        .map(|(j, label)| {
            let estimate = model.coefficients()[j];
            let var = vcov.matrix[(j, j)];
            if !(var > 0.0) || !var.is_finite() {
                return Err(ResiError::ZeroStdError(label.clone()));
            }
            let std_error = var.sqrt();
            Ok(CoefTest {
                label: label.clone(),
                estimate,
                std_error,
                test: WaldResult::new(estimate / std_error, kind, 1, df2),
            })
        })
        .collect()
}

/// `β̂_Sᵀ Σ̂_SS⁻¹ β̂_S`, without reference distribution.
fn wald_quadratic(beta: &DVector<f64>, vcov: &CovarianceEstimate, columns: &[usize]) -> Result<f64> {
    if columns.is_empty() {
        return Ok(0.0);
    }
    inverse_quadratic_form(&submatrix(&vcov.matrix, columns), &subvector(beta, columns))
}

fn wald_result(model: &FittedModel, w: f64, df1: usize) -> WaldResult {
    match model.kind() {
        ModelKind::Ols => WaldResult::new(w / df1 as f64, StatKind::F, df1, Some(model.residual_df())),
        _ => WaldResult::new(w, StatKind::ChiSq, df1, None),
    }
}

/// Joint test that the coefficients in `columns` are zero.
pub fn multi_wald(model: &FittedModel, vcov: &CovarianceEstimate, columns: &[usize]) -> Result<WaldResult> {
    check_dims(model, vcov)?;
    if columns.is_empty() {
        return Err(ResiError::NoTestedParameters);
    }
    let mut sorted = columns.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != columns.len() || sorted.last().is_some_and(|&c| c >= model.m()) {
        return Err(ResiError::InvalidArgument("column set out of range or repeated".into()));
    }
    let w = wald_quadratic(model.coefficients(), vcov, &sorted)?;
    Ok(wald_result(model, w, sorted.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnovaType {
    II,
    III,
}

impl fmt::Display for AnovaType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnovaType::II => "II",
            AnovaType::III => "III",
        })
    }
}

impl FromStr for AnovaType {
    type Err = ResiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2" | "II" | "ii" => Ok(AnovaType::II),
            "3" | "III" | "iii" => Ok(AnovaType::III),
            other => Err(ResiError::InvalidArgument(format!("unknown ANOVA type `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnovaRow {
    pub term: String,
    pub test: WaldResult,
}

/// Term-wise Wald tests.
///
/// Type III tests each term's own columns in the full model and includes an
/// intercept row. Type II tests term `T` as `W(T ∪ R) − W(R)`, where `R` holds
/// the columns of the terms that contain `T`; this is the Wald comparison of
/// the model without `T` and its relatives against the model that adds `T`.
pub fn anova_table(model: &FittedModel, vcov: &CovarianceEstimate, kind: AnovaType) -> Result<Vec<AnovaRow>> {
    check_dims(model, vcov)?;
    if model.kind() == ModelKind::Nls {
        return Err(ResiError::Unsupported("ANOVA tables are not defined for nls fits".into()));
    }
    let terms = model.terms();
    if terms.is_empty() {
        return Err(ResiError::NoTestedParameters);
    }
    let beta = model.coefficients();
    let mut rows = Vec::with_capacity(terms.len() + 1);
    if kind == AnovaType::III && model.has_intercept() {
        rows.push(AnovaRow {
            term: "(Intercept)".into(),
            test: multi_wald(model, vcov, &[0])?,
        });
    }
    for tc in terms {
        let own: Vec<usize> = tc.columns.clone().collect();
        let test = match kind {
            AnovaType::III => multi_wald(model, vcov, &own)?,
            AnovaType::II => {
                let relatives: Vec<usize> = terms
                    .iter()
                    .filter(|other| !other.term.same_factors(&tc.term) && tc.term.is_contained_in(&other.term))
                    .flat_map(|other| other.columns.clone())
                    .collect();
                let mut joint = own.clone();
                joint.extend(&relatives);
                joint.sort_unstable();
                let w = wald_quadratic(beta, vcov, &joint)? - wald_quadratic(beta, vcov, &relatives)?;
                wald_result(model, w.max(0.0), own.len())
            }
        };
        rows.push(AnovaRow {
            term: tc.term.label(),
            test,
        });
    }
    Ok(rows)
}

/// Wald test of the full-model coefficients whose labels are absent from
/// `reduced_labels`.
pub fn wald_excluding(full: &FittedModel, vcov: &CovarianceEstimate, reduced_labels: &[String]) -> Result<WaldResult> {
    let tested: Vec<usize> = full
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, l)| !reduced_labels.contains(l))
        .map(|(i, _)| i)
        .collect();
    if tested.is_empty() {
        return Err(ResiError::NoTestedParameters);
    }
    multi_wald(full, vcov, &tested)
}

/// Compares `full` with a nested `reduced` fit using the full-model covariance.
pub fn overall_test(full: &FittedModel, reduced: &FittedModel, vcov: &CovarianceEstimate) -> Result<WaldResult> {
    if full.n() != reduced.n() {
        return Err(ResiError::NonNested(format!(
            "full model uses {} rows, reduced model {}",
            full.n(),
            reduced.n()
        )));
    }
    if let Some(extra) = reduced.labels().iter().find(|l| !full.labels().contains(l)) {
        return Err(ResiError::NonNested(format!("`{extra}` is not a full-model coefficient")));
    }
    wald_excluding(full, vcov, reduced.labels())
}
