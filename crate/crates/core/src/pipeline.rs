//! One full pass of the analysis: fit, covariance, Wald tests and RESI
//! conversion of every test.
//!
//! The bootstrap reruns exactly this pass on every replicate, so anything that
//! must stay fixed across replicates (factor coding, nls start values) is
//! held by the [`Pipeline`] rather than recomputed from the data.

use serde::{Deserialize, Serialize};

use crate::covariance::{vcov, CovarianceEstimate, VcovKind};
use crate::datasets::DataFrame;
use crate::error::{ResiError, Result};
use crate::estimators::{chisq2s, f2s, t2s, t2s_alt, z2s, z2s_alt};
use crate::fit::{
    fit_glm, fit_nls_weighted, fit_ols_weighted, Family, FittedModel, ModelKind, NlsControl, NlsProblem,
};
use crate::formula::{build_design_with_levels, parse_formula, parse_nls_formula, FactorLevels, Formula};
use crate::inference::{anova_table, coef_tests, overall_test, wald_excluding, AnovaRow, AnovaType, CoefTest, StatKind, WaldResult};

#[derive(Debug, Clone)]
pub enum ModelSpec {
    Linear(Formula),
    Glm(Formula, Family),
    Nls {
        problem: NlsProblem,
        start: Vec<(String, f64)>,
        control: NlsControl,
    },
}

impl ModelSpec {
    pub fn model_kind(&self) -> ModelKind {
        match self {
            ModelSpec::Linear(_) => ModelKind::Ols,
            ModelSpec::Glm(_, f) => ModelKind::Glm(*f),
            ModelSpec::Nls { .. } => ModelKind::Nls,
        }
    }

    /// Columns referenced by the model.
    pub fn variables(&self) -> Vec<String> {
        match self {
            ModelSpec::Linear(f) | ModelSpec::Glm(f, _) => f.variables().iter().map(|s| s.to_string()).collect(),
            ModelSpec::Nls { problem, .. } => problem.variables(),
        }
    }

    pub fn formula_string(&self) -> String {
        match self {
            ModelSpec::Linear(f) | ModelSpec::Glm(f, _) => f.to_string(),
            ModelSpec::Nls { problem, .. } => problem.formula_string(),
        }
    }

    fn response(&self) -> &str {
        match self {
            ModelSpec::Linear(f) | ModelSpec::Glm(f, _) => f.response(),
            ModelSpec::Nls { problem, .. } => &problem.response,
        }
    }
}

/// Reduced model for the overall test.
#[derive(Debug, Clone)]
pub enum ReducedSpec {
    /// A linear predictor fitted with the full model's method and rows.
    Formula(Formula),
    /// An nls expression in a subset of the full model's parameters; only its
    /// parameter names enter the test.
    Parameters { formula: String, parameters: Vec<String> },
    /// Intercept-only for lm/glm; for nls, every parameter is tested.
    Default,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResiOptions {
    /// `None` selects HC3 for lm/glm and the Jacobian sandwich for nls.
    pub vcov: Option<VcovKind>,
    pub anova_type: AnovaType,
    pub unbiased: bool,
    pub coefficients: bool,
    pub anova: bool,
}

impl Default for ResiOptions {
    fn default() -> Self {
        ResiOptions {
            vcov: None,
            anova_type: AnovaType::II,
            unbiased: true,
            coefficients: true,
            anova: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    full: ModelSpec,
    reduced: ReducedSpec,
    options: ResiOptions,
    levels: Option<FactorLevels>,
}

#[derive(Debug, Clone)]
pub struct CoefResi {
    pub test: CoefTest,
    pub resi: f64,
}

#[derive(Debug, Clone)]
pub struct AnovaResi {
    pub row: AnovaRow,
    pub resi: f64,
}

#[derive(Debug, Clone)]
pub struct OverallResi {
    pub reduced_formula: String,
    pub full_formula: String,
    pub full_df: usize,
    pub reduced_df: usize,
    pub test: WaldResult,
    pub resi: f64,
}

/// Everything computed in one pass.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub model: FittedModel,
    pub vcov: CovarianceEstimate,
    /// Rows entering the fit; the `n` of every conversion.
    pub n: usize,
    pub coefficients: Vec<CoefResi>,
    pub anova: Vec<AnovaResi>,
    pub overall: OverallResi,
    pub factor_levels: FactorLevels,
}

impl Evaluation {
    /// RESI values in [`Pipeline::quantity_labels`] order.
    pub fn quantities(&self) -> Vec<f64> {
        self.coefficients
            .iter()
            .map(|c| c.resi)
            .chain(self.anova.iter().map(|a| a.resi))
            .chain(std::iter::once(self.overall.resi))
            .collect()
    }

    pub fn quantity_labels(&self) -> Vec<String> {
        self.coefficients
            .iter()
            .map(|c| format!("coef:{}", c.test.label))
            .chain(self.anova.iter().map(|a| format!("anova:{}", a.row.term)))
            .chain(std::iter::once("overall".to_string()))
            .collect()
    }
}

impl Pipeline {
    pub fn new(full: ModelSpec, reduced: ReducedSpec, options: ResiOptions) -> Result<Self> {
        match (&full, &reduced) {
            (ModelSpec::Nls { .. }, ReducedSpec::Formula(_)) => {
                return Err(ResiError::InvalidArgument("an nls model needs an nls reduced model".into()))
            }
            (ModelSpec::Linear(_) | ModelSpec::Glm(..), ReducedSpec::Parameters { .. }) => {
                return Err(ResiError::InvalidArgument("reduced model must be a linear formula".into()))
            }
            _ => {}
        }
        if let ReducedSpec::Formula(f) = &reduced {
            if f.response() != full.response() {
                return Err(ResiError::NonNested("reduced model has a different response".into()));
            }
        }
        Ok(Pipeline {
            full,
            reduced,
            options,
            levels: None,
        })
    }

    /// Parses a reduced-model string in the language of `full`.
    pub fn parse_reduced(full: &ModelSpec, text: Option<&str>) -> Result<ReducedSpec> {
        let Some(text) = text else {
            return Ok(ReducedSpec::Default);
        };
        match full {
            ModelSpec::Linear(_) | ModelSpec::Glm(..) => Ok(ReducedSpec::Formula(parse_formula(text)?)),
            ModelSpec::Nls { problem, .. } => {
                let (response, expr) = parse_nls_formula(text, &problem.parameters)?;
                if response != problem.response {
                    return Err(ResiError::NonNested("reduced model has a different response".into()));
                }
                Ok(ReducedSpec::Parameters {
                    formula: format!("{response} ~ {expr}"),
                    parameters: expr.parameters(),
                })
            }
        }
    }

    pub fn full(&self) -> &ModelSpec {
        &self.full
    }

    pub fn options(&self) -> &ResiOptions {
        &self.options
    }

    pub fn vcov_kind(&self) -> VcovKind {
        self.options
            .vcov
            .unwrap_or_else(|| VcovKind::default_for(self.full.model_kind()))
    }

    /// Every column referenced by the full or reduced model.
    pub fn variables(&self) -> Vec<String> {
        let mut vars = self.full.variables();
        if let ReducedSpec::Formula(f) = &self.reduced {
            for v in f.variables() {
                if !vars.iter().any(|x| x == v) {
                    vars.push(v.to_string());
                }
            }
        }
        vars
    }

    /// Fixes the factor coding used by later evaluations.
    pub fn with_levels(mut self, levels: FactorLevels) -> Self {
        self.levels = Some(levels);
        self
    }

    /// nls start values replaced by `estimates`.
    pub fn restarted_at(&self, estimates: &FittedModel) -> Self {
        let mut out = self.clone();
        if let ModelSpec::Nls { start, .. } = &mut out.full {
            *start = estimates
                .labels()
                .iter()
                .cloned()
                .zip(estimates.coefficients().iter().copied())
                .collect();
        }
        out
    }

    fn fit(
        &self,
        spec_formula: Option<&Formula>,
        data: &DataFrame,
        weights: Option<&[f64]>,
    ) -> Result<(FittedModel, FactorLevels)> {
        match &self.full {
            ModelSpec::Linear(f) => {
                let f = spec_formula.unwrap_or(f);
                let (design, y) = build_design_with_levels(f, data, self.levels.as_ref())?;
                let w: Option<Vec<f64>> = weights.map(|w| design.source_rows().iter().map(|&r| w[r]).collect());
                Ok((fit_ols_weighted(&design, &y, w.as_deref())?, design.factor_levels().clone()))
            }
            ModelSpec::Glm(f, family) => {
                if weights.is_some() {
                    return Err(ResiError::Unsupported("case weights are not supported for glm fits".into()));
                }
                let f = spec_formula.unwrap_or(f);
                let (design, y) = build_design_with_levels(f, data, self.levels.as_ref())?;
                Ok((fit_glm(&design, &y, *family)?, design.factor_levels().clone()))
            }
            ModelSpec::Nls { problem, start, control } => Ok((
                fit_nls_weighted(problem, data, start, control, weights)?,
                FactorLevels::new(),
            )),
        }
    }

    /// Runs the full analysis on `data`, optionally with case weights (one per row).
    pub fn evaluate(&self, data: &DataFrame, weights: Option<&[f64]>) -> Result<Evaluation> {
        if let Some(w) = weights {
            if w.len() != data.row_count() {
                return Err(ResiError::InvalidArgument("one weight per data row is required".into()));
            }
        }
        let (model, factor_levels) = self.fit(None, data, weights)?;
        let kind = model.kind();
        let cov = vcov(&model, self.vcov_kind())?;
        let n = model.n();
        let m = model.m();
        let rdf = model.residual_df();

        let coefficients = if self.options.coefficients {
            coef_tests(&model, &cov)?
                .into_iter()
                .map(|test| {
                    let s = test.test.statistic;
                    let resi = match (kind, self.options.unbiased) {
                        (ModelKind::Glm(_), true) => z2s(s, n),
                        (ModelKind::Glm(_), false) => z2s_alt(s, n),
                        (_, true) => t2s(s, n, m),
                        (_, false) => t2s_alt(s, n, m),
                    }?;
                    Ok(CoefResi { test, resi })
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };

        let anova = if self.options.anova && kind != ModelKind::Nls && !model.terms().is_empty() {
            anova_table(&model, &cov, self.options.anova_type)?
                .into_iter()
                .map(|row| {
                    let resi = wald_to_resi(&row.test, n)?;
                    Ok(AnovaResi { row, resi })
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };

        let (test, reduced_formula, reduced_df) = match &self.reduced {
            ReducedSpec::Parameters { formula, parameters } => {
                if let Some(extra) = parameters.iter().find(|p| !model.labels().contains(p)) {
                    return Err(ResiError::NonNested(format!("`{extra}` is not a full-model parameter")));
                }
                (wald_excluding(&model, &cov, parameters)?, formula.clone(), n - parameters.len())
            }
            ReducedSpec::Default if kind == ModelKind::Nls => (wald_excluding(&model, &cov, &[])?, "intercept-only".to_string(), n),
            ReducedSpec::Formula(_) | ReducedSpec::Default => {
                let f = match &self.reduced {
                    ReducedSpec::Formula(f) => f.clone(),
                    _ => Formula::intercept_only(self.full.response()),
                };
                let rows = data.take_rows(model.source_rows());
                let rw: Option<Vec<f64>> = weights.map(|w| model.source_rows().iter().map(|&r| w[r]).collect());
                let (reduced, _) = self.fit(Some(&f), &rows, rw.as_deref())?;
                (overall_test(&model, &reduced, &cov)?, f.to_string(), reduced.residual_df())
            }
        };
        let overall = OverallResi {
            reduced_formula,
            full_formula: self.full.formula_string(),
            full_df: rdf,
            reduced_df,
            resi: wald_to_resi(&test, n)?,
            test,
        };
        Ok(Evaluation {
            model,
            vcov: cov,
            n,
            coefficients,
            anova,
            overall,
            factor_levels,
        })
    }
}

/// `S` of a chi-square or F Wald result.
fn wald_to_resi(test: &WaldResult, n: usize) -> Result<f64> {
    match test.kind {
        StatKind::F => f2s(test.statistic, test.df1, test.df2.expect("F has df2"), n),
        StatKind::ChiSq => chisq2s(test.statistic, test.df1, n),
        StatKind::Z | StatKind::T => unreachable!("multi-parameter tests are chisq or F"),
    }
}
