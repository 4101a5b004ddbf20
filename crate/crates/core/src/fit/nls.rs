use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::{FittedModel, ModelKind, NlsInfo};
use crate::datasets::DataFrame;
use crate::error::{ResiError, Result};
use crate::formula::{parse_nls_formula, Expr};
use crate::linalg::ThinQr;

/// A nonlinear mean model `response ~ expr(parameters, columns)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NlsProblem {
    pub response: String,
    pub expr: Expr,
    pub parameters: Vec<String>,
}

impl NlsProblem {
    pub fn parse(formula: &str, parameters: &[String]) -> Result<Self> {
        let (response, expr) = parse_nls_formula(formula, parameters)?;
        Ok(NlsProblem {
            response,
            expr,
            parameters: parameters.to_vec(),
        })
    }

    /// Columns needed to evaluate the model, response first.
    pub fn variables(&self) -> Vec<String> {
        let mut vars = vec![self.response.clone()];
        for c in self.expr.columns() {
            if !vars.contains(&c) {
                vars.push(c);
            }
        }
        vars
    }

    pub fn formula_string(&self) -> String {
        format!("{} ~ {}", self.response, self.expr)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NlsControl {
    pub max_iter: usize,
    /// Bound on the relative-offset convergence criterion.
    pub tol: f64,
    pub min_factor: f64,
    /// Largest admissible condition number of `JᵀJ`.
    pub max_condition: f64,
}

impl Default for NlsControl {
    fn default() -> Self {
        NlsControl {
            max_iter: 50,
            tol: 1e-5,
            min_factor: 1.0 / 1024.0,
            max_condition: 1e12,
        }
    }
}

struct Workspace<'a> {
    expr: &'a Expr,
    columns: HashMap<&'a str, &'a [f64]>,
    y: &'a DVector<f64>,
    sqrt_w: Option<&'a DVector<f64>>,
    n: usize,
}

impl Workspace<'_> {
    fn mean(&self, theta: &[f64]) -> Result<DVector<f64>> {
        let v = self.expr.eval(theta, &self.columns, self.n)?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(ResiError::NonFinite);
        }
        Ok(DVector::from_vec(v))
    }

    fn weigh(&self, v: DVector<f64>) -> DVector<f64> {
        match self.sqrt_w {
            None => v,
            Some(s) => v.component_mul(s),
        }
    }

    /// Weighted residuals `sqrt(w)(y − f)`.
    fn residuals(&self, theta: &[f64]) -> Result<DVector<f64>> {
        Ok(self.weigh(self.y - self.mean(theta)?))
    }

    /// Central-difference Jacobian of the weighted mean function.
    fn jacobian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let p = theta.len();
        let mut jac = DMatrix::zeros(self.n, p);
        let mut work = theta.to_vec();
        for j in 0..p {
            let h = 1e-6 * theta[j].abs().max(1.0);
            work[j] = theta[j] + h;
            let up = self.mean(&work)?;
            work[j] = theta[j] - h;
            let down = self.mean(&work)?;
            work[j] = theta[j];
            jac.set_column(j, &self.weigh((up - down) / (2.0 * h)));
        }
        Ok(jac)
    }
}

fn check_conditioning(jac: &DMatrix<f64>, max_condition: f64) -> Result<()> {
    let sv = jac.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(min > 0.0) || (max / min).powi(2) > max_condition {
        return Err(ResiError::SingularGradient);
    }
    Ok(())
}

/// Fits a nonlinear least-squares model by Gauss-Newton with step halving.
///
/// Rows with a missing value in any referenced column are dropped.
pub fn fit_nls(
    problem: &NlsProblem,
    data: &DataFrame,
    start: &[(String, f64)],
    control: &NlsControl,
) -> Result<FittedModel> {
    fit_nls_weighted(problem, data, start, control, None)
}

/// As [`fit_nls`] with positive case weights, one per row of `data`.
pub fn fit_nls_weighted(
    problem: &NlsProblem,
    data: &DataFrame,
    start: &[(String, f64)],
    control: &NlsControl,
    weights: Option<&[f64]>,
) -> Result<FittedModel> {
    let theta0: Vec<f64> = problem
        .parameters
        .iter()
        .map(|name| {
            start
                .iter()
                .find(|(k, _)| k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| ResiError::InvalidArgument(format!("no start value for parameter `{name}`")))
        })
        .collect::<Result<_>>()?;

    let vars = problem.variables();
    for v in &vars {
        if problem.parameters.contains(v) {
            return Err(ResiError::InvalidArgument(format!(
                "`{v}` is both a parameter and a data column"
            )));
        }
    }
    let var_refs: Vec<&str> = vars.iter().map(String::as_str).collect();
    let rows = data.complete_rows(&var_refs)?;
    if rows.is_empty() {
        return Err(ResiError::NoRows);
    }
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(vars.len());
    for v in &vars {
        let col = data
            .column(v)?
            .as_numeric()
            .ok_or_else(|| ResiError::NonNumericResponse(v.clone()))?;
        values.push(rows.iter().map(|&r| col[r].expect("complete row")).collect());
    }
    let n = rows.len();
    let p = theta0.len();
    if n <= p {
        return Err(ResiError::TooFewObservations { n, p });
    }
    let y = DVector::from_vec(values[0].clone());
    let sqrt_w = match weights {
        None => None,
        Some(w) => {
            if w.len() != data.row_count() || rows.iter().any(|&r| !(w[r].is_finite() && w[r] > 0.0)) {
                return Err(ResiError::InvalidArgument("case weights must be positive".into()));
            }
            Some(DVector::from_iterator(n, rows.iter().map(|&r| w[r].sqrt())))
        }
    };
    let ws = Workspace {
        expr: &problem.expr,
        columns: vars[1..]
            .iter()
            .map(String::as_str)
            .zip(values[1..].iter().map(Vec::as_slice))
            .collect(),
        y: &y,
        sqrt_w: sqrt_w.as_ref(),
        n,
    };

    let scale = y.norm_squared().max(f64::MIN_POSITIVE);
    let mut theta = theta0;
    let mut resid = ws.residuals(&theta)?;
    let mut rss = resid.norm_squared();
    let mut iterations = 0;
    loop {
        let jac = ws.jacobian(&theta)?;
        check_conditioning(&jac, control.max_condition)?;
        let qr = ThinQr::new(&jac, &problem.parameters).map_err(|_| ResiError::SingularGradient)?;
        let qtr = qr.q.tr_mul(&resid);
        let explained = qtr.norm_squared();
        let unexplained = (rss - explained).max(0.0);
        // relative offset: size of the projected residual relative to what is left over
        if explained <= control.tol * control.tol * unexplained || rss <= f64::EPSILON * f64::EPSILON * scale {
            return Ok(finish(problem, &ws, theta, resid, jac, iterations, rows));
        }
        if iterations == control.max_iter {
            return Err(ResiError::IterationLimit(control.max_iter));
        }
        iterations += 1;

        let step = qr.solve(&resid);
        let mut factor = 1.0;
        loop {
            let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + factor * s).collect();
            if let Ok(r) = ws.residuals(&trial) {
                let trial_rss = r.norm_squared();
                if trial_rss <= rss {
                    theta = trial;
                    resid = r;
                    rss = trial_rss;
                    break;
                }
            }
            factor /= 2.0;
            if factor < control.min_factor {
                return Err(ResiError::StepFactor);
            }
        }
    }
}

fn finish(
    problem: &NlsProblem,
    ws: &Workspace<'_>,
    theta: Vec<f64>,
    score_residuals: DVector<f64>,
    jac: DMatrix<f64>,
    iterations: usize,
    rows: Vec<usize>,
) -> FittedModel {
    let fitted = ws.mean(&theta).expect("evaluated during fitting");
    let residuals = ws.y - &fitted;
    let rss = score_residuals.norm_squared();
    let (n, p) = jac.shape();
    FittedModel {
        kind: ModelKind::Nls,
        labels: problem.parameters.clone(),
        coefficients: DVector::from_vec(theta),
        fitted,
        residuals,
        dispersion: rss / (n - p) as f64,
        deviance: rss,
        converged: true,
        iterations,
        regressors: jac,
        score_residuals,
        work_weights: None,
        terms: Vec::new(),
        intercept: false,
        nls: Some(NlsInfo {
            expr: problem.expr.clone(),
            response: problem.response.clone(),
            parameters: problem.parameters.clone(),
        }),
        source_rows: rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{Column, DataFrame};

    fn power_frame(noise: &[f64]) -> DataFrame {
        let a: Vec<f64> = (1..=noise.len()).map(|i| i as f64 * 0.37).collect();
        let s: Vec<f64> = a.iter().zip(noise).map(|(a, e)| 2.0 * a.powf(0.5) + e).collect();
        DataFrame::new(vec![
            Column::numeric("a", a.into_iter().map(Some).collect()),
            Column::numeric("s", s.into_iter().map(Some).collect()),
        ])
        .unwrap()
    }

    fn params() -> Vec<String> {
        vec!["c".into(), "z".into()]
    }

    fn start(c: f64, z: f64) -> Vec<(String, f64)> {
        vec![("c".into(), c), ("z".into(), z)]
    }

    #[test]
    fn exact_power_data_from_truth() {
        let df = power_frame(&[0.0; 12]);
        let prob = NlsProblem::parse("s ~ c*a^z", &params()).unwrap();
        let m = fit_nls(&prob, &df, &start(2.0, 0.5), &NlsControl::default()).unwrap();
        assert!(m.iterations() <= 2);
        assert!(m.deviance() < 1e-20);
        assert!((m.coefficients()[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn converges_from_distant_start_and_satisfies_first_order_condition() {
        let noise = [0.1, -0.2, 0.05, 0.3, -0.1, -0.25, 0.2, 0.0, -0.05, 0.15, -0.3, 0.1];
        let df = power_frame(&noise);
        let prob = NlsProblem::parse("s ~ c*a^z", &params()).unwrap();
        let m = fit_nls(&prob, &df, &start(1.0, 1.0), &NlsControl::default()).unwrap();
        let grad = m.regressors().tr_mul(m.residuals());
        assert!(grad.amax() <= 1e-4 * m.residuals().norm(), "{grad}");

        let restart: Vec<(String, f64)> = params()
            .into_iter()
            .zip(m.coefficients().iter().copied())
            .collect();
        let again = fit_nls(&prob, &df, &restart, &NlsControl::default()).unwrap();
        assert!(again.iterations() <= 2);
        assert!((again.coefficients() - m.coefficients()).amax() < 1e-6);
    }

    #[test]
    fn zero_scale_start_is_a_singular_gradient() {
        let df = power_frame(&[0.1, -0.1, 0.2, 0.0, 0.1, -0.2]);
        let prob = NlsProblem::parse("s ~ c*a^z", &params()).unwrap();
        assert!(matches!(
            fit_nls(&prob, &df, &start(0.0, 0.5), &NlsControl::default()),
            Err(ResiError::SingularGradient)
        ));
    }

    #[test]
    fn iteration_limit() {
        let noise = [0.1, -0.2, 0.05, 0.3, -0.1, -0.25, 0.2, 0.0];
        let df = power_frame(&noise);
        let prob = NlsProblem::parse("s ~ c*a^z", &params()).unwrap();
        let control = NlsControl {
            max_iter: 1,
            ..NlsControl::default()
        };
        assert!(matches!(
            fit_nls(&prob, &df, &start(1.0, 1.0), &control),
            Err(ResiError::IterationLimit(1))
        ));
    }

    #[test]
    fn missing_start_value_and_name_clash() {
        let df = power_frame(&[0.0; 5]);
        let prob = NlsProblem::parse("s ~ c*a^z", &params()).unwrap();
        assert!(fit_nls(&prob, &df, &[("c".into(), 1.0)], &NlsControl::default()).is_err());
        let prob = NlsProblem::parse("s ~ a*s", &["a".to_string()]).unwrap();
        assert!(fit_nls(&prob, &df, &[("a".into(), 1.0)], &NlsControl::default()).is_err());
    }
}
