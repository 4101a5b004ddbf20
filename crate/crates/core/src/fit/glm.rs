use nalgebra::DVector;

use super::{FittedModel, ModelKind};
use crate::error::{ResiError, Result};
use crate::formula::DesignMatrix;
use crate::linalg::ThinQr;

/// Exponential families with their canonical links.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Identity link.
    Gaussian,
    /// Logit link.
    Binomial,
    /// Log link.
    Poisson,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Binomial => "binomial",
            Family::Poisson => "poisson",
        }
    }

    pub fn link_name(&self) -> &'static str {
        match self {
            Family::Gaussian => "identity",
            Family::Binomial => "logit",
            Family::Poisson => "log",
        }
    }

    fn check_response(&self, y: &DVector<f64>) -> Result<()> {
        let bad = match self {
            Family::Gaussian => y.iter().position(|v| !v.is_finite()),
            Family::Binomial => y.iter().position(|v| !(0.0..=1.0).contains(v)),
            Family::Poisson => y.iter().position(|v| !(v.is_finite() && *v >= 0.0)),
        };
        match bad {
            None => Ok(()),
            Some(i) => Err(ResiError::InvalidResponse(format!(
                "value {} at row {} is outside the {} family's range",
                y[i],
                i,
                self.name()
            ))),
        }
    }

    fn initial_mean(&self, y: f64) -> f64 {
        match self {
            Family::Gaussian => y,
            Family::Binomial => (y + 0.5) / 2.0,
            Family::Poisson => y + 0.1,
        }
    }

    fn link(&self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => mu,
            Family::Binomial => (mu / (1.0 - mu)).ln(),
            Family::Poisson => mu.ln(),
        }
    }

    fn inverse_link(&self, eta: f64) -> f64 {
        const EPS: f64 = f64::EPSILON;
        match self {
            Family::Gaussian => eta,
            Family::Binomial => (1.0 / (1.0 + (-eta).exp())).clamp(EPS, 1.0 - EPS),
            Family::Poisson => eta.exp().max(EPS),
        }
    }

    /// Variance function; for canonical links also `dμ/dη` and the IRLS weight.
    fn variance(&self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Binomial => mu * (1.0 - mu),
            Family::Poisson => mu,
        }
    }

    fn unit_deviance(&self, y: f64, mu: f64) -> f64 {
        fn ylogy(y: f64, mu: f64) -> f64 {
            if y == 0.0 {
                0.0
            } else {
                y * (y / mu).ln()
            }
        }
        match self {
            Family::Gaussian => (y - mu) * (y - mu),
            Family::Binomial => 2.0 * (ylogy(y, mu) + ylogy(1.0 - y, 1.0 - mu)),
            Family::Poisson => 2.0 * (ylogy(y, mu) - (y - mu)),
        }
    }

    fn deviance(&self, y: &DVector<f64>, mu: &DVector<f64>) -> f64 {
        y.iter().zip(mu.iter()).map(|(&y, &m)| self.unit_deviance(y, m)).sum()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GlmControl {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for GlmControl {
    fn default() -> Self {
        GlmControl {
            max_iter: 50,
            tol: 1e-8,
        }
    }
}

/// Fits a GLM with canonical link by iteratively reweighted least squares.
///
/// Convergence is declared when `|dev − dev_prev| / (|dev| + 0.1) < tol`.
/// Hitting the iteration cap is not an error: the returned model has
/// `converged() == false`.
pub fn fit_glm(design: &DesignMatrix, y: &DVector<f64>, family: Family) -> Result<FittedModel> {
    fit_glm_with(design, y, family, GlmControl::default())
}

pub fn fit_glm_with(
    design: &DesignMatrix,
    y: &DVector<f64>,
    family: Family,
    control: GlmControl,
) -> Result<FittedModel> {
    let x = design.matrix();
    let (n, p) = x.shape();
    if n <= p {
        return Err(ResiError::TooFewObservations { n, p });
    }
    family.check_response(y)?;

    let mut mu = y.map(|v| family.initial_mean(v));
    let mut eta = mu.map(|m| family.link(m));
    let mut dev_old = family.deviance(y, &mu);
    let mut beta: Option<DVector<f64>> = None;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < control.max_iter {
        iterations += 1;
        let w = mu.map(|m| family.variance(m));
        let sqrt_w = w.map(f64::sqrt);
        let z = DVector::from_iterator(
            n,
            (0..n).map(|i| eta[i] + (y[i] - mu[i]) / w[i]),
        );
        let xw = super::scale_rows(x, &sqrt_w);
        let qr = ThinQr::new(&xw, design.labels())?;
        let mut beta_new = qr.solve(&z.component_mul(&sqrt_w));

        let mut eta_new = x * &beta_new;
        let mut mu_new = eta_new.map(|e| family.inverse_link(e));
        let mut dev = family.deviance(y, &mu_new);
        // step halving only guards against a non-finite deviance
        let mut halvings = 0;
        while !dev.is_finite() {
            let prev = match &beta {
                Some(b) => b,
                None => return Err(ResiError::NonFinite),
            };
            halvings += 1;
            if halvings > 30 {
                return Err(ResiError::NonFinite);
            }
            beta_new = (&beta_new + prev) * 0.5;
            eta_new = x * &beta_new;
            mu_new = eta_new.map(|e| family.inverse_link(e));
            dev = family.deviance(y, &mu_new);
        }

        beta = Some(beta_new);
        eta = eta_new;
        mu = mu_new;
        if (dev - dev_old).abs() / (dev.abs() + 0.1) < control.tol {
            converged = true;
            break;
        }
        dev_old = dev;
    }

    let beta = beta.expect("at least one iteration");
    let deviance = family.deviance(y, &mu);
    let w = mu.map(|m| family.variance(m));
    let residuals = y - &mu;
    let dispersion = match family {
        Family::Gaussian => deviance / (n - p) as f64,
        _ => 1.0,
    };
    Ok(FittedModel {
        kind: ModelKind::Glm(family),
        labels: design.labels().to_vec(),
        coefficients: beta,
        fitted: mu,
        score_residuals: residuals.clone(),
        residuals,
        dispersion,
        deviance,
        converged,
        iterations,
        regressors: x.clone(),
        work_weights: Some(w),
        terms: design.terms().to_vec(),
        intercept: design.has_intercept(),
        nls: None,
        source_rows: design.source_rows().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::read_csv_from;
    use crate::fit::fit_ols;
    use crate::formula::{build_design, parse_formula};
    use std::collections::HashMap;

    fn design(text: &str, formula: &str) -> (DesignMatrix, DVector<f64>) {
        let df = read_csv_from(text.as_bytes(), &HashMap::new()).unwrap();
        build_design(&parse_formula(formula).unwrap(), &df).unwrap()
    }

    #[test]
    fn gaussian_matches_ols() {
        let (d, y) = design("x,g,y\n1,a,2.3\n2,b,2.9\n3,a,4.1\n4,b,5.5\n5,a,5.2\n6,b,7.9\n", "y ~ x + g");
        let glm = fit_glm(&d, &y, Family::Gaussian).unwrap();
        let ols = fit_ols(&d, &y).unwrap();
        assert!(glm.converged());
        assert!((glm.coefficients() - ols.coefficients()).amax() <= 1e-10);
        assert!((glm.dispersion() - ols.dispersion()).abs() <= 1e-10);
    }

    #[test]
    fn poisson_constant_rate() {
        let (d, y) = design("y\n3\n3\n3\n3\n", "y ~ 1");
        let m = fit_glm(&d, &y, Family::Poisson).unwrap();
        assert!(m.converged());
        assert!((m.coefficients()[0] - 3f64.ln()).abs() < 1e-8);
    }

    /// Bernoulli log-likelihood maximized by nested golden-section search.
    fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        (a + b) / 2.0
    }

    #[test]
    fn logistic_matches_likelihood_search() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [0.0, 1.0, 0.0, 1.0];
        let loglik = |b0: f64, b1: f64| -> f64 {
            xs.iter()
                .zip(ys.iter())
                .map(|(&x, &y)| {
                    let eta = b0 + b1 * x;
                    y * eta - (1.0 + eta.exp()).ln()
                })
                .sum()
        };
        let profile = |b1: f64| {
            let b0 = golden_max(|b0| loglik(b0, b1), -10.0, 10.0);
            loglik(b0, b1)
        };
        let b1 = golden_max(profile, -10.0, 10.0);
        let b0 = golden_max(|b0| loglik(b0, b1), -10.0, 10.0);

        let (d, y) = design("x,y\n0,0\n1,1\n2,0\n3,1\n", "y ~ x");
        let m = fit_glm(&d, &y, Family::Binomial).unwrap();
        assert!(m.converged());
        assert!((m.coefficients()[0] - b0).abs() < 1e-4, "{} vs {b0}", m.coefficients()[0]);
        assert!((m.coefficients()[1] - b1).abs() < 1e-4, "{} vs {b1}", m.coefficients()[1]);
    }

    #[test]
    fn iteration_cap_flags_non_convergence() {
        let (d, y) = design("x,y\n0,0\n1,1\n2,0\n3,1\n4,1\n", "y ~ x");
        let control = GlmControl { max_iter: 1, tol: 1e-8 };
        let m = fit_glm_with(&d, &y, Family::Binomial, control).unwrap();
        assert!(!m.converged());
        assert_eq!(m.iterations(), 1);
    }

    #[test]
    fn invalid_response_range() {
        let (d, y) = design("x,y\n0,0\n1,2\n2,1\n", "y ~ x");
        assert!(matches!(
            fit_glm(&d, &y, Family::Binomial),
            Err(ResiError::InvalidResponse(_))
        ));
        let (d, y) = design("x,y\n0,0\n1,-2\n2,1\n", "y ~ x");
        assert!(matches!(
            fit_glm(&d, &y, Family::Poisson),
            Err(ResiError::InvalidResponse(_))
        ));
    }
}
