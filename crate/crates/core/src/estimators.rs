//! Conversions from test statistics to the robust effect size index `S`.
//!
//! Chi-square and F sources yield a nonnegative `S` truncated at zero. z and
//! t sources yield a signed `S`; the plain forms are unbiased, the `_alt`
//! forms are truncated and agree in absolute value with the 1-df chi-square
//! and F conversions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distributions::ln_gamma;
use crate::error::{ResiError, Result};

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(ResiError::InvalidArgument("n must be at least 1".into()));
    }
    Ok(())
}

fn check_stat(x: f64, what: &str) -> Result<()> {
    if !x.is_finite() {
        return Err(ResiError::InvalidArgument(format!("{what} must be finite")));
    }
    Ok(())
}

/// `sqrt(max(0, (T² − m₁)/n))`.
pub fn chisq2s(t2: f64, df: usize, n: usize) -> Result<f64> {
    check_n(n)?;
    check_stat(t2, "chi-square statistic")?;
    if t2 < 0.0 {
        return Err(ResiError::InvalidArgument("chi-square statistic is negative".into()));
    }
    if df == 0 {
        return Err(ResiError::InvalidArgument("df must be at least 1".into()));
    }
    Ok(((t2 - df as f64) / n as f64).max(0.0).sqrt())
}

/// `sqrt(max(0, m₁ (F (n−m−2)/(n−m) − 1) / n))` with `rdf = n − m`.
pub fn f2s(f: f64, df1: usize, rdf: usize, n: usize) -> Result<f64> {
    check_n(n)?;
    check_stat(f, "F statistic")?;
    if f < 0.0 {
        return Err(ResiError::InvalidArgument("F statistic is negative".into()));
    }
    if df1 == 0 {
        return Err(ResiError::InvalidArgument("df1 must be at least 1".into()));
    }
    if rdf <= 2 {
        return Err(ResiError::InvalidArgument(format!("residual df must exceed 2, got {rdf}")));
    }
    let r = rdf as f64;
    let s2 = df1 as f64 * (f * (r - 2.0) / r - 1.0) / n as f64;
    Ok(s2.max(0.0).sqrt())
}

/// `z / √n`.
pub fn z2s(z: f64, n: usize) -> Result<f64> {
    check_n(n)?;
    check_stat(z, "z statistic")?;
    Ok(z / (n as f64).sqrt())
}

/// `sgn(z) sqrt(max(0, (z² − 1)/n))`.
pub fn z2s_alt(z: f64, n: usize) -> Result<f64> {
    check_n(n)?;
    check_stat(z, "z statistic")?;
    Ok(z.signum() * chisq2s(z * z, 1, n)?)
}

/// Unbiased t conversion `t √2 Γ((n−m)/2) / (√(n(n−m)) Γ((n−m−1)/2))`.
pub fn t2s(t: f64, n: usize, m: usize) -> Result<f64> {
    check_n(n)?;
    check_stat(t, "t statistic")?;
    if n <= m + 1 {
        return Err(ResiError::InvalidArgument(format!("n − m must exceed 1, got n = {n}, m = {m}")));
    }
    let r = (n - m) as f64;
    let log_ratio = ln_gamma(r / 2.0) - ln_gamma((r - 1.0) / 2.0);
    Ok(t * (2.0f64).sqrt() * log_ratio.exp() / (n as f64 * r).sqrt())
}

/// `sgn(t) f2s(t², 1, n − m, n)`.
pub fn t2s_alt(t: f64, n: usize, m: usize) -> Result<f64> {
    check_stat(t, "t statistic")?;
    if n <= m + 2 {
        return Err(ResiError::InvalidArgument(format!("n − m must exceed 2, got n = {n}, m = {m}")));
    }
    Ok(t.signum() * f2s(t * t, 1, n - m, n)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpretation {
    NoneToSmall,
    SmallToMedium,
    MediumToLarge,
    Large,
}

impl Interpretation {
    pub fn label(&self) -> &'static str {
        match self {
            Interpretation::NoneToSmall => "none-to-small",
            Interpretation::SmallToMedium => "small-to-medium",
            Interpretation::MediumToLarge => "medium-to-large",
            Interpretation::Large => "large",
        }
    }
}

impl fmt::Display for Interpretation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Effect-size bracket of `|s|`; upper bounds are inclusive.
pub fn interpret(s: f64) -> Interpretation {
    let a = s.abs();
    if a <= 0.1 {
        Interpretation::NoneToSmall
    } else if a <= 0.25 {
        Interpretation::SmallToMedium
    } else if a <= 0.4 {
        Interpretation::MediumToLarge
    } else {
        Interpretation::Large
    }
}

/// Statistic family accepted by [`convert_statistic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatSource {
    ChiSq,
    F,
    Z,
    ZAlt,
    T,
    TAlt,
}

impl FromStr for StatSource {
    type Err = ResiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chisq2S" => Ok(StatSource::ChiSq),
            "f2S" => Ok(StatSource::F),
            "z2S" => Ok(StatSource::Z),
            "z2S-alt" => Ok(StatSource::ZAlt),
            "t2S" => Ok(StatSource::T),
            "t2S-alt" => Ok(StatSource::TAlt),
            other => Err(ResiError::InvalidArgument(format!("unknown statistic conversion `{other}`"))),
        }
    }
}

/// Arguments of a direct statistic conversion.
#[derive(Debug, Clone, Copy)]
pub struct StatInput {
    pub value: f64,
    pub df: Option<usize>,
    pub rdf: Option<usize>,
    pub n: usize,
    pub m: Option<usize>,
}

fn required(v: Option<usize>, name: &str) -> Result<usize> {
    v.ok_or_else(|| ResiError::InvalidArgument(format!("`{name}` is required for this conversion")))
}

pub fn convert_statistic(source: StatSource, input: &StatInput) -> Result<f64> {
    let v = input.value;
    let n = input.n;
    match source {
        StatSource::ChiSq => chisq2s(v, required(input.df, "df")?, n),
        StatSource::F => f2s(v, required(input.df, "df")?, required(input.rdf, "rdf")?, n),
        StatSource::Z => z2s(v, n),
        StatSource::ZAlt => z2s_alt(v, n),
        StatSource::T => t2s(v, n, required(input.m, "m")?),
        StatSource::TAlt => t2s_alt(v, n, required(input.m, "m")?),
    }
}
