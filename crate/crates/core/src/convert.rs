//! Conversions between `S` and Cohen's d, Cohen's f² and R².
//!
//! Cohen's d is parameterized by the proportion `π` of observations in one of
//! the two groups; `S = d sqrt(π(1−π))`.

use std::str::FromStr;

use crate::error::{ResiError, Result};

fn check_pi(pi: f64) -> Result<()> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(ResiError::InvalidArgument(format!("group proportion must lie in (0, 1), got {pi}")));
    }
    Ok(())
}

fn check_finite(x: f64, what: &str) -> Result<()> {
    if !x.is_finite() {
        return Err(ResiError::InvalidArgument(format!("{what} must be finite")));
    }
    Ok(())
}

pub fn d2s(d: f64, pi: f64) -> Result<f64> {
    check_pi(pi)?;
    check_finite(d, "d")?;
    Ok(d * (pi * (1.0 - pi)).sqrt())
}

pub fn s2d(s: f64, pi: f64) -> Result<f64> {
    check_pi(pi)?;
    check_finite(s, "S")?;
    Ok(s / (pi * (1.0 - pi)).sqrt())
}

pub fn fsq2s(fsq: f64) -> Result<f64> {
    check_finite(fsq, "f²")?;
    if fsq < 0.0 {
        return Err(ResiError::InvalidArgument("f² must be nonnegative".into()));
    }
    Ok(fsq.sqrt())
}

/// Inverse of [`fsq2s`] on `S ≥ 0`.
pub fn s2fsq(s: f64) -> Result<f64> {
    check_finite(s, "S")?;
    if s < 0.0 {
        return Err(ResiError::InvalidArgument("S must be nonnegative for f²".into()));
    }
    Ok(s * s)
}

pub fn rsq2s(rsq: f64) -> Result<f64> {
    check_finite(rsq, "R²")?;
    if !(0.0..1.0).contains(&rsq) {
        return Err(ResiError::InvalidArgument(format!("R² must lie in [0, 1), got {rsq}")));
    }
    Ok((rsq / (1.0 - rsq)).sqrt())
}

/// Inverse of [`rsq2s`] on `S ≥ 0`.
pub fn s2rsq(s: f64) -> Result<f64> {
    check_finite(s, "S")?;
    if s < 0.0 {
        return Err(ResiError::InvalidArgument("S must be nonnegative for R²".into()));
    }
    Ok(s * s / (1.0 + s * s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectScale {
    S,
    D,
    Fsq,
    Rsq,
}

impl FromStr for EffectScale {
    type Err = ResiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S" | "s" => Ok(EffectScale::S),
            "d" => Ok(EffectScale::D),
            "fsq" => Ok(EffectScale::Fsq),
            "rsq" => Ok(EffectScale::Rsq),
            other => Err(ResiError::InvalidArgument(format!("unknown effect size scale `{other}`"))),
        }
    }
}

/// Converts `value` between scales through `S`. `pi` is needed only for d.
pub fn convert(from: EffectScale, to: EffectScale, value: f64, pi: Option<f64>) -> Result<f64> {
    let pi = || pi.ok_or_else(|| ResiError::InvalidArgument("Cohen's d needs a group proportion".into()));
    let s = match from {
        EffectScale::S => {
            check_finite(value, "S")?;
            value
        }
        EffectScale::D => d2s(value, pi()?)?,
        EffectScale::Fsq => fsq2s(value)?,
        EffectScale::Rsq => rsq2s(value)?,
    };
    match to {
        EffectScale::S => Ok(s),
        EffectScale::D => s2d(s, pi()?),
        EffectScale::Fsq => s2fsq(s),
        EffectScale::Rsq => s2rsq(s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cohen_thresholds_at_equal_groups() {
        for (d, s) in [(0.2, 0.1), (0.5, 0.25), (0.8, 0.4)] {
            assert!((d2s(d, 0.5).unwrap() - s).abs() < 1e-15);
        }
    }

    #[test]
    fn rsq_composition() {
        assert!((rsq2s(0.2).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(rsq2s(0.0).unwrap(), 0.0);
        assert_eq!(fsq2s(0.0).unwrap(), 0.0);
    }

    #[test]
    fn domain_errors() {
        assert!(d2s(1.0, 0.0).is_err());
        assert!(d2s(1.0, 1.0).is_err());
        assert!(fsq2s(-0.1).is_err());
        assert!(rsq2s(1.0).is_err());
        assert!(convert(EffectScale::D, EffectScale::S, 0.5, None).is_err());
    }

    #[test]
    fn chained_conversion() {
        let v = convert(EffectScale::D, EffectScale::Rsq, 0.5, Some(0.5)).unwrap();
        assert!((v - 0.0625 / 1.0625).abs() < 1e-15);
    }
}
