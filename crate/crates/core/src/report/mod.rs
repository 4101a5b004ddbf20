//! Assembled RESI results and their text and JSON renderings.

mod svg;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{run_bootstrap, BootMethod, BootSpec, BootstrapResult, Interval};
use crate::datasets::DataFrame;
use crate::error::{ResiError, Result};
use crate::fit::ModelKind;
use crate::inference::StatKind;
use crate::pipeline::{Evaluation, ModelSpec, Pipeline};

pub use svg::{render_forest_svg, ForestOptions, ForestRow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiBound {
    pub alpha: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub label: String,
    pub estimate: f64,
    pub std_error: f64,
    pub statistic: f64,
    pub stat_kind: StatKind,
    pub df: Option<usize>,
    pub p_value: f64,
    pub resi: f64,
    pub ci: Vec<CiBound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaTableRow {
    pub term: String,
    pub df: usize,
    pub df2: Option<usize>,
    pub statistic: f64,
    pub stat_kind: StatKind,
    pub p_value: f64,
    pub resi: f64,
    pub ci: Vec<CiBound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallRow {
    pub full_formula: String,
    pub reduced_formula: String,
    /// True when the reduced model was not supplied.
    pub reduced_is_default: bool,
    pub full_residual_df: usize,
    pub reduced_residual_df: usize,
    pub statistic: f64,
    pub stat_kind: StatKind,
    pub df: usize,
    pub df2: Option<usize>,
    pub p_value: f64,
    pub resi: f64,
    pub ci: Vec<CiBound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootMeta {
    pub method: BootMethod,
    pub nboot: usize,
    pub successes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResiReport {
    pub model: String,
    pub family: Option<String>,
    pub call: String,
    pub response: String,
    pub n: usize,
    pub vcov: String,
    pub robust: bool,
    pub unbiased: bool,
    pub anova_type: Option<String>,
    /// Empty for point-estimate reports.
    pub alphas: Vec<f64>,
    pub coefficients: Vec<CoefficientRow>,
    pub anova: Vec<AnovaTableRow>,
    pub overall: OverallRow,
    pub boot: Option<BootMeta>,
    pub notes: Vec<String>,
}

fn call_string(pipeline: &Pipeline) -> String {
    let spec = pipeline.full();
    match spec {
        ModelSpec::Linear(f) => format!("lm(formula = {f})"),
        ModelSpec::Glm(f, family) => format!("glm(formula = {f}, family = {})", family.name()),
        ModelSpec::Nls { problem, start, .. } => {
            let start: Vec<String> = start.iter().map(|(k, v)| format!("{k} = {v}")).collect();
            format!("nls(formula = {}, start = list({}))", problem.formula_string(), start.join(", "))
        }
    }
}

fn response_of(spec: &ModelSpec) -> String {
    match spec {
        ModelSpec::Linear(f) | ModelSpec::Glm(f, _) => f.response().to_string(),
        ModelSpec::Nls { problem, .. } => problem.response.clone(),
    }
}

fn build(pipeline: &Pipeline, eval: &Evaluation, reduced_is_default: bool) -> ResiReport {
    let kind = eval.model.kind();
    let coefficients = eval
        .coefficients
        .iter()
        .map(|c| CoefficientRow {
            label: c.test.label.clone(),
            estimate: c.test.estimate,
            std_error: c.test.std_error,
            statistic: c.test.test.statistic,
            stat_kind: c.test.test.kind,
            df: c.test.test.df2,
            p_value: c.test.test.p_value,
            resi: c.resi,
            ci: Vec::new(),
        })
        .collect();
    let anova = eval
        .anova
        .iter()
        .map(|a| AnovaTableRow {
            term: a.row.term.clone(),
            df: a.row.test.df1,
            df2: a.row.test.df2,
            statistic: a.row.test.statistic,
            stat_kind: a.row.test.kind,
            p_value: a.row.test.p_value,
            resi: a.resi,
            ci: Vec::new(),
        })
        .collect();
    let o = &eval.overall;
    let overall = OverallRow {
        full_formula: o.full_formula.clone(),
        reduced_formula: o.reduced_formula.clone(),
        reduced_is_default,
        full_residual_df: o.full_df,
        reduced_residual_df: o.reduced_df,
        statistic: o.test.statistic,
        stat_kind: o.test.kind,
        df: o.test.df1,
        df2: o.test.df2,
        p_value: o.test.p_value,
        resi: o.resi,
        ci: Vec::new(),
    };
    let mut notes = Vec::new();
    if eval.vcov.robust() {
        notes.push(format!(
            "The RESI was calculated using a robust covariance estimator ({}).",
            eval.vcov.variant
        ));
    } else {
        notes.push("The RESI was calculated using the naive (model-based) covariance estimator, which is not robust.".into());
    }
    if kind == ModelKind::Nls && reduced_is_default {
        notes.push("The overall test compares the model with every parameter set to zero.".into());
    }
    ResiReport {
        model: kind.name().to_string(),
        family: match kind {
            ModelKind::Glm(f) => Some(f.name().to_string()),
            _ => None,
        },
        call: call_string(pipeline),
        response: response_of(pipeline.full()),
        n: eval.n,
        vcov: eval.vcov.variant.to_string(),
        robust: eval.vcov.robust(),
        unbiased: pipeline.options().unbiased,
        anova_type: (!eval.anova.is_empty()).then(|| pipeline.options().anova_type.to_string()),
        alphas: Vec::new(),
        coefficients,
        anova,
        overall,
        boot: None,
        notes,
    }
}

/// Point estimates without intervals.
pub fn resi_pe(pipeline: &Pipeline, data: &DataFrame, reduced_is_default: bool) -> Result<ResiReport> {
    let eval = pipeline.evaluate(data, None)?;
    Ok(build(pipeline, &eval, reduced_is_default))
}

/// Point estimates with bootstrap intervals.
pub fn resi(
    pipeline: &Pipeline,
    data: &DataFrame,
    reduced_is_default: bool,
    spec: &BootSpec,
) -> Result<(ResiReport, BootstrapResult)> {
    let (eval, boot) = run_bootstrap(pipeline, data, spec)?;
    let mut report = build(pipeline, &eval, reduced_is_default);
    report.apply_intervals(&boot.alphas, &boot.intervals)?;
    report.notes.push(match boot.method {
        BootMethod::Nonparametric => format!(
            "Confidence intervals (CIs) constructed using {} non-parametric bootstraps.",
            boot.attempts
        ),
        BootMethod::Bayesian => format!("Credible intervals constructed using {} Bayesian bootstraps.", boot.attempts),
    });
    if boot.successes < boot.attempts {
        report.notes.push(format!(
            "The bootstrap was successful in {} out of {} attempts.",
            boot.successes, boot.attempts
        ));
    }
    report.boot = Some(BootMeta {
        method: boot.method,
        nboot: boot.attempts,
        successes: boot.successes,
        seed: spec.seed,
    });
    Ok((report, boot))
}

impl ResiReport {
    /// Replaces every row's intervals; `intervals[quantity][alpha]` in
    /// coefficient, ANOVA, overall order.
    pub fn apply_intervals(&mut self, alphas: &[f64], intervals: &[Vec<Interval>]) -> Result<()> {
        let k = self.coefficients.len() + self.anova.len() + 1;
        if intervals.len() != k || intervals.iter().any(|row| row.len() != alphas.len()) {
            return Err(ResiError::InvalidArgument("interval table does not match the report".into()));
        }
        let to_ci = |row: &Vec<Interval>| -> Vec<CiBound> {
            alphas
                .iter()
                .zip(row)
                .map(|(&alpha, iv)| CiBound { alpha, lo: iv.lo, hi: iv.hi })
                .collect()
        };
        let mut it = intervals.iter();
        for c in &mut self.coefficients {
            c.ci = to_ci(it.next().expect("length checked"));
        }
        for a in &mut self.anova {
            a.ci = to_ci(it.next().expect("length checked"));
        }
        self.overall.ci = to_ci(it.next().expect("length checked"));
        self.alphas = alphas.to_vec();
        Ok(())
    }
}

pub fn render_json(report: &ResiReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

fn trim_number(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn ci_headers(alphas: &[f64]) -> Vec<String> {
    let mut lo: Vec<String> = alphas.iter().map(|a| format!("{}%", trim_number(50.0 * a))).collect();
    let hi: Vec<String> = alphas.iter().map(|a| format!("{}%", trim_number(100.0 - 50.0 * a))).collect();
    lo.extend(hi);
    lo
}

fn ci_cells(ci: &[CiBound]) -> Vec<String> {
    let mut out: Vec<String> = ci.iter().map(|c| format!("{:.4}", c.lo)).collect();
    out.extend(ci.iter().map(|c| format!("{:.4}", c.hi)));
    out
}

fn p_cell(p: f64) -> String {
    if p < 1e-4 {
        "<0.0001".to_string()
    } else {
        format!("{p:.4}")
    }
}

/// Right-aligned table with a left-aligned first column.
fn table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        let mut s = String::new();
        for (j, c) in cells.iter().enumerate().take(cols) {
            if j == 0 {
                let _ = write!(s, "{c:<w$}", w = widths[0]);
            } else {
                let _ = write!(s, "  {c:>w$}", w = widths[j]);
            }
        }
        s.trim_end().to_string()
    };
    let _ = writeln!(out, "{}", line(header));
    for r in rows {
        let _ = writeln!(out, "{}", line(r));
    }
}

fn stat_names(kind: StatKind) -> (&'static str, &'static str) {
    match kind {
        StatKind::Z => ("z value", "Pr(>|z|)"),
        StatKind::T => ("t value", "Pr(>|t|)"),
        StatKind::ChiSq => ("Chisq", "Pr(>Chisq)"),
        StatKind::F => ("F", "Pr(>F)"),
    }
}

pub fn render_text(report: &ResiReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Analysis of effect sizes based on RESI:");
    if !report.alphas.is_empty() {
        let levels: Vec<String> = report.alphas.iter().map(|a| trim_number(*a)).collect();
        let _ = writeln!(out, "Confidence level = {}", levels.join(" "));
    }
    if report.overall.reduced_is_default {
        let _ = writeln!(out, "Call: {}", report.call);
    } else {
        let _ = writeln!(out, "Full Model: {}", report.call);
        let _ = writeln!(out, "Reduced Model: {}", report.overall.reduced_formula);
    }
    let _ = writeln!(out, "Observations: {}", report.n);
    let cih = ci_headers(&report.alphas);

    if !report.coefficients.is_empty() {
        let _ = writeln!(out, "\nCoefficient Table");
        let (stat, p) = stat_names(report.coefficients[0].stat_kind);
        let mut header: Vec<String> = ["", "Estimate", "Std. Error", stat, p, "RESI"].iter().map(|s| s.to_string()).collect();
        header.extend(cih.iter().cloned());
        let rows: Vec<Vec<String>> = report
            .coefficients
            .iter()
            .map(|c| {
                let mut r = vec![
                    c.label.clone(),
                    format!("{:.4}", c.estimate),
                    format!("{:.4}", c.std_error),
                    format!("{:.4}", c.statistic),
                    p_cell(c.p_value),
                    format!("{:.4}", c.resi),
                ];
                r.extend(ci_cells(&c.ci));
                r
            })
            .collect();
        table(&mut out, &header, &rows);
    }

    if let (Some(kind), false) = (&report.anova_type, report.anova.is_empty()) {
        let _ = writeln!(out, "\nAnalysis of Deviance Table (Type {kind} tests)");
        let _ = writeln!(out, "Response: {}", report.response);
        let (stat, p) = stat_names(report.anova[0].stat_kind);
        let mut header: Vec<String> = ["", "Df", stat, p, "RESI"].iter().map(|s| s.to_string()).collect();
        header.extend(cih.iter().cloned());
        let rows: Vec<Vec<String>> = report
            .anova
            .iter()
            .map(|a| {
                let mut r = vec![
                    a.term.clone(),
                    a.df.to_string(),
                    format!("{:.4}", a.statistic),
                    p_cell(a.p_value),
                    format!("{:.4}", a.resi),
                ];
                r.extend(ci_cells(&a.ci));
                r
            })
            .collect();
        table(&mut out, &header, &rows);
    }

    let o = &report.overall;
    if o.reduced_is_default {
        let _ = writeln!(out, "\nOverall RESI comparing model to intercept-only model:");
    } else {
        let _ = writeln!(out, "\nOverall RESI comparing full model to reduced model:");
    }
    let (stat, p) = stat_names(o.stat_kind);
    let mut header: Vec<String> = ["", "Res.Df", "Df", stat, p, "RESI"].iter().map(|s| s.to_string()).collect();
    header.extend(cih.iter().cloned());
    let mut row = vec![
        "Wald".to_string(),
        o.full_residual_df.to_string(),
        o.df.to_string(),
        format!("{:.4}", o.statistic),
        p_cell(o.p_value),
        format!("{:.4}", o.resi),
    ];
    row.extend(ci_cells(&o.ci));
    table(&mut out, &header, &[row]);

    let _ = writeln!(out, "\nNotes:");
    for (i, note) in report.notes.iter().enumerate() {
        let _ = writeln!(out, "{}. {note}", i + 1);
    }
    out
}
