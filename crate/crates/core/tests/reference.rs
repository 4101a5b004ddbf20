//! Agreement with independently computed fits on the bundled synthetic data
//! (statsmodels, scipy and numpy results frozen in `oracles/reference.json`).

use std::collections::HashMap;
use std::path::PathBuf;

use resi::covariance::{vcov, vcov_naive, VcovKind};
use resi::datasets::{read_csv, DataFrame};
use resi::fit::{fit_glm, fit_nls, fit_ols, Family, NlsControl, NlsProblem};
use resi::formula::{build_design, parse_formula};
use resi::inference::{anova_table, AnovaType};
use resi::pipeline::{ModelSpec, Pipeline, ReducedSpec, ResiOptions};
use serde_json::Value;

fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn load(name: &str) -> DataFrame {
    read_csv(data_path(name), &HashMap::new()).unwrap()
}

fn reference() -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/oracles/reference.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn vec_of(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn assert_rel(got: f64, want: f64, tol: f64, what: &str) {
    let scale = want.abs().max(1e-12);
    assert!(
        (got - want).abs() <= tol * scale,
        "{what}: got {got}, want {want}"
    );
}

fn assert_all_rel(got: &[f64], want: &[f64], tol: f64, what: &str) {
    assert_eq!(got.len(), want.len(), "{what}: length");
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        assert_rel(*g, *w, tol, &format!("{what}[{i}]"));
    }
}

#[test]
fn insurance_ols_fit_and_covariances() {
    let r = &reference()["insurance"];
    let df = load("insurance_synth.csv");
    let (d, y) = build_design(&parse_formula("charges ~ region * age + sex + bmi").unwrap(), &df).unwrap();
    let m = fit_ols(&d, &y).unwrap();
    assert_eq!(m.n() as u64, r["n"].as_u64().unwrap());
    let labels: Vec<String> = r["labels"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    assert_eq!(m.labels(), labels.as_slice());
    assert_all_rel(m.coefficients().as_slice(), &vec_of(&r["coef"]), 1e-8, "coef");
    assert_rel(m.dispersion(), r["sigma2"].as_f64().unwrap(), 1e-9, "sigma2");
    let naive = vcov_naive(&m).unwrap().std_errors();
    assert_all_rel(naive.as_slice(), &vec_of(&r["se_naive"]), 1e-8, "se_naive");
    for (kind, key) in [
        (VcovKind::HC0, "se_HC0"),
        (VcovKind::HC1, "se_HC1"),
        (VcovKind::HC2, "se_HC2"),
        (VcovKind::HC3, "se_HC3"),
    ] {
        let se = vcov(&m, kind).unwrap().std_errors();
        assert_all_rel(se.as_slice(), &vec_of(&r[key]), 1e-8, key);
    }
}

#[test]
fn insurance_anova_tables() {
    let r = &reference()["insurance"];
    let df = load("insurance_synth.csv");
    let (d, y) = build_design(&parse_formula("charges ~ region * age + sex + bmi").unwrap(), &df).unwrap();
    let m = fit_ols(&d, &y).unwrap();
    let hc3 = vcov(&m, VcovKind::HC3).unwrap();
    let hc0 = vcov(&m, VcovKind::HC0).unwrap();
    let t2 = anova_table(&m, &hc3, AnovaType::II).unwrap();
    assert_eq!(t2.len(), 5);
    for row in &t2 {
        let want = r["type2_F_HC3"][&row.term].as_f64().unwrap();
        assert_rel(row.test.statistic, want, 1e-8, &format!("type II {}", row.term));
    }
    let t3 = anova_table(&m, &hc0, AnovaType::III).unwrap();
    assert_eq!(t3.len(), 6);
    for row in &t3 {
        let want = r["type3_F_HC0"][&row.term].as_f64().unwrap();
        assert_rel(row.test.statistic, want, 1e-7, &format!("type III {}", row.term));
    }
}

#[test]
fn insurance_pipeline_resi_values() {
    let r = &reference()["insurance"];
    let df = load("insurance_synth.csv");
    let spec = ModelSpec::Linear(parse_formula("charges ~ region * age + sex + bmi").unwrap());
    let eval = Pipeline::new(spec, ReducedSpec::Default, ResiOptions::default())
        .unwrap()
        .evaluate(&df, None)
        .unwrap();
    let coef: Vec<f64> = eval.coefficients.iter().map(|c| c.resi).collect();
    assert_all_rel(&coef, &vec_of(&r["resi_coef_HC3"]), 1e-8, "coefficient S");
    let t: Vec<f64> = eval.coefficients.iter().map(|c| c.test.test.statistic).collect();
    assert_all_rel(&t, &vec_of(&r["t_HC3"]), 1e-8, "t");
    for a in &eval.anova {
        let want = r["type2_resi_HC3"][&a.row.term].as_f64().unwrap();
        assert!((a.resi - want).abs() < 1e-9, "anova S {}: {} vs {want}", a.row.term, a.resi);
    }
    assert_rel(eval.overall.test.statistic, r["overall_F_HC3"].as_f64().unwrap(), 1e-8, "overall F");
    assert_eq!(eval.overall.test.df1, 9);
    assert_eq!(eval.overall.test.df2, Some(388));
    assert_rel(eval.overall.resi, r["overall_resi_HC3"].as_f64().unwrap(), 1e-8, "overall S");
}

#[test]
fn niering_nls_fit_and_sandwich() {
    let r = &reference()["niering"];
    let df = load("niering_synth.csv");
    let params = vec!["c".to_string(), "z".to_string()];
    let prob = NlsProblem::parse("s ~ c*a^z", &params).unwrap();
    let start = vec![("c".to_string(), 3.0), ("z".to_string(), 0.25)];
    let m = fit_nls(&prob, &df, &start, &NlsControl::default()).unwrap();
    assert_all_rel(m.coefficients().as_slice(), &vec_of(&r["coef"]), 1e-5, "coef");
    assert_rel(m.deviance(), r["rss"].as_f64().unwrap(), 1e-8, "rss");
    let naive = vcov_naive(&m).unwrap().std_errors();
    assert_all_rel(naive.as_slice(), &vec_of(&r["se_naive"]), 1e-4, "se_naive");
    let sand = vcov(&m, VcovKind::NlsSandwich).unwrap().std_errors();
    assert_all_rel(sand.as_slice(), &vec_of(&r["se_sandwich"]), 1e-4, "se_sandwich");

    let spec = ModelSpec::Nls {
        problem: prob,
        start,
        control: NlsControl::default(),
    };
    let eval = Pipeline::new(spec, ReducedSpec::Default, ResiOptions::default())
        .unwrap()
        .evaluate(&df, None)
        .unwrap();
    assert!(eval.anova.is_empty());
    let t: Vec<f64> = eval.coefficients.iter().map(|c| c.test.test.statistic).collect();
    assert_all_rel(&t, &vec_of(&r["t"]), 1e-4, "t");
    let s: Vec<f64> = eval.coefficients.iter().map(|c| c.resi).collect();
    assert_all_rel(&s, &vec_of(&r["resi_coef"]), 1e-4, "coefficient S");
    assert_eq!(eval.overall.test.df1, 2);
    assert_rel(eval.overall.test.statistic, r["overall_chisq"].as_f64().unwrap(), 1e-4, "overall chisq");
    assert_rel(eval.overall.resi, r["overall_resi"].as_f64().unwrap(), 1e-4, "overall S");
}

#[test]
fn glm_fits_match_statsmodels() {
    let refs = reference();
    let df = load("glm_synth.csv");
    for (family, key, response) in [(Family::Binomial, "binomial", "ybin"), (Family::Poisson, "poisson", "ycount")] {
        let r = &refs["glm"][key];
        let formula = parse_formula(&format!("{response} ~ x1 + g + x2")).unwrap();
        let (d, y) = build_design(&formula, &df).unwrap();
        let m = fit_glm(&d, &y, family).unwrap();
        assert!(m.converged());
        assert_all_rel(m.coefficients().as_slice(), &vec_of(&r["coef"]), 1e-7, key);
        assert_rel(m.deviance(), r["deviance"].as_f64().unwrap(), 1e-9, "deviance");
        let naive = vcov_naive(&m).unwrap().std_errors();
        assert_all_rel(naive.as_slice(), &vec_of(&r["se_naive"]), 1e-6, "se_naive");
        let hc0 = vcov(&m, VcovKind::HC0).unwrap().std_errors();
        assert_all_rel(hc0.as_slice(), &vec_of(&r["se_HC0"]), 1e-6, "se_HC0");
        let hc3 = vcov(&m, VcovKind::HC3).unwrap().std_errors();
        assert_all_rel(hc3.as_slice(), &vec_of(&r["se_HC3"]), 1e-6, "se_HC3");

        let eval = Pipeline::new(ModelSpec::Glm(formula, family), ReducedSpec::Default, ResiOptions::default())
            .unwrap()
            .evaluate(&df, None)
            .unwrap();
        let z: Vec<f64> = eval.coefficients.iter().map(|c| c.test.test.statistic).collect();
        assert_all_rel(&z, &vec_of(&r["z_HC3"]), 1e-6, "z");
        let s: Vec<f64> = eval.coefficients.iter().map(|c| c.resi).collect();
        assert_all_rel(&s, &vec_of(&r["resi_coef_HC3"]), 1e-6, "coefficient S");
        for a in &eval.anova {
            let want = r["anova_chisq_HC3"][&a.row.term].as_f64().unwrap();
            assert_rel(a.row.test.statistic, want, 1e-6, &format!("{key} anova {}", a.row.term));
        }
        assert_rel(eval.overall.test.statistic, r["overall_chisq_HC3"].as_f64().unwrap(), 1e-6, "overall");
        assert_rel(eval.overall.resi, r["overall_resi_HC3"].as_f64().unwrap(), 1e-6, "overall S");
    }
}
