use std::collections::HashMap;
use std::path::PathBuf;

use resi::bootstrap::{bayesian_weights, run_bootstrap, BootMethod, BootSpec};
use resi::datasets::{read_csv, DataFrame};
use resi::fit::{Family, NlsControl, NlsProblem};
use resi::formula::parse_formula;
use resi::pipeline::{ModelSpec, Pipeline, ReducedSpec, ResiOptions};
use resi::ResiError;

fn load(name: &str) -> DataFrame {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name);
    read_csv(path, &HashMap::new()).unwrap()
}

fn lm(formula: &str) -> Pipeline {
    Pipeline::new(
        ModelSpec::Linear(parse_formula(formula).unwrap()),
        ReducedSpec::Default,
        ResiOptions::default(),
    )
    .unwrap()
}

fn spec(nboot: usize, seed: u64) -> BootSpec {
    BootSpec {
        nboot,
        seed,
        alphas: vec![0.05, 0.2],
        store_replicates: true,
        ..BootSpec::default()
    }
}

#[test]
fn same_seed_same_intervals() {
    let df = load("insurance_sample.csv");
    let p = lm("charges ~ age + sex + bmi");
    let (_, a) = run_bootstrap(&p, &df, &spec(40, 11)).unwrap();
    let (_, b) = run_bootstrap(&p, &df, &spec(40, 11)).unwrap();
    let (_, c) = run_bootstrap(&p, &df, &spec(40, 12)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.intervals, c.intervals);
    assert_eq!(a.successes, 40);
    assert_eq!(a.labels.len(), a.intervals.len());
}

#[test]
fn intervals_from_stored_replicates() {
    let df = load("insurance_sample.csv");
    let (_, r) = run_bootstrap(&lm("charges ~ age + bmi"), &df, &spec(50, 3)).unwrap();
    assert_eq!(r.reextract(&[0.2, 0.05]).unwrap(), r.intervals);
    let wider = r.reextract(&[0.01]).unwrap();
    for (w, iv) in wider.iter().zip(&r.intervals) {
        assert!(w[0].lo <= iv[0].lo && iv[0].hi <= w[0].hi);
    }
    assert!(r.reextract(&[1.5]).is_err());
}

#[test]
fn replicate_csv_export() {
    let df = load("insurance_sample.csv");
    let (_, r) = run_bootstrap(&lm("charges ~ age + bmi"), &df, &spec(5, 3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reps.csv");
    r.write_replicates_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), r.labels.join(","));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first, r.replicates.as_ref().unwrap()[0]);
    assert_eq!(text.lines().count(), 6);

    let unstored = BootSpec {
        store_replicates: false,
        ..spec(5, 3)
    };
    let (_, r) = run_bootstrap(&lm("charges ~ age + bmi"), &df, &unstored).unwrap();
    assert!(matches!(r.write_replicates_csv(&path), Err(ResiError::ReplicatesNotStored)));
}

#[test]
fn single_replicate_gives_degenerate_intervals() {
    let df = load("insurance_sample.csv");
    let (_, r) = run_bootstrap(&lm("charges ~ age + bmi"), &df, &spec(1, 5)).unwrap();
    let reps = r.replicates.as_ref().unwrap();
    for (j, ivs) in r.intervals.iter().enumerate() {
        for iv in ivs {
            assert_eq!((iv.lo, iv.hi), (reps[0][j], reps[0][j]));
        }
    }
    assert!(run_bootstrap(&lm("charges ~ age"), &df, &spec(0, 5)).is_err());
}

#[test]
fn bayesian_bootstrap() {
    let df = load("insurance_sample.csv");
    let bayes = BootSpec {
        method: BootMethod::Bayesian,
        ..spec(30, 8)
    };
    let (eval, r) = run_bootstrap(&lm("charges ~ age + bmi"), &df, &bayes).unwrap();
    assert_eq!(r.successes, 30);
    let age = r.labels.iter().position(|l| l == "coef:age").unwrap();
    let point = eval.quantities()[age];
    let iv = r.intervals[age][0];
    assert!(iv.lo < point && point < iv.hi);

    let w = bayesian_weights(8, 0, 200);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let glm = Pipeline::new(
        ModelSpec::Glm(parse_formula("ybin ~ x1 + x2").unwrap(), Family::Binomial),
        ReducedSpec::Default,
        ResiOptions::default(),
    )
    .unwrap();
    let r = run_bootstrap(&glm, &load("glm_synth.csv"), &bayes);
    assert!(matches!(r, Err(ResiError::Unsupported(_))));
}

#[test]
fn glm_nonparametric_bootstrap() {
    let glm = Pipeline::new(
        ModelSpec::Glm(parse_formula("ycount ~ x1 + g").unwrap(), Family::Poisson),
        ReducedSpec::Default,
        ResiOptions::default(),
    )
    .unwrap();
    let (_, r) = run_bootstrap(&glm, &load("glm_synth.csv"), &spec(20, 1)).unwrap();
    assert!(r.successes > 0);
    assert!(r.labels.contains(&"overall".to_string()));
}

fn niering(start: (f64, f64)) -> Pipeline {
    let spec = ModelSpec::Nls {
        problem: NlsProblem::parse("s ~ c*a^z", &["c".to_string(), "z".to_string()]).unwrap(),
        start: vec![("c".to_string(), start.0), ("z".to_string(), start.1)],
        control: NlsControl::default(),
    };
    Pipeline::new(spec, ReducedSpec::Default, ResiOptions::default()).unwrap()
}

#[test]
fn nls_refits_restart_at_estimates() {
    let df = load("niering_synth.csv");
    let p = niering((0.5, 0.1));
    let warm = spec(40, 21);
    let (_, r) = run_bootstrap(&p, &df, &warm).unwrap();
    assert_eq!(r.successes, 40);
    assert_eq!(r.labels, vec!["coef:c", "coef:z", "overall"]);

    // from the user's distant start some refits fail; they are counted and skipped
    let cold = BootSpec {
        restart_at_estimates: false,
        ..warm
    };
    let (_, r) = run_bootstrap(&p, &df, &cold).unwrap();
    assert!(r.successes < r.attempts, "{} of {}", r.successes, r.attempts);
    assert_eq!(r.replicates.as_ref().unwrap().len(), r.successes);
}
