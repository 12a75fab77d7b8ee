mod common;

use common::random_matrix;
use netrecon::contagion::{
    compare_methods, default_curve, default_curve_excluding, furfine_cascade, CapitalVector, CompareOptions,
    DefaultCurve, Method,
};
use netrecon::netcore::LiabilityMatrix;
use proptest::prelude::*;

fn chain() -> (LiabilityMatrix, CapitalVector) {
    // Bank 1 lent 1.0 to bank 0, bank 2 lent 1.0 to bank 1.
    let l = LiabilityMatrix::from_rows(&[
        vec![0.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
    ])
    .unwrap();
    (l, CapitalVector::constant(3, 0.5).unwrap())
}

#[test]
fn chain_cascade_by_hand() {
    let (l, c) = chain();
    let r = furfine_cascade(&l, &c, 0.4, 0).unwrap();
    assert_eq!(r.rounds, vec![vec![0]]);
    let r = furfine_cascade(&l, &c, 0.6, 0).unwrap();
    assert_eq!(r.rounds, vec![vec![0], vec![1], vec![2]]);
    assert_eq!(r.default_fraction, 1.0);
    assert!(r.survivors.is_empty());
}

#[test]
fn loss_equal_to_capital_does_not_default() {
    let (l, c) = chain();
    let r = furfine_cascade(&l, &c, 0.5, 0).unwrap();
    assert_eq!(r.rounds.len(), 1);
}

#[test]
fn invalid_inputs_are_rejected() {
    let (l, c) = chain();
    assert!(furfine_cascade(&l, &c, 1.5, 0).is_err());
    assert!(furfine_cascade(&l, &c, 0.5, 3).is_err());
    assert!(furfine_cascade(&l, &CapitalVector::constant(2, 1.0).unwrap(), 0.5, 0).is_err());
    assert!(CapitalVector::new(vec![-1.0]).is_err());
    assert!(default_curve(&l, &c, &[0.5, 0.1]).is_err());
}

#[test]
fn excluded_bank_neither_triggers_nor_counts() {
    let (l, c) = chain();
    let curve = default_curve_excluding(&l, &c, &[1.0], Some(0)).unwrap();
    assert_eq!(curve.per_trigger[0].len(), 2);
    // Trigger 1 takes down 2; trigger 2 alone.
    assert!((curve.mean_fraction[0] - 0.75).abs() < 1e-12);
}

#[test]
fn curve_csv_format() {
    let (l, c) = chain();
    let curve = default_curve(&l, &c, &[0.0, 1.0]).unwrap();
    let mut buf = Vec::new();
    curve.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "alpha,mean_fraction,stderr,method");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].ends_with(",true"));
}

#[test]
fn averaging_curves() {
    let a = DefaultCurve {
        method: "x".into(),
        alphas: vec![0.0, 1.0],
        mean_fraction: vec![0.2, 0.4],
        stderr: vec![0.0, 0.0],
        per_trigger: Vec::new(),
    };
    let mut b = a.clone();
    b.mean_fraction = vec![0.4, 0.8];
    let m = DefaultCurve::average("y", &[a, b]).unwrap();
    assert!((m.mean_fraction[0] - 0.3).abs() < 1e-15 && (m.mean_fraction[1] - 0.6).abs() < 1e-15);
    assert_eq!(m.method, "y");
}

#[test]
fn method_names_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
    }
    assert!("dense".parse::<Method>().is_err());
}

#[test]
fn comparison_on_a_small_network() {
    let l = random_matrix(6, 0.6, 0.1, 0.9, 4);
    let c = CapitalVector::constant(6, 0.3).unwrap();
    let alphas = [0.0, 0.5, 1.0];
    let opts = CompareOptions {
        support_samples: 2,
        lambda_max_trials: 2,
        ..CompareOptions::default()
    };
    let r = compare_methods(&l, &c, &alphas, &Method::ALL, &opts).unwrap();
    assert_eq!(r.outcomes.len(), 5);
    for o in &r.outcomes {
        assert!(o.error.is_none(), "{}: {:?}", o.method, o.error);
    }
    let truth = r.curve(Method::True).unwrap();
    assert_eq!(truth.mean_fraction[0], 1.0 / 6.0);
    let sparsest = r.outcome(Method::MeOnSparsestSupport).unwrap().sparsity.unwrap();
    assert!(sparsest >= r.true_sparsity - 1e-12 || r.unknown_count == 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn default_fraction_is_monotone_in_alpha(seed in any::<u64>(), n in 2usize..10, cap in 0.0f64..1.0) {
        let l = random_matrix(n, 0.6, 0.0, 1.0, seed);
        let c = CapitalVector::constant(n, cap).unwrap();
        let alphas: Vec<f64> = (0..11).map(|k| k as f64 / 10.0).collect();
        let curve = default_curve(&l, &c, &alphas).unwrap();
        for w in curve.mean_fraction.windows(2) {
            prop_assert!(w[0] <= w[1] + 1e-15);
        }
        prop_assert!((curve.mean_fraction[0] - 1.0 / n as f64).abs() < 1e-15);
    }

    #[test]
    fn cascade_terminates_within_n_rounds(seed in any::<u64>(), n in 2usize..12, alpha in 0.0f64..=1.0) {
        let l = random_matrix(n, 0.8, 0.0, 1.0, seed);
        let c = CapitalVector::constant(n, 0.05).unwrap();
        for z in 0..n {
            let r = furfine_cascade(&l, &c, alpha, z).unwrap();
            prop_assert!(r.rounds.len() <= n);
            prop_assert!(r.rounds.iter().all(|d| !d.is_empty()));
            prop_assert_eq!(r.defaulted().len() + r.survivors.len(), n);
        }
    }

    #[test]
    fn cascade_is_scale_covariant(seed in any::<u64>(), n in 2usize..10, s in 0.01f64..100.0) {
        let l = random_matrix(n, 0.6, 0.0, 1.0, seed);
        let c = CapitalVector::constant(n, 0.2).unwrap();
        let (ls, cs) = (l.scaled(s), c.scaled(s).unwrap());
        for z in 0..n {
            let a = furfine_cascade(&l, &c, 0.7, z).unwrap();
            let b = furfine_cascade(&ls, &cs, 0.7, z).unwrap();
            prop_assert_eq!(a.defaulted(), b.defaulted());
        }
    }
}
