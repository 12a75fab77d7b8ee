mod common;

use common::{desk_problem, enumerate, triangle};
use netrecon::bpcore::{
    bethe_entropy, bp_fixed_point, build_factor_graph, entropy_point, expected_sparsity, link_marginals, log_grid,
    node_weights, required_degree, sigma_curve, BpOptions, Fugacity,
};
use proptest::prelude::*;

#[test]
fn required_degree_is_strict() {
    assert_eq!(required_degree(0.0), 0);
    assert_eq!(required_degree(0.5), 1);
    assert_eq!(required_degree(1.0), 2);
    assert_eq!(required_degree(2.3), 3);
}

#[test]
fn triangle_matches_enumeration() {
    let p = triangle();
    let g = build_factor_graph(&p).unwrap();
    for z in [0.25, 1.0, 4.0] {
        let fz = Fugacity::finite(z).unwrap();
        let fp = bp_fixed_point(&g, fz, &BpOptions::default()).unwrap();
        assert!(fp.converged);
        let exact = enumerate(&p, z);
        for (a, b) in link_marginals(&fp.messages).iter().zip(&exact.marginals) {
            assert!((a - b).abs() < 0.05, "z={z}: {a} vs {b}");
        }
        let s = bethe_entropy(&g, &fp.messages, fz).unwrap();
        assert!((s - exact.log_weight).abs() / 6.0 < 0.05);
    }
}

#[test]
fn infinite_fugacity_fills_every_link() {
    let p = desk_problem(4, 12, 3);
    let g = build_factor_graph(&p).unwrap();
    let fp = bp_fixed_point(&g, Fugacity::Infinite, &BpOptions::default()).unwrap();
    assert!(link_marginals(&fp.messages).iter().all(|&m| m == 1.0));
    assert_eq!(expected_sparsity(&link_marginals(&fp.messages)), 0.0);
}

#[test]
fn zero_fugacity_keeps_required_degrees() {
    let p = triangle();
    let g = build_factor_graph(&p).unwrap();
    let fp = bp_fixed_point(&g, Fugacity::Zero, &BpOptions::default()).unwrap();
    let total: f64 = link_marginals(&fp.messages).iter().sum();
    // The sparsest zero-cost supports of the triangle are the two 3-cycles.
    assert!((total - 3.0).abs() < 1e-6, "{total}");
}

#[test]
fn sigma_curve_rejects_unsorted_grid() {
    let g = build_factor_graph(&triangle()).unwrap();
    assert!(sigma_curve(&g, &[1.0, 0.5], &BpOptions::default()).is_err());
}

#[test]
fn log_grid_endpoints() {
    let g = log_grid(1e-2, 1e2, 5);
    assert_eq!(g.len(), 5);
    assert!((g[0] - 1e-2).abs() < 1e-15 && (g[4] - 1e2).abs() < 1e-12);
    assert!((g[2] - 1.0).abs() < 1e-12);
}

#[test]
fn entropy_curve_csv_header() {
    let g = build_factor_graph(&triangle()).unwrap();
    let c = sigma_curve(&g, &[0.5, 2.0], &BpOptions::default()).unwrap();
    let mut buf = Vec::new();
    c.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("z,lambda_hat,S,Sigma,converged"));
    assert_eq!(text.lines().count(), 3);
}

fn brute_weights(p: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; p.len() + 1];
    for mask in 0u32..1 << p.len() {
        let w: f64 = (0..p.len())
            .map(|k| if mask >> k & 1 == 1 { p[k] } else { 1.0 - p[k] })
            .product();
        v[mask.count_ones() as usize] += w;
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn node_weights_match_brute_force(p in prop::collection::vec(0.0f64..=1.0, 0..10)) {
        let exact = brute_weights(&p);
        let v = node_weights(&p, p.len());
        for (a, b) in v.iter().zip(&exact) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn marginals_are_probabilities(seed in any::<u64>(), z in 0.01f64..100.0) {
        let p = desk_problem(4, 12, seed);
        let g = build_factor_graph(&p).unwrap();
        let fp = bp_fixed_point(&g, Fugacity::finite(z).unwrap(), &BpOptions::default()).unwrap();
        for m in link_marginals(&fp.messages) {
            prop_assert!((0.0..=1.0).contains(&m));
        }
    }

    #[test]
    fn sparsity_falls_as_fugacity_grows(seed in any::<u64>()) {
        let p = desk_problem(4, 12, seed);
        let g = build_factor_graph(&p).unwrap();
        let lam: Vec<f64> = log_grid(1e-2, 1e2, 6)
            .into_iter()
            .map(|z| entropy_point(&g, Fugacity::finite(z).unwrap(), &BpOptions::default()).unwrap().lambda_hat)
            .collect();
        for w in lam.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "{lam:?}");
        }
    }
}
