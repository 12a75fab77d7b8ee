//! Brute-force and generic-solver oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use netrecon::netcore::{absorb_known, make_observation, LiabilityMatrix, Observation, ReducedProblem};
use netrecon::rng;
use rand::Rng;

/// Random matrix with entries in `(lo, hi)` present with probability
/// `density`.
pub fn random_matrix(n: usize, density: f64, lo: f64, hi: f64, seed: u64) -> LiabilityMatrix {
    let mut r = rng::stream(seed, 7);
    let mut l = LiabilityMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i != j && r.gen::<f64>() < density {
                l.set(i, j, r.gen_range(lo..hi));
            }
        }
    }
    l
}

/// Everything undisclosed at threshold 1.
pub fn open_problem(l: &LiabilityMatrix) -> (Observation, ReducedProblem) {
    let obs = make_observation(l, 1.0, &BTreeSet::new()).unwrap();
    let p = absorb_known(&obs).unwrap();
    (obs, p)
}

/// A random desk-scale problem whose free-entry count is at most `max_m`.
pub fn desk_problem(n: usize, max_m: usize, seed: u64) -> ReducedProblem {
    for k in 0.. {
        let l = random_matrix(n, 0.8, 0.05, 0.95, rng::child_seed(seed, k));
        let (_, p) = open_problem(&l);
        if p.m() > 0 && p.m() <= max_m {
            return p;
        }
    }
    unreachable!()
}

/// Every bank's residual is 0.5 on a complete three-bank graph.
pub fn triangle() -> ReducedProblem {
    ReducedProblem::new(3, LiabilityMatrix::off_diagonal(3), vec![0.5; 3], vec![0.5; 3]).unwrap()
}

fn need(res: f64) -> usize {
    if res < 1e-9 {
        0
    } else {
        res.floor() as usize + 1
    }
}

fn ones(mask: u32, m: usize) -> impl Iterator<Item = usize> {
    (0..m).filter(move |k| mask >> k & 1 == 1)
}

/// Every bank has strictly more links than its residual strength on both
/// sides.
pub fn h_zero(p: &ReducedProblem, mask: u32) -> bool {
    let n = p.n();
    let mut out = vec![0usize; n];
    let mut inn = vec![0usize; n];
    for k in ones(mask, p.m()) {
        let (i, j) = p.unknown()[k];
        out[i] += 1;
        inn[j] += 1;
    }
    (0..n).all(|b| out[b] >= need(p.res_out()[b]) && inn[b] >= need(p.res_in()[b]))
}

/// Min-cut test over every row and column subset: the support admits a
/// `[0, 1]` assignment iff no cut is smaller than the total residual.
pub fn flow_feasible(p: &ReducedProblem, mask: u32) -> bool {
    let links: Vec<(usize, usize, f64)> = ones(mask, p.m()).map(|k| (p.unknown()[k].0, p.unknown()[k].1, 1.0)).collect();
    cut_feasible(p.n(), &links, p.res_out(), p.res_in())
}

fn cut_feasible(n: usize, links: &[(usize, usize, f64)], out: &[f64], inn: &[f64]) -> bool {
    if out.iter().chain(inn).any(|&r| r < -1e-12) {
        return false;
    }
    let total: f64 = out.iter().sum();
    for rows in 0u32..1 << n {
        let left: f64 = (0..n).filter(|i| rows >> i & 1 == 0).map(|i| out[i]).sum();
        for cols in 0u32..1 << n {
            let right: f64 = (0..n).filter(|j| cols >> j & 1 == 1).map(|j| inn[j]).sum();
            let cross: f64 = links
                .iter()
                .filter(|&&(i, j, _)| rows >> i & 1 == 1 && cols >> j & 1 == 0)
                .map(|l| l.2)
                .sum();
            if left + right + cross < total - 1e-9 {
                return false;
            }
        }
    }
    true
}

/// Whether some feasible assignment puts `value` on link `k`.
fn admits(p: &ReducedProblem, k: usize, value: f64) -> bool {
    let (i, j) = p.unknown()[k];
    let mut out = p.res_out().to_vec();
    let mut inn = p.res_in().to_vec();
    out[i] -= value;
    inn[j] -= value;
    let links: Vec<(usize, usize, f64)> = p
        .unknown()
        .iter()
        .enumerate()
        .map(|(q, &(a, b))| (a, b, if q == k { 1.0 - value } else { 1.0 }))
        .collect();
    cut_feasible(p.n(), &links, &out, &inn)
}

pub struct Enumeration {
    pub m: usize,
    /// Probability of each link under `z^{links}` restricted to zero cost.
    pub marginals: Vec<f64>,
    pub log_weight: f64,
    pub zero_cost: usize,
    /// Weighted fraction of zero-cost supports that are flow-feasible.
    pub feasible_fraction: f64,
}

pub fn enumerate(p: &ReducedProblem, z: f64) -> Enumeration {
    let m = p.m();
    assert!(m <= 16);
    let mut total = 0.0;
    let mut feasible = 0.0;
    let mut zero_cost = 0;
    let mut marg = vec![0.0; m];
    for mask in 0u32..1 << m {
        if !h_zero(p, mask) {
            continue;
        }
        zero_cost += 1;
        let w = z.powi(mask.count_ones() as i32);
        total += w;
        if flow_feasible(p, mask) {
            feasible += w;
        }
        for k in ones(mask, m) {
            marg[k] += w;
        }
    }
    Enumeration {
        m,
        marginals: marg.iter().map(|x| x / total).collect(),
        log_weight: total.ln(),
        zero_cost,
        feasible_fraction: feasible / total,
    }
}

/// Largest fraction of zeros among flow-feasible supports.
pub fn max_feasible_sparsity(p: &ReducedProblem) -> f64 {
    let m = p.m();
    let fewest = (0u32..1 << m)
        .filter(|&mask| flow_feasible(p, mask))
        .map(|mask| mask.count_ones())
        .min()
        .expect("full support is feasible");
    1.0 - fewest as f64 / m as f64
}

/// Minimizer of `sum x log x` over `A x = b`, `0 <= x <= 1` by a log-barrier
/// method with infeasible-start Newton steps. Links pinned at 0 or 1 in
/// every feasible assignment are found by cut enumeration and fixed first,
/// so the barrier runs on a nonempty interior. Returns the free-entry values.
pub fn me_oracle(p: &ReducedProblem) -> Vec<f64> {
    const NUDGE: f64 = 1e-6;
    let n = p.n();
    let mut fixed: Vec<Option<f64>> = vec![None; p.m()];
    let mut b_out = p.res_out().to_vec();
    let mut b_in = p.res_in().to_vec();
    for k in 0..p.m() {
        let (i, j) = p.unknown()[k];
        if !admits(p, k, NUDGE) {
            fixed[k] = Some(0.0);
        } else if admits(p, k, 1.0) && !admits(p, k, 1.0 - NUDGE) {
            fixed[k] = Some(1.0);
            b_out[i] -= 1.0;
            b_in[j] -= 1.0;
        }
    }
    let free: Vec<usize> = (0..p.m()).filter(|&k| fixed[k].is_none()).collect();
    let mut result: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    if free.is_empty() {
        return result;
    }
    let m = free.len();
    let mut a = DMatrix::<f64>::zeros(2 * n, m);
    for (c, &k) in free.iter().enumerate() {
        let (i, j) = p.unknown()[k];
        a[(i, c)] = 1.0;
        a[(n + j, c)] = 1.0;
    }
    let b = DVector::from_iterator(2 * n, b_out.iter().chain(&b_in).copied());

    // Orthonormal basis of the row space removes redundant constraints.
    let svd = a.clone().svd(true, false);
    let u = svd.u.unwrap();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > 1e-9)
        .collect();
    let ur = u.select_columns(&keep);
    let a = ur.transpose() * &a;
    let b = ur.transpose() * &b;
    let r = a.nrows();

    let mut x = DVector::from_element(m, 0.5);
    let mut nu = DVector::<f64>::zeros(r);
    let residual = |t: f64, x: &DVector<f64>, nu: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
        let g = DVector::from_fn(m, |k, _| t * (x[k].ln() + 1.0) - 1.0 / x[k] + 1.0 / (1.0 - x[k]));
        (g + a.transpose() * nu, &a * x - &b)
    };
    let norm = |(d, q): &(DVector<f64>, DVector<f64>)| (d.norm_squared() + q.norm_squared()).sqrt();

    let mut t = 1.0;
    loop {
        for _ in 0..200 {
            let res = residual(t, &x, &nu);
            let r0 = norm(&res);
            if r0 < 1e-12 * t.max(1.0) {
                break;
            }
            let mut kkt = DMatrix::<f64>::zeros(m + r, m + r);
            for k in 0..m {
                kkt[(k, k)] = t / x[k] + 1.0 / (x[k] * x[k]) + 1.0 / ((1.0 - x[k]) * (1.0 - x[k]));
            }
            kkt.view_mut((0, m), (m, r)).copy_from(&a.transpose());
            kkt.view_mut((m, 0), (r, m)).copy_from(&a);
            let rhs = -DVector::from_iterator(m + r, res.0.iter().chain(res.1.iter()).copied());
            let step = kkt.lu().solve(&rhs).expect("KKT system is nonsingular");
            let dx = step.rows(0, m).into_owned();
            let dnu = step.rows(m, r).into_owned();
            let mut s = 1.0;
            while (0..m).any(|k| x[k] + s * dx[k] <= 0.0 || x[k] + s * dx[k] >= 1.0) {
                s *= 0.5;
            }
            while s > 1e-14 {
                let xn = &x + s * &dx;
                let nn = &nu + s * &dnu;
                if norm(&residual(t, &xn, &nn)) <= (1.0 - 0.01 * s) * r0 {
                    break;
                }
                s *= 0.5;
            }
            x += s * &dx;
            nu += s * &dnu;
        }
        if 2.0 * m as f64 / t < 1e-12 {
            break;
        }
        t *= 10.0;
    }
    for (c, &k) in free.iter().enumerate() {
        result[k] = x[c];
    }
    result
}

/// Kolmogorov-Smirnov statistic of `sample` against `cdf`.
pub fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = cdf(x);
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
