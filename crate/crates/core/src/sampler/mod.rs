//! Exploration of the space of compatible supports: exact feasibility
//! certificates, decimation sampling, and the maximal-sparsity search.

mod decimation;
pub(crate) mod flow;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use decimation::{decimate, DecimationOptions, DecimationStep, DecimationTrace};

use crate::bpcore::{
    bp_fixed_point, live_marginals, expected_sparsity, BpOptions, FactorGraph, Fugacity,
};
use crate::error::{Error, Result};
use crate::netcore::{sparsity, ReducedProblem, Support};
use crate::rng;
use flow::Transport;

#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    /// A liability assignment over the free entries (zero off the support)
    /// meeting every residual sum.
    Flow(Vec<f64>),
    /// Source side of a minimum cut: rows and columns still reachable in the
    /// residual network. Its capacity is below the required total.
    Cut { rows: Vec<usize>, cols: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    pub flow: f64,
    pub required: f64,
    pub certificate: Certificate,
}

/// Exact compatibility test: the support admits entries in `[0, 1]` meeting
/// every residual row and column sum iff the unit-capacity transportation
/// network saturates the total supply.
pub fn feasibility_check(p: &ReducedProblem, a: &Support) -> Feasibility {
    let t = Transport::new(p, a);
    let certificate = if t.is_feasible() {
        Certificate::Flow(t.values())
    } else {
        let (rows, cols) = t.cut();
        Certificate::Cut { rows, cols }
    };
    Feasibility {
        feasible: t.is_feasible(),
        flow: t.flow(),
        required: t.required(),
        certificate,
    }
}

/// Links of `a` that are positive in at least one assignment meeting every
/// residual sum; the others are zero in every solution. `None` when `a` is
/// infeasible.
pub fn usable_entries(p: &ReducedProblem, a: &Support) -> Option<Support> {
    let t = Transport::new(p, a);
    t.is_feasible().then(|| Support::new(t.usable()))
}

/// Adds links across the current minimum cut until the support is
/// feasible. Returns `None` when even the full support is infeasible.
pub fn make_feasible(p: &ReducedProblem, a: &Support, rng: &mut rng::Rng) -> Option<Support> {
    let mut t = Transport::new(p, a);
    while !t.is_feasible() {
        let (rows, cols) = t.cut();
        let mut in_rows = vec![false; p.n()];
        let mut in_cols = vec![false; p.n()];
        rows.iter().for_each(|&i| in_rows[i] = true);
        cols.iter().for_each(|&j| in_cols[j] = true);
        let candidates: Vec<usize> = p
            .unknown()
            .iter()
            .enumerate()
            .filter(|&(k, &(i, j))| !t.is_active(k) && in_rows[i] && !in_cols[j])
            .map(|(k, _)| k)
            .collect();
        let &k = candidates.choose(rng)?;
        t.enable(k);
    }
    Some(t.support())
}

/// Drops links of a feasible support, in the given order, whenever the
/// support stays feasible without them. The result is inclusion-minimal
/// with respect to the visited links.
pub fn prune(p: &ReducedProblem, a: &Support, order: &[usize]) -> Support {
    let mut t = Transport::new(p, a);
    if !t.is_feasible() {
        return a.clone();
    }
    for &k in order {
        let (i, j) = p.unknown()[k];
        t.try_remove(k, i, j);
    }
    t.support()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportSample {
    pub support: Option<Support>,
    /// Every bank reaches its required degree.
    pub h_zero: bool,
    pub feasible: bool,
    pub sparsity: f64,
    pub restarts: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub requested: usize,
    pub completed: usize,
    pub h_zero_rate: f64,
    /// Fraction of completed zero-cost supports that also pass the exact
    /// flow certificate.
    pub feasibility_rate: f64,
    pub mean_sparsity: f64,
    pub sparsity_stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleReport {
    pub samples: Vec<SupportSample>,
    pub stats: SampleStats,
}

/// Runs `count` independent decimations (sub-seeds `child_seed(seed, k)`)
/// and certifies each result.
pub fn sample_supports(
    g: &FactorGraph,
    p: &ReducedProblem,
    z: Fugacity,
    count: usize,
    seed: u64,
    opts: &DecimationOptions,
) -> Result<SampleReport> {
    if count == 0 {
        return Err(Error::InvalidParameter("count must be >= 1".into()));
    }
    let m = p.m();
    let samples: Vec<SupportSample> = (0..count)
        .into_par_iter()
        .map(|k| match decimate(g, p, z, rng::child_seed(seed, k as u64), opts) {
            Ok(trace) => {
                let a = trace.final_support;
                let ones: Vec<bool> = a.as_slice().to_vec();
                let h_zero = g.cost(&ones) == 0;
                let feasible = feasibility_check(p, &a).feasible;
                let s = if m > 0 { sparsity(&a, m).unwrap_or(0.0) } else { 0.0 };
                SupportSample {
                    support: Some(a),
                    h_zero,
                    feasible,
                    sparsity: s,
                    restarts: trace.restarts,
                    error: None,
                }
            }
            Err(e) => SupportSample {
                support: None,
                h_zero: false,
                feasible: false,
                sparsity: f64::NAN,
                restarts: opts.max_restarts,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let done: Vec<&SupportSample> = samples.iter().filter(|s| s.support.is_some()).collect();
    let completed = done.len();
    let frac = |c: usize, d: usize| if d == 0 { 0.0 } else { c as f64 / d as f64 };
    let h0: Vec<&&SupportSample> = done.iter().filter(|s| s.h_zero).collect();
    let mean = if completed > 0 {
        done.iter().map(|s| s.sparsity).sum::<f64>() / completed as f64
    } else {
        f64::NAN
    };
    let stderr = if completed > 1 {
        let var = done.iter().map(|s| (s.sparsity - mean).powi(2)).sum::<f64>()
            / (completed - 1) as f64;
        (var / completed as f64).sqrt()
    } else {
        f64::NAN
    };
    let stats = SampleStats {
        requested: count,
        completed,
        h_zero_rate: frac(h0.len(), completed),
        feasibility_rate: frac(h0.iter().filter(|s| s.feasible).count(), h0.len()),
        mean_sparsity: mean,
        sparsity_stderr: stderr,
    };
    Ok(SampleReport { samples, stats })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LambdaMaxOptions {
    pub trials: usize,
    pub seed: u64,
    pub decimation: DecimationOptions,
}

impl Default for LambdaMaxOptions {
    fn default() -> Self {
        Self {
            trials: 50,
            seed: 0,
            decimation: DecimationOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaMax {
    /// Sparsity of the witness over the free entries.
    pub lambda_max: f64,
    pub witness: Support,
    pub trials: usize,
    /// Trials whose sparsest-limit decimation completed.
    pub decimations_completed: usize,
    /// Set when no decimation completed and the witness came from pruning
    /// the full support alone.
    pub flagged: bool,
}

/// Sparsest compatible support found over `opts.trials` seeded trials. Each
/// trial decimates in the `z -> 0` limit, adds cut-crossing links if the
/// result fails the flow certificate, then removes links in random order
/// while the certificate still holds. The result is a lower bound on the
/// true maximal sparsity.
pub fn lambda_max(g: &FactorGraph, p: &ReducedProblem, opts: &LambdaMaxOptions) -> Result<LambdaMax> {
    let m = p.m();
    if m == 0 {
        return Ok(LambdaMax {
            lambda_max: 0.0,
            witness: Support::empty(0),
            trials: 0,
            decimations_completed: 0,
            flagged: false,
        });
    }
    if !feasibility_check(p, &Support::full(m)).feasible {
        let f = feasibility_check(p, &Support::full(m));
        return Err(Error::Infeasible {
            flow: f.flow,
            required: f.required,
        });
    }
    let trials = opts.trials.max(1);
    let results: Vec<(Support, bool)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = rng::child_seed(opts.seed, t as u64);
            let mut rng = rng::stream(seed, u64::MAX);
            let (start, completed) =
                match decimate(g, p, Fugacity::Zero, seed, &opts.decimation) {
                    Ok(trace) => (trace.final_support, true),
                    Err(_) => (Support::full(m), false),
                };
            let feasible = make_feasible(p, &start, &mut rng).unwrap_or_else(|| Support::full(m));
            let mut order: Vec<usize> = (0..m).collect();
            order.shuffle(&mut rng);
            (prune(p, &feasible, &order), completed)
        })
        .collect();
    let decimations_completed = results.iter().filter(|r| r.1).count();
    let (witness, _) = results
        .into_iter()
        .min_by_key(|(a, _)| a.count_ones())
        .expect("at least one trial");
    Ok(LambdaMax {
        lambda_max: sparsity(&witness, m)?,
        witness,
        trials,
        decimations_completed,
        flagged: decimations_completed == 0,
    })
}

/// Fugacity whose fixed point has expected sparsity closest to `target`
/// (over the free entries), found by bisection on `log z` in `[1e-6, 1e6]`.
pub fn fugacity_for_sparsity(g: &FactorGraph, target: f64, opts: &BpOptions) -> Result<(f64, f64)> {
    let density = |log_z: f64| -> Result<f64> {
        let z = Fugacity::finite(log_z.exp())?;
        let fp = bp_fixed_point(g, z, opts)?;
        Ok(expected_sparsity(&live_marginals(g, &fp.messages)))
    };
    let (mut lo, mut hi) = (1e-6f64.ln(), 1e6f64.ln());
    let (d_lo, d_hi) = (density(lo)?, density(hi)?);
    if target >= d_lo {
        return Ok((lo.exp(), d_lo));
    }
    if target <= d_hi {
        return Ok((hi.exp(), d_hi));
    }
    let mut best = (1.0, f64::INFINITY);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let d = density(mid)?;
        if (d - target).abs() < (best.1 - target).abs() {
            best = (mid.exp(), d);
        }
        if d > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) < 1e-6 {
            break;
        }
    }
    Ok(best)
}

/// A compatible support with sparsity near `target`: decimation at the
/// matching fugacity, followed by cut repair when the sample fails the
/// exact certificate.
pub fn typical_support(
    g: &FactorGraph,
    p: &ReducedProblem,
    target: f64,
    seed: u64,
    opts: &DecimationOptions,
) -> Result<Support> {
    let m = p.m();
    if m == 0 {
        return Ok(Support::empty(0));
    }
    let (z, _) = fugacity_for_sparsity(g, target, &opts.bp)?;
    let trace = decimate(g, p, Fugacity::finite(z)?, seed, opts)?;
    let mut rng = rng::stream(seed, u64::MAX - 1);
    make_feasible(p, &trace.final_support, &mut rng).ok_or_else(|| {
        let f = feasibility_check(p, &Support::full(m));
        Error::Infeasible {
            flow: f.flow,
            required: f.required,
        }
    })
}

/// Uniform random order of `0..m` drawn from `rng`.
pub fn random_order(m: usize, rng: &mut rng::Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    order
}
