use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bpcore::{bp_fixed_point_from, link_marginals, BpOptions, FactorGraph, Fugacity, MessageSet};
use crate::error::{Error, Result};
use crate::netcore::{Entry, ReducedProblem, Support};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecimationOptions {
    pub bp: BpOptions,
    pub max_restarts: usize,
    /// Fraction of the remaining free entries fixed after each fixed-point
    /// run; at least one entry is fixed per run, so small problems are
    /// always decimated one entry at a time.
    pub fix_fraction: f64,
}

impl Default for DecimationOptions {
    fn default() -> Self {
        Self {
            bp: BpOptions {
                tol: 1e-7,
                max_sweeps: 200,
                damping: 0.5,
            },
            max_restarts: 20,
            fix_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecimationStep {
    /// Index into the problem's free entries.
    pub variable: usize,
    pub entry: Entry,
    pub marginal: f64,
    pub value: bool,
    /// The draw was 0 but one of the entry's banks needed every remaining
    /// link, so the entry was set to 1.
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecimationTrace {
    pub steps: Vec<DecimationStep>,
    pub restarts: usize,
    pub final_support: Support,
    /// Residual strengths after the last step (`L - a`, clamped at 0).
    pub res_out: Vec<f64>,
    pub res_in: Vec<f64>,
    /// Fixed-point runs that hit the sweep cap.
    pub unconverged_runs: usize,
}

/// Builds a support by repeatedly running belief propagation on the reduced
/// graph and fixing the most biased free entry to 1 with probability equal
/// to its marginal. A 0 that would leave some bank short of its required
/// degree is overridden to 1, so every completed support has zero cost. A
/// contradiction reported by message passing restarts the procedure on the
/// next random stream.
pub fn decimate(
    g: &FactorGraph,
    p: &ReducedProblem,
    z: Fugacity,
    seed: u64,
    opts: &DecimationOptions,
) -> Result<DecimationTrace> {
    if g.variables() != p.unknown() {
        return Err(Error::InvalidParameter(
            "factor graph was not built from this problem".into(),
        ));
    }
    if !(0.0..1.0).contains(&opts.fix_fraction) {
        return Err(Error::InvalidParameter(format!(
            "fix_fraction must be in [0, 1), got {}",
            opts.fix_fraction
        )));
    }
    for attempt in 0..=opts.max_restarts {
        if let Some(mut trace) = attempt_decimation(g, p, z, seed, attempt as u64, opts)? {
            trace.restarts = attempt;
            return Ok(trace);
        }
        log::debug!("decimation contradiction, restart {}", attempt + 1);
    }
    Err(Error::ExhaustedRestarts {
        restarts: opts.max_restarts,
    })
}

fn attempt_decimation(
    g: &FactorGraph,
    p: &ReducedProblem,
    z: Fugacity,
    seed: u64,
    attempt: u64,
    opts: &DecimationOptions,
) -> Result<Option<DecimationTrace>> {
    let mut rng = rng::stream(seed, attempt);
    let mut graph = g.clone();
    if !graph.locally_infeasible().is_empty() {
        return Err(Error::LocallyInfeasible(
            graph
                .locally_infeasible()
                .iter()
                .map(|&a| graph.label(a).to_string())
                .collect(),
        ));
    }
    let m = p.m();
    let mut msgs = MessageSet::uniform(m, z);
    let mut support = Support::empty(m);
    let mut res_out = p.res_out().to_vec();
    let mut res_in = p.res_in().to_vec();
    let mut steps = Vec::with_capacity(m);
    let mut unconverged_runs = 0;

    while graph.m() > 0 {
        let fp = bp_fixed_point_from(&graph, z, &opts.bp, msgs)?;
        if !fp.converged {
            unconverged_runs += 1;
        }
        msgs = fp.messages;
        let marginals = link_marginals(&msgs);
        let mut live: Vec<usize> = graph.live_variables().collect();
        let batch = ((opts.fix_fraction * live.len() as f64) as usize).max(1);
        let bias = |v: usize| marginals[v].min(1.0 - marginals[v]);
        live.sort_by(|&a, &b| bias(a).total_cmp(&bias(b)).then(a.cmp(&b)));
        for &v in live.iter().take(batch) {
            let pv = marginals[v];
            let drawn = rng.gen::<f64>() < pv;
            let forced = !drawn && !graph.zero_allowed(v);
            let value = drawn || forced;
            let (i, j) = p.unknown()[v];
            steps.push(DecimationStep {
                variable: v,
                entry: (i, j),
                marginal: pv,
                value,
                forced,
            });
            graph.remove_variable(v, value);
            if value {
                support.set(v, true);
                res_out[i] = (res_out[i] - 1.0).max(0.0);
                res_in[j] = (res_in[j] - 1.0).max(0.0);
            }
            if !graph.locally_infeasible().is_empty() {
                return Ok(None);
            }
        }
    }
    Ok(Some(DecimationTrace {
        steps,
        restarts: 0,
        final_support: support,
        res_out,
        res_in,
        unconverged_runs,
    }))
}
