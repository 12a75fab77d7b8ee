//! Belief propagation for the link ensemble `P(a) ~ z^{sum a}` restricted
//! to supports meeting every required degree.
//!
//! Every variable sits between exactly two factors, so messages go directly
//! from factor to factor: `mu_{a->b}` is the probability that the link shared
//! by `a` and `b` is present when factor `b` is removed. A factor with
//! required degree `r` and cavity count weights `V^m` over its other
//! neighbours emits
//!
//! ```text
//! mu = (V^{r-1} + w W) / (V^{r-1} + (1 + w) W),   W = sum_{m=r}^{k-1} w^{m-r} V^m
//! ```
//!
//! Each link's fugacity is shared between its two factors, so a factor
//! weighs its links with `w = sqrt(z)` and the product over all factors
//! carries exactly `z` per link. The weighted sums are evaluated with tilted
//! incoming probabilities `w mu / (1 - mu + w mu)`, which turns them into
//! tail probabilities and avoids overflow for large `z`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::FactorGraph;
use super::weights::Cavity;
use crate::error::{Error, Result};

/// Link fugacity, including the two exact limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Fugacity {
    /// `z -> 0`: the sparsest-graph limit.
    Zero,
    Finite(f64),
    /// `z -> infinity`: every link present.
    Infinite,
}

impl Fugacity {
    pub fn finite(z: f64) -> Result<Self> {
        if z > 0.0 && z.is_finite() {
            Ok(Fugacity::Finite(z))
        } else {
            Err(Error::InvalidParameter(format!(
                "fugacity must be positive and finite, got {z}"
            )))
        }
    }

    /// Numeric value; `0` and `inf` for the limits.
    pub fn value(&self) -> f64 {
        match *self {
            Fugacity::Zero => 0.0,
            Fugacity::Finite(z) => z,
            Fugacity::Infinite => f64::INFINITY,
        }
    }

    pub fn from_value(z: f64) -> Result<Self> {
        if z == 0.0 {
            Ok(Fugacity::Zero)
        } else if z == f64::INFINITY {
            Ok(Fugacity::Infinite)
        } else {
            Self::finite(z)
        }
    }
}

impl fmt::Display for Fugacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BpOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    /// Weight of the previous message in each update.
    pub damping: f64,
}

impl Default for BpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_sweeps: 1000,
            damping: 0.5,
        }
    }
}

/// Messages indexed by variable id: `to_col[v]` is sent by the row factor of
/// `v` to its column factor, `to_row[v]` the other way.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageSet {
    pub to_col: Vec<f64>,
    pub to_row: Vec<f64>,
    pub z: Fugacity,
}

impl MessageSet {
    pub fn uniform(m: usize, z: Fugacity) -> Self {
        Self {
            to_col: vec![0.5; m],
            to_row: vec![0.5; m],
            z,
        }
    }

    /// Message emitted by factor `a` about variable `v`.
    pub fn outgoing(&self, g: &FactorGraph, a: usize, v: usize) -> f64 {
        if g.is_row_factor(a) {
            self.to_col[v]
        } else {
            self.to_row[v]
        }
    }

    /// Message received by factor `a` about variable `v`.
    pub fn incoming(&self, g: &FactorGraph, a: usize, v: usize) -> f64 {
        if g.is_row_factor(a) {
            self.to_row[v]
        } else {
            self.to_col[v]
        }
    }
}

#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub messages: MessageSet,
    pub sweeps: usize,
    /// Largest undamped message change in the last sweep.
    pub residual: f64,
    pub converged: bool,
}

impl FixedPoint {
    pub fn into_result(self) -> Result<MessageSet> {
        if self.converged {
            Ok(self.messages)
        } else {
            Err(Error::NotConverged {
                iterations: self.sweeps,
                residual: self.residual,
            })
        }
    }
}

/// Runs synchronous damped sweeps from the uniform initialisation `mu = 0.5`.
pub fn bp_fixed_point(g: &FactorGraph, z: Fugacity, opts: &BpOptions) -> Result<FixedPoint> {
    bp_fixed_point_from(g, z, opts, MessageSet::uniform(g.variables().len(), z))
}

/// Runs synchronous damped sweeps from the given messages.
pub fn bp_fixed_point_from(
    g: &FactorGraph,
    z: Fugacity,
    opts: &BpOptions,
    init: MessageSet,
) -> Result<FixedPoint> {
    let bad = g.locally_infeasible();
    if !bad.is_empty() {
        return Err(Error::LocallyInfeasible(
            bad.iter().map(|&a| g.label(a).to_string()).collect(),
        ));
    }
    if !(0.0..1.0).contains(&opts.damping) {
        return Err(Error::InvalidParameter(format!(
            "damping must be in [0, 1), got {}",
            opts.damping
        )));
    }
    let mut msgs = init;
    msgs.z = z;
    if z == Fugacity::Infinite {
        for v in g.live_variables() {
            msgs.to_col[v] = 1.0;
            msgs.to_row[v] = 1.0;
        }
        return Ok(FixedPoint {
            messages: msgs,
            sweeps: 0,
            residual: 0.0,
            converged: true,
        });
    }

    let parallel = g.m() >= 4096;
    let mut residual = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        let updates: Vec<(usize, Vec<f64>)> = if parallel {
            (0..g.num_factors())
                .into_par_iter()
                .map_init(Cavity::default, |cav, a| (a, factor_update(g, &msgs, a, z, cav)))
                .collect()
        } else {
            let mut cav = Cavity::default();
            (0..g.num_factors())
                .map(|a| (a, factor_update(g, &msgs, a, z, &mut cav)))
                .collect()
        };
        residual = 0.0;
        let d = opts.damping;
        let mut next = msgs.clone();
        for (a, out) in updates {
            let target = if g.is_row_factor(a) {
                &mut next.to_col
            } else {
                &mut next.to_row
            };
            for (&v, new) in g.neighbors(a).iter().zip(out) {
                let old = target[v];
                residual = residual.max((new - old).abs());
                let damped = (d * old + (1.0 - d) * new).clamp(0.0, 1.0);
                debug_assert!((0.0..=1.0).contains(&damped));
                target[v] = damped;
            }
        }
        msgs = next;
        if residual < opts.tol {
            return Ok(FixedPoint {
                messages: msgs,
                sweeps: sweep,
                residual,
                converged: true,
            });
        }
    }
    Ok(FixedPoint {
        messages: msgs,
        sweeps: opts.max_sweeps,
        residual,
        converged: false,
    })
}

/// Outgoing messages of factor `a`, in neighbour order.
fn factor_update(
    g: &FactorGraph,
    msgs: &MessageSet,
    a: usize,
    z: Fugacity,
    cav: &mut Cavity,
) -> Vec<f64> {
    let nb = g.neighbors(a);
    let r = g.required(a) as isize;
    let incoming: Vec<f64> = nb.iter().map(|&v| msgs.incoming(g, a, v)).collect();
    match z {
        Fugacity::Infinite => vec![1.0; nb.len()],
        Fugacity::Finite(zv) => {
            let w = zv.sqrt();
            let tilted: Vec<f64> = incoming
                .iter()
                .map(|&mu| {
                    let den = 1.0 - mu + w * mu;
                    if den > 0.0 {
                        w * mu / den
                    } else {
                        1.0
                    }
                })
                .collect();
            cav.build(&tilted, r as usize + 1);
            (0..nb.len())
                .map(|b| {
                    let on = w * cav.tail(b, r - 1);
                    let off = cav.tail(b, r);
                    if on + off > 0.0 {
                        on / (on + off)
                    } else {
                        1.0
                    }
                })
                .collect()
        }
        Fugacity::Zero => {
            cav.build(&incoming, r as usize + 2);
            (0..nb.len())
                .map(|b| {
                    let below = cav.point(b, r - 1);
                    let at = cav.point(b, r);
                    if below + at > 0.0 {
                        below / (below + at)
                    } else if cav.tail(b, r + 1) > 0.0 {
                        0.0
                    } else {
                        1.0
                    }
                })
                .collect()
        }
    }
}

/// Link marginals `p = mu_ab mu_ba / (mu_ab mu_ba + (1 - mu_ab)(1 - mu_ba))`,
/// indexed by variable id. A fully contradictory pair (`0/0`) yields 0.5 and
/// a warning.
pub fn link_marginals(m: &MessageSet) -> Vec<f64> {
    let mut degenerate = 0usize;
    let p = m
        .to_col
        .iter()
        .zip(&m.to_row)
        .map(|(&a, &b)| {
            let on = a * b;
            let off = (1.0 - a) * (1.0 - b);
            if on + off > 0.0 {
                on / (on + off)
            } else {
                degenerate += 1;
                0.5
            }
        })
        .collect();
    if degenerate > 0 {
        log::warn!("{degenerate} link marginals are degenerate (0/0); set to 0.5");
    }
    p
}

/// Expected fraction of absent links, `1 - sum p / M`.
pub fn expected_sparsity(p: &[f64]) -> f64 {
    if p.is_empty() {
        return 0.0;
    }
    1.0 - p.iter().sum::<f64>() / p.len() as f64
}

/// Marginals of the live variables of `g`, in variable-id order.
pub fn live_marginals(g: &FactorGraph, m: &MessageSet) -> Vec<f64> {
    let p = link_marginals(m);
    g.live_variables().map(|v| p[v]).collect()
}
