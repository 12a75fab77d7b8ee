//! Dense maximum-entropy reconstruction.
//!
//! The unknown entries are the KL projection of a uniform prior onto the set
//! of matrices meeting every residual row and column sum with entries in
//! `[0, 1]`. The projection is computed by cyclic Bregman projections in the
//! entropy geometry: each entry is kept in the product form
//! `x_e = Q * row_i * col_j * box_e`. Row and column projections rescale one
//! factor; the projection onto `x_e <= 1` resets `box_e = min(1, 1/(Q row_i col_j))`,
//! which is the Dykstra correction for a half-space (it can relax back
//! towards 1 when the row and column factors shrink).
//!
//! Entries that are zero in every feasible assignment are dropped first
//! (found from a max-flow residual graph); otherwise the row and column
//! factors would drift towards zero and the iteration would stall.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{ReducedProblem, Support};
use crate::sampler::{feasibility_check, usable_entries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeOptions {
    pub max_iterations: usize,
    /// Maximum tolerated violation of any row sum, column sum or upper bound.
    pub tolerance: f64,
    pub prior_value: f64,
}

impl Default for MeOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200_000,
            tolerance: 1e-8,
            prior_value: 1.0,
        }
    }
}

impl MeOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be >= 1".into()));
        }
        if !(self.prior_value > 0.0) {
            return Err(Error::NonPositivePrior(self.prior_value));
        }
        Ok(())
    }
}

/// `sum_a L_a log(L_a / Q_a)` with `0 log 0 = 0`.
pub fn kl_divergence(values: &[f64], prior: &[f64]) -> Result<f64> {
    if values.len() != prior.len() {
        return Err(Error::InvalidParameter(format!(
            "length mismatch: {} values, {} prior",
            values.len(),
            prior.len()
        )));
    }
    let mut d = 0.0;
    for (&l, &q) in values.iter().zip(prior) {
        if !(q > 0.0) {
            return Err(Error::NonPositivePrior(q));
        }
        if l > 0.0 {
            d += l * (l / q).ln();
        }
    }
    Ok(d)
}

/// Maximum-entropy values for every free entry of `p`.
pub fn me_reconstruct(p: &ReducedProblem, opts: &MeOptions) -> Result<Vec<f64>> {
    let full = Support::full(p.m());
    match usable_entries(p, &full) {
        Some(u) => project(p, u.as_slice(), opts),
        None => {
            let cert = feasibility_check(p, &full);
            Err(Error::Infeasible {
                flow: cert.flow,
                required: cert.required,
            })
        }
    }
}

/// Maximum-entropy values with every entry outside the support held at 0.
pub fn me_on_support(p: &ReducedProblem, a: &Support, opts: &MeOptions) -> Result<Vec<f64>> {
    if a.len() != p.m() {
        return Err(Error::SupportMismatch {
            expected: p.m(),
            got: a.len(),
        });
    }
    match usable_entries(p, a) {
        Some(u) => project(p, u.as_slice(), opts),
        None => {
            let cert = feasibility_check(p, a);
            Err(Error::InfeasibleSupport {
                flow: cert.flow,
                required: cert.required,
            })
        }
    }
}

fn project(p: &ReducedProblem, mask: &[bool], opts: &MeOptions) -> Result<Vec<f64>> {
    opts.validate()?;
    let n = p.n();
    let q = opts.prior_value;
    let vars: Vec<(usize, usize, usize)> = p
        .unknown()
        .iter()
        .enumerate()
        .filter(|&(k, _)| mask[k])
        .map(|(k, &(i, j))| (k, i, j))
        .collect();

    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (v, &(_, i, j)) in vars.iter().enumerate() {
        rows[i].push(v);
        cols[j].push(v);
    }
    for bank in 0..n {
        if p.res_out()[bank] > 0.0 && rows[bank].is_empty() {
            return Err(Error::Infeasible {
                flow: 0.0,
                required: p.total(),
            });
        }
        if p.res_in()[bank] > 0.0 && cols[bank].is_empty() {
            return Err(Error::Infeasible {
                flow: 0.0,
                required: p.total(),
            });
        }
    }

    let mut row_f = vec![1.0; n];
    let mut col_f = vec![1.0; n];
    let mut box_f = vec![1.0; vars.len()];
    let value = |v: usize, row_f: &[f64], col_f: &[f64], box_f: &[f64]| {
        let (_, i, j) = vars[v];
        q * row_f[i] * col_f[j] * box_f[v]
    };

    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        for i in 0..n {
            if rows[i].is_empty() {
                continue;
            }
            let s: f64 = rows[i]
                .iter()
                .map(|&v| q * col_f[vars[v].2] * box_f[v])
                .sum();
            row_f[i] = if s > 0.0 { p.res_out()[i] / s } else { 0.0 };
        }
        for j in 0..n {
            if cols[j].is_empty() {
                continue;
            }
            let s: f64 = cols[j]
                .iter()
                .map(|&v| q * row_f[vars[v].1] * box_f[v])
                .sum();
            col_f[j] = if s > 0.0 { p.res_in()[j] / s } else { 0.0 };
        }
        for (v, &(_, i, j)) in vars.iter().enumerate() {
            let free = q * row_f[i] * col_f[j];
            box_f[v] = if free > 1.0 { 1.0 / free } else { 1.0 };
        }

        residual = 0.0;
        let mut row_sum = vec![0.0; n];
        let mut col_sum = vec![0.0; n];
        for v in 0..vars.len() {
            let x = value(v, &row_f, &col_f, &box_f);
            residual = f64::max(residual, x - 1.0);
            row_sum[vars[v].1] += x;
            col_sum[vars[v].2] += x;
        }
        for b in 0..n {
            residual = residual
                .max((row_sum[b] - p.res_out()[b]).abs())
                .max((col_sum[b] - p.res_in()[b]).abs());
        }
        if !residual.is_finite() {
            break;
        }
        if residual <= opts.tolerance {
            let mut out = vec![0.0; p.m()];
            for (v, &(k, _, _)) in vars.iter().enumerate() {
                out[k] = value(v, &row_f, &col_f, &box_f).min(1.0);
            }
            return Ok(out);
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iterations,
        residual,
    })
}
