//! Disclosure-threshold sweeps: how the maximal sparsity and the volume of
//! compatible supports respond to the reporting threshold.

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bpcore::{build_factor_graph, log_grid, sigma_curve, BpOptions, EntropyCurve};
use crate::error::{Error, Result};
use crate::netcore::{absorb_known, make_observation, Entry, LiabilityMatrix};
use crate::sampler::{lambda_max, LambdaMaxOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdOptions {
    pub z_grid: Vec<f64>,
    pub bp: BpOptions,
    pub lambda_max: LambdaMaxOptions,
    pub disclosed: BTreeSet<Entry>,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self {
            z_grid: log_grid(1e-4, 1e4, 33),
            bp: BpOptions::default(),
            lambda_max: LambdaMaxOptions::default(),
            disclosed: BTreeSet::new(),
        }
    }
}

/// Default threshold grid: `n` log-spaced values from 1 down to 0.01.
pub fn default_theta_grid(n: usize) -> Vec<f64> {
    log_grid(0.01, 1.0, n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRecord {
    pub theta: f64,
    /// Off-diagonal entries left undisclosed.
    pub m_unknown: usize,
    /// Undisclosed entries that are not forced to zero.
    pub m_free: usize,
    /// Whole-matrix sparsity of the sparsest compatible network found.
    pub lambda_max: f64,
    /// The same support's sparsity over the free entries.
    pub lambda_max_free: f64,
    /// `Sigma` at `lambda_max`, per off-diagonal slot of the whole matrix.
    pub entropy_at_lambda_max: f64,
    /// Entropy curve in free-entry units.
    pub curve: EntropyCurve,
    known_positive: usize,
    slots: usize,
    pub error: Option<String>,
}

impl ThresholdRecord {
    /// Converts a free-entry point `(lambda_hat, Sigma)` to whole-matrix
    /// sparsity and entropy per off-diagonal slot.
    pub fn to_whole(&self, lambda_hat: f64, sigma: f64) -> (f64, f64) {
        let links = self.known_positive as f64 + (1.0 - lambda_hat) * self.m_free as f64;
        let s = self.slots as f64;
        (1.0 - links / s, sigma * self.m_free as f64 / s)
    }

    /// The entropy curve as `(lambda_whole, Sigma_whole)` pairs over the
    /// converged points.
    pub fn whole_curve(&self) -> Vec<(f64, f64)> {
        self.curve
            .points
            .iter()
            .filter(|p| p.converged && p.sigma.is_finite())
            .map(|p| self.to_whole(p.lambda_hat, p.sigma))
            .collect()
    }

    pub fn write_curve_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "z,lambda_hat,S,Sigma,converged,lambda_whole,Sigma_whole")?;
        for p in &self.curve.points {
            let (lw, sw) = self.to_whole(p.lambda_hat, p.sigma);
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                p.z, p.lambda_hat, p.s, p.sigma, p.converged, lw, sw
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDiagnostics {
    /// Observed direction of `lambda_max` as the threshold grows:
    /// `non-decreasing`, `non-increasing`, `constant` or `mixed`.
    pub lambda_max_direction: String,
    /// `|lambda_max - lambda|` at the smallest threshold.
    pub lambda_max_gap_at_min_theta: f64,
    pub entropy_non_increasing_as_theta_decreases: bool,
    pub entropy_at_min_theta: f64,
    /// Entropy curves of smaller thresholds lie below those of larger ones
    /// wherever both are sampled.
    pub curves_nested: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    /// Sorted by increasing threshold.
    pub records: Vec<ThresholdRecord>,
    pub true_sparsity: f64,
    pub diagnostics: ThresholdDiagnostics,
}

impl ThresholdReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "theta,M,lambda_max,entropy_at_lambda_max")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{}",
                r.theta, r.m_free, r.lambda_max, r.entropy_at_lambda_max
            )?;
        }
        Ok(())
    }
}

const MONOTONE_TOL: f64 = 1e-9;

/// For each threshold: apply the disclosure rule, reduce, estimate the
/// maximal sparsity and the entropy curve. A failure at one threshold is
/// recorded and the sweep continues.
pub fn threshold_sweep(
    l_true: &LiabilityMatrix,
    theta_grid: &[f64],
    opts: &ThresholdOptions,
) -> Result<ThresholdReport> {
    if theta_grid.is_empty() {
        return Err(Error::InvalidParameter("theta grid is empty".into()));
    }
    if let Some(&t) = theta_grid.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidThreshold(t));
    }
    let slots = l_true.n() * l_true.n().saturating_sub(1);
    if slots == 0 {
        return Err(Error::ZeroDenominator);
    }
    let mut thetas = theta_grid.to_vec();
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();
    let true_sparsity = l_true.sparsity()?;
    let records = thetas
        .par_iter()
        .map(|&theta| sweep_point(l_true, theta, opts, slots, true_sparsity))
        .collect::<Vec<_>>();
    let diagnostics = diagnose(&records, true_sparsity);
    Ok(ThresholdReport {
        records,
        true_sparsity,
        diagnostics,
    })
}

fn sweep_point(
    l_true: &LiabilityMatrix,
    theta: f64,
    opts: &ThresholdOptions,
    slots: usize,
    true_sparsity: f64,
) -> ThresholdRecord {
    let mut rec = ThresholdRecord {
        theta,
        m_unknown: 0,
        m_free: 0,
        lambda_max: f64::NAN,
        lambda_max_free: f64::NAN,
        entropy_at_lambda_max: f64::NAN,
        curve: EntropyCurve::default(),
        known_positive: 0,
        slots,
        error: None,
    };
    if let Err(e) = fill_record(l_true, opts, &mut rec, true_sparsity) {
        log::warn!("threshold {theta}: {e}");
        rec.error = Some(e.to_string());
    }
    rec
}

fn fill_record(
    l_true: &LiabilityMatrix,
    opts: &ThresholdOptions,
    rec: &mut ThresholdRecord,
    true_sparsity: f64,
) -> Result<()> {
    let obs = make_observation(l_true, rec.theta, &opts.disclosed)?;
    let p = absorb_known(&obs)?;
    rec.m_unknown = obs.unknown().len();
    rec.m_free = p.m();
    rec.known_positive = obs.known_positive_count();
    if p.m() == 0 {
        rec.lambda_max = true_sparsity;
        rec.lambda_max_free = 0.0;
        rec.entropy_at_lambda_max = 0.0;
        return Ok(());
    }
    let g = build_factor_graph(&p)?;
    let lm = lambda_max(&g, &p, &opts.lambda_max)?;
    rec.lambda_max_free = lm.lambda_max;
    rec.lambda_max = rec.to_whole(lm.lambda_max, 0.0).0;
    rec.curve = sigma_curve(&g, &opts.z_grid, &opts.bp)?;
    let sigma = rec
        .curve
        .sigma_at(lm.lambda_max)
        .ok_or_else(|| Error::InvalidParameter("no converged entropy point".into()))?;
    rec.entropy_at_lambda_max = rec.to_whole(lm.lambda_max, sigma.max(0.0)).1;
    Ok(())
}

fn interpolate(curve: &[(f64, f64)], x: f64) -> Option<f64> {
    let mut pts = curve.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (first, last) = (pts.first()?, pts.last()?);
    if x < first.0 || x > last.0 {
        return None;
    }
    pts.windows(2)
        .find(|w| x >= w[0].0 && x <= w[1].0)
        .map(|w| {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if x1 - x0 <= f64::EPSILON {
                y0.max(y1)
            } else {
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        })
        .or(Some(first.1))
}

fn diagnose(records: &[ThresholdRecord], true_sparsity: f64) -> ThresholdDiagnostics {
    let ok: Vec<&ThresholdRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let lm: Vec<f64> = ok.iter().map(|r| r.lambda_max).collect();
    let up = lm.windows(2).all(|w| w[1] >= w[0] - MONOTONE_TOL);
    let down = lm.windows(2).all(|w| w[1] <= w[0] + MONOTONE_TOL);
    let lambda_max_direction = match (up, down) {
        (true, true) => "constant",
        (true, false) => "non-decreasing",
        (false, true) => "non-increasing",
        (false, false) => "mixed",
    }
    .to_string();
    let ent: Vec<f64> = ok.iter().map(|r| r.entropy_at_lambda_max).collect();
    let entropy_non_increasing_as_theta_decreases =
        ent.windows(2).all(|w| w[0] <= w[1] + MONOTONE_TOL);

    let curves: Vec<Vec<(f64, f64)>> = ok.iter().map(|r| r.whole_curve()).collect();
    let mut curves_nested = true;
    for pair in curves.windows(2) {
        let (small, large) = (&pair[0], &pair[1]);
        for &(x, y) in small {
            if let Some(y_large) = interpolate(large, x) {
                if y > y_large + 1e-6 {
                    curves_nested = false;
                }
            }
        }
    }
    ThresholdDiagnostics {
        lambda_max_direction,
        lambda_max_gap_at_min_theta: lm.first().map_or(f64::NAN, |l| (l - true_sparsity).abs()),
        entropy_non_increasing_as_theta_decreases,
        entropy_at_min_theta: ent.first().copied().unwrap_or(f64::NAN),
        curves_nested,
    }
}
