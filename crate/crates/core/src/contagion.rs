//! Furfine sequential default cascades and the reconstruction comparison
//! experiment built on them.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bpcore::build_factor_graph;
use crate::error::{Error, Result};
use crate::maxent::{me_on_support, me_reconstruct, MeOptions};
use crate::netcore::{
    absorb_known, make_observation, support_of, whole_matrix_sparsity, Entry, LiabilityMatrix,
    Observation, ReducedProblem, Support,
};
use crate::rng;
use crate::sampler::{lambda_max, typical_support, DecimationOptions, LambdaMaxOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CapitalVector(Vec<f64>);

impl CapitalVector {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = c.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "capital of bank {i} must be finite and >= 0, got {v}"
            )));
        }
        Ok(Self(c))
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::new(vec![c; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|c| c * factor).collect())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bank,capital")?;
        for (i, c) in self.0.iter().enumerate() {
            writeln!(w, "{i},{c}")?;
        }
        Ok(())
    }

    pub fn read_csv(s: &str) -> Result<Self> {
        let mut c = Vec::new();
        for (k, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("bank") {
                continue;
            }
            let parsed = line
                .split(',')
                .nth(1)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Parse(format!("capital line {}: {line:?}", k + 1)))?;
            c.push(parsed);
        }
        Self::new(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeResult {
    pub trigger: usize,
    /// Default sets `D_0 = {trigger}, D_1, ...`; every set is nonempty.
    pub rounds: Vec<Vec<usize>>,
    pub survivors: Vec<usize>,
    pub default_fraction: f64,
}

impl CascadeResult {
    pub fn defaulted(&self) -> BTreeSet<usize> {
        self.rounds.iter().flatten().copied().collect()
    }

    /// Default fraction among the banks other than `bank`.
    pub fn fraction_excluding(&self, bank: usize) -> f64 {
        let n = self.rounds.iter().map(Vec::len).sum::<usize>() + self.survivors.len();
        if n <= 1 {
            return 0.0;
        }
        let d = self.rounds.iter().flatten().filter(|&&b| b != bank).count();
        d as f64 / (n - 1) as f64
    }
}

/// Bank `trigger` defaults at step 0. At each later step every surviving
/// bank `i` loses `alpha * L_ij` on each counterparty `j` that defaulted in
/// the previous step, and defaults once its capital is strictly negative.
pub fn furfine_cascade(
    l: &LiabilityMatrix,
    cap: &CapitalVector,
    alpha: f64,
    trigger: usize,
) -> Result<CascadeResult> {
    let n = l.n();
    if cap.len() != n {
        return Err(Error::InvalidParameter(format!(
            "capital vector has {} banks, matrix has {n}",
            cap.len()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha must be in [0, 1], got {alpha}")));
    }
    if trigger >= n {
        return Err(Error::InvalidParameter(format!("trigger {trigger} out of range for {n} banks")));
    }
    let mut c = cap.as_slice().to_vec();
    let mut down = vec![false; n];
    down[trigger] = true;
    let mut rounds = vec![vec![trigger]];
    loop {
        let last = rounds.last().expect("nonempty");
        let mut next = Vec::new();
        for i in 0..n {
            if down[i] {
                continue;
            }
            let exposure: f64 = last.iter().map(|&j| l.get(i, j)).sum();
            c[i] -= alpha * exposure;
            if c[i] < 0.0 {
                next.push(i);
            }
        }
        if next.is_empty() {
            break;
        }
        next.iter().for_each(|&i| down[i] = true);
        rounds.push(next);
    }
    let survivors: Vec<usize> = (0..n).filter(|&i| !down[i]).collect();
    let default_fraction = (n - survivors.len()) as f64 / n as f64;
    Ok(CascadeResult {
        trigger,
        rounds,
        survivors,
        default_fraction,
    })
}

/// Mean default fraction per loss-given-default value. `stderr` is the
/// standard error of that mean: across triggers for a single matrix, across
/// support samples for aggregated curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaultCurve {
    pub method: String,
    pub alphas: Vec<f64>,
    pub mean_fraction: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `per_trigger[k][z]`: default fraction at `alphas[k]` when bank `z`
    /// starts the cascade. Empty for aggregated curves.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_trigger: Vec<Vec<f64>>,
}

impl DefaultCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "alpha,mean_fraction,stderr,method")?;
        self.write_rows(&mut w)
    }

    fn write_rows<W: Write>(&self, w: &mut W) -> Result<()> {
        for k in 0..self.alphas.len() {
            writeln!(
                w,
                "{},{},{},{}",
                self.alphas[k], self.mean_fraction[k], self.stderr[k], self.method
            )?;
        }
        Ok(())
    }

    /// Pointwise mean of several curves on the same grid, with the standard
    /// error across curves.
    pub fn average(method: &str, curves: &[DefaultCurve]) -> Result<Self> {
        let first = curves
            .first()
            .ok_or_else(|| Error::InvalidParameter("no curves to average".into()))?;
        if curves.iter().any(|c| c.alphas != first.alphas) {
            return Err(Error::InvalidParameter("curves use different alpha grids".into()));
        }
        let k = curves.len() as f64;
        let mut mean = Vec::with_capacity(first.alphas.len());
        let mut stderr = Vec::with_capacity(first.alphas.len());
        for a in 0..first.alphas.len() {
            let (m, se) = mean_stderr(curves.iter().map(|c| c.mean_fraction[a]), k);
            mean.push(m);
            stderr.push(se);
        }
        Ok(Self {
            method: method.to_string(),
            alphas: first.alphas.clone(),
            mean_fraction: mean,
            stderr,
            per_trigger: Vec::new(),
        })
    }
}

fn mean_stderr(values: impl Iterator<Item = f64> + Clone, k: f64) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / k;
    if k < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Writes several curves into one CSV, in the given order.
pub fn write_curves_csv<W: Write>(curves: &[&DefaultCurve], mut w: W) -> Result<()> {
    writeln!(w, "alpha,mean_fraction,stderr,method")?;
    for c in curves {
        c.write_rows(&mut w)?;
    }
    Ok(())
}

fn check_grid(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(Error::InvalidParameter("alpha grid is empty".into()));
    }
    if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::InvalidParameter("alpha grid values must lie in [0, 1]".into()));
    }
    if alphas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("alpha grid must be sorted".into()));
    }
    Ok(())
}

/// Every trigger at every grid point, averaged over triggers.
pub fn default_curve(l: &LiabilityMatrix, cap: &CapitalVector, alphas: &[f64]) -> Result<DefaultCurve> {
    default_curve_excluding(l, cap, alphas, None)
}

/// As [`default_curve`]; with `exclude = Some(b)`, bank `b` neither starts a
/// cascade nor counts in the default fraction (it still transmits losses).
pub fn default_curve_excluding(
    l: &LiabilityMatrix,
    cap: &CapitalVector,
    alphas: &[f64],
    exclude: Option<usize>,
) -> Result<DefaultCurve> {
    check_grid(alphas)?;
    let n = l.n();
    let triggers: Vec<usize> = (0..n).filter(|&z| Some(z) != exclude).collect();
    if triggers.is_empty() {
        return Err(Error::InvalidParameter("no banks to trigger".into()));
    }
    let per_trigger = alphas
        .par_iter()
        .map(|&alpha| {
            triggers
                .iter()
                .map(|&z| {
                    let r = furfine_cascade(l, cap, alpha, z)?;
                    Ok(match exclude {
                        Some(b) => r.fraction_excluding(b),
                        None => r.default_fraction,
                    })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let k = triggers.len() as f64;
    let (mean_fraction, stderr) = per_trigger
        .iter()
        .map(|row| mean_stderr(row.iter().copied(), k))
        .unzip();
    Ok(DefaultCurve {
        method: "true".into(),
        alphas: alphas.to_vec(),
        mean_fraction,
        stderr,
        per_trigger,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    True,
    MeDense,
    MeOnTrueSupport,
    MeOnTypicalSupport,
    MeOnSparsestSupport,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::True,
        Method::MeDense,
        Method::MeOnTrueSupport,
        Method::MeOnTypicalSupport,
        Method::MeOnSparsestSupport,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::True => "true",
            Method::MeDense => "me_dense",
            Method::MeOnTrueSupport => "me_on_true_support",
            Method::MeOnTypicalSupport => "me_on_typical_support",
            Method::MeOnSparsestSupport => "me_on_sparsest_support",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareOptions {
    pub theta: f64,
    pub disclosed: BTreeSet<Entry>,
    pub seed: u64,
    /// Supports drawn for the typical-support curve.
    pub support_samples: usize,
    pub lambda_max_trials: usize,
    pub me: MeOptions,
    pub decimation: DecimationOptions,
    /// Bank left out of triggers and fractions (the closure bank).
    pub exclude_bank: Option<usize>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            theta: 1.0,
            disclosed: BTreeSet::new(),
            seed: 0,
            support_samples: 10,
            lambda_max_trials: 10,
            me: MeOptions::default(),
            decimation: DecimationOptions::default(),
            exclude_bank: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    pub curve: Option<DefaultCurve>,
    pub error: Option<String>,
    /// Whole-matrix sparsity of the reconstructed network(s), averaged over
    /// support samples.
    pub sparsity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub outcomes: Vec<MethodOutcome>,
    pub true_sparsity: f64,
    /// Free entries after the disclosure rule.
    pub unknown_count: usize,
}

impl ComparisonReport {
    pub fn curve(&self, method: Method) -> Option<&DefaultCurve> {
        self.outcomes
            .iter()
            .find(|o| o.method == method)
            .and_then(|o| o.curve.as_ref())
    }

    pub fn outcome(&self, method: Method) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.method == method)
    }
}

struct Setup<'a> {
    l_true: &'a LiabilityMatrix,
    cap: &'a CapitalVector,
    alphas: &'a [f64],
    obs: Observation,
    p: ReducedProblem,
    opts: &'a CompareOptions,
}

impl Setup<'_> {
    fn curve_of(&self, method: Method, l: &LiabilityMatrix) -> Result<DefaultCurve> {
        let mut c = default_curve_excluding(l, self.cap, self.alphas, self.opts.exclude_bank)?;
        c.method = method.name().into();
        Ok(c)
    }

    fn assemble(&self, x: &[f64]) -> LiabilityMatrix {
        self.obs.assemble(self.p.unknown().iter().zip(x.iter().copied()))
    }

    fn on_support(&self, method: Method, a: &Support) -> Result<(DefaultCurve, f64)> {
        let x = me_on_support(&self.p, a, &self.opts.me)?;
        let curve = self.curve_of(method, &self.assemble(&x))?;
        Ok((curve, whole_matrix_sparsity(&self.obs, a)?))
    }

    fn run(&self, method: Method) -> Result<(DefaultCurve, f64)> {
        let p = &self.p;
        match method {
            Method::True => Ok((self.curve_of(method, self.l_true)?, self.l_true.sparsity()?)),
            Method::MeDense => {
                let x = me_reconstruct(p, &self.opts.me)?;
                let l = self.assemble(&x);
                Ok((self.curve_of(method, &l)?, l.sparsity()?))
            }
            Method::MeOnTrueSupport => {
                let a = support_of(self.l_true, p.unknown())?;
                self.on_support(method, &a)
            }
            Method::MeOnTypicalSupport => {
                let a_true = support_of(self.l_true, p.unknown())?;
                let target = if p.m() == 0 {
                    0.0
                } else {
                    1.0 - a_true.count_ones() as f64 / p.m() as f64
                };
                let g = build_factor_graph(p)?;
                let samples = self.opts.support_samples.max(1);
                let runs = (0..samples)
                    .into_par_iter()
                    .map(|s| {
                        let seed = rng::child_seed(self.opts.seed, s as u64);
                        let a = typical_support(&g, p, target, seed, &self.opts.decimation)?;
                        self.on_support(method, &a)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let curves: Vec<DefaultCurve> = runs.iter().map(|r| r.0.clone()).collect();
                let sparsity = runs.iter().map(|r| r.1).sum::<f64>() / runs.len() as f64;
                Ok((DefaultCurve::average(method.name(), &curves)?, sparsity))
            }
            Method::MeOnSparsestSupport => {
                let g = build_factor_graph(p)?;
                let lm = lambda_max(
                    &g,
                    p,
                    &LambdaMaxOptions {
                        trials: self.opts.lambda_max_trials,
                        seed: rng::child_seed(self.opts.seed, u64::MAX),
                        decimation: self.opts.decimation,
                    },
                )?;
                self.on_support(method, &lm.witness)
            }
        }
    }
}

/// Stress-tests the true matrix and each requested reconstruction of its
/// partially observed version. Reconstruction failures are recorded per
/// method and do not abort the comparison.
pub fn compare_methods(
    l_true: &LiabilityMatrix,
    cap: &CapitalVector,
    alphas: &[f64],
    methods: &[Method],
    opts: &CompareOptions,
) -> Result<ComparisonReport> {
    check_grid(alphas)?;
    if cap.len() != l_true.n() {
        return Err(Error::InvalidParameter(format!(
            "capital vector has {} banks, matrix has {}",
            cap.len(),
            l_true.n()
        )));
    }
    let obs = make_observation(l_true, opts.theta, &opts.disclosed)?;
    let p = absorb_known(&obs)?;
    let setup = Setup {
        l_true,
        cap,
        alphas,
        obs,
        p,
        opts,
    };
    let mut outcomes = Vec::with_capacity(methods.len());
    for &method in methods {
        let outcome = match setup.run(method) {
            Ok((curve, sparsity)) => MethodOutcome {
                method,
                curve: Some(curve),
                error: None,
                sparsity: Some(sparsity),
            },
            Err(e) => {
                log::warn!("{method} reconstruction failed: {e}");
                MethodOutcome {
                    method,
                    curve: None,
                    error: Some(e.to_string()),
                    sparsity: None,
                }
            }
        };
        outcomes.push(outcome);
    }
    Ok(ComparisonReport {
        outcomes,
        true_sparsity: l_true.sparsity()?,
        unknown_count: setup.p.m(),
    })
}
