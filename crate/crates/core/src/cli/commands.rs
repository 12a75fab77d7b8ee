use std::collections::BTreeSet;

use serde::Serialize;

use super::config::RunConfig;
use super::manifest::Manifest;
use super::{ReconMethod, Task};
use crate::bpcore::{build_factor_graph, sigma_curve, Fugacity};
use crate::contagion::{
    compare_methods, default_curve, write_curves_csv, CapitalVector, CompareOptions, DefaultCurve,
    Method,
};
use crate::ensembles::generate;
use crate::error::{Error, Result};
use crate::maxent::{me_on_support, me_reconstruct};
use crate::netcore::{
    absorb_known, make_observation, support_of, whole_matrix_sparsity, Entry, LiabilityMatrix,
    Observation, ReducedProblem, Support, SupportFile,
};
use crate::rng::child_seed;
use crate::sampler::{lambda_max, sample_supports, LambdaMaxOptions};
use crate::thresholdlab::{threshold_sweep, ThresholdOptions};

pub(super) fn execute(task: &Task) -> Result<Manifest> {
    let mut m = Manifest::new(task);
    let cfg = &task.config;
    match task.command.as_str() {
        "generate" => cmd_generate(cfg, &mut m)?,
        "observe" => cmd_observe(cfg, &mut m)?,
        "reconstruct" => {
            let method = task
                .method
                .ok_or_else(|| Error::Config(vec!["method: required for `reconstruct`".into()]))?;
            cmd_reconstruct(cfg, method, &mut m)?
        }
        "sample" => cmd_sample(cfg, &mut m)?,
        "lambda-max" => cmd_lambda_max(cfg, &mut m)?,
        "entropy" => cmd_entropy(cfg, &mut m)?,
        "stress" => cmd_stress(cfg, &mut m)?,
        "threshold-sweep" => cmd_threshold_sweep(cfg, &mut m)?,
        "compare" => cmd_compare(cfg, &mut m)?,
        other => return Err(Error::InvalidParameter(format!("unknown command {other:?}"))),
    }
    m.save()?;
    Ok(m)
}

fn disclosed(cfg: &RunConfig) -> BTreeSet<Entry> {
    cfg.disclosed.iter().map(|&[i, j]| (i, j)).collect()
}

fn load_matrix(cfg: &RunConfig, m: &mut Manifest) -> Result<LiabilityMatrix> {
    if let Some(path) = &cfg.inputs.matrix {
        return m.stage("load-matrix", || Ok(LiabilityMatrix::load(path)?.0));
    }
    if let Some(spec) = &cfg.ensemble {
        m.seeds.insert("ensemble".into(), spec.seed);
        return m.stage("generate", || Ok(generate(spec)?.0));
    }
    Err(Error::Config(vec![
        "inputs.matrix: a matrix file or an ensemble block is required".into(),
    ]))
}

fn load_capital(cfg: &RunConfig, n: usize) -> Result<CapitalVector> {
    let cap = if let Some(path) = &cfg.inputs.capital {
        CapitalVector::read_csv(&std::fs::read_to_string(path)?)?
    } else if let Some(spec) = &cfg.ensemble {
        generate(spec)?.1
    } else {
        return Err(Error::Config(vec![
            "inputs.capital: a capital file or an ensemble block is required".into(),
        ]));
    };
    if cap.len() != n {
        return Err(Error::InvalidParameter(format!(
            "capital vector has {} banks, matrix has {n}",
            cap.len()
        )));
    }
    Ok(cap)
}

/// The observation, and the true matrix when one is available.
fn load_observation(cfg: &RunConfig, m: &mut Manifest) -> Result<(Observation, Option<LiabilityMatrix>)> {
    if let Some(path) = &cfg.inputs.observation {
        let obs = m.stage("load-observation", || Observation::from_json(&std::fs::read_to_string(path)?))?;
        return Ok((obs, None));
    }
    let l = load_matrix(cfg, m)?;
    let obs = m.stage("observe", || make_observation(&l, cfg.theta, &disclosed(cfg)))?;
    Ok((obs, Some(l)))
}

fn load_problem(cfg: &RunConfig, m: &mut Manifest) -> Result<(Observation, ReducedProblem, Option<LiabilityMatrix>)> {
    let (obs, l) = load_observation(cfg, m)?;
    let p = m.stage("absorb-known", || absorb_known(&obs))?;
    Ok((obs, p, l))
}

fn cmd_generate(cfg: &RunConfig, m: &mut Manifest) -> Result<()> {
    let spec = cfg
        .ensemble
        .as_ref()
        .ok_or_else(|| Error::Config(vec!["ensemble: required for `generate`".into()]))?;
    m.seeds.insert("ensemble".into(), spec.seed);
    let (l, cap) = m.stage("generate", || generate(spec))?;
    m.write("matrix.csv", |w| l.write_csv(w, cfg.theta))?;
    m.write("capital.csv", |w| cap.write_csv(w))
}

fn cmd_observe(cfg: &RunConfig, m: &mut Manifest) -> Result<()> {
    let (obs, p, _) = load_problem(cfg, m)?;
    m.write("observation.json", |w| {
        writeln!(w, "{}", obs.to_json()?)?;
        Ok(())
    })?;
    #[derive(Serialize)]
    struct Summary {
        n: usize,
        theta: f64,
        known: usize,
        unknown: usize,
        free: usize,
        total_residual: f64,
    }
    m.write_json(
        "observation_summary.json",
        &Summary {
            n: obs.n(),
            theta: obs.theta(),
            known: obs.known().len(),
            unknown: obs.unknown().len(),
            free: p.m(),
            total_residual: p.total(),
        },
    )
}

fn cmd_reconstruct(cfg: &RunConfig, method: ReconMethod, m: &mut Manifest) -> Result<()> {
    let (obs, p, l_true) = load_problem(cfg, m)?;
    let x = match method {
        ReconMethod::Me => m.stage("me", || me_reconstruct(&p, &cfg.me))?,
        ReconMethod::SupportMe => {
            let a = if let Some(path) = &cfg.inputs.support {
                let file: SupportFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
                Support::from_file(&file, p.unknown())?
            } else if let Some(l) = &l_true {
                support_of(l, p.unknown())?
            } else {
                return Err(Error::Config(vec![
                    "inputs.support: required for support-me without a true matrix".into(),
                ]));
            };
            m.stage("support-me", || me_on_support(&p, &a, &cfg.me))?
        }
    };
    let l = obs.assemble(p.unknown().iter().zip(x.iter().copied()));
    m.write("reconstruction.csv", |w| l.write_csv(w, obs.theta()))
}

fn cmd_sample(cfg: &RunConfig, m: &mut Manifest) -> Result<()> {
    let seed = cfg.require_seed("sample")?;
    m.seeds.insert("sample".into(), seed);
    let (obs, p, _) = load_problem(cfg, m)?;
    let g = build_factor_graph(&p)?;
    let z = Fugacity::finite(cfg.sample.z)?;
    let report = m.stage("decimation", || {
        sample_supports(&g, &p, z, cfg.sample.count, seed, &cfg.decimation)
    })?;
    m.write("samples.csv", |w| {
        writeln!(w, "sample,completed,h_zero,feasible,links,sparsity,sparsity_whole,restarts")?;
        for (k, s) in report.samples.iter().enumerate() {
            let (links, whole) = match &s.support {
                Some(a) => (a.count_ones() as f64, whole_matrix_sparsity(&obs, a)?),
                None => (f64::NAN, f64::NAN),
            };
            writeln!(
                w,
                "{k},{},{},{},{links},{},{whole},{}",
                s.support.is_some(),
                s.h_zero,
                s.feasible,
                s.sparsity,
                s.restarts
            )?;
        }
        Ok(())
    })?;
    let files = report
        .samples
        .iter()
        .map(|s| s.support.as_ref().map(|a| a.to_file(p.unknown())).transpose())
        .collect::<Result<Vec<_>>>()?;
    m.write_json("supports.json", &files)?;
    m.write_json("sample_stats.json", &report.stats)?;
    let failed: Vec<String> = report
        .samples
        .iter()
        .enumerate()
        .filter_map(|(k, s)| s.error.as_ref().map(|e| format!("sample {k}: {e}")))
        .collect();
    if failed.len() == report.samples.len() {
        m.failures.extend(failed);
    }
    Ok(())
}

fn cmd_lambda_max(cfg: &RunConfig, m: &mut Manifest) -> Result<()> {
    let seed = cfg.require_seed("lambda-max")?;
    m.seeds.insert("lambda_max".into(), seed);
    let (obs, p, _) = load_problem(cfg, m)?;
    let g = build_factor_graph(&p)?;
    let opts = LambdaMaxOptions {
        trials: cfg.lambda_max.trials,
        seed,
        decimation: cfg.decimation,
    };
    let lm = m.stage("lambda-max", || lambda_max(&g, &p, &opts))?;
    let whole = whole_matrix_sparsity(&obs, &lm.witness)?;
    m.write("lambda_max.csv", |w| {
        writeln!(w, "m,links,lambda_max,lambda_max_whole,trials,decimations_completed")?;
        writeln!(
            w,
            "{},{},{},{whole},{},{}",
            p.m(),
            lm.witness.count_ones(),
            lm.lambda_max,
            lm.trials,
            lm.decimations_completed
        )?;
        Ok(())
    })?;
    m.write_json("witness.json", &lm.witness.to_file(p.unknown())?)?;
    if lm.flagged {
        log::warn!("no decimation completed; witness comes from pruning the full support");
    }
    Ok(())
}

fn cmd_entropy(cfg: &RunConfig, m: &mut Manifest) -> Result<()> {
    let (_, p, _) = load_problem(cfg, m)?;
    let g = build_factor_graph(&p)?;
    let curve = m.stage("entropy", || sigma_curve(&g, &cfg.z_grid, &cfg.bp))?;
    m.write("entropy.csv", |w| curve.write_csv(w))?;
    let bad: Vec<f64> = curve.points.iter().filter(|p| !p.converged).map(|p| p.z).collect();
    if !bad.is_empty() {
        log::warn!("belief propagation did not converge at z = {bad:?}");
    }
    Ok(())
}

fn cmd_stress(cfg: &RunConfig, m: &mut Manifest) -> Result<()> {
    let l = load_matrix(cfg, m)?;
    let cap = load_capital(cfg, l.n())?;
    let curve = m.stage("stress", || default_curve(&l, &cap, &cfg.alpha_grid))?;
    m.write("stress.csv", |w| curve.write_csv(w))
}

fn cmd_threshold_sweep(cfg: &RunConfig, m: &mut Manifest) -> Result<()> {
    let seed = cfg.require_seed("threshold-sweep")?;
    m.seeds.insert("lambda_max".into(), seed);
    let l = load_matrix(cfg, m)?;
    let opts = ThresholdOptions {
        z_grid: cfg.z_grid.clone(),
        bp: cfg.bp,
        lambda_max: LambdaMaxOptions {
            trials: cfg.lambda_max.trials,
            seed,
            decimation: cfg.decimation,
        },
        disclosed: disclosed(cfg),
    };
    let report = m.stage("threshold-sweep", || threshold_sweep(&l, &cfg.theta_grid, &opts))?;
    m.write("threshold.csv", |w| report.write_csv(w))?;
    for (k, rec) in report.records.iter().enumerate() {
        m.write(&format!("sigma_theta_{k:02}.csv"), |w| rec.write_curve_csv(w))?;
        if let Some(e) = &rec.error {
            m.failures.push(format!("theta {}: {e}", rec.theta));
        }
    }
    m.write_json("threshold_diagnostics.json", &report.diagnostics)
}

#[derive(Serialize)]
struct MethodSummary {
    method: Method,
    mean_sparsity: Option<f64>,
    errors: Vec<String>,
}

#[derive(Serialize)]
struct CompareSummary {
    replicas: usize,
    mean_true_sparsity: f64,
    methods: Vec<MethodSummary>,
}

fn cmd_compare(cfg: &RunConfig, m: &mut Manifest) -> Result<()> {
    let seed = cfg.require_seed("compare")?;
    m.seeds.insert("compare".into(), seed);
    let cc = &cfg.compare;
    let fixed = cfg.inputs.matrix.is_some();
    if fixed && cc.replicas > 1 {
        return Err(Error::Config(vec![
            "compare.replicas: must be 1 when inputs.matrix is given".into(),
        ]));
    }
    let mut per_method: Vec<Vec<DefaultCurve>> = vec![Vec::new(); cc.methods.len()];
    let mut sparsities: Vec<Vec<f64>> = vec![Vec::new(); cc.methods.len()];
    let mut errors: Vec<Vec<String>> = vec![Vec::new(); cc.methods.len()];
    let mut true_sparsity = 0.0;
    for r in 0..cc.replicas {
        let (l, cap) = if fixed {
            let l = load_matrix(cfg, m)?;
            let cap = load_capital(cfg, l.n())?;
            (l, cap)
        } else {
            let spec = cfg
                .ensemble
                .as_ref()
                .ok_or_else(|| Error::Config(vec!["ensemble: required for `compare`".into()]))?;
            let s = if r == 0 { spec.seed } else { child_seed(spec.seed, r as u64) };
            m.seeds.insert(format!("ensemble_replica_{r}"), s);
            m.stage("generate", || generate(&spec.with_seed(s)))?
        };
        let opts = CompareOptions {
            theta: cfg.theta,
            disclosed: disclosed(cfg),
            seed: child_seed(seed, r as u64),
            support_samples: cc.support_samples,
            lambda_max_trials: cc.lambda_max_trials,
            me: cfg.me,
            decimation: cfg.decimation,
            exclude_bank: cc.exclude_closure_bank.then_some(0),
        };
        let report = m.stage(&format!("compare-replica-{r}"), || {
            compare_methods(&l, &cap, &cfg.alpha_grid, &cc.methods, &opts)
        })?;
        true_sparsity += report.true_sparsity / cc.replicas as f64;
        for (k, o) in report.outcomes.iter().enumerate() {
            if let Some(c) = &o.curve {
                per_method[k].push(c.clone());
            }
            if let Some(s) = o.sparsity {
                sparsities[k].push(s);
            }
            if let Some(e) = &o.error {
                errors[k].push(format!("replica {r}: {e}"));
            }
        }
    }
    let mut curves = Vec::new();
    let mut summary = CompareSummary {
        replicas: cc.replicas,
        mean_true_sparsity: true_sparsity,
        methods: Vec::new(),
    };
    for (k, &method) in cc.methods.iter().enumerate() {
        let curve = match per_method[k].len() {
            0 => None,
            1 if cc.replicas == 1 => Some(per_method[k][0].clone()),
            _ => Some(DefaultCurve::average(method.name(), &per_method[k])?),
        };
        if let Some(c) = &curve {
            m.write(&format!("compare_{}.csv", method.name()), |w| c.write_csv(w))?;
            curves.push(c.clone());
        }
        for e in &errors[k] {
            m.failures.push(format!("{method}: {e}"));
        }
        let s = &sparsities[k];
        summary.methods.push(MethodSummary {
            method,
            mean_sparsity: (!s.is_empty()).then(|| s.iter().sum::<f64>() / s.len() as f64),
            errors: errors[k].clone(),
        });
    }
    let refs: Vec<&DefaultCurve> = curves.iter().collect();
    m.write("compare.csv", |w| write_curves_csv(&refs, w))?;
    m.write_json("compare_summary.json", &summary)
}
