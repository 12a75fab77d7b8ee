//! Synthetic interbank networks: independent entries with a fixed link
//! probability, uniform or shifted-Pareto weights, and exogenous capitals.

use rand::distributions::{Distribution, Open01};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::contagion::CapitalVector;
use crate::error::{Error, Result};
use crate::netcore::LiabilityMatrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    Uniform,
    Powerlaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapitalSpec {
    Constant(f64),
    Uniform { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub n: usize,
    /// Probability that an off-diagonal entry is positive.
    pub link_prob: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    pub capital: CapitalSpec,
    pub seed: u64,
    /// Reserve bank 0 as the external economy and use it to balance every
    /// other bank's lending against its borrowing.
    #[serde(default)]
    pub closure: bool,
}

fn default_b() -> f64 {
    0.01
}

fn default_mu() -> f64 {
    2.0
}

impl EnsembleSpec {
    pub fn uniform(n: usize, link_prob: f64, capital: CapitalSpec, seed: u64) -> Self {
        Self {
            kind: EnsembleKind::Uniform,
            n,
            link_prob,
            b: default_b(),
            mu: default_mu(),
            capital,
            seed,
            closure: false,
        }
    }

    pub fn powerlaw(n: usize, link_prob: f64, b: f64, mu: f64, capital: CapitalSpec, seed: u64) -> Self {
        Self {
            kind: EnsembleKind::Powerlaw,
            n,
            link_prob,
            b,
            mu,
            capital,
            seed,
            closure: false,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Checks every field; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::InvalidParameter(format!("{field}: {msg}")));
        if self.n == 0 {
            return bad("n", "must be >= 1".into());
        }
        if self.closure && self.n < 2 {
            return bad("n", "closure needs at least 2 banks".into());
        }
        if !(0.0..=1.0).contains(&self.link_prob) {
            return bad("link_prob", format!("must be in [0, 1], got {}", self.link_prob));
        }
        if self.kind == EnsembleKind::Powerlaw {
            if !(self.b > 0.0) || !self.b.is_finite() {
                return bad("b", format!("must be > 0, got {}", self.b));
            }
            if !(self.mu > 1.0) || !self.mu.is_finite() {
                return bad("mu", format!("must be > 1, got {}", self.mu));
            }
        }
        match self.capital {
            CapitalSpec::Constant(c) if !(c >= 0.0) || !c.is_finite() => {
                bad("capital.constant", format!("must be >= 0, got {c}"))
            }
            CapitalSpec::Uniform { min, max } if !(min >= 0.0) || !max.is_finite() => bad(
                "capital.uniform",
                format!("bounds must be finite and >= 0, got [{min}, {max}]"),
            ),
            CapitalSpec::Uniform { min, max } if min > max => {
                bad("capital.uniform", format!("min {min} exceeds max {max}"))
            }
            _ => Ok(()),
        }
    }
}

/// Inverse CDF of the shifted Pareto law with density `~ (b + x)^{-mu-1}`.
pub fn powerlaw_quantile(u: f64, b: f64, mu: f64) -> f64 {
    b * ((1.0 - u).powf(-1.0 / mu) - 1.0)
}

/// `F(x) = 1 - (b / (b + x))^mu`.
pub fn powerlaw_cdf(x: f64, b: f64, mu: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        1.0 - (b / (b + x)).powf(mu)
    }
}

/// Dispatches on `spec.kind`.
pub fn generate(spec: &EnsembleSpec) -> Result<(LiabilityMatrix, CapitalVector)> {
    spec.validate()?;
    let mut r = rng::stream(spec.seed, 0);
    let first = usize::from(spec.closure);
    let mut l = LiabilityMatrix::zeros(spec.n);
    for i in first..spec.n {
        for j in first..spec.n {
            if i == j {
                continue;
            }
            if r.gen::<f64>() < spec.link_prob {
                let u: f64 = Open01.sample(&mut r);
                let v = match spec.kind {
                    EnsembleKind::Uniform => u,
                    EnsembleKind::Powerlaw => powerlaw_quantile(u, spec.b, spec.mu),
                };
                l.set(i, j, v);
            }
        }
    }
    if spec.closure {
        close_economy(&mut l);
    }
    let cap = assign_capital(spec, &mut rng::stream(spec.seed, 1))?;
    Ok((l, cap))
}

pub fn gen_uniform(spec: &EnsembleSpec) -> Result<(LiabilityMatrix, CapitalVector)> {
    if spec.kind != EnsembleKind::Uniform {
        return Err(Error::InvalidParameter("kind: expected uniform".into()));
    }
    generate(spec)
}

pub fn gen_powerlaw(spec: &EnsembleSpec) -> Result<(LiabilityMatrix, CapitalVector)> {
    if spec.kind != EnsembleKind::Powerlaw {
        return Err(Error::InvalidParameter("kind: expected powerlaw".into()));
    }
    generate(spec)
}

/// Bank 0 lends each net borrower its excess borrowing and borrows each net
/// lender's excess lending, so every bank other than 0 ends with equal out-
/// and in-strength. Bank 0's own row and column are overwritten.
pub fn close_economy(l: &mut LiabilityMatrix) {
    let n = l.n();
    for k in 1..n {
        l.set(0, k, 0.0);
        l.set(k, 0, 0.0);
    }
    let out = l.out_strength();
    let inn = l.in_strength();
    for k in 1..n {
        let net = out[k] - inn[k];
        if net > 0.0 {
            l.set(0, k, net);
        } else if net < 0.0 {
            l.set(k, 0, -net);
        }
    }
}

pub fn assign_capital(spec: &EnsembleSpec, rng: &mut rng::Rng) -> Result<CapitalVector> {
    match spec.capital {
        CapitalSpec::Constant(c) => CapitalVector::constant(spec.n, c),
        CapitalSpec::Uniform { min, max } if min > max => Err(Error::InvalidParameter(format!(
            "capital.uniform: min {min} exceeds max {max}"
        ))),
        CapitalSpec::Uniform { min, max } => {
            CapitalVector::new((0..spec.n).map(|_| min + (max - min) * rng.gen::<f64>()).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::validate_matrix;

    #[test]
    fn zero_link_probability_gives_zero_matrix() {
        let (l, cap) = gen_uniform(&EnsembleSpec::uniform(10, 0.0, CapitalSpec::Constant(0.3), 1)).unwrap();
        assert_eq!(l.positive_count(), 0);
        assert_eq!(cap.as_slice(), &[0.3; 10]);
    }

    #[test]
    fn full_link_probability_fills_off_diagonal() {
        let (l, _) = gen_uniform(&EnsembleSpec::uniform(50, 1.0, CapitalSpec::Constant(0.3), 2)).unwrap();
        assert_eq!(l.positive_count(), 2450);
        for i in 0..50 {
            assert_eq!(l.get(i, i), 0.0);
        }
    }

    #[test]
    fn same_seed_same_matrix() {
        let spec = EnsembleSpec::powerlaw(20, 0.5, 0.01, 2.0, CapitalSpec::Uniform { min: 0.0, max: 1.0 }, 7);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        assert_ne!(generate(&spec).unwrap().0, generate(&spec.with_seed(8)).unwrap().0);
    }

    #[test]
    fn closure_balances_every_bank() {
        let mut spec = EnsembleSpec::uniform(8, 0.6, CapitalSpec::Constant(0.1), 3);
        spec.closure = true;
        let (l, _) = generate(&spec).unwrap();
        assert!(validate_matrix(&l).is_valid());
        let (out, inn) = (l.out_strength(), l.in_strength());
        for k in 0..8 {
            assert!((out[k] - inn[k]).abs() < 1e-12, "bank {k}");
        }
    }

    #[test]
    fn invalid_specs_name_the_field() {
        let mut spec = EnsembleSpec::uniform(5, 1.5, CapitalSpec::Constant(0.3), 0);
        let e = spec.validate().unwrap_err().to_string();
        assert!(e.contains("link_prob"), "{e}");
        spec.link_prob = 0.5;
        spec.kind = EnsembleKind::Powerlaw;
        spec.mu = 1.0;
        assert!(spec.validate().unwrap_err().to_string().contains("mu"));
        spec.mu = 2.0;
        spec.capital = CapitalSpec::Uniform { min: 0.5, max: 0.2 };
        assert!(spec.validate().is_err());
        assert!(gen_uniform(&spec).is_err());
    }

    #[test]
    fn degenerate_capital_interval() {
        let spec = EnsembleSpec::uniform(6, 0.5, CapitalSpec::Uniform { min: 0.2, max: 0.2 }, 0);
        let cap = assign_capital(&spec, &mut rng::stream(0, 1)).unwrap();
        assert!(cap.as_slice().iter().all(|&c| c == 0.2));
    }

    #[test]
    fn quantile_inverts_cdf() {
        for u in [0.1, 0.5, 0.9] {
            let x = powerlaw_quantile(u, 0.01, 2.0);
            assert!((powerlaw_cdf(x, 0.01, 2.0) - u).abs() < 1e-12);
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let text = r#"{"kind":"powerlaw","n":50,"link_prob":0.5,"b":0.01,"mu":2.0,
            "capital":{"constant":0.02},"seed":4}"#;
        let spec: EnsembleSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec, EnsembleSpec::powerlaw(50, 0.5, 0.01, 2.0, CapitalSpec::Constant(0.02), 4));
        let back: EnsembleSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }
}
