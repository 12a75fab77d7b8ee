//! Bethe entropy of the support ensemble and its Legendre transform.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::FactorGraph;
use super::propagation::{bp_fixed_point, live_marginals, expected_sparsity, BpOptions, Fugacity, MessageSet};
use super::weights::distribution;
use crate::error::{Error, Result};

/// Bethe estimate of `log sum_{H=0} z^{sum a}` at a fixed point:
///
/// ```text
/// S = sum_a log sum_{m>=r_a} w^m V^m_a - sum_links log[mu_ab mu_ba + (1-mu_ab)(1-mu_ba)]
/// ```
///
/// with `w = sqrt(z)` per factor as in the message updates. Returns
/// `-inf` (with a warning) when some factor or link is fully contradictory.
pub fn bethe_entropy(g: &FactorGraph, m: &MessageSet, z: Fugacity) -> Result<f64> {
    let w = match z {
        Fugacity::Finite(v) => v.sqrt(),
        other => {
            return Err(Error::InvalidParameter(format!(
                "Bethe entropy needs a finite fugacity, got {other}"
            )))
        }
    };
    let mut s = 0.0;
    for a in 0..g.num_factors() {
        let nb = g.neighbors(a);
        let mut log_norm = 0.0;
        let tilted: Vec<f64> = nb
            .iter()
            .map(|&v| {
                let mu = m.incoming(g, a, v);
                let den = 1.0 - mu + w * mu;
                log_norm += den.ln();
                w * mu / den
            })
            .collect();
        let d = distribution(&tilted);
        let tail: f64 = d.iter().skip(g.required(a)).sum();
        if !(tail > 0.0) {
            log::warn!("factor {} cannot meet its required degree", g.label(a));
            return Ok(f64::NEG_INFINITY);
        }
        s += log_norm + tail.ln();
    }
    for v in g.live_variables() {
        let (ab, ba) = (m.to_col[v], m.to_row[v]);
        let overlap = ab * ba + (1.0 - ab) * (1.0 - ba);
        if !(overlap > 0.0) {
            log::warn!("link {:?} receives contradictory messages", g.variables()[v]);
            return Ok(f64::NEG_INFINITY);
        }
        s -= overlap.ln();
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyPoint {
    pub z: f64,
    /// Expected fraction of absent links among the free entries.
    pub lambda_hat: f64,
    /// Bethe entropy per free entry, `S(z) / M`.
    pub s: f64,
    /// Entropy per free entry at fixed density: `S/M - (1 - lambda_hat) log z`.
    pub sigma: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntropyCurve {
    pub points: Vec<EntropyPoint>,
}

impl EntropyCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "z,lambda_hat,S,Sigma,converged")?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{},{},{}",
                p.z, p.lambda_hat, p.s, p.sigma, p.converged
            )?;
        }
        Ok(())
    }

    /// `Sigma` at density `lambda` by linear interpolation between converged
    /// points ordered by density; clamps to the nearest end outside the
    /// sampled range.
    pub fn sigma_at(&self, lambda: f64) -> Option<f64> {
        let mut pts: Vec<(f64, f64)> = self
            .points
            .iter()
            .filter(|p| p.converged && p.sigma.is_finite())
            .map(|p| (p.lambda_hat, p.sigma))
            .collect();
        if pts.is_empty() {
            return None;
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if lambda <= pts[0].0 {
            return Some(pts[0].1);
        }
        let last = pts[pts.len() - 1];
        if lambda >= last.0 {
            return Some(last.1);
        }
        for pair in pts.windows(2) {
            let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
            if lambda >= x0 && lambda <= x1 {
                if x1 - x0 <= f64::EPSILON {
                    return Some(y0.max(y1));
                }
                return Some(y0 + (y1 - y0) * (lambda - x0) / (x1 - x0));
            }
        }
        Some(last.1)
    }
}

/// One entropy point per fugacity in `z_grid` (sorted, positive). Each point
/// is an independent fixed-point run; non-converged points are flagged and
/// the curve continues.
pub fn sigma_curve(g: &FactorGraph, z_grid: &[f64], opts: &BpOptions) -> Result<EntropyCurve> {
    if z_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("z grid must be sorted".into()));
    }
    let zs = z_grid
        .iter()
        .map(|&z| Fugacity::finite(z))
        .collect::<Result<Vec<_>>>()?;
    let points = zs
        .par_iter()
        .map(|&z| entropy_point(g, z, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(EntropyCurve { points })
}

pub fn entropy_point(g: &FactorGraph, z: Fugacity, opts: &BpOptions) -> Result<EntropyPoint> {
    let zv = z.value();
    let m = g.m();
    if m == 0 {
        return Ok(EntropyPoint {
            z: zv,
            lambda_hat: 0.0,
            s: 0.0,
            sigma: 0.0,
            converged: true,
        });
    }
    let fp = bp_fixed_point(g, z, opts)?;
    let lambda_hat = expected_sparsity(&live_marginals(g, &fp.messages));
    let s = bethe_entropy(g, &fp.messages, z)? / m as f64;
    Ok(EntropyPoint {
        z: zv,
        lambda_hat,
        s,
        sigma: s - (1.0 - lambda_hat) * zv.ln(),
        converged: fp.converged,
    })
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| {
                let t = k as f64 / (n - 1) as f64;
                (lo.ln() + t * (hi.ln() - lo.ln())).exp()
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bpcore::graph::build_factor_graph;
    use crate::netcore::{LiabilityMatrix, ReducedProblem};

    fn triangle(res: f64) -> FactorGraph {
        let p = ReducedProblem::new(
            3,
            LiabilityMatrix::off_diagonal(3),
            vec![res; 3],
            vec![res; 3],
        )
        .unwrap();
        build_factor_graph(&p).unwrap()
    }

    #[test]
    fn forced_instance_has_zero_entropy() {
        let g = triangle(1.2);
        let fp = bp_fixed_point(&g, Fugacity::Finite(1.0), &BpOptions::default()).unwrap();
        let s = bethe_entropy(&g, &fp.messages, Fugacity::Finite(1.0)).unwrap();
        assert!(s.abs() < 1e-12, "{s}");
    }

    #[test]
    fn independent_links_entropy_is_exact() {
        // no constraints: log Z = M log(1 + z)
        let g = FactorGraph::with_required(3, LiabilityMatrix::off_diagonal(3), vec![0; 6]).unwrap();
        for z in [0.3, 1.0, 4.0] {
            let fp = bp_fixed_point(&g, Fugacity::Finite(z), &BpOptions::default()).unwrap();
            let s = bethe_entropy(&g, &fp.messages, Fugacity::Finite(z)).unwrap();
            assert!((s - 6.0 * (1.0 + z).ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn sigma_equals_s_at_unit_fugacity() {
        let g = triangle(0.5);
        let c = sigma_curve(&g, &[1.0], &BpOptions::default()).unwrap();
        assert_eq!(c.points[0].sigma, c.points[0].s);
    }

    #[test]
    fn large_fugacity_fills_graph() {
        let g = triangle(0.5);
        let c = sigma_curve(&g, &[1e8], &BpOptions::default()).unwrap();
        assert!(c.points[0].lambda_hat < 1e-3);
    }

    #[test]
    fn unsorted_grid_rejected() {
        let g = triangle(0.5);
        assert!(sigma_curve(&g, &[2.0, 1.0], &BpOptions::default()).is_err());
        assert!(sigma_curve(&g, &[0.0], &BpOptions::default()).is_err());
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(0.01, 1.0, 5);
        assert!((g[0] - 0.01).abs() < 1e-15);
        assert!((g[4] - 1.0).abs() < 1e-12);
        assert!((g[2] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        EntropyCurve::default().write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "z,lambda_hat,S,Sigma,converged\n");
    }
}
