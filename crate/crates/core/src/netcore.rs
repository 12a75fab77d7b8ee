//! Liability matrices, the threshold observation model and network supports.
//!
//! Entry `(i, j)` of a [`LiabilityMatrix`] is the amount bank `j` borrowed
//! from bank `i`. Row sums are out-strengths (total credit), column sums are
//! in-strengths (total debt). An [`Observation`] stores every quantity
//! rescaled by the disclosure threshold, so unknown entries live in `[0, 1]`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Off-diagonal matrix index `(lender, borrower)`.
pub type Entry = (usize, usize);

/// Relative tolerance used for every balance and residual check.
pub const BALANCE_TOL: f64 = 1e-9;

pub(crate) fn scaled_tol(total: f64) -> f64 {
    BALANCE_TOL * total.abs().max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiabilityMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl LiabilityMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Parse(format!(
                    "row {i} has {} columns, expected {n}",
                    row.len()
                )));
            }
            m.entries[i * n..(i + 1) * n].copy_from_slice(row);
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.entries[i * self.n + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn out_strength(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn in_strength(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i).iter().enumerate() {
                s[j] += v;
            }
        }
        s
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            entries: self.entries.iter().map(|v| v * factor).collect(),
        }
    }

    /// All off-diagonal indices in row-major order.
    pub fn off_diagonal(n: usize) -> Vec<Entry> {
        (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect()
    }

    pub fn positive_count(&self) -> usize {
        Self::off_diagonal(self.n)
            .into_iter()
            .filter(|&(i, j)| self.get(i, j) > 0.0)
            .count()
    }

    /// Sparsity over all `N(N-1)` off-diagonal slots.
    pub fn sparsity(&self) -> Result<f64> {
        let slots = self.n * self.n.saturating_sub(1);
        if slots == 0 {
            return Err(Error::ZeroDenominator);
        }
        Ok(1.0 - self.positive_count() as f64 / slots as f64)
    }

    pub fn write_csv<W: Write>(&self, mut w: W, theta: f64) -> Result<()> {
        writeln!(w, "# liability-matrix v1, n={}, theta={}", self.n, theta)?;
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads the CSV format written by [`LiabilityMatrix::write_csv`];
    /// returns the matrix and the threshold recorded in the header.
    pub fn read_csv<R: BufRead>(r: R) -> Result<(Self, f64)> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty matrix file".into()))??;
        let (n, theta) = parse_matrix_header(&header)?;
        let mut rows = Vec::with_capacity(n);
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("bad number {s:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        if rows.len() != n {
            return Err(Error::Parse(format!(
                "header declares n={n} but found {} rows",
                rows.len()
            )));
        }
        Ok((Self::from_rows(&rows)?, theta))
    }

    pub fn load(path: &Path) -> Result<(Self, f64)> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f))
    }

    pub fn save(&self, path: &Path, theta: f64) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_csv(&mut w, theta)?;
        w.flush()?;
        Ok(())
    }
}

fn parse_matrix_header(header: &str) -> Result<(usize, f64)> {
    let body = header
        .strip_prefix("# liability-matrix v1")
        .ok_or_else(|| Error::Parse(format!("unrecognised matrix header {header:?}")))?;
    let mut n = None;
    let mut theta = None;
    for field in body.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match field.split_once('=') {
            Some(("n", v)) => n = v.parse::<usize>().ok(),
            Some(("theta", v)) => theta = v.parse::<f64>().ok(),
            _ => return Err(Error::Parse(format!("unexpected header field {field:?}"))),
        }
    }
    match (n, theta) {
        (Some(n), Some(theta)) => Ok((n, theta)),
        _ => Err(Error::Parse(format!("incomplete matrix header {header:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeEntry { i: usize, j: usize, value: f64 },
    NonzeroDiagonal { i: usize, value: f64 },
    NonFinite { i: usize, j: usize },
    ClosureImbalance { out_total: f64, in_total: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeEntry { i, j, value } => {
                write!(f, "negative entry ({i},{j}) = {value}")
            }
            Violation::NonzeroDiagonal { i, value } => {
                write!(f, "nonzero diagonal ({i},{i}) = {value}")
            }
            Violation::NonFinite { i, j } => write!(f, "non-finite entry ({i},{j})"),
            Violation::ClosureImbalance {
                out_total,
                in_total,
            } => write!(
                f,
                "closure imbalance: total out-strength {out_total} != total in-strength {in_total}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Rank of the row/column sum constraints restricted to the positive
    /// entries. Diagnostic only.
    pub constraint_rank: usize,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_matrix(l: &LiabilityMatrix) -> ValidationReport {
    let mut violations = Vec::new();
    for i in 0..l.n() {
        for j in 0..l.n() {
            let v = l.get(i, j);
            if !v.is_finite() {
                violations.push(Violation::NonFinite { i, j });
            } else if i == j && v != 0.0 {
                violations.push(Violation::NonzeroDiagonal { i, value: v });
            } else if v < 0.0 {
                violations.push(Violation::NegativeEntry { i, j, value: v });
            }
        }
    }
    violations.extend(check_closure(&l.out_strength(), &l.in_strength()));
    let positive: Vec<Entry> = LiabilityMatrix::off_diagonal(l.n())
        .into_iter()
        .filter(|&(i, j)| l.get(i, j) > 0.0)
        .collect();
    ValidationReport {
        violations,
        constraint_rank: constraint_rank(l.n(), &positive),
    }
}

/// Closed-economy check on declared strength vectors.
pub fn check_closure(out_strength: &[f64], in_strength: &[f64]) -> Option<Violation> {
    let out_total: f64 = out_strength.iter().sum();
    let in_total: f64 = in_strength.iter().sum();
    let scale = out_total.abs().max(in_total.abs());
    if (out_total - in_total).abs() > scaled_tol(scale) {
        Some(Violation::ClosureImbalance {
            out_total,
            in_total,
        })
    } else {
        None
    }
}

/// Rank of the `2N` sum constraints over a set of free entries. The
/// constraint matrix is the incidence matrix of a bipartite graph (rows on
/// one side, columns on the other), whose rank is the vertex count minus the
/// number of connected components, counting only components with an edge.
pub fn constraint_rank(n: usize, entries: &[Entry]) -> usize {
    let mut parent: Vec<usize> = (0..2 * n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut touched = vec![false; 2 * n];
    let mut rank = 0;
    for &(i, j) in entries {
        let (a, b) = (i, n + j);
        touched[a] = true;
        touched[b] = true;
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            rank += 1;
        }
    }
    rank
}

/// The incomplete-information view of a liability matrix, rescaled by the
/// disclosure threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    n: usize,
    theta: f64,
    known: BTreeMap<Entry, f64>,
    unknown: Vec<Entry>,
    out_strength: Vec<f64>,
    in_strength: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ObservationFile {
    n: usize,
    theta: f64,
    known: Vec<(usize, usize, f64)>,
    out_strength: Vec<f64>,
    in_strength: Vec<f64>,
}

impl Observation {
    /// Builds an observation from rescaled known values and strengths. The
    /// unknown set is every off-diagonal entry not listed in `known`.
    pub fn from_parts(
        n: usize,
        theta: f64,
        known: BTreeMap<Entry, f64>,
        out_strength: Vec<f64>,
        in_strength: Vec<f64>,
    ) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::InvalidThreshold(theta));
        }
        if out_strength.len() != n || in_strength.len() != n {
            return Err(Error::Parse(format!(
                "strength vectors must have length {n}"
            )));
        }
        for &(i, j) in known.keys() {
            check_entry(n, i, j)?;
        }
        let unknown = LiabilityMatrix::off_diagonal(n)
            .into_iter()
            .filter(|e| !known.contains_key(e))
            .collect();
        Ok(Self {
            n,
            theta,
            known,
            unknown,
            out_strength,
            in_strength,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn known(&self) -> &BTreeMap<Entry, f64> {
        &self.known
    }

    pub fn unknown(&self) -> &[Entry] {
        &self.unknown
    }

    pub fn out_strength(&self) -> &[f64] {
        &self.out_strength
    }

    pub fn in_strength(&self) -> &[f64] {
        &self.in_strength
    }

    pub fn known_positive_count(&self) -> usize {
        self.known.values().filter(|&&v| v > 0.0).count()
    }

    /// Assembles a full matrix (in original monetary units) from the known
    /// entries and values for some subset of the unknown entries.
    pub fn assemble<'a, I>(&self, unknown_values: I) -> LiabilityMatrix
    where
        I: IntoIterator<Item = (&'a Entry, f64)>,
    {
        let mut l = LiabilityMatrix::zeros(self.n);
        for (&(i, j), &v) in &self.known {
            l.set(i, j, v * self.theta);
        }
        for (&(i, j), v) in unknown_values {
            l.set(i, j, v * self.theta);
        }
        l
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ObservationFile {
            n: self.n,
            theta: self.theta,
            known: self.known.iter().map(|(&(i, j), &v)| (i, j, v)).collect(),
            out_strength: self.out_strength.clone(),
            in_strength: self.in_strength.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ObservationFile = serde_json::from_str(s)?;
        let mut known = BTreeMap::new();
        for (i, j, v) in file.known {
            known.insert((i, j), v);
        }
        Self::from_parts(file.n, file.theta, known, file.out_strength, file.in_strength)
    }
}

fn check_entry(n: usize, i: usize, j: usize) -> Result<()> {
    if i >= n || j >= n {
        return Err(Error::IndexOutOfRange(i, j, n));
    }
    if i == j {
        return Err(Error::DiagonalEntry(i));
    }
    Ok(())
}

/// Applies the disclosure rule: entries strictly above `theta`, plus the
/// `disclosed` set, become known. All values and strengths are divided by
/// `theta`.
pub fn make_observation(
    l_true: &LiabilityMatrix,
    theta: f64,
    disclosed: &BTreeSet<Entry>,
) -> Result<Observation> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::InvalidThreshold(theta));
    }
    let n = l_true.n();
    for &(i, j) in disclosed {
        check_entry(n, i, j)?;
    }
    let mut known = BTreeMap::new();
    for (i, j) in LiabilityMatrix::off_diagonal(n) {
        let v = l_true.get(i, j);
        if v > theta || disclosed.contains(&(i, j)) {
            known.insert((i, j), v / theta);
        }
    }
    let out = l_true.out_strength().iter().map(|s| s / theta).collect();
    let inn = l_true.in_strength().iter().map(|s| s / theta).collect();
    Observation::from_parts(n, theta, known, out, inn)
}

/// The unknown entries together with the strengths left after subtracting
/// the known entries. Entries touching a bank whose residual on that side is
/// zero are forced to zero and are not part of the free set.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedProblem {
    n: usize,
    unknown: Vec<Entry>,
    res_out: Vec<f64>,
    res_in: Vec<f64>,
}

impl ReducedProblem {
    pub fn new(n: usize, unknown: Vec<Entry>, res_out: Vec<f64>, res_in: Vec<f64>) -> Result<Self> {
        if res_out.len() != n || res_in.len() != n {
            return Err(Error::Parse(format!(
                "residual vectors must have length {n}"
            )));
        }
        let total_out: f64 = res_out.iter().sum();
        let total_in: f64 = res_in.iter().sum();
        let tol = scaled_tol(total_out.max(total_in));
        let clamp = |v: Vec<f64>, side: &'static str| -> Result<Vec<f64>> {
            v.into_iter()
                .enumerate()
                .map(|(bank, r)| {
                    if !r.is_finite() || r < -tol {
                        Err(Error::InconsistentObservation {
                            bank,
                            side,
                            residual: r,
                        })
                    } else if r <= tol {
                        Ok(0.0)
                    } else {
                        Ok(r)
                    }
                })
                .collect()
        };
        let res_out = clamp(res_out, "out")?;
        let res_in = clamp(res_in, "in")?;
        if (total_out - total_in).abs() > tol {
            return Err(Error::InconsistentObservation {
                bank: n,
                side: "total",
                residual: total_out - total_in,
            });
        }
        let mut free = Vec::with_capacity(unknown.len());
        let mut seen = BTreeSet::new();
        for (i, j) in unknown {
            check_entry(n, i, j)?;
            if !seen.insert((i, j)) {
                return Err(Error::Parse(format!("duplicate unknown entry ({i},{j})")));
            }
            if res_out[i] > 0.0 && res_in[j] > 0.0 {
                free.push((i, j));
            }
        }
        Ok(Self {
            n,
            unknown: free,
            res_out,
            res_in,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The free entries, in the order every value vector and support uses.
    pub fn unknown(&self) -> &[Entry] {
        &self.unknown
    }

    pub fn m(&self) -> usize {
        self.unknown.len()
    }

    pub fn res_out(&self) -> &[f64] {
        &self.res_out
    }

    pub fn res_in(&self) -> &[f64] {
        &self.res_in
    }

    pub fn total(&self) -> f64 {
        self.res_out.iter().sum()
    }

    pub fn tolerance(&self) -> f64 {
        scaled_tol(self.total())
    }

    /// Banks touching at least one free entry.
    pub fn bank_set(&self) -> BTreeSet<usize> {
        self.unknown.iter().flat_map(|&(i, j)| [i, j]).collect()
    }

    pub fn index_of(&self, entry: Entry) -> Option<usize> {
        self.unknown.iter().position(|&e| e == entry)
    }

    /// Maximum absolute violation of the row and column sums by `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut row = vec![0.0; self.n];
        let mut col = vec![0.0; self.n];
        for (&(i, j), &v) in self.unknown.iter().zip(values) {
            row[i] += v;
            col[j] += v;
        }
        let r = row
            .iter()
            .zip(&self.res_out)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let c = col
            .iter()
            .zip(&self.res_in)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        r.max(c)
    }
}

/// Subtracts the known entries from the strengths.
pub fn absorb_known(obs: &Observation) -> Result<ReducedProblem> {
    let mut res_out = obs.out_strength.clone();
    let mut res_in = obs.in_strength.clone();
    for (&(i, j), &v) in &obs.known {
        res_out[i] -= v;
        res_in[j] -= v;
    }
    ReducedProblem::new(obs.n, obs.unknown.clone(), res_out, res_in)
}

/// Binary link pattern over a reference list of unknown entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Support {
    ones: Vec<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportFile {
    pub edges: Vec<[usize; 2]>,
    pub m: usize,
    pub sparsity: f64,
}

impl Support {
    pub fn new(ones: Vec<bool>) -> Self {
        Self { ones }
    }

    pub fn full(m: usize) -> Self {
        Self { ones: vec![true; m] }
    }

    pub fn empty(m: usize) -> Self {
        Self {
            ones: vec![false; m],
        }
    }

    pub fn len(&self) -> usize {
        self.ones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ones.is_empty()
    }

    pub fn get(&self, k: usize) -> bool {
        self.ones[k]
    }

    pub fn set(&mut self, k: usize, value: bool) {
        self.ones[k] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.ones
    }

    pub fn count_ones(&self) -> usize {
        self.ones.iter().filter(|&&a| a).count()
    }

    /// True when every link of `self` is also a link of `other`.
    pub fn is_subset_of(&self, other: &Support) -> bool {
        self.ones.iter().zip(&other.ones).all(|(&a, &b)| !a || b)
    }

    pub fn to_file(&self, unknown: &[Entry]) -> Result<SupportFile> {
        if unknown.len() != self.len() {
            return Err(Error::SupportMismatch {
                expected: unknown.len(),
                got: self.len(),
            });
        }
        let edges = unknown
            .iter()
            .zip(&self.ones)
            .filter(|(_, &a)| a)
            .map(|(&(i, j), _)| [i, j])
            .collect();
        let sparsity = if self.is_empty() {
            0.0
        } else {
            sparsity(self, self.len())?
        };
        Ok(SupportFile {
            edges,
            m: self.len(),
            sparsity,
        })
    }

    pub fn from_file(file: &SupportFile, unknown: &[Entry]) -> Result<Self> {
        if file.m != unknown.len() {
            return Err(Error::SupportMismatch {
                expected: unknown.len(),
                got: file.m,
            });
        }
        let mut s = Support::empty(unknown.len());
        for &[i, j] in &file.edges {
            let k = unknown
                .iter()
                .position(|&e| e == (i, j))
                .ok_or(Error::UnknownEntry((i, j)))?;
            s.set(k, true);
        }
        Ok(s)
    }
}

/// `a_ij = 1` exactly where `L_ij > 0`, restricted to `unknown`.
pub fn support_of(l: &LiabilityMatrix, unknown: &[Entry]) -> Result<Support> {
    let n = l.n();
    unknown
        .iter()
        .map(|&(i, j)| {
            check_entry(n, i, j)?;
            Ok(l.get(i, j) > 0.0)
        })
        .collect::<Result<Vec<bool>>>()
        .map(Support::new)
}

/// Fraction of zeros: `1 - ones / denominator`. Pass the unknown count `M`
/// for sampler quantities or `N(N-1)` for whole-matrix sparsity.
pub fn sparsity(a: &Support, denominator: usize) -> Result<f64> {
    if denominator == 0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(1.0 - a.count_ones() as f64 / denominator as f64)
}

/// Whole-matrix sparsity of the network formed by the positive known
/// entries of `obs` plus the links of `a`.
pub fn whole_matrix_sparsity(obs: &Observation, a: &Support) -> Result<f64> {
    let slots = obs.n() * obs.n().saturating_sub(1);
    if slots == 0 {
        return Err(Error::ZeroDenominator);
    }
    let links = obs.known_positive_count() + a.count_ones();
    Ok(1.0 - links as f64 / slots as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m3(rows: [[f64; 3]; 3]) -> LiabilityMatrix {
        LiabilityMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn zero_matrix_is_valid() {
        assert!(validate_matrix(&LiabilityMatrix::zeros(2)).is_valid());
    }

    #[test]
    fn nonzero_diagonal_is_reported() {
        let mut l = LiabilityMatrix::zeros(2);
        l.set(0, 0, 0.1);
        let report = validate_matrix(&l);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].to_string().contains("nonzero diagonal"));
    }

    #[test]
    fn negative_entry_is_reported() {
        let mut l = LiabilityMatrix::zeros(3);
        l.set(0, 1, -0.5);
        let report = validate_matrix(&l);
        assert!(matches!(
            report.violations[0],
            Violation::NegativeEntry { i: 0, j: 1, .. }
        ));
    }

    #[test]
    fn imbalanced_strengths_are_reported() {
        let v = check_closure(&[1.0, 1.0, 1.0], &[1.0, 1.0, 0.5]).unwrap();
        assert!(v.to_string().contains("closure imbalance"));
        assert!(check_closure(&[1.0, 2.0], &[2.0, 1.0]).is_none());
    }

    #[test]
    fn rank_of_full_off_diagonal() {
        assert_eq!(constraint_rank(3, &LiabilityMatrix::off_diagonal(3)), 5);
        assert_eq!(constraint_rank(2, &LiabilityMatrix::off_diagonal(2)), 2);
        assert_eq!(constraint_rank(4, &[]), 0);
    }

    #[test]
    fn support_of_zero_matrix_is_empty() {
        let l = LiabilityMatrix::zeros(3);
        let a = support_of(&l, &LiabilityMatrix::off_diagonal(3)).unwrap();
        assert_eq!(a.count_ones(), 0);
    }

    #[test]
    fn support_of_single_entry() {
        let mut l = LiabilityMatrix::zeros(3);
        l.set(1, 2, 0.3);
        let a = support_of(&l, &LiabilityMatrix::off_diagonal(3)).unwrap();
        assert_eq!(a.count_ones(), 1);
    }

    #[test]
    fn support_uses_strict_positivity() {
        let mut l = LiabilityMatrix::zeros(2);
        l.set(0, 1, 0.0);
        l.set(1, 0, 1e-15);
        let a = support_of(&l, &[(0, 1), (1, 0)]).unwrap();
        assert_eq!(a.as_slice(), &[false, true]);
    }

    #[test]
    fn support_of_rejects_bad_index() {
        let l = LiabilityMatrix::zeros(2);
        assert!(matches!(
            support_of(&l, &[(0, 5)]),
            Err(Error::IndexOutOfRange(0, 5, 2))
        ));
    }

    #[test]
    fn sparsity_examples() {
        assert_eq!(sparsity(&Support::full(6), 6).unwrap(), 0.0);
        assert_eq!(sparsity(&Support::empty(6), 6).unwrap(), 1.0);
        let a = Support::new(vec![true, true, false, false, false, false]);
        assert!((sparsity(&a, 6).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(sparsity(&a, 0), Err(Error::ZeroDenominator)));
    }

    #[test]
    fn unit_threshold_leaves_everything_unknown() {
        let l = m3([[0.0, 0.5, 0.2], [0.9, 0.0, 0.3], [0.1, 0.7, 0.0]]);
        let obs = make_observation(&l, 1.0, &BTreeSet::new()).unwrap();
        assert!(obs.known().is_empty());
        assert_eq!(obs.unknown().len(), 6);
    }

    #[test]
    fn tiny_threshold_discloses_positive_entries() {
        let l = m3([[0.0, 0.5, 0.2], [0.9, 0.0, 0.3], [0.1, 0.7, 0.0]]);
        let obs = make_observation(&l, 1e-6, &BTreeSet::new()).unwrap();
        assert!(obs.unknown().is_empty());
        let p = absorb_known(&obs).unwrap();
        assert_eq!(p.m(), 0);
    }

    #[test]
    fn threshold_rule_is_strict_and_rescales() {
        let l = m3([[0.0, 2.0, 0.5], [0.5, 0.0, 1.0], [0.5, 0.5, 0.0]]);
        let obs = make_observation(&l, 1.0, &BTreeSet::new()).unwrap();
        assert_eq!(obs.known().get(&(0, 1)), Some(&2.0));
        // exactly at the threshold stays unknown
        assert!(obs.unknown().contains(&(1, 2)));
        let obs2 = make_observation(&l, 0.5, &BTreeSet::new()).unwrap();
        assert_eq!(obs2.known().get(&(0, 1)), Some(&4.0));
        assert_eq!(obs2.known().get(&(1, 2)), Some(&2.0));
        for &(i, j) in obs2.unknown() {
            assert!(l.get(i, j) / 0.5 <= 1.0);
        }
    }

    #[test]
    fn disclosed_entries_become_known() {
        let l = m3([[0.0, 0.5, 0.2], [0.9, 0.0, 0.3], [0.1, 0.7, 0.0]]);
        let disclosed: BTreeSet<Entry> = [(2, 0)].into_iter().collect();
        let obs = make_observation(&l, 1.0, &disclosed).unwrap();
        assert_eq!(obs.known().get(&(2, 0)), Some(&0.1));
        assert_eq!(obs.unknown().len(), 5);
        assert!(make_observation(&l, 1.0, &[(1, 1)].into_iter().collect()).is_err());
    }

    #[test]
    fn non_positive_threshold_rejected() {
        let l = LiabilityMatrix::zeros(2);
        assert!(matches!(
            make_observation(&l, 0.0, &BTreeSet::new()),
            Err(Error::InvalidThreshold(_))
        ));
        assert!(make_observation(&l, -1.0, &BTreeSet::new()).is_err());
    }

    #[test]
    fn absorb_without_known_is_identity() {
        let l = m3([[0.0, 0.5, 0.2], [0.9, 0.0, 0.3], [0.1, 0.7, 0.0]]);
        let obs = make_observation(&l, 1.0, &BTreeSet::new()).unwrap();
        let p = absorb_known(&obs).unwrap();
        assert_eq!(p.res_out(), obs.out_strength());
        assert_eq!(p.res_in(), obs.in_strength());
        assert_eq!(p.bank_set().len(), 3);
    }

    #[test]
    fn two_bank_problem() {
        let obs = Observation::from_parts(
            2,
            1.0,
            BTreeMap::new(),
            vec![0.4, 0.7],
            vec![0.7, 0.4],
        )
        .unwrap();
        let p = absorb_known(&obs).unwrap();
        assert_eq!(p.m(), 2);
        assert_eq!(p.res_out(), &[0.4, 0.7]);
    }

    #[test]
    fn known_entry_above_strength_is_inconsistent() {
        let known: BTreeMap<Entry, f64> = [((0, 1), 2.0)].into_iter().collect();
        let obs =
            Observation::from_parts(2, 1.0, known, vec![1.0, 2.0], vec![2.0, 1.0]).unwrap();
        assert!(matches!(
            absorb_known(&obs),
            Err(Error::InconsistentObservation { bank: 0, .. })
        ));
    }

    #[test]
    fn zero_residual_forces_entries_out_of_free_set() {
        let p = ReducedProblem::new(
            3,
            LiabilityMatrix::off_diagonal(3),
            vec![0.0, 0.5, 0.5],
            vec![0.5, 0.5, 0.0],
        )
        .unwrap();
        assert_eq!(p.unknown(), &[(1, 0), (2, 0), (2, 1)]);
    }

    #[test]
    fn observation_json_round_trip() {
        let l = m3([[0.0, 2.0, 0.5], [0.5, 0.0, 1.0], [0.5, 0.5, 0.0]]);
        let obs = make_observation(&l, 0.5, &BTreeSet::new()).unwrap();
        let back = Observation::from_json(&obs.to_json().unwrap()).unwrap();
        assert_eq!(obs, back);
    }

    #[test]
    fn matrix_csv_round_trip() {
        let l = m3([[0.0, 2.0, 0.125], [0.5, 0.0, 1.0 / 3.0], [0.5, 0.5, 0.0]]);
        let mut buf = Vec::new();
        l.write_csv(&mut buf, 0.25).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# liability-matrix v1, n=3, theta=0.25\n"));
        let (back, theta) = LiabilityMatrix::read_csv(&buf[..]).unwrap();
        assert_eq!(back, l);
        assert_eq!(theta, 0.25);
    }

    #[test]
    fn support_file_round_trip() {
        let unknown = LiabilityMatrix::off_diagonal(3);
        let a = Support::new(vec![true, false, false, true, true, false]);
        let file = a.to_file(&unknown).unwrap();
        assert_eq!(file.edges, vec![[0, 1], [1, 2], [2, 0]]);
        assert_eq!(file.sparsity, 0.5);
        assert_eq!(Support::from_file(&file, &unknown).unwrap(), a);
    }

    fn arb_matrix() -> impl Strategy<Value = LiabilityMatrix> {
        (2usize..6).prop_flat_map(|n| {
            prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..3.0], n * n).prop_map(
                move |mut v| {
                    for i in 0..n {
                        v[i * n + i] = 0.0;
                    }
                    LiabilityMatrix {
                        n,
                        entries: v,
                    }
                },
            )
        })
    }

    proptest! {
        #[test]
        fn observation_preserves_balance(l in arb_matrix(), theta in 0.05f64..2.0) {
            let obs = make_observation(&l, theta, &BTreeSet::new()).unwrap();
            let p = absorb_known(&obs).unwrap();
            let total: f64 = p.res_out().iter().sum();
            let total_in: f64 = p.res_in().iter().sum();
            prop_assert!((total - total_in).abs() <= 1e-9 * total.max(1.0));
            for &(i, j) in obs.unknown() {
                prop_assert!(l.get(i, j) / theta <= 1.0);
            }
        }

        #[test]
        fn rescaling_round_trips(l in arb_matrix(), theta in 0.05f64..2.0) {
            let back = l.scaled(1.0 / theta).scaled(theta);
            for i in 0..l.n() {
                for j in 0..l.n() {
                    prop_assert!((back.get(i, j) - l.get(i, j)).abs() <= 1e-12 * l.get(i, j).max(1.0));
                }
            }
        }

        #[test]
        fn support_sparsity_counts_positive_entries(l in arb_matrix()) {
            let u = LiabilityMatrix::off_diagonal(l.n());
            let a = support_of(&l, &u).unwrap();
            let s = sparsity(&a, u.len()).unwrap();
            let positive = u.iter().filter(|&&(i, j)| l.get(i, j) > 0.0).count();
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s, 1.0 - positive as f64 / u.len() as f64);
        }
    }
}
