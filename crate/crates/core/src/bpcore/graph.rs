use std::fmt;

use crate::error::{Error, Result};
use crate::netcore::{Entry, ReducedProblem};

/// Residual tolerance below which a bank needs no links at all.
const ZERO_RESIDUAL: f64 = 1e-9;

/// Smallest link count `k` with `k > residual`, given unit capacities.
pub fn required_degree(residual: f64) -> usize {
    if residual <= ZERO_RESIDUAL {
        0
    } else {
        (residual + ZERO_RESIDUAL).floor() as usize + 1
    }
}

/// Which side of a bank a factor constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FactorLabel {
    /// Out-degree of bank `i` (row `i`).
    Out(usize),
    /// In-degree of bank `j` (column `j`).
    In(usize),
}

impl fmt::Display for FactorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FactorLabel::Out(i) => write!(f, "{i}->"),
            FactorLabel::In(j) => write!(f, "<-{j}"),
        }
    }
}

/// Bipartite factor graph of the degree constraints. Factors `0..n` are the
/// out-degree constraints of each bank, factors `n..2n` the in-degree
/// constraints. Each variable is an unknown entry `(i, j)` attached to
/// factor `i` and factor `n + j`.
///
/// Variable ids are stable: [`FactorGraph::remove_variable`] detaches a
/// variable from its factors but keeps its slot, so message vectors indexed
/// by variable id stay valid during decimation.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    n: usize,
    variables: Vec<Entry>,
    live: Vec<bool>,
    neighbors: Vec<Vec<usize>>,
    required: Vec<usize>,
}

impl FactorGraph {
    /// Builds a graph with explicit required degrees (`required[a]` for each
    /// of the `2n` factors).
    pub fn with_required(n: usize, variables: Vec<Entry>, required: Vec<usize>) -> Result<Self> {
        if required.len() != 2 * n {
            return Err(Error::InvalidParameter(format!(
                "expected {} required degrees, got {}",
                2 * n,
                required.len()
            )));
        }
        let mut neighbors = vec![Vec::new(); 2 * n];
        for (v, &(i, j)) in variables.iter().enumerate() {
            if i >= n || j >= n {
                return Err(Error::IndexOutOfRange(i, j, n));
            }
            if i == j {
                return Err(Error::DiagonalEntry(i));
            }
            neighbors[i].push(v);
            neighbors[n + j].push(v);
        }
        let g = Self {
            n,
            live: vec![true; variables.len()],
            variables,
            neighbors,
            required,
        };
        let bad = g.locally_infeasible();
        if bad.is_empty() {
            Ok(g)
        } else {
            Err(Error::LocallyInfeasible(
                bad.iter().map(|&a| g.label(a).to_string()).collect(),
            ))
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_factors(&self) -> usize {
        2 * self.n
    }

    /// All variables ever attached, live or not.
    pub fn variables(&self) -> &[Entry] {
        &self.variables
    }

    pub fn is_live(&self, v: usize) -> bool {
        self.live[v]
    }

    pub fn live_variables(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.variables.len()).filter(|&v| self.live[v])
    }

    /// Number of live variables (`M = sum_a |da| / 2`).
    pub fn m(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, a: usize) -> &[usize] {
        &self.neighbors[a]
    }

    pub fn degree(&self, a: usize) -> usize {
        self.neighbors[a].len()
    }

    pub fn required(&self, a: usize) -> usize {
        self.required[a]
    }

    pub fn label(&self, a: usize) -> FactorLabel {
        if a < self.n {
            FactorLabel::Out(a)
        } else {
            FactorLabel::In(a - self.n)
        }
    }

    pub fn is_row_factor(&self, a: usize) -> bool {
        a < self.n
    }

    pub fn row_factor(&self, v: usize) -> usize {
        self.variables[v].0
    }

    pub fn col_factor(&self, v: usize) -> usize {
        self.n + self.variables[v].1
    }

    /// Factors whose required degree exceeds their live degree.
    pub fn locally_infeasible(&self) -> Vec<usize> {
        (0..2 * self.n)
            .filter(|&a| self.required[a] > self.neighbors[a].len())
            .collect()
    }

    /// Whether fixing live variable `v` to 0 keeps both of its factors able
    /// to reach their required degree.
    pub fn zero_allowed(&self, v: usize) -> bool {
        [self.row_factor(v), self.col_factor(v)]
            .into_iter()
            .all(|f| self.neighbors[f].len() > self.required[f])
    }

    /// Degree-constraint cost of a full assignment of the live variables:
    /// the number of factors with fewer links than required.
    pub fn cost(&self, ones: &[bool]) -> usize {
        (0..2 * self.n)
            .filter(|&a| {
                let k = self.neighbors[a].iter().filter(|&&v| ones[v]).count();
                k < self.required[a]
            })
            .count()
    }

    /// Fixes variable `v`: detaches it from both factors and, when it is set
    /// to 1, lowers both required degrees by one (saturating at 0).
    pub fn remove_variable(&mut self, v: usize, value: bool) {
        if !self.live[v] {
            return;
        }
        self.live[v] = false;
        let (a, b) = (self.row_factor(v), self.col_factor(v));
        for f in [a, b] {
            self.neighbors[f].retain(|&x| x != v);
            if value {
                self.required[f] = self.required[f].saturating_sub(1);
            }
        }
    }
}

/// Factor graph of the degree-constraint cost for a consistent problem.
/// Required degrees follow the strict rule `k_a > L_a`: `floor(L_a) + 1`
/// links for a positive residual, none for a zero residual.
pub fn build_factor_graph(p: &ReducedProblem) -> Result<FactorGraph> {
    let n = p.n();
    let required = p
        .res_out()
        .iter()
        .chain(p.res_in())
        .map(|&r| required_degree(r))
        .collect();
    FactorGraph::with_required(n, p.unknown().to_vec(), required)
}
