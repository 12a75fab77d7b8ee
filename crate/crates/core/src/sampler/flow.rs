//! Dinic max-flow on real capacities, plus the bipartite transportation
//! network used to certify that a support admits a liability assignment.

use std::collections::VecDeque;

use crate::netcore::{ReducedProblem, Support};

const EPS: f64 = 1e-13;

#[derive(Debug, Clone)]
pub(crate) struct FlowNetwork {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        Self {
            adj: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
            level: vec![0; nodes],
            iter: vec![0; nodes],
        }
    }

    /// Adds `u -> v` with capacity `c`; the reverse edge is `id ^ 1`.
    pub fn add_edge(&mut self, u: usize, v: usize, c: f64) -> usize {
        let id = self.to.len();
        self.to.push(v);
        self.cap.push(c);
        self.adj[u].push(id);
        self.to.push(u);
        self.cap.push(0.0);
        self.adj[v].push(id + 1);
        id
    }

    /// Flow currently carried by forward edge `e`.
    #[inline]
    pub fn flow(&self, e: usize) -> f64 {
        self.cap[e ^ 1]
    }

    fn bfs(&mut self, s: usize) {
        self.level.iter_mut().for_each(|l| *l = -1);
        let mut q = VecDeque::new();
        self.level[s] = 0;
        q.push_back(s);
        while let Some(u) = q.pop_front() {
            for &e in &self.adj[u] {
                let v = self.to[e];
                if self.cap[e] > EPS && self.level[v] < 0 {
                    self.level[v] = self.level[u] + 1;
                    q.push_back(v);
                }
            }
        }
    }

    fn dfs(&mut self, u: usize, t: usize, f: f64) -> f64 {
        if u == t {
            return f;
        }
        while self.iter[u] < self.adj[u].len() {
            let e = self.adj[u][self.iter[u]];
            let v = self.to[e];
            if self.cap[e] > EPS && self.level[v] == self.level[u] + 1 {
                let d = self.dfs(v, t, f.min(self.cap[e]));
                if d > EPS {
                    self.cap[e] -= d;
                    self.cap[e ^ 1] += d;
                    return d;
                }
            }
            self.iter[u] += 1;
        }
        0.0
    }

    /// Augments the current flow to a maximum one; returns the amount added.
    pub fn augment(&mut self, s: usize, t: usize) -> f64 {
        let mut added = 0.0;
        loop {
            self.bfs(s);
            if self.level[t] < 0 {
                return added;
            }
            self.iter.iter_mut().for_each(|i| *i = 0);
            loop {
                let f = self.dfs(s, t, f64::INFINITY);
                if f <= EPS {
                    break;
                }
                added += f;
            }
        }
    }

    /// Nodes reachable from `s` in the residual graph (source side of a
    /// minimum cut once the flow is maximum).
    pub fn reachable(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(u) = stack.pop() {
            for &e in &self.adj[u] {
                let v = self.to[e];
                if self.cap[e] > EPS && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}

/// Source -> row `i` (capacity `res_out_i`) -> column `j` over every free
/// entry (capacity 1 when the entry is in the support, else 0) -> sink
/// (capacity `res_in_j`).
#[derive(Debug, Clone)]
pub(crate) struct Transport {
    net: FlowNetwork,
    n: usize,
    source: usize,
    sink: usize,
    row_edge: Vec<usize>,
    col_edge: Vec<usize>,
    var_edge: Vec<usize>,
    active: Vec<bool>,
    required: f64,
    tol: f64,
    flow: f64,
}

impl Transport {
    pub fn new(p: &ReducedProblem, a: &Support) -> Self {
        let n = p.n();
        let source = 2 * n;
        let sink = 2 * n + 1;
        let mut net = FlowNetwork::new(2 * n + 2);
        let row_edge = (0..n)
            .map(|i| net.add_edge(source, i, p.res_out()[i]))
            .collect();
        let col_edge = (0..n)
            .map(|j| net.add_edge(n + j, sink, p.res_in()[j]))
            .collect();
        let var_edge = p
            .unknown()
            .iter()
            .zip(a.as_slice())
            .map(|(&(i, j), &on)| net.add_edge(i, n + j, if on { 1.0 } else { 0.0 }))
            .collect();
        let mut t = Self {
            net,
            n,
            source,
            sink,
            row_edge,
            col_edge,
            var_edge,
            active: a.as_slice().to_vec(),
            required: p.total(),
            tol: p.tolerance(),
            flow: 0.0,
        };
        t.flow = t.net.augment(source, sink);
        t
    }

    pub fn flow(&self) -> f64 {
        self.flow
    }

    pub fn required(&self) -> f64 {
        self.required
    }

    pub fn is_feasible(&self) -> bool {
        self.flow >= self.required - self.tol
    }

    pub fn support(&self) -> Support {
        Support::new(self.active.clone())
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.active[k]
    }

    pub fn values(&self) -> Vec<f64> {
        self.var_edge
            .iter()
            .map(|&e| self.net.flow(e).clamp(0.0, 1.0))
            .collect()
    }

    /// Active links that carry flow in at least one feasible assignment.
    /// A link idle in the current flow can be used iff its row is reachable
    /// from its column in the residual row/column graph. Only meaningful on
    /// a feasible support.
    pub fn usable(&self) -> Vec<bool> {
        const IDLE: f64 = 1e-12;
        let n = self.n;
        let x = self.values();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); 2 * n];
        for (k, &e) in self.var_edge.iter().enumerate() {
            if !self.active[k] {
                continue;
            }
            let (i, j) = (self.net.to[e ^ 1], self.net.to[e]);
            if x[k] < 1.0 - IDLE {
                adj[i].push(j);
            }
            if x[k] > IDLE {
                adj[j].push(i);
            }
        }
        let mut reach_cache: Vec<Option<Vec<bool>>> = vec![None; 2 * n];
        (0..self.var_edge.len())
            .map(|k| {
                if !self.active[k] {
                    return false;
                }
                if x[k] > IDLE {
                    return true;
                }
                let e = self.var_edge[k];
                let (i, j) = (self.net.to[e ^ 1], self.net.to[e]);
                let seen = reach_cache[j].get_or_insert_with(|| {
                    let mut seen = vec![false; 2 * n];
                    let mut stack = vec![j];
                    seen[j] = true;
                    while let Some(u) = stack.pop() {
                        for &w in &adj[u] {
                            if !seen[w] {
                                seen[w] = true;
                                stack.push(w);
                            }
                        }
                    }
                    seen
                });
                seen[i]
            })
            .collect()
    }

    /// Source-side rows and columns of the current minimum cut.
    pub fn cut(&self) -> (Vec<usize>, Vec<usize>) {
        let side = self.net.reachable(self.source);
        let rows = (0..self.n).filter(|&i| side[i]).collect();
        let cols = (0..self.n).filter(|&j| side[self.n + j]).collect();
        (rows, cols)
    }

    /// Adds link `k` to the support and re-maximises the flow.
    pub fn enable(&mut self, k: usize) {
        if self.active[k] {
            return;
        }
        self.active[k] = true;
        let e = self.var_edge[k];
        self.net.cap[e] = 1.0;
        self.net.cap[e ^ 1] = 0.0;
        self.flow += self.net.augment(self.source, self.sink);
    }

    /// Removes link `k` if the support stays feasible without it; returns
    /// whether the removal was kept. Only meaningful on a feasible support.
    pub fn try_remove(&mut self, k: usize, i: usize, j: usize) -> bool {
        if !self.active[k] {
            return true;
        }
        let e = self.var_edge[k];
        let f = self.net.flow(e);
        // cancel the flow routed through the link
        let (re, ce) = (self.row_edge[i], self.col_edge[j]);
        self.net.cap[re] += f;
        self.net.cap[re ^ 1] -= f;
        self.net.cap[ce] += f;
        self.net.cap[ce ^ 1] -= f;
        self.net.cap[e] = 0.0;
        self.net.cap[e ^ 1] = 0.0;
        self.flow -= f;
        self.active[k] = false;
        self.flow += self.net.augment(self.source, self.sink);
        if self.is_feasible() {
            return true;
        }
        self.active[k] = true;
        self.net.cap[e] = 1.0;
        self.flow += self.net.augment(self.source, self.sink);
        false
    }
}
