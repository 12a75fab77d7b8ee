//! Poisson-binomial weights of a factor's incoming messages.

/// `V^m` for `m = 0..=m_max`: the probability that exactly `m` of the
/// incoming variables are 1 when each is 1 independently with probability
/// `incoming[b]`. Built one neighbour at a time with
/// `V^m_S = (1 - mu_b) V^m_{S\b} + mu_b V^{m-1}_{S\b}`.
pub fn node_weights(incoming: &[f64], m_max: usize) -> Vec<f64> {
    let mut v = vec![0.0; m_max + 1];
    v[0] = 1.0;
    let mut top = 0;
    for &mu in incoming {
        top = (top + 1).min(m_max);
        for m in (1..=top).rev() {
            v[m] = (1.0 - mu) * v[m] + mu * v[m - 1];
        }
        v[0] *= 1.0 - mu;
    }
    v
}

/// Full distribution of the number of ones among `incoming`.
pub(crate) fn distribution(incoming: &[f64]) -> Vec<f64> {
    node_weights(incoming, incoming.len())
}

/// Cavity distributions of a factor: for every neighbour `b`, the
/// distribution of the count over all other neighbours is the convolution
/// of a prefix distribution (neighbours before `b`) and a suffix
/// distribution (neighbours after `b`). Both are sums of non-negative terms,
/// so small probabilities keep their relative accuracy.
///
/// Counts are tracked up to `cap`; the last bin holds every count `>= cap`,
/// so `tail(b, t)` is exact for `t <= cap` and `point(b, t)` for `t < cap`.
#[derive(Debug, Default)]
pub(crate) struct Cavity {
    prefix: Vec<Vec<f64>>,
    suffix: Vec<Vec<f64>>,
    suffix_tail: Vec<Vec<f64>>,
}

impl Cavity {
    pub fn build(&mut self, probs: &[f64], cap: usize) {
        let k = probs.len();
        let cap = cap.max(1);
        self.prefix.resize_with(k, Vec::new);
        self.suffix.resize_with(k, Vec::new);
        self.suffix_tail.resize_with(k, Vec::new);
        if k == 0 {
            return;
        }
        self.prefix[0].clear();
        self.prefix[0].push(1.0);
        for b in 1..k {
            let (head, tail) = self.prefix.split_at_mut(b);
            extend(&head[b - 1], probs[b - 1], cap, &mut tail[0]);
        }
        self.suffix[k - 1].clear();
        self.suffix[k - 1].push(1.0);
        for b in (0..k - 1).rev() {
            let (head, tail) = self.suffix.split_at_mut(b + 1);
            extend(&tail[0], probs[b + 1], cap, &mut head[b]);
        }
        for b in 0..k {
            let s = &self.suffix[b];
            let t = &mut self.suffix_tail[b];
            t.clear();
            t.resize(s.len() + 1, 0.0);
            for j in (0..s.len()).rev() {
                t[j] = t[j + 1] + s[j];
            }
        }
    }

    /// Probability that at least `t` of the neighbours other than `b` are 1.
    pub fn tail(&self, b: usize, t: isize) -> f64 {
        if t <= 0 {
            return 1.0;
        }
        let pre = &self.prefix[b];
        let st = &self.suffix_tail[b];
        let mut sum = 0.0;
        for (i, &p) in pre.iter().enumerate() {
            let need = t - i as isize;
            if need <= 0 {
                sum += p;
            } else if (need as usize) < st.len() {
                sum += p * st[need as usize];
            }
        }
        sum
    }

    /// Probability that exactly `t` of the neighbours other than `b` are 1.
    pub fn point(&self, b: usize, t: isize) -> f64 {
        if t < 0 {
            return 0.0;
        }
        let t = t as usize;
        let pre = &self.prefix[b];
        let suf = &self.suffix[b];
        let mut sum = 0.0;
        for (i, &p) in pre.iter().enumerate().take(t + 1) {
            if let Some(&s) = suf.get(t - i) {
                sum += p * s;
            }
        }
        sum
    }
}

fn extend(base: &[f64], mu: f64, cap: usize, out: &mut Vec<f64>) {
    out.clear();
    let top = base.len().min(cap);
    out.resize(top + 1, 0.0);
    for (m, &v) in base.iter().enumerate() {
        if m == cap {
            out[m] += v;
        } else {
            out[m] += (1.0 - mu) * v;
            out[m + 1] += mu * v;
        }
    }
}
