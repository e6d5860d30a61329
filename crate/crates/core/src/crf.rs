//! Linear-chain CRF over emission scores.
//!
//! Transition scores live in a `(K+2)×(K+2)` matrix indexed `[from][to]`,
//! where rows/columns `K` and `K+1` are the virtual start and end tags.
//! Every dynamic program runs in log space.

use crate::error::{Error, Result};
use crate::numerics::{logsumexp, Tensor};

/// Score given to transitions that must never be taken.
pub const FORBIDDEN: f64 = -1e4;

/// Transition matrix plus the entries pinned at [`FORBIDDEN`].
#[derive(Debug, Clone, PartialEq)]
pub struct CrfParams {
    pub transitions: Tensor,
    pub fixed: Vec<bool>,
}

impl CrfParams {
    /// Zero transitions; only moves into start and out of end are forbidden.
    pub fn new(num_tags: usize) -> Self {
        Self::with_constraints(num_tags, |_, _| true)
    }

    /// `allowed(from, to)` gets `None` for start (as `from`) or end (as `to`).
    /// Disallowed pairs are pinned at [`FORBIDDEN`] along with the structural
    /// start/end entries.
    pub fn with_constraints(
        num_tags: usize,
        allowed: impl Fn(Option<usize>, Option<usize>) -> bool,
    ) -> Self {
        let n = num_tags + 2;
        let (start, end) = (num_tags, num_tags + 1);
        let mut transitions = Tensor::zeros(n, n);
        let mut fixed = vec![false; n * n];
        for from in 0..n {
            for to in 0..n {
                let pinned = if to == start || from == end {
                    true
                } else if from == start && to == end {
                    false
                } else {
                    let f = (from != start).then_some(from);
                    let t = (to != end).then_some(to);
                    !allowed(f, t)
                };
                if pinned {
                    transitions.set(from, to, FORBIDDEN);
                    fixed[from * n + to] = true;
                }
            }
        }
        CrfParams { transitions, fixed }
    }

    pub fn num_tags(&self) -> usize {
        self.transitions.rows() - 2
    }

    pub fn start_id(&self) -> usize {
        self.num_tags()
    }

    pub fn end_id(&self) -> usize {
        self.num_tags() + 1
    }
}

fn check(emissions: &Tensor, transitions: &Tensor) -> Result<(usize, usize)> {
    let (t, k) = (emissions.rows(), emissions.cols());
    if t == 0 {
        return Err(Error::invalid("empty emission matrix"));
    }
    if transitions.rows() != k + 2 || transitions.cols() != k + 2 {
        return Err(Error::invalid(format!(
            "transition matrix is {}x{}, expected {}x{}",
            transitions.rows(),
            transitions.cols(),
            k + 2,
            k + 2
        )));
    }
    Ok((t, k))
}

/// `S(x, y)`: every transition from start through end plus every emission.
pub fn sequence_score(emissions: &Tensor, tags: &[usize], transitions: &Tensor) -> Result<f64> {
    let (t, k) = check(emissions, transitions)?;
    if tags.len() != t {
        return Err(Error::invalid(format!("{} tags for {} tokens", tags.len(), t)));
    }
    if let Some(bad) = tags.iter().find(|&&y| y >= k) {
        return Err(Error::invalid(format!("tag id {bad} out of range {k}")));
    }
    let mut score = 0.0;
    let mut prev = k;
    for (i, &y) in tags.iter().enumerate() {
        score += transitions.get(prev, y) + emissions.get(i, y);
        prev = y;
    }
    Ok(score + transitions.get(prev, k + 1))
}

fn forward_table(emissions: &Tensor, transitions: &Tensor, t: usize, k: usize) -> Vec<Vec<f64>> {
    let mut alpha = vec![vec![0.0; k]; t];
    for j in 0..k {
        alpha[0][j] = transitions.get(k, j) + emissions.get(0, j);
    }
    let mut buf = vec![0.0; k];
    for s in 1..t {
        for j in 0..k {
            for i in 0..k {
                buf[i] = alpha[s - 1][i] + transitions.get(i, j);
            }
            alpha[s][j] = logsumexp(&buf) + emissions.get(s, j);
        }
    }
    alpha
}

/// `log Σ_y exp S(x, y)` via the forward recursion.
pub fn log_partition(emissions: &Tensor, transitions: &Tensor) -> Result<f64> {
    let (t, k) = check(emissions, transitions)?;
    let alpha = forward_table(emissions, transitions, t, k);
    let last: Vec<f64> = (0..k).map(|j| alpha[t - 1][j] + transitions.get(j, k + 1)).collect();
    Ok(logsumexp(&last))
}

/// Posterior marginals from a forward-backward pass.
#[derive(Debug, Clone)]
pub struct Marginals {
    pub log_partition: f64,
    /// `T×K`: probability that token `t` carries tag `j`.
    pub unary: Tensor,
    /// `(K+2)×(K+2)`: expected number of times each transition is taken.
    pub pairwise: Tensor,
}

pub fn forward_backward(emissions: &Tensor, transitions: &Tensor) -> Result<Marginals> {
    let (t, k) = check(emissions, transitions)?;
    let (start, end) = (k, k + 1);
    let alpha = forward_table(emissions, transitions, t, k);
    let last: Vec<f64> = (0..k).map(|j| alpha[t - 1][j] + transitions.get(j, end)).collect();
    let log_z = logsumexp(&last);

    let mut beta = vec![vec![0.0; k]; t];
    for i in 0..k {
        beta[t - 1][i] = transitions.get(i, end);
    }
    let mut buf = vec![0.0; k];
    for s in (0..t - 1).rev() {
        for i in 0..k {
            for j in 0..k {
                buf[j] = transitions.get(i, j) + emissions.get(s + 1, j) + beta[s + 1][j];
            }
            beta[s][i] = logsumexp(&buf);
        }
    }

    let mut unary = Tensor::zeros(t, k);
    for s in 0..t {
        for j in 0..k {
            unary.set(s, j, (alpha[s][j] + beta[s][j] - log_z).exp());
        }
    }
    let mut pairwise = Tensor::zeros(k + 2, k + 2);
    for j in 0..k {
        pairwise.set(start, j, unary.get(0, j));
        pairwise.set(j, end, unary.get(t - 1, j));
    }
    for s in 0..t - 1 {
        for i in 0..k {
            for j in 0..k {
                let lp = alpha[s][i] + transitions.get(i, j) + emissions.get(s + 1, j)
                    + beta[s + 1][j]
                    - log_z;
                let cur = pairwise.get(i, j);
                pairwise.set(i, j, cur + lp.exp());
            }
        }
    }
    Ok(Marginals { log_partition: log_z, unary, pairwise })
}

/// Negative log-likelihood of `tags`; rounding below zero is clipped.
pub fn nll(emissions: &Tensor, tags: &[usize], transitions: &Tensor) -> Result<f64> {
    let score = sequence_score(emissions, tags, transitions)?;
    let d = log_partition(emissions, transitions)? - score;
    Ok(if d < 0.0 { 0.0 } else { d })
}

/// Highest-scoring tag sequence and its score.
///
/// Among equally good paths the one with the smaller tag id at the latest
/// position where they differ wins.
pub fn viterbi(emissions: &Tensor, transitions: &Tensor) -> Result<(Vec<usize>, f64)> {
    let (t, k) = check(emissions, transitions)?;
    let mut delta = vec![vec![0.0; k]; t];
    let mut back = vec![vec![0usize; k]; t];
    for j in 0..k {
        delta[0][j] = transitions.get(k, j) + emissions.get(0, j);
    }
    for s in 1..t {
        for j in 0..k {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for i in 0..k {
                let v = delta[s - 1][i] + transitions.get(i, j);
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            delta[s][j] = best + emissions.get(s, j);
            back[s][j] = arg;
        }
    }
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for j in 0..k {
        let v = delta[t - 1][j] + transitions.get(j, k + 1);
        if v > best {
            best = v;
            arg = j;
        }
    }
    let mut path = vec![arg; t];
    for s in (1..t).rev() {
        path[s - 1] = back[s][path[s]];
    }
    Ok((path, best))
}
