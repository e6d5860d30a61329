#![allow(dead_code)]

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;
use spantagger::corpus::{parse_corpus_strict, spans_to_tags, Label, Span};
use spantagger::numerics::Tensor;
use spantagger::{Sentence, Task, Token};

pub const SYNTHETIC: &str = include_str!("../data/synthetic.conll");

pub fn synthetic(task: Task) -> Vec<Sentence> {
    parse_corpus_strict(SYNTHETIC, task).expect("fixture parses")
}

/// Random heads forming a tree over `n` nodes; `None` marks the root.
pub fn random_heads(n: usize, rng: &mut impl Rng) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut heads = vec![None; n];
    for k in 1..n {
        heads[order[k]] = Some(order[rng.gen_range(0..k)]);
    }
    heads
}

/// Disjoint random spans over `len` tokens.
pub fn random_spans(len: usize, labels: &[Label], rng: &mut impl Rng) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < len {
        if rng.gen_bool(0.35) {
            let end = (i + rng.gen_range(0..3)).min(len - 1);
            spans.push(Span::new(i, end, *labels.choose(rng).unwrap()));
            i = end + 1 + rng.gen_range(0..2);
        } else {
            i += 1;
        }
    }
    spans
}

const WORDS: &[(&str, &str)] = &[
    ("food", "NN"),
    ("screen", "NN"),
    ("staff", "NNS"),
    ("great", "JJ"),
    ("slow", "JJ"),
    ("the", "DT"),
    ("was", "VBD"),
    ("very", "RB"),
    ("and", "CC"),
];
const DEPRELS: &[&str] = &["nsubj", "amod", "det", "obj", "advmod", "conj", "cop"];

/// A random tree-shaped sentence with gold tags for both tasks.
pub fn random_sentence(id: &str, n: usize, rng: &mut impl Rng) -> Sentence {
    let heads = random_heads(n, rng);
    let aspect = spans_to_tags(&random_spans(n, &[Label::Pos, Label::Neg, Label::Neu], rng), n).unwrap();
    let opinion = spans_to_tags(&random_spans(n, &[Label::Opinion], rng), n).unwrap();
    let tokens = (0..n)
        .map(|i| {
            let (w, pos) = WORDS.choose(rng).unwrap();
            Token {
                surface: w.to_string(),
                pos: pos.to_string(),
                head: heads[i],
                deprel: if heads[i].is_none() { "root".into() } else { DEPRELS.choose(rng).unwrap().to_string() },
                aspect: Some(aspect[i]),
                opinion: Some(opinion[i]),
            }
        })
        .collect();
    Sentence { id: id.to_string(), tokens }
}

/// Hop distances in the undirected tree given by `heads`.
pub fn bfs_distances(heads: &[Option<usize>], from: usize) -> Vec<usize> {
    let n = heads.len();
    let mut adj = vec![Vec::new(); n];
    for (d, h) in heads.iter().enumerate() {
        if let Some(h) = *h {
            adj[h].push(d);
            adj[d].push(h);
        }
    }
    let mut dist = vec![usize::MAX; n];
    dist[from] = 0;
    let mut q = VecDeque::from([from]);
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                q.push_back(v);
            }
        }
    }
    dist
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

/// Path score written out term by term: start, emissions, transitions, end.
pub fn path_score(p: &Tensor, a: &Tensor, tags: &[usize]) -> f64 {
    let k = p.cols();
    let (start, end) = (k, k + 1);
    let mut s = a.get(start, tags[0]) + a.get(*tags.last().unwrap(), end);
    for (t, &y) in tags.iter().enumerate() {
        s += p.get(t, y);
        if t > 0 {
            s += a.get(tags[t - 1], y);
        }
    }
    s
}

/// Every tag sequence of length `t` over `k` tags, in lexicographic order.
pub fn all_paths(t: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..t {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..k).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

/// Exhaustive maximum and log-sum-exp over all paths.
pub fn enumerate(p: &Tensor, a: &Tensor) -> (Vec<usize>, f64, f64) {
    let paths = all_paths(p.rows(), p.cols());
    let scores: Vec<f64> = paths.iter().map(|y| path_score(p, a, y)).collect();
    let (mut best, mut best_score) = (0, f64::NEG_INFINITY);
    for (i, &s) in scores.iter().enumerate() {
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    let m = best_score;
    let log_z = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
    (paths[best].clone(), best_score, log_z)
}
