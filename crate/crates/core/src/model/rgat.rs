//! Relational graph attention layer.
//!
//! Each layer runs `K` attention heads and `M` relational heads over the
//! node neighborhoods, concatenates their outputs per node and projects the
//! result through a ReLU. Attention heads score neighbors from node features;
//! relational heads score them from the relation embedding of the connecting
//! edge alone.

use rand::Rng;

use crate::depgraph::{DepGraph, Relation};
use crate::error::{Error, Result};
use crate::numerics::{dropout_mask, Activation, Tape, Var, LEAKY_SLOPE};

/// Dense view of the neighborhoods of a [`DepGraph`].
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhoods {
    pub n: usize,
    /// `n×n` row-major; `mask[i*n + j]` iff `j ∈ N_i`.
    pub mask: Vec<bool>,
    /// Distinct relation ids present, in first-seen order.
    pub relations: Vec<usize>,
    /// `n×n`: index into `relations` for each edge, `None` off the graph.
    pub slots: Vec<Option<usize>>,
}

impl Neighborhoods {
    pub fn new(graph: &DepGraph, relation_id: impl Fn(&Relation) -> usize) -> Self {
        let n = graph.len();
        let mut mask = vec![false; n * n];
        let mut slots = vec![None; n * n];
        let mut relations: Vec<usize> = Vec::new();
        for (i, nb) in graph.neighborhoods().iter().enumerate() {
            for x in nb {
                let id = relation_id(&x.relation);
                let slot = match relations.iter().position(|&r| r == id) {
                    Some(s) => s,
                    None => {
                        relations.push(id);
                        relations.len() - 1
                    }
                };
                mask[i * n + x.node] = true;
                slots[i * n + x.node] = Some(slot);
            }
        }
        Neighborhoods { n, mask, relations, slots }
    }
}

/// `out_i = Σ_{j∈N_i} α_ij · (h_j W)` with
/// `α_i· = softmax_{N_i}(leakyrelu(a · [h_i W ∥ h_j W]))`.
///
/// Returns the head output and the `n×n` attention matrix.
pub fn attention_head(
    tape: &mut Tape,
    h: Var,
    w: Var,
    a: Var,
    nb: &Neighborhoods,
) -> Result<(Var, Var)> {
    let wh = tape.matmul(h, w)?;
    let d = tape.value(wh).cols();
    if tape.value(a).rows() != 2 * d {
        return Err(Error::invalid("attention vector must have twice the head width"));
    }
    let a_self = tape.slice_rows(a, 0, d)?;
    let a_other = tape.slice_rows(a, d, d)?;
    let s_self = tape.matmul(wh, a_self)?;
    let s_other = tape.matmul(wh, a_other)?;
    let s_other = tape.transpose(s_other);
    let e = tape.outer_add(s_self, s_other)?;
    let e = tape.activate(e, Activation::LeakyRelu(LEAKY_SLOPE));
    let alpha = tape.softmax_rows(e, Some(&nb.mask))?;
    let out = tape.matmul(alpha, wh)?;
    Ok((out, alpha))
}

/// Gate weights for the distinct relations of a graph:
/// `g = σ(relu(r W1 + b1) W2 + b2)`, one value per relation row.
pub fn relation_gates(
    tape: &mut Tape,
    relation_rows: Var,
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
) -> Result<Var> {
    let z = tape.matmul(relation_rows, w1)?;
    let z = tape.add_row(z, b1)?;
    let z = tape.relu(z);
    let g = tape.matmul(z, w2)?;
    let g = tape.add_row(g, b2)?;
    Ok(tape.sigmoid(g))
}

/// `out_i = Σ_{j∈N_i} β_ij · (h_j Wv)` with `β_i· = softmax_{N_i}(g_ij)`.
///
/// `gates` holds one gate per entry of `nb.relations`. Returns the head
/// output and the `n×n` β matrix.
pub fn relational_head(
    tape: &mut Tape,
    h: Var,
    gates: Var,
    value: Var,
    nb: &Neighborhoods,
) -> Result<(Var, Var)> {
    if tape.value(gates).len() != nb.relations.len() {
        return Err(Error::invalid("one gate per distinct relation expected"));
    }
    let g = tape.gather(gates, nb.slots.clone(), [nb.n, nb.n])?;
    let beta = tape.softmax_rows(g, Some(&nb.mask))?;
    let hv = tape.matmul(h, value)?;
    let out = tape.matmul(beta, hv)?;
    Ok((out, beta))
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionHeadVars {
    pub w: Var,
    pub a: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct RelationalHeadVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub value: Var,
}

#[derive(Debug, Clone)]
pub struct LayerVars {
    pub attention: Vec<AttentionHeadVars>,
    pub relational: Vec<RelationalHeadVars>,
    pub out_w: Var,
    pub out_b: Var,
}

#[derive(Debug, Clone)]
pub struct LayerOutput {
    pub h: Var,
    pub alphas: Vec<Var>,
    pub betas: Vec<Var>,
    pub gates: Vec<Var>,
}

/// Dropout applied to layer outputs during training.
pub struct Dropout<'a, R: Rng> {
    pub rate: f64,
    pub rng: &'a mut R,
}

/// One layer: `h'_i = relu(W [att heads ∥ rel heads]_i + b)`, then dropout.
///
/// `relation_rows` holds the embedding of each relation in `nb.relations`.
pub fn rgat_layer<R: Rng>(
    tape: &mut Tape,
    h: Var,
    nb: &Neighborhoods,
    relation_rows: Var,
    vars: &LayerVars,
    dropout: Option<Dropout<'_, R>>,
) -> Result<LayerOutput> {
    let mut parts = Vec::with_capacity(vars.attention.len() + vars.relational.len());
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut gates = Vec::new();
    for head in &vars.attention {
        let (out, alpha) = attention_head(tape, h, head.w, head.a, nb)?;
        parts.push(out);
        alphas.push(alpha);
    }
    for head in &vars.relational {
        let g = relation_gates(tape, relation_rows, head.w1, head.b1, head.w2, head.b2)?;
        let (out, beta) = relational_head(tape, h, g, head.value, nb)?;
        parts.push(out);
        betas.push(beta);
        gates.push(g);
    }
    let x = tape.hcat(&parts)?;
    if tape.value(x).cols() != tape.value(vars.out_w).rows() {
        return Err(Error::config(
            "hidden",
            format!(
                "concatenated width {} does not match projection input {}",
                tape.value(x).cols(),
                tape.value(vars.out_w).rows()
            ),
        ));
    }
    let z = tape.matmul(x, vars.out_w)?;
    let z = tape.add_row(z, vars.out_b)?;
    let mut out = tape.relu(z);
    if let Some(d) = dropout {
        if d.rate > 0.0 {
            let v = tape.value(out);
            let mask = dropout_mask(v.rows(), v.cols(), d.rate, d.rng)?;
            out = tape.mul_const(out, mask)?;
        }
    }
    Ok(LayerOutput { h: out, alphas, betas, gates })
}
