//! Sequence layers placed between the graph encoder and the tag scores.

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Gate weights of one LSTM direction. Each `w_*` maps `[x_t ; h_{t-1}]`
/// (width `d + hidden`) to `hidden`.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w_i: Var,
    pub w_f: Var,
    pub w_o: Var,
    pub w_c: Var,
    pub b_i: Var,
    pub b_f: Var,
    pub b_o: Var,
    pub b_c: Var,
}

fn gate(tape: &mut Tape, z: Var, w: Var, b: Var) -> Result<Var> {
    let g = tape.matmul(z, w)?;
    tape.add_row(g, b)
}

/// Runs one direction over the rows of `x`; rows of the result stay in input
/// order regardless of direction. Initial states are zero.
pub fn lstm_pass(tape: &mut Tape, x: Var, p: &LstmVars, reverse: bool) -> Result<Var> {
    let t_len = tape.value(x).rows();
    let hidden = tape.value(p.w_i).cols();
    let mut h = tape.constant(Tensor::zeros(1, hidden));
    let mut c = tape.constant(Tensor::zeros(1, hidden));
    let mut outputs = vec![None; t_len];
    let order: Vec<usize> = if reverse { (0..t_len).rev().collect() } else { (0..t_len).collect() };
    for t in order {
        let xt = tape.row(x, t)?;
        let z = tape.hcat(&[xt, h])?;
        let i = gate(tape, z, p.w_i, p.b_i)?;
        let i = tape.sigmoid(i);
        let f = gate(tape, z, p.w_f, p.b_f)?;
        let f = tape.sigmoid(f);
        let o = gate(tape, z, p.w_o, p.b_o)?;
        let o = tape.sigmoid(o);
        let cand = gate(tape, z, p.w_c, p.b_c)?;
        let cand = tape.tanh(cand);
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, cand)?;
        c = tape.add(keep, write)?;
        let tc = tape.tanh(c);
        h = tape.mul(o, tc)?;
        outputs[t] = Some(h);
    }
    let rows: Vec<Var> = outputs.into_iter().map(|v| v.expect("every step ran")).collect();
    tape.vcat(&rows)
}

/// Row `t` of the output is `[h→_t ; h←_t]`.
pub fn bilstm(tape: &mut Tape, x: Var, forward: &LstmVars, backward: &LstmVars) -> Result<Var> {
    if tape.value(x).rows() == 0 {
        return Err(Error::invalid("bilstm over an empty sequence"));
    }
    let f = lstm_pass(tape, x, forward, false)?;
    let b = lstm_pass(tape, x, backward, true)?;
    tape.hcat(&[f, b])
}

#[derive(Debug, Clone, Copy)]
pub struct TransformerVars {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    pub w_o: Var,
    pub ln1_gain: Var,
    pub ln1_bias: Var,
    pub ff_w1: Var,
    pub ff_b1: Var,
    pub ff_w2: Var,
    pub ff_b2: Var,
    pub ln2_gain: Var,
    pub ln2_bias: Var,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

fn norm(tape: &mut Tape, x: Var, gain: Var, bias: Var) -> Result<Var> {
    let n = tape.layer_norm_rows(x, LAYER_NORM_EPS);
    let n = tape.mul_row(n, gain)?;
    tape.add_row(n, bias)
}

/// Post-norm encoder layer: unmasked multi-head self-attention with a
/// residual connection and layer norm, then a ReLU feed-forward block with the
/// same wrapping. Returns the output and each head's attention matrix.
pub fn transformer_layer(
    tape: &mut Tape,
    x: Var,
    p: &TransformerVars,
    heads: usize,
) -> Result<(Var, Vec<Var>)> {
    let d = tape.value(x).cols();
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(Error::config("attentionHeads", format!("width {d} not divisible by {heads} heads")));
    }
    let dh = d / heads;
    let q = tape.matmul(x, p.w_q)?;
    let k = tape.matmul(x, p.w_k)?;
    let v = tape.matmul(x, p.w_v)?;
    let mut outs = Vec::with_capacity(heads);
    let mut attn = Vec::with_capacity(heads);
    for hd in 0..heads {
        let qh = tape.slice_cols(q, hd * dh, dh)?;
        let kh = tape.slice_cols(k, hd * dh, dh)?;
        let vh = tape.slice_cols(v, hd * dh, dh)?;
        let kt = tape.transpose(kh);
        let s = tape.matmul(qh, kt)?;
        let s = tape.scale(s, 1.0 / (dh as f64).sqrt());
        let a = tape.softmax_rows(s, None)?;
        outs.push(tape.matmul(a, vh)?);
        attn.push(a);
    }
    let o = tape.hcat(&outs)?;
    let o = tape.matmul(o, p.w_o)?;
    let r = tape.add(x, o)?;
    let n1 = norm(tape, r, p.ln1_gain, p.ln1_bias)?;
    let f = tape.matmul(n1, p.ff_w1)?;
    let f = tape.add_row(f, p.ff_b1)?;
    let f = tape.relu(f);
    let f = tape.matmul(f, p.ff_w2)?;
    let f = tape.add_row(f, p.ff_b2)?;
    let r2 = tape.add(n1, f)?;
    Ok((norm(tape, r2, p.ln2_gain, p.ln2_bias)?, attn))
}

/// `P = H W + b`, the per-token tag scores.
pub fn emissions(tape: &mut Tape, h: Var, w: Var, b: Var) -> Result<Var> {
    let p = tape.matmul(h, w)?;
    tape.add_row(p, b)
}
