//! The tagger: token encoder, stacked relational graph attention layers,
//! an optional BiLSTM or Transformer layer, and the tag-score projection.

mod encoder;
mod heads;
mod rgat;

pub use encoder::{encode_lookup, encode_sidecar, Sidecar};
pub use heads::{
    bilstm, emissions, lstm_pass, transformer_layer, LstmVars, TransformerVars, LAYER_NORM_EPS,
};
pub use rgat::{
    attention_head, relation_gates, relational_head, rgat_layer, AttentionHeadVars, Dropout,
    LayerOutput, LayerVars, Neighborhoods, RelationalHeadVars,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{EncoderSource, TrainConfig, Variant};
use crate::corpus::{Sentence, Tag, Task, Vocabs};
use crate::crf::{self, CrfParams};
use crate::depgraph::{choose_pivot, DepGraph, Pivot};
use crate::error::{Error, Result};
use crate::numerics::{dropout_mask, Mode, ParamStore, Tape, Tensor, Var};

/// Floor for probabilities inside the token cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// uniform(−0.1, 0.1)
    Embedding,
    /// uniform(±√(6/(fan_in+fan_out)))
    Xavier,
    Zeros,
    Ones,
    /// CRF transitions: zeros with the pinned entries at the forbidden score.
    Transitions,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

fn spec(name: impl Into<String>, rows: usize, cols: usize, init: Init) -> ParamSpec {
    ParamSpec { name: name.into(), rows, cols, init }
}

/// Every learnable tensor implied by a configuration and vocabulary, in a
/// fixed order.
pub fn param_specs(config: &TrainConfig, vocabs: &Vocabs) -> Vec<ParamSpec> {
    let mut s = Vec::new();
    if config.encoder_source == EncoderSource::Lookup {
        s.push(spec("embed.token", vocabs.token.len(), config.token_dim.max(1), Init::Embedding));
        s.push(spec("embed.pos", vocabs.pos.len(), config.pos_dim.max(1), Init::Embedding));
    }
    s.push(spec("embed.relation", vocabs.num_relations(), config.rel_dim, Init::Embedding));
    let hidden = config.hidden;
    let d_att = hidden / config.attention_heads;
    let d_rel = hidden / config.relational_heads;
    for l in 0..config.layers {
        let d_in = if l == 0 { config.input_dim() } else { hidden };
        for k in 0..config.attention_heads {
            s.push(spec(format!("rgat.{l}.att.{k}.w"), d_in, d_att, Init::Xavier));
            s.push(spec(format!("rgat.{l}.att.{k}.a"), 2 * d_att, 1, Init::Xavier));
        }
        for m in 0..config.relational_heads {
            s.push(spec(format!("rgat.{l}.rel.{m}.w1"), config.rel_dim, d_rel, Init::Xavier));
            s.push(spec(format!("rgat.{l}.rel.{m}.b1"), 1, d_rel, Init::Zeros));
            s.push(spec(format!("rgat.{l}.rel.{m}.w2"), d_rel, 1, Init::Xavier));
            s.push(spec(format!("rgat.{l}.rel.{m}.b2"), 1, 1, Init::Zeros));
            s.push(spec(format!("rgat.{l}.rel.{m}.value"), d_in, d_rel, Init::Xavier));
        }
        let concat = config.attention_heads * d_att + config.relational_heads * d_rel;
        s.push(spec(format!("rgat.{l}.out.w"), concat, hidden, Init::Xavier));
        s.push(spec(format!("rgat.{l}.out.b"), 1, hidden, Init::Zeros));
    }
    let mut final_dim = hidden;
    match config.variant {
        Variant::RgatBilstmCrf => {
            for dir in ["fwd", "bwd"] {
                for g in ["i", "f", "o", "c"] {
                    s.push(spec(format!("lstm.{dir}.w_{g}"), 2 * hidden, hidden, Init::Xavier));
                }
                for g in ["i", "f", "o", "c"] {
                    s.push(spec(format!("lstm.{dir}.b_{g}"), 1, hidden, Init::Zeros));
                }
            }
            final_dim = 2 * hidden;
        }
        Variant::RgatTrfmrCrf => {
            for w in ["w_q", "w_k", "w_v", "w_o"] {
                s.push(spec(format!("trf.{w}"), hidden, hidden, Init::Xavier));
            }
            s.push(spec("trf.ln1.gain", 1, hidden, Init::Ones));
            s.push(spec("trf.ln1.bias", 1, hidden, Init::Zeros));
            s.push(spec("trf.ff.w1", hidden, 4 * hidden, Init::Xavier));
            s.push(spec("trf.ff.b1", 1, 4 * hidden, Init::Zeros));
            s.push(spec("trf.ff.w2", 4 * hidden, hidden, Init::Xavier));
            s.push(spec("trf.ff.b2", 1, hidden, Init::Zeros));
            s.push(spec("trf.ln2.gain", 1, hidden, Init::Ones));
            s.push(spec("trf.ln2.bias", 1, hidden, Init::Zeros));
        }
        Variant::Rgat | Variant::RgatCrf => {}
    }
    let k = vocabs.num_tags();
    s.push(spec("out.w", final_dim, k, Init::Xavier));
    s.push(spec("out.b", 1, k, Init::Zeros));
    if config.variant.uses_crf() {
        s.push(spec("crf.transitions", k + 2, k + 2, Init::Transitions));
    }
    s
}

/// Transition template (values and pinned entries) for a config and task.
pub fn crf_template(config: &TrainConfig, task: Task) -> CrfParams {
    let tags = task.tagset();
    if config.bieos_mask {
        CrfParams::with_constraints(tags.len(), |from, to| {
            Tag::allows(from.map(|i| tags[i]), to.map(|j| tags[j]))
        })
    } else {
        CrfParams::new(tags.len())
    }
}

/// Everything one forward pass produced, as tape handles.
#[derive(Debug, Clone)]
pub struct Forward {
    pub emissions: Var,
    pub layers: Vec<LayerOutput>,
    pub encoded: Var,
    /// Output of the graph stack (input to the sequence head).
    pub graph_output: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: TrainConfig,
    pub vocabs: Vocabs,
    pub params: ParamStore,
}

impl Model {
    /// Freshly initialised parameters drawn from `config.seed`.
    pub fn new(config: TrainConfig, vocabs: Vocabs) -> Result<Model> {
        config.validate()?;
        if config.task != vocabs.task {
            return Err(Error::config("task", "vocabulary built for a different task"));
        }
        if config.encoder_source == EncoderSource::Sidecar && config.sidecar_dim == 0 {
            return Err(Error::config("sidecarDim", "sidecar encoder needs its vector width"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let crf = crf_template(&config, config.task);
        let mut params = ParamStore::new();
        for p in param_specs(&config, &vocabs) {
            let value = match p.init {
                Init::Embedding => Tensor::uniform(p.rows, p.cols, 0.1, &mut rng),
                Init::Xavier => {
                    let bound = (6.0 / (p.rows + p.cols) as f64).sqrt();
                    Tensor::uniform(p.rows, p.cols, bound, &mut rng)
                }
                Init::Zeros => Tensor::zeros(p.rows, p.cols),
                Init::Ones => Tensor::filled(p.rows, p.cols, 1.0),
                Init::Transitions => crf.transitions.clone(),
            };
            let id = params.insert(p.name, value)?;
            if p.init == Init::Transitions {
                params.set_fixed(id, crf.fixed.clone());
            }
        }
        Ok(Model { config, vocabs, params })
    }

    /// Reassembles a model from stored tensors, checking names and shapes.
    pub fn from_parts(config: TrainConfig, vocabs: Vocabs, mut params: ParamStore) -> Result<Model> {
        config.validate()?;
        let specs = param_specs(&config, &vocabs);
        if specs.len() != params.len() {
            return Err(Error::checkpoint(
                "param",
                format!("expected {} tensors, found {}", specs.len(), params.len()),
            ));
        }
        for p in &specs {
            let id = params
                .id(&p.name)
                .ok_or_else(|| Error::checkpoint(&p.name, "missing tensor"))?;
            let shape = params.value(id).shape();
            if shape != [p.rows, p.cols] {
                return Err(Error::checkpoint(
                    &p.name,
                    format!("shape {shape:?}, expected [{}, {}]", p.rows, p.cols),
                ));
            }
            if p.init == Init::Transitions {
                params.set_fixed(id, crf_template(&config, config.task).fixed);
            }
        }
        Ok(Model { config, vocabs, params })
    }

    pub fn task(&self) -> Task {
        self.config.task
    }

    fn var(&self, tape: &mut Tape, name: &str) -> Result<Var> {
        Ok(tape.param(&self.params, self.params.require(name)?))
    }

    fn layer_vars(&self, tape: &mut Tape, l: usize) -> Result<LayerVars> {
        let mut attention = Vec::new();
        for k in 0..self.config.attention_heads {
            attention.push(AttentionHeadVars {
                w: self.var(tape, &format!("rgat.{l}.att.{k}.w"))?,
                a: self.var(tape, &format!("rgat.{l}.att.{k}.a"))?,
            });
        }
        let mut relational = Vec::new();
        for m in 0..self.config.relational_heads {
            let p = |s: &str| format!("rgat.{l}.rel.{m}.{s}");
            relational.push(RelationalHeadVars {
                w1: self.var(tape, &p("w1"))?,
                b1: self.var(tape, &p("b1"))?,
                w2: self.var(tape, &p("w2"))?,
                b2: self.var(tape, &p("b2"))?,
                value: self.var(tape, &p("value"))?,
            });
        }
        Ok(LayerVars {
            attention,
            relational,
            out_w: self.var(tape, &format!("rgat.{l}.out.w"))?,
            out_b: self.var(tape, &format!("rgat.{l}.out.b"))?,
        })
    }

    fn lstm_vars(&self, tape: &mut Tape, dir: &str) -> Result<LstmVars> {
        let mut v = |g: &str| self.var(tape, &format!("lstm.{dir}.{g}"));
        Ok(LstmVars {
            w_i: v("w_i")?,
            w_f: v("w_f")?,
            w_o: v("w_o")?,
            w_c: v("w_c")?,
            b_i: v("b_i")?,
            b_f: v("b_f")?,
            b_o: v("b_o")?,
            b_c: v("b_c")?,
        })
    }

    fn transformer_vars(&self, tape: &mut Tape) -> Result<TransformerVars> {
        let mut v = |n: &str| self.var(tape, &format!("trf.{n}"));
        Ok(TransformerVars {
            w_q: v("w_q")?,
            w_k: v("w_k")?,
            w_v: v("w_v")?,
            w_o: v("w_o")?,
            ln1_gain: v("ln1.gain")?,
            ln1_bias: v("ln1.bias")?,
            ff_w1: v("ff.w1")?,
            ff_b1: v("ff.b1")?,
            ff_w2: v("ff.w2")?,
            ff_b2: v("ff.b2")?,
            ln2_gain: v("ln2.gain")?,
            ln2_bias: v("ln2.bias")?,
        })
    }

    /// Token vectors before the graph layers.
    pub fn encode(&self, tape: &mut Tape, sentence: &Sentence, sidecar: Option<&Sidecar>) -> Result<Var> {
        match self.config.encoder_source {
            EncoderSource::Lookup => {
                let tok = self.var(tape, "embed.token")?;
                let pos = self.var(tape, "embed.pos")?;
                encode_lookup(tape, sentence, &self.vocabs, tok, pos)
            }
            EncoderSource::Sidecar => {
                let sc = sidecar.ok_or_else(|| {
                    Error::Data("model uses sidecar vectors but none were supplied".into())
                })?;
                if sc.dim() != self.config.sidecar_dim {
                    return Err(Error::Data(format!(
                        "sidecar width {} does not match the model's {}",
                        sc.dim(),
                        self.config.sidecar_dim
                    )));
                }
                encode_sidecar(tape, sentence, sc)
            }
        }
    }

    /// Records a forward pass for `sentence` over `graph` and returns the
    /// emission matrix handle. `rng` is only drawn from in training mode.
    pub fn forward(
        &self,
        tape: &mut Tape,
        sentence: &Sentence,
        graph: &DepGraph,
        sidecar: Option<&Sidecar>,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<Forward> {
        if graph.len() != sentence.len() {
            return Err(Error::invalid("graph and sentence lengths differ"));
        }
        let cfg = &self.config;
        let train = mode == Mode::Train && cfg.dropout > 0.0;
        let encoded = self.encode(tape, sentence, sidecar)?;
        let nb = Neighborhoods::new(graph, |r| self.vocabs.relation_id(&r.to_string()));

        let table = self.var(tape, "embed.relation")?;
        let mut rel_rows = tape.gather_rows(table, &nb.relations)?;
        if train && cfg.dropout_relations {
            let v = tape.value(rel_rows);
            let mask = dropout_mask(v.rows(), v.cols(), cfg.dropout, rng)?;
            rel_rows = tape.mul_const(rel_rows, mask)?;
        }

        let mut h = encoded;
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let vars = self.layer_vars(tape, l)?;
            let dropout = (train && cfg.dropout_nodes).then_some(Dropout { rate: cfg.dropout, rng: &mut *rng });
            let out = rgat_layer(tape, h, &nb, rel_rows, &vars, dropout)?;
            h = out.h;
            layers.push(out);
        }
        let graph_output = h;
        let features = match cfg.variant {
            Variant::Rgat | Variant::RgatCrf => h,
            Variant::RgatBilstmCrf => {
                let f = self.lstm_vars(tape, "fwd")?;
                let b = self.lstm_vars(tape, "bwd")?;
                bilstm(tape, h, &f, &b)?
            }
            Variant::RgatTrfmrCrf => {
                let v = self.transformer_vars(tape)?;
                transformer_layer(tape, h, &v, cfg.attention_heads)?.0
            }
        };
        let w = self.var(tape, "out.w")?;
        let b = self.var(tape, "out.b")?;
        let emissions = emissions(tape, features, w, b)?;
        Ok(Forward { emissions, layers, encoded, graph_output })
    }

    /// Token cross-entropy for the linear variant, CRF negative
    /// log-likelihood otherwise.
    pub fn loss(&self, tape: &mut Tape, fwd: &Forward, gold: &[usize]) -> Result<Var> {
        if self.config.variant.uses_crf() {
            let a = self.var(tape, "crf.transitions")?;
            tape.crf_nll(fwd.emissions, a, gold)
        } else {
            let probs = tape.softmax_rows(fwd.emissions, None)?;
            token_ce_loss(tape, probs, gold)
        }
    }

    /// Pivot used at prediction time; a pure function of the sentence and
    /// the configured seed.
    pub fn prediction_pivot(&self, sentence: &Sentence) -> Pivot {
        let mut key = sentence.id.clone().into_bytes();
        for t in &sentence.tokens {
            key.push(0xff);
            key.extend_from_slice(t.surface.as_bytes());
        }
        let seed = self.config.seed ^ crate::io::fnv1a(&key);
        choose_pivot(sentence, self.config.task, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn prediction_graph(&self, sentence: &Sentence) -> Result<DepGraph> {
        DepGraph::build(sentence)?.reorient(self.prediction_pivot(sentence), self.config.reorient_mode)
    }

    /// Evaluation-mode emission matrix.
    pub fn emission_matrix(&self, sentence: &Sentence, sidecar: Option<&Sidecar>) -> Result<Tensor> {
        let graph = self.prediction_graph(sentence)?;
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fwd = self.forward(&mut tape, sentence, &graph, sidecar, Mode::Eval, &mut rng)?;
        Ok(tape.value(fwd.emissions).clone())
    }

    /// Tag ids: Viterbi for CRF variants, per-token argmax otherwise.
    pub fn predict_ids(&self, sentence: &Sentence, sidecar: Option<&Sidecar>) -> Result<Vec<usize>> {
        let p = self.emission_matrix(sentence, sidecar)?;
        if !p.is_finite() {
            return Err(Error::Numeric(format!("non-finite scores for sentence {}", sentence.id)));
        }
        if self.config.variant.uses_crf() {
            let a = self.params.value(self.params.require("crf.transitions")?);
            Ok(crf::viterbi(&p, a)?.0)
        } else {
            Ok((0..p.rows()).map(|t| argmax(p.row(t))).collect())
        }
    }

    pub fn predict(&self, sentence: &Sentence, sidecar: Option<&Sidecar>) -> Result<Vec<Tag>> {
        let tags = self.vocabs.tags();
        Ok(self.predict_ids(sentence, sidecar)?.into_iter().map(|i| tags[i]).collect())
    }

    /// Gold tag ids of `sentence` for the model's task.
    pub fn gold_ids(&self, sentence: &Sentence) -> Result<Vec<usize>> {
        let task = self.task();
        let gold = sentence
            .gold(task)
            .ok_or_else(|| Error::Data(format!("sentence {} has no gold {task} tags", sentence.id)))?;
        gold.into_iter()
            .map(|t| {
                task.tag_id(t)
                    .ok_or_else(|| Error::invalid(format!("tag {t} not in the {task} tag set")))
            })
            .collect()
    }
}

/// First index of the maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// `−Σ_t log p_t[gold_t]`, probabilities floored at [`PROB_FLOOR`].
pub fn token_ce_loss(tape: &mut Tape, probs: Var, gold: &[usize]) -> Result<Var> {
    let p = tape.value(probs);
    let (t, k) = (p.rows(), p.cols());
    if gold.len() != t {
        return Err(Error::invalid(format!("{} gold tags for {t} tokens", gold.len())));
    }
    if let Some(bad) = gold.iter().find(|&&y| y >= k) {
        return Err(Error::invalid(format!("tag id {bad} out of range {k}")));
    }
    let index = gold.iter().enumerate().map(|(i, &y)| Some(i * k + y)).collect();
    let picked = tape.gather(probs, index, [t, 1])?;
    let nll = tape.neg_log(picked, PROB_FLOOR);
    Ok(tape.sum(nll))
}
