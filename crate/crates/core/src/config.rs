//! Run configuration: flat `key = value` text whose keys are the field names.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::corpus::Task;
use crate::depgraph::ReorientMode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Linear softmax head, token cross-entropy.
    Rgat,
    RgatCrf,
    RgatBilstmCrf,
    RgatTrfmrCrf,
}

impl Variant {
    pub const ALL: [Variant; 4] =
        [Variant::Rgat, Variant::RgatCrf, Variant::RgatBilstmCrf, Variant::RgatTrfmrCrf];

    pub fn uses_crf(self) -> bool {
        self != Variant::Rgat
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Rgat => "rgat",
            Variant::RgatCrf => "rgat-crf",
            Variant::RgatBilstmCrf => "rgat-bilstm-crf",
            Variant::RgatTrfmrCrf => "rgat-trfmr-crf",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderSource {
    /// Trainable token and part-of-speech tables.
    Lookup,
    /// Frozen per-token vectors read from a sidecar file.
    Sidecar,
}

impl fmt::Display for EncoderSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderSource::Lookup => "lookup",
            EncoderSource::Sidecar => "sidecar",
        })
    }
}

impl FromStr for EncoderSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lookup" => Ok(EncoderSource::Lookup),
            "sidecar" => Ok(EncoderSource::Sidecar),
            _ => Err(Error::invalid(format!("unknown encoder source {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub task: Task,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub dropout: f64,
    pub dropout_nodes: bool,
    pub dropout_relations: bool,
    pub rel_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub attention_heads: usize,
    pub relational_heads: usize,
    pub token_dim: usize,
    pub pos_dim: usize,
    pub seed: u64,
    pub reorient_mode: ReorientMode,
    pub encoder_source: EncoderSource,
    /// Width of sidecar vectors; fixed when training starts.
    pub sidecar_dim: usize,
    /// Pin BIEOS-illegal CRF transitions.
    pub bieos_mask: bool,
    /// Draw each sentence's training pivot once instead of every epoch.
    pub freeze_pivots: bool,
    /// Sentences per optimizer step.
    pub accumulate: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::RgatBilstmCrf,
            task: Task::Aspect,
            epochs: 20,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            dropout: 0.3,
            dropout_nodes: true,
            dropout_relations: true,
            rel_dim: 200,
            hidden: 128,
            layers: 2,
            attention_heads: 4,
            relational_heads: 4,
            token_dim: 100,
            pos_dim: 30,
            seed: 42,
            reorient_mode: ReorientMode::Star,
            encoder_source: EncoderSource::Lookup,
            sidecar_dim: 0,
            bieos_mask: false,
            freeze_pivots: false,
            accumulate: 1,
        }
    }
}

/// Every recognised key, in serialization order.
pub const KEYS: [&str; 24] = [
    "variant",
    "task",
    "epochs",
    "learningRate",
    "adamBeta1",
    "adamBeta2",
    "adamEps",
    "dropout",
    "dropoutNodes",
    "dropoutRelations",
    "relDim",
    "hidden",
    "layers",
    "attentionHeads",
    "relationalHeads",
    "tokenDim",
    "posDim",
    "seed",
    "reorientMode",
    "encoderSource",
    "sidecarDim",
    "bieosMask",
    "freezePivots",
    "accumulate",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::config(key, format!("cannot parse {value:?}")))
}

impl TrainConfig {
    /// Sets one field from its textual key and value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let wrap = |e: Error| match e {
            Error::InvalidInput(m) => Error::config(key, m),
            other => other,
        };
        match key {
            "variant" => self.variant = v.parse().map_err(wrap)?,
            "task" => self.task = v.parse().map_err(wrap)?,
            "epochs" => self.epochs = parse(key, v)?,
            "learningRate" => self.learning_rate = parse(key, v)?,
            "adamBeta1" => self.adam_beta1 = parse(key, v)?,
            "adamBeta2" => self.adam_beta2 = parse(key, v)?,
            "adamEps" => self.adam_eps = parse(key, v)?,
            "dropout" => self.dropout = parse(key, v)?,
            "dropoutNodes" => self.dropout_nodes = parse(key, v)?,
            "dropoutRelations" => self.dropout_relations = parse(key, v)?,
            "relDim" => self.rel_dim = parse(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "layers" => self.layers = parse(key, v)?,
            "attentionHeads" => self.attention_heads = parse(key, v)?,
            "relationalHeads" => self.relational_heads = parse(key, v)?,
            "tokenDim" => self.token_dim = parse(key, v)?,
            "posDim" => self.pos_dim = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "reorientMode" => self.reorient_mode = v.parse().map_err(wrap)?,
            "encoderSource" => self.encoder_source = v.parse().map_err(wrap)?,
            "sidecarDim" => self.sidecar_dim = parse(key, v)?,
            "bieosMask" => self.bieos_mask = parse(key, v)?,
            "freezePivots" => self.freeze_pivots = parse(key, v)?,
            "accumulate" => self.accumulate = parse(key, v)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "variant" => self.variant.to_string(),
            "task" => self.task.to_string(),
            "epochs" => self.epochs.to_string(),
            "learningRate" => fmt_f64(self.learning_rate),
            "adamBeta1" => fmt_f64(self.adam_beta1),
            "adamBeta2" => fmt_f64(self.adam_beta2),
            "adamEps" => fmt_f64(self.adam_eps),
            "dropout" => fmt_f64(self.dropout),
            "dropoutNodes" => self.dropout_nodes.to_string(),
            "dropoutRelations" => self.dropout_relations.to_string(),
            "relDim" => self.rel_dim.to_string(),
            "hidden" => self.hidden.to_string(),
            "layers" => self.layers.to_string(),
            "attentionHeads" => self.attention_heads.to_string(),
            "relationalHeads" => self.relational_heads.to_string(),
            "tokenDim" => self.token_dim.to_string(),
            "posDim" => self.pos_dim.to_string(),
            "seed" => self.seed.to_string(),
            "reorientMode" => self.reorient_mode.to_string(),
            "encoderSource" => self.encoder_source.to_string(),
            "sidecarDim" => self.sidecar_dim.to_string(),
            "bieosMask" => self.bieos_mask.to_string(),
            "freezePivots" => self.freeze_pivots.to_string(),
            "accumulate" => self.accumulate.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines on top of `self`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}", n + 1), "expected `key = value`")
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = TrainConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("known key"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", format!("{} outside [0, 1)", self.dropout)));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learningRate", "must be positive"));
        }
        for (key, b) in [("adamBeta1", self.adam_beta1), ("adamBeta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(key, "must lie in [0, 1)"));
            }
        }
        if self.adam_eps <= 0.0 {
            return Err(Error::config("adamEps", "must be positive"));
        }
        for (key, v) in [
            ("relDim", self.rel_dim),
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("attentionHeads", self.attention_heads),
            ("relationalHeads", self.relational_heads),
            ("accumulate", self.accumulate),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if !self.hidden.is_multiple_of(self.attention_heads) {
            return Err(Error::config("attentionHeads", "must divide hidden"));
        }
        if !self.hidden.is_multiple_of(self.relational_heads) {
            return Err(Error::config("relationalHeads", "must divide hidden"));
        }
        match self.encoder_source {
            EncoderSource::Lookup if self.token_dim + self.pos_dim == 0 => {
                return Err(Error::config("tokenDim", "lookup encoder needs a nonzero width"))
            }
            _ => {}
        }
        Ok(())
    }

    /// Width of the encoder output fed to the first graph layer.
    pub fn input_dim(&self) -> usize {
        match self.encoder_source {
            EncoderSource::Lookup => self.token_dim + self.pos_dim,
            EncoderSource::Sidecar => self.sidecar_dim,
        }
    }
}

/// Shortest text that parses back to the same `f64`.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
