use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{EncoderSource, TrainConfig};
use crate::corpus::{build_vocabs, Sentence};
use crate::depgraph::{choose_pivot, DepGraph, Pivot};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::model::{Model, Sidecar};
use crate::numerics::{Gradients, Mode, Tape};
use crate::training::adam::{Adam, AdamConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    /// Summed training loss over the epoch.
    pub loss: f64,
    pub dev_f1: f64,
}

impl fmt::Display for EpochMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch={} loss={:.6} devF1={:.6}", self.epoch, self.loss, self.dev_f1)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// Parameters from the epoch with the best dev F1 (earliest on ties).
    pub model: Model,
    pub best_epoch: usize,
    pub log: Vec<EpochMetrics>,
    /// Per parameter tensor, in store order: whether any free entry ever
    /// received a nonzero gradient.
    pub grad_seen: Vec<(String, bool)>,
}

impl TrainOutput {
    /// The metrics log, one line per epoch.
    pub fn log_text(&self) -> String {
        self.log.iter().map(|m| format!("{m}\n")).collect()
    }
}

/// Trains a fresh model on `train`, selecting the epoch with the best F1 on
/// `dev`. With no dev sentences the training set is scored instead.
pub fn train(
    config: &TrainConfig,
    train: &[Sentence],
    dev: &[Sentence],
    sidecar: Option<&Sidecar>,
) -> Result<TrainOutput> {
    train_with(config, train, dev, sidecar, |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with(
    config: &TrainConfig,
    train: &[Sentence],
    dev: &[Sentence],
    sidecar: Option<&Sidecar>,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutput> {
    let mut config = config.clone();
    if config.encoder_source == EncoderSource::Sidecar {
        let sc = sidecar.ok_or_else(|| Error::Data("sidecar encoder selected but no vectors given".into()))?;
        config.sidecar_dim = sc.dim();
    }
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Data("training corpus is empty".into()));
    }
    let selection = if dev.is_empty() { train } else { dev };

    // Everything that can fail on the data is checked before the first step.
    let vocabs = build_vocabs(train, config.task)?;
    let mut model = Model::new(config.clone(), vocabs)?;
    let mut items = Vec::with_capacity(train.len());
    for s in train {
        let graph = DepGraph::build(s)?;
        let gold = model.gold_ids(s)?;
        if let Some(sc) = sidecar.filter(|_| config.encoder_source == EncoderSource::Sidecar) {
            sc.get(s)?;
        }
        items.push((s, graph, gold));
    }
    for s in selection {
        model.gold_ids(s)?;
        DepGraph::build(s)?;
        if let Some(sc) = sidecar.filter(|_| config.encoder_source == EncoderSource::Sidecar) {
            sc.get(s)?;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let frozen: Option<Vec<Pivot>> = config
        .freeze_pivots
        .then(|| train.iter().map(|s| choose_pivot(s, config.task, &mut rng)).collect());

    let adam_cfg = AdamConfig {
        learning_rate: config.learning_rate,
        beta1: config.adam_beta1,
        beta2: config.adam_beta2,
        eps: config.adam_eps,
    };
    let mut adam = Adam::new(&model.params, adam_cfg);
    let mut seen = vec![false; model.params.len()];
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Model)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut pending: Option<Gradients> = None;
        let mut pending_count = 0;
        for &i in &order {
            let (sentence, graph, gold) = &items[i];
            let pivot = match &frozen {
                Some(p) => p[i],
                None => choose_pivot(sentence, config.task, &mut rng),
            };
            let graph = graph.reorient(pivot, config.reorient_mode)?;
            let mut tape = Tape::new();
            let fwd = model.forward(&mut tape, sentence, &graph, sidecar, Mode::Train, &mut rng)?;
            let loss = model.loss(&mut tape, &fwd, gold)?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss {value} at epoch {epoch} on sentence {}",
                    sentence.id
                )));
            }
            total += value;
            let grads = tape.backward(loss)?;
            for (id, g) in grads.iter() {
                if !seen[id.index()] {
                    let fixed = model.params.get(id).fixed.as_deref();
                    seen[id.index()] = g
                        .data()
                        .iter()
                        .enumerate()
                        .any(|(j, &x)| x != 0.0 && !fixed.is_some_and(|f| f[j]));
                }
            }
            match pending.as_mut() {
                Some(acc) => acc.merge(&grads),
                None => pending = Some(grads),
            }
            pending_count += 1;
            if pending_count == config.accumulate {
                adam.step(&mut model.params, &pending.take().expect("accumulated"))?;
                pending_count = 0;
            }
        }
        if let Some(acc) = pending.take() {
            adam.step(&mut model.params, &acc)?;
        }
        if !model.params.iter().all(|(_, p)| p.value.is_finite()) {
            return Err(Error::Numeric(format!("non-finite parameters after epoch {epoch}")));
        }

        let dev_f1 = evaluate(&model, selection, config.task, sidecar)?.f1();
        let metrics = EpochMetrics { epoch, loss: total, dev_f1 };
        on_epoch(&metrics);
        log.push(metrics);
        if best.as_ref().is_none_or(|(f, _, _)| dev_f1 > *f) {
            best = Some((dev_f1, epoch, model.clone()));
        }
    }

    let (_, best_epoch, best_model) = best.expect("at least one epoch");
    let grad_seen = model
        .params
        .iter()
        .map(|(id, p)| (p.name.clone(), seen[id.index()]))
        .collect();
    Ok(TrainOutput { model: best_model, best_epoch, log, grad_seen })
}
