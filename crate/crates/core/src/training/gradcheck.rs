use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{EncoderSource, TrainConfig, Variant};
use crate::corpus::{build_vocabs, Sentence};
use crate::depgraph::DepGraph;
use crate::error::{Error, Result};
use crate::model::{Model, Sidecar};
use crate::numerics::{Mode, Tape};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-4;
/// Denominator floor for near-zero gradients.
pub const ABS_FLOOR: f64 = 1e-6;
pub const MAX_TOKENS: usize = 6;
/// Largest relative error a passing check may report.
pub const GRAD_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter holding the worst entry.
    pub worst: String,
    /// Number of entries compared.
    pub checked: usize,
    /// Entries left out because a ±step perturbation moved some ReLU input
    /// or floored log argument across its non-differentiable point, where a
    /// central difference does not estimate the derivative.
    pub kinks: usize,
    /// Parameter tensors that received a gradient entry.
    pub params_with_grad: usize,
    pub params_total: usize,
}

/// A model small enough to finite-difference every entry in seconds.
pub fn toy_config(variant: Variant) -> TrainConfig {
    TrainConfig {
        variant,
        hidden: 8,
        layers: 2,
        attention_heads: 2,
        relational_heads: 2,
        token_dim: 6,
        pos_dim: 4,
        rel_dim: 200,
        dropout: 0.0,
        ..TrainConfig::default()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

fn loss_value(
    model: &Model,
    sentence: &Sentence,
    graph: &DepGraph,
    gold: &[usize],
    sidecar: Option<&Sidecar>,
) -> Result<(f64, Vec<bool>)> {
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fwd = model.forward(&mut tape, sentence, graph, sidecar, Mode::Eval, &mut rng)?;
    let loss = model.loss(&mut tape, &fwd, gold)?;
    Ok((tape.value(loss).data()[0], tape.branch_pattern()))
}

/// Compares analytic gradients of a freshly initialised model with central
/// finite differences over every free parameter entry.
pub fn grad_check(config: &TrainConfig, sentence: &Sentence, sidecar: Option<&Sidecar>) -> Result<GradCheckReport> {
    if sentence.len() > MAX_TOKENS {
        return Err(Error::invalid(format!(
            "gradient check is limited to {MAX_TOKENS} tokens, sentence {} has {}",
            sentence.id,
            sentence.len()
        )));
    }
    let mut config = config.clone();
    if config.encoder_source == EncoderSource::Sidecar {
        let sc = sidecar.ok_or_else(|| Error::Data("sidecar encoder selected but no vectors given".into()))?;
        config.sidecar_dim = sc.dim();
    }
    let vocabs = build_vocabs(std::slice::from_ref(sentence), config.task)?;
    let mut model = Model::new(config, vocabs)?;
    let graph = model.prediction_graph(sentence)?;
    let gold = model.gold_ids(sentence)?;

    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fwd = model.forward(&mut tape, sentence, &graph, sidecar, Mode::Eval, &mut rng)?;
    let loss = model.loss(&mut tape, &fwd, &gold)?;
    let grads = tape.backward(loss)?;
    let pattern = tape.branch_pattern();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
        kinks: 0,
        params_with_grad: grads.count(),
        params_total: model.params.len(),
    };
    let ids: Vec<_> = model.params.iter().map(|(id, _)| id).collect();
    for id in ids {
        let n = model.params.value(id).len();
        let fixed = model.params.get(id).fixed.clone();
        for i in 0..n {
            if fixed.as_ref().is_some_and(|f| f[i]) {
                continue;
            }
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[i]);
            let orig = model.params.value(id).data()[i];
            model.params.get_mut(id).value.data_mut()[i] = orig + FD_STEP;
            let (up, up_pattern) = loss_value(&model, sentence, &graph, &gold, sidecar)?;
            model.params.get_mut(id).value.data_mut()[i] = orig - FD_STEP;
            let (down, down_pattern) = loss_value(&model, sentence, &graph, &gold, sidecar)?;
            model.params.get_mut(id).value.data_mut()[i] = orig;
            if up_pattern != pattern || down_pattern != pattern {
                report.kinks += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * FD_STEP);
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_empty() {
                report.max_rel_error = err;
                report.worst = model.params.get(id).name.clone();
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus_strict, Task};

    const FIVE: &str = "# id = g\nthe\tDT\t2\tdet\tO\tO\npasta\tNN\t4\tnsubj\tS-POS\tO\nwas\tVBD\t4\tcop\tO\tO\ngreat\tJJ\t0\troot\tO\tS\n!\t.\t4\tpunct\tO\tO\n";

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 1e-3).abs() < 1e-15);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn linear_variant_passes() {
        let s = &parse_corpus_strict(FIVE, Task::Aspect).unwrap()[0];
        let r = grad_check(&toy_config(Variant::Rgat), s, None).unwrap();
        assert!(r.max_rel_error < 1e-3, "{r:?}");
        assert!(r.checked > 0);
    }

    #[test]
    fn long_sentence_rejected() {
        let mut text = String::from("# id = long\n");
        for i in 0..7 {
            let head = if i == 0 { 0 } else { 1 };
            text.push_str(&format!("w{i}\tNN\t{head}\tdep\tO\tO\n"));
        }
        let s = &parse_corpus_strict(&text, Task::Aspect).unwrap()[0];
        assert!(matches!(grad_check(&toy_config(Variant::Rgat), s, None), Err(Error::InvalidInput(_))));
    }
}
