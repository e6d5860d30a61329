//! Entity-level precision, recall and F1 over exactly matching spans.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rayon::prelude::*;

use crate::corpus::{tags_to_spans, write_corpus, Label, Sentence, Span, SpanMode, Task};
use crate::error::{Error, Result};
use crate::model::{Model, Sidecar};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub gold: usize,
    pub pred: usize,
    pub correct: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        if self.pred == 0 {
            0.0
        } else {
            self.correct as f64 / self.pred as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.gold == 0 {
            0.0
        } else {
            self.correct as f64 / self.gold as f64
        }
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }

    fn add(&mut self, o: Counts) {
        self.gold += o.gold;
        self.pred += o.pred;
        self.correct += o.correct;
    }
}

/// Harmonic mean; 0 when both inputs are 0.
pub fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Micro-averaged scores for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: Task,
    pub counts: Counts,
    pub per_label: BTreeMap<Label, Counts>,
}

impl EvalReport {
    pub fn precision(&self) -> f64 {
        self.counts.precision()
    }

    pub fn recall(&self) -> f64 {
        self.counts.recall()
    }

    pub fn f1(&self) -> f64 {
        self.counts.f1()
    }

    /// `task=<t> P=<p> R=<r> F1=<f> gold=<g> pred=<p> correct=<c>`
    pub fn machine_line(&self) -> String {
        format!(
            "task={} P={:.6} R={:.6} F1={:.6} gold={} pred={} correct={}",
            self.task,
            self.precision(),
            self.recall(),
            self.f1(),
            self.counts.gold,
            self.counts.pred,
            self.counts.correct
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} extraction", self.task)?;
        writeln!(f, "  precision {:>7.2}%", 100.0 * self.precision())?;
        writeln!(f, "  recall    {:>7.2}%", 100.0 * self.recall())?;
        writeln!(f, "  F1        {:>7.2}%", 100.0 * self.f1())?;
        writeln!(
            f,
            "  spans: {} gold, {} predicted, {} correct",
            self.counts.gold, self.counts.pred, self.counts.correct
        )?;
        if self.per_label.len() > 1 {
            for (label, c) in &self.per_label {
                writeln!(
                    f,
                    "  {:<7} P {:>6.2}% R {:>6.2}% F1 {:>6.2}% ({} gold)",
                    label.as_str(),
                    100.0 * c.precision(),
                    100.0 * c.recall(),
                    100.0 * c.f1(),
                    c.gold
                )?;
            }
        }
        Ok(())
    }
}

fn sentence_counts(gold: &[Span], pred: &[Span]) -> BTreeMap<Label, Counts> {
    let gold_set: HashSet<&Span> = gold.iter().collect();
    let mut out: BTreeMap<Label, Counts> = BTreeMap::new();
    for s in gold {
        out.entry(s.label).or_default().gold += 1;
    }
    for s in pred {
        let c = out.entry(s.label).or_default();
        c.pred += 1;
        if gold_set.contains(s) {
            c.correct += 1;
        }
    }
    out
}

/// Scores aligned per-sentence span sets.
pub fn score_spans(task: Task, gold: &[Vec<Span>], pred: &[Vec<Span>]) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(Error::invalid("gold and predicted corpora differ in length"));
    }
    let mut report = EvalReport { task, counts: Counts::default(), per_label: BTreeMap::new() };
    for (g, p) in gold.iter().zip(pred) {
        for (label, c) in sentence_counts(g, p) {
            report.counts.add(c);
            report.per_label.entry(label).or_default().add(c);
        }
    }
    Ok(report)
}

/// Decodes every sentence and scores strict spans against gold.
pub fn evaluate(
    model: &Model,
    corpus: &[Sentence],
    task: Task,
    sidecar: Option<&Sidecar>,
) -> Result<EvalReport> {
    if model.task() != task {
        return Err(Error::invalid(format!(
            "model predicts {} tags but {task} evaluation was requested",
            model.task()
        )));
    }
    let pairs: Vec<(Vec<Span>, Vec<Span>)> = corpus
        .par_iter()
        .map(|s| {
            let gold = s.gold(task).ok_or_else(|| {
                Error::Data(format!("sentence {} has no gold {task} tags", s.id))
            })?;
            let pred = model.predict(s, sidecar)?;
            Ok((tags_to_spans(&gold, SpanMode::Strict), tags_to_spans(&pred, SpanMode::Strict)))
        })
        .collect::<Result<_>>()?;
    let (gold, pred): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    score_spans(task, &gold, &pred)
}

/// Copies of `sentences` with the model's task column replaced by predictions.
pub fn predict(model: &Model, sentences: &[Sentence], sidecar: Option<&Sidecar>) -> Result<Vec<Sentence>> {
    sentences
        .par_iter()
        .map(|s| {
            let tags = model.predict(s, sidecar)?;
            let mut out = s.clone();
            out.set_tags(model.task(), &tags)?;
            Ok(out)
        })
        .collect()
}

/// Predictions rendered in the corpus column format.
pub fn predict_text(model: &Model, sentences: &[Sentence], sidecar: Option<&Sidecar>) -> Result<String> {
    Ok(write_corpus(&predict(model, sentences, sidecar)?))
}
