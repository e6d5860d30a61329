//! Token encoders: trainable lookup tables or frozen sidecar vectors.

use std::collections::HashMap;
use std::path::Path;

use crate::corpus::{Sentence, Vocabs};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Precomputed per-token vectors keyed by sentence id.
///
/// File layout: a `dim <d>` header, then for each sentence a `# id = <id>`
/// line followed by one line of `d` space-separated floats per token.
#[derive(Debug, Clone, PartialEq)]
pub struct Sidecar {
    dim: usize,
    vectors: HashMap<String, Tensor>,
}

impl Sidecar {
    pub fn parse(text: &str) -> Result<Sidecar> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::Data("sidecar: empty file".into()))?;
        let dim: usize = header
            .trim()
            .strip_prefix("dim ")
            .and_then(|d| d.trim().parse().ok())
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::Data(format!("sidecar: bad header {header:?}")))?;
        let mut vectors = HashMap::new();
        let mut current: Option<(String, Vec<f64>)> = None;
        let mut flush = |cur: Option<(String, Vec<f64>)>| -> Result<()> {
            if let Some((id, data)) = cur {
                if data.is_empty() {
                    return Err(Error::Data(format!("sidecar: sentence {id} has no vectors")));
                }
                let t = Tensor::new(vec![data.len() / dim, dim], data)?;
                if vectors.insert(id.clone(), t).is_some() {
                    return Err(Error::Data(format!("sidecar: duplicate sentence {id}")));
                }
            }
            Ok(())
        };
        for (n, line) in lines {
            if let Some(id) = line.trim().strip_prefix("# id =") {
                flush(current.take())?;
                current = Some((id.trim().to_string(), Vec::new()));
                continue;
            }
            let (id, data) = current
                .as_mut()
                .ok_or_else(|| Error::Data(format!("sidecar line {}: vector before any id", n + 1)))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Data(format!("sidecar line {}: bad number", n + 1)))?;
            if row.len() != dim {
                return Err(Error::Data(format!(
                    "sidecar line {}: sentence {id} has a vector of width {}, expected {dim}",
                    n + 1,
                    row.len()
                )));
            }
            data.extend(row);
        }
        flush(current)?;
        Ok(Sidecar { dim, vectors })
    }

    pub fn load(path: &Path) -> Result<Sidecar> {
        Sidecar::parse(&crate::io::read_to_string(path)?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Vectors for `sentence`, checked against its length.
    pub fn get(&self, sentence: &Sentence) -> Result<&Tensor> {
        let t = self
            .vectors
            .get(&sentence.id)
            .ok_or_else(|| Error::Data(format!("sidecar has no vectors for sentence {}", sentence.id)))?;
        if t.rows() != sentence.len() {
            return Err(Error::Data(format!(
                "sidecar has {} vectors for sentence {} with {} tokens",
                t.rows(),
                sentence.id,
                sentence.len()
            )));
        }
        Ok(t)
    }
}

/// `row i = token_table[tok_i] ∥ pos_table[pos_i]`; unseen strings use `<unk>`.
pub fn encode_lookup(
    tape: &mut Tape,
    sentence: &Sentence,
    vocabs: &Vocabs,
    token_table: Var,
    pos_table: Var,
) -> Result<Var> {
    let tok: Vec<usize> = sentence.tokens.iter().map(|t| vocabs.token.id(&t.surface)).collect();
    let pos: Vec<usize> = sentence.tokens.iter().map(|t| vocabs.pos.id(&t.pos)).collect();
    let a = tape.gather_rows(token_table, &tok)?;
    let b = tape.gather_rows(pos_table, &pos)?;
    tape.hcat(&[a, b])
}

/// Sidecar rows enter the tape as constants, so they never get gradients.
pub fn encode_sidecar(tape: &mut Tape, sentence: &Sentence, sidecar: &Sidecar) -> Result<Var> {
    Ok(tape.constant(sidecar.get(sentence)?.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabs, parse_corpus_strict, Task};

    const TEXT: &str = "# id = s\nfood\tNN\t0\troot\tS-POS\tO\nok\tJJ\t1\tamod\tO\tS\n";

    #[test]
    fn lookup_rows_and_unk() {
        let corpus = parse_corpus_strict(TEXT, Task::Aspect).unwrap();
        let v = build_vocabs(&corpus, Task::Aspect).unwrap();
        let mut tape = Tape::new();
        let tok = tape.constant(Tensor::from_rows(&[vec![0.5, 0.5], vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let pos = tape.constant(Tensor::from_rows(&[vec![-1.0], vec![7.0], vec![8.0]]).unwrap());
        let h = encode_lookup(&mut tape, &corpus[0], &v, tok, pos).unwrap();
        assert_eq!(tape.value(h).to_rows(), vec![vec![1.0, 2.0, 7.0], vec![3.0, 4.0, 8.0]]);

        let mut unseen = corpus[0].clone();
        unseen.tokens[0].surface = "pizza".into();
        let h = encode_lookup(&mut tape, &unseen, &v, tok, pos).unwrap();
        assert_eq!(tape.value(h).row(0), &[0.5, 0.5, 7.0]);
    }

    #[test]
    fn sidecar_pass_through() {
        let corpus = parse_corpus_strict(TEXT, Task::Aspect).unwrap();
        let text = "dim 3\n# id = s\n0.1 0.2 0.30000000000000004\n-1e-3 5 6\n";
        let sc = Sidecar::parse(text).unwrap();
        let mut tape = Tape::new();
        let h = encode_sidecar(&mut tape, &corpus[0], &sc).unwrap();
        assert_eq!(tape.value(h).data(), &[0.1, 0.2, 0.30000000000000004, -1e-3, 5.0, 6.0]);
    }

    #[test]
    fn sidecar_errors_name_the_sentence() {
        let corpus = parse_corpus_strict(TEXT, Task::Aspect).unwrap();
        let sc = Sidecar::parse("dim 2\n# id = other\n1 2\n").unwrap();
        let err = sc.get(&corpus[0]).unwrap_err().to_string();
        assert!(err.contains("sentence s"), "{err}");
        let sc = Sidecar::parse("dim 2\n# id = s\n1 2\n").unwrap();
        assert!(sc.get(&corpus[0]).unwrap_err().to_string().contains("sentence s"));
        assert!(Sidecar::parse("dim 2\n# id = s\n1 2 3\n").is_err());
        assert!(Sidecar::parse("width 2\n").is_err());
    }
}
