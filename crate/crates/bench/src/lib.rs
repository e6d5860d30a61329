//! Inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spantagger::corpus::{build_vocabs, parse_corpus_strict};
use spantagger::numerics::Tensor;
use spantagger::{Model, Sentence, Task, TrainConfig};

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches data")
}

/// A chain-shaped sentence of `n` tokens with one aspect term.
pub fn sentence(n: usize) -> Sentence {
    let mut text = String::from("# id = bench\n");
    for i in 0..n {
        let (pos, tag) = if i == n / 2 { ("NN", "S-POS") } else { ("JJ", "O") };
        let head = if i == 0 { 0 } else { i };
        text.push_str(&format!("w{}\t{pos}\t{head}\tdep\t{tag}\tO\n", i % 7));
    }
    parse_corpus_strict(&text, Task::Aspect).expect("well-formed").remove(0)
}

pub fn model(config: TrainConfig, sentence: &Sentence) -> Model {
    let vocabs = build_vocabs(std::slice::from_ref(sentence), config.task).expect("non-empty");
    Model::new(config, vocabs).expect("valid config")
}
