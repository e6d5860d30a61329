//! Tagged, dependency-parsed sentences and their file format.

mod sentence;
mod tags;
mod vocab;

pub use sentence::{parse_corpus, parse_corpus_strict, read_corpus, write_corpus, Sentence, Token};
pub use tags::{
    is_well_formed, parse_tags, spans_to_tags, tags_to_spans, Label, Position, Span, SpanMode,
    Tag, Task,
};
pub use vocab::{build_vocabs, Vocab, Vocabs, SYNTHETIC_RELATIONS, UNK};
