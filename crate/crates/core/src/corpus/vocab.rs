use std::collections::HashMap;
use std::fmt::Write as _;

use crate::corpus::sentence::Sentence;
use crate::corpus::tags::{Tag, Task};
use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";

/// String→id map with `<unk>` at id 0; ids follow first occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    pub fn new() -> Self {
        let mut v = Vocab { items: Vec::new(), index: HashMap::new() };
        v.add(UNK);
        v
    }

    pub fn add(&mut self, s: &str) -> usize {
        if let Some(&id) = self.index.get(s) {
            return id;
        }
        let id = self.items.len();
        self.items.push(s.to_string());
        self.index.insert(s.to_string(), id);
        id
    }

    pub fn get(&self, s: &str) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// Id of `s`, falling back to `<unk>`.
    pub fn id(&self, s: &str) -> usize {
        self.get(s).unwrap_or(0)
    }

    pub fn name(&self, id: usize) -> &str {
        &self.items[id]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    fn from_items(items: Vec<String>) -> Result<Self> {
        if items.first().map(String::as_str) != Some(UNK) {
            return Err(Error::checkpoint("vocab", "first entry must be <unk>"));
        }
        let mut v = Vocab { items: Vec::new(), index: HashMap::new() };
        for s in &items {
            if v.index.contains_key(s) {
                return Err(Error::checkpoint("vocab", format!("duplicate entry {s:?}")));
            }
            v.add(s);
        }
        Ok(v)
    }
}

/// Graph relations that exist regardless of the corpus.
pub const SYNTHETIC_RELATIONS: [&str; 5] = ["self", "con:2", "con:3", "con:4", "con:far"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabs {
    pub token: Vocab,
    pub pos: Vocab,
    pub deprel: Vocab,
    pub task: Task,
}

impl Vocabs {
    pub fn tags(&self) -> Vec<Tag> {
        self.task.tagset()
    }

    pub fn num_tags(&self) -> usize {
        self.tags().len()
    }

    /// Relation ids: deprel ids first, then [`SYNTHETIC_RELATIONS`].
    pub fn relation_id(&self, label: &str) -> usize {
        match SYNTHETIC_RELATIONS.iter().position(|&r| r == label) {
            Some(i) => self.deprel.len() + i,
            None => self.deprel.id(label),
        }
    }

    pub fn num_relations(&self) -> usize {
        self.deprel.len() + SYNTHETIC_RELATIONS.len()
    }

    /// Line-oriented text form; `from_text` inverts it exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, v) in [("token", &self.token), ("pos", &self.pos), ("deprel", &self.deprel)] {
            let _ = writeln!(out, "vocab {name} {}", v.len());
            for item in v.items() {
                let _ = writeln!(out, "{item}");
            }
        }
        let tags = self.tags();
        let _ = writeln!(out, "vocab tag {}", tags.len());
        for t in tags {
            let _ = writeln!(out, "{t}");
        }
        out
    }

    /// Parses the blocks written by [`Vocabs::to_text`] from a line iterator.
    pub fn from_lines<'a>(lines: &mut impl Iterator<Item = &'a str>, task: Task) -> Result<Self> {
        let mut block = |want: &str| -> Result<Vec<String>> {
            let header = lines
                .next()
                .ok_or_else(|| Error::checkpoint(format!("vocab {want}"), "missing block"))?;
            let mut parts = header.split(' ');
            if parts.next() != Some("vocab") || parts.next() != Some(want) {
                return Err(Error::checkpoint(
                    format!("vocab {want}"),
                    format!("unexpected header {header:?}"),
                ));
            }
            let n: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::checkpoint(format!("vocab {want}"), "bad entry count"))?;
            (0..n)
                .map(|_| {
                    lines.next().map(str::to_string).ok_or_else(|| {
                        Error::checkpoint(format!("vocab {want}"), "truncated block")
                    })
                })
                .collect()
        };
        let token = Vocab::from_items(block("token")?)?;
        let pos = Vocab::from_items(block("pos")?)?;
        let deprel = Vocab::from_items(block("deprel")?)?;
        let tags = block("tag")?;
        let want: Vec<String> = task.tagset().iter().map(Tag::to_string).collect();
        if tags != want {
            return Err(Error::checkpoint(
                "vocab tag",
                format!("tag set mismatch: file has {tags:?}, {task} task needs {want:?}"),
            ));
        }
        Ok(Vocabs { token, pos, deprel, task })
    }
}

/// Builds vocabularies from a training corpus in first-occurrence order.
pub fn build_vocabs(corpus: &[Sentence], task: Task) -> Result<Vocabs> {
    if corpus.is_empty() {
        return Err(Error::invalid("cannot build vocabularies from an empty corpus"));
    }
    let mut token = Vocab::new();
    let mut pos = Vocab::new();
    let mut deprel = Vocab::new();
    for s in corpus {
        for t in &s.tokens {
            token.add(&t.surface);
            pos.add(&t.pos);
            deprel.add(&t.deprel);
        }
    }
    Ok(Vocabs { token, pos, deprel, task })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::sentence::parse_corpus_strict;

    const TEXT: &str = "# id = a\nthe\tDT\t2\tdet\tO\tO\nfood\tNN\t0\troot\tS-POS\tO\ngreat\tJJ\t2\tamod\tO\tS\n\n# id = b\nfood\tNN\t0\troot\tS-NEG\tO\n";

    #[test]
    fn sizes_and_dedup() {
        let c = parse_corpus_strict(TEXT, Task::Aspect).unwrap();
        let v = build_vocabs(&c[..1], Task::Aspect).unwrap();
        assert_eq!(v.token.len(), 4);
        let v = build_vocabs(&c, Task::Aspect).unwrap();
        assert_eq!(v.token.len(), 4);
        assert_eq!(v.token.id("food"), 2);
        assert_eq!(v.token.id("pizza"), 0);
        assert_eq!(v.num_tags(), 13);
        assert_eq!(v.relation_id("self"), v.deprel.len());
        assert_eq!(v.relation_id("never-seen"), 0);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(build_vocabs(&[], Task::Aspect).is_err());
    }

    #[test]
    fn text_round_trip_and_determinism() {
        let c = parse_corpus_strict(TEXT, Task::Opinion).unwrap();
        let a = build_vocabs(&c, Task::Opinion).unwrap().to_text();
        let b = build_vocabs(&c, Task::Opinion).unwrap().to_text();
        assert_eq!(a, b);
        let back = Vocabs::from_lines(&mut a.lines(), Task::Opinion).unwrap();
        assert_eq!(back.to_text(), a);
        assert!(matches!(
            Vocabs::from_lines(&mut a.lines(), Task::Aspect),
            Err(Error::Checkpoint { .. })
        ));
    }

    #[test]
    fn ids_are_dense() {
        let c = parse_corpus_strict(TEXT, Task::Aspect).unwrap();
        let v = build_vocabs(&c, Task::Aspect).unwrap();
        for (i, s) in v.pos.items().iter().enumerate() {
            assert_eq!(v.pos.get(s), Some(i));
        }
    }
}
