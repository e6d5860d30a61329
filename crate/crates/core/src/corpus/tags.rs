//! BIEOS tags, the sentiment-bearing unified scheme, and span conversion.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which column a model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    /// Aspect terms, tagged with the 13-label unified scheme.
    Aspect,
    /// Opinion terms, plain BIEOS (5 labels).
    Opinion,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Aspect => "aspect",
            Task::Opinion => "opinion",
        }
    }

    /// Canonical tag order; a tag's position is its id.
    pub fn tagset(self) -> Vec<Tag> {
        let labels: &[Label] = match self {
            Task::Aspect => &[Label::Pos, Label::Neg, Label::Neu],
            Task::Opinion => &[Label::Opinion],
        };
        let mut tags = vec![Tag::O];
        for &l in labels {
            for p in [Position::B, Position::I, Position::E, Position::S] {
                tags.push(Tag::Chunk(p, l));
            }
        }
        tags
    }

    pub fn tag_id(self, tag: Tag) -> Option<usize> {
        self.tagset().iter().position(|&t| t == tag)
    }

    pub fn parse_tag(self, s: &str) -> Result<Tag> {
        let tag: Tag = s.parse()?;
        match (self, tag) {
            (_, Tag::O) => Ok(tag),
            (Task::Aspect, Tag::Chunk(_, Label::Opinion)) => {
                Err(Error::invalid(format!("aspect tag {s:?} lacks a sentiment")))
            }
            (Task::Opinion, Tag::Chunk(_, l)) if l != Label::Opinion => {
                Err(Error::invalid(format!("opinion tag {s:?} carries a sentiment")))
            }
            _ => Ok(tag),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aspect" => Ok(Task::Aspect),
            "opinion" => Ok(Task::Opinion),
            _ => Err(Error::invalid(format!("unknown task {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Pos,
    Neg,
    Neu,
    Opinion,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Pos => "POS",
            Label::Neg => "NEG",
            Label::Neu => "NEU",
            Label::Opinion => "OPINION",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Position {
    B,
    I,
    E,
    S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    O,
    Chunk(Position, Label),
}

impl Tag {
    /// Whether `next` may directly follow `self` in a well-formed sequence.
    /// `None` stands for the sequence boundary.
    pub fn allows(prev: Option<Tag>, next: Option<Tag>) -> bool {
        let open = |t: Option<Tag>| match t {
            Some(Tag::Chunk(Position::B | Position::I, l)) => Some(l),
            _ => None,
        };
        match (open(prev), next) {
            (Some(l), Some(Tag::Chunk(Position::I | Position::E, m))) => l == m,
            (Some(_), _) => false,
            (None, Some(Tag::Chunk(Position::I | Position::E, _))) => false,
            (None, _) => true,
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::O => f.write_str("O"),
            Tag::Chunk(p, l) => {
                let p = match p {
                    Position::B => "B",
                    Position::I => "I",
                    Position::E => "E",
                    Position::S => "S",
                };
                match l {
                    Label::Opinion => f.write_str(p),
                    _ => write!(f, "{p}-{l}"),
                }
            }
        }
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "O" {
            return Ok(Tag::O);
        }
        let (p, rest) = s.split_at(s.len().min(1));
        let pos = match p {
            "B" => Position::B,
            "I" => Position::I,
            "E" => Position::E,
            "S" => Position::S,
            _ => return Err(Error::invalid(format!("unknown tag {s:?}"))),
        };
        let label = match rest {
            "" => Label::Opinion,
            "-POS" => Label::Pos,
            "-NEG" => Label::Neg,
            "-NEU" => Label::Neu,
            _ => return Err(Error::invalid(format!("unknown tag {s:?}"))),
        };
        Ok(Tag::Chunk(pos, label))
    }
}

/// Inclusive token range with its label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: Label,
}

impl Span {
    pub fn new(start: usize, end: usize, label: Label) -> Self {
        Span { start, end, label }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanMode {
    /// Only complete `B I* E` runs with one label, or `S`.
    Strict,
    /// Salvages partial chunks; never used for scoring.
    Lenient,
}

pub fn parse_tags(tags: &[&str], task: Task) -> Result<Vec<Tag>> {
    tags.iter().map(|s| task.parse_tag(s)).collect()
}

/// Extracts sorted, non-overlapping spans.
pub fn tags_to_spans(tags: &[Tag], mode: SpanMode) -> Vec<Span> {
    match mode {
        SpanMode::Strict => strict_spans(tags),
        SpanMode::Lenient => lenient_spans(tags),
    }
}

fn strict_spans(tags: &[Tag]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < tags.len() {
        match tags[i] {
            Tag::Chunk(Position::S, l) => {
                spans.push(Span::new(i, i, l));
                i += 1;
            }
            Tag::Chunk(Position::B, l) => {
                let mut j = i + 1;
                while j < tags.len() && tags[j] == Tag::Chunk(Position::I, l) {
                    j += 1;
                }
                if j < tags.len() && tags[j] == Tag::Chunk(Position::E, l) {
                    spans.push(Span::new(i, j, l));
                    i = j + 1;
                } else {
                    // the breaking token may open a span of its own
                    i = j;
                }
            }
            _ => i += 1,
        }
    }
    spans
}

fn lenient_spans(tags: &[Tag]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, Label)> = None;
    for (i, &t) in tags.iter().enumerate() {
        match t {
            Tag::O => {
                if let Some((s, l)) = open.take() {
                    spans.push(Span::new(s, i - 1, l));
                }
            }
            Tag::Chunk(p, l) => {
                let continues = matches!(open, Some((_, ol)) if ol == l)
                    && matches!(p, Position::I | Position::E);
                if !continues {
                    if let Some((s, ol)) = open.take() {
                        spans.push(Span::new(s, i - 1, ol));
                    }
                    open = Some((i, l));
                }
                if matches!(p, Position::E | Position::S) {
                    let (s, l) = open.take().expect("opened above");
                    spans.push(Span::new(s, i, l));
                }
            }
        }
    }
    if let Some((s, l)) = open {
        spans.push(Span::new(s, tags.len() - 1, l));
    }
    spans
}

/// Writes spans back into a tag sequence of length `len`.
pub fn spans_to_tags(spans: &[Span], len: usize) -> Result<Vec<Tag>> {
    let mut sorted = spans.to_vec();
    sorted.sort();
    let mut tags = vec![Tag::O; len];
    let mut next_free = 0;
    for s in &sorted {
        if s.start > s.end || s.end >= len {
            return Err(Error::invalid(format!("span {s:?} outside 0..{len}")));
        }
        if s.start < next_free {
            return Err(Error::invalid(format!("span {s:?} overlaps its predecessor")));
        }
        next_free = s.end + 1;
        if s.start == s.end {
            tags[s.start] = Tag::Chunk(Position::S, s.label);
        } else {
            tags[s.start] = Tag::Chunk(Position::B, s.label);
            for t in &mut tags[s.start + 1..s.end] {
                *t = Tag::Chunk(Position::I, s.label);
            }
            tags[s.end] = Tag::Chunk(Position::E, s.label);
        }
    }
    Ok(tags)
}

/// True when every non-`O` tag belongs to a strict span.
pub fn is_well_formed(tags: &[Tag]) -> bool {
    std::iter::once(None)
        .chain(tags.iter().copied().map(Some))
        .zip(tags.iter().copied().map(Some).chain(std::iter::once(None)))
        .all(|(a, b)| Tag::allows(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(s: &[&str], task: Task) -> Vec<Tag> {
        parse_tags(s, task).unwrap()
    }

    #[test]
    fn tagset_sizes() {
        assert_eq!(Task::Aspect.tagset().len(), 13);
        assert_eq!(Task::Opinion.tagset().len(), 5);
        for task in [Task::Aspect, Task::Opinion] {
            for (i, t) in task.tagset().into_iter().enumerate() {
                assert_eq!(task.parse_tag(&t.to_string()).unwrap(), t);
                assert_eq!(task.tag_id(t), Some(i));
            }
        }
    }

    #[test]
    fn scheme_examples() {
        let t = tags(&["O", "B-POS", "E-POS", "O"], Task::Aspect);
        assert_eq!(tags_to_spans(&t, SpanMode::Strict), vec![Span::new(1, 2, Label::Pos)]);
        let t = tags(&["O", "O", "O"], Task::Aspect);
        assert!(tags_to_spans(&t, SpanMode::Strict).is_empty());
        let t = tags(&["I-NEG", "E-NEG"], Task::Aspect);
        assert!(tags_to_spans(&t, SpanMode::Strict).is_empty());
        assert_eq!(tags_to_spans(&t, SpanMode::Lenient), vec![Span::new(0, 1, Label::Neg)]);
    }

    #[test]
    fn mixed_sentiment_is_dropped_in_strict_mode() {
        let t = tags(&["B-POS", "I-POS", "E-NEG", "S-NEU"], Task::Aspect);
        assert_eq!(tags_to_spans(&t, SpanMode::Strict), vec![Span::new(3, 3, Label::Neu)]);
        let t = tags(&["B-POS", "B-NEG", "E-NEG"], Task::Aspect);
        assert_eq!(tags_to_spans(&t, SpanMode::Strict), vec![Span::new(1, 2, Label::Neg)]);
    }

    #[test]
    fn unknown_tag_rejected() {
        assert!(parse_tags(&["B-POS", "X"], Task::Aspect).is_err());
        assert!(Task::Aspect.parse_tag("B").is_err());
        assert!(Task::Opinion.parse_tag("B-POS").is_err());
    }

    #[test]
    fn spans_to_tags_examples() {
        let t = spans_to_tags(&[Span::new(0, 0, Label::Neu)], 2).unwrap();
        assert_eq!(t, tags(&["S-NEU", "O"], Task::Aspect));
        let t = spans_to_tags(&[Span::new(1, 3, Label::Pos)], 5).unwrap();
        assert_eq!(t, tags(&["O", "B-POS", "I-POS", "E-POS", "O"], Task::Aspect));
        let t = spans_to_tags(&[Span::new(0, 1, Label::Opinion)], 2).unwrap();
        assert_eq!(t, tags(&["B", "E"], Task::Opinion));
    }

    #[test]
    fn overlapping_spans_rejected() {
        let s = [Span::new(0, 2, Label::Pos), Span::new(2, 3, Label::Neg)];
        assert!(spans_to_tags(&s, 5).is_err());
        assert!(spans_to_tags(&[Span::new(3, 5, Label::Pos)], 5).is_err());
    }

    #[test]
    fn well_formedness() {
        assert!(is_well_formed(&tags(&["B-POS", "I-POS", "E-POS", "S-NEG", "O"], Task::Aspect)));
        assert!(!is_well_formed(&tags(&["B-POS", "O"], Task::Aspect)));
        assert!(!is_well_formed(&tags(&["B-POS", "E-NEG"], Task::Aspect)));
        assert!(!is_well_formed(&tags(&["E"], Task::Opinion)));
        assert!(is_well_formed(&[]));
    }
}
