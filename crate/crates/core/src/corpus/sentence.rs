use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::tags::{is_well_formed, Tag, Task};
use crate::error::{Error, Result, Violation};

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub surface: String,
    pub pos: String,
    /// Governor index (0-based); `None` for the root.
    pub head: Option<usize>,
    pub deprel: String,
    pub aspect: Option<Tag>,
    pub opinion: Option<Tag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn root(&self) -> Option<usize> {
        self.tokens.iter().position(|t| t.head.is_none())
    }

    /// Gold tags for `task`, if every token carries one.
    pub fn gold(&self, task: Task) -> Option<Vec<Tag>> {
        self.tokens
            .iter()
            .map(|t| match task {
                Task::Aspect => t.aspect,
                Task::Opinion => t.opinion,
            })
            .collect()
    }

    pub fn set_tags(&mut self, task: Task, tags: &[Tag]) -> Result<()> {
        if tags.len() != self.len() {
            return Err(Error::invalid(format!(
                "{} tags for {} tokens in sentence {}",
                tags.len(),
                self.len(),
                self.id
            )));
        }
        for (tok, &t) in self.tokens.iter_mut().zip(tags) {
            match task {
                Task::Aspect => tok.aspect = Some(t),
                Task::Opinion => tok.opinion = Some(t),
            }
        }
        Ok(())
    }

    /// Structural problems: root count, head range, cycles, tag shape.
    pub fn check(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let n = self.len();
        if n == 0 {
            problems.push("sentence has no tokens".to_string());
            return problems;
        }
        let roots = self.tokens.iter().filter(|t| t.head.is_none()).count();
        if roots != 1 {
            problems.push(format!("expected exactly one root, found {roots}"));
        }
        for (i, t) in self.tokens.iter().enumerate() {
            match t.head {
                Some(h) if h >= n => problems.push(format!("token {} head {} out of range", i + 1, h + 1)),
                Some(h) if h == i => problems.push(format!("token {} is its own head", i + 1)),
                _ => {}
            }
        }
        if problems.is_empty() {
            for start in 0..n {
                let mut seen = HashSet::new();
                let mut cur = start;
                while let Some(h) = self.tokens[cur].head {
                    if !seen.insert(cur) {
                        problems.push(format!("head cycle through token {}", start + 1));
                        break;
                    }
                    cur = h;
                }
                if !problems.is_empty() {
                    break;
                }
            }
        }
        for (task, name) in [(Task::Aspect, "aspect"), (Task::Opinion, "opinion")] {
            if let Some(tags) = self.gold(task) {
                if !is_well_formed(&tags) {
                    problems.push(format!("ill-formed {name} tag sequence"));
                }
            }
        }
        problems
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.check();
        if problems.is_empty() {
            return Ok(());
        }
        Err(Error::Corpus(
            problems
                .into_iter()
                .map(|message| Violation { sentence: self.id.clone(), line: 0, message })
                .collect(),
        ))
    }
}

struct Pending {
    id: Option<String>,
    first_line: usize,
    tokens: Vec<Token>,
    violations: Vec<Violation>,
    task_missing: usize,
}

impl Pending {
    fn new(line: usize) -> Self {
        Pending { id: None, first_line: line, tokens: Vec::new(), violations: Vec::new(), task_missing: 0 }
    }

    fn name(&self) -> String {
        self.id.clone().unwrap_or_else(|| format!("<unnamed@{}>", self.first_line))
    }
}

fn parse_token(cols: &[&str], task: Task) -> Result<(Token, bool), String> {
    if cols.len() != 6 {
        return Err(format!("expected 6 tab-separated columns, found {}", cols.len()));
    }
    let head = match cols[2] {
        "0" | "ROOT" => None,
        h => match h.parse::<usize>() {
            Ok(v) if v >= 1 => Some(v - 1),
            _ => return Err(format!("bad head index {h:?}")),
        },
    };
    let tag = |s: &str, t: Task| -> Result<Option<Tag>, String> {
        if s == "_" {
            Ok(None)
        } else {
            t.parse_tag(s).map(Some).map_err(|e| e.to_string())
        }
    };
    let aspect = tag(cols[4], Task::Aspect)?;
    let opinion = tag(cols[5], Task::Opinion)?;
    let missing = match task {
        Task::Aspect => aspect.is_none(),
        Task::Opinion => opinion.is_none(),
    };
    Ok((
        Token {
            surface: cols[0].to_string(),
            pos: cols[1].to_string(),
            head,
            deprel: cols[3].to_string(),
            aspect,
            opinion,
        },
        missing,
    ))
}

/// Parses corpus text; collects every violation instead of stopping at the
/// first one.
pub fn parse_corpus(text: &str, task: Task) -> (Vec<Sentence>, Vec<Violation>) {
    let mut sentences = Vec::new();
    let mut violations = Vec::new();
    let mut pending: Option<Pending> = None;

    let finish = |p: Pending, sentences: &mut Vec<Sentence>, violations: &mut Vec<Violation>| {
        let name = p.name();
        let mut vs = p.violations;
        if p.id.is_none() {
            vs.push(Violation {
                sentence: name.clone(),
                line: p.first_line,
                message: "sentence lacks an '# id = ' line".into(),
            });
        }
        if p.task_missing != 0 && p.task_missing != p.tokens.len() {
            vs.push(Violation {
                sentence: name.clone(),
                line: p.first_line,
                message: format!("{task} column mixes gold tags and '_'"),
            });
        }
        let s = Sentence { id: name.clone(), tokens: p.tokens };
        if vs.is_empty() {
            vs.extend(s.check().into_iter().map(|message| Violation {
                sentence: name.clone(),
                line: p.first_line,
                message,
            }));
        }
        if vs.is_empty() {
            sentences.push(s);
        } else {
            violations.extend(vs);
        }
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if let Some(p) = pending.take() {
                finish(p, &mut sentences, &mut violations);
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(id) = rest.trim_start().strip_prefix("id =") {
                if let Some(p) = pending.take() {
                    finish(p, &mut sentences, &mut violations);
                }
                let mut p = Pending::new(line_no);
                p.id = Some(id.trim().to_string());
                pending = Some(p);
            }
            continue;
        }
        let p = pending.get_or_insert_with(|| Pending::new(line_no));
        let cols: Vec<&str> = line.split('\t').collect();
        match parse_token(&cols, task) {
            Ok((tok, missing)) => {
                p.task_missing += usize::from(missing);
                p.tokens.push(tok);
            }
            Err(message) => {
                let sentence = p.name();
                p.violations.push(Violation { sentence, line: line_no, message });
            }
        }
    }
    if let Some(p) = pending.take() {
        finish(p, &mut sentences, &mut violations);
    }
    (sentences, violations)
}

pub fn parse_corpus_strict(text: &str, task: Task) -> Result<Vec<Sentence>> {
    let (sentences, violations) = parse_corpus(text, task);
    if violations.is_empty() {
        Ok(sentences)
    } else {
        Err(Error::Corpus(violations))
    }
}

/// Reads and validates a corpus file.
pub fn read_corpus(path: &Path, task: Task) -> Result<Vec<Sentence>> {
    parse_corpus_strict(&crate::io::read_to_string(path)?, task)
}

/// Serializes sentences in the six-column format.
pub fn write_corpus(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for (i, s) in sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "# id = {}", s.id);
        for t in &s.tokens {
            let head = t.head.map_or(0, |h| h + 1);
            let tag = |t: Option<Tag>| t.map_or_else(|| "_".to_string(), |t| t.to_string());
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                t.surface,
                t.pos,
                head,
                t.deprel,
                tag(t.aspect),
                tag(t.opinion)
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tags::{tags_to_spans, Label, Span, SpanMode};

    #[test]
    fn two_token_sentence() {
        let text = "# id = s1\ngood\tJJ\t2\tamod\tO\tS\nfood\tNN\t0\troot\tS-POS\tO\n";
        let s = parse_corpus_strict(text, Task::Aspect).unwrap();
        assert_eq!(s.len(), 1);
        let a = tags_to_spans(&s[0].gold(Task::Aspect).unwrap(), SpanMode::Strict);
        let o = tags_to_spans(&s[0].gold(Task::Opinion).unwrap(), SpanMode::Strict);
        assert_eq!(a, vec![Span::new(1, 1, Label::Pos)]);
        assert_eq!(o, vec![Span::new(0, 0, Label::Opinion)]);
        assert_eq!(s[0].tokens[0].head, Some(1));
        assert_eq!(s[0].root(), Some(1));
    }

    #[test]
    fn root_literal_accepted() {
        let text = "# id = s\nfood\tNN\tROOT\troot\tS-POS\tO\n";
        assert_eq!(parse_corpus_strict(text, Task::Aspect).unwrap()[0].root(), Some(0));
    }

    #[test]
    fn empty_file() {
        assert!(parse_corpus_strict("", Task::Aspect).unwrap().is_empty());
    }

    #[test]
    fn cycle_rejected_with_sentence_and_line() {
        let text = "# id = loop\na\tNN\t2\tdep\tO\tO\nb\tNN\t1\tdep\tO\tO\n";
        let (ok, v) = parse_corpus(text, Task::Aspect);
        assert!(ok.is_empty());
        assert_eq!(v[0].sentence, "loop");
        assert_eq!(v[0].line, 1);
        assert!(v.iter().any(|v| v.message.contains("root")));
    }

    #[test]
    fn cycle_with_separate_root_detected() {
        let text = "# id = c\na\tNN\t0\troot\tO\tO\nb\tNN\t3\tdep\tO\tO\nc\tNN\t2\tdep\tO\tO\n";
        let (_, v) = parse_corpus(text, Task::Aspect);
        assert!(v.iter().any(|v| v.message.contains("cycle")), "{v:?}");
    }

    #[test]
    fn bad_tag_and_head_reported_with_line() {
        let text = "# id = x\na\tNN\t0\troot\tQ-POS\tO\nb\tNN\t9\tdep\tO\tO\n";
        let (_, v) = parse_corpus(text, Task::Aspect);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].line, 2);
        let text = "# id = y\na\tNN\t0\troot\tO\tO\nb\tNN\tx\tdep\tO\tO\n";
        let (_, v) = parse_corpus(text, Task::Aspect);
        assert_eq!(v[0].line, 3);
        let text = "# id = z\na\tNN\t0\troot\tO\tO\nb\tNN\t7\tdep\tO\tO\n";
        let (_, v) = parse_corpus(text, Task::Aspect);
        assert!(v[0].message.contains("out of range"));
    }

    #[test]
    fn ill_formed_gold_rejected() {
        let text = "# id = x\na\tNN\t0\troot\tB-POS\tO\nb\tNN\t1\tdep\tE-NEG\tO\n";
        assert!(parse_corpus_strict(text, Task::Aspect).is_err());
    }

    #[test]
    fn missing_gold_allowed_but_not_mixed() {
        let text = "# id = x\na\tNN\t0\troot\t_\t_\nb\tNN\t1\tdep\t_\t_\n";
        let s = parse_corpus_strict(text, Task::Aspect).unwrap();
        assert!(s[0].gold(Task::Aspect).is_none());
        let text = "# id = x\na\tNN\t0\troot\tO\t_\nb\tNN\t1\tdep\t_\t_\n";
        assert!(parse_corpus_strict(text, Task::Aspect).is_err());
    }

    #[test]
    fn good_sentences_survive_next_to_bad_ones() {
        let text = "# id = a\nx\tNN\t0\troot\tO\tO\n\n# id = b\ny\tNN\t1\troot\tO\tO\n";
        let (ok, v) = parse_corpus(text, Task::Aspect);
        assert_eq!(ok.len(), 1);
        assert!(!v.is_empty());
        assert!(v.iter().all(|v| v.sentence == "b"));
    }

    #[test]
    fn write_then_read_is_identity() {
        let text = "# id = s1\nthe\tDT\t2\tdet\tO\tO\nbattery\tNN\t3\tcompound\tB-NEG\tO\nlife\tNN\t0\troot\tE-NEG\tO\nsucks\tVBZ\t3\tdep\tO\tS\n\n# id = s2\nok\tJJ\t0\troot\t_\t_\n";
        let s = parse_corpus_strict(text, Task::Aspect).unwrap();
        let out = write_corpus(&s);
        assert_eq!(out, text);
        assert_eq!(parse_corpus_strict(&out, Task::Aspect).unwrap(), s);
    }
}
