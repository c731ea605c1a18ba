//! Plain-text file formats: point tables, token corpora and bag-of-words
//! documents. Parse errors name the offending line (1-based).

use std::fmt::Write as _;

use crate::data::{DocumentExample, SequenceExample, Vocabulary};
use crate::error::{Error, Result};
use crate::synth::PointDataset;

pub const POINT_HEADER: &str = "x\ty\tcomponent";

fn line_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Data(format!("line {line}: {msg}"))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

/// Tab-separated `x y component` rows under a header line.
pub fn write_points(d: &PointDataset) -> String {
    let mut s = String::from(POINT_HEADER);
    s.push('\n');
    for (p, c) in d.points.iter().zip(&d.components) {
        let _ = writeln!(s, "{:?}\t{:?}\t{c}", p[0], p[1]);
    }
    s
}

pub fn parse_points(text: &str) -> Result<PointDataset> {
    let mut lines = content_lines(text);
    match lines.next() {
        Some((_, h)) if h.split('\t').map(str::trim).eq(POINT_HEADER.split('\t')) => {}
        Some((n, h)) => return Err(line_err(n, format!("expected header '{POINT_HEADER}', found '{h}'"))),
        None => return Err(Error::Data("point file is empty".into())),
    }
    let mut d = PointDataset { points: Vec::new(), components: Vec::new() };
    for (n, l) in lines {
        let f: Vec<&str> = l.split('\t').map(str::trim).collect();
        if f.len() != 3 {
            return Err(line_err(n, format!("expected 3 tab-separated fields, found {}", f.len())));
        }
        let num = |s: &str| -> Result<f64> {
            let v: f64 = s.parse().map_err(|_| line_err(n, format!("'{s}' is not a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(line_err(n, "coordinate is not finite"))
            }
        };
        let c: usize = f[2].parse().map_err(|_| line_err(n, format!("'{}' is not a component id", f[2])))?;
        d.points.push([num(f[0])?, num(f[1])?]);
        d.components.push(c);
    }
    if d.points.is_empty() {
        return Err(Error::Data("point file has no rows".into()));
    }
    Ok(d)
}

fn split_label(n: usize, l: &str) -> Result<(Option<usize>, &str)> {
    match l.split_once('\t') {
        Some((lab, rest)) => {
            let y = lab.trim().parse().map_err(|_| line_err(n, format!("'{lab}' is not a label")))?;
            Ok((Some(y), rest))
        }
        None => Ok((None, l)),
    }
}

/// One sequence per line: an optional integer label and a tab, then
/// space-separated tokens. Without `vocab`, a vocabulary is built from the
/// corpus in first-seen order; with one, unknown words map to `<unk>`.
pub fn parse_corpus(text: &str, vocab: Option<&Vocabulary>) -> Result<(Vocabulary, Vec<SequenceExample>)> {
    let mut rows = Vec::new();
    for (n, l) in content_lines(text) {
        let (label, rest) = split_label(n, l)?;
        let words: Vec<&str> = rest.split_whitespace().collect();
        if words.is_empty() {
            return Err(line_err(n, "sequence has no tokens"));
        }
        rows.push((label, words));
    }
    if rows.is_empty() {
        return Err(Error::Data("corpus is empty".into()));
    }
    let vocab = match vocab {
        Some(v) => v.clone(),
        None => Vocabulary::from_tokens(rows.iter().flat_map(|(_, w)| w.iter().copied())),
    };
    let examples = rows
        .into_iter()
        .map(|(label, words)| SequenceExample { tokens: vocab.encode(&words), label })
        .collect();
    Ok((vocab, examples))
}

pub fn write_corpus(vocab: &Vocabulary, examples: &[SequenceExample]) -> String {
    let mut s = String::new();
    for e in examples {
        if let Some(y) = e.label {
            let _ = write!(s, "{y}\t");
        }
        s.push_str(&vocab.decode(&e.tokens));
        s.push('\n');
    }
    s
}

/// One document per line: an optional label and a tab, then `id:count`
/// pairs separated by spaces.
pub fn parse_bow(text: &str, vocab_size: usize) -> Result<Vec<DocumentExample>> {
    let mut docs = Vec::new();
    for (n, l) in content_lines(text) {
        let (label, rest) = split_label(n, l)?;
        let mut counts = vec![0u32; vocab_size];
        for pair in rest.split_whitespace() {
            let (id, c) = pair
                .split_once(':')
                .ok_or_else(|| line_err(n, format!("'{pair}' is not an id:count pair")))?;
            let id: usize = id.parse().map_err(|_| line_err(n, format!("bad token id '{id}'")))?;
            let c: u32 = c.parse().map_err(|_| line_err(n, format!("bad count '{c}'")))?;
            if id >= vocab_size {
                return Err(line_err(n, format!("token id {id} outside vocabulary of size {vocab_size}")));
            }
            counts[id] += c;
        }
        let doc = DocumentExample { counts, label };
        doc.validate(vocab_size).map_err(|e| line_err(n, e))?;
        docs.push(doc);
    }
    if docs.is_empty() {
        return Err(Error::Data("document file is empty".into()));
    }
    Ok(docs)
}

pub fn write_bow(docs: &[DocumentExample]) -> String {
    let mut s = String::new();
    for d in docs {
        if let Some(y) = d.label {
            let _ = write!(s, "{y}\t");
        }
        let pairs: Vec<String> = d
            .counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, c)| format!("{i}:{c}"))
            .collect();
        s.push_str(&pairs.join(" "));
        s.push('\n');
    }
    s
}
