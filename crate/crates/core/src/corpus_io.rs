//! Annotated-corpus text format.
//!
//! One sentence per line, whitespace-separated records `surface|lemma|feats`.
//! `lemma` is `_` for non-lemmatizable words and `feats` is a comma-separated
//! list or `_`. Inside fields the characters `|`, `,`, space and `\` are
//! written as `\p`, `\c`, `\s` and `\\`. A comma only has to be escaped in
//! the feature field, where it separates values; the writer leaves it bare in
//! surfaces and lemmas (`,|_|_`). Other whitespace cannot be represented and
//! is rejected.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Placeholder for an absent lemma or an empty feature list.
pub const EMPTY_FIELD: &str = "_";

/// A word as produced by the annotator.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AnnotatedToken {
    surface: String,
    lemma: Option<String>,
    features: Vec<String>,
}

impl AnnotatedToken {
    pub fn new(
        surface: impl Into<String>,
        lemma: Option<String>,
        features: Vec<String>,
    ) -> Result<Self> {
        let surface = surface.into();
        if surface.is_empty() {
            return Err(Error::InvalidToken("empty surface".into()));
        }
        check_text(&surface, "surface")?;
        if let Some(l) = &lemma {
            if l.is_empty() || l == EMPTY_FIELD {
                return Err(Error::InvalidToken(format!("invalid lemma {l:?}")));
            }
            check_text(l, "lemma")?;
        } else if !features.is_empty() {
            return Err(Error::InvalidToken(format!(
                "{surface:?} has features but no lemma"
            )));
        }
        for (i, f) in features.iter().enumerate() {
            if f.is_empty() || f == EMPTY_FIELD {
                return Err(Error::InvalidToken(format!("invalid feature {f:?}")));
            }
            check_text(f, "feature")?;
            if features[..i].contains(f) {
                return Err(Error::InvalidToken(format!("duplicate feature {f:?}")));
            }
        }
        Ok(Self {
            surface,
            lemma,
            features,
        })
    }

    /// A word the annotator could not lemmatize (numbers, punctuation, ...).
    pub fn plain(surface: impl Into<String>) -> Result<Self> {
        Self::new(surface, None, Vec::new())
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }

    pub fn lemma(&self) -> Option<&str> {
        self.lemma.as_deref()
    }

    /// Feature values in annotation order.
    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn is_lemmatizable(&self) -> bool {
        self.lemma.is_some()
    }

    /// Same token with its features reordered by `order` (a permutation).
    pub fn with_feature_order(&self, order: &[usize]) -> Self {
        let features = order.iter().map(|&i| self.features[i].clone()).collect();
        Self {
            surface: self.surface.clone(),
            lemma: self.lemma.clone(),
            features,
        }
    }
}

fn check_text(s: &str, field: &str) -> Result<()> {
    match s.chars().find(|c| c.is_whitespace() && *c != ' ') {
        Some(c) => Err(Error::InvalidToken(format!(
            "{field} {s:?} contains unrepresentable whitespace {c:?}"
        ))),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AnnotatedSentence {
    tokens: Vec<AnnotatedToken>,
}

impl AnnotatedSentence {
    pub fn new(tokens: Vec<AnnotatedToken>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::InvalidToken("empty sentence".into()));
        }
        Ok(Self { tokens })
    }

    pub fn tokens(&self) -> &[AnnotatedToken] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

fn escape_into(out: &mut String, s: &str, in_features: bool) {
    for c in s.chars() {
        match c {
            '|' => out.push_str("\\p"),
            ',' if in_features => out.push_str("\\c"),
            ' ' => out.push_str("\\s"),
            '\\' => out.push_str("\\\\"),
            c => out.push(c),
        }
    }
}

/// Escape a feature value (the strictest field).
pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    escape_into(&mut out, s, true);
    out
}

/// Undo [`escape`]. On failure returns the char offset of the bad escape.
pub fn unescape(s: &str) -> std::result::Result<String, (usize, String)> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars().enumerate();
    while let Some((i, c)) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some((_, 'p')) => out.push('|'),
            Some((_, 'c')) => out.push(','),
            Some((_, 's')) => out.push(' '),
            Some((_, '\\')) => out.push('\\'),
            Some((_, other)) => return Err((i, format!("bad escape \\{other}"))),
            None => return Err((i, "dangling escape at end of field".into())),
        }
    }
    Ok(out)
}

fn serialize_token_into(out: &mut String, tok: &AnnotatedToken) {
    escape_into(out, &tok.surface, false);
    out.push('|');
    match &tok.lemma {
        Some(l) => escape_into(out, l, false),
        None => out.push_str(EMPTY_FIELD),
    }
    out.push('|');
    if tok.features.is_empty() {
        out.push_str(EMPTY_FIELD);
    } else {
        for (i, f) in tok.features.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            escape_into(out, f, true);
        }
    }
}

pub fn serialize_token(tok: &AnnotatedToken) -> String {
    let mut s = String::new();
    serialize_token_into(&mut s, tok);
    s
}

pub fn serialize_sentence(sentence: &AnnotatedSentence) -> String {
    let mut out = String::new();
    for (i, tok) in sentence.tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        serialize_token_into(&mut out, tok);
    }
    out
}

/// Serialize a corpus, one `\n`-terminated line per sentence.
pub fn serialize_annotated_corpus(sentences: &[AnnotatedSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&serialize_sentence(s));
        out.push('\n');
    }
    out
}

/// Parse one record. `column` is the 1-based char column of the record start.
fn parse_record(record: &str, line: usize, column: usize) -> Result<AnnotatedToken> {
    let err = |offset: usize, message: String| Error::Parse {
        line,
        column: column + offset,
        message,
    };
    let fields: Vec<&str> = record.split('|').collect();
    if fields.len() != 3 {
        return Err(err(
            0,
            format!("expected 3 '|'-separated fields, found {}", fields.len()),
        ));
    }
    let lemma_off = fields[0].chars().count() + 1;
    let feats_off = lemma_off + fields[1].chars().count() + 1;

    let surface = unescape(fields[0]).map_err(|(i, m)| err(i, m))?;
    if surface.is_empty() {
        return Err(err(0, "empty surface".into()));
    }
    let lemma = match fields[1] {
        EMPTY_FIELD => None,
        "" => return Err(err(lemma_off, "empty lemma field".into())),
        raw => Some(unescape(raw).map_err(|(i, m)| err(lemma_off + i, m))?),
    };
    let mut features = Vec::new();
    if fields[2] != EMPTY_FIELD {
        if lemma.is_none() {
            return Err(err(feats_off, "features without lemma".into()));
        }
        let mut off = feats_off;
        for raw in fields[2].split(',') {
            if raw.is_empty() || raw == EMPTY_FIELD {
                return Err(err(off, format!("invalid feature value {raw:?}")));
            }
            let f = unescape(raw).map_err(|(i, m)| err(off + i, m))?;
            if features.contains(&f) {
                return Err(err(off, format!("duplicate feature {f:?}")));
            }
            features.push(f);
            off += raw.chars().count() + 1;
        }
    }
    AnnotatedToken::new(surface, lemma, features).map_err(|e| err(0, e.to_string()))
}

/// Parse one line; `None` for blank lines. `line` is 1-based.
pub fn parse_line(text: &str, line: usize) -> Result<Option<AnnotatedSentence>> {
    let mut tokens = Vec::new();
    let mut start: Option<(usize, usize)> = None; // (byte offset, column)
    for (col0, (b, c)) in text.char_indices().enumerate() {
        if c.is_whitespace() {
            if let Some((sb, scol)) = start.take() {
                tokens.push(parse_record(&text[sb..b], line, scol)?);
            }
        } else if start.is_none() {
            start = Some((b, col0 + 1));
        }
    }
    if let Some((sb, scol)) = start {
        tokens.push(parse_record(&text[sb..], line, scol)?);
    }
    if tokens.is_empty() {
        Ok(None)
    } else {
        Ok(Some(AnnotatedSentence { tokens }))
    }
}

/// Parse a whole annotated corpus. Lines are parsed in parallel; order is kept.
pub fn parse_annotated_corpus(text: &str) -> Result<Vec<AnnotatedSentence>> {
    let lines: Vec<&str> = text.split('\n').collect();
    let parsed: Vec<Option<AnnotatedSentence>> = lines
        .par_iter()
        .enumerate()
        .map(|(i, l)| parse_line(l, i + 1))
        .collect::<Result<_>>()?;
    Ok(parsed.into_iter().flatten().collect())
}

pub fn read_annotated_corpus(path: &Path) -> Result<Vec<AnnotatedSentence>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotated_corpus(&text)
}

pub fn write_annotated_corpus(path: &Path, sentences: &[AnnotatedSentence]) -> Result<()> {
    fs::write(path, serialize_annotated_corpus(sentences)).map_err(|e| Error::io(path, e))
}

/// Plain whitespace-tokenized text, one sentence per non-blank line.
pub fn parse_plain_corpus(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split_whitespace().map(str::to_owned).collect::<Vec<_>>())
        .filter(|ws| !ws.is_empty())
        .collect()
}

pub fn read_plain_corpus(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_plain_corpus(&text))
}

pub fn serialize_plain_corpus(sentences: &[Vec<String>]) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&s.join(" "));
        out.push('\n');
    }
    out
}
