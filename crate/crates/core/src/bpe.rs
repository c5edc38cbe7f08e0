//! Byte-pair encoding: learning merge operations from word counts and
//! segmenting words with a learned table.
//!
//! Symbols are Unicode scalar values. Every non-final symbol of a word carries
//! the continuation marker as a suffix (`l@@ o@@ w`), so the word boundary is
//! part of the symbol and merges never cross words. Pair counts include every
//! adjacent position (overlapping); applying a merge rewrites occurrences
//! left to right without overlap. Ties between equally frequent pairs go to
//! the lexicographically smallest `(left, right)`.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_MARKER: &str = "@@";
const HEADER_PREFIX: &str = "#bpe v1 marker=";

/// Ordered merge operations. Priority is the position in the table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MergeTable {
    marker: String,
    merges: Vec<(String, String)>,
    ranks: HashMap<String, HashMap<String, usize>>,
}

impl MergeTable {
    pub fn new(marker: impl Into<String>, merges: Vec<(String, String)>) -> Result<Self> {
        let marker = marker.into();
        if marker.is_empty() || marker.chars().any(char::is_whitespace) {
            return Err(Error::Config(format!("invalid continuation marker {marker:?}")));
        }
        let mut ranks: HashMap<String, HashMap<String, usize>> = HashMap::new();
        for (i, (l, r)) in merges.iter().enumerate() {
            if ranks.entry(l.clone()).or_default().insert(r.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate merge {l} {r}")));
            }
        }
        Ok(Self {
            marker,
            merges,
            ranks,
        })
    }

    pub fn empty() -> Self {
        Self::new(DEFAULT_MARKER, Vec::new()).expect("default marker is valid")
    }

    pub fn marker(&self) -> &str {
        &self.marker
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    /// The table restricted to its first `k` merges.
    pub fn prefix(&self, k: usize) -> Self {
        let k = k.min(self.merges.len());
        Self::new(self.marker.clone(), self.merges[..k].to_vec()).expect("prefix of a valid table")
    }

    fn rank(&self, left: &str, right: &str) -> Option<usize> {
        self.ranks.get(left)?.get(right).copied()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER_PREFIX}{}\n", self.marker);
        for (l, r) in &self.merges {
            out.push_str(&escape_symbol(l));
            out.push(' ');
            out.push_str(&escape_symbol(r));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Format {
            what: "merge table",
            line,
            message,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
        let marker = header
            .strip_prefix(HEADER_PREFIX)
            .ok_or_else(|| bad(1, format!("expected header {HEADER_PREFIX}<marker>")))?;
        let mut merges = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let mut parts = line.split(' ');
            let (Some(l), Some(r), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad(lineno, format!("expected `left right`, got {line:?}")));
            };
            if l.is_empty() || r.is_empty() {
                return Err(bad(lineno, "empty symbol".into()));
            }
            let l = unescape_symbol(l).map_err(|m| bad(lineno, m))?;
            let r = unescape_symbol(r).map_err(|m| bad(lineno, m))?;
            if !seen.insert((l.clone(), r.clone())) {
                return Err(bad(lineno, format!("duplicate merge {l} {r}")));
            }
            merges.push((l, r));
        }
        Self::new(marker, merges).map_err(|e| bad(1, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn escape_symbol(s: &str) -> String {
    s.replace('\\', "\\\\").replace(' ', "\\s")
}

fn unescape_symbol(s: &str) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('s') => out.push(' '),
                Some('\\') => out.push('\\'),
                other => return Err(format!("bad escape in symbol {s:?}: {other:?}")),
            }
        } else {
            out.push(c);
        }
    }
    Ok(out)
}

/// The segmentation of one word.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SubwordSequence {
    subwords: Vec<String>,
    marker_len: usize,
}

impl SubwordSequence {
    /// Subwords as emitted, non-final ones carrying the marker.
    pub fn subwords(&self) -> &[String] {
        &self.subwords
    }

    pub fn into_subwords(self) -> Vec<String> {
        self.subwords
    }

    pub fn len(&self) -> usize {
        self.subwords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subwords.is_empty()
    }

    /// Strip the markers and concatenate.
    pub fn reconstruct(&self) -> String {
        let last = self.subwords.len() - 1;
        let mut out = String::new();
        for (i, s) in self.subwords.iter().enumerate() {
            if i < last {
                out.push_str(&s[..s.len() - self.marker_len]);
            } else {
                out.push_str(s);
            }
        }
        out
    }
}

/// Undo segmentation of a subword stream: marked subwords glue onto the
/// next one. A trailing marked subword still ends a word.
pub fn join_subwords<S: AsRef<str>>(subwords: &[S], marker: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut cur = String::new();
    for s in subwords {
        match s.as_ref().strip_suffix(marker) {
            Some(piece) if !marker.is_empty() => cur.push_str(piece),
            _ => {
                cur.push_str(s.as_ref());
                words.push(std::mem::take(&mut cur));
            }
        }
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words
}

/// Initial symbols of a word: its characters, all but the last marked.
pub fn initial_symbols(word: &str, marker: &str) -> Vec<String> {
    let n = word.chars().count();
    word.chars()
        .enumerate()
        .map(|(i, c)| {
            let mut s = c.to_string();
            if i + 1 < n {
                s.push_str(marker);
            }
            s
        })
        .collect()
}

/// Concatenate a marked left symbol with its right neighbour.
pub fn merge_symbols(left: &str, right: &str, marker: &str) -> String {
    let stem = left.strip_suffix(marker).unwrap_or(left);
    let mut s = String::with_capacity(stem.len() + right.len());
    s.push_str(stem);
    s.push_str(right);
    s
}

/// Segment `word` with `table`: repeatedly merge the highest-priority
/// adjacent pair until none of the remaining pairs is in the table.
pub fn apply_bpe(word: &str, table: &MergeTable) -> SubwordSequence {
    assert!(!word.is_empty(), "apply_bpe on an empty word");
    let marker = table.marker();
    let mut symbols = initial_symbols(word, marker);
    while symbols.len() > 1 {
        let best = symbols
            .windows(2)
            .filter_map(|w| table.rank(&w[0], &w[1]))
            .min();
        let Some(rank) = best else { break };
        let (left, right) = &table.merges[rank];
        let mut next = Vec::with_capacity(symbols.len());
        let mut i = 0;
        while i < symbols.len() {
            if i + 1 < symbols.len() && symbols[i] == *left && symbols[i + 1] == *right {
                next.push(merge_symbols(left, right, marker));
                i += 2;
            } else {
                next.push(std::mem::take(&mut symbols[i]));
                i += 1;
            }
        }
        symbols = next;
    }
    SubwordSequence {
        subwords: symbols,
        marker_len: marker.len(),
    }
}

/// Count whitespace-separated words.
pub fn word_frequencies<'a>(words: impl IntoIterator<Item = &'a str>) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for w in words {
        *counts.entry(w.to_owned()).or_insert(0) += 1;
    }
    counts
}

type Pair = (u32, u32);

struct Learner<'m> {
    marker: &'m str,
    symbols: Vec<String>,
    ids: HashMap<String, u32>,
    words: Vec<(Vec<u32>, u64)>,
    counts: HashMap<Pair, u64>,
    occurs_in: HashMap<Pair, BTreeSet<usize>>,
    queue: BTreeSet<(Reverse<u64>, String, String)>,
}

impl<'m> Learner<'m> {
    fn new(word_counts: &BTreeMap<String, u64>, marker: &'m str) -> Self {
        let mut learner = Self {
            marker,
            symbols: Vec::new(),
            ids: HashMap::new(),
            words: Vec::with_capacity(word_counts.len()),
            counts: HashMap::new(),
            occurs_in: HashMap::new(),
            queue: BTreeSet::new(),
        };
        for (word, &count) in word_counts {
            let syms = initial_symbols(word, marker)
                .into_iter()
                .map(|s| learner.intern(s))
                .collect();
            learner.words.push((syms, count));
        }
        for idx in 0..learner.words.len() {
            learner.account(idx, true);
        }
        learner
    }

    fn intern(&mut self, s: String) -> u32 {
        if let Some(&id) = self.ids.get(&s) {
            return id;
        }
        let id = self.symbols.len() as u32;
        self.ids.insert(s.clone(), id);
        self.symbols.push(s);
        id
    }

    fn queue_key(&self, pair: Pair, count: u64) -> (Reverse<u64>, String, String) {
        (
            Reverse(count),
            self.symbols[pair.0 as usize].clone(),
            self.symbols[pair.1 as usize].clone(),
        )
    }

    fn adjust(&mut self, pair: Pair, delta: i64) {
        let old = self.counts.get(&pair).copied().unwrap_or(0);
        let new = (old as i64 + delta) as u64;
        if old > 0 {
            let key = self.queue_key(pair, old);
            self.queue.remove(&key);
        }
        if new > 0 {
            let key = self.queue_key(pair, new);
            self.queue.insert(key);
            self.counts.insert(pair, new);
        } else {
            self.counts.remove(&pair);
        }
    }

    /// Add (or remove) every adjacent pair of word `idx` to the counts.
    fn account(&mut self, idx: usize, add: bool) {
        let (syms, count) = &self.words[idx];
        let count = *count as i64;
        let pairs: Vec<Pair> = syms.windows(2).map(|w| (w[0], w[1])).collect();
        for pair in pairs {
            self.adjust(pair, if add { count } else { -count });
            if add {
                self.occurs_in.entry(pair).or_default().insert(idx);
            }
        }
    }

    fn best(&self) -> Option<(u64, Pair)> {
        let (Reverse(count), l, r) = self.queue.first()?;
        Some((*count, (self.ids[l], self.ids[r])))
    }

    fn merge(&mut self, pair: Pair) {
        let merged = merge_symbols(
            &self.symbols[pair.0 as usize],
            &self.symbols[pair.1 as usize],
            self.marker,
        );
        let merged = self.intern(merged);
        let affected: Vec<usize> = self
            .occurs_in
            .remove(&pair)
            .map(|s| s.into_iter().collect())
            .unwrap_or_default();
        for idx in affected {
            let syms = &self.words[idx].0;
            if !syms.windows(2).any(|w| (w[0], w[1]) == pair) {
                continue;
            }
            self.account(idx, false);
            let syms = &mut self.words[idx].0;
            let mut next = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && (syms[i], syms[i + 1]) == pair {
                    next.push(merged);
                    i += 2;
                } else {
                    next.push(syms[i]);
                    i += 1;
                }
            }
            *syms = next;
            self.account(idx, true);
        }
    }
}

/// Learn up to `num_merges` merges from word counts with the default marker.
pub fn learn_bpe(word_counts: &BTreeMap<String, u64>, num_merges: usize) -> MergeTable {
    learn_bpe_with_marker(word_counts, num_merges, DEFAULT_MARKER)
        .expect("default marker is valid")
}

/// Learning stops early once the most frequent pair occurs fewer than twice.
pub fn learn_bpe_with_marker(
    word_counts: &BTreeMap<String, u64>,
    num_merges: usize,
    marker: &str,
) -> Result<MergeTable> {
    if let Some(w) = word_counts.keys().find(|w| w.is_empty()) {
        return Err(Error::Config(format!("empty word in BPE counts: {w:?}")));
    }
    let mut merges = Vec::new();
    if num_merges > 0 && !word_counts.is_empty() {
        let mut learner = Learner::new(word_counts, marker);
        while merges.len() < num_merges {
            let Some((count, pair)) = learner.best() else { break };
            if count < 2 {
                break;
            }
            merges.push((
                learner.symbols[pair.0 as usize].clone(),
                learner.symbols[pair.1 as usize].clone(),
            ));
            learner.merge(pair);
        }
    }
    MergeTable::new(marker, merges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
        pairs.iter().map(|(w, c)| (w.to_string(), *c)).collect()
    }

    fn pairs(table: &MergeTable) -> Vec<(&str, &str)> {
        table
            .merges()
            .iter()
            .map(|(l, r)| (l.as_str(), r.as_str()))
            .collect()
    }

    #[test]
    fn join_undoes_segmentation() {
        let words = join_subwords(&["lo@@", "w@@", "est", "a", "b@@"], "@@");
        assert_eq!(words, vec!["lowest", "a", "b"]);
    }

    #[test]
    fn zero_merges_is_empty() {
        assert!(learn_bpe(&counts(&[("low", 5), ("lower", 2)]), 0).is_empty());
        assert!(learn_bpe(&BTreeMap::new(), 10).is_empty());
    }

    #[test]
    fn low_lower_two_merges() {
        // Step 1: l@@ o@@ (7) and o@@ w (5) vs o@@ w@@ (2); l@@ o@@ wins on count.
        // Step 2: lo@@ w (5) beats lo@@ w@@ (2).
        let t = learn_bpe(&counts(&[("low", 5), ("lower", 2)]), 2);
        assert_eq!(pairs(&t), vec![("l@@", "o@@"), ("lo@@", "w")]);
    }

    #[test]
    fn repeated_word_collapses_in_len_minus_one_steps() {
        let t = learn_bpe(&counts(&[("abcde", 3)]), 100);
        assert_eq!(t.len(), 4);
        assert_eq!(apply_bpe("abcde", &t).subwords(), ["abcde"]);
    }

    #[test]
    fn singleton_pairs_are_not_merged() {
        assert!(learn_bpe(&counts(&[("abc", 1)]), 10).is_empty());
    }

    #[test]
    fn unrelated_word_stays_characters() {
        let t = learn_bpe(&counts(&[("low", 5), ("lower", 2)]), 10);
        let s = apply_bpe("xyz", &t);
        assert_eq!(s.subwords(), ["x@@", "y@@", "z"]);
        assert_eq!(s.reconstruct(), "xyz");
    }

    #[test]
    fn fully_merged_word_is_one_subword() {
        let t = learn_bpe(&counts(&[("low", 5), ("lower", 2)]), 2);
        assert_eq!(apply_bpe("low", &t).subwords(), ["low"]);
        assert_eq!(apply_bpe("lowest", &t).subwords(), ["lo@@", "w@@", "e@@", "s@@", "t"]);
    }

    #[test]
    fn single_char_word() {
        let s = apply_bpe("a", &MergeTable::empty());
        assert_eq!(s.subwords(), ["a"]);
    }

    #[test]
    fn words_containing_marker_characters_reconstruct() {
        let t = learn_bpe(&counts(&[("a@@b", 4), ("@@", 3)]), 20);
        for w in ["a@@b", "@@", "@", "b@a"] {
            assert_eq!(apply_bpe(w, &t).reconstruct(), w);
        }
    }

    #[test]
    fn file_round_trip_and_header() {
        let t = learn_bpe(&counts(&[("a b\\c", 4), ("low", 3)]), 20);
        let text = t.to_text();
        assert!(text.starts_with("#bpe v1 marker=@@\n"));
        assert_eq!(MergeTable::from_text(&text).unwrap(), t);
        assert_eq!(learn_bpe(&counts(&[("x", 1)]), 0).to_text(), "#bpe v1 marker=@@\n");
    }

    #[test]
    fn malformed_files() {
        assert!(MergeTable::from_text("").is_err());
        assert!(MergeTable::from_text("#bpe v2 marker=@@\n").is_err());
        assert!(matches!(
            MergeTable::from_text("#bpe v1 marker=@@\na@@ b\na@@ b\n"),
            Err(Error::Format { line: 3, .. })
        ));
        assert!(matches!(
            MergeTable::from_text("#bpe v1 marker=@@\na@@ b c\n"),
            Err(Error::Format { line: 2, .. })
        ));
    }

    #[test]
    fn custom_marker() {
        let t = learn_bpe_with_marker(&counts(&[("abab", 3)]), 5, "##").unwrap();
        assert_eq!(t.marker(), "##");
        assert_eq!(apply_bpe("abab", &t).subwords(), ["abab"]);
        assert_eq!(apply_bpe("abx", &t).subwords(), ["ab##", "x"]);
    }
}
