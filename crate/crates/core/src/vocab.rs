//! Token vocabularies for lemmas, individual feature values, subwords and
//! feature combinations.
//!
//! Ids 0 and 1 are reserved for padding and unknown tokens; entry `i` has id
//! `i + 2`. Entries are sorted by descending count, then by token text.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::bpe::{apply_bpe, MergeTable};
use crate::corpus_io::{AnnotatedSentence, AnnotatedToken, EMPTY_FIELD};
use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const NUM_RESERVED: usize = 2;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

pub const DEFAULT_LEMMA_MIN_FREQ: u64 = 2;
pub const DEFAULT_SUBWORD_MIN_FREQ: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VocabKind {
    Lemma,
    Feature,
    Subword,
    Combination,
}

impl VocabKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VocabKind::Lemma => "lemma",
            VocabKind::Feature => "feature",
            VocabKind::Subword => "subword",
            VocabKind::Combination => "combination",
        }
    }
}

impl fmt::Display for VocabKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VocabKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lemma" => Ok(VocabKind::Lemma),
            "feature" => Ok(VocabKind::Feature),
            "subword" => Ok(VocabKind::Subword),
            "combination" => Ok(VocabKind::Combination),
            other => Err(format!("unknown vocabulary kind {other:?}")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Vocabulary {
    kind: VocabKind,
    entries: Vec<(String, u64)>,
    index: HashMap<String, usize>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.entries == other.entries
    }
}

impl Vocabulary {
    /// Build from raw counts: drop entries under `min_freq`, sort, truncate.
    pub fn from_counts(
        kind: VocabKind,
        counts: impl IntoIterator<Item = (String, u64)>,
        min_freq: u64,
        max_size: Option<usize>,
    ) -> Self {
        let mut entries: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_freq && *c > 0)
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        if let Some(max) = max_size {
            entries.truncate(max);
        }
        Self::from_sorted(kind, entries).expect("counts map has unique keys")
    }

    /// Entries must already be in id order.
    fn from_sorted(kind: VocabKind, entries: Vec<(String, u64)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (tok, _)) in entries.iter().enumerate() {
            if index.insert(tok.clone(), i + NUM_RESERVED).is_some() {
                return Err(Error::InvalidToken(format!("duplicate vocabulary token {tok:?}")));
            }
        }
        Ok(Self {
            kind,
            entries,
            index,
        })
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    pub fn entries(&self) -> &[(String, u64)] {
        &self.entries
    }

    /// Number of ids including the reserved slots.
    pub fn len(&self) -> usize {
        self.entries.len() + NUM_RESERVED
    }

    /// True when only the reserved slots exist.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        match id {
            PAD_ID => Some(PAD_TOKEN),
            UNK_ID => Some(UNK_TOKEN),
            i => self.entries.get(i - NUM_RESERVED).map(|(t, _)| t.as_str()),
        }
    }

    pub fn count(&self, token: &str) -> u64 {
        self.id(token).map_or(0, |i| self.entries[i - NUM_RESERVED].1)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("#vocab v1 kind={}\n", self.kind);
        for (tok, count) in &self.entries {
            out.push_str(tok);
            out.push('\t');
            out.push_str(&count.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Format {
            what: "vocabulary",
            line,
            message,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
        let kind = header
            .strip_prefix("#vocab v1 kind=")
            .ok_or_else(|| bad(1, "expected header `#vocab v1 kind=<kind>`".into()))?
            .parse::<VocabKind>()
            .map_err(|m| bad(1, m))?;
        let mut entries = Vec::new();
        let mut seen = HashMap::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let (tok, count) = line
                .split_once('\t')
                .ok_or_else(|| bad(lineno, format!("expected `token<TAB>count`, got {line:?}")))?;
            if tok.is_empty() {
                return Err(bad(lineno, "empty token".into()));
            }
            let count: u64 = count
                .parse()
                .map_err(|_| bad(lineno, format!("bad count {count:?}")))?;
            if let Some(prev) = seen.insert(tok.to_owned(), lineno) {
                return Err(bad(lineno, format!("duplicate token {tok:?} (first on line {prev})")));
            }
            entries.push((tok.to_owned(), count));
        }
        Self::from_sorted(kind, entries).map_err(|e| bad(1, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

pub fn save_vocab(v: &Vocabulary, path: &Path) -> Result<()> {
    v.save(path)
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    Vocabulary::load(path)
}

/// Canonical combination string: sorted feature values joined by `|`, `_` if empty.
pub fn canonical_combination<S: AsRef<str>>(features: &[S]) -> String {
    if features.is_empty() {
        return EMPTY_FIELD.to_owned();
    }
    let mut sorted: Vec<&str> = features.iter().map(AsRef::as_ref).collect();
    sorted.sort_unstable();
    sorted.join("|")
}

fn tokens(corpus: &[AnnotatedSentence]) -> impl Iterator<Item = &AnnotatedToken> {
    corpus.iter().flat_map(|s| s.tokens().iter())
}

pub fn build_lemma_vocab(
    corpus: &[AnnotatedSentence],
    min_freq: u64,
    max_size: Option<usize>,
) -> Vocabulary {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for lemma in tokens(corpus).filter_map(AnnotatedToken::lemma) {
        *counts.entry(lemma.to_owned()).or_default() += 1;
    }
    Vocabulary::from_counts(VocabKind::Lemma, counts, min_freq.max(1), max_size)
}

pub fn build_feature_vocab(corpus: &[AnnotatedSentence]) -> Vocabulary {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for f in tokens(corpus).flat_map(|t| t.features()) {
        *counts.entry(f.clone()).or_default() += 1;
    }
    Vocabulary::from_counts(VocabKind::Feature, counts, 1, None)
}

/// One count per word occurrence, including `_` for featureless words.
pub fn build_combination_vocab(corpus: &[AnnotatedSentence]) -> Vocabulary {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for t in tokens(corpus) {
        *counts.entry(canonical_combination(t.features())).or_default() += 1;
    }
    Vocabulary::from_counts(VocabKind::Combination, counts, 1, None)
}

/// Subword counts over the segmentation of every surface form.
pub fn build_subword_vocab(corpus: &[AnnotatedSentence], merges: &MergeTable) -> Vocabulary {
    build_subword_vocab_with(corpus, merges, DEFAULT_SUBWORD_MIN_FREQ)
}

pub fn build_subword_vocab_with(
    corpus: &[AnnotatedSentence],
    merges: &MergeTable,
    min_freq: u64,
) -> Vocabulary {
    subword_vocab_from_words(tokens(corpus).map(AnnotatedToken::surface), merges, min_freq)
}

/// Subword vocabulary over arbitrary words (used for plain target text).
pub fn subword_vocab_from_words<'a>(
    words: impl IntoIterator<Item = &'a str>,
    merges: &MergeTable,
    min_freq: u64,
) -> Vocabulary {
    let mut word_counts: HashMap<&str, u64> = HashMap::new();
    for w in words {
        *word_counts.entry(w).or_default() += 1;
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for (w, c) in word_counts {
        for sw in apply_bpe(w, merges).into_subwords() {
            *counts.entry(sw).or_default() += c;
        }
    }
    Vocabulary::from_counts(VocabKind::Subword, counts, min_freq.max(1), None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bpe::learn_bpe;
    use crate::corpus_io::parse_annotated_corpus;

    fn corpus(text: &str) -> Vec<AnnotatedSentence> {
        parse_annotated_corpus(text).unwrap()
    }

    #[test]
    fn single_wir_token() {
        let c = corpus("Wir|wir|1,Pl,Nom\n");
        let lemmas = build_lemma_vocab(&c, 1, None);
        assert_eq!(lemmas.entries(), [("wir".to_string(), 1)]);
        assert_eq!(lemmas.id("wir"), Some(2));

        let feats = build_feature_vocab(&c);
        assert_eq!(feats.entries().len(), 3);
        for f in ["1", "Pl", "Nom"] {
            assert_eq!(feats.count(f), 1);
        }

        let combos = build_combination_vocab(&c);
        assert_eq!(combos.entries(), [("1|Nom|Pl".to_string(), 1)]);
    }

    #[test]
    fn min_freq_above_all_counts() {
        let c = corpus("a|x|_ b|y|_ c|x|_\n");
        let v = build_lemma_vocab(&c, 3, None);
        assert!(v.is_empty());
        assert_eq!(v.len(), NUM_RESERVED);
        assert_eq!(build_lemma_vocab(&c, 2, None).entries(), [("x".to_string(), 2)]);
    }

    #[test]
    fn no_lemmatizable_words() {
        let c = corpus(",|_|_ 3|_|_\n");
        assert!(build_lemma_vocab(&c, 1, None).is_empty());
        assert!(build_feature_vocab(&c).is_empty());
        assert_eq!(build_combination_vocab(&c).entries(), [("_".to_string(), 2)]);
    }

    #[test]
    fn repeated_token_counts() {
        let c = corpus("Wir|wir|1,Pl,Nom Wir|wir|1,Pl,Nom Wir|wir|1,Pl,Nom\n");
        let feats = build_feature_vocab(&c);
        assert!(feats.entries().iter().all(|(_, n)| *n == 3));
    }

    #[test]
    fn sort_order_and_truncation() {
        let c = corpus("b|b|_ a|a|_ c|c|_ c|c|_\n");
        let v = build_lemma_vocab(&c, 1, Some(2));
        assert_eq!(
            v.entries(),
            [("c".to_string(), 2), ("a".to_string(), 1)]
        );
        assert_eq!(v.token(0), Some(PAD_TOKEN));
        assert_eq!(v.token(1), Some(UNK_TOKEN));
        assert_eq!(v.token(3), Some("a"));
        assert_eq!(v.token(4), None);
        assert_eq!(v.id_or_unk("zzz"), UNK_ID);
    }

    #[test]
    fn subword_counts() {
        let c = corpus("low|low|_ low|low|_\n");
        let wc = crate::bpe::word_frequencies(["low", "low"]);
        let merged = build_subword_vocab(&c, &learn_bpe(&wc, 10));
        assert_eq!(merged.entries(), [("low".to_string(), 2)]);
        let chars = build_subword_vocab(&c, &MergeTable::empty());
        assert_eq!(
            chars.entries(),
            [
                ("l@@".to_string(), 2),
                ("o@@".to_string(), 2),
                ("w".to_string(), 2)
            ]
        );
    }

    #[test]
    fn file_round_trip_each_kind() {
        let c = corpus("Wir|wir|1,Pl,Nom brauchen|brauchen|1,Pl ,|_|_\n");
        let merges = MergeTable::empty();
        for v in [
            build_lemma_vocab(&c, 1, None),
            build_feature_vocab(&c),
            build_subword_vocab(&c, &merges),
            build_combination_vocab(&c),
        ] {
            assert_eq!(Vocabulary::from_text(&v.to_text()).unwrap(), v);
        }
    }

    #[test]
    fn hand_written_file() {
        let v = Vocabulary::from_text("#vocab v1 kind=feature\nPl\t7\nNom\t3\n1\t1\n").unwrap();
        assert_eq!(v.kind(), VocabKind::Feature);
        assert_eq!(v.id("Pl"), Some(2));
        assert_eq!(v.id("Nom"), Some(3));
        assert_eq!(v.id("1"), Some(4));
        assert_eq!(v.count("Nom"), 3);
    }

    #[test]
    fn bad_files() {
        let dup = Vocabulary::from_text("#vocab v1 kind=lemma\na\t2\na\t1\n");
        assert!(matches!(dup, Err(Error::Format { line: 3, .. })));
        assert!(matches!(
            Vocabulary::from_text("#vocab v1 kind=pos\n"),
            Err(Error::Format { line: 1, .. })
        ));
        assert!(matches!(
            Vocabulary::from_text("#vocab v1 kind=lemma\na 2\n"),
            Err(Error::Format { line: 2, .. })
        ));
        assert!(matches!(
            Vocabulary::from_text("#vocab v1 kind=lemma\na\tx\n"),
            Err(Error::Format { line: 2, .. })
        ));
    }

    #[test]
    fn canonical_combinations() {
        assert_eq!(canonical_combination(&["1", "Pl", "Nom"]), "1|Nom|Pl");
        assert_eq!(canonical_combination::<&str>(&[]), "_");
    }
}
