//! Source-side encoders.
//!
//! * sparse: a lemmatizable word whose lemma is in the lemma vocabulary
//!   becomes one token carrying the lemma id and the ids of its individual
//!   feature values; every other word becomes its BPE subwords. Linguistic
//!   dropout sends an eligible word down the subword path with probability p.
//! * bpe: every word becomes its subwords.
//! * factored: every subword carries its word's feature-combination id and a
//!   position tag.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bpe::{apply_bpe, MergeTable};
use crate::corpus_io::{AnnotatedSentence, AnnotatedToken};
use crate::error::{Error, Result};
use crate::vocab::{canonical_combination, Vocabulary, NUM_RESERVED};

/// Default linguistic dropout probability.
pub const DEFAULT_LD_P: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Sparse,
    Bpe,
    Factored,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Sparse => "sparse",
            Scheme::Bpe => "bpe",
            Scheme::Factored => "factored",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sparse" => Ok(Scheme::Sparse),
            "bpe" => Ok(Scheme::Bpe),
            "factored" => Ok(Scheme::Factored),
            other => Err(format!("unknown scheme {other:?}")),
        }
    }
}

/// Linguistic dropout settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinguisticDropoutConfig {
    p: f64,
    seed: u64,
}

impl LinguisticDropoutConfig {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability {p} not in [0, 1]")));
        }
        Ok(Self { p, seed })
    }

    /// No dropout. Used for evaluation.
    pub fn disabled() -> Self {
        Self { p: 0.0, seed: 0 }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in [0, 1) as a pure function of the four counters.
pub fn counter_uniform(seed: u64, epoch: u64, sentence_index: u64, word_index: u64) -> f64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ epoch);
    h = splitmix64(h ^ sentence_index);
    h = splitmix64(h ^ word_index);
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// True means "drop the linguistic representation, use subwords".
pub fn sample_linguistic_dropout(
    seed: u64,
    epoch: u64,
    sentence_index: u64,
    word_index: u64,
    p: f64,
) -> bool {
    debug_assert!((0.0..=1.0).contains(&p));
    counter_uniform(seed, epoch, sentence_index, word_index) < p
}

/// A source token of the sparse and bpe schemes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum EncodedToken {
    /// Feature ids are kept sorted ascending and unique.
    LemmaFactored {
        lemma_id: usize,
        feature_ids: Vec<usize>,
    },
    Subword { subword_id: usize },
}

impl EncodedToken {
    pub fn lemma_factored(lemma_id: usize, mut feature_ids: Vec<usize>) -> Self {
        feature_ids.sort_unstable();
        feature_ids.dedup();
        EncodedToken::LemmaFactored {
            lemma_id,
            feature_ids,
        }
    }

    pub fn subword(subword_id: usize) -> Self {
        EncodedToken::Subword { subword_id }
    }
}

impl fmt::Display for EncodedToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncodedToken::LemmaFactored {
                lemma_id,
                feature_ids,
            } => {
                write!(f, "L:{lemma_id}")?;
                if !feature_ids.is_empty() {
                    f.write_str("+")?;
                    for (i, id) in feature_ids.iter().enumerate() {
                        if i > 0 {
                            f.write_str(",")?;
                        }
                        write!(f, "{id}")?;
                    }
                }
                Ok(())
            }
            EncodedToken::Subword { subword_id } => write!(f, "S:{subword_id}"),
        }
    }
}

fn parse_id(s: &str) -> std::result::Result<usize, String> {
    s.parse().map_err(|_| format!("bad id {s:?}"))
}

impl FromStr for EncodedToken {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if let Some(rest) = s.strip_prefix("S:") {
            return Ok(EncodedToken::subword(parse_id(rest)?));
        }
        let rest = s
            .strip_prefix("L:")
            .ok_or_else(|| format!("unknown token {s:?}"))?;
        let (lemma, feats) = match rest.split_once('+') {
            Some((l, f)) => (l, Some(f)),
            None => (rest, None),
        };
        let feature_ids = match feats {
            Some(f) => f.split(',').map(parse_id).collect::<std::result::Result<_, _>>()?,
            None => Vec::new(),
        };
        Ok(EncodedToken::lemma_factored(parse_id(lemma)?, feature_ids))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Position {
    Begin,
    Middle,
    End,
    Whole,
}

impl Position {
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    fn letter(self) -> char {
        match self {
            Position::Begin => 'B',
            Position::Middle => 'M',
            Position::End => 'E',
            Position::Whole => 'W',
        }
    }

    /// Tag of piece `i` in a word of `n` pieces.
    pub fn of(i: usize, n: usize) -> Self {
        match (i, n) {
            (_, 1) => Position::Whole,
            (0, _) => Position::Begin,
            (i, n) if i + 1 == n => Position::End,
            _ => Position::Middle,
        }
    }
}

/// A subword of the factored baseline with its word-level annotation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FactoredToken {
    pub subword_id: usize,
    pub combination_id: usize,
    pub position: Position,
}

impl fmt::Display for FactoredToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "F:{}|{}|{}",
            self.subword_id,
            self.combination_id,
            self.position.letter()
        )
    }
}

impl FromStr for FactoredToken {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let rest = s
            .strip_prefix("F:")
            .ok_or_else(|| format!("unknown token {s:?}"))?;
        let parts: Vec<&str> = rest.split('|').collect();
        let [sub, comb, pos] = parts[..] else {
            return Err(format!("expected F:<sub>|<comb>|<pos>, got {s:?}"));
        };
        let position = match pos {
            "B" => Position::Begin,
            "M" => Position::Middle,
            "E" => Position::End,
            "W" => Position::Whole,
            other => return Err(format!("bad position {other:?}")),
        };
        Ok(FactoredToken {
            subword_id: parse_id(sub)?,
            combination_id: parse_id(comb)?,
            position,
        })
    }
}

/// An encoded source sentence under any scheme.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EncodedSentence {
    Tokens(Vec<EncodedToken>),
    Factored(Vec<FactoredToken>),
}

impl EncodedSentence {
    pub fn len(&self) -> usize {
        match self {
            EncodedSentence::Tokens(t) => t.len(),
            EncodedSentence::Factored(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for EncodedSentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T]) -> fmt::Result {
            for (i, t) in items.iter().enumerate() {
                if i > 0 {
                    f.write_str(" ")?;
                }
                write!(f, "{t}")?;
            }
            Ok(())
        }
        match self {
            EncodedSentence::Tokens(t) => join(f, t),
            EncodedSentence::Factored(t) => join(f, t),
        }
    }
}

impl FromStr for EncodedSentence {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let items: Vec<&str> = s.split_whitespace().collect();
        if items.first().is_some_and(|t| t.starts_with("F:")) {
            items
                .iter()
                .map(|t| t.parse())
                .collect::<std::result::Result<_, _>>()
                .map(EncodedSentence::Factored)
        } else {
            items
                .iter()
                .map(|t| t.parse())
                .collect::<std::result::Result<_, _>>()
                .map(EncodedSentence::Tokens)
        }
    }
}

/// Everything the encoders look words up in.
#[derive(Clone, Debug)]
pub struct SourceVocabs {
    pub lemma: Vocabulary,
    pub feature: Vocabulary,
    pub subword: Vocabulary,
    pub combination: Vocabulary,
    pub merges: MergeTable,
}

fn subword_ids(surface: &str, subword_vocab: &Vocabulary, merges: &MergeTable) -> Vec<usize> {
    apply_bpe(surface, merges)
        .subwords()
        .iter()
        .map(|s| subword_vocab.id_or_unk(s))
        .collect()
}

/// The lemma-path representation of a word, if it has one.
#[derive(Clone, Debug, PartialEq, Eq)]
enum LemmaPath {
    Unavailable,
    Ready(EncodedToken),
    MissingFeature(String),
}

/// Both representations of a word, prepared once so that the per-epoch
/// dropout choice only has to pick one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreparedWord {
    lemma_path: LemmaPath,
    subwords: Vec<usize>,
}

impl PreparedWord {
    pub fn new(
        token: &AnnotatedToken,
        lemma_vocab: &Vocabulary,
        feature_vocab: &Vocabulary,
        subword_vocab: &Vocabulary,
        merges: &MergeTable,
    ) -> Self {
        let lemma_path = match token.lemma().and_then(|l| lemma_vocab.id(l)) {
            None => LemmaPath::Unavailable,
            Some(lemma_id) => {
                let ids: std::result::Result<Vec<usize>, &String> = token
                    .features()
                    .iter()
                    .map(|f| feature_vocab.id(f).ok_or(f))
                    .collect();
                match ids {
                    Ok(ids) => LemmaPath::Ready(EncodedToken::lemma_factored(lemma_id, ids)),
                    Err(f) => LemmaPath::MissingFeature(f.clone()),
                }
            }
        };
        Self {
            lemma_path,
            subwords: subword_ids(token.surface(), subword_vocab, merges),
        }
    }

    /// Eligible for the lemma path, i.e. subject to dropout.
    pub fn is_eligible(&self) -> bool {
        !matches!(self.lemma_path, LemmaPath::Unavailable)
    }

    pub fn subword_ids(&self) -> &[usize] {
        &self.subwords
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreparedSentence {
    words: Vec<PreparedWord>,
}

impl PreparedSentence {
    pub fn new(sentence: &AnnotatedSentence, vocabs: &SourceVocabs) -> Self {
        let words = sentence
            .tokens()
            .iter()
            .map(|t| {
                PreparedWord::new(t, &vocabs.lemma, &vocabs.feature, &vocabs.subword, &vocabs.merges)
            })
            .collect();
        Self { words }
    }

    pub fn words(&self) -> &[PreparedWord] {
        &self.words
    }

    /// Pick a representation per word with the dropout sampler.
    pub fn realize(
        &self,
        ld: &LinguisticDropoutConfig,
        epoch: u64,
        sentence_index: u64,
    ) -> Result<Vec<EncodedToken>> {
        let mut out = Vec::with_capacity(self.words.len());
        for (w, word) in self.words.iter().enumerate() {
            let lemma_tok = match &word.lemma_path {
                LemmaPath::Unavailable => None,
                path => {
                    if sample_linguistic_dropout(ld.seed, epoch, sentence_index, w as u64, ld.p) {
                        None
                    } else {
                        match path {
                            LemmaPath::Ready(t) => Some(t),
                            LemmaPath::MissingFeature(f) => {
                                return Err(Error::UnknownFeature(f.clone()))
                            }
                            LemmaPath::Unavailable => unreachable!(),
                        }
                    }
                }
            };
            match lemma_tok {
                Some(t) => out.push(t.clone()),
                None => out.extend(word.subwords.iter().map(|&id| EncodedToken::subword(id))),
            }
        }
        Ok(out)
    }

    /// The all-subword realization.
    pub fn subword_only(&self) -> Vec<EncodedToken> {
        self.words
            .iter()
            .flat_map(|w| w.subwords.iter().map(|&id| EncodedToken::subword(id)))
            .collect()
    }
}

pub fn encode_sentence_sparse(
    sentence: &AnnotatedSentence,
    vocabs: &SourceVocabs,
    ld: &LinguisticDropoutConfig,
    epoch: u64,
    sentence_index: u64,
) -> Result<Vec<EncodedToken>> {
    PreparedSentence::new(sentence, vocabs).realize(ld, epoch, sentence_index)
}

pub fn encode_sentence_bpe(
    sentence: &AnnotatedSentence,
    subword_vocab: &Vocabulary,
    merges: &MergeTable,
) -> Vec<EncodedToken> {
    sentence
        .tokens()
        .iter()
        .flat_map(|t| subword_ids(t.surface(), subword_vocab, merges))
        .map(EncodedToken::subword)
        .collect()
}

pub fn encode_sentence_factored_baseline(
    sentence: &AnnotatedSentence,
    subword_vocab: &Vocabulary,
    combination_vocab: &Vocabulary,
    merges: &MergeTable,
) -> Vec<FactoredToken> {
    let mut out = Vec::new();
    for t in sentence.tokens() {
        let combination_id = combination_vocab.id_or_unk(&canonical_combination(t.features()));
        let ids = subword_ids(t.surface(), subword_vocab, merges);
        let n = ids.len();
        out.extend(ids.into_iter().enumerate().map(|(i, subword_id)| FactoredToken {
            subword_id,
            combination_id,
            position: Position::of(i, n),
        }));
    }
    out
}

/// Encode one sentence under `scheme`. `ld` only matters for the sparse scheme.
pub fn encode_sentence(
    scheme: Scheme,
    sentence: &AnnotatedSentence,
    vocabs: &SourceVocabs,
    ld: &LinguisticDropoutConfig,
    epoch: u64,
    sentence_index: u64,
) -> Result<EncodedSentence> {
    Ok(match scheme {
        Scheme::Sparse => EncodedSentence::Tokens(encode_sentence_sparse(
            sentence,
            vocabs,
            ld,
            epoch,
            sentence_index,
        )?),
        Scheme::Bpe => {
            EncodedSentence::Tokens(encode_sentence_bpe(sentence, &vocabs.subword, &vocabs.merges))
        }
        Scheme::Factored => EncodedSentence::Factored(encode_sentence_factored_baseline(
            sentence,
            &vocabs.subword,
            &vocabs.combination,
            &vocabs.merges,
        )),
    })
}

/// Encode a corpus; sentences are processed in parallel, output order is kept.
pub fn encode_corpus(
    scheme: Scheme,
    corpus: &[AnnotatedSentence],
    vocabs: &SourceVocabs,
    ld: &LinguisticDropoutConfig,
    epoch: u64,
) -> Result<Vec<EncodedSentence>> {
    corpus
        .par_iter()
        .enumerate()
        .map(|(i, s)| encode_sentence(scheme, s, vocabs, ld, epoch, i as u64))
        .collect()
}

/// One sentence per `\n`-terminated line.
pub fn render_encoded_corpus(sentences: &[EncodedSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&s.to_string());
        out.push('\n');
    }
    out
}

pub fn parse_encoded_corpus(text: &str) -> Result<Vec<EncodedSentence>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            l.parse().map_err(|message| Error::Format {
                what: "encoded corpus",
                line: i + 1,
                message,
            })
        })
        .collect()
}

/// Check an encoded token against the vocabulary sizes.
pub fn validate_token(token: &EncodedToken, vocabs: &SourceVocabs) -> Result<()> {
    match token {
        EncodedToken::LemmaFactored {
            lemma_id,
            feature_ids,
        } => {
            if *lemma_id < NUM_RESERVED || *lemma_id >= vocabs.lemma.len() {
                return Err(Error::IdOutOfRange {
                    table: "lemma".into(),
                    id: *lemma_id,
                    size: vocabs.lemma.len(),
                });
            }
            for &f in feature_ids {
                if f < NUM_RESERVED || f >= vocabs.feature.len() {
                    return Err(Error::IdOutOfRange {
                        table: "feature".into(),
                        id: f,
                        size: vocabs.feature.len(),
                    });
                }
            }
            Ok(())
        }
        EncodedToken::Subword { subword_id } => {
            if *subword_id == 0 || *subword_id >= vocabs.subword.len() {
                return Err(Error::IdOutOfRange {
                    table: "subword".into(),
                    id: *subword_id,
                    size: vocabs.subword.len(),
                });
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bpe::{learn_bpe, word_frequencies};
    use crate::corpus_io::parse_annotated_corpus;
    use crate::vocab::*;

    fn setup(train: &str, merges: usize) -> (Vec<AnnotatedSentence>, SourceVocabs) {
        let corpus = parse_annotated_corpus(train).unwrap();
        let wc = word_frequencies(corpus.iter().flat_map(|s| s.tokens().iter().map(|t| t.surface())));
        let merges = learn_bpe(&wc, merges);
        let vocabs = SourceVocabs {
            lemma: build_lemma_vocab(&corpus, 1, None),
            feature: build_feature_vocab(&corpus),
            subword: build_subword_vocab(&corpus, &merges),
            combination: build_combination_vocab(&corpus),
            merges,
        };
        (corpus, vocabs)
    }

    const TRAIN: &str = "Wir|wir|1,Pl,Nom brauchen|brauchen|1,Pl Daten|Datum|Pl ,|_|_ keine|kein|_ Hilfe|Hilfe|Sg\n\
                         Wir|wir|1,Pl,Nom haben|haben|1,Pl Zeit|Zeit|Sg .|_|_\n";

    #[test]
    fn dropout_extremes() {
        for i in 0..1000 {
            assert!(!sample_linguistic_dropout(7, 1, i, i * 3, 0.0));
            assert!(sample_linguistic_dropout(7, 1, i, i * 3, 1.0));
        }
        assert!(LinguisticDropoutConfig::new(1.5, 0).is_err());
        assert!(LinguisticDropoutConfig::new(f64::NAN, 0).is_err());
    }

    #[test]
    fn wir_takes_the_lemma_path() {
        let (corpus, v) = setup(TRAIN, 50);
        let s = &parse_annotated_corpus("Wir|wir|1,Pl,Nom").unwrap()[0];
        let enc = encode_sentence_sparse(s, &v, &LinguisticDropoutConfig::disabled(), 0, 0).unwrap();
        let expected = EncodedToken::lemma_factored(
            v.lemma.id("wir").unwrap(),
            ["1", "Pl", "Nom"].iter().map(|f| v.feature.id(f).unwrap()).collect(),
        );
        assert_eq!(enc, vec![expected]);
        assert_eq!(corpus.len(), 2);
    }

    #[test]
    fn p_one_equals_bpe() {
        let (corpus, v) = setup(TRAIN, 50);
        let ld = LinguisticDropoutConfig::new(1.0, 3).unwrap();
        for (i, s) in corpus.iter().enumerate() {
            let sparse = encode_sentence_sparse(s, &v, &ld, 5, i as u64).unwrap();
            assert_eq!(sparse, encode_sentence_bpe(s, &v.subword, &v.merges));
        }
    }

    #[test]
    fn out_of_vocabulary_lemmas_fall_back_to_subwords() {
        let (_, v) = setup(TRAIN, 50);
        let s = &parse_annotated_corpus("Häuser|Haus|Pl Wegen|Weg|Pl,Dat 3|_|_").unwrap()[0];
        let sparse = encode_sentence_sparse(s, &v, &LinguisticDropoutConfig::disabled(), 0, 0).unwrap();
        assert_eq!(sparse, encode_sentence_bpe(s, &v.subword, &v.merges));
    }

    #[test]
    fn unknown_feature_is_an_error_only_on_the_lemma_path() {
        let (_, v) = setup(TRAIN, 50);
        let s = &parse_annotated_corpus("Wir|wir|1,Du").unwrap()[0];
        let err = encode_sentence_sparse(s, &v, &LinguisticDropoutConfig::disabled(), 0, 0);
        assert!(matches!(err, Err(Error::UnknownFeature(f)) if f == "Du"));
        let always = LinguisticDropoutConfig::new(1.0, 0).unwrap();
        assert!(encode_sentence_sparse(s, &v, &always, 0, 0).is_ok());
    }

    #[test]
    fn zero_feature_word_is_a_bare_lemma() {
        let (_, v) = setup(TRAIN, 50);
        let s = &parse_annotated_corpus("keine|kein|_").unwrap()[0];
        let enc = encode_sentence_sparse(s, &v, &LinguisticDropoutConfig::disabled(), 0, 0).unwrap();
        assert_eq!(enc, vec![EncodedToken::lemma_factored(v.lemma.id("kein").unwrap(), vec![])]);
        assert_eq!(enc[0].to_string(), format!("L:{}", v.lemma.id("kein").unwrap()));
    }

    #[test]
    fn factored_baseline_wir() {
        let (_, v) = setup(TRAIN, 50);
        let s = &parse_annotated_corpus("Wir|wir|1,Pl,Nom").unwrap()[0];
        let enc = encode_sentence_factored_baseline(s, &v.subword, &v.combination, &v.merges);
        assert_eq!(
            enc,
            vec![FactoredToken {
                subword_id: v.subword.id("Wir").unwrap(),
                combination_id: v.combination.id("1|Nom|Pl").unwrap(),
                position: Position::Whole,
            }]
        );
    }

    #[test]
    fn factored_positions_and_unseen_combination() {
        let (_, v) = setup(TRAIN, 0);
        let s = &parse_annotated_corpus("abc|a|Pl,Gen").unwrap()[0];
        let enc = encode_sentence_factored_baseline(s, &v.subword, &v.combination, &v.merges);
        let pos: Vec<Position> = enc.iter().map(|t| t.position).collect();
        assert_eq!(pos, [Position::Begin, Position::Middle, Position::End]);
        assert!(enc.iter().all(|t| t.combination_id == UNK_ID));
    }

    #[test]
    fn single_merged_word_is_one_id() {
        let (_, v) = setup(TRAIN, 200);
        let s = &parse_annotated_corpus("Wir|x|_").unwrap()[0];
        let enc = encode_sentence_bpe(s, &v.subword, &v.merges);
        assert_eq!(enc, vec![EncodedToken::subword(v.subword.id("Wir").unwrap())]);
    }

    #[test]
    fn bpe_ids_map_back_to_segmentation() {
        let (corpus, v) = setup(TRAIN, 10);
        for s in &corpus {
            let texts: Vec<String> = encode_sentence_bpe(s, &v.subword, &v.merges)
                .iter()
                .map(|t| match t {
                    EncodedToken::Subword { subword_id } => v.subword.token(*subword_id).unwrap().to_owned(),
                    _ => unreachable!(),
                })
                .collect();
            let expected: Vec<String> = s
                .tokens()
                .iter()
                .flat_map(|t| apply_bpe(t.surface(), &v.merges).into_subwords())
                .collect();
            assert_eq!(texts, expected);
        }
    }

    #[test]
    fn rendering_round_trips() {
        let line = "L:5+2,3,9 S:7 L:4 S:1";
        let s: EncodedSentence = line.parse().unwrap();
        assert_eq!(s.to_string(), line);
        let f = "F:3|2|W F:4|1|B F:5|1|E";
        let s: EncodedSentence = f.parse().unwrap();
        assert_eq!(s.to_string(), f);
        assert!("X:1".parse::<EncodedSentence>().is_err());
        assert!("F:1|2".parse::<EncodedSentence>().is_err());
    }

    #[test]
    fn feature_order_does_not_matter() {
        let (_, v) = setup(TRAIN, 10);
        let a = &parse_annotated_corpus("Wir|wir|1,Pl,Nom").unwrap()[0];
        let b = &parse_annotated_corpus("Wir|wir|Nom,1,Pl").unwrap()[0];
        let ld = LinguisticDropoutConfig::disabled();
        assert_eq!(
            encode_sentence_sparse(a, &v, &ld, 0, 0).unwrap(),
            encode_sentence_sparse(b, &v, &ld, 0, 0).unwrap()
        );
    }
}
