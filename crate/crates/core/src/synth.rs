//! Deterministic synthetic parallel corpora in an artificial agglutinative
//! language. Source words are a lemma followed by one suffix per feature
//! slot; the target renders each word as a lemma word plus one function word
//! per feature value.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus_io::{serialize_annotated_corpus, AnnotatedSentence, AnnotatedToken};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub train: usize,
    pub valid: usize,
    pub test_in: usize,
    pub test_out: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub lemma_count: usize,
    /// Number of values per feature slot.
    pub feature_slots: Vec<usize>,
    /// Fraction of the combination space seen in training.
    pub coverage: f64,
    /// Inclusive sentence length range in words.
    pub min_len: usize,
    pub max_len: usize,
    pub sizes: SplitSizes,
    /// Probability that a word is left unannotated (train, valid, test_in).
    pub unannotated_rate: f64,
    /// Same, for test_out.
    pub unannotated_rate_out: f64,
    pub seed: u64,
    /// Explicit source lemma forms; generated when absent.
    pub lemmas: Option<Vec<String>>,
    /// Feature value to source suffix; generated when absent.
    pub suffixes: Option<BTreeMap<String, String>>,
    /// Lemma or feature value to target word; generated when absent.
    pub target_words: Option<BTreeMap<String, String>>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            lemma_count: 20,
            feature_slots: vec![6, 4],
            coverage: 0.6,
            min_len: 2,
            max_len: 5,
            sizes: SplitSizes {
                train: 600,
                valid: 100,
                test_in: 200,
                test_out: 200,
            },
            unannotated_rate: 0.05,
            unannotated_rate_out: 0.2,
            seed: 42,
            lemmas: None,
            suffixes: None,
            target_words: None,
        }
    }
}

/// The resolved vocabulary of the artificial language.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Language {
    pub lemmas: Vec<String>,
    /// Feature value names per slot.
    pub slots: Vec<Vec<String>>,
    pub suffixes: BTreeMap<String, String>,
    pub target_words: BTreeMap<String, String>,
}

impl Language {
    pub fn surface(&self, lemma: &str, features: &[String]) -> String {
        let mut s = lemma.to_string();
        for f in features {
            s.push_str(&self.suffixes[f]);
        }
        s
    }

    pub fn render(&self, lemma: &str, features: &[String]) -> Vec<String> {
        std::iter::once(lemma)
            .chain(features.iter().map(String::as_str))
            .map(|k| self.target_words[k].clone())
            .collect()
    }

    /// Remove the suffixes of `features` from `surface`, last slot first.
    pub fn strip(&self, surface: &str, features: &[String]) -> Option<String> {
        let mut s = surface;
        for f in features.iter().rev() {
            s = s.strip_suffix(self.suffixes.get(f)?.as_str())?;
        }
        Some(s.to_string())
    }
}

const ONSETS: &[&str] = &["p", "t", "k", "b", "d", "g", "m", "n", "l", "r", "s", "v", "z", "f", "h"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
const TARGET_ONSETS: &[&str] = &["w", "y", "j", "q", "x", "c", "th", "sh", "ch", "ph"];

fn syllable(rng: &mut ChaCha8Rng, onsets: &[&str]) -> String {
    format!(
        "{}{}",
        onsets.choose(rng).expect("onsets"),
        VOWELS.choose(rng).expect("vowels")
    )
}

fn unique_words(
    rng: &mut ChaCha8Rng,
    n: usize,
    syllables: usize,
    onsets: &[&str],
    taken: &mut BTreeSet<String>,
) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(n);
    let mut tries = 0;
    while out.len() < n {
        tries += 1;
        if tries > 1000 * (n + 1) {
            return Err(Error::Infeasible(format!(
                "cannot generate {n} distinct {syllables}-syllable words"
            )));
        }
        let w: String = (0..syllables).map(|_| syllable(rng, onsets)).collect();
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    Ok(out)
}

fn slot_name(s: usize) -> char {
    (b'A' + (s % 26) as u8) as char
}

/// One sentence split: annotated source and tokenized target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthSplit {
    pub source: Vec<AnnotatedSentence>,
    pub target: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub language: Language,
    /// Combinations (one value index per slot) allowed in training.
    pub train_combinations: Vec<Vec<usize>>,
    pub train: SynthSplit,
    pub valid: SynthSplit,
    pub test_in: SynthSplit,
    pub test_out: SynthSplit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config: SynthConfig,
    pub language: Language,
    pub train_combinations: Vec<Vec<String>>,
    pub splits: BTreeMap<String, SplitCounts>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub sentences: usize,
    pub source_words: usize,
    pub target_words: usize,
}

pub const SPLIT_NAMES: [&str; 4] = ["train", "valid", "test_in", "test_out"];

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.lemma_count == 0 {
            return bad("lemma_count must be at least 1".into());
        }
        if self.feature_slots.is_empty() || self.feature_slots.contains(&0) {
            return bad("every feature slot needs at least one value".into());
        }
        if self.feature_slots.len() > 26 {
            return bad("at most 26 feature slots".into());
        }
        if !(self.coverage > 0.0 && self.coverage <= 1.0) {
            return bad(format!("coverage {} not in (0, 1]", self.coverage));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad(format!(
                "invalid sentence length range {}..={}",
                self.min_len, self.max_len
            ));
        }
        for r in [self.unannotated_rate, self.unannotated_rate_out] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("unannotated rate {r} not in [0, 1]"));
            }
        }
        if let Some(l) = &self.lemmas {
            if l.len() != self.lemma_count {
                return bad(format!("{} lemmas given, lemma_count is {}", l.len(), self.lemma_count));
            }
        }
        Ok(())
    }

    pub fn language(&self) -> Result<Language> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x4C41_4E47);
        let slots: Vec<Vec<String>> = self
            .feature_slots
            .iter()
            .enumerate()
            .map(|(s, &k)| (0..k).map(|j| format!("{}{j}", slot_name(s))).collect())
            .collect();
        let mut taken = BTreeSet::new();
        let lemmas = match &self.lemmas {
            Some(l) => l.clone(),
            None => unique_words(&mut rng, self.lemma_count, 2, ONSETS, &mut taken)?,
        };
        let all_values: Vec<&String> = slots.iter().flatten().collect();
        let suffixes = match &self.suffixes {
            Some(m) => m.clone(),
            None => {
                let mut suffix_taken = BTreeSet::new();
                let words = unique_words(&mut rng, all_values.len(), 1, ONSETS, &mut suffix_taken)?;
                all_values.iter().map(|v| v.to_string()).zip(words).collect()
            }
        };
        let target_words = match &self.target_words {
            Some(m) => m.clone(),
            None => {
                let mut t_taken = BTreeSet::new();
                let lw = unique_words(&mut rng, lemmas.len(), 2, TARGET_ONSETS, &mut t_taken)?;
                let fw = unique_words(&mut rng, all_values.len(), 1, TARGET_ONSETS, &mut t_taken)?;
                lemmas
                    .iter()
                    .cloned()
                    .zip(lw)
                    .chain(all_values.iter().map(|v| v.to_string()).zip(fw))
                    .collect()
            }
        };
        let lang = Language {
            lemmas,
            slots,
            suffixes,
            target_words,
        };
        check_language(&lang)?;
        Ok(lang)
    }
}

fn check_language(lang: &Language) -> Result<()> {
    let lemmas: BTreeSet<&String> = lang.lemmas.iter().collect();
    if lemmas.len() != lang.lemmas.len() {
        return Err(Error::Config("duplicate lemma forms".into()));
    }
    for l in &lang.lemmas {
        if l.is_empty() || l.contains(|c: char| c.is_whitespace() || c == '|' || c == '\\') {
            return Err(Error::Config(format!("invalid lemma form {l:?}")));
        }
        if !lang.target_words.contains_key(l) {
            return Err(Error::Config(format!("no target word for lemma {l:?}")));
        }
    }
    for slot in &lang.slots {
        let mut seen = BTreeSet::new();
        for v in slot {
            let suffix = lang
                .suffixes
                .get(v)
                .ok_or_else(|| Error::Config(format!("no suffix for feature {v}")))?;
            if suffix.is_empty() || suffix.contains(|c: char| c.is_whitespace() || c == '|' || c == '\\') {
                return Err(Error::Config(format!("invalid suffix {suffix:?} for {v}")));
            }
            if !seen.insert(suffix) {
                return Err(Error::Config(format!("suffix {suffix:?} used twice in one slot")));
            }
            if !lang.target_words.contains_key(v) {
                return Err(Error::Config(format!("no target word for feature {v}")));
            }
        }
    }
    let targets: BTreeSet<&String> = lang.target_words.values().collect();
    if targets.len() != lang.target_words.len() {
        return Err(Error::Config("target words collide".into()));
    }
    Ok(())
}

/// Every combination, as value indices, in lexicographic order.
fn all_combinations(slots: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &k in slots {
        out = out
            .into_iter()
            .flat_map(|c| {
                (0..k).map(move |j| {
                    let mut c = c.clone();
                    c.push(j);
                    c
                })
            })
            .collect();
    }
    out
}

/// A training coverage set of the requested size that contains every value
/// of every slot.
fn coverage_set(slots: &[usize], coverage: f64, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    let all = all_combinations(slots);
    let total = all.len();
    let widest = *slots.iter().max().expect("slots");
    let want = ((coverage * total as f64).round() as usize).max(widest);
    if want >= total {
        return Err(Error::Infeasible(format!(
            "training covers all {total} combinations, leaving none for test_out"
        )));
    }
    // A shuffled diagonal covers every value; random extra combinations fill
    // the rest.
    let perms: Vec<Vec<usize>> = slots
        .iter()
        .map(|&k| {
            let mut p: Vec<usize> = (0..k).collect();
            p.shuffle(rng);
            p
        })
        .collect();
    let mut chosen: BTreeSet<Vec<usize>> = (0..widest)
        .map(|i| slots.iter().zip(&perms).map(|(&k, p)| p[i % k]).collect())
        .collect();
    let mut rest: Vec<Vec<usize>> = all.into_iter().filter(|c| !chosen.contains(c)).collect();
    rest.shuffle(rng);
    for c in rest {
        if chosen.len() >= want {
            break;
        }
        chosen.insert(c);
    }
    Ok(chosen.into_iter().collect())
}

fn generate_split(
    cfg: &SynthConfig,
    lang: &Language,
    combos: &[Vec<usize>],
    n: usize,
    unannotated: f64,
    seed: u64,
) -> Result<SynthSplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut source = Vec::with_capacity(n);
    let mut target = Vec::with_capacity(n);
    for _ in 0..n {
        let len = rng.gen_range(cfg.min_len..=cfg.max_len);
        let mut tokens = Vec::with_capacity(len);
        let mut tgt = Vec::new();
        for _ in 0..len {
            let lemma = lang.lemmas.choose(&mut rng).expect("lemmas");
            let combo = combos.choose(&mut rng).expect("combinations");
            let features: Vec<String> = combo
                .iter()
                .enumerate()
                .map(|(s, &j)| lang.slots[s][j].clone())
                .collect();
            let surface = lang.surface(lemma, &features);
            tgt.extend(lang.render(lemma, &features));
            let token = if rng.gen_bool(unannotated) {
                AnnotatedToken::new(surface, None, Vec::new())?
            } else {
                AnnotatedToken::new(surface, Some(lemma.clone()), features)?
            };
            tokens.push(token);
        }
        source.push(AnnotatedSentence::new(tokens)?);
        target.push(tgt);
    }
    Ok(SynthSplit { source, target })
}

pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    let lang = config.language()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let train_combinations = coverage_set(&config.feature_slots, config.coverage, &mut rng)?;
    let seen: BTreeSet<&Vec<usize>> = train_combinations.iter().collect();
    let unseen: Vec<Vec<usize>> = all_combinations(&config.feature_slots)
        .into_iter()
        .filter(|c| !seen.contains(c))
        .collect();
    let split_seed = |i: u64| config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (i + 1);
    let s = config.sizes;
    let ua = config.unannotated_rate;
    Ok(SynthCorpus {
        train: generate_split(config, &lang, &train_combinations, s.train, ua, split_seed(0))?,
        valid: generate_split(config, &lang, &train_combinations, s.valid, ua, split_seed(1))?,
        test_in: generate_split(config, &lang, &train_combinations, s.test_in, ua, split_seed(2))?,
        test_out: generate_split(
            config,
            &lang,
            &unseen,
            s.test_out,
            config.unannotated_rate_out,
            split_seed(3),
        )?,
        config: config.clone(),
        language: lang,
        train_combinations,
    })
}

impl SynthCorpus {
    pub fn splits(&self) -> [(&'static str, &SynthSplit); 4] {
        [
            ("train", &self.train),
            ("valid", &self.valid),
            ("test_in", &self.test_in),
            ("test_out", &self.test_out),
        ]
    }

    pub fn manifest(&self) -> SynthManifest {
        SynthManifest {
            config: self.config.clone(),
            language: self.language.clone(),
            train_combinations: self
                .train_combinations
                .iter()
                .map(|c| {
                    c.iter()
                        .enumerate()
                        .map(|(s, &j)| self.language.slots[s][j].clone())
                        .collect()
                })
                .collect(),
            splits: self
                .splits()
                .iter()
                .map(|(name, split)| {
                    (
                        name.to_string(),
                        SplitCounts {
                            sentences: split.source.len(),
                            source_words: split.source.iter().map(|s| s.len()).sum(),
                            target_words: split.target.iter().map(Vec::len).sum(),
                        },
                    )
                })
                .collect(),
        }
    }

    /// Write `<split>.src` (annotated), `<split>.tgt` (plain) and
    /// `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, split) in self.splits() {
            let p = dir.join(format!("{name}.src"));
            std::fs::write(&p, serialize_annotated_corpus(&split.source)).map_err(|e| Error::io(&p, e))?;
            let p = dir.join(format!("{name}.tgt"));
            let mut text = String::new();
            for s in &split.target {
                text.push_str(&s.join(" "));
                text.push('\n');
            }
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        let p = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&self.manifest())?;
        std::fs::write(&p, json + "\n").map_err(|e| Error::io(&p, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_space_is_infeasible() {
        let cfg = SynthConfig {
            lemma_count: 1,
            feature_slots: vec![1],
            ..SynthConfig::default()
        };
        assert!(matches!(generate(&cfg), Err(Error::Infeasible(_))));
    }

    #[test]
    fn full_coverage_is_infeasible() {
        let cfg = SynthConfig {
            coverage: 1.0,
            ..SynthConfig::default()
        };
        assert!(matches!(generate(&cfg), Err(Error::Infeasible(_))));
    }

    #[test]
    fn default_language_is_consistent() {
        let lang = SynthConfig::default().language().unwrap();
        assert_eq!(lang.lemmas.len(), 20);
        assert_eq!(lang.slots.iter().map(Vec::len).collect::<Vec<_>>(), vec![6, 4]);
        let f = vec!["A3".to_string(), "B1".to_string()];
        let w = lang.surface(&lang.lemmas[4], &f);
        assert_eq!(lang.strip(&w, &f).unwrap(), lang.lemmas[4]);
        assert_eq!(lang.render(&lang.lemmas[4], &f).len(), 3);
    }

    #[test]
    fn coverage_set_covers_every_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let set = coverage_set(&[6, 4], 0.6, &mut rng).unwrap();
        assert_eq!(set.len(), 14);
        for (s, k) in [6usize, 4].into_iter().enumerate() {
            let vals: BTreeSet<usize> = set.iter().map(|c| c[s]).collect();
            assert_eq!(vals.len(), k);
        }
    }
}
