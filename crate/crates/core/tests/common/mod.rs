//! Independent reference implementations and generators shared by the
//! integration and acceptance tests. Nothing here calls into the crate's
//! algorithms; only its data types.
#![allow(dead_code)]

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfnmt::corpus_io::{AnnotatedSentence, AnnotatedToken};

pub const MARKER: &str = "@@";

/// Characters of a word, all but the last carrying the marker.
fn chars_marked(word: &str) -> Vec<String> {
    let cs: Vec<char> = word.chars().collect();
    cs.iter()
        .enumerate()
        .map(|(i, c)| {
            if i + 1 < cs.len() {
                format!("{c}{MARKER}")
            } else {
                c.to_string()
            }
        })
        .collect()
}

fn join(left: &str, right: &str) -> String {
    format!("{}{}", &left[..left.len() - MARKER.len()], right)
}

fn merge_everywhere(symbols: &[String], left: &str, right: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
            out.push(join(left, right));
            i += 2;
        } else {
            out.push(symbols[i].clone());
            i += 1;
        }
    }
    out
}

/// Exhaustive BPE learner: recounts every adjacent pair of every word at
/// every step. Ties go to the lexicographically smallest (left, right).
pub fn oracle_learn(counts: &BTreeMap<String, u64>, num_merges: usize) -> Vec<(String, String)> {
    let mut words: Vec<(Vec<String>, u64)> =
        counts.iter().map(|(w, &c)| (chars_marked(w), c)).collect();
    let mut merges = Vec::new();
    while merges.len() < num_merges {
        let mut pairs: BTreeMap<(String, String), u64> = BTreeMap::new();
        for (syms, c) in &words {
            for w in syms.windows(2) {
                *pairs.entry((w[0].clone(), w[1].clone())).or_default() += c;
            }
        }
        let mut best: Option<(&(String, String), u64)> = None;
        for (p, &c) in &pairs {
            // BTreeMap iterates in ascending key order, so strict > keeps the
            // smallest pair among equals.
            if best.map_or(true, |(_, bc)| c > bc) {
                best = Some((p, c));
            }
        }
        let Some((pair, c)) = best else { break };
        if c < 2 {
            break;
        }
        let pair = pair.clone();
        for (syms, _) in words.iter_mut() {
            *syms = merge_everywhere(syms, &pair.0, &pair.1);
        }
        merges.push(pair);
    }
    merges
}

/// Naive segmentation: scan all adjacent pairs, apply the applicable merge
/// with the best priority, repeat.
pub fn oracle_apply(word: &str, merges: &[(String, String)]) -> Vec<String> {
    let mut syms = chars_marked(word);
    loop {
        let mut best: Option<usize> = None;
        for w in syms.windows(2) {
            if let Some(r) = merges.iter().position(|(l, r)| *l == w[0] && *r == w[1]) {
                best = Some(best.map_or(r, |b| b.min(r)));
            }
        }
        match best {
            Some(r) => syms = merge_everywhere(&syms, &merges[r].0, &merges[r].1),
            None => return syms,
        }
    }
}

/// Standalone copy of the counter-based dropout sampler.
pub fn oracle_uniform(seed: u64, epoch: u64, sentence: u64, word: u64) -> f64 {
    fn mix(x: u64) -> u64 {
        let mut z = x.wrapping_add(0x9E3779B97F4A7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }
    let h = mix(mix(mix(mix(seed) ^ epoch) ^ sentence) ^ word);
    (h >> 11) as f64 / (1u64 << 53) as f64
}

pub fn oracle_drops(seed: u64, epoch: u64, sentence: u64, word: u64, p: f64) -> bool {
    oracle_uniform(seed, epoch, sentence, word) < p
}

/// Sorted `|`-joined feature set, `_` when empty.
pub fn oracle_combination(features: &[String]) -> String {
    if features.is_empty() {
        return "_".into();
    }
    let mut f = features.to_vec();
    f.sort();
    f.join("|")
}

pub fn recount_lemmas(corpus: &[AnnotatedSentence]) -> BTreeMap<String, u64> {
    let mut m = BTreeMap::new();
    for s in corpus {
        for t in s.tokens() {
            if let Some(l) = t.lemma() {
                *m.entry(l.to_string()).or_insert(0) += 1;
            }
        }
    }
    m
}

pub fn recount_features(corpus: &[AnnotatedSentence]) -> BTreeMap<String, u64> {
    let mut m = BTreeMap::new();
    for s in corpus {
        for t in s.tokens() {
            for f in t.features() {
                *m.entry(f.clone()).or_insert(0) += 1;
            }
        }
    }
    m
}

/// Combination counts; `with_empty` includes featureless words as `_`.
pub fn recount_combinations(corpus: &[AnnotatedSentence], with_empty: bool) -> BTreeMap<String, u64> {
    let mut m = BTreeMap::new();
    for s in corpus {
        for t in s.tokens() {
            if t.features().is_empty() && !with_empty {
                continue;
            }
            *m.entry(oracle_combination(t.features())).or_insert(0) += 1;
        }
    }
    m
}

/// Random annotated corpus over a small closed lexicon: `lemmas` lemma
/// forms, `features` feature values, up to `max_feats` features per word.
pub fn random_corpus(
    seed: u64,
    sentences: usize,
    lemmas: usize,
    features: usize,
    max_feats: usize,
) -> Vec<AnnotatedSentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..sentences)
        .map(|_| {
            let n = rng.gen_range(1..=6);
            let tokens = (0..n)
                .map(|_| {
                    if rng.gen_bool(0.1) {
                        return AnnotatedToken::plain(format!("{}", rng.gen_range(0..100))).unwrap();
                    }
                    let lemma = format!("l{}", rng.gen_range(0..lemmas));
                    let k = rng.gen_range(0..=max_feats.min(features));
                    let mut fs: Vec<String> = Vec::new();
                    while fs.len() < k {
                        let f = format!("F{}", rng.gen_range(0..features));
                        if !fs.contains(&f) {
                            fs.push(f);
                        }
                    }
                    let surface = format!("{lemma}{}", fs.concat().to_lowercase());
                    AnnotatedToken::new(surface, Some(lemma), fs).unwrap()
                })
                .collect();
            AnnotatedSentence::new(tokens).unwrap()
        })
        .collect()
}

/// Text drawn from an alphabet that includes every reserved character.
pub fn field_text() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        prop_oneof![
            4 => proptest::char::range('a', 'e'),
            1 => Just('|'),
            1 => Just(','),
            1 => Just(' '),
            1 => Just('\\'),
            1 => Just('_'),
            1 => Just('ü'),
        ],
        1..6,
    )
    .prop_map(|cs| cs.into_iter().collect())
    .prop_filter("placeholder", |s: &String| s != "_")
}

pub fn token_strategy() -> impl Strategy<Value = AnnotatedToken> {
    (
        field_text(),
        proptest::option::of(field_text()),
        proptest::collection::btree_set(field_text(), 0..4),
    )
        .prop_map(|(surface, lemma, feats)| {
            let feats = if lemma.is_some() { feats.into_iter().collect() } else { Vec::new() };
            AnnotatedToken::new(surface, lemma, feats).unwrap()
        })
}

pub fn corpus_strategy(max_sentences: usize) -> impl Strategy<Value = Vec<AnnotatedSentence>> {
    proptest::collection::vec(
        proptest::collection::vec(token_strategy(), 1..6)
            .prop_map(|t| AnnotatedSentence::new(t).unwrap()),
        0..max_sentences,
    )
}

/// Seeds for `random_corpus`, as a strategy.
pub fn generated_corpus() -> impl Strategy<Value = Vec<AnnotatedSentence>> {
    (any::<u64>(), 1usize..40, 1usize..8, 1usize..10, 0usize..5)
        .prop_map(|(seed, n, l, f, k)| random_corpus(seed, n, l, f, k))
}

/// Random micro-corpus for BPE: at most `max_types` word types over a small
/// alphabet so that repeated and overlapping pairs are common.
pub fn micro_corpus(rng: &mut ChaCha8Rng, max_types: usize) -> BTreeMap<String, u64> {
    let alphabet: Vec<char> = "abcde".chars().take(rng.gen_range(2..=5)).collect();
    let types = rng.gen_range(1..=max_types);
    let mut m = BTreeMap::new();
    while m.len() < types {
        let len = rng.gen_range(1..=8);
        let w: String = (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect();
        m.insert(w, rng.gen_range(1..=10));
    }
    m
}
