mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use sfnmt::bpe::{apply_bpe, learn_bpe, word_frequencies};
use sfnmt::synth::{generate, SynthConfig};
use sfnmt::vocab::*;

fn as_map(v: &Vocabulary) -> BTreeMap<String, u64> {
    v.entries().iter().cloned().collect()
}

fn synth_1k() -> Vec<sfnmt::corpus_io::AnnotatedSentence> {
    let mut cfg = SynthConfig::default();
    cfg.sizes.train = 1000;
    generate(&cfg).unwrap().train.source
}

#[test]
fn synthetic_counts_match_recount() {
    let corpus = synth_1k();
    assert_eq!(corpus.len(), 1000);
    assert_eq!(as_map(&build_lemma_vocab(&corpus, 1, None)), common::recount_lemmas(&corpus));
    assert_eq!(as_map(&build_feature_vocab(&corpus)), common::recount_features(&corpus));
    assert_eq!(
        as_map(&build_combination_vocab(&corpus)),
        common::recount_combinations(&corpus, true)
    );

    let merges = learn_bpe(
        &word_frequencies(corpus.iter().flat_map(|s| s.tokens().iter().map(|t| t.surface()))),
        40,
    );
    let mut subwords = BTreeMap::new();
    for s in &corpus {
        for t in s.tokens() {
            for sw in apply_bpe(t.surface(), &merges).into_subwords() {
                *subwords.entry(sw).or_insert(0u64) += 1;
            }
        }
    }
    assert_eq!(as_map(&build_subword_vocab(&corpus, &merges)), subwords);
}

#[test]
fn min_freq_filters_the_recount() {
    let corpus = synth_1k();
    let mut expect = common::recount_lemmas(&corpus);
    let cutoff = *expect.values().min().unwrap() + 1;
    expect.retain(|_, c| *c >= cutoff);
    assert_eq!(as_map(&build_lemma_vocab(&corpus, cutoff, None)), expect);
}

#[test]
fn ids_follow_count_then_token_order() {
    let corpus = synth_1k();
    let v = build_feature_vocab(&corpus);
    let e = v.entries();
    for w in e.windows(2) {
        assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
    }
    for (i, (tok, _)) in e.iter().enumerate() {
        assert_eq!(v.id(tok), Some(i + 2));
        assert_eq!(v.token(i + 2), Some(tok.as_str()));
    }
    assert_eq!(v.id_or_unk("nope"), 1);
}

#[test]
fn rebuilt_vocabularies_are_byte_identical() {
    let corpus = synth_1k();
    assert_eq!(build_lemma_vocab(&corpus, 2, None).to_text(), build_lemma_vocab(&corpus, 2, None).to_text());
    assert_eq!(build_combination_vocab(&corpus).to_text(), build_combination_vocab(&corpus).to_text());
}

#[test]
fn save_and_load() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.vocab");
    let v = build_feature_vocab(&synth_1k());
    save_vocab(&v, &p).unwrap();
    assert_eq!(load_vocab(&p).unwrap(), v);
}

proptest! {
    #[test]
    fn feature_count_is_sum_over_combinations(corpus in common::generated_corpus()) {
        let features = build_feature_vocab(&corpus);
        let combos = build_combination_vocab(&corpus);
        for (f, count) in features.entries() {
            let sum: u64 = combos
                .entries()
                .iter()
                .filter(|(c, _)| c != "_" && c.split('|').any(|x| x == f))
                .map(|(_, n)| n)
                .sum();
            prop_assert_eq!(*count, sum);
        }
    }

    // Every feature appears in multi-feature combinations with at least two
    // distinct partners, which forces more combinations than features.
    #[test]
    fn combinations_outnumber_features_under_the_premise(n in 3usize..8, reps in 1usize..4) {
        let mut tokens = Vec::new();
        for i in 0..n {
            for d in 1..=2 {
                let j = (i + d) % n;
                for _ in 0..reps {
                    tokens.push(sfnmt::corpus_io::AnnotatedToken::new(
                        format!("w{i}{j}"),
                        Some("x".into()),
                        vec![format!("F{i}"), format!("F{j}")],
                    ).unwrap());
                }
            }
        }
        let corpus = vec![sfnmt::corpus_io::AnnotatedSentence::new(tokens).unwrap()];
        prop_assert!(build_combination_vocab(&corpus).len() >= build_feature_vocab(&corpus).len());
    }
}
