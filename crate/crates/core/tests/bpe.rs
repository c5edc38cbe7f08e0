mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sfnmt::bpe::*;

fn owned(table: &MergeTable) -> Vec<(String, String)> {
    table.merges().to_vec()
}

#[test]
fn low_lower_matches_oracle() {
    let counts: BTreeMap<String, u64> = [("low".to_string(), 5), ("lower".to_string(), 2)].into();
    let table = learn_bpe(&counts, 2);
    let oracle = common::oracle_learn(&counts, 2);
    assert_eq!(owned(&table), oracle);
    assert_eq!(
        apply_bpe("lowest", &table).subwords(),
        common::oracle_apply("lowest", &oracle).as_slice()
    );
}

#[test]
fn micro_corpora_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..200 {
        let counts = common::micro_corpus(&mut rng, 30);
        let table = learn_bpe(&counts, 1000);
        let oracle = common::oracle_learn(&counts, 1000);
        assert_eq!(owned(&table), oracle, "corpus {counts:?}");
        for w in counts.keys() {
            assert_eq!(apply_bpe(w, &table).subwords(), common::oracle_apply(w, &oracle).as_slice());
        }
    }
}

#[test]
fn learning_is_independent_of_thread_count() {
    let corpus = common::random_corpus(11, 300, 30, 8, 3);
    let counts = word_frequencies(corpus.iter().flat_map(|s| s.tokens().iter().map(|t| t.surface())));
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| learn_bpe(&counts, 200))
    };
    assert_eq!(run(1), run(4));
}

fn word() -> impl Strategy<Value = String> {
    "[a-c]{1,10}"
}

proptest! {
    #[test]
    fn reconstruction(words in proptest::collection::vec(word(), 1..20), probe in word(), n in 0usize..40) {
        let table = learn_bpe(&word_frequencies(words.iter().map(String::as_str)), n);
        for w in words.iter().chain(std::iter::once(&probe)) {
            let seg = apply_bpe(w, &table);
            prop_assert_eq!(seg.reconstruct(), w.clone());
            prop_assert_eq!(join_subwords(seg.subwords(), table.marker()), vec![w.clone()]);
        }
    }

    #[test]
    fn monotone_refinement(words in proptest::collection::vec(word(), 1..20), probe in word()) {
        let table = learn_bpe(&word_frequencies(words.iter().map(String::as_str)), 50);
        let mut prev = usize::MAX;
        for k in 0..=table.len() {
            let n = apply_bpe(&probe, &table.prefix(k)).len();
            prop_assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn table_file_round_trip(words in proptest::collection::vec("[a \\\\]{1,6}", 1..10)) {
        let table = learn_bpe(&word_frequencies(words.iter().map(String::as_str)), 20);
        prop_assert_eq!(MergeTable::from_text(&table.to_text()).unwrap(), table);
    }
}
