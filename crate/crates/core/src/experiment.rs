//! End-to-end pipeline on a synthetic corpus: vocabularies, encoding,
//! training and evaluation of the four source representations.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bpe::{apply_bpe, learn_bpe, word_frequencies, MergeTable};
use crate::corpus_io::AnnotatedSentence;
use crate::encoding::{
    encode_corpus, LinguisticDropoutConfig, PreparedSentence, Scheme, SourceVocabs, DEFAULT_LD_P,
};
use crate::error::Result;
use crate::neural::train::{EpochStats, TrainSources, Trainer, TrainingSet};
use crate::neural::{greedy_decode, sequence_accuracy, token_accuracy, Model, ModelConfig, VocabSizes};
use crate::synth::{generate, SynthConfig, SynthCorpus};
use crate::vocab::{
    build_combination_vocab, build_feature_vocab, build_lemma_vocab, build_subword_vocab,
    subword_vocab_from_words, Vocabulary, DEFAULT_LEMMA_MIN_FREQ,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabConfig {
    /// Source-side merge operations.
    pub merges: usize,
    /// Target-side merge operations.
    pub target_merges: usize,
    pub lemma_min_freq: u64,
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self {
            merges: 60,
            target_merges: 1000,
            lemma_min_freq: DEFAULT_LEMMA_MIN_FREQ,
        }
    }
}

/// Everything needed to encode both sides of a corpus.
#[derive(Clone, Debug)]
pub struct Vocabs {
    pub source: SourceVocabs,
    pub target_merges: MergeTable,
    pub target: Vocabulary,
}

impl Vocabs {
    pub fn build(source: &[AnnotatedSentence], target: &[Vec<String>], cfg: &VocabConfig) -> Self {
        let merges = learn_bpe(
            &word_frequencies(source.iter().flat_map(|s| s.tokens().iter().map(|t| t.surface()))),
            cfg.merges,
        );
        let target_merges = learn_bpe(
            &word_frequencies(target.iter().flatten().map(String::as_str)),
            cfg.target_merges,
        );
        let target_vocab =
            subword_vocab_from_words(target.iter().flatten().map(String::as_str), &target_merges, 1);
        Self {
            source: SourceVocabs {
                lemma: build_lemma_vocab(source, cfg.lemma_min_freq, None),
                feature: build_feature_vocab(source),
                subword: build_subword_vocab(source, &merges),
                combination: build_combination_vocab(source),
                merges,
            },
            target_merges,
            target: target_vocab,
        }
    }

    pub fn sizes(&self) -> VocabSizes {
        VocabSizes::new(&self.source, &self.target)
    }

    pub fn encode_target(&self, sentence: &[String]) -> Vec<usize> {
        sentence
            .iter()
            .flat_map(|w| apply_bpe(w, &self.target_merges).into_subwords())
            .map(|s| self.target.id_or_unk(&s))
            .collect()
    }

    pub fn encode_targets(&self, sentences: &[Vec<String>]) -> Vec<Vec<usize>> {
        sentences.iter().map(|s| self.encode_target(s)).collect()
    }
}

/// The source representations compared in the domain-shift experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum System {
    /// Sparse encoding with linguistic dropout.
    SparseLd,
    /// Sparse encoding without dropout.
    Sparse,
    Factored,
    Bpe,
}

impl System {
    pub const ALL: [System; 4] = [System::SparseLd, System::Sparse, System::Factored, System::Bpe];

    pub fn scheme(self) -> Scheme {
        match self {
            System::SparseLd | System::Sparse => Scheme::Sparse,
            System::Factored => Scheme::Factored,
            System::Bpe => Scheme::Bpe,
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            System::SparseLd => "sparse+ld",
            System::Sparse => "sparse",
            System::Factored => "factored",
            System::Bpe => "bpe",
        })
    }
}

/// Training data for `scheme`. Only the sparse scheme uses `ld`.
pub fn training_set(
    scheme: Scheme,
    source: &[AnnotatedSentence],
    targets: Vec<Vec<usize>>,
    vocabs: &SourceVocabs,
    ld: LinguisticDropoutConfig,
) -> Result<TrainingSet> {
    let sources = match scheme {
        Scheme::Sparse => TrainSources::Sparse {
            prepared: source.iter().map(|s| PreparedSentence::new(s, vocabs)).collect(),
            ld,
        },
        other => TrainSources::Fixed(encode_corpus(
            other,
            source,
            vocabs,
            &LinguisticDropoutConfig::disabled(),
            0,
        )?),
    };
    TrainingSet::new(sources, targets)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub token_acc: f64,
    pub seq_acc: f64,
}

/// Greedy-decode `source` (lemma path always taken) and score it.
pub fn evaluate(
    model: &Model,
    source: &[AnnotatedSentence],
    targets: &[Vec<usize>],
    vocabs: &SourceVocabs,
) -> Result<Scores> {
    let encoded = encode_corpus(
        model.scheme(),
        source,
        vocabs,
        &LinguisticDropoutConfig::disabled(),
        0,
    )?;
    let hyps = greedy_decode(model, &encoded)?;
    Ok(Scores {
        token_acc: token_accuracy(&hyps, targets),
        seq_acc: sequence_accuracy(&hyps, targets),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainShiftConfig {
    pub synth: SynthConfig,
    pub vocab: VocabConfig,
    pub model: ModelConfig,
    pub epochs: u64,
    pub ld_p: f64,
}

impl Default for DomainShiftConfig {
    fn default() -> Self {
        let mut model = ModelConfig::desk();
        model.batch_tokens = 256;
        model.lr = 3e-3;
        Self {
            synth: SynthConfig::default(),
            vocab: VocabConfig::default(),
            model,
            epochs: 80,
            ld_p: DEFAULT_LD_P,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub system: System,
    pub seed: u64,
    pub test_in: Scores,
    pub test_out: Scores,
    pub final_loss: f64,
    pub seconds: f64,
}

/// Shared state of one domain-shift experiment.
pub struct DomainShift {
    pub config: DomainShiftConfig,
    pub corpus: SynthCorpus,
    pub vocabs: Vocabs,
    train_targets: Vec<Vec<usize>>,
    test_in_targets: Vec<Vec<usize>>,
    test_out_targets: Vec<Vec<usize>>,
}

impl DomainShift {
    pub fn new(config: DomainShiftConfig) -> Result<Self> {
        let corpus = generate(&config.synth)?;
        let vocabs = Vocabs::build(&corpus.train.source, &corpus.train.target, &config.vocab);
        Ok(Self {
            train_targets: vocabs.encode_targets(&corpus.train.target),
            test_in_targets: vocabs.encode_targets(&corpus.test_in.target),
            test_out_targets: vocabs.encode_targets(&corpus.test_out.target),
            config,
            corpus,
            vocabs,
        })
    }

    /// Train one system with `seed` driving initialization, batching,
    /// dropout masks and linguistic dropout.
    pub fn train(&self, system: System, seed: u64) -> Result<(Model, Vec<EpochStats>)> {
        let mut mc = self.config.model.clone();
        mc.seed = seed;
        let model = Model::new(mc, system.scheme(), self.vocabs.sizes())?;
        let p = if system == System::SparseLd { self.config.ld_p } else { 0.0 };
        let ld = LinguisticDropoutConfig::new(p, seed.wrapping_add(0x1D))?;
        let set = training_set(
            system.scheme(),
            &self.corpus.train.source,
            self.train_targets.clone(),
            &self.vocabs.source,
            ld,
        )?;
        let mut trainer = Trainer::new(model);
        let log = trainer.train(&set, self.config.epochs, |_, _| true)?;
        Ok((trainer.model, log))
    }

    pub fn run(&self, system: System, seed: u64) -> Result<RunResult> {
        let start = std::time::Instant::now();
        let (model, log) = self.train(system, seed)?;
        let test_in = evaluate(&model, &self.corpus.test_in.source, &self.test_in_targets, &self.vocabs.source)?;
        let test_out = evaluate(
            &model,
            &self.corpus.test_out.source,
            &self.test_out_targets,
            &self.vocabs.source,
        )?;
        Ok(RunResult {
            system,
            seed,
            test_in,
            test_out,
            final_loss: log.last().map(|e| e.loss).unwrap_or(f64::NAN),
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}

/// Outcome of the ordering checks for one seed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderingCheck {
    pub seed: u64,
    /// test_out: sparse+LD minus factored, in accuracy points.
    pub ld_minus_factored_out: f64,
    /// test_out: sparse+LD minus sparse without dropout.
    pub ld_minus_sparse_out: f64,
    /// test_in: |sparse+LD minus BPE|.
    pub ld_vs_bpe_in: f64,
    pub holds: bool,
}

pub fn check_ordering(seed: u64, results: &BTreeMap<System, RunResult>) -> OrderingCheck {
    let out = |s: System| 100.0 * results[&s].test_out.token_acc;
    let inn = |s: System| 100.0 * results[&s].test_in.token_acc;
    let a = out(System::SparseLd) - out(System::Factored);
    let b = out(System::SparseLd) - out(System::Sparse);
    let c = (inn(System::SparseLd) - inn(System::Bpe)).abs();
    OrderingCheck {
        seed,
        ld_minus_factored_out: a,
        ld_minus_sparse_out: b,
        ld_vs_bpe_in: c,
        holds: a >= 5.0 && b >= 0.0 && c <= 2.0,
    }
}
