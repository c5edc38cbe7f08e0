//! Command-line front end. `dispatch` returns the process exit code: 0 on
//! success, 1 on usage or configuration errors, 2 on data errors.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{export_report, sparsity_report};
use crate::bpe::{join_subwords, learn_bpe_with_marker, word_frequencies, MergeTable};
use crate::config::RunConfig;
use crate::corpus_io::{read_annotated_corpus, read_plain_corpus, AnnotatedSentence};
use crate::encoding::{encode_corpus, render_encoded_corpus, LinguisticDropoutConfig, Scheme, SourceVocabs};
use crate::error::{Error, Result};
use crate::experiment::{evaluate, training_set, Vocabs};
use crate::neural::checkpoint;
use crate::neural::gradcheck::{grad_check, GradCheckOptions};
use crate::neural::train::{write_log, Trainer};
use crate::neural::{greedy_decode, Example, Model, Preset};
use crate::synth::generate;
use crate::vocab::{
    build_combination_vocab, build_feature_vocab, build_lemma_vocab, build_subword_vocab_with,
    subword_vocab_from_words, Vocabulary,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sfnmt", version, about = "Sparsely factored source encoding for NMT")]
pub struct Cli {
    /// JSON run configuration; flags override its values. Falls back to the
    /// SFNMT_CONFIG environment variable.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Worker threads; 1 gives bitwise-reproducible outputs.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a BPE merge table.
    LearnBpe(LearnBpeArgs),
    /// Build lemma, feature, subword, combination and target vocabularies.
    BuildVocabs(BuildVocabsArgs),
    /// Encode an annotated corpus under one scheme.
    Encode(EncodeArgs),
    /// Feature and combination frequency statistics as CSV.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic parallel corpus.
    Synth(SynthArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Greedy-decode a corpus with a trained model.
    Decode(DecodeArgs),
    /// Compare analytic gradients with finite differences.
    GradCheck(GradCheckArgs),
}

#[derive(Debug, Args)]
pub struct SchemeArgs {
    /// Source encoding scheme.
    #[arg(long, value_parser = ["sparse", "bpe", "factored"])]
    pub scheme: Option<String>,
    /// Linguistic dropout probability (sparse scheme; default 0.25).
    #[arg(long, value_name = "P")]
    pub ld_p: Option<f64>,
    /// Seed for every random choice.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct LearnBpeArgs {
    /// Training corpus (annotated format unless --plain).
    #[arg(long)]
    pub input: PathBuf,
    /// Read --input as plain whitespace-tokenized text.
    #[arg(long)]
    pub plain: bool,
    /// Learn one table over --input and this plain target text.
    #[arg(long, requires = "target")]
    pub joint: bool,
    #[arg(long, requires = "joint")]
    pub target: Option<PathBuf>,
    /// Number of merge operations.
    #[arg(long)]
    pub merges: Option<usize>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildVocabsArgs {
    /// Annotated source corpus.
    #[arg(long)]
    pub input: PathBuf,
    /// Plain target corpus.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Source merge table.
    #[arg(long)]
    pub bpe: PathBuf,
    /// Target merge table; defaults to the source table.
    #[arg(long)]
    pub target_bpe: Option<PathBuf>,
    /// Minimum lemma frequency.
    #[arg(long)]
    pub min_freq: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Directory written by build-vocabs.
    #[arg(long)]
    pub vocabs: PathBuf,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// Epoch number fed to the dropout sampler.
    #[arg(long)]
    pub epoch: Option<u64>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of the combination space used in training.
    #[arg(long)]
    pub coverage: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Architecture preset.
    #[arg(long, value_parser = ["desk", "paper-de-en", "paper-eu-es"])]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub vocabs: PathBuf,
    /// Annotated training source.
    #[arg(long)]
    pub source: PathBuf,
    /// Plain training target.
    #[arg(long)]
    pub target: PathBuf,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub epochs: Option<u64>,
    /// Continue from a checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocabs: PathBuf,
    /// Annotated source to translate.
    #[arg(long)]
    pub input: PathBuf,
    /// Plain reference; enables accuracy scores.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long)]
    pub vocabs: PathBuf,
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Check this checkpoint instead of a fresh model.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Number of coordinates.
    #[arg(long)]
    pub coordinates: Option<usize>,
    /// Report (TSV).
    #[arg(long)]
    pub output: PathBuf,
}

/// Vocabulary directory file names.
pub mod files {
    pub const LEMMA: &str = "lemma.vocab";
    pub const FEATURE: &str = "feature.vocab";
    pub const SUBWORD: &str = "subword.vocab";
    pub const COMBINATION: &str = "combination.vocab";
    pub const TARGET: &str = "target.vocab";
    pub const SOURCE_BPE: &str = "source.bpe";
    pub const TARGET_BPE: &str = "target.bpe";
    pub const CONFIG: &str = "config.json";
    pub const CHECKPOINT: &str = "model.ckpt";
    pub const LOG: &str = "train.log";
}

pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            }
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    let mut cfg = match RunConfig::resolve_path(cli.config.as_deref()) {
        Some(p) => RunConfig::load(&p)?,
        None => RunConfig::default(),
    };
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::LearnBpe(a) => learn_bpe_cmd(cfg, a),
        Command::BuildVocabs(a) => build_vocabs_cmd(cfg, a),
        Command::Encode(a) => encode_cmd(cfg, a),
        Command::Analyze(a) => analyze_cmd(cfg, a),
        Command::Synth(a) => synth_cmd(cfg, a),
        Command::Train(a) => train_cmd(cfg, a),
        Command::Decode(a) => decode_cmd(cfg, a),
        Command::GradCheck(a) => grad_check_cmd(cfg, a),
    })
}

fn apply_scheme(cfg: &mut RunConfig, a: &SchemeArgs) -> Result<()> {
    if let Some(s) = &a.scheme {
        cfg.encoding.scheme = s.parse::<Scheme>().map_err(Error::Config)?;
    }
    if let Some(p) = a.ld_p {
        cfg.encoding.ld_p = Some(p);
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    Ok(())
}

fn apply_model(cfg: &mut RunConfig, a: &ModelArgs) -> Result<()> {
    if let Some(p) = &a.preset {
        cfg.train.preset = p.parse::<Preset>().map_err(Error::Config)?;
        cfg.train.model = None;
    }
    Ok(())
}

fn sidecar(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".config.json");
    output.with_file_name(name)
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn make_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn learn_bpe_cmd(mut cfg: RunConfig, a: LearnBpeArgs) -> Result<i32> {
    if let Some(m) = a.merges {
        cfg.bpe.merges = m;
    }
    if a.joint {
        cfg.bpe.joint = true;
    }
    let mut words: Vec<String> = if a.plain {
        read_plain_corpus(&a.input)?.into_iter().flatten().collect()
    } else {
        surfaces(&read_annotated_corpus(&a.input)?)
    };
    if cfg.bpe.joint {
        let target = a
            .target
            .as_ref()
            .ok_or_else(|| Error::Config("joint BPE needs --target".into()))?;
        words.extend(read_plain_corpus(target)?.into_iter().flatten());
    }
    let counts = word_frequencies(words.iter().map(String::as_str));
    let table = learn_bpe_with_marker(&counts, cfg.bpe.merges, &cfg.bpe.marker)?;
    ensure_parent(&a.output)?;
    table.save(&a.output)?;
    cfg.save(&sidecar(&a.output))?;
    println!("{} merges written to {}", table.len(), a.output.display());
    Ok(EXIT_OK)
}

fn surfaces(corpus: &[AnnotatedSentence]) -> Vec<String> {
    corpus
        .iter()
        .flat_map(|s| s.tokens().iter().map(|t| t.surface().to_string()))
        .collect()
}

fn build_vocabs_cmd(mut cfg: RunConfig, a: BuildVocabsArgs) -> Result<i32> {
    if let Some(m) = a.min_freq {
        cfg.vocab.lemma_min_freq = m;
    }
    let corpus = read_annotated_corpus(&a.input)?;
    let merges = MergeTable::load(&a.bpe)?;
    make_dir(&a.out_dir)?;
    let d = &a.out_dir;
    build_lemma_vocab(&corpus, cfg.vocab.lemma_min_freq, cfg.vocab.lemma_max_size).save(&d.join(files::LEMMA))?;
    build_feature_vocab(&corpus).save(&d.join(files::FEATURE))?;
    build_subword_vocab_with(&corpus, &merges, cfg.vocab.subword_min_freq).save(&d.join(files::SUBWORD))?;
    build_combination_vocab(&corpus).save(&d.join(files::COMBINATION))?;
    merges.save(&d.join(files::SOURCE_BPE))?;
    if let Some(t) = &a.target {
        let target = read_plain_corpus(t)?;
        let tm = match &a.target_bpe {
            Some(p) => MergeTable::load(p)?,
            None => merges.clone(),
        };
        subword_vocab_from_words(target.iter().flatten().map(String::as_str), &tm, cfg.vocab.subword_min_freq)
            .save(&d.join(files::TARGET))?;
        tm.save(&d.join(files::TARGET_BPE))?;
    }
    cfg.save(&d.join(files::CONFIG))?;
    println!("vocabularies written to {}", d.display());
    Ok(EXIT_OK)
}

fn load_source_vocabs(dir: &Path) -> Result<SourceVocabs> {
    Ok(SourceVocabs {
        lemma: Vocabulary::load(&dir.join(files::LEMMA))?,
        feature: Vocabulary::load(&dir.join(files::FEATURE))?,
        subword: Vocabulary::load(&dir.join(files::SUBWORD))?,
        combination: Vocabulary::load(&dir.join(files::COMBINATION))?,
        merges: MergeTable::load(&dir.join(files::SOURCE_BPE))?,
    })
}

fn load_vocabs(dir: &Path) -> Result<Vocabs> {
    Ok(Vocabs {
        source: load_source_vocabs(dir)?,
        target_merges: MergeTable::load(&dir.join(files::TARGET_BPE))?,
        target: Vocabulary::load(&dir.join(files::TARGET))?,
    })
}

fn ld_config(cfg: &RunConfig) -> Result<LinguisticDropoutConfig> {
    LinguisticDropoutConfig::new(cfg.encoding.effective_ld_p(), cfg.seed)
}

fn encode_cmd(mut cfg: RunConfig, a: EncodeArgs) -> Result<i32> {
    apply_scheme(&mut cfg, &a.scheme)?;
    if let Some(e) = a.epoch {
        cfg.encoding.epoch = e;
    }
    let vocabs = load_source_vocabs(&a.vocabs)?;
    let corpus = read_annotated_corpus(&a.input)?;
    let encoded = encode_corpus(cfg.encoding.scheme, &corpus, &vocabs, &ld_config(&cfg)?, cfg.encoding.epoch)?;
    write_file(&a.output, render_encoded_corpus(&encoded))?;
    cfg.save(&sidecar(&a.output))?;
    println!("{} sentences encoded to {}", encoded.len(), a.output.display());
    Ok(EXIT_OK)
}

fn analyze_cmd(cfg: RunConfig, a: AnalyzeArgs) -> Result<i32> {
    let corpus = read_annotated_corpus(&a.input)?;
    let report = sparsity_report(&corpus);
    export_report(&report, &a.out_dir)?;
    cfg.save(&a.out_dir.join(files::CONFIG))?;
    println!(
        "{} annotated occurrences, {} distinct combinations, {} distinct features",
        report.occurrences, report.distinct_combinations, report.distinct_features
    );
    Ok(EXIT_OK)
}

fn synth_cmd(mut cfg: RunConfig, a: SynthArgs) -> Result<i32> {
    if let Some(s) = a.seed {
        cfg.synth.seed = s;
    }
    if let Some(c) = a.coverage {
        cfg.synth.coverage = c;
    }
    let corpus = generate(&cfg.synth).map_err(|e| match e {
        // An impossible corpus is a problem with the requested config.
        Error::Infeasible(m) => Error::Config(format!("infeasible synthetic corpus: {m}")),
        other => other,
    })?;
    corpus.write(&a.out_dir)?;
    cfg.save(&a.out_dir.join(files::CONFIG))?;
    println!("synthetic corpus written to {}", a.out_dir.display());
    Ok(EXIT_OK)
}

fn train_cmd(mut cfg: RunConfig, a: TrainArgs) -> Result<i32> {
    apply_scheme(&mut cfg, &a.scheme)?;
    apply_model(&mut cfg, &a.model)?;
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    let vocabs = load_vocabs(&a.vocabs)?;
    let source = read_annotated_corpus(&a.source)?;
    let target = read_plain_corpus(&a.target)?;
    let targets = vocabs.encode_targets(&target);
    let set = training_set(cfg.encoding.scheme, &source, targets, &vocabs.source, ld_config(&cfg)?)?;
    let mut trainer = match &a.resume {
        Some(p) => {
            let t = checkpoint::load(p)?;
            if t.model.scheme() != cfg.encoding.scheme || t.model.sizes() != vocabs.sizes() {
                return Err(Error::Config("checkpoint does not match the scheme or vocabularies".into()));
            }
            t
        }
        None => {
            let mut mc = cfg.train.model_config();
            mc.seed = cfg.seed;
            Trainer::new(Model::new(mc, cfg.encoding.scheme, vocabs.sizes())?)
        }
    };
    cfg.train.model = Some(trainer.model.config().clone());
    make_dir(&a.out_dir)?;
    let log = trainer.train(&set, cfg.train.epochs, |s, _| {
        println!(
            "epoch {}\tloss {:.4}\ttoken_acc {:.4}\t{:.1}s",
            s.epoch, s.loss, s.token_acc, s.wallclock
        );
        true
    })?;
    write_log(&a.out_dir.join(files::LOG), &log)?;
    checkpoint::save(&a.out_dir.join(files::CHECKPOINT), &trainer)?;
    cfg.save(&a.out_dir.join(files::CONFIG))?;
    Ok(EXIT_OK)
}

fn decode_cmd(cfg: RunConfig, a: DecodeArgs) -> Result<i32> {
    let vocabs = load_vocabs(&a.vocabs)?;
    let trainer = checkpoint::load(&a.checkpoint)?;
    let model = trainer.model;
    if model.sizes() != vocabs.sizes() {
        return Err(Error::Config("checkpoint does not match the vocabularies".into()));
    }
    let source = read_annotated_corpus(&a.input)?;
    let encoded = encode_corpus(
        model.scheme(),
        &source,
        &vocabs.source,
        &LinguisticDropoutConfig::disabled(),
        0,
    )?;
    let hyps = greedy_decode(&model, &encoded)?;
    let mut text = String::new();
    for h in &hyps {
        let subwords: Vec<&str> = h.iter().map(|&id| vocabs.target.token(id).unwrap_or("<unk>")).collect();
        text.push_str(&join_subwords(&subwords, vocabs.target_merges.marker()).join(" "));
        text.push('\n');
    }
    write_file(&a.output, text)?;
    cfg.save(&sidecar(&a.output))?;
    if let Some(r) = &a.reference {
        let refs = vocabs.encode_targets(&read_plain_corpus(r)?);
        if refs.len() != source.len() {
            return Err(Error::Config(format!(
                "{} source sentences but {} references",
                source.len(),
                refs.len()
            )));
        }
        let scores = evaluate(&model, &source, &refs, &vocabs.source)?;
        let mut name = a.output.file_name().unwrap_or_default().to_os_string();
        name.push(".scores.json");
        write_file(&a.output.with_file_name(name), serde_json::to_string_pretty(&scores)? + "\n")?;
        println!("token_acc {:.4}\tseq_acc {:.4}", scores.token_acc, scores.seq_acc);
    }
    Ok(EXIT_OK)
}

fn grad_check_cmd(mut cfg: RunConfig, a: GradCheckArgs) -> Result<i32> {
    apply_scheme(&mut cfg, &a.scheme)?;
    apply_model(&mut cfg, &a.model)?;
    if let Some(c) = a.coordinates {
        cfg.grad_check.coordinates = c;
    }
    let vocabs = load_vocabs(&a.vocabs)?;
    let source = read_annotated_corpus(&a.source)?;
    let target = read_plain_corpus(&a.target)?;
    let n = cfg.grad_check.sentences.min(source.len()).min(target.len());
    let model = match &a.checkpoint {
        Some(p) => checkpoint::load(p)?.model,
        None => {
            let mut mc = cfg.train.model_config();
            mc.seed = cfg.seed;
            mc.dropout = 0.0;
            Model::new(mc, cfg.encoding.scheme, vocabs.sizes())?
        }
    };
    let encoded = encode_corpus(model.scheme(), &source[..n], &vocabs.source, &ld_config(&cfg)?, 0)?;
    let examples: Vec<Example> = encoded
        .into_iter()
        .zip(vocabs.encode_targets(&target[..n]))
        .map(|(source, target)| Example { source, target })
        .collect();
    let batch: Vec<&Example> = examples.iter().collect();
    let opts = GradCheckOptions {
        coordinates: cfg.grad_check.coordinates,
        step: cfg.grad_check.epsilon,
        tolerance: cfg.grad_check.tolerance,
        seed: cfg.seed,
        ..GradCheckOptions::default()
    };
    let report = grad_check(&model, &batch, &opts)?;
    write_file(&a.output, report.to_tsv())?;
    cfg.save(&sidecar(&a.output))?;
    println!("{report}");
    Ok(if report.passed() { EXIT_OK } else { EXIT_DATA })
}
