//! Teacher-forced training with Adam and per-epoch source re-encoding.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{DropoutMasks, Example, Model};
use super::tape::Tape;
use super::tensor::Mat;
use crate::encoding::{EncodedSentence, LinguisticDropoutConfig, PreparedSentence};
use crate::error::{Error, Result};
use crate::vocab::PAD_ID;

/// Source side of a training set.
#[derive(Clone, Debug)]
pub enum TrainSources {
    /// Encoded once; identical every epoch.
    Fixed(Vec<EncodedSentence>),
    /// Sparse encoding, re-sampled every epoch with linguistic dropout.
    Sparse {
        prepared: Vec<PreparedSentence>,
        ld: LinguisticDropoutConfig,
    },
}

#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub sources: TrainSources,
    /// Target ids per sentence, without the end symbol.
    pub targets: Vec<Vec<usize>>,
}

impl TrainingSet {
    pub fn new(sources: TrainSources, targets: Vec<Vec<usize>>) -> Result<Self> {
        let n = match &sources {
            TrainSources::Fixed(s) => s.len(),
            TrainSources::Sparse { prepared, .. } => prepared.len(),
        };
        if n != targets.len() {
            return Err(Error::Config(format!(
                "{n} source sentences but {} target sentences",
                targets.len()
            )));
        }
        if n == 0 {
            return Err(Error::Config("empty training set".into()));
        }
        Ok(Self { sources, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Examples as seen in `epoch`.
    pub fn examples(&self, epoch: u64) -> Result<Vec<Example>> {
        let sources: Vec<EncodedSentence> = match &self.sources {
            TrainSources::Fixed(s) => s.clone(),
            TrainSources::Sparse { prepared, ld } => prepared
                .iter()
                .enumerate()
                .map(|(i, p)| p.realize(ld, epoch, i as u64).map(EncodedSentence::Tokens))
                .collect::<Result<_>>()?,
        };
        Ok(sources
            .into_iter()
            .zip(&self.targets)
            .map(|(source, t)| Example {
                source,
                target: t.clone(),
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: u64,
    pub loss: f64,
    /// Teacher-forced token accuracy on the training batches.
    pub token_acc: f64,
    pub lr: f64,
    pub wallclock: f64,
}

pub const LOG_HEADER: &str = "epoch\tloss\ttoken_acc\tlr";

/// Wall-clock time is left out so that logs are reproducible.
pub fn render_log(stats: &[EpochStats]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for e in stats {
        let _ = writeln!(
            s,
            "{}\t{:.6}\t{:.6}\t{:.6e}",
            e.epoch, e.loss, e.token_acc, e.lr
        );
    }
    s
}

pub fn write_log(path: &Path, stats: &[EpochStats]) -> Result<()> {
    std::fs::write(path, render_log(stats)).map_err(|e| Error::io(path, e))
}

/// Adam moments and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Mat>,
    pub v: Vec<Mat>,
}

impl AdamState {
    pub fn new(model: &Model) -> Self {
        Self {
            step: 0,
            m: model.params().zeros_like(),
            v: model.params().zeros_like(),
        }
    }
}

/// Group shuffled example indices into batches under a token budget. A
/// sentence counts as the longer of its source and target-plus-end lengths.
pub fn make_batches(examples: &[Example], budget: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    order.shuffle(&mut rng);
    let mut batches = Vec::new();
    let mut cur = Vec::new();
    let mut tokens = 0;
    for i in order {
        let n = examples[i].source.len().max(examples[i].target.len() + 1);
        if !cur.is_empty() && tokens + n > budget {
            batches.push(std::mem::take(&mut cur));
            tokens = 0;
        }
        cur.push(i);
        tokens += n;
    }
    if !cur.is_empty() {
        batches.push(cur);
    }
    batches
}

pub struct Trainer {
    pub model: Model,
    pub adam: AdamState,
    /// Epochs completed so far.
    pub epoch: u64,
}

impl Trainer {
    pub fn new(model: Model) -> Self {
        let adam = AdamState::new(&model);
        Self {
            model,
            adam,
            epoch: 0,
        }
    }

    /// One optimizer step. Returns the batch loss, correct predictions and
    /// predicted token count.
    pub fn step(&mut self, batch: &[&Example]) -> Result<(f64, usize, usize)> {
        let cfg = self.model.config().clone();
        let step = self.adam.step + 1;
        let mut masks = DropoutMasks::new(cfg.seed ^ step.wrapping_mul(0xD1B5_4A32_D192_ED03), cfg.dropout);
        let mut tape = Tape::new(self.model.params());
        let out = self.model.forward_batch(&mut tape, batch, Some(&mut masks))?;
        let loss = tape.value(out.loss).get(0, 0);
        if !loss.is_finite() {
            return Err(Error::Divergence {
                epoch: self.epoch + 1,
                step,
                loss,
            });
        }
        let logits = tape.value(out.logits);
        let correct = out
            .targets
            .iter()
            .enumerate()
            .filter(|&(r, &t)| logits.argmax_row(r) == t)
            .count();
        let mut grads = tape.backward(out.loss);
        drop(tape);
        for id in self.model.padded_tables() {
            grads.param_mut(id).row_mut(PAD_ID).fill(0.0);
        }

        self.adam.step = step;
        let lr = cfg.lr_at(step);
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(step.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - b2.powi(step.min(i32::MAX as u64) as i32);
        let ids: Vec<_> = self.model.params().ids().collect();
        for id in ids {
            let g = grads.param(id).data();
            let m = self.adam.m[id.0].data_mut();
            let v = self.adam.v[id.0].data_mut();
            let p = self.model.params_mut().get_mut(id).data_mut();
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + cfg.adam_eps);
            }
        }
        Ok((loss, correct, out.targets.len()))
    }

    /// One pass over `set`, with sources re-encoded for the new epoch.
    pub fn train_epoch(&mut self, set: &TrainingSet) -> Result<EpochStats> {
        let start = Instant::now();
        let epoch = self.epoch + 1;
        let examples = set.examples(epoch)?;
        let batches = make_batches(
            &examples,
            self.model.config().batch_tokens,
            self.model.config().seed,
            epoch,
        );
        let (mut loss_sum, mut correct, mut total) = (0.0, 0, 0);
        for b in &batches {
            let batch: Vec<&Example> = b.iter().map(|&i| &examples[i]).collect();
            let (loss, c, n) = self.step(&batch)?;
            loss_sum += loss * n as f64;
            correct += c;
            total += n;
        }
        self.epoch = epoch;
        Ok(EpochStats {
            epoch,
            loss: loss_sum / total.max(1) as f64,
            token_acc: correct as f64 / total.max(1) as f64,
            lr: self.model.config().lr_at(self.adam.step),
            wallclock: start.elapsed().as_secs_f64(),
        })
    }

    /// Train for `epochs` more epochs; `on_epoch` sees each epoch's stats and
    /// may stop training early by returning `false`.
    pub fn train(
        &mut self,
        set: &TrainingSet,
        epochs: u64,
        mut on_epoch: impl FnMut(&EpochStats, &Model) -> bool,
    ) -> Result<Vec<EpochStats>> {
        let mut log = Vec::new();
        for _ in 0..epochs {
            let stats = self.train_epoch(set)?;
            let go_on = on_epoch(&stats, &self.model);
            log.push(stats);
            if !go_on {
                break;
            }
        }
        Ok(log)
    }
}
