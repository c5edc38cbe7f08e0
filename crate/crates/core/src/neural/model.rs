//! Pre-norm transformer encoder-decoder whose source embedding layer depends
//! on the encoding scheme.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::tape::{ParamId, ParamStore, Segment, Tape, Var};
use super::tensor::Mat;
use crate::encoding::{EncodedSentence, EncodedToken, FactoredToken, Position, Scheme, SourceVocabs};
use crate::error::{Error, Result};
use crate::vocab::{Vocabulary, PAD_ID};

/// Table sizes a model is built for. `target` counts output classes,
/// i.e. the target vocabulary plus the end-of-sentence symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSizes {
    pub lemma: usize,
    pub feature: usize,
    pub subword: usize,
    pub combination: usize,
    pub target: usize,
}

impl VocabSizes {
    pub fn new(source: &SourceVocabs, target: &Vocabulary) -> Self {
        Self {
            lemma: source.lemma.len(),
            feature: source.feature.len(),
            subword: source.subword.len(),
            combination: source.combination.len(),
            target: target.len() + 1,
        }
    }

    /// End-of-sentence id; also used as the decoder start symbol.
    pub fn eos(&self) -> usize {
        self.target - 1
    }
}

/// Read-only view of the sparse scheme's three embedding tables.
#[derive(Clone, Copy, Debug)]
pub struct EmbeddingTables<'a> {
    pub lemma: Option<&'a Mat>,
    pub feature: Option<&'a Mat>,
    pub subword: &'a Mat,
}

fn row_of<'a>(table: &'a Mat, id: usize, name: &str) -> Result<&'a [f64]> {
    if id >= table.rows() {
        return Err(Error::IdOutOfRange {
            table: name.into(),
            id,
            size: table.rows(),
        });
    }
    Ok(table.row(id))
}

/// One row per token: the lemma row plus every feature row (added in
/// ascending id order), or the subword row.
pub fn embed_tokens(tokens: &[EncodedToken], tables: &EmbeddingTables<'_>) -> Result<Mat> {
    let d = tables.subword.cols();
    let mut out = Mat::zeros(tokens.len(), d);
    for (r, tok) in tokens.iter().enumerate() {
        match tok {
            EncodedToken::Subword { subword_id } => {
                out.row_mut(r)
                    .copy_from_slice(row_of(tables.subword, *subword_id, "subword")?);
            }
            EncodedToken::LemmaFactored {
                lemma_id,
                feature_ids,
            } => {
                let lemma = tables
                    .lemma
                    .ok_or_else(|| Error::Config("model has no lemma table".into()))?;
                let feature = tables
                    .feature
                    .ok_or_else(|| Error::Config("model has no feature table".into()))?;
                out.row_mut(r)
                    .copy_from_slice(row_of(lemma, *lemma_id, "lemma")?);
                let mut ids = feature_ids.clone();
                ids.sort_unstable();
                for f in ids {
                    let fr = row_of(feature, f, "feature")?;
                    for (o, x) in out.row_mut(r).iter_mut().zip(fr) {
                        *o += x;
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct FactoredTables<'a> {
    pub subword: &'a Mat,
    pub combination: &'a Mat,
    pub position: &'a Mat,
}

/// One row per token: `[subword | combination | position]`.
pub fn embed_factored_baseline(tokens: &[FactoredToken], tables: &FactoredTables<'_>) -> Result<Mat> {
    let (ds, dc, dp) = (
        tables.subword.cols(),
        tables.combination.cols(),
        tables.position.cols(),
    );
    let mut out = Mat::zeros(tokens.len(), ds + dc + dp);
    for (r, t) in tokens.iter().enumerate() {
        let s = row_of(tables.subword, t.subword_id, "subword")?;
        let c = row_of(tables.combination, t.combination_id, "combination")?;
        let p = row_of(tables.position, t.position.index(), "position")?;
        let row = out.row_mut(r);
        row[..ds].copy_from_slice(s);
        row[ds..ds + dc].copy_from_slice(c);
        row[ds + dc..].copy_from_slice(p);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum SourceTables {
    Subword {
        subword: ParamId,
    },
    Sparse {
        lemma: ParamId,
        feature: ParamId,
        subword: ParamId,
    },
    Factored {
        subword: ParamId,
        combination: ParamId,
        position: ParamId,
    },
}

#[derive(Clone, Copy, Debug)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct Proj {
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct Attn {
    q: Proj,
    k: Proj,
    v: Proj,
    o: Proj,
}

#[derive(Clone, Copy, Debug)]
struct FeedForward {
    up: Proj,
    down: Proj,
}

#[derive(Clone, Copy, Debug)]
struct EncoderLayer {
    norm1: Norm,
    attn: Attn,
    norm2: Norm,
    ff: FeedForward,
}

#[derive(Clone, Copy, Debug)]
struct DecoderLayer {
    norm1: Norm,
    self_attn: Attn,
    norm2: Norm,
    cross_attn: Attn,
    norm3: Norm,
    ff: FeedForward,
}

struct Init<'a> {
    params: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl Init<'_> {
    fn uniform(&mut self, name: String, rows: usize, cols: usize, a: f64) -> ParamId {
        let data = (0..rows * cols).map(|_| self.rng.gen_range(-a..=a)).collect();
        self.params.add(name, Mat::from_vec(rows, cols, data))
    }

    fn constant(&mut self, name: String, rows: usize, cols: usize, v: f64) -> ParamId {
        self.params.add(name, Mat::from_vec(rows, cols, vec![v; rows * cols]))
    }

    /// Embedding rows with unit variance after the `sqrt(d)` input scaling.
    fn embedding(&mut self, name: String, rows: usize, cols: usize, d_model: usize, pad: bool) -> ParamId {
        let a = (3.0 / d_model as f64).sqrt();
        let id = self.uniform(name, rows, cols, a);
        if pad {
            self.params.get_mut(id).row_mut(PAD_ID).fill(0.0);
        }
        id
    }

    fn proj(&mut self, name: &str, din: usize, dout: usize, gain: f64) -> Proj {
        let a = gain * (6.0 / (din + dout) as f64).sqrt();
        Proj {
            w: self.uniform(format!("{name}.w"), din, dout, a),
            b: self.constant(format!("{name}.b"), 1, dout, 0.0),
        }
    }

    fn norm(&mut self, name: &str, d: usize) -> Norm {
        Norm {
            gamma: self.constant(format!("{name}.gamma"), 1, d, 1.0),
            beta: self.constant(format!("{name}.beta"), 1, d, 0.0),
        }
    }

    fn attn(&mut self, name: &str, d: usize) -> Attn {
        Attn {
            q: self.proj(&format!("{name}.q"), d, d, 1.0),
            k: self.proj(&format!("{name}.k"), d, d, 1.0),
            v: self.proj(&format!("{name}.v"), d, d, 1.0),
            o: self.proj(&format!("{name}.o"), d, d, 1.0),
        }
    }

    fn ff(&mut self, name: &str, d: usize, ff: usize) -> FeedForward {
        FeedForward {
            up: self.proj(&format!("{name}.up"), d, ff, 1.0),
            down: self.proj(&format!("{name}.down"), ff, d, 1.0),
        }
    }
}

/// Initial output projection is shrunk so that the first logits are close to
/// uniform.
const OUTPUT_INIT_GAIN: f64 = 0.1;

/// Per-batch dropout mask source.
pub struct DropoutMasks {
    rng: ChaCha8Rng,
    p: f64,
}

impl DropoutMasks {
    pub fn new(seed: u64, p: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            p,
        }
    }

    fn mask(&mut self, n: usize) -> Vec<f64> {
        let keep = 1.0 / (1.0 - self.p);
        (0..n)
            .map(|_| if self.rng.gen::<f64>() < self.p { 0.0 } else { keep })
            .collect()
    }
}

/// Result of a batched forward pass recorded on a tape.
pub struct BatchForward {
    /// Output of the source embedding layer, before scaling.
    pub source_embedding: Var,
    pub logits: Var,
    pub loss: Var,
    pub targets: Vec<usize>,
}

/// One training or evaluation pair: encoded source and target ids (no EOS).
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub source: EncodedSentence,
    pub target: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    scheme: Scheme,
    sizes: VocabSizes,
    params: ParamStore,
    source: SourceTables,
    target_embed: ParamId,
    encoder: Vec<EncoderLayer>,
    encoder_norm: Norm,
    decoder: Vec<DecoderLayer>,
    decoder_norm: Norm,
    output: Proj,
    positions: Mat,
}

impl Model {
    pub fn new(config: ModelConfig, scheme: Scheme, sizes: VocabSizes) -> Result<Self> {
        config.validate()?;
        if sizes.target < 2 || sizes.subword < 2 {
            return Err(Error::Config("vocabularies are too small".into()));
        }
        let d = config.d_model;
        let mut params = ParamStore::new();
        let mut init = Init {
            params: &mut params,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        };
        let source = match scheme {
            Scheme::Bpe => SourceTables::Subword {
                subword: init.embedding("src.subword".into(), sizes.subword, d, d, true),
            },
            Scheme::Sparse => SourceTables::Sparse {
                lemma: init.embedding("src.lemma".into(), sizes.lemma, d, d, true),
                feature: init.embedding("src.feature".into(), sizes.feature, d, d, true),
                subword: init.embedding("src.subword".into(), sizes.subword, d, d, true),
            },
            Scheme::Factored => {
                let ds = d - config.d_combination - config.d_position;
                SourceTables::Factored {
                    subword: init.embedding("src.subword".into(), sizes.subword, ds, d, true),
                    combination: init.embedding(
                        "src.combination".into(),
                        sizes.combination,
                        config.d_combination,
                        d,
                        true,
                    ),
                    position: init.embedding(
                        "src.position".into(),
                        Position::COUNT,
                        config.d_position,
                        d,
                        false,
                    ),
                }
            }
        };
        let target_embed = init.embedding("tgt.embed".into(), sizes.target, d, d, true);
        let encoder = (0..config.layers)
            .map(|i| EncoderLayer {
                norm1: init.norm(&format!("enc.{i}.norm1"), d),
                attn: init.attn(&format!("enc.{i}.attn"), d),
                norm2: init.norm(&format!("enc.{i}.norm2"), d),
                ff: init.ff(&format!("enc.{i}.ff"), d, config.ff_dim),
            })
            .collect();
        let encoder_norm = init.norm("enc.norm", d);
        let decoder = (0..config.layers)
            .map(|i| DecoderLayer {
                norm1: init.norm(&format!("dec.{i}.norm1"), d),
                self_attn: init.attn(&format!("dec.{i}.self"), d),
                norm2: init.norm(&format!("dec.{i}.norm2"), d),
                cross_attn: init.attn(&format!("dec.{i}.cross"), d),
                norm3: init.norm(&format!("dec.{i}.norm3"), d),
                ff: init.ff(&format!("dec.{i}.ff"), d, config.ff_dim),
            })
            .collect();
        let decoder_norm = init.norm("dec.norm", d);
        let output = init.proj("out", d, sizes.target, OUTPUT_INIT_GAIN);
        let positions = sinusoids(config.max_len, d);
        Ok(Self {
            config,
            scheme,
            sizes,
            params,
            source,
            target_embed,
            encoder,
            encoder_norm,
            decoder,
            decoder_norm,
            output,
            positions,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn sizes(&self) -> VocabSizes {
        self.sizes
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Parameter ids of source-side tables whose PAD row stays zero.
    pub fn padded_tables(&self) -> Vec<ParamId> {
        let mut out = vec![self.target_embed];
        match self.source {
            SourceTables::Subword { subword } => out.push(subword),
            SourceTables::Sparse {
                lemma,
                feature,
                subword,
            } => out.extend([lemma, feature, subword]),
            SourceTables::Factored {
                subword,
                combination,
                ..
            } => out.extend([subword, combination]),
        }
        out
    }

    /// Ids of the `(lemma, feature, subword)` tables, when this is a sparse model.
    pub fn sparse_tables(&self) -> Option<(ParamId, ParamId, ParamId)> {
        match self.source {
            SourceTables::Sparse {
                lemma,
                feature,
                subword,
            } => Some((lemma, feature, subword)),
            _ => None,
        }
    }

    pub fn source_subword_table(&self) -> ParamId {
        match self.source {
            SourceTables::Subword { subword }
            | SourceTables::Sparse { subword, .. }
            | SourceTables::Factored { subword, .. } => subword,
        }
    }

    pub fn embedding_tables(&self) -> Option<EmbeddingTables<'_>> {
        match self.source {
            SourceTables::Subword { subword } => Some(EmbeddingTables {
                lemma: None,
                feature: None,
                subword: self.params.get(subword),
            }),
            SourceTables::Sparse {
                lemma,
                feature,
                subword,
            } => Some(EmbeddingTables {
                lemma: Some(self.params.get(lemma)),
                feature: Some(self.params.get(feature)),
                subword: self.params.get(subword),
            }),
            SourceTables::Factored { .. } => None,
        }
    }

    pub fn factored_tables(&self) -> Option<FactoredTables<'_>> {
        match self.source {
            SourceTables::Factored {
                subword,
                combination,
                position,
            } => Some(FactoredTables {
                subword: self.params.get(subword),
                combination: self.params.get(combination),
                position: self.params.get(position),
            }),
            _ => None,
        }
    }

    /// Copy every parameter of `other` whose name and shape match. Returns
    /// the number of tensors copied.
    pub fn copy_matching_params(&mut self, other: &Model) -> usize {
        let mut copied = 0;
        for id in other.params.ids() {
            let name = other.params.name(id);
            if let Some(mine) = self.params.find(name) {
                let src = other.params.get(id);
                if self.params.get(mine).shape() == src.shape() {
                    *self.params.get_mut(mine) = src.clone();
                    copied += 1;
                }
            }
        }
        copied
    }

    /// Check that an encoded source fits this model's scheme and tables.
    pub fn validate_source(&self, source: &EncodedSentence) -> Result<()> {
        if source.len() > self.config.max_len {
            return Err(Error::SequenceTooLong {
                len: source.len(),
                max: self.config.max_len,
            });
        }
        if source.is_empty() {
            return Err(Error::Config("empty source sentence".into()));
        }
        let range = |table: &str, id: usize, size: usize| {
            if id >= size {
                Err(Error::IdOutOfRange {
                    table: table.into(),
                    id,
                    size,
                })
            } else {
                Ok(())
            }
        };
        match (source, &self.source) {
            (EncodedSentence::Tokens(tokens), SourceTables::Subword { .. } | SourceTables::Sparse { .. }) => {
                let sparse = matches!(self.source, SourceTables::Sparse { .. });
                for t in tokens {
                    match t {
                        EncodedToken::Subword { subword_id } => {
                            range("subword", *subword_id, self.sizes.subword)?
                        }
                        EncodedToken::LemmaFactored {
                            lemma_id,
                            feature_ids,
                        } => {
                            if !sparse {
                                return Err(Error::Config(
                                    "lemma tokens given to a subword-only model".into(),
                                ));
                            }
                            range("lemma", *lemma_id, self.sizes.lemma)?;
                            for &f in feature_ids {
                                range("feature", f, self.sizes.feature)?;
                            }
                        }
                    }
                }
                Ok(())
            }
            (EncodedSentence::Factored(tokens), SourceTables::Factored { .. }) => {
                for t in tokens {
                    range("subword", t.subword_id, self.sizes.subword)?;
                    range("combination", t.combination_id, self.sizes.combination)?;
                }
                Ok(())
            }
            _ => Err(Error::Config(format!(
                "source encoding does not match the {} model",
                self.scheme
            ))),
        }
    }

    fn validate_decoder_input(&self, ids: &[usize]) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::Config("empty decoder input".into()));
        }
        if ids.len() > self.config.max_len {
            return Err(Error::SequenceTooLong {
                len: ids.len(),
                max: self.config.max_len,
            });
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.sizes.target) {
            return Err(Error::IdOutOfRange {
                table: "target".into(),
                id: bad,
                size: self.sizes.target,
            });
        }
        Ok(())
    }

    fn positional(&self, lens: &[usize]) -> Mat {
        let d = self.config.d_model;
        let total = lens.iter().sum();
        let mut out = Mat::zeros(total, d);
        let mut r = 0;
        for &len in lens {
            for p in 0..len {
                out.row_mut(r).copy_from_slice(self.positions.row(p));
                r += 1;
            }
        }
        out
    }

    fn maybe_dropout(&self, tape: &mut Tape<'_>, x: Var, masks: &mut Option<&mut DropoutMasks>) -> Var {
        match masks {
            Some(m) if m.p > 0.0 => {
                let n = tape.value(x).data().len();
                let mask = m.mask(n);
                tape.dropout(x, mask)
            }
            _ => x,
        }
    }

    fn attention(
        &self,
        tape: &mut Tape<'_>,
        a: &Attn,
        query_in: Var,
        memory: Var,
        segments: Vec<Segment>,
        causal: bool,
    ) -> Var {
        let q = tape.linear(query_in, a.q.w, a.q.b);
        let k = tape.linear(memory, a.k.w, a.k.b);
        let v = tape.linear(memory, a.v.w, a.v.b);
        let ctx = tape.attention(q, k, v, self.config.heads, segments, causal);
        tape.linear(ctx, a.o.w, a.o.b)
    }

    fn feed_forward(&self, tape: &mut Tape<'_>, f: &FeedForward, x: Var) -> Var {
        let h = tape.linear(x, f.up.w, f.up.b);
        let h = tape.gelu(h);
        tape.linear(h, f.down.w, f.down.b)
    }

    /// Raw source embedding rows for a batch, concatenated.
    fn embed_source(&self, tape: &mut Tape<'_>, sources: &[&EncodedSentence]) -> Var {
        match self.source {
            SourceTables::Subword { subword } => {
                let tokens = sources.iter().flat_map(|s| tokens_of(s).iter().cloned()).collect();
                tape.embed_tokens(None, None, subword, tokens)
            }
            SourceTables::Sparse {
                lemma,
                feature,
                subword,
            } => {
                let tokens = sources
                    .iter()
                    .flat_map(|s| tokens_of(s).iter().map(canonical))
                    .collect();
                tape.embed_tokens(Some(lemma), Some(feature), subword, tokens)
            }
            SourceTables::Factored {
                subword,
                combination,
                position,
            } => {
                let tokens = sources
                    .iter()
                    .flat_map(|s| match s {
                        EncodedSentence::Factored(t) => t.iter().copied(),
                        EncodedSentence::Tokens(_) => unreachable!("validated"),
                    })
                    .collect();
                tape.embed_factored(subword, combination, position, tokens)
            }
        }
    }

    /// Encoder over a batch of validated sources. Returns the embedding node,
    /// the memory node and the per-sentence `(start, len)` row ranges.
    fn encode(
        &self,
        tape: &mut Tape<'_>,
        sources: &[&EncodedSentence],
        masks: &mut Option<&mut DropoutMasks>,
    ) -> (Var, Var, Vec<(usize, usize)>) {
        let lens: Vec<usize> = sources.iter().map(|s| s.len()).collect();
        let spans = spans(&lens);
        let emb = self.embed_source(tape, sources);
        let scaled = tape.scale(emb, (self.config.d_model as f64).sqrt());
        let pe = tape.constant(self.positional(&lens));
        let mut x = tape.add(scaled, pe);
        x = self.maybe_dropout(tape, x, masks);
        let segs: Vec<Segment> = spans
            .iter()
            .map(|&(s, l)| Segment {
                q_start: s,
                q_len: l,
                k_start: s,
                k_len: l,
            })
            .collect();
        for layer in &self.encoder {
            let h = tape.layer_norm(x, layer.norm1.gamma, layer.norm1.beta);
            let a = self.attention(tape, &layer.attn, h, h, segs.clone(), false);
            let a = self.maybe_dropout(tape, a, masks);
            x = tape.add(x, a);
            let h = tape.layer_norm(x, layer.norm2.gamma, layer.norm2.beta);
            let f = self.feed_forward(tape, &layer.ff, h);
            let f = self.maybe_dropout(tape, f, masks);
            x = tape.add(x, f);
        }
        let memory = tape.layer_norm(x, self.encoder_norm.gamma, self.encoder_norm.beta);
        (emb, memory, spans)
    }

    /// Decoder logits for a batch of decoder inputs against encoder memory.
    fn decode(
        &self,
        tape: &mut Tape<'_>,
        memory: Var,
        memory_spans: &[(usize, usize)],
        inputs: &[&[usize]],
        masks: &mut Option<&mut DropoutMasks>,
    ) -> Var {
        let lens: Vec<usize> = inputs.iter().map(|s| s.len()).collect();
        let spans = spans(&lens);
        let ids: Vec<usize> = inputs.iter().flat_map(|s| s.iter().copied()).collect();
        let emb = tape.gather(self.target_embed, ids);
        let scaled = tape.scale(emb, (self.config.d_model as f64).sqrt());
        let pe = tape.constant(self.positional(&lens));
        let mut y = tape.add(scaled, pe);
        y = self.maybe_dropout(tape, y, masks);
        let self_segs: Vec<Segment> = spans
            .iter()
            .map(|&(s, l)| Segment {
                q_start: s,
                q_len: l,
                k_start: s,
                k_len: l,
            })
            .collect();
        let cross_segs: Vec<Segment> = spans
            .iter()
            .zip(memory_spans)
            .map(|(&(s, l), &(ms, ml))| Segment {
                q_start: s,
                q_len: l,
                k_start: ms,
                k_len: ml,
            })
            .collect();
        for layer in &self.decoder {
            let h = tape.layer_norm(y, layer.norm1.gamma, layer.norm1.beta);
            let a = self.attention(tape, &layer.self_attn, h, h, self_segs.clone(), true);
            let a = self.maybe_dropout(tape, a, masks);
            y = tape.add(y, a);
            let h = tape.layer_norm(y, layer.norm2.gamma, layer.norm2.beta);
            let c = self.attention(tape, &layer.cross_attn, h, memory, cross_segs.clone(), false);
            let c = self.maybe_dropout(tape, c, masks);
            y = tape.add(y, c);
            let h = tape.layer_norm(y, layer.norm3.gamma, layer.norm3.beta);
            let f = self.feed_forward(tape, &layer.ff, h);
            let f = self.maybe_dropout(tape, f, masks);
            y = tape.add(y, f);
        }
        let y = tape.layer_norm(y, self.decoder_norm.gamma, self.decoder_norm.beta);
        tape.linear(y, self.output.w, self.output.b)
    }

    /// Teacher-forced forward pass and loss over a batch, recorded on `tape`.
    pub fn forward_batch(
        &self,
        tape: &mut Tape<'_>,
        batch: &[&Example],
        mut masks: Option<&mut DropoutMasks>,
    ) -> Result<BatchForward> {
        let eos = self.sizes.eos();
        let mut inputs = Vec::with_capacity(batch.len());
        let mut targets = Vec::new();
        for ex in batch {
            self.validate_source(&ex.source)?;
            let mut input = Vec::with_capacity(ex.target.len() + 1);
            input.push(eos);
            input.extend_from_slice(&ex.target);
            self.validate_decoder_input(&input)?;
            targets.extend_from_slice(&ex.target);
            targets.push(eos);
            inputs.push(input);
        }
        let sources: Vec<&EncodedSentence> = batch.iter().map(|e| &e.source).collect();
        let (emb, memory, spans) = self.encode(tape, &sources, &mut masks);
        let input_refs: Vec<&[usize]> = inputs.iter().map(Vec::as_slice).collect();
        let logits = self.decode(tape, memory, &spans, &input_refs, &mut masks);
        let loss = tape.cross_entropy(logits, targets.clone(), self.config.label_smoothing);
        Ok(BatchForward {
            source_embedding: emb,
            logits,
            loss,
            targets,
        })
    }

    /// Logits (`decoder_input.len() × target classes`) for one sentence.
    /// `decoder_input` starts with the end-of-sentence symbol.
    pub fn forward(&self, source: &EncodedSentence, decoder_input: &[usize]) -> Result<Mat> {
        self.validate_source(source)?;
        self.validate_decoder_input(decoder_input)?;
        let mut tape = Tape::new(&self.params);
        let (_, memory, spans) = self.encode(&mut tape, &[source], &mut None);
        let logits = self.decode(&mut tape, memory, &spans, &[decoder_input], &mut None);
        Ok(tape.value(logits).clone())
    }

    /// Mean teacher-forced loss of a batch without dropout.
    pub fn loss(&self, batch: &[&Example]) -> Result<f64> {
        let mut tape = Tape::new(&self.params);
        let out = self.forward_batch(&mut tape, batch, None)?;
        Ok(tape.value(out.loss).get(0, 0))
    }

    /// Greedy decoding of a batch of sources; hypotheses exclude the end symbol.
    pub fn greedy_decode_batch(&self, sources: &[&EncodedSentence], max_len: usize) -> Result<Vec<Vec<usize>>> {
        for s in sources {
            self.validate_source(s)?;
        }
        let eos = self.sizes.eos();
        let mut tape = Tape::new(&self.params);
        let (_, memory, spans) = self.encode(&mut tape, sources, &mut None);
        let memory = tape.value(memory).clone();
        drop(tape);

        let max_len = max_len.min(self.config.max_len - 1);
        let mut prefixes: Vec<Vec<usize>> = vec![vec![eos]; sources.len()];
        let mut done = vec![false; sources.len()];
        for _ in 0..max_len {
            let active: Vec<usize> = (0..sources.len()).filter(|&i| !done[i]).collect();
            if active.is_empty() {
                break;
            }
            let mut tape = Tape::new(&self.params);
            let mem = tape.constant(memory.clone());
            let inputs: Vec<&[usize]> = active.iter().map(|&i| prefixes[i].as_slice()).collect();
            let mem_spans: Vec<(usize, usize)> = active.iter().map(|&i| spans[i]).collect();
            let logits = self.decode(&mut tape, mem, &mem_spans, &inputs, &mut None);
            let lv = tape.value(logits);
            let mut row = 0;
            let mut next = Vec::with_capacity(active.len());
            for &i in &active {
                row += prefixes[i].len();
                next.push(lv.argmax_row(row - 1));
            }
            for (&i, tok) in active.iter().zip(next) {
                if tok == eos {
                    done[i] = true;
                } else {
                    prefixes[i].push(tok);
                }
            }
        }
        Ok(prefixes.into_iter().map(|mut p| p.split_off(1)).collect())
    }

    /// Greedy decoding of one source.
    pub fn greedy_decode(&self, source: &EncodedSentence, max_len: usize) -> Result<Vec<usize>> {
        Ok(self.greedy_decode_batch(&[source], max_len)?.remove(0))
    }
}

fn tokens_of(s: &EncodedSentence) -> &[EncodedToken] {
    match s {
        EncodedSentence::Tokens(t) => t,
        EncodedSentence::Factored(_) => unreachable!("validated"),
    }
}

fn canonical(t: &EncodedToken) -> EncodedToken {
    match t {
        EncodedToken::LemmaFactored {
            lemma_id,
            feature_ids,
        } => EncodedToken::lemma_factored(*lemma_id, feature_ids.clone()),
        other => other.clone(),
    }
}

fn spans(lens: &[usize]) -> Vec<(usize, usize)> {
    let mut start = 0;
    lens.iter()
        .map(|&l| {
            let s = (start, l);
            start += l;
            s
        })
        .collect()
}

/// Fixed sinusoidal position table, `max_len × d`.
pub fn sinusoids(max_len: usize, d: usize) -> Mat {
    let mut m = Mat::zeros(max_len, d);
    let half = d / 2;
    for p in 0..max_len {
        for i in 0..half {
            let rate = (-(10000f64.ln()) * i as f64 / half.max(1) as f64).exp();
            let angle = p as f64 * rate;
            m.set(p, i, angle.sin());
            m.set(p, half + i, angle.cos());
        }
    }
    m
}
