//! Finite-difference verification of the analytic gradients.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::model::{Example, Model};
use super::tape::{ParamId, Tape};
use crate::encoding::{EncodedSentence, EncodedToken};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckOptions {
    /// Total number of coordinates to compare.
    pub coordinates: usize,
    /// Minimum number of coordinates drawn from each source embedding table.
    pub per_table: usize,
    /// Central difference step.
    pub step: f64,
    pub tolerance: f64,
    /// Denominator floor for the relative error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            coordinates: 240,
            per_table: 24,
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckEntry {
    pub param: String,
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    /// Tokens whose embedding-row gradients were compared for the sum
    /// identity, and how many of those matched bit for bit.
    pub identity_tokens: usize,
    pub identity_matches: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance && self.identity_matches == self.identity_tokens
    }

    /// Number of checked coordinates that belong to parameter `name`.
    pub fn count_for(&self, name: &str) -> usize {
        self.entries.iter().filter(|e| e.param == name).count()
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("param\trow\tcol\tanalytic\tnumeric\trel_error\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{}\t{}\t{}\t{:e}\t{:e}\t{:e}\n",
                e.param, e.row, e.col, e.analytic, e.numeric, e.rel_error
            ));
        }
        s
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} coordinates, max relative error {:.3e} (tolerance {:.0e}); sum identity {}/{}",
            self.entries.len(),
            self.max_rel_error,
            self.tolerance,
            self.identity_matches,
            self.identity_tokens
        )
    }
}

pub fn relative_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

fn used_rows(model: &Model, batch: &[&Example]) -> BTreeMap<ParamId, BTreeSet<usize>> {
    let mut out: BTreeMap<ParamId, BTreeSet<usize>> = BTreeMap::new();
    let subword = model.source_subword_table();
    let sparse = model.sparse_tables();
    for ex in batch {
        if let EncodedSentence::Tokens(tokens) = &ex.source {
            for t in tokens {
                match t {
                    EncodedToken::Subword { subword_id } => {
                        out.entry(subword).or_default().insert(*subword_id);
                    }
                    EncodedToken::LemmaFactored {
                        lemma_id,
                        feature_ids,
                    } => {
                        if let Some((l, f, _)) = sparse {
                            out.entry(l).or_default().insert(*lemma_id);
                            out.entry(f).or_default().extend(feature_ids.iter().copied());
                        }
                    }
                }
            }
        }
    }
    out
}

/// Rows of the gradient of each parameter table for tokens whose lemma and
/// features occur exactly once in the batch; each must equal the gradient of
/// that token's embedding row.
fn sum_identity(model: &Model, batch: &[&Example]) -> Result<(usize, usize)> {
    let Some((lemma_t, feature_t, _)) = model.sparse_tables() else {
        return Ok((0, 0));
    };
    let mut tape = Tape::new(model.params());
    let out = model.forward_batch(&mut tape, batch, None)?;
    let grads = tape.backward(out.loss);
    let Some(word_grads) = grads.node(out.source_embedding) else {
        return Ok((0, 0));
    };
    let tokens: Vec<&EncodedToken> = batch
        .iter()
        .flat_map(|e| match &e.source {
            EncodedSentence::Tokens(t) => t.iter().collect::<Vec<_>>(),
            EncodedSentence::Factored(_) => Vec::new(),
        })
        .collect();
    let mut lemma_n: BTreeMap<usize, usize> = BTreeMap::new();
    let mut feat_n: BTreeMap<usize, usize> = BTreeMap::new();
    for t in &tokens {
        if let EncodedToken::LemmaFactored {
            lemma_id,
            feature_ids,
        } = t
        {
            *lemma_n.entry(*lemma_id).or_default() += 1;
            for f in feature_ids {
                *feat_n.entry(*f).or_default() += 1;
            }
        }
    }
    let (mut checked, mut matched) = (0, 0);
    for (r, t) in tokens.iter().enumerate() {
        if let EncodedToken::LemmaFactored {
            lemma_id,
            feature_ids,
        } = t
        {
            if lemma_n[lemma_id] != 1 || feature_ids.iter().any(|f| feat_n[f] != 1) {
                continue;
            }
            checked += 1;
            let w = word_grads.row(r);
            let ok = grads.param(lemma_t).row(*lemma_id) == w
                && feature_ids
                    .iter()
                    .all(|&f| grads.param(feature_t).row(f) == w);
            if ok {
                matched += 1;
            }
        }
    }
    Ok((checked, matched))
}

/// Compare analytic and central-difference gradients of the dropout-free
/// teacher-forced loss on `batch`.
pub fn grad_check(model: &Model, batch: &[&Example], opts: &GradCheckOptions) -> Result<GradCheckReport> {
    if batch.is_empty() {
        return Err(Error::Config("gradient check needs at least one example".into()));
    }
    let mut tape = Tape::new(model.params());
    let out = model.forward_batch(&mut tape, batch, None)?;
    let grads = tape.backward(out.loss);
    drop(tape);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let used = used_rows(model, batch);
    let mut picks: BTreeSet<(ParamId, usize, usize)> = BTreeSet::new();

    // Guaranteed picks from the rows of each source table the batch touches.
    let mut tables: Vec<ParamId> = Vec::new();
    if let Some((l, f, s)) = model.sparse_tables() {
        tables.extend([l, f, s]);
    } else {
        tables.push(model.source_subword_table());
    }
    for t in tables {
        let Some(rows) = used.get(&t) else { continue };
        let rows: Vec<usize> = rows.iter().copied().collect();
        let cols = model.params().get(t).cols();
        let want = opts.per_table.min(rows.len() * cols);
        let mut guard = 0;
        let before = picks.len();
        while picks.len() - before < want && guard < want * 100 {
            let r = *rows.choose(&mut rng).expect("non-empty");
            picks.insert((t, r, rng.gen_range(0..cols)));
            guard += 1;
        }
    }
    // The rest: uniform over parameters, skipping rows no example reads.
    let ids: Vec<ParamId> = model.params().ids().collect();
    let padded: BTreeSet<ParamId> = model.padded_tables().into_iter().collect();
    let mut guard = 0;
    while picks.len() < opts.coordinates && guard < opts.coordinates * 100 {
        guard += 1;
        let id = *ids.choose(&mut rng).expect("parameters");
        let m = model.params().get(id);
        let row = match used.get(&id) {
            Some(rows) => **rows.iter().collect::<Vec<_>>().choose(&mut rng).expect("rows"),
            None if padded.contains(&id) => continue,
            None => rng.gen_range(0..m.rows()),
        };
        picks.insert((id, row, rng.gen_range(0..m.cols())));
    }

    let mut probe = model.clone();
    let mut entries = Vec::with_capacity(picks.len());
    let mut max_rel: f64 = 0.0;
    for (id, r, c) in picks {
        let orig = probe.params().get(id).get(r, c);
        probe.params_mut().get_mut(id).set(r, c, orig + opts.step);
        let plus = probe.loss(batch)?;
        probe.params_mut().get_mut(id).set(r, c, orig - opts.step);
        let minus = probe.loss(batch)?;
        probe.params_mut().get_mut(id).set(r, c, orig);
        let numeric = (plus - minus) / (2.0 * opts.step);
        let analytic = grads.param(id).get(r, c);
        let rel = relative_error(analytic, numeric, opts.floor);
        max_rel = max_rel.max(rel);
        entries.push(GradCheckEntry {
            param: model.params().name(id).to_string(),
            row: r,
            col: c,
            analytic,
            numeric,
            rel_error: rel,
        });
    }
    let (identity_tokens, identity_matches) = sum_identity(model, batch)?;
    Ok(GradCheckReport {
        entries,
        max_rel_error: max_rel,
        tolerance: opts.tolerance,
        identity_tokens,
        identity_matches,
    })
}
