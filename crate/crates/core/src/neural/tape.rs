//! Reverse-mode differentiation over a linear tape of matrix operations.
//!
//! Parameters live in a [`ParamStore`] and are referenced by id from the ops
//! that read them, so forward passes never copy weight matrices.

use std::collections::HashMap;

use super::tensor::{gemm, Mat, View};
use crate::encoding::{EncodedToken, FactoredToken};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Mat>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.values.len());
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|m| m.data().len()).sum()
    }

    /// Zeroed matrices with the shapes of every parameter.
    pub fn zeros_like(&self) -> Vec<Mat> {
        self.values
            .iter()
            .map(|m| Mat::zeros(m.rows(), m.cols()))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Attention block: query rows `q_start..q_start+q_len` attend to key rows
/// `k_start..k_start+k_len`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub q_start: usize,
    pub q_len: usize,
    pub k_start: usize,
    pub k_len: usize,
}

enum Op {
    Const,
    EmbedTokens {
        lemma: Option<ParamId>,
        feature: Option<ParamId>,
        subword: ParamId,
        tokens: Vec<EncodedToken>,
    },
    EmbedFactored {
        subword: ParamId,
        combination: ParamId,
        position: ParamId,
        tokens: Vec<FactoredToken>,
    },
    Gather {
        table: ParamId,
        ids: Vec<usize>,
    },
    Linear {
        x: Var,
        w: ParamId,
        b: ParamId,
    },
    Add(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: ParamId,
        beta: ParamId,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        segments: Vec<Segment>,
        /// Softmax probabilities per (segment, head), row-major q_len × k_len.
        probs: Vec<Vec<f64>>,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        smoothing: f64,
        probs: Mat,
    },
}

struct Node {
    value: Mat,
    op: Op,
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    pub params: Vec<Mat>,
    nodes: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn param(&self, id: ParamId) -> &Mat {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.params[id.0]
    }

    /// Gradient with respect to an intermediate value, if it received any.
    pub fn node(&self, v: Var) -> Option<&Mat> {
        self.nodes[v.0].as_ref()
    }
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

fn check_id(table: &Mat, id: usize, what: &str) {
    assert!(
        id < table.rows(),
        "{what} id {id} out of range for table of {} rows",
        table.rows()
    );
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Const)
    }

    /// Row per token: `lemma + Σ features` (ascending id order) or `subword`.
    /// Ids must have been range-checked by the caller.
    pub fn embed_tokens(
        &mut self,
        lemma: Option<ParamId>,
        feature: Option<ParamId>,
        subword: ParamId,
        tokens: Vec<EncodedToken>,
    ) -> Var {
        let sub = self.params.get(subword);
        let d = sub.cols();
        let mut out = Mat::zeros(tokens.len(), d);
        for (r, tok) in tokens.iter().enumerate() {
            let row = out.row_mut(r);
            match tok {
                EncodedToken::Subword { subword_id } => {
                    check_id(sub, *subword_id, "subword");
                    row.copy_from_slice(sub.row(*subword_id));
                }
                EncodedToken::LemmaFactored {
                    lemma_id,
                    feature_ids,
                } => {
                    let lt = self.params.get(lemma.expect("lemma table"));
                    check_id(lt, *lemma_id, "lemma");
                    row.copy_from_slice(lt.row(*lemma_id));
                    let ft = self.params.get(feature.expect("feature table"));
                    for &f in feature_ids {
                        check_id(ft, f, "feature");
                        for (o, x) in row.iter_mut().zip(ft.row(f)) {
                            *o += x;
                        }
                    }
                }
            }
        }
        self.push(
            out,
            Op::EmbedTokens {
                lemma,
                feature,
                subword,
                tokens,
            },
        )
    }

    /// Row per token: `[subword | combination | position]`.
    pub fn embed_factored(
        &mut self,
        subword: ParamId,
        combination: ParamId,
        position: ParamId,
        tokens: Vec<FactoredToken>,
    ) -> Var {
        let (s, c, p) = (
            self.params.get(subword),
            self.params.get(combination),
            self.params.get(position),
        );
        let (ds, dc, dp) = (s.cols(), c.cols(), p.cols());
        let mut out = Mat::zeros(tokens.len(), ds + dc + dp);
        for (r, t) in tokens.iter().enumerate() {
            check_id(s, t.subword_id, "subword");
            check_id(c, t.combination_id, "combination");
            let row = out.row_mut(r);
            row[..ds].copy_from_slice(s.row(t.subword_id));
            row[ds..ds + dc].copy_from_slice(c.row(t.combination_id));
            row[ds + dc..].copy_from_slice(p.row(t.position.index()));
        }
        self.push(
            out,
            Op::EmbedFactored {
                subword,
                combination,
                position,
                tokens,
            },
        )
    }

    pub fn gather(&mut self, table: ParamId, ids: Vec<usize>) -> Var {
        let t = self.params.get(table);
        let mut out = Mat::zeros(ids.len(), t.cols());
        for (r, &id) in ids.iter().enumerate() {
            check_id(t, id, "gather");
            out.row_mut(r).copy_from_slice(t.row(id));
        }
        self.push(out, Op::Gather { table, ids })
    }

    /// `x · W + b` with `W: in × out`, `b: 1 × out`.
    pub fn linear(&mut self, x: Var, w: ParamId, b: ParamId) -> Var {
        let xv = &self.nodes[x.0].value;
        let wv = self.params.get(w);
        let bv = self.params.get(b);
        assert_eq!(xv.cols(), wv.rows(), "linear {}", self.params.name(w));
        let (n, out_dim) = (xv.rows(), wv.cols());
        let mut y = Mat::zeros(n, out_dim);
        for r in 0..n {
            y.row_mut(r).copy_from_slice(bv.row(0));
        }
        gemm(
            n,
            xv.cols(),
            out_dim,
            1.0,
            xv.data(),
            View::rowmajor(0, xv.cols()),
            wv.data(),
            View::rowmajor(0, out_dim),
            1.0,
            y.data_mut(),
            View::rowmajor(0, out_dim),
        );
        self.push(y, Op::Linear { x, w, b })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut y = self.nodes[a.0].value.clone();
        y.add_assign(&self.nodes[b.0].value);
        self.push(y, Op::Add(a, b))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let mut y = self.nodes[x.0].value.clone();
        y.data_mut().iter_mut().for_each(|v| *v *= s);
        self.push(y, Op::Scale(x, s))
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let mut y = self.nodes[x.0].value.clone();
        y.data_mut().iter_mut().for_each(|v| {
            let u = *v;
            *v = 0.5 * u * (1.0 + (GELU_C * (u + GELU_A * u * u * u)).tanh());
        });
        self.push(y, Op::Gelu(x))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: ParamId, beta: ParamId) -> Var {
        let xv = &self.nodes[x.0].value;
        let (n, d) = xv.shape();
        let g = self.params.get(gamma).row(0);
        let b = self.params.get(beta).row(0);
        let mut xhat = Mat::zeros(n, d);
        let mut y = Mat::zeros(n, d);
        let mut inv_std = Vec::with_capacity(n);
        for r in 0..n {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(is);
            let xh = xhat.row_mut(r);
            for (o, v) in xh.iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
            let yr = y.row_mut(r);
            for j in 0..d {
                yr[j] = g[j] * xhat.get(r, j) + b[j];
            }
        }
        self.push(
            y,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// Multi-head scaled dot-product attention over the given segments.
    /// `q`, `k`, `v` hold all heads side by side (`heads * d_head` columns).
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        segments: Vec<Segment>,
        causal: bool,
    ) -> Var {
        let (qv, kv, vv) = (
            &self.nodes[q.0].value,
            &self.nodes[k.0].value,
            &self.nodes[v.0].value,
        );
        let d = qv.cols();
        assert_eq!(d % heads, 0);
        assert_eq!(kv.cols(), d);
        assert_eq!(vv.cols(), d);
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Mat::zeros(qv.rows(), d);
        let mut probs = Vec::with_capacity(segments.len() * heads);
        for seg in &segments {
            if causal {
                assert_eq!(seg.q_len, seg.k_len, "causal attention needs square segments");
            }
            for h in 0..heads {
                let mut p = vec![0.0; seg.q_len * seg.k_len];
                gemm(
                    seg.q_len,
                    dh,
                    seg.k_len,
                    scale,
                    qv.data(),
                    View::rowmajor(seg.q_start * d + h * dh, d),
                    kv.data(),
                    View::transposed(seg.k_start * d + h * dh, d),
                    0.0,
                    &mut p,
                    View::rowmajor(0, seg.k_len),
                );
                for i in 0..seg.q_len {
                    let row = &mut p[i * seg.k_len..(i + 1) * seg.k_len];
                    let visible = if causal { i + 1 } else { seg.k_len };
                    let max = row[..visible].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for x in row[..visible].iter_mut() {
                        *x = (*x - max).exp();
                        sum += *x;
                    }
                    for x in row[..visible].iter_mut() {
                        *x /= sum;
                    }
                    row[visible..].iter_mut().for_each(|x| *x = 0.0);
                }
                gemm(
                    seg.q_len,
                    seg.k_len,
                    dh,
                    1.0,
                    &p,
                    View::rowmajor(0, seg.k_len),
                    vv.data(),
                    View::rowmajor(seg.k_start * d + h * dh, d),
                    0.0,
                    out.data_mut(),
                    View::rowmajor(seg.q_start * d + h * dh, d),
                );
                probs.push(p);
            }
        }
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                segments,
                probs,
            },
        )
    }

    /// Multiply by a precomputed mask (entries 0 or 1/(1-p)).
    pub fn dropout(&mut self, x: Var, mask: Vec<f64>) -> Var {
        let mut y = self.nodes[x.0].value.clone();
        assert_eq!(mask.len(), y.data().len());
        for (v, m) in y.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        self.push(y, Op::Dropout { x, mask })
    }

    /// Mean label-smoothed cross-entropy over rows; a 1×1 result.
    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<usize>, smoothing: f64) -> Var {
        let lv = &self.nodes[logits.0].value;
        let (n, classes) = lv.shape();
        assert_eq!(n, targets.len());
        let mut probs = Mat::zeros(n, classes);
        let mut total = 0.0;
        for r in 0..n {
            let row = lv.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            let pr = probs.row_mut(r);
            let mut mean_logp = 0.0;
            for j in 0..classes {
                let lp = row[j] - lse;
                pr[j] = lp.exp();
                mean_logp += lp;
            }
            mean_logp /= classes as f64;
            let t = targets[r];
            assert!(t < classes, "target {t} out of range");
            let lp_t = row[t] - lse;
            total += -(1.0 - smoothing) * lp_t - smoothing * mean_logp;
        }
        let loss = if n == 0 { 0.0 } else { total / n as f64 };
        self.push(
            Mat::from_vec(1, 1, vec![loss]),
            Op::CrossEntropy {
                logits,
                targets,
                smoothing,
                probs,
            },
        )
    }

    /// Backpropagate from a scalar node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.nodes[loss.0].value.shape(), (1, 1), "backward from a non-scalar");
        let mut pg = self.params.zeros_like();
        let mut ng: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        ng[loss.0] = Some(Mat::from_vec(1, 1, vec![1.0]));

        fn acc(ng: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut ng[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }
        fn acc_with(ng: &mut [Option<Mat>], v: Var, rows: usize, cols: usize) -> &mut Mat {
            ng[v.0].get_or_insert_with(|| Mat::zeros(rows, cols))
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = ng[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Const => {}
                Op::EmbedTokens {
                    lemma,
                    feature,
                    subword,
                    tokens,
                } => {
                    for (r, tok) in tokens.iter().enumerate() {
                        let gr = g.row(r);
                        match tok {
                            EncodedToken::Subword { subword_id } => {
                                add_row(&mut pg[subword.0], *subword_id, gr)
                            }
                            EncodedToken::LemmaFactored {
                                lemma_id,
                                feature_ids,
                            } => {
                                add_row(&mut pg[lemma.unwrap().0], *lemma_id, gr);
                                for &f in feature_ids {
                                    add_row(&mut pg[feature.unwrap().0], f, gr);
                                }
                            }
                        }
                    }
                }
                Op::EmbedFactored {
                    subword,
                    combination,
                    position,
                    tokens,
                } => {
                    let ds = self.params.get(*subword).cols();
                    let dc = self.params.get(*combination).cols();
                    for (r, t) in tokens.iter().enumerate() {
                        let gr = g.row(r);
                        add_row(&mut pg[subword.0], t.subword_id, &gr[..ds]);
                        add_row(&mut pg[combination.0], t.combination_id, &gr[ds..ds + dc]);
                        add_row(&mut pg[position.0], t.position.index(), &gr[ds + dc..]);
                    }
                }
                Op::Gather { table, ids } => {
                    for (r, &id) in ids.iter().enumerate() {
                        add_row(&mut pg[table.0], id, g.row(r));
                    }
                }
                Op::Linear { x, w, b } => {
                    let xv = &self.nodes[x.0].value;
                    let wv = self.params.get(*w);
                    let (n, din) = xv.shape();
                    let dout = wv.cols();
                    // dW += xᵀ g
                    gemm(
                        din,
                        n,
                        dout,
                        1.0,
                        xv.data(),
                        View::transposed(0, din),
                        g.data(),
                        View::rowmajor(0, dout),
                        1.0,
                        pg[w.0].data_mut(),
                        View::rowmajor(0, dout),
                    );
                    let gb = pg[b.0].data_mut();
                    for r in 0..n {
                        for (o, v) in gb.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    // dx += g Wᵀ
                    let gx = acc_with(&mut ng, *x, n, din);
                    gemm(
                        n,
                        dout,
                        din,
                        1.0,
                        g.data(),
                        View::rowmajor(0, dout),
                        wv.data(),
                        View::transposed(0, dout),
                        1.0,
                        gx.data_mut(),
                        View::rowmajor(0, din),
                    );
                }
                Op::Add(a, b) => {
                    acc(&mut ng, *b, g.clone());
                    acc(&mut ng, *a, g.clone());
                }
                Op::Scale(x, s) => {
                    let mut gx = g.clone();
                    gx.data_mut().iter_mut().for_each(|v| *v *= s);
                    acc(&mut ng, *x, gx);
                }
                Op::Gelu(x) => {
                    let xv = &self.nodes[x.0].value;
                    let mut gx = g.clone();
                    for (gv, &u) in gx.data_mut().iter_mut().zip(xv.data()) {
                        let inner = GELU_C * (u + GELU_A * u * u * u);
                        let t = inner.tanh();
                        let d = 0.5 * (1.0 + t)
                            + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * u * u);
                        *gv *= d;
                    }
                    acc(&mut ng, *x, gx);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let (n, d) = xhat.shape();
                    let gam = self.params.get(*gamma).row(0).to_vec();
                    let mut gx = Mat::zeros(n, d);
                    let mut dgam = vec![0.0; d];
                    let mut dbeta = vec![0.0; d];
                    for r in 0..n {
                        let gr = g.row(r);
                        let xh = xhat.row(r);
                        let mut sum_dxh = 0.0;
                        let mut sum_dxh_xh = 0.0;
                        for j in 0..d {
                            dgam[j] += gr[j] * xh[j];
                            dbeta[j] += gr[j];
                            let dxh = gr[j] * gam[j];
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * xh[j];
                        }
                        let k = inv_std[r] / d as f64;
                        let out = gx.row_mut(r);
                        for j in 0..d {
                            let dxh = gr[j] * gam[j];
                            out[j] = k * (d as f64 * dxh - sum_dxh - xh[j] * sum_dxh_xh);
                        }
                    }
                    add_row(&mut pg[gamma.0], 0, &dgam);
                    add_row(&mut pg[beta.0], 0, &dbeta);
                    acc(&mut ng, *x, gx);
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    heads,
                    segments,
                    probs,
                } => {
                    let (qv, kv, vv) = (
                        &self.nodes[q.0].value,
                        &self.nodes[k.0].value,
                        &self.nodes[v.0].value,
                    );
                    let d = qv.cols();
                    let dh = d / heads;
                    let scale = 1.0 / (dh as f64).sqrt();
                    let mut gq = Mat::zeros(qv.rows(), d);
                    let mut gk = Mat::zeros(kv.rows(), d);
                    let mut gv = Mat::zeros(vv.rows(), d);
                    let mut pi = 0;
                    for seg in segments {
                        for h in 0..*heads {
                            let p = &probs[pi];
                            pi += 1;
                            let (ql, kl) = (seg.q_len, seg.k_len);
                            let go = View::rowmajor(seg.q_start * d + h * dh, d);
                            // dV += Pᵀ dO
                            gemm(
                                kl,
                                ql,
                                dh,
                                1.0,
                                p,
                                View::transposed(0, kl),
                                g.data(),
                                go,
                                1.0,
                                gv.data_mut(),
                                View::rowmajor(seg.k_start * d + h * dh, d),
                            );
                            // dP = dO Vᵀ
                            let mut dp = vec![0.0; ql * kl];
                            gemm(
                                ql,
                                dh,
                                kl,
                                1.0,
                                g.data(),
                                go,
                                vv.data(),
                                View::transposed(seg.k_start * d + h * dh, d),
                                0.0,
                                &mut dp,
                                View::rowmajor(0, kl),
                            );
                            // dS = P ⊙ (dP − rowsum(dP ⊙ P))
                            for i in 0..ql {
                                let pr = &p[i * kl..(i + 1) * kl];
                                let dr = &mut dp[i * kl..(i + 1) * kl];
                                let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                                for (dv, pv) in dr.iter_mut().zip(pr) {
                                    *dv = pv * (*dv - dot);
                                }
                            }
                            // dQ += scale · dS K ; dK += scale · dSᵀ Q
                            gemm(
                                ql,
                                kl,
                                dh,
                                scale,
                                &dp,
                                View::rowmajor(0, kl),
                                kv.data(),
                                View::rowmajor(seg.k_start * d + h * dh, d),
                                1.0,
                                gq.data_mut(),
                                View::rowmajor(seg.q_start * d + h * dh, d),
                            );
                            gemm(
                                kl,
                                ql,
                                dh,
                                scale,
                                &dp,
                                View::transposed(0, kl),
                                qv.data(),
                                View::rowmajor(seg.q_start * d + h * dh, d),
                                1.0,
                                gk.data_mut(),
                                View::rowmajor(seg.k_start * d + h * dh, d),
                            );
                        }
                    }
                    acc(&mut ng, *q, gq);
                    acc(&mut ng, *k, gk);
                    acc(&mut ng, *v, gv);
                }
                Op::Dropout { x, mask } => {
                    let mut gx = g.clone();
                    for (gv, m) in gx.data_mut().iter_mut().zip(mask) {
                        *gv *= m;
                    }
                    acc(&mut ng, *x, gx);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    smoothing,
                    probs,
                } => {
                    let (n, classes) = probs.shape();
                    let upstream = g.get(0, 0) / n.max(1) as f64;
                    let uniform = smoothing / classes as f64;
                    let mut gl = probs.clone();
                    for r in 0..n {
                        let row = gl.row_mut(r);
                        for x in row.iter_mut() {
                            *x -= uniform;
                        }
                        row[targets[r]] -= 1.0 - smoothing;
                        for x in row.iter_mut() {
                            *x *= upstream;
                        }
                    }
                    acc(&mut ng, *logits, gl);
                }
            }
            ng[idx] = Some(g);
        }
        Gradients {
            params: pg,
            nodes: ng,
        }
    }
}

fn add_row(m: &mut Mat, r: usize, g: &[f64]) {
    for (o, v) in m.row_mut(r).iter_mut().zip(g) {
        *o += v;
    }
}
