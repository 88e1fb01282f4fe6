//! Context encoders: convolutional, recurrent, self-attentive and
//! feature-attentive.
//!
//! Every encoder reads only the real (non-pad) rows of the embedded context,
//! so attention weights are normalized over real positions and pad rows can
//! never influence the output.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{uniform, EmbeddedContext};
use crate::error::{Error, Result};
use crate::tensorgrad::{ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EncoderKind {
    Cnn,
    Pcnn,
    Lstm,
    BiLstm,
    AttBiLstm,
    AttBiLstmZYang,
    AttCnn,
    Ian,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 8] = [
        EncoderKind::Cnn,
        EncoderKind::Pcnn,
        EncoderKind::Lstm,
        EncoderKind::BiLstm,
        EncoderKind::AttBiLstm,
        EncoderKind::AttBiLstmZYang,
        EncoderKind::AttCnn,
        EncoderKind::Ian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Cnn => "cnn",
            EncoderKind::Pcnn => "pcnn",
            EncoderKind::Lstm => "lstm",
            EncoderKind::BiLstm => "bilstm",
            EncoderKind::AttBiLstm => "att-blstm",
            EncoderKind::AttBiLstmZYang => "att-blstm-zyang",
            EncoderKind::AttCnn => "att-cnn",
            EncoderKind::Ian => "ian",
        }
    }

    pub fn is_attentive(self) -> bool {
        matches!(
            self,
            EncoderKind::AttBiLstm | EncoderKind::AttBiLstmZYang | EncoderKind::AttCnn | EncoderKind::Ian
        )
    }

    pub fn uses_features(self) -> bool {
        matches!(self, EncoderKind::AttCnn | EncoderKind::Ian)
    }

    /// Position embeddings are on by default for the convolutional family.
    pub fn default_positions(self) -> bool {
        matches!(self, EncoderKind::Cnn | EncoderKind::Pcnn | EncoderKind::AttCnn)
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EncoderKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown encoder {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureMode {
    /// Attitude participants only.
    AttEnds,
    /// Participants followed by frame terms.
    AttEf,
}

impl FeatureMode {
    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::AttEnds => "att-ends",
            FeatureMode::AttEf => "att-ef",
        }
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "att-ends" => Ok(FeatureMode::AttEnds),
            "att-ef" => Ok(FeatureMode::AttEf),
            other => Err(Error::Config(format!("unknown feature set {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    /// Maximum context length in terms.
    pub n: usize,
    /// Recurrent hidden size; also the attention MLP width.
    pub hidden: usize,
    pub filters: usize,
    pub window: usize,
    /// Maximum number of attention features.
    pub k: usize,
    pub features: FeatureMode,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            kind: EncoderKind::AttBiLstm,
            n: 50,
            hidden: 16,
            filters: 32,
            window: 3,
            k: 3,
            features: FeatureMode::AttEf,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("n must be at least 2, got {}", self.n)));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden size must be positive".into()));
        }
        if self.k < 2 {
            return Err(Error::Config(format!("k must be at least 2, got {}", self.k)));
        }
        if self.filters == 0 || self.window == 0 {
            return Err(Error::Config("filters and window must be positive".into()));
        }
        Ok(())
    }

    /// Size z of the context vector produced for an input row width.
    pub fn output_size(&self, row_width: usize) -> usize {
        match self.kind {
            EncoderKind::Cnn => self.filters,
            EncoderKind::Pcnn => 3 * self.filters,
            EncoderKind::Lstm => self.hidden,
            EncoderKind::BiLstm | EncoderKind::AttBiLstm | EncoderKind::AttBiLstmZYang => 2 * self.hidden,
            EncoderKind::AttCnn => 3 * self.filters + row_width,
            EncoderKind::Ian => 4 * self.hidden,
        }
    }
}

/// Materialized encoder result for one context.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    pub s: Vec<f64>,
    /// Attention over the n positions; zero on pads.
    pub alpha: Option<Vec<f64>>,
    pub z: usize,
}

/// Encoder result on the tape; `alpha` covers real positions only.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    pub s: Var,
    pub alpha: Option<Var>,
}

impl Encoded {
    pub fn materialize(&self, tape: &Tape, n: usize) -> EncoderOutput {
        let s = tape.value(self.s).data().to_vec();
        let alpha = self.alpha.map(|a| {
            let raw = tape.value(a).data();
            let total: f64 = raw.iter().sum();
            let mut out: Vec<f64> = raw.iter().map(|v| v / total).collect();
            out.resize(n.max(raw.len()), 0.0);
            out
        });
        EncoderOutput { z: s.len(), s, alpha }
    }
}

fn xavier<R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    uniform(rng, shape, (6.0 / (fan_in + fan_out) as f64).sqrt())
}

#[derive(Clone, Debug)]
pub struct Conv {
    pub w: ParamId,
    pub b: ParamId,
}

impl Conv {
    fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, width: usize, window: usize, filters: usize) -> Result<Self> {
        Ok(Conv {
            w: store.add(
                format!("{name}.w"),
                xavier(rng, &[window, width, filters], window * width, filters),
            )?,
            b: store.add(format!("{name}.b"), Tensor::zeros(&[filters]))?,
        })
    }

    /// tanh(conv1d(x)), one row per position.
    fn activations(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let c = tape.conv1d(x, w, b)?;
        Ok(tape.tanh(c))
    }
}

/// Single-direction LSTM; gates packed as [input, forget, output, candidate].
#[derive(Clone, Debug)]
pub struct Lstm {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, input: usize, hidden: usize) -> Result<Self> {
        let mut bias = Tensor::zeros(&[4 * hidden]);
        bias.data_mut()[hidden..2 * hidden].fill(1.0);
        Ok(Lstm {
            w_x: store.add(format!("{name}.w_x"), xavier(rng, &[input, 4 * hidden], input, hidden))?,
            w_h: store.add(format!("{name}.w_h"), xavier(rng, &[hidden, 4 * hidden], hidden, hidden))?,
            b: store.add(format!("{name}.b"), bias)?,
            hidden,
        })
    }

    /// Hidden states for each row of `x`, in row order.
    pub fn run(&self, tape: &mut Tape, store: &ParamStore, x: Var, reverse: bool) -> Result<Vec<Var>> {
        let n = tape.shape(x)[0];
        let h = self.hidden;
        let wx = tape.param(store, self.w_x);
        let wh = tape.param(store, self.w_h);
        let b = tape.param(store, self.b);
        let pre = tape.matmul(x, wx)?;
        let pre = tape.add_row(pre, b)?;

        let mut states = vec![None; n];
        let mut prev: Option<(Var, Var)> = None;
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..n).rev())
        } else {
            Box::new(0..n)
        };
        for t in order {
            let mut gates = tape.row(pre, t)?;
            if let Some((hp, _)) = prev {
                let rec = tape.matmul(hp, wh)?;
                gates = tape.add(gates, rec)?;
            }
            let sig = tape.slice(gates, 0, 0, 3 * h)?;
            let sig = tape.sigmoid(sig);
            let input_gate = tape.slice(sig, 0, 0, h)?;
            let output_gate = tape.slice(sig, 0, 2 * h, 3 * h)?;
            let cand = tape.slice(gates, 0, 3 * h, 4 * h)?;
            let cand = tape.tanh(cand);
            let mut c = tape.mul(input_gate, cand)?;
            if let Some((_, cp)) = prev {
                let forget_gate = tape.slice(sig, 0, h, 2 * h)?;
                let kept = tape.mul(forget_gate, cp)?;
                c = tape.add(c, kept)?;
            }
            let squashed = tape.tanh(c);
            let hn = tape.mul(output_gate, squashed)?;
            states[t] = Some(hn);
            prev = Some((hn, c));
        }
        Ok(states.into_iter().map(|s| s.expect("every step visited")).collect())
    }
}

#[derive(Clone, Debug)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

impl BiLstm {
    fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, input: usize, hidden: usize) -> Result<Self> {
        Ok(BiLstm {
            forward: Lstm::new(store, rng, &format!("{name}.fwd"), input, hidden)?,
            backward: Lstm::new(store, rng, &format!("{name}.bwd"), input, hidden)?,
        })
    }

    /// Per-position [→h_i ; ←h_i] stacked into an (n × 2h) matrix.
    pub fn states(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let fwd = self.forward.run(tape, store, x, false)?;
        let bwd = self.backward.run(tape, store, x, true)?;
        let rows = fwd
            .iter()
            .zip(&bwd)
            .map(|(&f, &b)| tape.concat(&[f, b], 0))
            .collect::<Result<Vec<_>>>()?;
        tape.stack(&rows)
    }
}

/// Attention weights α = softmax(scores) with s = weighted sum of rows.
fn attend(tape: &mut Tape, scores: Var, rows: Var) -> Result<(Var, Var)> {
    let n = tape.value(scores).len();
    let scores = tape.reshape(scores, &[n])?;
    let alpha = tape.softmax(scores)?;
    let pooled = tape.matmul(alpha, rows)?;
    Ok((alpha, pooled))
}

#[derive(Clone, Debug)]
enum Body {
    Cnn(Conv),
    Pcnn(Conv),
    Lstm(Lstm),
    BiLstm(BiLstm),
    AttBiLstm {
        rnn: BiLstm,
        w: ParamId,
    },
    AttBiLstmZYang {
        rnn: BiLstm,
        w_a: ParamId,
        b_a: ParamId,
        u_w: ParamId,
    },
    AttCnn {
        conv: Conv,
        w_x: ParamId,
        w_f: ParamId,
        b: ParamId,
        w_out: ParamId,
    },
    Ian {
        context: BiLstm,
        features: BiLstm,
        w_c: ParamId,
        b_c: ParamId,
        w_t: ParamId,
        b_t: ParamId,
    },
}

/// Row indices of the attention features: subject, object, then (att-ef)
/// frame positions in order, cut to at most `k`.
pub fn select_features(subj_pos: usize, obj_pos: usize, frames: &[usize], mode: FeatureMode, k: usize) -> Vec<usize> {
    let mut out = vec![subj_pos, obj_pos];
    if mode == FeatureMode::AttEf {
        out.extend(frames.iter().copied());
    }
    out.truncate(k.max(2));
    out
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    pub row_width: usize,
    body: Body,
}

impl Encoder {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, cfg: &EncoderConfig, row_width: usize) -> Result<Self> {
        cfg.validate()?;
        let (h, f, w) = (cfg.hidden, cfg.filters, row_width);
        let body = match cfg.kind {
            EncoderKind::Cnn => Body::Cnn(Conv::new(store, rng, "cnn", w, cfg.window, f)?),
            EncoderKind::Pcnn => Body::Pcnn(Conv::new(store, rng, "pcnn", w, cfg.window, f)?),
            EncoderKind::Lstm => Body::Lstm(Lstm::new(store, rng, "lstm", w, h)?),
            EncoderKind::BiLstm => Body::BiLstm(BiLstm::new(store, rng, "bilstm", w, h)?),
            EncoderKind::AttBiLstm => Body::AttBiLstm {
                rnn: BiLstm::new(store, rng, "bilstm", w, h)?,
                w: store.add("att.w", xavier(rng, &[2 * h, 1], 2 * h, 1))?,
            },
            EncoderKind::AttBiLstmZYang => Body::AttBiLstmZYang {
                rnn: BiLstm::new(store, rng, "bilstm", w, h)?,
                w_a: store.add("att.w_a", xavier(rng, &[2 * h, 2 * h], 2 * h, 2 * h))?,
                b_a: store.add("att.b_a", Tensor::zeros(&[2 * h]))?,
                u_w: store.add("att.u_w", xavier(rng, &[2 * h, 1], 2 * h, 1))?,
            },
            EncoderKind::AttCnn => Body::AttCnn {
                conv: Conv::new(store, rng, "pcnn", w, cfg.window, f)?,
                w_x: store.add("att.w_x", xavier(rng, &[w, h], 2 * w, h))?,
                w_f: store.add("att.w_f", xavier(rng, &[w, h], 2 * w, h))?,
                b: store.add("att.b", Tensor::zeros(&[h]))?,
                w_out: store.add("att.w_out", xavier(rng, &[h, 1], h, 1))?,
            },
            EncoderKind::Ian => Body::Ian {
                context: BiLstm::new(store, rng, "ian.context", w, h)?,
                features: BiLstm::new(store, rng, "ian.features", w, h)?,
                w_c: store.add("ian.w_c", xavier(rng, &[2 * h, 2 * h], 2 * h, 2 * h))?,
                b_c: store.add("ian.b_c", Tensor::zeros(&[1]))?,
                w_t: store.add("ian.w_t", xavier(rng, &[2 * h, 2 * h], 2 * h, 2 * h))?,
                b_t: store.add("ian.b_t", Tensor::zeros(&[1]))?,
            },
        };
        Ok(Encoder {
            cfg: cfg.clone(),
            row_width,
            body,
        })
    }

    pub fn kind(&self) -> EncoderKind {
        self.cfg.kind
    }

    pub fn output_size(&self) -> usize {
        self.cfg.output_size(self.row_width)
    }

    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, ctx: &EmbeddedContext) -> Result<Encoded> {
        let width = tape.shape(ctx.x).get(1).copied().unwrap_or(0);
        if width != self.row_width {
            return Err(Error::shape(
                "encode",
                format!("input rows of width {width}, encoder expects {}", self.row_width),
            ));
        }
        let x = tape.slice(ctx.x, 0, 0, ctx.n_real)?;
        match &self.body {
            Body::Cnn(conv) => {
                let c = conv.activations(tape, store, x)?;
                Ok(Encoded {
                    s: tape.max_pool(c)?,
                    alpha: None,
                })
            }
            Body::Pcnn(conv) => Ok(Encoded {
                s: piecewise(tape, store, conv, x, ctx.subj_pos, ctx.obj_pos)?,
                alpha: None,
            }),
            Body::Lstm(lstm) => {
                let states = lstm.run(tape, store, x, false)?;
                Ok(Encoded {
                    s: *states.last().expect("non-empty context"),
                    alpha: None,
                })
            }
            Body::BiLstm(rnn) => {
                let h = rnn.states(tape, store, x)?;
                Ok(Encoded {
                    s: tape.row(h, ctx.n_real - 1)?,
                    alpha: None,
                })
            }
            Body::AttBiLstm { rnn, w } => {
                let h = rnn.states(tape, store, x)?;
                let m = tape.tanh(h);
                let w = tape.param(store, *w);
                let u = tape.matmul(m, w)?;
                let (alpha, pooled) = attend(tape, u, h)?;
                Ok(Encoded {
                    s: tape.tanh(pooled),
                    alpha: Some(alpha),
                })
            }
            Body::AttBiLstmZYang { rnn, w_a, b_a, u_w } => {
                let h = rnn.states(tape, store, x)?;
                let w_a = tape.param(store, *w_a);
                let b_a = tape.param(store, *b_a);
                let u_w = tape.param(store, *u_w);
                let v = tape.matmul(h, w_a)?;
                let v = tape.add_row(v, b_a)?;
                let v = tape.tanh(v);
                let u = tape.matmul(v, u_w)?;
                let (alpha, pooled) = attend(tape, u, h)?;
                Ok(Encoded {
                    s: pooled,
                    alpha: Some(alpha),
                })
            }
            Body::AttCnn {
                conv,
                w_x,
                w_f,
                b,
                w_out,
            } => {
                let feats = select_features(ctx.subj_pos, ctx.obj_pos, &ctx.frame_positions, self.cfg.features, self.cfg.k);
                let piece = piecewise(tape, store, conv, x, ctx.subj_pos, ctx.obj_pos)?;
                let w_x = tape.param(store, *w_x);
                let w_f = tape.param(store, *w_f);
                let b = tape.param(store, *b);
                let w_out = tape.param(store, *w_out);
                let projected = tape.matmul(x, w_x)?;
                let mut summaries = Vec::with_capacity(feats.len());
                let mut alphas = Vec::with_capacity(feats.len());
                for &pos in &feats {
                    let f = tape.row(x, pos)?;
                    let fp = tape.matmul(f, w_f)?;
                    let fp = tape.add(fp, b)?;
                    let hidden = tape.add_row(projected, fp)?;
                    let hidden = tape.tanh(hidden);
                    let e = tape.matmul(hidden, w_out)?;
                    let (alpha, summary) = attend(tape, e, x)?;
                    alphas.push(alpha);
                    summaries.push(summary);
                }
                let summaries = tape.stack(&summaries)?;
                let attended = tape.mean_rows(summaries)?;
                let alphas = tape.stack(&alphas)?;
                let alpha = tape.mean_rows(alphas)?;
                Ok(Encoded {
                    s: tape.concat(&[piece, attended], 0)?,
                    alpha: Some(alpha),
                })
            }
            Body::Ian {
                context,
                features,
                w_c,
                b_c,
                w_t,
                b_t,
            } => {
                let feats = select_features(ctx.subj_pos, ctx.obj_pos, &ctx.frame_positions, self.cfg.features, self.cfg.k);
                let rows = feats.iter().map(|&p| tape.row(x, p)).collect::<Result<Vec<_>>>()?;
                let fx = tape.stack(&rows)?;
                let c = context.states(tape, store, x)?;
                let t = features.states(tape, store, fx)?;
                let c_mean = tape.mean_rows(c)?;
                let t_mean = tape.mean_rows(t)?;
                let (gamma, c_vec) = interactive(tape, store, c, t_mean, *w_c, *b_c)?;
                let (_, t_vec) = interactive(tape, store, t, c_mean, *w_t, *b_t)?;
                Ok(Encoded {
                    s: tape.concat(&[c_vec, t_vec], 0)?,
                    alpha: Some(gamma),
                })
            }
        }
    }
}

/// Attention over `rows` guided by the pooled state of the other side:
/// softmax_i(tanh(rows_i · W · other + b)).
fn interactive(tape: &mut Tape, store: &ParamStore, rows: Var, other: Var, w: ParamId, b: ParamId) -> Result<(Var, Var)> {
    let d = tape.value(other).len();
    let w = tape.param(store, w);
    let b = tape.param(store, b);
    let other = tape.reshape(other, &[d, 1])?;
    let proj = tape.matmul(rows, w)?;
    let scores = tape.matmul(proj, other)?;
    let scores = tape.add_row(scores, b)?;
    let scores = tape.tanh(scores);
    attend(tape, scores, rows)
}

/// Max pooling over the segments [0, p1], (p1, p2] and (p2, n) where
/// p1 ≤ p2 are the participant positions; empty segments give zeros.
fn piecewise(tape: &mut Tape, store: &ParamStore, conv: &Conv, x: Var, subj: usize, obj: usize) -> Result<Var> {
    let c = conv.activations(tape, store, x)?;
    piecewise_pool(tape, c, subj, obj)
}

pub(crate) fn segment_bounds(n: usize, subj: usize, obj: usize) -> [(usize, usize); 3] {
    let (p1, p2) = (subj.min(obj), subj.max(obj));
    [(0, p1 + 1), (p1 + 1, p2 + 1), (p2 + 1, n)].map(|(a, b)| (a.min(n), b.min(n)))
}

/// Segment max pooling of an (n × f) activation matrix.
pub fn piecewise_pool(tape: &mut Tape, c: Var, subj: usize, obj: usize) -> Result<Var> {
    let (n, f) = tape.value(c).dims2();
    let mut blocks = Vec::with_capacity(3);
    for (a, b) in segment_bounds(n, subj, obj) {
        if a < b {
            let seg = tape.slice(c, 0, a, b)?;
            blocks.push(tape.max_pool(seg)?);
        } else {
            blocks.push(tape.leaf(Tensor::zeros(&[f])));
        }
    }
    tape.concat(&blocks, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{EmbeddingConfig, Embedder, Vocabulary};
    use crate::sentiment::Sentiment;
    use crate::termizer::{Term, TermSequence};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(kind: EncoderKind) -> EncoderConfig {
        EncoderConfig {
            kind,
            n: 8,
            hidden: 3,
            filters: 2,
            window: 3,
            k: 4,
            features: FeatureMode::AttEf,
        }
    }

    fn leaf(tape: &mut Tape, rows: &[Vec<f64>]) -> Var {
        tape.leaf(Tensor::from_rows(rows).unwrap())
    }

    fn ctx(tape: &mut Tape, rows: &[Vec<f64>], n: usize, subj: usize, obj: usize) -> EmbeddedContext {
        let mut padded = rows.to_vec();
        padded.resize(n, vec![0.0; rows[0].len()]);
        EmbeddedContext {
            x: leaf(tape, &padded),
            n,
            n_real: rows.len(),
            subj_pos: subj,
            obj_pos: obj,
            frame_positions: vec![],
        }
    }

    fn set(store: &mut ParamStore, name: &str, data: &[f64]) {
        let id = store.id(name).unwrap_or_else(|| panic!("no param {name}"));
        store.get_mut(id).value.data_mut().copy_from_slice(data);
    }

    #[test]
    fn segments_match_brute_force_max() {
        let col = [1.0, 5.0, 3.0, 2.0, 0.0, 4.0, 1.0];
        let mut tape = Tape::new();
        let c = leaf(&mut tape, &col.iter().map(|&v| vec![v]).collect::<Vec<_>>());
        let pooled = piecewise_pool(&mut tape, c, 1, 4).unwrap();
        let brute: Vec<f64> = [(0, 2), (2, 5), (5, 7)]
            .iter()
            .map(|&(a, b)| col[a..b].iter().copied().fold(f64::MIN, f64::max))
            .collect();
        assert_eq!(tape.value(pooled).data(), brute.as_slice());
        assert_eq!(brute, vec![5.0, 3.0, 4.0]);
    }

    #[test]
    fn adjacent_participants_leave_right_segment_empty() {
        let mut tape = Tape::new();
        let c = leaf(&mut tape, &[vec![0.7, -0.2], vec![0.1, 0.9]]);
        let pooled = piecewise_pool(&mut tape, c, 0, 1).unwrap();
        assert_eq!(tape.value(pooled).data(), &[0.7, -0.2, 0.1, 0.9, 0.0, 0.0]);
        assert_eq!(segment_bounds(2, 1, 0), [(0, 1), (1, 2), (2, 2)]);
    }

    #[test]
    fn pcnn_output_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let mut c = cfg(EncoderKind::Pcnn);
        c.filters = 1;
        let enc = Encoder::new(&mut store, &mut rng, &c, 2).unwrap();
        let mut tape = Tape::new();
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 * 0.1, -0.2]).collect();
        let e = ctx(&mut tape, &rows, 8, 2, 5);
        let out = enc.encode(&mut tape, &store, &e).unwrap();
        assert_eq!(tape.value(out.s).len(), 3);
    }

    #[test]
    fn cnn_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let enc = Encoder::new(&mut store, &mut rng, &cfg(EncoderKind::Cnn), 2).unwrap();
        // all-zero input, zero bias → zero output
        let mut tape = Tape::new();
        let e = ctx(&mut tape, &[vec![0.0, 0.0], vec![0.0, 0.0]], 4, 0, 1);
        let out = enc.encode(&mut tape, &store, &e).unwrap();
        assert_eq!(tape.value(out.s).data(), &[0.0, 0.0]);

        // n_real = 1: pooled row is the single activation row
        let w: Vec<f64> = (0..12).map(|i| 0.1 * i as f64 - 0.5).collect();
        set(&mut store, "cnn.w", &w);
        set(&mut store, "cnn.b", &[0.1, -0.1]);
        let mut tape = Tape::new();
        let e = ctx(&mut tape, &[vec![0.3, -0.7]], 4, 0, 0);
        let out = enc.encode(&mut tape, &store, &e).unwrap();
        // only the centre tap (t = 1) touches the row
        let want: Vec<f64> = (0..2)
            .map(|k| (0.1f64 * [1.0, -1.0][k] + 0.3 * w[(2) * 2 + k] - 0.7 * w[(3) * 2 + k]).tanh())
            .collect();
        for (g, w) in tape.value(out.s).data().iter().zip(&want) {
            assert!((g - w).abs() < 1e-14);
        }
    }

    #[test]
    fn cnn_matches_composed_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let enc = Encoder::new(&mut store, &mut rng, &cfg(EncoderKind::Cnn), 2).unwrap();
        let x = vec![vec![0.5, -0.1], vec![0.2, 0.4], vec![-0.3, 0.8]];
        let w = store.value(store.id("cnn.w").unwrap()).data().to_vec();
        let b = store.value(store.id("cnn.b").unwrap()).data().to_vec();
        // conv (left pad 1), tanh, column max
        let mut want = vec![f64::MIN; 2];
        for i in 0..3 {
            for k in 0..2 {
                let mut s = b[k];
                for t in 0..3 {
                    let p = i as isize + t as isize - 1;
                    if (0..3).contains(&p) {
                        for c in 0..2 {
                            s += x[p as usize][c] * w[(t * 2 + c) * 2 + k];
                        }
                    }
                }
                want[k] = want[k].max(s.tanh());
            }
        }
        let mut tape = Tape::new();
        let e = ctx(&mut tape, &x, 5, 0, 2);
        let out = enc.encode(&mut tape, &store, &e).unwrap();
        for (g, w) in tape.value(out.s).data().iter().zip(&want) {
            assert!((g - w).abs() < 1e-14);
        }
    }

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Explicit LSTM cell equations.
    fn lstm_oracle(x: &[Vec<f64>], wx: &[f64], wh: &[f64], b: &[f64], h: usize) -> Vec<Vec<f64>> {
        let input = x[0].len();
        let (mut hp, mut cp) = (vec![0.0; h], vec![0.0; h]);
        let mut out = Vec::new();
        for row in x {
            let mut g = b.to_vec();
            for j in 0..4 * h {
                for c in 0..input {
                    g[j] += row[c] * wx[c * 4 * h + j];
                }
                for c in 0..h {
                    g[j] += hp[c] * wh[c * 4 * h + j];
                }
            }
            let mut hn = vec![0.0; h];
            let mut cn = vec![0.0; h];
            for u in 0..h {
                let (i, f, o, cand) = (sigmoid(g[u]), sigmoid(g[h + u]), sigmoid(g[2 * h + u]), g[3 * h + u].tanh());
                cn[u] = f * cp[u] + i * cand;
                hn[u] = o * cn[u].tanh();
            }
            out.push(hn.clone());
            hp = hn;
            cp = cn;
        }
        out
    }

    #[test]
    fn lstm_two_steps_match_cell_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = ParamStore::new();
        let enc = Encoder::new(&mut store, &mut rng, &cfg(EncoderKind::Lstm), 2).unwrap();
        let get = |n: &str| store.value(store.id(n).unwrap()).data().to_vec();
        let x = vec![vec![0.4, -0.6], vec![0.9, 0.1]];
        let want = lstm_oracle(&x, &get("lstm.w_x"), &get("lstm.w_h"), &get("lstm.b"), 3);
        let mut tape = Tape::new();
        let e = ctx(&mut tape, &x, 6, 0, 1);
        let out = enc.encode(&mut tape, &store, &e).unwrap();
        for (g, w) in tape.value(out.s).data().iter().zip(&want[1]) {
            assert!((g - w).abs() < 1e-14);
        }
    }

    #[test]
    fn bilstm_single_step_and_pad_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = ParamStore::new();
        let enc = Encoder::new(&mut store, &mut rng, &cfg(EncoderKind::BiLstm), 2).unwrap();
        let get = |n: &str| store.value(store.id(n).unwrap()).data().to_vec();
        let x = vec![vec![0.4, -0.6]];
        let f = lstm_oracle(&x, &get("bilstm.fwd.w_x"), &get("bilstm.fwd.w_h"), &get("bilstm.fwd.b"), 3);
        let b = lstm_oracle(&x, &get("bilstm.bwd.w_x"), &get("bilstm.bwd.w_h"), &get("bilstm.bwd.b"), 3);
        let mut tape = Tape::new();
        let e = ctx(&mut tape, &x, 6, 0, 0);
        let before = tape.len();
        let out = enc.encode(&mut tape, &store, &e).unwrap();
        let want: Vec<f64> = f[0].iter().chain(&b[0]).copied().collect();
        for (g, w) in tape.value(out.s).data().iter().zip(&want) {
            assert!((g - w).abs() < 1e-14);
        }
        // one step per direction only: the recurrent matrix is never multiplied
        assert!(tape.len() - before < 40);
    }

    #[test]
    fn att_blstm_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::new();
        let enc = Encoder::new(&mut store, &mut rng, &cfg(EncoderKind::AttBiLstm), 2).unwrap();
        let x = vec![vec![0.4, -0.6], vec![0.9, 0.1], vec![-0.5, 0.3]];
        let mut tape = Tape::new();
        let e = ctx(&mut tape, &x, 5, 0, 2);
        let out = enc.encode(&mut tape, &store, &e).unwrap();
        let mat = out.materialize(&tape, 5);

        // recompute from the BiLSTM states with Eqs: m=tanh(h), u=m·w, α, s=tanh(Hα)
        let get = |n: &str| store.value(store.id(n).unwrap()).data().to_vec();
        let f = lstm_oracle(&x, &get("bilstm.fwd.w_x"), &get("bilstm.fwd.w_h"), &get("bilstm.fwd.b"), 3);
        let rev: Vec<Vec<f64>> = x.iter().rev().cloned().collect();
        let mut b = lstm_oracle(&rev, &get("bilstm.bwd.w_x"), &get("bilstm.bwd.w_h"), &get("bilstm.bwd.b"), 3);
        b.reverse();
        let h: Vec<Vec<f64>> = f.iter().zip(&b).map(|(a, c)| a.iter().chain(c).copied().collect()).collect();
        let w = get("att.w");
        let u: Vec<f64> = h.iter().map(|hi| hi.iter().zip(&w).map(|(a, b)| a.tanh() * b).sum()).collect();
        let z: f64 = u.iter().map(|v| v.exp()).sum();
        let alpha: Vec<f64> = u.iter().map(|v| v.exp() / z).collect();
        let s: Vec<f64> = (0..6).map(|j| h.iter().zip(&alpha).map(|(hi, a)| a * hi[j]).sum::<f64>().tanh()).collect();

        for (g, w) in mat.s.iter().zip(&s) {
            assert!((g - w).abs() < 1e-13);
        }
        let a = mat.alpha.unwrap();
        assert_eq!(a.len(), 5);
        for (g, w) in a.iter().zip(&alpha) {
            assert!((g - w).abs() < 1e-13);
        }
        assert_eq!(&a[3..], &[0.0, 0.0]);
    }

    #[test]
    fn attention_degenerate_cases() {
        for kind in [EncoderKind::AttBiLstm, EncoderKind::AttBiLstmZYang] {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let mut store = ParamStore::new();
            let enc = Encoder::new(&mut store, &mut rng, &cfg(kind), 2).unwrap();
            let mut tape = Tape::new();
            let e = ctx(&mut tape, &[vec![0.2, 0.1]], 3, 0, 0);
            let out = enc.encode(&mut tape, &store, &e).unwrap().materialize(&tape, 3);
            assert_eq!(out.alpha.unwrap(), vec![1.0, 0.0, 0.0]);
        }

        // u = (0, 0) → uniform weights
        let mut tape = Tape::new();
        let u = tape.leaf(Tensor::zeros(&[2, 1]));
        let rows = tape.leaf(Tensor::from_rows(&[vec![1.0], vec![3.0]]).unwrap());
        let (alpha, pooled) = attend(&mut tape, u, rows).unwrap();
        assert_eq!(tape.value(alpha).data(), &[0.5, 0.5]);
        assert_eq!(tape.value(pooled).data(), &[2.0]);
    }

    #[test]
    fn zyang_reduces_to_self_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s1 = ParamStore::new();
        let att = Encoder::new(&mut s1, &mut rng, &cfg(EncoderKind::AttBiLstm), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s2 = ParamStore::new();
        let zy = Encoder::new(&mut s2, &mut rng, &cfg(EncoderKind::AttBiLstmZYang), 2).unwrap();
        // identical BiLSTM weights (same seed, same registration order)
        let w = s1.value(s1.id("att.w").unwrap()).data().to_vec();
        let mut eye = vec![0.0; 36];
        for i in 0..6 {
            eye[i * 6 + i] = 1.0;
        }
        set(&mut s2, "att.w_a", &eye);
        set(&mut s2, "att.b_a", &[0.0; 6]);
        set(&mut s2, "att.u_w", &w);
        let x = vec![vec![0.4, -0.6], vec![0.9, 0.1], vec![-0.5, 0.3]];
        let mut t1 = Tape::new();
        let e1 = ctx(&mut t1, &x, 4, 0, 2);
        let a1 = att.encode(&mut t1, &s1, &e1).unwrap().materialize(&t1, 4);
        let mut t2 = Tape::new();
        let e2 = ctx(&mut t2, &x, 4, 0, 2);
        let a2 = zy.encode(&mut t2, &s2, &e2).unwrap().materialize(&t2, 4);
        for (p, q) in a1.alpha.unwrap().iter().zip(a2.alpha.unwrap()) {
            assert!((p - q).abs() < 1e-14);
        }
        // no outer tanh on the z-yang pooled vector
        for (p, q) in a1.s.iter().zip(&a2.s) {
            assert!((p - q.tanh()).abs() < 1e-14);
        }
    }

    #[test]
    fn feature_selection() {
        assert_eq!(select_features(1, 4, &[2, 3], FeatureMode::AttEnds, 3), vec![1, 4]);
        assert_eq!(select_features(0, 9, &[1, 2, 3, 4, 5], FeatureMode::AttEf, 4), vec![0, 9, 1, 2]);
        assert_eq!(select_features(0, 3, &[], FeatureMode::AttEf, 4), select_features(0, 3, &[], FeatureMode::AttEnds, 4));
    }

    #[test]
    fn att_cnn_uniform_scores_average_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let mut c = cfg(EncoderKind::AttCnn);
        c.features = FeatureMode::AttEnds;
        c.k = 2;
        let enc = Encoder::new(&mut store, &mut rng, &c, 2).unwrap();
        set(&mut store, "att.w_out", &[0.0; 3]);
        let x = vec![vec![0.4, -0.6], vec![0.9, 0.1], vec![-0.5, 0.3]];
        let mut tape = Tape::new();
        let e = ctx(&mut tape, &x, 4, 0, 2);
        let out = enc.encode(&mut tape, &store, &e).unwrap().materialize(&tape, 4);
        assert_eq!(out.z, 3 * 2 + 2);
        let mean = [(0.4 + 0.9 - 0.5) / 3.0, (-0.6 + 0.1 + 0.3) / 3.0];
        assert!((out.s[6] - mean[0]).abs() < 1e-14 && (out.s[7] - mean[1]).abs() < 1e-14);
        let alpha = out.alpha.unwrap();
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(alpha[3], 0.0);
    }

    /// Direct composition of the feature-attentive formula on a tiny case.
    #[test]
    fn att_cnn_attention_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut store = ParamStore::new();
        let mut c = cfg(EncoderKind::AttCnn);
        c.hidden = 2;
        let enc = Encoder::new(&mut store, &mut rng, &c, 2).unwrap();
        let get = |n: &str| store.value(store.id(n).unwrap()).data().to_vec();
        let (wx, wf, b, wo) = (get("att.w_x"), get("att.w_f"), get("att.b"), get("att.w_out"));
        let x = vec![vec![0.4, -0.6], vec![0.9, 0.1], vec![-0.5, 0.3], vec![0.2, 0.2]];
        let feats = [0usize, 3, 1];
        let mut tape = Tape::new();
        let mut e = ctx(&mut tape, &x, 5, 0, 3);
        e.frame_positions = vec![1];
        let out = enc.encode(&mut tape, &store, &e).unwrap().materialize(&tape, 5);

        let mut alpha_mean = vec![0.0; 4];
        let mut summary = vec![0.0; 2];
        for &fj in &feats {
            let scores: Vec<f64> = x
                .iter()
                .map(|xi| {
                    (0..2)
                        .map(|a| {
                            let pre = b[a]
                                + (0..2).map(|c| xi[c] * wx[c * 2 + a]).sum::<f64>()
                                + (0..2).map(|c| x[fj][c] * wf[c * 2 + a]).sum::<f64>();
                            pre.tanh() * wo[a]
                        })
                        .sum()
                })
                .collect();
            let z: f64 = scores.iter().map(|s| s.exp()).sum();
            for (i, s) in scores.iter().enumerate() {
                let a = s.exp() / z;
                alpha_mean[i] += a / 3.0;
                for c in 0..2 {
                    summary[c] += a * x[i][c] / 3.0;
                }
            }
        }
        for (g, w) in out.s[6..].iter().zip(&summary) {
            assert!((g - w).abs() < 1e-14);
        }
        for (g, w) in out.alpha.unwrap().iter().zip(&alpha_mean) {
            assert!((g - w).abs() < 1e-14);
        }
    }

    #[test]
    fn ian_single_feature_and_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut store = ParamStore::new();
        let enc = Encoder::new(&mut store, &mut rng, &cfg(EncoderKind::Ian), 2).unwrap();
        let x = vec![vec![0.4, -0.6], vec![0.9, 0.1], vec![-0.5, 0.3]];
        let mut tape = Tape::new();
        let e = ctx(&mut tape, &x, 6, 0, 2);
        let enc_out = enc.encode(&mut tape, &store, &e).unwrap();
        let out = enc_out.materialize(&tape, 6);
        assert_eq!(out.z, 12);
        let gamma = out.alpha.unwrap();
        assert!((gamma.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(gamma[3..].iter().all(|&g| g == 0.0));

        // |F| = 1: the feature-side attention is a singleton softmax
        let mut tape = Tape::new();
        let rows = tape.leaf(Tensor::from_rows(&[vec![0.3, 0.2, -0.1, 0.5, 0.0, 0.4]]).unwrap());
        let other = tape.leaf(Tensor::vector(vec![0.1; 6]).unwrap());
        let (delta, pooled) = interactive(&mut tape, &store, rows, other, store.id("ian.w_t").unwrap(), store.id("ian.b_t").unwrap()).unwrap();
        assert_eq!(tape.value(delta).data(), &[1.0]);
        assert_eq!(tape.value(pooled).data(), tape.value(rows).data());
    }

    /// Re-derives the IAN output from BiLSTM states computed by the cell oracle.
    #[test]
    fn ian_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut store = ParamStore::new();
        let mut c = cfg(EncoderKind::Ian);
        c.hidden = 2;
        let enc = Encoder::new(&mut store, &mut rng, &c, 2).unwrap();
        set(&mut store, "ian.b_c", &[0.3]);
        set(&mut store, "ian.b_t", &[-0.2]);
        let get = |n: &str| store.value(store.id(n).unwrap()).data().to_vec();
        let x = vec![vec![0.4, -0.6], vec![0.9, 0.1], vec![-0.5, 0.3]];
        let states = |prefix: &str, rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
            let f = lstm_oracle(rows, &get(&format!("{prefix}.fwd.w_x")), &get(&format!("{prefix}.fwd.w_h")), &get(&format!("{prefix}.fwd.b")), 2);
            let rev: Vec<Vec<f64>> = rows.iter().rev().cloned().collect();
            let mut b = lstm_oracle(&rev, &get(&format!("{prefix}.bwd.w_x")), &get(&format!("{prefix}.bwd.w_h")), &get(&format!("{prefix}.bwd.b")), 2);
            b.reverse();
            f.iter().zip(&b).map(|(a, c)| a.iter().chain(c).copied().collect()).collect()
        };
        let cs = states("ian.context", &x);
        let ts = states("ian.features", &[x[0].clone(), x[2].clone()]);
        let mean = |m: &[Vec<f64>]| -> Vec<f64> { (0..4).map(|j| m.iter().map(|r| r[j]).sum::<f64>() / m.len() as f64).collect() };
        let attend_oracle = |rows: &[Vec<f64>], other: &[f64], w: &[f64], b: f64| -> (Vec<f64>, Vec<f64>) {
            let scores: Vec<f64> = rows
                .iter()
                .map(|r| {
                    let mut s = b;
                    for i in 0..4 {
                        for j in 0..4 {
                            s += r[i] * w[i * 4 + j] * other[j];
                        }
                    }
                    s.tanh()
                })
                .collect();
            let z: f64 = scores.iter().map(|s| s.exp()).sum();
            let a: Vec<f64> = scores.iter().map(|s| s.exp() / z).collect();
            let pooled = (0..4).map(|j| rows.iter().zip(&a).map(|(r, w)| r[j] * w).sum()).collect();
            (a, pooled)
        };
        let (gamma, cv) = attend_oracle(&cs, &mean(&ts), &get("ian.w_c"), 0.3);
        let (_, tv) = attend_oracle(&ts, &mean(&cs), &get("ian.w_t"), -0.2);

        let mut tape = Tape::new();
        let e = ctx(&mut tape, &x, 4, 0, 2);
        let out = enc.encode(&mut tape, &store, &e).unwrap().materialize(&tape, 4);
        let want: Vec<f64> = cv.iter().chain(&tv).copied().collect();
        for (g, w) in out.s.iter().zip(&want) {
            assert!((g - w).abs() < 1e-13);
        }
        for (g, w) in out.alpha.unwrap().iter().zip(&gamma) {
            assert!((g - w).abs() < 1e-13);
        }
    }

    #[test]
    fn output_sizes_match_table() {
        let row_width = 7;
        for kind in EncoderKind::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut store = ParamStore::new();
            let c = cfg(kind);
            let enc = Encoder::new(&mut store, &mut rng, &c, row_width).unwrap();
            let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![0.1 * i as f64; row_width]).collect();
            let mut tape = Tape::new();
            let e = ctx(&mut tape, &rows, 8, 1, 3);
            let out = enc.encode(&mut tape, &store, &e).unwrap().materialize(&tape, 8);
            let want = match kind {
                EncoderKind::Cnn => 2,
                EncoderKind::Pcnn => 6,
                EncoderKind::Lstm => 3,
                EncoderKind::BiLstm | EncoderKind::AttBiLstm | EncoderKind::AttBiLstmZYang => 6,
                EncoderKind::AttCnn => 6 + row_width,
                EncoderKind::Ian => 12,
            };
            assert_eq!(out.z, want, "{kind}");
            assert_eq!(enc.output_size(), want);
            assert_eq!(out.alpha.is_some(), kind.is_attentive());
        }
    }

    #[test]
    fn names_round_trip() {
        for kind in EncoderKind::ALL {
            assert_eq!(kind.name().parse::<EncoderKind>().unwrap(), kind);
        }
        assert!("gru".parse::<EncoderKind>().is_err());
        assert_eq!("att-ef".parse::<FeatureMode>().unwrap(), FeatureMode::AttEf);
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = cfg(EncoderKind::Cnn);
        c.n = 1;
        assert!(c.validate().is_err());
        let mut c = cfg(EncoderKind::Cnn);
        c.k = 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn embedded_frame_features_reach_encoder() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let terms = vec![
            Term::EntitySubj,
            Term::Frame {
                lemma: "hate".into(),
                polarity: Sentiment::Negative,
            },
            Term::EntityObj,
        ];
        let seq = TermSequence {
            surfaces: terms.iter().map(Term::label).collect(),
            terms,
            subj_pos: 0,
            obj_pos: 2,
        };
        let vocab = Vocabulary::from_sequences([&seq]);
        let ecfg = EmbeddingConfig {
            word_dim: 3,
            polarity_dim: 2,
            ..EmbeddingConfig::default()
        };
        let emb = Embedder::new(&mut store, &mut rng, &ecfg, &vocab).unwrap();
        let enc = Encoder::new(&mut store, &mut rng, &cfg(EncoderKind::Ian), ecfg.row_width()).unwrap();
        let mut tape = Tape::new();
        let e = emb.embed(&mut tape, &store, &vocab, &seq, 8).unwrap();
        assert_eq!(e.frame_positions, vec![1]);
        let out = enc.encode(&mut tape, &store, &e).unwrap().materialize(&tape, 8);
        assert_eq!(out.alpha.unwrap().len(), 8);
    }
}
