//! Temporal fusion frontend.
//!
//! A stack of n+1 frames of visual features (all views concatenated into T
//! tokens per frame) is compressed to a single T x d feature map:
//!
//! 1. a learnable time embedding is broadcast-added per frame;
//! 2. for every token position independently, one or more bidirectional
//!    self-attention blocks run over the n+1 time steps (positions never
//!    interact, so this stays O(T n^2 d));
//! 3. the time axis is collapsed by a normalized weighted sum with learnable
//!    (possibly signed) time weights.
//!
//! The weighted sum divides by the raw weight sum, so the aggregate is
//! invariant under positive rescaling of the weights; a near-zero weight sum
//! is rejected rather than silently renormalized.

use crate::error::{Error, Result};
use crate::numerics::{rms_norm, softmax_row_in_place, Matrix2D, Matrix3D};
use crate::rng::RngSeed;
use crate::transformer::{ffn_forward, LayerWeights, WEIGHT_INIT_STD};

/// Guard on |sum of time weights| below which aggregation is undefined.
pub const TIME_WEIGHT_EPS: f64 = 1e-8;

/// A contiguous span of token positions belonging to one view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViewSpan {
    pub view_id: usize,
    pub start: usize,
    pub end: usize,
}

/// n+1 frames of T tokens by d features, oldest frame first.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    frames: Matrix3D,
    view_spans: Vec<ViewSpan>,
}

impl FrameFeatures {
    /// `frames` has dims (n+1, T, d); `view_spans` must partition [0, T).
    pub fn new(frames: Matrix3D, view_spans: Vec<ViewSpan>) -> Result<Self> {
        let (_, tokens, _) = frames.dims();
        let mut cursor = 0;
        for s in &view_spans {
            if s.start != cursor || s.end <= s.start {
                return Err(Error::Precondition(format!(
                    "view spans must partition [0, {tokens}), got [{}, {}) after {cursor}",
                    s.start, s.end
                )));
            }
            cursor = s.end;
        }
        if cursor != tokens {
            return Err(Error::Precondition(format!(
                "view spans cover [0, {cursor}) but there are {tokens} tokens"
            )));
        }
        Ok(FrameFeatures { frames, view_spans })
    }

    pub fn frames(&self) -> &Matrix3D {
        &self.frames
    }

    pub fn view_spans(&self) -> &[ViewSpan] {
        &self.view_spans
    }

    /// Number of history frames (time extent minus one).
    pub fn history(&self) -> usize {
        self.frames.dims().0 - 1
    }

    pub fn tokens_per_frame(&self) -> usize {
        self.frames.dims().1
    }

    pub fn feature_dim(&self) -> usize {
        self.frames.dims().2
    }
}

/// Shape of the fusion module.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    /// History length n; the module consumes n+1 frames.
    pub history: usize,
    pub feature_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub encoder_layers: usize,
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_heads == 0 || self.feature_dim % self.num_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "feature_dim {} must be a positive multiple of num_heads {}",
                self.feature_dim, self.num_heads
            )));
        }
        Ok(())
    }
}

/// Learnable parameters of the fusion module.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    /// (n+1) x d, one row per frame.
    pub time_embedding: Matrix2D,
    pub encoder_layers: Vec<LayerWeights>,
    pub num_heads: usize,
    /// Length n+1; raw, possibly signed.
    pub time_weights: Vec<f64>,
}

impl FusionWeights {
    /// Scaled-normal time embedding, uniform time weights 1/(n+1).
    pub fn init(cfg: &FusionConfig, seed: RngSeed) -> Self {
        let steps = cfg.history + 1;
        let mut rng = seed.derive("fusion-time-embedding").rng();
        let time_embedding = Matrix2D::randn(steps, cfg.feature_dim, WEIGHT_INIT_STD, &mut rng);
        let base = seed.derive("fusion-encoder");
        let encoder_layers = (0..cfg.encoder_layers)
            .map(|i| LayerWeights::init(cfg.feature_dim, cfg.ffn_dim, base.derive_index(i as u64)))
            .collect();
        FusionWeights {
            time_embedding,
            encoder_layers,
            num_heads: cfg.num_heads,
            time_weights: vec![1.0 / steps as f64; steps],
        }
    }
}

/// Broadcast-add the per-frame embedding row to every token of that frame.
pub fn add_time_embedding(f: &FrameFeatures, e: &Matrix2D) -> Result<FrameFeatures> {
    let (steps, tokens, dim) = f.frames.dims();
    if e.rows() != steps || e.cols() != dim {
        return Err(Error::ShapeMismatch {
            op: "add_time_embedding",
            left_rows: steps,
            left_cols: dim,
            right_rows: e.rows(),
            right_cols: e.cols(),
        });
    }
    let mut out = f.clone();
    for t in 0..steps {
        let mut slice = f.frames.slice(t);
        for tok in 0..tokens {
            let row = slice.row_mut(tok);
            for (v, emb) in row.iter_mut().zip(e.row(t)) {
                *v += emb;
            }
        }
        out.frames.set_slice(t, &slice)?;
    }
    Ok(out)
}

/// One bidirectional (mask-free, rotation-free) pre-norm block.
fn bidirectional_block(x: &Matrix2D, w: &LayerWeights, num_heads: usize) -> Result<Matrix2D> {
    use crate::numerics::matmul;
    let d = x.cols();
    let head_dim = d / num_heads;
    let scale = 1.0 / (head_dim as f64).sqrt();

    let normed = rms_norm(x, &w.attn_norm_gain)?;
    let q = matmul(&normed, &w.wq)?;
    let k = matmul(&normed, &w.wk)?;
    let v = matmul(&normed, &w.wv)?;

    let rows = x.rows();
    let mut merged = Matrix2D::zeros(rows, d);
    for h in 0..num_heads {
        let cols = h * head_dim..(h + 1) * head_dim;
        for i in 0..rows {
            let qi = &q.row(i)[cols.clone()];
            let mut logits: Vec<f64> = (0..rows)
                .map(|j| {
                    let kj = &k.row(j)[cols.clone()];
                    qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale
                })
                .collect();
            softmax_row_in_place(&mut logits);
            let out = &mut merged.row_mut(i)[cols.clone()];
            for (j, wgt) in logits.iter().enumerate() {
                let vj = &v.row(j)[cols.clone()];
                for (o, vv) in out.iter_mut().zip(vj) {
                    *o += wgt * vv;
                }
            }
        }
    }
    let att = matmul(&merged, &w.wo)?;
    let after = x.add(&att)?;
    let normed2 = rms_norm(&after, &w.ffn_norm_gain)?;
    let f = ffn_forward(&normed2, w, None)?;
    after.add(&f)
}

/// Run the temporal encoder: per token position, self-attention over the
/// n+1 time steps. Token positions never interact.
pub fn temporal_encode(f: &FrameFeatures, w: &FusionWeights) -> Result<FrameFeatures> {
    let (steps, tokens, dim) = f.frames.dims();
    if w.time_embedding.cols() != dim {
        return Err(Error::ShapeMismatch {
            op: "temporal_encode",
            left_rows: steps,
            left_cols: dim,
            right_rows: w.time_embedding.rows(),
            right_cols: w.time_embedding.cols(),
        });
    }
    let mut out = f.clone();
    let mut column = Matrix2D::zeros(steps, dim);
    for tok in 0..tokens {
        for t in 0..steps {
            for k in 0..dim {
                column.set(t, k, f.frames.at(t, tok, k));
            }
        }
        let mut x = column.clone();
        for layer in &w.encoder_layers {
            x = bidirectional_block(&x, layer, w.num_heads)?;
        }
        for t in 0..steps {
            for k in 0..dim {
                out.frames.set(t, tok, k, x.at(t, k));
            }
        }
    }
    Ok(out)
}

/// Collapse the time axis: per token, sum of w_i * frame_i divided by sum w.
pub fn time_weighted_aggregate(f: &FrameFeatures, weights: &[f64]) -> Result<Matrix2D> {
    let (steps, tokens, dim) = f.frames.dims();
    if weights.len() != steps {
        return Err(Error::ShapeMismatch {
            op: "time_weighted_aggregate",
            left_rows: steps,
            left_cols: dim,
            right_rows: weights.len(),
            right_cols: dim,
        });
    }
    let sum: f64 = weights.iter().sum();
    if sum.abs() <= TIME_WEIGHT_EPS {
        return Err(Error::DegenerateWeights { sum_abs: sum.abs(), eps: TIME_WEIGHT_EPS });
    }
    let mut out = Matrix2D::zeros(tokens, dim);
    for tok in 0..tokens {
        let row = out.row_mut(tok);
        for (t, &wt) in weights.iter().enumerate() {
            for (k, o) in row.iter_mut().enumerate() {
                *o += wt * f.frames.at(t, tok, k);
            }
        }
        for o in row.iter_mut() {
            *o /= sum;
        }
    }
    Ok(out)
}

/// Full fusion: time embedding, temporal encoding, weighted aggregation.
/// Output is T x d regardless of the history length.
pub fn fuse(f: &FrameFeatures, w: &FusionWeights) -> Result<Matrix2D> {
    let with_time = add_time_embedding(f, &w.time_embedding)?;
    let encoded = temporal_encode(&with_time, w)?;
    time_weighted_aggregate(&encoded, &w.time_weights)
}

/// Affine projection from fusion feature space to the decoder hidden size.
#[derive(Debug, Clone, PartialEq)]
pub struct Adapter {
    pub weight: Matrix2D,
    pub bias: Vec<f64>,
}

impl Adapter {
    pub fn init(d_in: usize, d_out: usize, seed: RngSeed) -> Self {
        let mut rng = seed.rng();
        Adapter {
            weight: Matrix2D::randn(d_in, d_out, WEIGHT_INIT_STD, &mut rng),
            bias: vec![0.0; d_out],
        }
    }

    /// Identity plus small noise; requires square dimensions. Keeps the
    /// feature geometry of its input nearly intact.
    pub fn init_near_identity(d: usize, seed: RngSeed) -> Self {
        let mut rng = seed.rng();
        let noise = Matrix2D::randn(d, d, WEIGHT_INIT_STD, &mut rng);
        let weight = Matrix2D::eye(d).add(&noise).expect("square");
        Adapter { weight, bias: vec![0.0; d] }
    }

    pub fn apply(&self, x: &Matrix2D) -> Result<Matrix2D> {
        let mut out = crate::numerics::matmul(x, &self.weight)?;
        for i in 0..out.rows() {
            for (v, b) in out.row_mut(i).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(out)
    }
}
