//! A small decoder-only transformer with a hybrid attention execution
//! strategy.
//!
//! Most layers run a streaming attention path that never materializes the
//! L x L weight matrix. Layers listed in [`ArchSpec::sparse_layers`] run a
//! weight-materializing path instead, which can additionally emit two
//! head-averaged weight matrices:
//!
//! - `scoring_weights`: softmax of the head-averaged Q_raw . K_raw^T /
//!   sqrt(d) logits, computed from the unrotated projections with no causal
//!   mask. Positions never enter this matrix, which is exactly why pruning
//!   decisions based on it are immune to position shifts; one softmax over
//!   averaged logits also keeps per-row rankings invariant under rescaling
//!   of the hidden states.
//! - `masked_weights`: the ordinary rotated, causally masked attention
//!   weights, exposed so ablations can score tokens from the standard matrix.
//!
//! At each sparse layer an optional [`Sparsifier`] hook turns the scoring
//! weights into a [`PruneDecision`]; the sequence is then compacted to the
//! retained visual tokens plus all non-visual tokens, and every subsequent
//! layer runs on the shorter sequence. Retained tokens keep their original
//! position indices for rotary embedding in later layers.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::flopcount::{FlopCounter, MatmulClass};
use crate::layout::SequenceLayout;
use crate::numerics::{
    matmul_counted, rms_norm, rope_inv_freq, rope_rows_in_place, softmax_row_in_place, Matrix2D,
    DEFAULT_ROPE_THETA,
};
use crate::pruning::PruneDecision;
use crate::rng::RngSeed;

pub const WEIGHT_INIT_STD: f64 = 0.02;

/// Architecture dimensions and sparse-layer placement.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub num_layers: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub head_dim: usize,
    pub ffn_dim: usize,
    pub rope_theta: f64,
    /// Layer indices (ascending) that run the weight-materializing path and
    /// invoke the pruning hook.
    pub sparse_layers: Vec<usize>,
}

impl ArchSpec {
    pub fn new(
        num_layers: usize,
        d_model: usize,
        num_heads: usize,
        ffn_dim: usize,
        sparse_layers: Vec<usize>,
    ) -> Result<Self> {
        if num_heads == 0 || d_model % num_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "d_model {d_model} must be a positive multiple of num_heads {num_heads}"
            )));
        }
        let spec = ArchSpec {
            num_layers,
            d_model,
            num_heads,
            head_dim: d_model / num_heads,
            ffn_dim,
            rope_theta: DEFAULT_ROPE_THETA,
            sparse_layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model != self.num_heads * self.head_dim {
            return Err(Error::InvalidConfig(format!(
                "d_model {} != num_heads {} * head_dim {}",
                self.d_model, self.num_heads, self.head_dim
            )));
        }
        if self.head_dim % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "head_dim {} must be even for rotary embedding",
                self.head_dim
            )));
        }
        for w in self.sparse_layers.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidConfig(
                    "sparse_layers must be strictly increasing".into(),
                ));
            }
        }
        if let Some(&last) = self.sparse_layers.last() {
            if last >= self.num_layers {
                return Err(Error::InvalidConfig(format!(
                    "sparse layer {last} out of range for {} layers",
                    self.num_layers
                )));
            }
        }
        Ok(())
    }
}

/// Weights of one decoder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub wq: Matrix2D,
    pub wk: Matrix2D,
    pub wv: Matrix2D,
    pub wo: Matrix2D,
    pub ffn_gate: Matrix2D,
    pub ffn_up: Matrix2D,
    pub ffn_down: Matrix2D,
    pub attn_norm_gain: Vec<f64>,
    pub ffn_norm_gain: Vec<f64>,
}

impl LayerWeights {
    pub fn zeros(d_model: usize, ffn_dim: usize) -> Self {
        LayerWeights {
            wq: Matrix2D::zeros(d_model, d_model),
            wk: Matrix2D::zeros(d_model, d_model),
            wv: Matrix2D::zeros(d_model, d_model),
            wo: Matrix2D::zeros(d_model, d_model),
            ffn_gate: Matrix2D::zeros(d_model, ffn_dim),
            ffn_up: Matrix2D::zeros(d_model, ffn_dim),
            ffn_down: Matrix2D::zeros(ffn_dim, d_model),
            attn_norm_gain: vec![1.0; d_model],
            ffn_norm_gain: vec![1.0; d_model],
        }
    }

    pub fn init(d_model: usize, ffn_dim: usize, seed: RngSeed) -> Self {
        let mut rng = seed.rng();
        LayerWeights {
            wq: Matrix2D::randn(d_model, d_model, WEIGHT_INIT_STD, &mut rng),
            wk: Matrix2D::randn(d_model, d_model, WEIGHT_INIT_STD, &mut rng),
            wv: Matrix2D::randn(d_model, d_model, WEIGHT_INIT_STD, &mut rng),
            wo: Matrix2D::randn(d_model, d_model, WEIGHT_INIT_STD, &mut rng),
            ffn_gate: Matrix2D::randn(d_model, ffn_dim, WEIGHT_INIT_STD, &mut rng),
            ffn_up: Matrix2D::randn(d_model, ffn_dim, WEIGHT_INIT_STD, &mut rng),
            ffn_down: Matrix2D::randn(ffn_dim, d_model, WEIGHT_INIT_STD, &mut rng),
            attn_norm_gain: vec![1.0; d_model],
            ffn_norm_gain: vec![1.0; d_model],
        }
    }

    fn validate(&self, spec: &ArchSpec) -> Result<()> {
        let d = spec.d_model;
        let f = spec.ffn_dim;
        let want = [
            (&self.wq, d, d),
            (&self.wk, d, d),
            (&self.wv, d, d),
            (&self.wo, d, d),
            (&self.ffn_gate, d, f),
            (&self.ffn_up, d, f),
            (&self.ffn_down, f, d),
        ];
        for (m, r, c) in want {
            if m.rows() != r || m.cols() != c {
                return Err(Error::ShapeMismatch {
                    op: "layer weights",
                    left_rows: r,
                    left_cols: c,
                    right_rows: m.rows(),
                    right_cols: m.cols(),
                });
            }
        }
        if self.attn_norm_gain.len() != d || self.ffn_norm_gain.len() != d {
            return Err(Error::InvalidConfig("norm gain length != d_model".into()));
        }
        Ok(())
    }
}

/// Full model weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub layers: Vec<LayerWeights>,
    pub final_norm_gain: Vec<f64>,
}

impl ModelWeights {
    /// Scaled-normal initialization (std 0.02), one derived stream per layer.
    pub fn init(spec: &ArchSpec, seed: RngSeed) -> Self {
        let base = seed.derive("model-weights");
        let layers = (0..spec.num_layers)
            .map(|i| LayerWeights::init(spec.d_model, spec.ffn_dim, base.derive_index(i as u64)))
            .collect();
        ModelWeights { layers, final_norm_gain: vec![1.0; spec.d_model] }
    }

    pub fn validate(&self, spec: &ArchSpec) -> Result<()> {
        if self.layers.len() != spec.num_layers {
            return Err(Error::InvalidConfig(format!(
                "{} layers of weights for {} layers of model",
                self.layers.len(),
                spec.num_layers
            )));
        }
        for l in &self.layers {
            l.validate(spec)?;
        }
        if self.final_norm_gain.len() != spec.d_model {
            return Err(Error::InvalidConfig("final norm gain length != d_model".into()));
        }
        Ok(())
    }
}

/// Which weight matrices the caller wants materialized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WantWeights {
    /// Rotation-free, mask-free scoring weights (head mean).
    pub scoring: bool,
    /// Rotated, causally masked attention weights (head mean).
    pub masked: bool,
}

impl WantWeights {
    pub const NONE: WantWeights = WantWeights { scoring: false, masked: false };

    fn any(self) -> bool {
        self.scoring || self.masked
    }
}

/// Attention output plus optionally materialized weight matrices.
#[derive(Debug, Clone)]
pub struct AttentionResult {
    pub output: Matrix2D,
    pub scoring_weights: Option<Matrix2D>,
    pub masked_weights: Option<Matrix2D>,
}

fn split_heads(x: &Matrix2D, num_heads: usize) -> Vec<Matrix2D> {
    let head_dim = x.cols() / num_heads;
    (0..num_heads)
        .map(|h| {
            let mut m = Matrix2D::zeros(x.rows(), head_dim);
            for i in 0..x.rows() {
                let src = &x.row(i)[h * head_dim..(h + 1) * head_dim];
                m.row_mut(i).copy_from_slice(src);
            }
            m
        })
        .collect()
}

fn merge_heads(heads: &[Matrix2D]) -> Matrix2D {
    let rows = heads[0].rows();
    let head_dim = heads[0].cols();
    let mut out = Matrix2D::zeros(rows, heads.len() * head_dim);
    for (h, m) in heads.iter().enumerate() {
        for i in 0..rows {
            out.row_mut(i)[h * head_dim..(h + 1) * head_dim].copy_from_slice(m.row(i));
        }
    }
    out
}

/// Multi-head causal attention with rotary embedding.
///
/// With `want == NONE` this runs the streaming path (per-query online
/// softmax, no L x L matrix). Otherwise it runs the eager path and returns
/// the requested head-averaged weight matrices. Both paths compute the same
/// output up to rounding.
pub fn attention_forward(
    h: &Matrix2D,
    w: &LayerWeights,
    spec: &ArchSpec,
    positions: &[u64],
    want: WantWeights,
    counter: Option<&FlopCounter>,
) -> Result<AttentionResult> {
    if h.cols() != spec.d_model {
        return Err(Error::ShapeMismatch {
            op: "attention_forward",
            left_rows: h.rows(),
            left_cols: h.cols(),
            right_rows: spec.d_model,
            right_cols: spec.d_model,
        });
    }
    if positions.len() != h.rows() {
        return Err(Error::Precondition(format!(
            "positions length {} != sequence length {}",
            positions.len(),
            h.rows()
        )));
    }
    let len = h.rows();
    let scale = 1.0 / (spec.head_dim as f64).sqrt();
    let inv_freq = rope_inv_freq(spec.head_dim, spec.rope_theta);

    let q_raw = matmul_counted(h, &w.wq, counter, MatmulClass::QkvoProj)?;
    let k_raw = matmul_counted(h, &w.wk, counter, MatmulClass::QkvoProj)?;
    let v = matmul_counted(h, &w.wv, counter, MatmulClass::QkvoProj)?;

    let q_heads_raw = split_heads(&q_raw, spec.num_heads);
    let k_heads_raw = split_heads(&k_raw, spec.num_heads);
    let v_heads = split_heads(&v, spec.num_heads);

    let mut out_heads = Vec::with_capacity(spec.num_heads);
    let mut scoring_acc = want.scoring.then(|| Matrix2D::zeros(len, len));
    let mut masked_acc = want.masked.then(|| Matrix2D::zeros(len, len));

    for hd in 0..spec.num_heads {
        let mut q_rot = q_heads_raw[hd].clone();
        let mut k_rot = k_heads_raw[hd].clone();
        rope_rows_in_place(&mut q_rot, positions, &inv_freq);
        rope_rows_in_place(&mut k_rot, positions, &inv_freq);

        if want.any() {
            // Eager path: materialize per-head weights.
            let kt = k_rot.transpose();
            let mut logits = matmul_counted(&q_rot, &kt, counter, MatmulClass::AttnScores)?;
            for i in 0..len {
                let row = logits.row_mut(i);
                for (j, v) in row.iter_mut().enumerate() {
                    *v = if j <= i { *v * scale } else { f64::NEG_INFINITY };
                }
                softmax_row_in_place(row);
            }
            if let Some(acc) = masked_acc.as_mut() {
                for (a, b) in acc.data_mut().iter_mut().zip(logits.data()) {
                    *a += b / spec.num_heads as f64;
                }
            }
            out_heads.push(matmul_counted(&logits, &v_heads[hd], counter, MatmulClass::AttnValues)?);

            if want.scoring {
                // Head-averaged logits, one softmax at the end: scaling the
                // inputs scales these logits monotonically per row, so
                // selection argsorts survive rescaling exactly.
                let kt_raw = k_heads_raw[hd].transpose();
                let s =
                    matmul_counted(&q_heads_raw[hd], &kt_raw, counter, MatmulClass::PruneScores)?;
                let acc = scoring_acc.as_mut().unwrap();
                let inv = scale / spec.num_heads as f64;
                for (a, b) in acc.data_mut().iter_mut().zip(s.data()) {
                    *a += b * inv;
                }
            }
        } else {
            // Streaming path: online softmax, one query row at a time.
            if let Some(c) = counter {
                c.record(MatmulClass::AttnScores, len, spec.head_dim, len);
                c.record(MatmulClass::AttnValues, len, len, spec.head_dim);
            }
            let mut out = Matrix2D::zeros(len, spec.head_dim);
            let mut logits = vec![0.0; len];
            for i in 0..len {
                let qi = q_rot.row(i);
                let mut max = f64::NEG_INFINITY;
                for (j, l) in logits.iter_mut().enumerate().take(i + 1) {
                    let dot: f64 = qi.iter().zip(k_rot.row(j)).map(|(a, b)| a * b).sum();
                    *l = dot * scale;
                    max = max.max(*l);
                }
                let mut denom = 0.0;
                for l in logits.iter_mut().take(i + 1) {
                    *l = (*l - max).exp();
                    denom += *l;
                }
                let orow = out.row_mut(i);
                for (j, l) in logits.iter().enumerate().take(i + 1) {
                    let wgt = l / denom;
                    for (o, vv) in orow.iter_mut().zip(v_heads[hd].row(j)) {
                        *o += wgt * vv;
                    }
                }
            }
            out_heads.push(out);
        }
    }

    let merged = merge_heads(&out_heads);
    let output = matmul_counted(&merged, &w.wo, counter, MatmulClass::QkvoProj)?;
    if let Some(acc) = scoring_acc.as_mut() {
        for i in 0..len {
            softmax_row_in_place(acc.row_mut(i));
        }
    }
    Ok(AttentionResult { output, scoring_weights: scoring_acc, masked_weights: masked_acc })
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// Gated feed-forward block: (silu(x Wg) * (x Wu)) Wd.
pub fn ffn_forward(
    x: &Matrix2D,
    w: &LayerWeights,
    counter: Option<&FlopCounter>,
) -> Result<Matrix2D> {
    let gate = matmul_counted(x, &w.ffn_gate, counter, MatmulClass::Ffn)?;
    let up = matmul_counted(x, &w.ffn_up, counter, MatmulClass::Ffn)?;
    let mut act = gate;
    for (g, u) in act.data_mut().iter_mut().zip(up.data()) {
        *g = silu(*g) * u;
    }
    matmul_counted(&act, &w.ffn_down, counter, MatmulClass::Ffn)
}

/// Pre-norm residual decoder block wrapping attention and the gated FFN.
pub fn decoder_layer_forward(
    h: &Matrix2D,
    w: &LayerWeights,
    spec: &ArchSpec,
    positions: &[u64],
    want: WantWeights,
    counter: Option<&FlopCounter>,
) -> Result<(Matrix2D, Option<Matrix2D>, Option<Matrix2D>)> {
    let normed = rms_norm(h, &w.attn_norm_gain)?;
    let att = attention_forward(&normed, w, spec, positions, want, counter)?;
    let after_attn = h.add(&att.output)?;
    let normed2 = rms_norm(&after_attn, &w.ffn_norm_gain)?;
    let f = ffn_forward(&normed2, w, counter)?;
    let out = after_attn.add(&f)?;
    Ok((out, att.scoring_weights, att.masked_weights))
}

/// Hook invoked at sparse layers to decide which visual tokens survive.
///
/// `h_input` is the layer's input hidden states and `scoring` the
/// rotation-free head-mean weights from the same layer. The decision's
/// index sets are original positions of visual tokens in `layout`.
pub trait Sparsifier {
    fn prune(
        &self,
        h_input: &Matrix2D,
        scoring: &Matrix2D,
        layout: &SequenceLayout,
        counter: Option<&FlopCounter>,
    ) -> Result<PruneDecision>;
}

/// Everything a sparse layer saw, kept for ablations and audits.
#[derive(Debug, Clone)]
pub struct SparseArtifacts {
    pub h_input: Matrix2D,
    pub scoring_weights: Matrix2D,
    pub masked_weights: Matrix2D,
    pub layout: SequenceLayout,
}

/// One pruning event.
#[derive(Debug, Clone)]
pub struct PruneStep {
    pub layer: usize,
    pub decision: PruneDecision,
    pub artifacts: Option<SparseArtifacts>,
}

/// Per-run record of pruning events.
#[derive(Debug, Clone, Default)]
pub struct PruneTrace {
    pub steps: Vec<PruneStep>,
}

/// Options for a full forward pass.
#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardOptions<'a> {
    /// Constant added to every token's original position before rotary
    /// embedding.
    pub position_offset: u64,
    /// Multiplier on original positions (applied before the offset); 0 is
    /// treated as 1. Stretching changes relative distances, unlike a
    /// constant offset.
    pub position_stretch: u64,
    /// Record matmul sizes here.
    pub counter: Option<&'a FlopCounter>,
    /// Stop right after the last sparse layer's pruning; the returned hidden
    /// states are those of that layer. Decision probes use this.
    pub stop_after_last_sparse: bool,
    /// Keep each sparse layer's inputs and weight matrices in the trace.
    pub capture_artifacts: bool,
}

/// Result of a full forward pass.
#[derive(Debug, Clone)]
pub struct ModelOutput {
    pub hidden: Matrix2D,
    pub layout: SequenceLayout,
    pub trace: PruneTrace,
}

fn validate_decision(decision: &PruneDecision, layout: &SequenceLayout) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for &pos in decision.selected.iter().chain(&decision.recycled) {
        if !seen.insert(pos) {
            return Err(Error::ContractViolation(format!(
                "token {pos} appears in both selected and recycled sets"
            )));
        }
        match layout.index_of_original(pos) {
            Some(i) if layout.token(i).is_visual() => {}
            Some(_) => {
                return Err(Error::ContractViolation(format!(
                    "pruning decision names non-visual token {pos}"
                )))
            }
            None => {
                return Err(Error::ContractViolation(format!(
                    "pruning decision names token {pos} not present in the sequence"
                )))
            }
        }
    }
    let union: std::collections::BTreeSet<usize> = seen;
    let retained: std::collections::BTreeSet<usize> = decision.retained.iter().copied().collect();
    if union != retained {
        return Err(Error::ContractViolation(
            "retained set is not the union of selected and recycled".into(),
        ));
    }
    Ok(())
}

/// Run all layers, pruning at each configured sparse layer.
pub fn model_forward(
    embeddings: &Matrix2D,
    layout: &SequenceLayout,
    spec: &ArchSpec,
    weights: &ModelWeights,
    sparsifier: Option<&dyn Sparsifier>,
    opts: ForwardOptions,
) -> Result<ModelOutput> {
    if embeddings.rows() != layout.len() {
        return Err(Error::Precondition(format!(
            "embeddings rows {} != layout length {}",
            embeddings.rows(),
            layout.len()
        )));
    }
    weights.validate(spec)?;

    let mut h = embeddings.clone();
    let mut layout = layout.clone();
    let stretch = opts.position_stretch.max(1);
    let mut positions: Vec<u64> = layout
        .original_positions()
        .iter()
        .map(|&p| p as u64 * stretch + opts.position_offset)
        .collect();
    let mut trace = PruneTrace::default();
    let last_sparse = spec.sparse_layers.last().copied();

    for layer_idx in 0..spec.num_layers {
        let is_sparse = spec.sparse_layers.contains(&layer_idx) && sparsifier.is_some();
        let want = if is_sparse {
            WantWeights { scoring: true, masked: opts.capture_artifacts }
        } else {
            WantWeights::NONE
        };
        // Anchor selection and diversity read the layer's input states;
        // pruning itself applies to the layer's output.
        let h_in = is_sparse.then(|| h.clone());
        let (out, scoring, masked) = decoder_layer_forward(
            &h,
            &weights.layers[layer_idx],
            spec,
            &positions,
            want,
            opts.counter,
        )?;
        h = out;

        if is_sparse {
            let h_in = h_in.unwrap();
            let scoring = scoring.expect("scoring weights requested at sparse layer");
            let decision =
                sparsifier.unwrap().prune(&h_in, &scoring, &layout, opts.counter)?;
            validate_decision(&decision, &layout)?;

            // Keep retained visual tokens and every non-visual token, in order.
            let retained: std::collections::BTreeSet<usize> =
                decision.retained.iter().copied().collect();
            let keep: Vec<usize> = (0..layout.len())
                .filter(|&i| {
                    let t = layout.token(i);
                    !t.is_visual() || retained.contains(&t.original_position)
                })
                .collect();
            let artifacts = opts.capture_artifacts.then(|| SparseArtifacts {
                h_input: h_in,
                scoring_weights: scoring.clone(),
                masked_weights: masked.clone().unwrap_or_else(|| Matrix2D::zeros(0, 0)),
                layout: layout.clone(),
            });
            h = h.select_rows(&keep);
            layout = layout.subset(&keep);
            positions = layout
                .original_positions()
                .iter()
                .map(|&p| p as u64 * stretch + opts.position_offset)
                .collect();
            trace.steps.push(PruneStep { layer: layer_idx, decision, artifacts });

            if opts.stop_after_last_sparse && Some(layer_idx) == last_sparse {
                return Ok(ModelOutput { hidden: h, layout, trace });
            }
        }
    }

    let hidden = rms_norm(&h, &weights.final_norm_gain)?;
    Ok(ModelOutput { hidden, layout, trace })
}

// ── Weight file io ─────────────────────────────────────────────────────────
//
// Flat binary: one ASCII header line naming the shapes, then little-endian
// f64 in a fixed order (per layer: wq wk wv wo ffn_gate ffn_up ffn_down
// attn_norm ffn_norm; then the final norm gain).

const WEIGHTS_MAGIC: &str = "viewprune-weights v1";

fn write_matrix<W: Write>(out: &mut W, m: &Matrix2D) -> std::io::Result<()> {
    for v in m.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_vec<W: Write>(out: &mut W, v: &[f64]) -> std::io::Result<()> {
    for x in v {
        out.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Serialize weights with a text header naming the shapes.
pub fn save_weights<W: Write>(out: &mut W, spec: &ArchSpec, weights: &ModelWeights) -> Result<()> {
    weights.validate(spec)?;
    let header = format!(
        "{WEIGHTS_MAGIC} num_layers={} d_model={} num_heads={} ffn_dim={}\n",
        spec.num_layers, spec.d_model, spec.num_heads, spec.ffn_dim
    );
    let io = |e: std::io::Error| Error::WeightIo(e.to_string());
    out.write_all(header.as_bytes()).map_err(io)?;
    for l in &weights.layers {
        for m in [&l.wq, &l.wk, &l.wv, &l.wo, &l.ffn_gate, &l.ffn_up, &l.ffn_down] {
            write_matrix(out, m).map_err(io)?;
        }
        write_vec(out, &l.attn_norm_gain).map_err(io)?;
        write_vec(out, &l.ffn_norm_gain).map_err(io)?;
    }
    write_vec(out, &weights.final_norm_gain).map_err(io)?;
    Ok(())
}

/// Rotation-free mask-free scoring weights computed directly from the given
/// states (no normalization applied): softmax of the head-averaged scaled
/// logits. Used by ablations that need to rescore existing hidden states
/// outside a forward pass.
pub fn scoring_weights_from(
    h: &Matrix2D,
    w: &LayerWeights,
    spec: &ArchSpec,
) -> Result<Matrix2D> {
    let len = h.rows();
    let scale = 1.0 / (spec.head_dim as f64).sqrt();
    let q = crate::numerics::matmul(h, &w.wq)?;
    let k = crate::numerics::matmul(h, &w.wk)?;
    let qh = split_heads(&q, spec.num_heads);
    let kh = split_heads(&k, spec.num_heads);
    let mut acc = Matrix2D::zeros(len, len);
    let inv = scale / spec.num_heads as f64;
    for hd in 0..spec.num_heads {
        let s = crate::numerics::matmul(&qh[hd], &kh[hd].transpose())?;
        for (a, b) in acc.data_mut().iter_mut().zip(s.data()) {
            *a += b * inv;
        }
    }
    for i in 0..len {
        softmax_row_in_place(acc.row_mut(i));
    }
    Ok(acc)
}

fn read_f64s<R: Read>(input: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    input
        .read_exact(&mut buf)
        .map_err(|e| Error::WeightIo(format!("truncated weight data: {e}")))?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn read_matrix<R: Read>(input: &mut R, rows: usize, cols: usize) -> Result<Matrix2D> {
    Matrix2D::from_vec(rows, cols, read_f64s(input, rows * cols)?)
}

/// Deserialize weights, validating the header against `spec`.
pub fn load_weights<R: Read>(input: R, spec: &ArchSpec) -> Result<ModelWeights> {
    let mut reader = BufReader::new(input);
    let mut header = String::new();
    reader
        .read_line(&mut header)
        .map_err(|e| Error::WeightIo(format!("missing header: {e}")))?;
    let header = header.trim_end();
    let expect = format!(
        "{WEIGHTS_MAGIC} num_layers={} d_model={} num_heads={} ffn_dim={}",
        spec.num_layers, spec.d_model, spec.num_heads, spec.ffn_dim
    );
    if header != expect {
        return Err(Error::WeightIo(format!(
            "header mismatch: got '{header}', expected '{expect}'"
        )));
    }
    let d = spec.d_model;
    let f = spec.ffn_dim;
    let mut layers = Vec::with_capacity(spec.num_layers);
    for _ in 0..spec.num_layers {
        layers.push(LayerWeights {
            wq: read_matrix(&mut reader, d, d)?,
            wk: read_matrix(&mut reader, d, d)?,
            wv: read_matrix(&mut reader, d, d)?,
            wo: read_matrix(&mut reader, d, d)?,
            ffn_gate: read_matrix(&mut reader, d, f)?,
            ffn_up: read_matrix(&mut reader, d, f)?,
            ffn_down: read_matrix(&mut reader, f, d)?,
            attn_norm_gain: read_f64s(&mut reader, d)?,
            ffn_norm_gain: read_f64s(&mut reader, d)?,
        });
    }
    let final_norm_gain = read_f64s(&mut reader, d)?;
    let mut trailing = [0u8; 1];
    match reader.read(&mut trailing) {
        Ok(0) => {}
        Ok(_) => return Err(Error::WeightIo("trailing bytes after weights".into())),
        Err(e) => return Err(Error::WeightIo(e.to_string())),
    }
    let weights = ModelWeights { layers, final_norm_gain };
    weights.validate(spec)?;
    Ok(weights)
}
