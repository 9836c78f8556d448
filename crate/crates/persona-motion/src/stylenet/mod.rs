//! Feature pipeline that fuses a content pose sequence with a style pose
//! sequence into per-frame motion features.
//!
//! The stages, in order:
//!
//! 1. **Embedding** — each frame's 20 joints are flattened to a 40-vector
//!    (joint-major `[x0, y0, x1, y1, ...]`) and mapped to `d` channels by an
//!    affine layer; content and style use separate layers.
//! 2. **Semantic gating** — the style features are multiplied channel-wise
//!    by a per-label gate vector in `(0, 1)`, so the label decides which
//!    style channels survive, then refined by a two-layer tanh MLP.
//! 3. **Adaptive instance normalization** — content features are
//!    renormalized per channel to the style branch's statistics:
//!    `sigma_s * (x - mu_c) / max(sigma_c, eps) + mu_s`. Statistics are
//!    population moments over frames. The `max` guard (rather than adding
//!    `eps` to the denominator) keeps the transfer exact whenever
//!    `sigma_c > eps`, so the output matches the style moments to rounding
//!    error instead of to `eps`-level bias.
//! 4. **Encoding** — sinusoidal positional encodings are added
//!    (`sin(pos / 10000^(2i/d))` on even channels, the matching cosine on
//!    odd ones) and a two-layer tanh encoder mixes channels.
//! 5. **Attention block** — one pre-softmax-scaled multi-head
//!    self-attention with residual + layer norm, then a ReLU feed-forward
//!    (hidden width `4d`) with residual + layer norm.
//!
//! Everything is plain `f64` on sequential ndarray ops, so a fixed seed
//! gives bitwise-identical features on every run.

pub mod weights;

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, Axis};
use thiserror::Error;

use crate::skeleton::{PoseSequence, JOINT_COUNT};

pub use weights::{load_weights, save_weights, seeded_weights, WeightIoError};

/// The 20 canonical content (motion-category) labels, in vocabulary order.
pub const CONTENT_VOCABULARY: [&str; 20] = [
    "Walk", "Run", "Dance", "Skating", "Taichi", "Jump", "Wave", "Bow", "Clap", "Kick", "Punch",
    "Squat", "Stretch", "Spin", "Crawl", "Climb", "Throw", "Lunge", "Swim", "Boxing",
];

/// Epsilon guarding the normalization denominators (AdaIN and layer norm).
pub const FEATURE_EPS: f64 = 1e-5;

/// Default model width and head count.
pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_HEADS: usize = 4;

/// Flattened per-frame input width: 20 joints x 2 coordinates.
pub const POSE_INPUT_DIM: usize = JOINT_COUNT * 2;

#[derive(Debug, Error)]
pub enum StylenetError {
    #[error("unknown content label {0:?}; expected one of the 20 canonical labels")]
    UnknownLabel(String),
    #[error("feature dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("model dimension {d} must be even, nonzero, and divisible by {heads} heads")]
    BadDims { d: usize, heads: usize },
}

pub fn label_index(label: &str) -> Option<usize> {
    CONTENT_VOCABULARY.iter().position(|&l| l == label)
}

/// Dense affine map `y = x W^T + b` with `weight` shaped (out, in).
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Affine {
    pub fn in_dim(&self) -> usize {
        self.weight.dim().1
    }

    pub fn out_dim(&self) -> usize {
        self.weight.dim().0
    }

    /// Applies the map to each row of `x` (n, in) -> (n, out).
    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

/// Two affine layers with a pointwise nonlinearity in between.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayer {
    pub fc1: Affine,
    pub fc2: Affine,
}

impl TwoLayer {
    pub fn forward_tanh(&self, x: &Array2<f64>) -> Array2<f64> {
        self.fc2.apply(&self.fc1.apply(x).mapv(f64::tanh))
    }

    pub fn forward_relu(&self, x: &Array2<f64>) -> Array2<f64> {
        self.fc2.apply(&self.fc1.apply(x).mapv(|v| v.max(0.0)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    pub q: Affine,
    pub k: Affine,
    pub v: Affine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MhaWeights {
    pub heads: Vec<HeadWeights>,
    pub out: Affine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

/// Full parameter set of the fusion pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SaPmtWeights {
    pub d: usize,
    pub pose_embed_content: Affine,
    pub pose_embed_style: Affine,
    /// Style-branch refiner (tanh), applied after semantic gating.
    pub mlp: TwoLayer,
    /// Post-normalization channel mixer (tanh).
    pub encoder: TwoLayer,
    pub mha: MhaWeights,
    pub ln1: LayerNormParams,
    pub ln2: LayerNormParams,
    /// Position-wise feed-forward (ReLU), hidden width 4d.
    pub ffn: TwoLayer,
    /// Per-label channel gates, each entry a d-vector in (0, 1).
    pub semantic_table: BTreeMap<String, Array1<f64>>,
}

impl SaPmtWeights {
    pub fn head_count(&self) -> usize {
        self.mha.heads.len()
    }
}

/// Flattens a pose sequence to (F, 40) rows of joint-major coordinates.
pub fn flatten_pose(seq: &PoseSequence) -> Array2<f64> {
    let f_count = seq.frame_count();
    let mut out = Array2::zeros((f_count, POSE_INPUT_DIM));
    for f in 0..f_count {
        for j in 0..JOINT_COUNT {
            out[[f, 2 * j]] = seq.frames()[[f, j, 0]];
            out[[f, 2 * j + 1]] = seq.frames()[[f, j, 1]];
        }
    }
    out
}

/// Adaptive instance normalization over the frame axis.
///
/// Per channel: `sigma_s * (x - mu_c) / max(sigma_c, eps) + mu_s` with
/// population statistics. Content and style may have different frame
/// counts; channel widths must match. A content channel with spread below
/// `eps` collapses to the style mean.
pub fn adain(content: &Array2<f64>, style: &Array2<f64>, eps: f64) -> Result<Array2<f64>, StylenetError> {
    let (_, dc) = content.dim();
    let (_, ds) = style.dim();
    if dc != ds {
        return Err(StylenetError::DimMismatch { left: dc, right: ds });
    }
    let (mu_c, sigma_c) = channel_stats(content);
    let (mu_s, sigma_s) = channel_stats(style);
    let mut out = content.clone();
    for c in 0..dc {
        let denom = sigma_c[c].max(eps);
        for v in out.slice_mut(s![.., c]).iter_mut() {
            *v = sigma_s[c] * (*v - mu_c[c]) / denom + mu_s[c];
        }
    }
    Ok(out)
}

/// Per-channel population mean and standard deviation over rows.
pub fn channel_stats(x: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
    let (n, d) = x.dim();
    let mut mu = Array1::zeros(d);
    let mut sigma = Array1::zeros(d);
    for c in 0..d {
        let mut s = 0.0;
        for f in 0..n {
            s += x[[f, c]];
        }
        let m = s / n as f64;
        let mut var = 0.0;
        for f in 0..n {
            let dv = x[[f, c]] - m;
            var += dv * dv;
        }
        mu[c] = m;
        sigma[c] = (var / n as f64).sqrt();
    }
    (mu, sigma)
}

/// Sinusoidal positional encodings, shape (frames, d). Position 0 encodes
/// as `[0, 1, 0, 1, ...]`. `d` must be even.
pub fn positional_encoding(frames: usize, d: usize) -> Array2<f64> {
    assert!(d >= 2 && d % 2 == 0, "encoding width must be even");
    let mut pe = Array2::zeros((frames, d));
    for i in 0..(d / 2) {
        let wavelength = 10000f64.powf(2.0 * i as f64 / d as f64);
        for pos in 0..frames {
            let angle = pos as f64 / wavelength;
            pe[[pos, 2 * i]] = angle.sin();
            pe[[pos, 2 * i + 1]] = angle.cos();
        }
    }
    pe
}

/// Row-wise layer normalization: each row is centered and scaled to unit
/// population std (denominator guarded by `max(sigma, eps)`), then mapped
/// through the per-channel affine `gamma * n + beta`.
pub fn layer_norm(
    x: &Array2<f64>,
    params: &LayerNormParams,
    eps: f64,
) -> Result<Array2<f64>, StylenetError> {
    let (n, d) = x.dim();
    if params.gamma.len() != d {
        return Err(StylenetError::DimMismatch {
            left: params.gamma.len(),
            right: d,
        });
    }
    let mut out = Array2::zeros((n, d));
    for r in 0..n {
        let mut s = 0.0;
        for c in 0..d {
            s += x[[r, c]];
        }
        let mu = s / d as f64;
        let mut var = 0.0;
        for c in 0..d {
            let dv = x[[r, c]] - mu;
            var += dv * dv;
        }
        let denom = (var / d as f64).sqrt().max(eps);
        for c in 0..d {
            out[[r, c]] = params.gamma[c] * (x[[r, c]] - mu) / denom + params.beta[c];
        }
    }
    Ok(out)
}

/// Numerically stable row softmax (max subtraction before exponentiation).
pub fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let (n, m) = x.dim();
    let mut out = Array2::zeros((n, m));
    for r in 0..n {
        let row_max = x.row(r).iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        for c in 0..m {
            let e = (x[[r, c]] - row_max).exp();
            out[[r, c]] = e;
            sum += e;
        }
        for c in 0..m {
            out[[r, c]] /= sum;
        }
    }
    out
}

/// Scaled-dot-product multi-head self-attention over the rows of `x`.
///
/// Returns the projected output and one row-stochastic attention map per
/// head, in head order.
pub fn multi_head_attention(
    x: &Array2<f64>,
    w: &MhaWeights,
) -> Result<(Array2<f64>, Vec<Array2<f64>>), StylenetError> {
    let (n, d) = x.dim();
    if w.out.in_dim() != d {
        return Err(StylenetError::DimMismatch {
            left: w.out.in_dim(),
            right: d,
        });
    }
    let mut concat = Array2::zeros((n, d));
    let mut maps = Vec::with_capacity(w.heads.len());
    let mut col = 0;
    for head in &w.heads {
        if head.q.in_dim() != d {
            return Err(StylenetError::DimMismatch {
                left: head.q.in_dim(),
                right: d,
            });
        }
        let q = head.q.apply(x);
        let k = head.k.apply(x);
        let v = head.v.apply(x);
        let dh = q.dim().1;
        let scores = q.dot(&k.t()) / (dh as f64).sqrt();
        let attn = softmax_rows(&scores);
        let head_out = attn.dot(&v);
        concat.slice_mut(s![.., col..col + dh]).assign(&head_out);
        col += dh;
        maps.push(attn);
    }
    if col != d {
        return Err(StylenetError::DimMismatch { left: col, right: d });
    }
    Ok((w.out.apply(&concat), maps))
}

/// Features and per-head attention maps produced by [`sa_pmt_forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct SaPmtOutput {
    /// (content_frames, d) fused motion features.
    pub features: Array2<f64>,
    /// One (F, F) row-stochastic map per attention head.
    pub attention: Vec<Array2<f64>>,
}

/// Runs the full fusion pipeline for a content/style pair under `label`.
///
/// The label selects the semantic gate and must be one of
/// [`CONTENT_VOCABULARY`]; content and style may have different frame
/// counts, and the output keeps the content's.
pub fn sa_pmt_forward(
    content: &PoseSequence,
    style: &PoseSequence,
    label: &str,
    w: &SaPmtWeights,
) -> Result<SaPmtOutput, StylenetError> {
    let gate = w
        .semantic_table
        .get(label)
        .ok_or_else(|| StylenetError::UnknownLabel(label.to_string()))?;
    if gate.len() != w.d {
        return Err(StylenetError::DimMismatch {
            left: gate.len(),
            right: w.d,
        });
    }

    let content_feat = w.pose_embed_content.apply(&flatten_pose(content));
    let style_feat = w.pose_embed_style.apply(&flatten_pose(style));
    let gated = &style_feat * &gate.view().insert_axis(Axis(0));
    let style_branch = w.mlp.forward_tanh(&gated);

    let fused = adain(&content_feat, &style_branch, FEATURE_EPS)?;
    let enc_in = &fused + &positional_encoding(fused.dim().0, w.d);
    let z = w.encoder.forward_tanh(&enc_in);

    let (attn_out, attention) = multi_head_attention(&z, &w.mha)?;
    let f1 = layer_norm(&(&z + &attn_out), &w.ln1, FEATURE_EPS)?;
    let ffn_out = w.ffn.forward_relu(&f1);
    let features = layer_norm(&(&f1 + &ffn_out), &w.ln2, FEATURE_EPS)?;

    Ok(SaPmtOutput { features, attention })
}
