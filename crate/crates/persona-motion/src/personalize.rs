//! Gradient-descent personalization of a content pose sequence.
//!
//! The optimization variable is the full coordinate tensor (F, 20, 2),
//! initialized at the content sequence. The objective combines four terms:
//!
//! * **content** — mean squared coordinate error against the content
//!   sequence, anchoring the result to the original motion;
//! * **style** — per-joint speed statistics (mean and population std of
//!   frame-to-frame joint displacements) matched to the style sequence, so
//!   the result moves with the style's tempo and variability without ever
//!   referencing the style's coordinates directly;
//! * **stability** and **connectivity** — the physics regularizers from
//!   [`crate::pmsr`], weighted by the same knobs as everywhere else.
//!
//! The optimizer is plain gradient descent with Armijo backtracking: each
//! iteration halves the step from `cfg.step` until the sufficient-decrease
//! test `f(x - t g) <= f(x) - 1e-4 t |g|^2` passes, so the recorded totals
//! are strictly decreasing. It stops when the gradient norm falls below
//! 1e-9, when no step down to 1e-12 achieves a decrease, after ten
//! consecutive relative decreases below `cfg.tol`, or at `cfg.max_iters`
//! updates. Every quantity is a deterministic function of the inputs —
//! reruns produce bitwise-identical sequences and traces.

use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pmsr::{pmsr_gradient_frames, pmsr_losses_frames, PmsrConfig};
use crate::skeleton::{canonical_topology, PoseSequence, JOINT_COUNT};

const GRAD_TOL: f64 = 1e-9;
const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;
const PLATEAU_ITERS: usize = 10;

#[derive(Debug, Error)]
pub enum PersonalizeError {
    #[error("content sequence needs at least 3 frames, got {0}")]
    ContentTooShort(usize),
    #[error("style sequence needs at least 2 frames, got {0}")]
    StyleTooShort(usize),
}

/// Weights and optimizer controls for [`personalize`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PersonalizeConfig {
    pub w_content: f64,
    pub w_style: f64,
    pub w_stability: f64,
    pub w_conn: f64,
    /// Initial (largest) line-search step.
    pub step: f64,
    /// Maximum number of accepted updates.
    pub max_iters: usize,
    /// Relative-decrease threshold for the plateau stop.
    pub tol: f64,
    /// Recorded for provenance; the optimizer itself is deterministic and
    /// draws no random numbers.
    pub seed: u64,
    /// Separation margin passed through to the connectivity loss.
    pub delta: f64,
}

impl Default for PersonalizeConfig {
    fn default() -> Self {
        PersonalizeConfig {
            w_content: 1.0,
            w_style: 1.0,
            w_stability: 1.0,
            w_conn: 1.0,
            step: 1e-2,
            max_iters: 2000,
            tol: 1e-8,
            seed: 0,
            delta: 0.1,
        }
    }
}

impl PersonalizeConfig {
    fn pmsr(&self) -> PmsrConfig {
        PmsrConfig {
            delta: self.delta,
            w_stability: self.w_stability,
            w_conn: self.w_conn,
            repulsion_per_bone: false,
        }
    }
}

/// One optimizer state snapshot. Loss terms are raw (unweighted); `total`
/// is the weighted objective. `step` is the accepted step that produced
/// this state (0 for the initial record); `grad_norm` is the gradient's
/// Euclidean norm at this state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub total: f64,
    pub content: f64,
    pub style: f64,
    pub stability: f64,
    pub conn: f64,
    pub step: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIters,
}

/// Full optimization history: one record per state plus the stop reason.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimTrace {
    pub iterations: Vec<IterationRecord>,
    pub stop_reason: StopReason,
}

#[derive(Serialize, Deserialize)]
struct StopLine {
    stop_reason: StopReason,
}

impl OptimTrace {
    /// One JSON object per line: every iteration record in order, then a
    /// final `{"stop_reason": ...}` line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in &self.iterations {
            out.push_str(&serde_json::to_string(rec).expect("record serialization cannot fail"));
            out.push('\n');
        }
        out.push_str(
            &serde_json::to_string(&StopLine {
                stop_reason: self.stop_reason,
            })
            .expect("stop serialization cannot fail"),
        );
        out.push('\n');
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, String> {
        let mut iterations = Vec::new();
        let mut stop_reason = None;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if stop_reason.is_some() {
                return Err(format!("line {}: content after stop_reason line", n + 1));
            }
            if let Ok(stop) = serde_json::from_str::<StopLine>(line) {
                stop_reason = Some(stop.stop_reason);
            } else {
                let rec: IterationRecord = serde_json::from_str(line)
                    .map_err(|e| format!("line {}: {}", n + 1, e))?;
                iterations.push(rec);
            }
        }
        Ok(OptimTrace {
            iterations,
            stop_reason: stop_reason.ok_or("missing stop_reason line")?,
        })
    }
}

/// Personalized sequence plus the optimization history that produced it.
#[derive(Debug, Clone)]
pub struct PersonalizeResult {
    pub pose: PoseSequence,
    pub trace: OptimTrace,
}

/// Per-joint mean and population std of frame-to-frame joint speeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedStats {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

/// Computes speed statistics for a sequence (needs at least 2 frames).
pub fn speed_stats(seq: &PoseSequence) -> Result<SpeedStats, PersonalizeError> {
    let f_count = seq.frame_count();
    if f_count < 2 {
        return Err(PersonalizeError::StyleTooShort(f_count));
    }
    Ok(frame_speed_stats(&speeds(seq.frames())))
}

/// Joint speeds s[f][j] = |p[f+1][j] - p[f][j]|, shape (F-1, 20).
fn speeds(frames: &Array3<f64>) -> Array2<f64> {
    let f_count = frames.dim().0;
    let mut s = Array2::zeros((f_count - 1, JOINT_COUNT));
    for f in 0..(f_count - 1) {
        for j in 0..JOINT_COUNT {
            let dx = frames[[f + 1, j, 0]] - frames[[f, j, 0]];
            let dy = frames[[f + 1, j, 1]] - frames[[f, j, 1]];
            s[[f, j]] = (dx * dx + dy * dy).sqrt();
        }
    }
    s
}

fn frame_speed_stats(s: &Array2<f64>) -> SpeedStats {
    let (n, _) = s.dim();
    let mut mean = Array1::zeros(JOINT_COUNT);
    let mut std = Array1::zeros(JOINT_COUNT);
    for j in 0..JOINT_COUNT {
        let mut acc = 0.0;
        for f in 0..n {
            acc += s[[f, j]];
        }
        let m = acc / n as f64;
        let mut var = 0.0;
        for f in 0..n {
            let d = s[[f, j]] - m;
            var += d * d;
        }
        mean[j] = m;
        std[j] = (var / n as f64).sqrt();
    }
    SpeedStats { mean, std }
}

/// Mean squared coordinate error against the content anchor.
fn content_loss(x: &Array3<f64>, target: &Array3<f64>) -> f64 {
    let n = x.len() as f64;
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(target.iter()) {
        let d = a - b;
        acc += d * d;
    }
    acc / n
}

fn content_grad(x: &Array3<f64>, target: &Array3<f64>, w: f64, out: &mut Array3<f64>) {
    let scale = 2.0 * w / x.len() as f64;
    for ((o, a), b) in out.iter_mut().zip(x.iter()).zip(target.iter()) {
        *o += scale * (a - b);
    }
}

/// Squared mismatch of per-joint speed moments, averaged over joints:
/// `(1/J) sum_j (m_j - m*_j)^2 + (s_j - s*_j)^2`.
fn style_loss(s: &Array2<f64>, target: &SpeedStats) -> f64 {
    let stats = frame_speed_stats(s);
    let mut acc = 0.0;
    for j in 0..JOINT_COUNT {
        let dm = stats.mean[j] - target.mean[j];
        let ds = stats.std[j] - target.std[j];
        acc += dm * dm + ds * ds;
    }
    acc / JOINT_COUNT as f64
}

/// Chain rule through the speed map. A zero speed or zero std sits on a
/// kink of the objective; both take the subgradient zero.
fn style_grad(
    x: &Array3<f64>,
    s: &Array2<f64>,
    target: &SpeedStats,
    w: f64,
    out: &mut Array3<f64>,
) {
    let stats = frame_speed_stats(s);
    let n = s.dim().0;
    for j in 0..JOINT_COUNT {
        let dm = stats.mean[j] - target.mean[j];
        let ds = stats.std[j] - target.std[j];
        for f in 0..n {
            let speed = s[[f, j]];
            if speed == 0.0 {
                continue;
            }
            // dL/ds[f][j], combining the mean and std channels.
            let mut dl_ds = 2.0 * dm / (JOINT_COUNT as f64 * n as f64);
            if stats.std[j] > 0.0 {
                dl_ds += 2.0 * ds * (speed - stats.mean[j])
                    / (JOINT_COUNT as f64 * n as f64 * stats.std[j]);
            }
            let coef = w * dl_ds / speed;
            let dx = x[[f + 1, j, 0]] - x[[f, j, 0]];
            let dy = x[[f + 1, j, 1]] - x[[f, j, 1]];
            out[[f + 1, j, 0]] += coef * dx;
            out[[f + 1, j, 1]] += coef * dy;
            out[[f, j, 0]] -= coef * dx;
            out[[f, j, 1]] -= coef * dy;
        }
    }
}

struct Evaluation {
    total: f64,
    content: f64,
    style: f64,
    stability: f64,
    conn: f64,
}

struct Objective<'a> {
    content: &'a Array3<f64>,
    target_stats: SpeedStats,
    cfg: &'a PersonalizeConfig,
    pmsr: PmsrConfig,
}

impl Objective<'_> {
    fn evaluate(&self, x: &Array3<f64>) -> Evaluation {
        let content = content_loss(x, self.content);
        let style = style_loss(&speeds(x), &self.target_stats);
        let report = pmsr_losses_frames(x, canonical_topology(), &self.pmsr);
        Evaluation {
            total: self.cfg.w_content * content + self.cfg.w_style * style + report.total,
            content,
            style,
            stability: report.stability,
            conn: report.conn,
        }
    }

    fn gradient(&self, x: &Array3<f64>) -> Array3<f64> {
        let mut g = pmsr_gradient_frames(x, canonical_topology(), &self.pmsr).values;
        content_grad(x, self.content, self.cfg.w_content, &mut g);
        style_grad(x, &speeds(x), &self.target_stats, self.cfg.w_style, &mut g);
        g
    }
}

/// Optimizes a copy of `content` toward the style's speed statistics under
/// the physics regularizers. The output keeps the content's frame count
/// and fps.
pub fn personalize(
    content: &PoseSequence,
    style: &PoseSequence,
    cfg: &PersonalizeConfig,
) -> Result<PersonalizeResult, PersonalizeError> {
    if content.frame_count() < 3 {
        return Err(PersonalizeError::ContentTooShort(content.frame_count()));
    }
    let target_stats = speed_stats(style)?;
    let objective = Objective {
        content: content.frames(),
        target_stats,
        cfg,
        pmsr: cfg.pmsr(),
    };

    let mut x = content.frames().clone();
    let mut iterations = Vec::new();
    let mut stop_reason = StopReason::MaxIters;
    let mut last_step = 0.0;
    let mut small_streak = 0usize;

    for iter in 0..=cfg.max_iters {
        let ev = objective.evaluate(&x);
        let g = objective.gradient(&x);
        let grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        iterations.push(IterationRecord {
            iteration: iter,
            total: ev.total,
            content: ev.content,
            style: ev.style,
            stability: ev.stability,
            conn: ev.conn,
            step: last_step,
            grad_norm,
        });
        if iter == cfg.max_iters {
            stop_reason = StopReason::MaxIters;
            break;
        }
        if grad_norm < GRAD_TOL || small_streak >= PLATEAU_ITERS {
            stop_reason = StopReason::Converged;
            break;
        }

        let mut t = cfg.step;
        let mut accepted = None;
        while t >= MIN_STEP {
            let candidate = &x - &(&g * t);
            let f_cand = objective.evaluate(&candidate).total;
            if f_cand <= ev.total - ARMIJO_C * t * grad_norm * grad_norm {
                accepted = Some((candidate, f_cand, t));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            None => {
                // No step down to the resolution limit decreases the
                // objective: we are at a numerical stationary point.
                stop_reason = StopReason::Converged;
                break;
            }
            Some((candidate, f_cand, t)) => {
                let rel = (ev.total - f_cand) / ev.total.abs().max(1e-30);
                if rel < cfg.tol {
                    small_streak += 1;
                } else {
                    small_streak = 0;
                }
                x = candidate;
                last_step = t;
            }
        }
    }

    let pose = PoseSequence::new(x, content.fps())
        .expect("descent from a valid pose stays finite");
    Ok(PersonalizeResult {
        pose,
        trace: OptimTrace {
            iterations,
            stop_reason,
        },
    })
}
