//! Physics-motivated regularization for pose sequences.
//!
//! Two families of penalties keep an optimized sequence plausible:
//!
//! * **Stability** — the second temporal difference of each bone length,
//!   `d2[f][k] = l[f+1][k] - 2 l[f][k] + l[f-1][k]`, squared and averaged
//!   over the 19 bones and the F-2 interior frames. Rigid motion (constant
//!   bone lengths) scores exactly zero; the term punishes accelerating
//!   stretch, not stretch itself.
//! * **Connectivity** — a two-part prior over joint-pair distances. The
//!   attractive part averages the 19 bone lengths per frame; the repulsive
//!   part averages the hinge `max(0, delta - D[i][j])` over the 171
//!   unordered non-adjacent joint pairs, so joints that are not linked by a
//!   bone are pushed at least `delta` apart.
//!
//! All sums run in a pinned order — frames left to right, bones in topology
//! order, pairs lexicographic with `i < j` — so results are bitwise
//! reproducible, including under the rayon path used for long sequences.
//!
//! Gradients with respect to joint coordinates are analytic. The distance
//! kernel is non-differentiable at `D = 0` and the hinge at `D = delta`;
//! both take the subgradient zero there, so a coincident pair and a pair
//! sitting exactly on the margin contribute no force.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::skeleton::{joint_distance, JointTopology, PoseSequence, BONE_COUNT, JOINT_COUNT};

/// Frame count at which per-frame work moves onto the rayon pool.
const PAR_FRAME_THRESHOLD: usize = 32;

/// Weights and margins for the regularization terms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PmsrConfig {
    /// Minimum separation enforced between non-adjacent joints.
    pub delta: f64,
    pub w_stability: f64,
    pub w_conn: f64,
    /// Normalize the repulsive term by the 19 bones instead of the 171
    /// non-adjacent pairs (exactly 9x the default value). Off by default.
    pub repulsion_per_bone: bool,
}

impl Default for PmsrConfig {
    fn default() -> Self {
        PmsrConfig {
            delta: 0.1,
            w_stability: 1.0,
            w_conn: 1.0,
            repulsion_per_bone: false,
        }
    }
}

impl PmsrConfig {
    fn minus_normalizer(&self) -> f64 {
        if self.repulsion_per_bone {
            BONE_COUNT as f64
        } else {
            // C(20,2) - 19 non-adjacent pairs.
            (JOINT_COUNT * (JOINT_COUNT - 1) / 2 - BONE_COUNT) as f64
        }
    }
}

/// Unweighted per-frame loss terms. Stability is zero on boundary frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTerms {
    pub stability: f64,
    pub conn_plus: f64,
    pub conn_minus: f64,
}

/// Loss breakdown for a sequence.
///
/// `stability`, `conn_plus`, `conn_minus`, and `conn` are raw (unweighted)
/// values; `total` is `w_stability * stability + w_conn * conn`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub stability: f64,
    pub conn_plus: f64,
    pub conn_minus: f64,
    pub conn: f64,
    pub total: f64,
    pub per_frame: Vec<FrameTerms>,
}

/// Gradient of the weighted total loss with respect to joint coordinates,
/// shaped like the pose frames (F, 20, 2).
#[derive(Debug, Clone, PartialEq)]
pub struct PoseGradient {
    pub values: Array3<f64>,
}

impl PoseGradient {
    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn pmsr_losses(seq: &PoseSequence, topo: &JointTopology, cfg: &PmsrConfig) -> LossReport {
    pmsr_losses_frames(seq.frames(), topo, cfg)
}

pub(crate) fn pmsr_losses_frames(
    frames: &Array3<f64>,
    topo: &JointTopology,
    cfg: &PmsrConfig,
) -> LossReport {
    let f_count = frames.dim().0;
    let lengths = bone_length_matrix(frames, topo);
    let minus_norm = cfg.minus_normalizer();

    let term_for = |f: usize| -> FrameTerms {
        let stability = if f >= 1 && f + 1 < f_count {
            let mut acc = 0.0;
            for k in 0..BONE_COUNT {
                let d2 = lengths[[f + 1, k]] - 2.0 * lengths[[f, k]] + lengths[[f - 1, k]];
                acc += d2 * d2;
            }
            acc / BONE_COUNT as f64
        } else {
            0.0
        };
        let mut plus = 0.0;
        for k in 0..BONE_COUNT {
            plus += lengths[[f, k]];
        }
        let conn_plus = plus / BONE_COUNT as f64;
        let mut minus = 0.0;
        for i in 0..JOINT_COUNT {
            for j in (i + 1)..JOINT_COUNT {
                if topo.is_adjacent(i, j) {
                    continue;
                }
                let d = joint_distance(frames, f, i, j);
                if d < cfg.delta {
                    minus += cfg.delta - d;
                }
            }
        }
        let conn_minus = minus / minus_norm;
        FrameTerms {
            stability,
            conn_plus,
            conn_minus,
        }
    };

    // Each frame term is self-contained (stability reads precomputed lengths),
    // so the parallel map is bitwise identical to the sequential one.
    let per_frame: Vec<FrameTerms> = if f_count >= PAR_FRAME_THRESHOLD {
        (0..f_count).into_par_iter().map(term_for).collect()
    } else {
        (0..f_count).map(term_for).collect()
    };

    let mut stab_sum = 0.0;
    let mut plus_sum = 0.0;
    let mut minus_sum = 0.0;
    for ft in &per_frame {
        stab_sum += ft.stability;
        plus_sum += ft.conn_plus;
        minus_sum += ft.conn_minus;
    }
    let stability = if f_count >= 3 {
        stab_sum / (f_count - 2) as f64
    } else {
        0.0
    };
    let conn_plus = plus_sum / f_count as f64;
    let conn_minus = minus_sum / f_count as f64;
    let conn = conn_plus + conn_minus;
    let total = cfg.w_stability * stability + cfg.w_conn * conn;
    LossReport {
        stability,
        conn_plus,
        conn_minus,
        conn,
        total,
        per_frame,
    }
}

pub fn pmsr_gradient(seq: &PoseSequence, topo: &JointTopology, cfg: &PmsrConfig) -> PoseGradient {
    pmsr_gradient_frames(seq.frames(), topo, cfg)
}

pub(crate) fn pmsr_gradient_frames(
    frames: &Array3<f64>,
    topo: &JointTopology,
    cfg: &PmsrConfig,
) -> PoseGradient {
    let f_count = frames.dim().0;
    let lengths = bone_length_matrix(frames, topo);

    // dTotal/dLength, filled from the interior second differences. Entry
    // [g][k] collects v from frames g-1 and g+1 and -2v from frame g itself,
    // where v = w_s * 2 d2 / (19 (F-2)).
    let mut dl = Array2::<f64>::zeros((f_count, BONE_COUNT));
    if f_count >= 3 {
        let scale = cfg.w_stability * 2.0 / (BONE_COUNT as f64 * (f_count - 2) as f64);
        for f in 1..(f_count - 1) {
            for k in 0..BONE_COUNT {
                let d2 = lengths[[f + 1, k]] - 2.0 * lengths[[f, k]] + lengths[[f - 1, k]];
                let v = scale * d2;
                dl[[f - 1, k]] += v;
                dl[[f, k]] -= 2.0 * v;
                dl[[f + 1, k]] += v;
            }
        }
    }

    let plus_coef = cfg.w_conn / (BONE_COUNT as f64 * f_count as f64);
    let minus_coef = cfg.w_conn / (cfg.minus_normalizer() * f_count as f64);

    // Every term below touches only the coordinates of its own frame, so
    // frames are independent jobs; results are stitched back in index order.
    let grad_for = |f: usize| -> Array2<f64> {
        let mut g = Array2::<f64>::zeros((JOINT_COUNT, 2));
        // Chain rule through bone lengths: dL/dp_i = dL/dl * (p_i - p_j) / l.
        for (k, &(i, j)) in topo.bones().iter().enumerate() {
            let l = lengths[[f, k]];
            if l == 0.0 {
                continue; // subgradient zero at coincident endpoints
            }
            let coef = dl[[f, k]] + plus_coef;
            let ux = (frames[[f, i, 0]] - frames[[f, j, 0]]) / l;
            let uy = (frames[[f, i, 1]] - frames[[f, j, 1]]) / l;
            g[[i, 0]] += coef * ux;
            g[[i, 1]] += coef * uy;
            g[[j, 0]] -= coef * ux;
            g[[j, 1]] -= coef * uy;
        }
        // Hinge pushes only strictly inside (0, delta).
        for i in 0..JOINT_COUNT {
            for j in (i + 1)..JOINT_COUNT {
                if topo.is_adjacent(i, j) {
                    continue;
                }
                let d = joint_distance(frames, f, i, j);
                if d > 0.0 && d < cfg.delta {
                    let ux = (frames[[f, i, 0]] - frames[[f, j, 0]]) / d;
                    let uy = (frames[[f, i, 1]] - frames[[f, j, 1]]) / d;
                    g[[i, 0]] -= minus_coef * ux;
                    g[[i, 1]] -= minus_coef * uy;
                    g[[j, 0]] += minus_coef * ux;
                    g[[j, 1]] += minus_coef * uy;
                }
            }
        }
        g
    };

    let per_frame: Vec<Array2<f64>> = if f_count >= PAR_FRAME_THRESHOLD {
        (0..f_count).into_par_iter().map(grad_for).collect()
    } else {
        (0..f_count).map(grad_for).collect()
    };

    let mut values = Array3::<f64>::zeros((f_count, JOINT_COUNT, 2));
    for (f, g) in per_frame.into_iter().enumerate() {
        values.slice_mut(ndarray::s![f, .., ..]).assign(&g);
    }
    PoseGradient { values }
}

/// Central-difference gradient of the weighted total loss; the reference
/// oracle for `pmsr_gradient`. `h` is the one-sided step (1e-6 is a good
/// default for coordinates of order one).
pub fn finite_diff_gradient(
    seq: &PoseSequence,
    topo: &JointTopology,
    cfg: &PmsrConfig,
    h: f64,
) -> PoseGradient {
    let mut work = seq.frames().clone();
    let (f_count, _, _) = work.dim();
    let mut values = Array3::<f64>::zeros((f_count, JOINT_COUNT, 2));
    for f in 0..f_count {
        for j in 0..JOINT_COUNT {
            for c in 0..2 {
                let orig = work[[f, j, c]];
                work[[f, j, c]] = orig + h;
                let up = pmsr_losses_frames(&work, topo, cfg).total;
                work[[f, j, c]] = orig - h;
                let down = pmsr_losses_frames(&work, topo, cfg).total;
                work[[f, j, c]] = orig;
                values[[f, j, c]] = (up - down) / (2.0 * h);
            }
        }
    }
    PoseGradient { values }
}

/// Relative disagreement between two gradients:
/// `max|a - n| / max(max|a|, max|n|, 1e-12)`. The floor keeps the metric
/// finite when both gradients vanish.
pub fn gradient_rel_error(a: &PoseGradient, n: &PoseGradient) -> f64 {
    let mut diff = 0.0f64;
    for (va, vn) in a.values.iter().zip(n.values.iter()) {
        diff = diff.max((va - vn).abs());
    }
    diff / a.linf_norm().max(n.linf_norm()).max(1e-12)
}

/// Seeded random pose sequence with coordinates in [-1, 1] at 30 fps.
///
/// Frames are rejection-sampled so every joint pair stays at least 1e-3
/// apart and at least 1e-3 away from the 0.1 separation margin — i.e. clear
/// of both kink points of the losses — which keeps finite differences with
/// steps up to ~1e-4 on a single smooth branch.
pub fn random_pose_sequence(seed: u64, frames: usize) -> PoseSequence {
    assert!(frames >= 1, "need at least one frame");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut arr = Array3::<f64>::zeros((frames, JOINT_COUNT, 2));
    for f in 0..frames {
        loop {
            let mut coords = [[0.0f64; 2]; JOINT_COUNT];
            for p in coords.iter_mut() {
                p[0] = rng.gen_range(-1.0..=1.0);
                p[1] = rng.gen_range(-1.0..=1.0);
            }
            if frame_clear_of_kinks(&coords) {
                for (j, p) in coords.iter().enumerate() {
                    arr[[f, j, 0]] = p[0];
                    arr[[f, j, 1]] = p[1];
                }
                break;
            }
        }
    }
    PoseSequence::new(arr, 30.0).expect("sampled coordinates are finite")
}

fn frame_clear_of_kinks(coords: &[[f64; 2]; JOINT_COUNT]) -> bool {
    const MARGIN: f64 = 1e-3;
    const DELTA: f64 = 0.1;
    for i in 0..JOINT_COUNT {
        for j in (i + 1)..JOINT_COUNT {
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            let d = (dx * dx + dy * dy).sqrt();
            if d <= MARGIN || (d - DELTA).abs() <= MARGIN {
                return false;
            }
        }
    }
    true
}

fn bone_length_matrix(frames: &Array3<f64>, topo: &JointTopology) -> Array2<f64> {
    let f_count = frames.dim().0;
    let mut lengths = Array2::<f64>::zeros((f_count, BONE_COUNT));
    for f in 0..f_count {
        for (k, &(i, j)) in topo.bones().iter().enumerate() {
            lengths[[f, k]] = joint_distance(frames, f, i, j);
        }
    }
    lengths
}

/// Convenience wrapper: weighted total loss for a sequence.
pub fn pmsr_total(seq: &PoseSequence, topo: &JointTopology, cfg: &PmsrConfig) -> f64 {
    pmsr_losses(seq, topo, cfg).total
}
