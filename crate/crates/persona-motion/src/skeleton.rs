//! Canonical 20-joint skeleton topology, pose sequences, and pose file I/O.
//!
//! The joint set is COCO-18 compatible plus two foot tips, giving exactly 20
//! joints connected by 19 bones that form a spanning tree. Poses are 2D
//! (image-plane) coordinate sequences; all geometry here is Euclidean.

use std::path::Path;
use std::sync::OnceLock;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of joints in the canonical skeleton.
pub const JOINT_COUNT: usize = 20;
/// Number of bones (spanning tree over the joints).
pub const BONE_COUNT: usize = 19;
/// Loader sanity bound: coordinates must lie in `[-COORD_BOUND, COORD_BOUND]`.
pub const COORD_BOUND: f64 = 10.0;
/// Default frame rate when a pose file omits `fps`.
pub const DEFAULT_FPS: f64 = 30.0;

/// Canonical joint names, in index order.
pub const JOINT_NAMES: [&str; JOINT_COUNT] = [
    "nose",       // 0
    "neck",       // 1
    "r_shoulder", // 2
    "r_elbow",    // 3
    "r_wrist",    // 4
    "l_shoulder", // 5
    "l_elbow",    // 6
    "l_wrist",    // 7
    "r_hip",      // 8
    "r_knee",     // 9
    "r_ankle",    // 10
    "l_hip",      // 11
    "l_knee",     // 12
    "l_ankle",    // 13
    "r_eye",      // 14
    "l_eye",      // 15
    "r_ear",      // 16
    "l_ear",      // 17
    "r_foot_tip", // 18
    "l_foot_tip", // 19
];

/// Canonical bone set as unordered joint-index pairs `(i, j)` with `i < j`.
pub const BONES: [(usize, usize); BONE_COUNT] = [
    (0, 1),   // nose - neck
    (1, 2),   // neck - r_shoulder
    (2, 3),   // r_shoulder - r_elbow
    (3, 4),   // r_elbow - r_wrist
    (1, 5),   // neck - l_shoulder
    (5, 6),   // l_shoulder - l_elbow
    (6, 7),   // l_elbow - l_wrist
    (1, 8),   // neck - r_hip
    (8, 9),   // r_hip - r_knee
    (9, 10),  // r_knee - r_ankle
    (1, 11),  // neck - l_hip
    (11, 12), // l_hip - l_knee
    (12, 13), // l_knee - l_ankle
    (0, 14),  // nose - r_eye
    (0, 15),  // nose - l_eye
    (14, 16), // r_eye - r_ear
    (15, 17), // l_eye - l_ear
    (10, 18), // r_ankle - r_foot_tip
    (13, 19), // l_ankle - l_foot_tip
];

#[derive(Debug, Error)]
pub enum PoseError {
    #[error("pose sequence must have at least one frame")]
    EmptySequence,
    #[error("expected frames of shape (F, {JOINT_COUNT}, 2), found ({0}, {1}, {2})")]
    BadShape(usize, usize, usize),
    #[error("non-finite coordinate at frame {frame}, joint {joint}")]
    NonFinite { frame: usize, joint: usize },
    #[error("fps must be positive, got {0}")]
    BadFps(f64),
    #[error("frame index {index} out of range for sequence of {frames} frames")]
    FrameOutOfRange { index: usize, frames: usize },
}

#[derive(Debug, Error)]
pub enum PoseIoError {
    #[error("file not found: {0}")]
    NotFound(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },
    #[error("schema error in {path}: {detail}")]
    Schema { path: String, detail: String },
    #[error("validation error in {path}: {detail}")]
    Validation { path: String, detail: String },
}

/// The fixed 20-joint skeleton: names, bone edges, and adjacency matrix.
#[derive(Debug, Clone)]
pub struct JointTopology {
    joint_names: [&'static str; JOINT_COUNT],
    bones: [(usize, usize); BONE_COUNT],
    adjacency: [[bool; JOINT_COUNT]; JOINT_COUNT],
}

impl JointTopology {
    fn build() -> Self {
        let mut adjacency = [[false; JOINT_COUNT]; JOINT_COUNT];
        for &(i, j) in &BONES {
            adjacency[i][j] = true;
            adjacency[j][i] = true;
        }
        JointTopology {
            joint_names: JOINT_NAMES,
            bones: BONES,
            adjacency,
        }
    }

    pub fn joint_names(&self) -> &[&'static str; JOINT_COUNT] {
        &self.joint_names
    }

    pub fn bones(&self) -> &[(usize, usize); BONE_COUNT] {
        &self.bones
    }

    pub fn adjacency(&self) -> &[[bool; JOINT_COUNT]; JOINT_COUNT] {
        &self.adjacency
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i][j]
    }

    /// Index of a joint by canonical name.
    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|&n| n == name)
    }

    /// Unordered non-adjacent pair count: C(20,2) - 19 = 171.
    pub fn non_adjacent_pair_count(&self) -> usize {
        JOINT_COUNT * (JOINT_COUNT - 1) / 2 - BONE_COUNT
    }
}

/// The canonical topology. Pure and idempotent; the instance is built once.
pub fn canonical_topology() -> &'static JointTopology {
    static TOPO: OnceLock<JointTopology> = OnceLock::new();
    TOPO.get_or_init(JointTopology::build)
}

/// An F×20×2 sequence of 2D joint coordinates with a frame rate.
///
/// Invariants enforced at construction: at least one frame, exactly 20 joints
/// of 2 coordinates per frame, every coordinate finite, fps positive. The
/// `[-10, 10]` coordinate bound is enforced by the file loader only.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    pub(crate) frames: Array3<f64>,
    pub(crate) fps: f64,
}

impl PoseSequence {
    pub fn new(frames: Array3<f64>, fps: f64) -> Result<Self, PoseError> {
        let (f, j, c) = frames.dim();
        if f == 0 {
            return Err(PoseError::EmptySequence);
        }
        if j != JOINT_COUNT || c != 2 {
            return Err(PoseError::BadShape(f, j, c));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(PoseError::BadFps(fps));
        }
        for fi in 0..f {
            for ji in 0..JOINT_COUNT {
                if !frames[[fi, ji, 0]].is_finite() || !frames[[fi, ji, 1]].is_finite() {
                    return Err(PoseError::NonFinite {
                        frame: fi,
                        joint: ji,
                    });
                }
            }
        }
        Ok(PoseSequence { frames, fps })
    }

    /// Builds a sequence from per-frame joint arrays (test and fixture helper).
    pub fn from_joints(frames: &[[[f64; 2]; JOINT_COUNT]], fps: f64) -> Result<Self, PoseError> {
        let f = frames.len();
        let mut arr = Array3::zeros((f, JOINT_COUNT, 2));
        for (fi, frame) in frames.iter().enumerate() {
            for (ji, p) in frame.iter().enumerate() {
                arr[[fi, ji, 0]] = p[0];
                arr[[fi, ji, 1]] = p[1];
            }
        }
        PoseSequence::new(arr, fps)
    }

    pub fn frame_count(&self) -> usize {
        self.frames.dim().0
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frames(&self) -> &Array3<f64> {
        &self.frames
    }

    pub fn joint(&self, frame: usize, joint: usize) -> [f64; 2] {
        [self.frames[[frame, joint, 0]], self.frames[[frame, joint, 1]]]
    }

    /// Per-frame bone lengths under the given topology.
    pub fn bone_lengths(&self, topo: &JointTopology) -> LengthMatrix {
        let f = self.frame_count();
        let mut values = Array2::zeros((f, BONE_COUNT));
        for fi in 0..f {
            for (k, &(i, j)) in topo.bones().iter().enumerate() {
                values[[fi, k]] = joint_distance(&self.frames, fi, i, j);
            }
        }
        LengthMatrix { values }
    }

    /// Full 20×20 Euclidean distance matrix for one frame.
    pub fn distance_matrix(&self, frame: usize) -> Result<Array2<f64>, PoseError> {
        let f = self.frame_count();
        if frame >= f {
            return Err(PoseError::FrameOutOfRange {
                index: frame,
                frames: f,
            });
        }
        let mut d = Array2::zeros((JOINT_COUNT, JOINT_COUNT));
        for i in 0..JOINT_COUNT {
            for j in (i + 1)..JOINT_COUNT {
                let dist = joint_distance(&self.frames, frame, i, j);
                d[[i, j]] = dist;
                d[[j, i]] = dist;
            }
        }
        Ok(d)
    }
}

/// Euclidean distance between joints `i` and `j` at frame `f`.
///
/// This is the single distance kernel shared by every loss and matrix builder,
/// so results are bitwise consistent across call sites.
#[inline]
pub(crate) fn joint_distance(frames: &Array3<f64>, f: usize, i: usize, j: usize) -> f64 {
    let dx = frames[[f, i, 0]] - frames[[f, j, 0]];
    let dy = frames[[f, i, 1]] - frames[[f, j, 1]];
    (dx * dx + dy * dy).sqrt()
}

/// F×19 matrix of nonnegative per-frame bone lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthMatrix {
    pub values: Array2<f64>,
}

impl LengthMatrix {
    pub fn frame_count(&self) -> usize {
        self.values.dim().0
    }
}

// ---- pose file I/O --------------------------------------------------------
//
// Schema: {"fps": <number>, "joints": [<20 canonical names>], "frames":
// [[[x, y] x20] xF]}. The canonical serialized form is the compact JSON
// produced by `save_pose` (fields in fps/joints/frames order, shortest
// round-trip float formatting, trailing newline); save-then-load reproduces
// coordinates bit-exactly.

#[derive(Serialize)]
struct PoseFileOut<'a> {
    fps: f64,
    joints: [&'static str; JOINT_COUNT],
    frames: &'a [Vec<[f64; 2]>],
}

#[derive(Deserialize)]
struct PoseFileIn {
    fps: Option<f64>,
    joints: Vec<String>,
    frames: Vec<Vec<Vec<f64>>>,
}

/// Serializes a pose sequence to its canonical JSON form.
pub fn pose_to_canonical_json(seq: &PoseSequence) -> String {
    let frames: Vec<Vec<[f64; 2]>> = (0..seq.frame_count())
        .map(|f| (0..JOINT_COUNT).map(|j| seq.joint(f, j)).collect())
        .collect();
    let out = PoseFileOut {
        fps: seq.fps,
        joints: JOINT_NAMES,
        frames: &frames,
    };
    let mut s = serde_json::to_string(&out).expect("pose serialization cannot fail");
    s.push('\n');
    s
}

pub fn save_pose(seq: &PoseSequence, path: &Path) -> Result<(), PoseIoError> {
    std::fs::write(path, pose_to_canonical_json(seq)).map_err(|source| PoseIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_pose(path: &Path) -> Result<PoseSequence, PoseIoError> {
    if !path.exists() {
        return Err(PoseIoError::NotFound(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| PoseIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_pose_json(&text, &path.display().to_string())
}

/// Parses and validates pose JSON. `origin` names the source in errors.
pub fn parse_pose_json(text: &str, origin: &str) -> Result<PoseSequence, PoseIoError> {
    let raw: PoseFileIn = serde_json::from_str(text).map_err(|e| PoseIoError::Parse {
        path: origin.to_string(),
        detail: e.to_string(), // serde_json includes line and column
    })?;
    let schema_err = |detail: String| PoseIoError::Schema {
        path: origin.to_string(),
        detail,
    };

    if raw.joints.len() != JOINT_COUNT {
        return Err(schema_err(format!(
            "expected {} joint names, found {}",
            JOINT_COUNT,
            raw.joints.len()
        )));
    }
    for (i, name) in raw.joints.iter().enumerate() {
        if name != JOINT_NAMES[i] {
            return Err(schema_err(format!(
                "joint {} must be named {:?}, found {:?}",
                i, JOINT_NAMES[i], name
            )));
        }
    }
    if raw.frames.is_empty() {
        return Err(schema_err("expected at least 1 frame".to_string()));
    }
    let f_count = raw.frames.len();
    let mut frames = Array3::zeros((f_count, JOINT_COUNT, 2));
    for (fi, frame) in raw.frames.iter().enumerate() {
        if frame.len() != JOINT_COUNT {
            return Err(schema_err(format!(
                "frame {}: expected {} joints, found {}",
                fi,
                JOINT_COUNT,
                frame.len()
            )));
        }
        for (ji, coords) in frame.iter().enumerate() {
            if coords.len() != 2 {
                return Err(schema_err(format!(
                    "frame {}, joint {}: expected [x, y], found {} coordinates",
                    fi,
                    ji,
                    coords.len()
                )));
            }
            for (ci, &v) in coords.iter().enumerate() {
                if !v.is_finite() {
                    return Err(PoseIoError::Validation {
                        path: origin.to_string(),
                        detail: format!("non-finite coordinate at frame {}, joint {}", fi, ji),
                    });
                }
                if v.abs() > COORD_BOUND {
                    return Err(PoseIoError::Validation {
                        path: origin.to_string(),
                        detail: format!(
                            "coordinate {} at frame {}, joint {} outside [-{}, {}]",
                            v, fi, ji, COORD_BOUND, COORD_BOUND
                        ),
                    });
                }
                frames[[fi, ji, ci]] = v;
            }
        }
    }
    let fps = raw.fps.unwrap_or(DEFAULT_FPS);
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(PoseIoError::Validation {
            path: origin.to_string(),
            detail: format!("fps must be positive, got {}", fps),
        });
    }
    PoseSequence::new(frames, fps).map_err(|e| PoseIoError::Validation {
        path: origin.to_string(),
        detail: e.to_string(),
    })
}
