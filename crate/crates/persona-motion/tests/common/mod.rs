//! Fixtures shared by the integration and acceptance suites.
#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use persona_motion::skeleton::{save_pose, PoseSequence, DEFAULT_FPS, JOINT_COUNT};

/// A widely spaced standing figure in canonical joint order. Every
/// non-adjacent joint pair sits at least 0.30 apart — three times the
/// default separation threshold — so connectivity hinges stay inactive
/// even after moderate perturbation.
pub fn spread_standing() -> [[f64; 2]; JOINT_COUNT] {
    const BASE: [[f64; 2]; JOINT_COUNT] = [
        [0.50, 0.14], // nose
        [0.50, 0.30], // neck
        [0.32, 0.30], // r_shoulder
        [0.24, 0.48], // r_elbow
        [0.20, 0.66], // r_wrist
        [0.68, 0.30], // l_shoulder
        [0.76, 0.48], // l_elbow
        [0.80, 0.66], // l_wrist
        [0.40, 0.58], // r_hip
        [0.38, 0.76], // r_knee
        [0.36, 0.94], // r_ankle
        [0.60, 0.58], // l_hip
        [0.62, 0.76], // l_knee
        [0.64, 0.94], // l_ankle
        [0.38, 0.10], // r_eye
        [0.62, 0.10], // l_eye
        [0.26, 0.16], // r_ear
        [0.74, 0.16], // l_ear
        [0.28, 0.98], // r_foot_tip
        [0.72, 0.98], // l_foot_tip
    ];
    let mut out = BASE;
    for p in &mut out {
        p[0] *= 1.5;
        p[1] *= 1.5;
    }
    out
}

/// The standing figure held still for `frames` frames.
pub fn standing_pose(frames: usize) -> PoseSequence {
    let joints = vec![spread_standing(); frames];
    PoseSequence::from_joints(&joints, DEFAULT_FPS).unwrap()
}

// Swinging limb joints and their phase signs: opposite arms and legs move
// in antiphase, torso and head stay put.
const SWING: [(usize, f64); 10] = [
    (3, 1.0),   // r_elbow
    (4, 1.0),   // r_wrist
    (6, -1.0),  // l_elbow
    (7, -1.0),  // l_wrist
    (9, -1.0),  // r_knee
    (10, -1.0), // r_ankle
    (18, -1.0), // r_foot_tip
    (12, 1.0),  // l_knee
    (13, 1.0),  // l_ankle
    (19, 1.0),  // l_foot_tip
];

/// A smooth gait: the standing figure with limbs swinging at amplitude
/// `amp` and the whole body drifting `drift` per frame. Non-adjacent
/// joints keep a separation of at least `0.30 - 2 * amp`.
pub fn gait(frames: usize, amp: f64, freq: f64, drift: f64) -> PoseSequence {
    let base = spread_standing();
    let mut all = Vec::with_capacity(frames);
    for f in 0..frames {
        let t = f as f64;
        let swing = amp * (freq * t).sin();
        let mut joints = base;
        for p in &mut joints {
            p[0] += drift * t;
        }
        for &(j, sign) in &SWING {
            joints[j][0] += sign * swing;
            joints[j][1] += 0.5 * sign * swing;
        }
        all.push(joints);
    }
    PoseSequence::from_joints(&all, DEFAULT_FPS).unwrap()
}

/// Content fixture: a gentle walk.
pub fn walking_content(frames: usize) -> PoseSequence {
    gait(frames, 0.02, 0.7, 0.004)
}

/// Style fixture: a bouncier gait with clearly different speed statistics.
pub fn style_gait(frames: usize) -> PoseSequence {
    gait(frames, 0.06, 0.9, 0.006)
}

pub fn write_pose(pose: &PoseSequence, path: &Path) {
    save_pose(pose, path).unwrap();
}

/// Path of the compiled CLI binary under test.
pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_persona-motion")
}

/// Runs the CLI with the given arguments and environment overrides. The
/// thread variable is cleared first so each test controls it explicitly.
pub fn run_cli(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.args(args);
    cmd.env_remove("PERSONA_MOTION_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("failed to launch persona-motion")
}

pub fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}
