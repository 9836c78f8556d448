//! Pose-level motion personalization.
//!
//! The crate fuses a *content* pose sequence (the motion to preserve) with a
//! *style* pose sequence (the motion characteristics to learn) and produces a
//! personalized pose sequence that keeps the content structure while matching
//! the style's movement statistics, under physics-aware regularization that
//! keeps bone lengths stable over time and body joints correctly spaced.
//!
//! Module map:
//! - [`skeleton`] — the canonical 20-joint topology, pose sequences, pose file I/O
//! - [`pmsr`] — physics losses (bone-length stability + joint connectivity),
//!   their analytic gradients, and a finite-difference oracle
//! - [`stylenet`] — the feature pipeline: pose encoders, semantic gating,
//!   adaptive instance normalization, positional encoding, attention block
//! - [`personalize`] — gradient-descent fusion of content and style poses
//! - [`dataset`] — manifest parsing, validation, and corpus statistics
//! - [`render`] — SVG / animated-SVG skeleton rendering
//! - [`cli`] — the `persona-motion` command-line front end

pub mod cli;
pub mod dataset;
pub mod personalize;
pub mod pmsr;
pub mod render;
pub mod skeleton;
pub mod stylenet;

pub use pmsr::{LossReport, PmsrConfig, PoseGradient};
pub use skeleton::{JointTopology, LengthMatrix, PoseSequence};
