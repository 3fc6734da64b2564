// SPDX-License-Identifier: Apache-2.0

//! Glass pane handling for dual-return spinning lidar scans.
//!
//! The pipeline takes one revolution of a spinning lidar in dual-return mode
//! (strongest and last echo per beam), finds glass panes with two detectors
//! (intensity peaks on the horizontal ring and strongest/last divergence),
//! fits and bounds the panes, labels every point as inside obstacle, glass,
//! reflection or outside obstacle, and mirrors reflected points back through
//! the pane so they can be used for mapping geometry outside the line of
//! sight.
//!
//! A ray-casting dual-return simulator ([`sim`]) provides ground truth for
//! testing and evaluation.

pub mod classify;
pub mod cloud;
pub mod config;
pub mod detect;
pub mod drpc;
pub mod error;
pub mod eval;
pub mod export;
pub mod geometry;
pub mod par;
pub mod pipeline;
pub mod registry;
pub mod sim;

pub use classify::{assemble_output, classify_points, Label, LabeledCloud, MapPoint};
pub use cloud::{organize_scan, split_dual_returns, DualScan, GridGeometry, OrganizedCloud, RawReturn, ReturnChannel};
pub use config::Config;
pub use detect::{detect_dual_divergence, find_intensity_peaks, verify_peak_vertical, GlassEvidence, PeakCandidate};
pub use error::{Error, Result};
pub use geometry::{find_boundary, fit_planes_ransac, mirror_points, reflect_point, GlassPane, PaneSource, Plane};
pub use par::Exec;
pub use registry::{PaneRegistry, Pose};
pub use sim::{select_returns, simulate_scan, trace_beam, GroundTruth, Scene};
