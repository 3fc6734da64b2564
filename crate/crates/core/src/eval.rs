// SPDX-License-Identifier: Apache-2.0

//! Classification and plane-fitting metrics against simulator truth.
//!
//! All accumulators are sums and counts, so results do not depend on the
//! order scans or points are visited in, and partial results merge.

use std::fmt::Write as _;

use nalgebra::Vector3;

use crate::classify::{Label, LabeledCloud};
use crate::cloud::ReturnChannel;
use crate::error::{Error, Result};
use crate::geometry::{GlassPane, Plane};
use crate::sim::GroundTruth;

/// Classes reported in the classification table, in table order.
pub const TABLE_CLASSES: [Label; 4] = [Label::R, Label::G, Label::O, Label::I];

/// Running error statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorStats {
    pub count: usize,
    sum: f64,
    sum_sq: f64,
}

impl ErrorStats {
    pub fn add(&mut self, e: f64) {
        self.count += 1;
        self.sum += e;
        self.sum_sq += e * e;
    }

    pub fn merge(&mut self, o: &ErrorStats) {
        self.count += o.count;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    /// Population standard deviation.
    pub fn stdev(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        let m = self.mean();
        (self.sum_sq / self.count as f64 - m * m).max(0.0).sqrt()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ClassStats {
    /// Points whose true class is this one.
    pub total: usize,
    pub label_correct: usize,
    pub within_near: usize,
    pub within_tol: usize,
    /// Errors of correctly labeled points.
    pub correct_errors: ErrorStats,
    /// Errors of every point of the class, whatever its label.
    pub all_errors: ErrorStats,
}

impl ClassStats {
    fn frac(n: usize, d: usize) -> f64 {
        if d == 0 {
            0.0
        } else {
            n as f64 / d as f64
        }
    }

    /// Correct label and error below the near threshold.
    pub fn frac_near(&self) -> f64 {
        Self::frac(self.within_near, self.total)
    }

    /// Correct label and error below the tolerance.
    pub fn frac_tol(&self) -> f64 {
        Self::frac(self.within_tol, self.total)
    }

    pub fn label_accuracy(&self) -> f64 {
        Self::frac(self.label_correct, self.total)
    }

    fn merge(&mut self, o: &ClassStats) {
        self.total += o.total;
        self.label_correct += o.label_correct;
        self.within_near += o.within_near;
        self.within_tol += o.within_tol;
        self.correct_errors.merge(&o.correct_errors);
        self.all_errors.merge(&o.all_errors);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassMetrics {
    pub tol: f64,
    /// `min(0.1, tol)`.
    pub near: f64,
    /// Indexed like [`TABLE_CLASSES`].
    pub classes: [ClassStats; 4],
}

impl ClassMetrics {
    pub fn new(tol: f64) -> Self {
        Self { tol, near: tol.min(0.1), classes: [ClassStats::default(); 4] }
    }

    pub fn class(&self, label: Label) -> &ClassStats {
        let k = TABLE_CLASSES.iter().position(|l| *l == label).expect("table class");
        &self.classes[k]
    }

    pub fn merge(&mut self, o: &ClassMetrics) {
        for (a, b) in self.classes.iter_mut().zip(&o.classes) {
            a.merge(b);
        }
    }
}

/// Scores one classified scan. A point is correct when its label matches
/// the truth and its reported position (mirrored for R) lies within `tol`
/// of the true surface. U counts as an error for the true class.
pub fn evaluate_classification(labeled: &LabeledCloud, truth: &GroundTruth, tol: f64) -> Result<ClassMetrics> {
    if labeled.scan.scan_id != truth.scan_id {
        return Err(Error::Input(format!(
            "labels are for scan {} but truth is for scan {}",
            labeled.scan.scan_id, truth.scan_id
        )));
    }
    let g = *labeled.scan.geometry();
    if !g.same_as(&truth.geometry) {
        return Err(Error::Input("labels and truth use different grids".into()));
    }
    let mut m = ClassMetrics::new(tol);
    for ch in [ReturnChannel::Strongest, ReturnChannel::Last] {
        for (ring, col, _) in labeled.scan.channel(ch).iter_valid() {
            let Some(t) = truth.get(ch, ring, col) else {
                return Err(Error::Input(format!("cell ({ring}, {col}) {ch:?} has no truth record")));
            };
            let Some(k) = TABLE_CLASSES.iter().position(|l| *l == t.label) else { continue };
            let label = labeled.get(ch, ring, col).map(|l| l.label);
            let pos = labeled.reported_position(ch, ring, col).expect("valid cell");
            let err = (pos - t.position).norm();
            let s = &mut m.classes[k];
            s.total += 1;
            s.all_errors.add(err);
            if label == Some(t.label) {
                s.label_correct += 1;
                s.correct_errors.add(err);
                if err < m.near {
                    s.within_near += 1;
                }
                if err < tol {
                    s.within_tol += 1;
                }
            }
        }
    }
    Ok(m)
}

/// A real pane as seen from one scan: its plane and sampled surface points,
/// both in the sensor frame.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthPane {
    pub plane: Plane,
    pub points: Vec<Vector3<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlaneMetrics {
    pub rms_threshold: f64,
    pub scans: usize,
    pub detected: usize,
    pub below_threshold: usize,
    rms_sum: f64,
    angle_sum_deg: f64,
}

impl PlaneMetrics {
    pub fn new(rms_threshold: f64) -> Self {
        Self { rms_threshold, ..Self::default() }
    }

    /// Mean per-scan RMS over scans with a detection.
    pub fn mean_rms(&self) -> f64 {
        if self.detected == 0 {
            0.0
        } else {
            self.rms_sum / self.detected as f64
        }
    }

    pub fn mean_angle_deg(&self) -> f64 {
        if self.detected == 0 {
            0.0
        } else {
            self.angle_sum_deg / self.detected as f64
        }
    }

    /// Fraction of all scans, misses included, with RMS under the threshold.
    pub fn frac_below(&self) -> f64 {
        if self.scans == 0 {
            0.0
        } else {
            self.below_threshold as f64 / self.scans as f64
        }
    }

    pub fn detection_rate(&self) -> f64 {
        if self.scans == 0 {
            0.0
        } else {
            self.detected as f64 / self.scans as f64
        }
    }

    pub fn merge(&mut self, o: &PlaneMetrics) {
        self.scans += o.scans;
        self.detected += o.detected;
        self.below_threshold += o.below_threshold;
        self.rms_sum += o.rms_sum;
        self.angle_sum_deg += o.angle_sum_deg;
    }

    /// Adds one scan. Each truth pane is matched to the detected plane with
    /// the smallest RMS over its points; the scan's RMS pools all truth points.
    /// A scan without detections (or without truth points) is a miss.
    pub fn add_scan(&mut self, detected: &[GlassPane], truth: &[TruthPane]) {
        self.scans += 1;
        let truth: Vec<&TruthPane> = truth.iter().filter(|t| !t.points.is_empty()).collect();
        if detected.is_empty() || truth.is_empty() {
            return;
        }
        let mut sq = 0.0;
        let mut n = 0usize;
        let mut angle = 0.0;
        for t in &truth {
            let (best_sq, best) = detected
                .iter()
                .map(|d| (t.points.iter().map(|p| d.plane.signed_distance(p).powi(2)).sum::<f64>(), d))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .expect("non-empty");
            sq += best_sq;
            n += t.points.len();
            angle += best.plane.angle_to(&t.plane).to_degrees();
        }
        let rms = (sq / n as f64).sqrt();
        self.detected += 1;
        self.rms_sum += rms;
        self.angle_sum_deg += angle / truth.len() as f64;
        if rms < self.rms_threshold {
            self.below_threshold += 1;
        }
    }
}

/// Plane metrics for a single scan.
pub fn evaluate_planes(detected: &[GlassPane], truth: &[TruthPane], rms_threshold: f64) -> PlaneMetrics {
    let mut m = PlaneMetrics::new(rms_threshold);
    m.add_scan(detected, truth);
    m
}

fn class_name(l: Label) -> &'static str {
    match l {
        Label::R => "reflection",
        Label::G => "glass",
        Label::O => "outside",
        Label::I => "inside",
        Label::U => "unknown",
    }
}

/// Plain-text report: classification and plane tables followed by a
/// `key=value` block.
pub fn format_report(classes: Option<&ClassMetrics>, planes: Option<&PlaneMetrics>, extra: &[(String, String)]) -> String {
    let mut out = String::new();
    if let Some(m) = classes {
        let _ = writeln!(out, "Point cloud classification (tolerance {:.2} m)", m.tol);
        let _ = writeln!(
            out,
            "{:<11}{:>10}{:>10}{:>10}{:>10}{:>10}{:>10}{:>12}{:>12}",
            "class",
            "points",
            "labeled",
            format!("<{:.2}m", m.near),
            format!("<{:.2}m", m.tol),
            "mean(m)",
            "std(m)",
            "mean_all(m)",
            "std_all(m)"
        );
        for (l, s) in TABLE_CLASSES.iter().zip(&m.classes) {
            let _ = writeln!(
                out,
                "{:<11}{:>10}{:>9.1}%{:>9.1}%{:>9.1}%{:>10.4}{:>10.4}{:>12.4}{:>12.4}",
                class_name(*l),
                s.total,
                100.0 * s.label_accuracy(),
                100.0 * s.frac_near(),
                100.0 * s.frac_tol(),
                s.correct_errors.mean(),
                s.correct_errors.stdev(),
                s.all_errors.mean(),
                s.all_errors.stdev()
            );
        }
        out.push('\n');
    }
    if let Some(p) = planes {
        let _ = writeln!(out, "Plane fitting");
        let _ = writeln!(
            out,
            "{:<8}{:>10}{:>10}{:>12}{:>12}",
            "scans",
            "detected",
            "rms(m)",
            format!("rms<{:.2}", p.rms_threshold),
            "angle(deg)"
        );
        let _ = writeln!(
            out,
            "{:<8}{:>10}{:>10.4}{:>11.1}%{:>12.3}",
            p.scans,
            p.detected,
            p.mean_rms(),
            100.0 * p.frac_below(),
            p.mean_angle_deg()
        );
        out.push('\n');
    }
    out.push_str("[metrics]\n");
    if let Some(m) = classes {
        for (l, s) in TABLE_CLASSES.iter().zip(&m.classes) {
            let c = l.as_char();
            let _ = writeln!(out, "class.{c}.points={}", s.total);
            let _ = writeln!(out, "class.{c}.label_accuracy={:.6}", s.label_accuracy());
            let _ = writeln!(out, "class.{c}.frac_near={:.6}", s.frac_near());
            let _ = writeln!(out, "class.{c}.frac_tol={:.6}", s.frac_tol());
            let _ = writeln!(out, "class.{c}.mean_correct={:.6}", s.correct_errors.mean());
            let _ = writeln!(out, "class.{c}.std_correct={:.6}", s.correct_errors.stdev());
            let _ = writeln!(out, "class.{c}.mean_all={:.6}", s.all_errors.mean());
            let _ = writeln!(out, "class.{c}.std_all={:.6}", s.all_errors.stdev());
        }
    }
    if let Some(p) = planes {
        let _ = writeln!(out, "plane.scans={}", p.scans);
        let _ = writeln!(out, "plane.detection_rate={:.6}", p.detection_rate());
        let _ = writeln!(out, "plane.mean_rms={:.6}", p.mean_rms());
        let _ = writeln!(out, "plane.frac_rms_below={:.6}", p.frac_below());
        let _ = writeln!(out, "plane.mean_angle_deg={:.6}", p.mean_angle_deg());
    }
    for (k, v) in extra {
        let _ = writeln!(out, "{k}={v}");
    }
    out
}
