// SPDX-License-Identifier: Apache-2.0

//! Glass panes persisted in the map frame.
//!
//! Each stored pane is a plane plus a rectangle in pane-local coordinates:
//! `v` runs along the map's vertical projected onto the plane and `u`
//! completes a right-handed frame with the plane normal. The local origin is
//! the point of the plane closest to the map origin.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::cloud::{GridGeometry, RingTable};
use crate::error::{Error, ParseError, Result};
use crate::geometry::{GlassPane, PaneSource, Plane};

/// Largest accepted deviation of an input quaternion from unit length.
pub const QUATERNION_TOLERANCE: f64 = 1e-6;

/// Rigid transform taking sensor-frame points to the map frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    /// From `[tx ty tz]` and `[qx qy qz qw]`; the quaternion must already be
    /// unit length within [`QUATERNION_TOLERANCE`].
    pub fn from_components(t: [f64; 3], q: [f64; 4]) -> Result<Self> {
        let quat = Quaternion::new(q[3], q[0], q[1], q[2]);
        let norm = quat.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > QUATERNION_TOLERANCE {
            return Err(Error::Input(format!("quaternion norm {norm} is not 1")));
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("translation must be finite".into()));
        }
        Ok(Self::new(UnitQuaternion::from_quaternion(quat), Vector3::from(t)))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse() * (p - self.translation)
    }

    /// Sensor-frame plane to map frame.
    pub fn plane_to_map(&self, plane: &Plane) -> Plane {
        let n = self.rotation * plane.normal();
        Plane::from_normal_offset(n, plane.d() - n.dot(&self.translation)).expect("rotation keeps the normal unit")
    }

    /// Map-frame plane to sensor frame.
    pub fn plane_to_sensor(&self, plane: &Plane) -> Plane {
        let n = self.rotation.inverse() * plane.normal();
        Plane::from_normal_offset(n, plane.d() + plane.normal().dot(&self.translation))
            .expect("rotation keeps the normal unit")
    }
}

/// Parses `scan_id tx ty tz qx qy qz qw` lines; `#` starts a comment.
pub fn parse_poses(text: &str) -> Result<BTreeMap<u64, Pose>, ParseError> {
    let mut out = BTreeMap::new();
    let mut record = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |reason: String| ParseError::Record { record, line: i + 1, reason };
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 8 {
            return Err(bad(format!("expected 8 values, found {}", toks.len())));
        }
        let id: u64 = toks[0].parse().map_err(|_| bad(format!("bad scan id {:?}", toks[0])))?;
        let mut v = [0.0; 7];
        for (k, t) in toks[1..].iter().enumerate() {
            v[k] = t.parse().map_err(|_| bad(format!("bad number {t:?}")))?;
        }
        let pose = Pose::from_components([v[0], v[1], v[2]], [v[3], v[4], v[5], v[6]]).map_err(|e| bad(e.to_string()))?;
        if out.insert(id, pose).is_some() {
            return Err(bad(format!("duplicate scan id {id}")));
        }
        record += 1;
    }
    Ok(out)
}

pub fn read_poses(path: &Path) -> Result<BTreeMap<u64, Pose>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_poses(&text).map_err(|source| Error::Parse { path: path.to_path_buf(), source })
}

pub fn format_poses<'a>(poses: impl IntoIterator<Item = (u64, &'a Pose)>) -> String {
    let mut out = String::from("# scan_id tx ty tz qx qy qz qw\n");
    for (id, p) in poses {
        let q = p.rotation.quaternion();
        let t = p.translation;
        let _ = writeln!(out, "{id} {:.9} {:.9} {:.9} {:.12} {:.12} {:.12} {:.12}", t.x, t.y, t.z, q.i, q.j, q.k, q.w);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegistryParams {
    /// Radians.
    pub merge_angle: f64,
    pub merge_dist: f64,
    pub lookup_range: f64,
}

impl Default for RegistryParams {
    fn default() -> Self {
        Self { merge_angle: 5f64.to_radians(), merge_dist: 0.1, lookup_range: 50.0 }
    }
}

/// Axis-aligned rectangle in pane-local coordinates, meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalRect {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl LocalRect {
    fn bounding(points: impl IntoIterator<Item = (f64, f64)>) -> Option<Self> {
        let mut it = points.into_iter();
        let (u, v) = it.next()?;
        let mut r = LocalRect { u_min: u, u_max: u, v_min: v, v_max: v };
        for (u, v) in it {
            r.u_min = r.u_min.min(u);
            r.u_max = r.u_max.max(u);
            r.v_min = r.v_min.min(v);
            r.v_max = r.v_max.max(v);
        }
        Some(r)
    }

    fn overlaps(&self, other: &LocalRect, slack: f64) -> bool {
        self.u_min <= other.u_max + slack
            && other.u_min <= self.u_max + slack
            && self.v_min <= other.v_max + slack
            && other.v_min <= self.v_max + slack
    }
}

/// Pane-local frame of a plane: origin, `u` and `v` axes.
fn local_frame(plane: &Plane) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    let n = *plane.normal();
    let origin = -n * plane.d();
    let up = if n.z.abs() < 0.99 { Vector3::z() } else { Vector3::x() };
    let v = (up - n * n.dot(&up)).normalize();
    let u = v.cross(&n);
    (origin, u, v)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegisteredPane {
    /// Map frame.
    pub plane: Plane,
    pub rect: LocalRect,
    pub observations: usize,
    /// Accumulated RANSAC inliers, the weight used when merging.
    pub inlier_weight: usize,
    pub last_seen: Option<u64>,
}

impl RegisteredPane {
    pub fn corners(&self) -> [Vector3<f64>; 4] {
        let (o, u, v) = local_frame(&self.plane);
        let r = &self.rect;
        [(r.u_min, r.v_min), (r.u_max, r.v_min), (r.u_max, r.v_max), (r.u_min, r.v_max)].map(|(a, b)| o + u * a + v * b)
    }

    fn rect_in(&self, plane: &Plane) -> LocalRect {
        let (o, u, v) = local_frame(plane);
        LocalRect::bounding(self.corners().iter().map(|c| ((c - o).dot(&u), (c - o).dot(&v)))).expect("four corners")
    }

    /// Distance from `p` to the closest point of the rectangle.
    pub fn distance_to(&self, p: &Vector3<f64>) -> f64 {
        let (o, u, v) = local_frame(&self.plane);
        let d = p - o;
        let (a, b) = (d.dot(&u), d.dot(&v));
        let du = (self.rect.u_min - a).max(a - self.rect.u_max).max(0.0);
        let dv = (self.rect.v_min - b).max(b - self.rect.v_max).max(0.0);
        (du * du + dv * dv + self.plane.signed_distance(p).powi(2)).sqrt()
    }
}

/// Single-writer store of map-frame panes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PaneRegistry {
    pub params: RegistryParams,
    panes: Vec<RegisteredPane>,
}

fn beam(az: f64, el: f64) -> Vector3<f64> {
    Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

/// Samples the outline of a pane's grid bounds as sensor-frame points on its plane.
fn outline_points(pane: &GlassPane, rings: &RingTable) -> Vec<Vector3<f64>> {
    let (Some(lo), Some(hi)) = (rings.elevation(pane.lower_ring), rings.elevation(pane.upper_ring)) else {
        return Vec::new();
    };
    const SAMPLES: usize = 8;
    let mut out = Vec::with_capacity(4 * SAMPLES);
    for k in 0..=SAMPLES {
        let f = k as f64 / SAMPLES as f64;
        let az = pane.left_az + f * pane.width_rad();
        let el = lo + f * (hi - lo);
        for dir in [beam(az, lo), beam(az, hi), beam(pane.left_az, el), beam(pane.right_az, el)] {
            if let Some(t) = pane.plane.ray_from_origin(&dir) {
                out.push(dir * t);
            }
        }
    }
    out
}

impl PaneRegistry {
    pub fn new(params: RegistryParams) -> Self {
        Self { params, panes: Vec::new() }
    }

    pub fn panes(&self) -> &[RegisteredPane] {
        &self.panes
    }

    pub fn len(&self) -> usize {
        self.panes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panes.is_empty()
    }

    fn mergeable(&self, a: &RegisteredPane, b: &RegisteredPane) -> bool {
        if a.plane.angle_to(&b.plane) >= self.params.merge_angle {
            return false;
        }
        let centroid = |p: &RegisteredPane| p.corners().iter().sum::<Vector3<f64>>() / 4.0;
        let off = a.plane.signed_distance(&centroid(b)).abs().min(b.plane.signed_distance(&centroid(a)).abs());
        off < self.params.merge_dist && a.rect.overlaps(&b.rect_in(&a.plane), self.params.merge_dist)
    }

    fn merge(a: &RegisteredPane, b: &RegisteredPane) -> RegisteredPane {
        let (wa, wb) = (a.inlier_weight.max(1) as f64, b.inlier_weight.max(1) as f64);
        let sign = if a.plane.normal().dot(b.plane.normal()) < 0.0 { -1.0 } else { 1.0 };
        let n = a.plane.normal() * wa + b.plane.normal() * (sign * wb);
        let d = a.plane.d() * wa + b.plane.d() * (sign * wb);
        let norm = n.norm();
        let plane = Plane::from_normal_offset(n / norm, d / norm).unwrap_or(a.plane);
        let (o, u, v) = local_frame(&plane);
        let rect = LocalRect::bounding(
            a.corners().iter().chain(b.corners().iter()).map(|c| ((c - o).dot(&u), (c - o).dot(&v))),
        )
        .expect("eight corners");
        RegisteredPane {
            plane,
            rect,
            observations: a.observations + b.observations,
            inlier_weight: a.inlier_weight + b.inlier_weight,
            last_seen: a.last_seen.max(b.last_seen),
        }
    }

    /// Inserts a map-frame pane, merging it with every co-planar overlapping
    /// entry. Returns the index of the resulting entry.
    pub fn insert(&mut self, mut pane: RegisteredPane) -> usize {
        loop {
            let hit = self.panes.iter().position(|p| self.mergeable(p, &pane));
            match hit {
                Some(i) => {
                    let existing = self.panes.remove(i);
                    pane = Self::merge(&existing, &pane);
                }
                None => {
                    self.panes.push(pane);
                    return self.panes.len() - 1;
                }
            }
        }
    }

    /// Stores a sensor-frame pane observed from `pose`. `rings` maps the
    /// pane's ring bounds to elevation angles.
    pub fn register_pane(&mut self, pane: &GlassPane, pose: &Pose, rings: &RingTable, scan_id: Option<u64>) -> Result<usize> {
        let q = pose.rotation.quaternion();
        if ((q.norm() - 1.0).abs()) > QUATERNION_TOLERANCE {
            return Err(Error::Input(format!("pose quaternion norm {} is not 1", q.norm())));
        }
        let plane = pose.plane_to_map(&pane.plane);
        let (o, u, v) = local_frame(&plane);
        let rect = LocalRect::bounding(outline_points(pane, rings).iter().map(|p| {
            let m = pose.transform_point(p) - o;
            (m.dot(&u), m.dot(&v))
        }))
        .ok_or_else(|| Error::Input("pane bounds do not intersect its plane".into()))?;
        Ok(self.insert(RegisteredPane {
            plane,
            rect,
            observations: 1,
            inlier_weight: pane.inlier_count,
            last_seen: scan_id,
        }))
    }

    /// Registry panes near `pose`, expressed as sensor-frame panes.
    pub fn lookup_panes(&self, pose: &Pose, rings: &RingTable, grid: &GridGeometry) -> Vec<GlassPane> {
        let mut out = Vec::new();
        for p in &self.panes {
            if p.distance_to(&pose.translation) > self.params.lookup_range {
                continue;
            }
            let plane = pose.plane_to_sensor(&p.plane);
            let corners = p.corners().map(|c| pose.inverse_transform_point(&c));
            let mut samples = Vec::new();
            const SAMPLES: usize = 16;
            for k in 0..4 {
                let (a, b) = (corners[k], corners[(k + 1) % 4]);
                for s in 0..SAMPLES {
                    samples.push(a + (b - a) * (s as f64 / SAMPLES as f64));
                }
            }
            let azs: Vec<f64> = samples.iter().map(|s| s.y.atan2(s.x).rem_euclid(TAU)).collect();
            // Ring bounds come from the corners, where the outline was sampled.
            let els: Vec<f64> = corners.iter().map(|s| (s.z / s.norm()).asin()).collect();
            let Some((left, width)) = covering_arc(&azs) else { continue };
            let el_lo = els.iter().copied().fold(f64::INFINITY, f64::min);
            let el_hi = els.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (Some(lower_ring), Some(upper_ring)) = (rings.nearest_ring(el_lo), rings.nearest_ring(el_hi)) else {
                continue;
            };
            // Snap to column edges the way detected bounds are expressed.
            let step = grid.step_azimuth;
            let left_az = ((left / step).round() * step).rem_euclid(TAU);
            let right_az = left_az + (width / step).round() * step;
            out.push(GlassPane {
                plane,
                left_az,
                right_az,
                lower_ring: lower_ring.min(upper_ring),
                upper_ring: upper_ring.max(lower_ring),
                inlier_count: p.inlier_weight,
                source: PaneSource::Registry,
            });
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# pane a b c d u_min u_max v_min v_max count\n");
        for p in &self.panes {
            let [a, b, c, d] = p.plane.coefficients();
            let r = &p.rect;
            let _ = writeln!(
                out,
                "pane {a:.9} {b:.9} {c:.9} {d:.9} {:.6} {:.6} {:.6} {:.6} {}",
                r.u_min, r.u_max, r.v_min, r.v_max, p.observations
            );
        }
        out
    }

    pub fn from_text(text: &str, params: RegistryParams) -> Result<Self, ParseError> {
        let mut reg = PaneRegistry::new(params);
        let mut record = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: String| ParseError::Record { record, line: i + 1, reason };
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 10 || toks[0] != "pane" {
                return Err(bad("expected `pane a b c d u_min u_max v_min v_max count`".into()));
            }
            let mut v = [0.0; 8];
            for (k, t) in toks[1..9].iter().enumerate() {
                v[k] = t.parse().map_err(|_| bad(format!("bad number {t:?}")))?;
            }
            let count: usize = toks[9].parse().map_err(|_| bad(format!("bad count {:?}", toks[9])))?;
            let plane = Plane::new(v[0], v[1], v[2], v[3]).map_err(|e| bad(e.to_string()))?;
            if !(v[4] <= v[5] && v[6] <= v[7]) {
                return Err(bad("pane extents are inverted".into()));
            }
            reg.panes.push(RegisteredPane {
                plane,
                rect: LocalRect { u_min: v[4], u_max: v[5], v_min: v[6], v_max: v[7] },
                observations: count,
                inlier_weight: count,
                last_seen: None,
            });
            record += 1;
        }
        Ok(reg)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path, params: RegistryParams) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, params).map_err(|source| Error::Parse { path: path.to_path_buf(), source })
    }
}

/// Smallest arc containing every angle, as `(start, width)`.
fn covering_arc(angles: &[f64]) -> Option<(f64, f64)> {
    let mut a: Vec<f64> = angles.to_vec();
    a.sort_by(f64::total_cmp);
    let n = a.len();
    if n == 0 {
        return None;
    }
    let (mut best_gap, mut start) = (f64::NEG_INFINITY, 0usize);
    for i in 0..n {
        let next = if i + 1 < n { a[i + 1] } else { a[0] + TAU };
        let gap = next - a[i];
        if gap > best_gap {
            best_gap = gap;
            start = (i + 1) % n;
        }
    }
    Some((a[start], TAU - best_gap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rings() -> RingTable {
        RingTable::new((0..32).map(|r| Some((-30.67 + r as f64 * 41.34 / 31.0).to_radians())).collect())
    }

    fn pane_ahead() -> GlassPane {
        GlassPane {
            plane: Plane::new(-1.0, 0.0, 0.0, 3.0).unwrap(),
            left_az: TAU - 0.3,
            right_az: TAU + 0.3,
            lower_ring: 18,
            upper_ring: 28,
            inlier_count: 400,
            source: PaneSource::DualReturn,
        }
    }

    fn some_pose() -> Pose {
        Pose::new(UnitQuaternion::from_euler_angles(0.02, -0.01, 0.7), Vector3::new(1.5, -2.0, 0.3))
    }

    #[test]
    fn identity_pose_keeps_the_plane() {
        let mut reg = PaneRegistry::default();
        reg.register_pane(&pane_ahead(), &Pose::identity(), &rings(), Some(0)).unwrap();
        assert_relative_eq!(reg.panes()[0].plane.normal(), pane_ahead().plane.normal(), epsilon = 1e-12);
        assert_relative_eq!(reg.panes()[0].plane.d(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn repeated_registration_merges() {
        let mut reg = PaneRegistry::default();
        for id in 0..2 {
            reg.register_pane(&pane_ahead(), &Pose::identity(), &rings(), Some(id)).unwrap();
        }
        assert_eq!(reg.len(), 1);
        assert_eq!(reg.panes()[0].observations, 2);
        assert_eq!(reg.panes()[0].last_seen, Some(1));
    }

    #[test]
    fn distinct_panes_stay_apart() {
        let mut reg = PaneRegistry::default();
        reg.register_pane(&pane_ahead(), &Pose::identity(), &rings(), None).unwrap();
        let mut side = pane_ahead();
        side.plane = Plane::new(0.0, -1.0, 0.0, 3.0).unwrap();
        side.left_az = 1.2;
        side.right_az = 1.9;
        reg.register_pane(&side, &Pose::identity(), &rings(), None).unwrap();
        assert_eq!(reg.len(), 2);
    }

    #[test]
    fn register_then_lookup_recovers_plane() {
        let pose = Pose::new(UnitQuaternion::from_euler_angles(0.0, 0.0, 0.7), Vector3::new(1.5, -2.0, 0.3));
        let mut reg = PaneRegistry::default();
        reg.register_pane(&pane_ahead(), &pose, &rings(), None).unwrap();
        let back = reg.lookup_panes(&pose, &rings(), &GridGeometry::default());
        assert_eq!(back.len(), 1);
        let (a, b) = (back[0].plane.coefficients(), pane_ahead().plane.coefficients());
        for k in 0..4 {
            assert!((a[k] - b[k]).abs() < 1e-6);
        }
        assert_eq!((back[0].lower_ring, back[0].upper_ring), (18, 28));
        let step = GridGeometry::default().step_azimuth;
        let diff = (back[0].left_az - pane_ahead().left_az).rem_euclid(TAU);
        assert!(diff.min(TAU - diff) < 2.0 * step);
        assert!((back[0].width_rad() - 0.6).abs() < 2.0 * step);
        assert_eq!(back[0].source, PaneSource::Registry);
    }

    #[test]
    fn lookup_range_filters() {
        let mut reg = PaneRegistry::default();
        reg.register_pane(&pane_ahead(), &Pose::identity(), &rings(), None).unwrap();
        let g = GridGeometry::default();
        assert_eq!(PaneRegistry::default().lookup_panes(&Pose::identity(), &rings(), &g).len(), 0);
        assert_eq!(reg.lookup_panes(&Pose::identity(), &rings(), &g).len(), 1);
        let far = Pose::new(UnitQuaternion::identity(), Vector3::new(-80.0, 0.0, 0.0));
        assert_eq!(reg.lookup_panes(&far, &rings(), &g).len(), 0);
    }

    #[test]
    fn non_unit_quaternion_is_rejected() {
        assert!(Pose::from_components([0.0; 3], [0.0, 0.0, 0.0, 1.1]).is_err());
        assert!(Pose::from_components([0.0; 3], [0.0, 0.0, 0.0, 1.0 + 1e-9]).is_ok());
    }

    #[test]
    fn pose_file_round_trip_and_errors() {
        let text = "# header\n3 1 2 3 0 0 0 1\n7 0 0 0 0 0 0.7071067811865476 0.7071067811865476\n";
        let poses = parse_poses(text).unwrap();
        assert_eq!(poses.len(), 2);
        let again = parse_poses(&format_poses(poses.iter().map(|(k, v)| (*k, v)))).unwrap();
        for (k, p) in &poses {
            assert!((again[k].translation - p.translation).norm() < 1e-9);
            assert!(again[k].rotation.angle_to(&p.rotation) < 1e-9);
        }
        assert!(matches!(parse_poses("1 0 0 0 0 0 0"), Err(ParseError::Record { record: 0, .. })));
        assert!(parse_poses("1 0 0 0 0 0 0 2").is_err());
    }

    #[test]
    fn registry_file_round_trip() {
        let mut reg = PaneRegistry::default();
        reg.register_pane(&pane_ahead(), &some_pose(), &rings(), None).unwrap();
        let back = PaneRegistry::from_text(&reg.to_text(), reg.params).unwrap();
        assert_eq!(back.len(), 1);
        let (a, b) = (back.panes()[0], reg.panes()[0]);
        assert!(a.plane.angle_to(&b.plane) < 1e-8);
        assert!((a.rect.u_min - b.rect.u_min).abs() < 1e-6);
        assert!(PaneRegistry::from_text("pane 1 0 0", reg.params).is_err());
    }

    #[test]
    fn covering_arc_handles_seam() {
        let (start, width) = covering_arc(&[6.2, 0.1, 6.0]).unwrap();
        assert!((start - 6.0).abs() < 1e-12);
        assert!((width - (0.1 + TAU - 6.0)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn transform_round_trip_and_positive_offset(
            roll in -3.0f64..3.0, pitch in -1.5f64..1.5, yaw in -3.0f64..3.0,
            tx in -20.0f64..20.0, ty in -20.0f64..20.0, tz in -3.0f64..3.0,
            nx in -1.0f64..1.0, ny in -1.0f64..1.0, nz in -1.0f64..1.0, d in 0.5f64..10.0,
        ) {
            prop_assume!(Vector3::new(nx, ny, nz).norm() > 0.1);
            let plane = Plane::from_normal_offset(Vector3::new(nx, ny, nz), d).unwrap();
            let pose = Pose::new(UnitQuaternion::from_euler_angles(roll, pitch, yaw), Vector3::new(tx, ty, tz));
            let map = pose.plane_to_map(&plane);
            prop_assert!(map.d() >= 0.0);
            let back = pose.plane_to_sensor(&map);
            let (a, b) = (back.coefficients(), plane.coefficients());
            for k in 0..4 {
                prop_assert!((a[k] - b[k]).abs() < 1e-9);
            }
            // A point on the sensor plane lands on the map plane.
            let p = -plane.normal() * plane.d();
            prop_assert!(map.signed_distance(&pose.transform_point(&p)).abs() < 1e-9);
        }
    }
}
