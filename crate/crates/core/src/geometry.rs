// SPDX-License-Identifier: Apache-2.0

//! Planes, Householder mirroring, RANSAC plane fitting and pane boundaries.

use std::f64::consts::TAU;

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{DualScan, GridGeometry};
use crate::detect::{CellPoint, GlassEvidence};
use crate::error::{Error, Result};

/// Plane `N·p + d = 0` with unit normal and, by convention, `d ≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    normal: Vector3<f64>,
    d: f64,
}

impl Plane {
    /// Normalizes `(a, b, c, d)` and flips all four signs when `d < 0`.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        Self::from_normal_offset(Vector3::new(a, b, c), d)
    }

    pub fn from_normal_offset(normal: Vector3<f64>, d: f64) -> Result<Self> {
        let norm = normal.norm();
        if !norm.is_finite() || norm <= 1e-12 || !d.is_finite() {
            return Err(Error::Input(format!("degenerate plane normal {normal:?}")));
        }
        let (mut n, mut d) = (normal / norm, d / norm);
        if d < 0.0 {
            n = -n;
            d = -d;
        }
        Ok(Self { normal: n, d })
    }

    pub fn from_normal_point(normal: Vector3<f64>, point: Vector3<f64>) -> Result<Self> {
        let norm = normal.norm();
        if norm.is_nan() || norm <= 1e-12 {
            return Err(Error::Input("degenerate plane normal".into()));
        }
        let n = normal / norm;
        Self::from_normal_offset(n, -n.dot(&point))
    }

    /// Plane through three points; `None` when they are (nearly) collinear.
    pub fn through(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Option<Self> {
        let u = b - a;
        let v = c - a;
        let n = u.cross(&v);
        let scale = u.norm() * v.norm();
        if scale == 0.0 || n.norm() <= 1e-9 * scale {
            return None;
        }
        Self::from_normal_point(n, *a).ok()
    }

    #[inline]
    pub fn normal(&self) -> &Vector3<f64> {
        &self.normal
    }

    #[inline]
    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn coefficients(&self) -> [f64; 4] {
        [self.normal.x, self.normal.y, self.normal.z, self.d]
    }

    /// Positive on the side of the origin (the sensor), for `d > 0`.
    #[inline]
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.d
    }

    /// Angle between the two planes' normals, ignoring orientation. Radians.
    pub fn angle_to(&self, other: &Plane) -> f64 {
        self.normal.dot(&other.normal).abs().min(1.0).acos()
    }

    /// Distance `t > 0` along a ray from the origin with unit direction `dir`
    /// at which it meets the plane.
    pub fn ray_from_origin(&self, dir: &Vector3<f64>) -> Option<f64> {
        let denom = self.normal.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = -self.d / denom;
        (t > 0.0).then_some(t)
    }

    #[inline]
    pub fn reflect(&self, p: &Vector3<f64>) -> Vector3<f64> {
        reflect_point(p, self)
    }
}

/// Householder reflection `p − 2(N·p + d)N`.
#[inline]
pub fn reflect_point(p: &Vector3<f64>, plane: &Plane) -> Vector3<f64> {
    p - plane.normal * (2.0 * plane.signed_distance(p))
}

pub fn mirror_points(points: &[Vector3<f64>], plane: &Plane) -> Vec<Vector3<f64>> {
    points.iter().map(|p| reflect_point(p, plane)).collect()
}

/// The 4×4 homogeneous reflection matrix (column-vector convention).
pub fn reflection_matrix(plane: &Plane) -> nalgebra::Matrix4<f64> {
    let n = plane.normal;
    let h = Matrix3::identity() - n * n.transpose() * 2.0;
    let t = n * (-2.0 * plane.d);
    let mut m = nalgebra::Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&h);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    m
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RansacParams {
    /// Max point-to-plane distance of an inlier, meters.
    pub inlier_dist: f64,
    pub min_inliers: usize,
    /// Keep fitting while more than this many points remain.
    pub loop_threshold: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self { inlier_dist: 0.05, min_inliers: 30, loop_threshold: 50, max_iters: 500, seed: 0 }
    }
}

/// Which family of planes RANSAC samples from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlaneModel {
    /// Any orientation, three-point samples.
    Free,
    /// Planes containing the sensor's z axis direction, two-point samples.
    Vertical,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlaneFit {
    pub plane: Plane,
    /// Indices into the input slice.
    pub inliers: Vec<usize>,
}

/// Sequential RANSAC with total-least-squares refinement.
///
/// Repeatedly fits the best-supported plane to the remaining points, keeps it
/// if it has at least `min_inliers`, removes its inliers and continues while
/// more than `loop_threshold` points remain.
pub fn fit_planes_ransac(points: &[Vector3<f64>], params: &RansacParams) -> Vec<PlaneFit> {
    fit_planes_with_model(points, params, PlaneModel::Free)
}

pub fn fit_planes_with_model(points: &[Vector3<f64>], params: &RansacParams, model: PlaneModel) -> Vec<PlaneFit> {
    let sample_size = match model {
        PlaneModel::Free => 3,
        PlaneModel::Vertical => 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    let mut fits = Vec::new();

    while remaining.len() > params.loop_threshold && remaining.len() >= sample_size {
        let Some((sample_plane, consensus)) = best_consensus(points, &remaining, params, model, &mut rng) else {
            break;
        };
        let mut accepted = None;
        if consensus.len() >= params.min_inliers {
            let refined = refine_iteratively(points, &remaining, consensus.clone(), params, model)
                .filter(|(_, inl)| inl.len() >= params.min_inliers);
            accepted = Some(refined.unwrap_or((sample_plane, consensus.clone())));
        }
        let removed = match &accepted {
            Some((_, inl)) => inl.clone(),
            None => consensus,
        };
        if let Some((plane, inliers)) = accepted {
            fits.push(PlaneFit { plane, inliers });
        }
        let mut drop = vec![false; points.len()];
        for &i in &removed {
            drop[i] = true;
        }
        remaining.retain(|&i| !drop[i]);
    }
    fits
}

/// Alternates least-squares fitting and inlier selection until the inlier
/// set stops changing.
fn refine_iteratively(
    points: &[Vector3<f64>],
    subset: &[usize],
    mut inliers: Vec<usize>,
    params: &RansacParams,
    model: PlaneModel,
) -> Option<(Plane, Vec<usize>)> {
    let mut plane = refine(points, &inliers, model)?;
    for _ in 0..REFINE_ROUNDS {
        let next = inliers_of(points, subset, &plane, params.inlier_dist);
        if next == inliers || next.len() < 3 {
            break;
        }
        inliers = next;
        plane = refine(points, &inliers, model)?;
    }
    Some((plane, inliers_of(points, subset, &plane, params.inlier_dist)))
}

const REFINE_ROUNDS: usize = 10;

fn inliers_of(points: &[Vector3<f64>], subset: &[usize], plane: &Plane, dist: f64) -> Vec<usize> {
    subset.iter().copied().filter(|&i| plane.signed_distance(&points[i]).abs() <= dist).collect()
}

fn count_inliers(points: &[Vector3<f64>], subset: &[usize], plane: &Plane, dist: f64) -> usize {
    subset.iter().filter(|&&i| plane.signed_distance(&points[i]).abs() <= dist).count()
}

fn sample_plane(points: &[Vector3<f64>], subset: &[usize], model: PlaneModel, rng: &mut ChaCha8Rng) -> Option<Plane> {
    let n = subset.len();
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    let (pa, pb) = (&points[subset[a]], &points[subset[b]]);
    match model {
        PlaneModel::Free => {
            let mut c = rng.random_range(0..n);
            while c == a || c == b {
                if n < 3 {
                    return None;
                }
                c = rng.random_range(0..n);
            }
            Plane::through(pa, pb, &points[subset[c]])
        }
        PlaneModel::Vertical => {
            let dx = pb.x - pa.x;
            let dy = pb.y - pa.y;
            if (dx * dx + dy * dy).sqrt() < 1e-6 {
                return None;
            }
            Plane::from_normal_point(Vector3::new(-dy, dx, 0.0), *pa).ok()
        }
    }
}

fn best_consensus(
    points: &[Vector3<f64>],
    subset: &[usize],
    params: &RansacParams,
    model: PlaneModel,
    rng: &mut ChaCha8Rng,
) -> Option<(Plane, Vec<usize>)> {
    let s = match model {
        PlaneModel::Free => 3,
        PlaneModel::Vertical => 2,
    };
    let mut best: Option<(Plane, usize)> = None;
    let mut budget = params.max_iters;
    let mut iter = 0;
    while iter < budget {
        iter += 1;
        // Degenerate samples consume an iteration so a collinear set cannot spin forever.
        let Some(plane) = sample_plane(points, subset, model, rng) else { continue };
        let count = count_inliers(points, subset, &plane, params.inlier_dist);
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((plane, count));
            // Adaptive stop at 99.9% confidence of an all-inlier sample.
            let w = count as f64 / subset.len() as f64;
            let p_good = w.powi(s);
            if p_good >= 1.0 {
                budget = iter;
            } else if p_good > 0.0 {
                let needed = ((1.0f64 - 0.999).ln() / (1.0 - p_good).ln()).ceil();
                if needed.is_finite() {
                    budget = budget.min((needed as usize).max(1));
                }
            }
        }
    }
    let (plane, _) = best?;
    Some((plane, inliers_of(points, subset, &plane, params.inlier_dist)))
}

/// Total-least-squares plane through `idx`.
pub fn refine(points: &[Vector3<f64>], idx: &[usize], model: PlaneModel) -> Option<Plane> {
    if idx.len() < 3 {
        return None;
    }
    let n = idx.len() as f64;
    let centroid = idx.iter().fold(Vector3::zeros(), |acc, &i| acc + points[i]) / n;
    match model {
        PlaneModel::Free => {
            let mut cov = Matrix3::zeros();
            for &i in idx {
                let q = points[i] - centroid;
                cov += q * q.transpose();
            }
            let eig = SymmetricEigen::new(cov);
            let k = eig.eigenvalues.imin();
            Plane::from_normal_point(eig.eigenvectors.column(k).into_owned(), centroid).ok()
        }
        PlaneModel::Vertical => {
            let mut cov = Matrix2::zeros();
            for &i in idx {
                let q = Vector2::new(points[i].x - centroid.x, points[i].y - centroid.y);
                cov += q * q.transpose();
            }
            let eig = SymmetricEigen::new(cov);
            let k = eig.eigenvalues.imin();
            let nn = eig.eigenvectors.column(k);
            Plane::from_normal_point(Vector3::new(nn[0], nn[1], 0.0), centroid).ok()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PaneSource {
    IntensityPeak,
    DualReturn,
    /// Recalled from the pane registry.
    Registry,
}

/// A bounded glass pane as seen from the sensor: its plane plus the azimuth
/// and ring span it covers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlassPane {
    pub plane: Plane,
    /// Radians in `[0, 2π)`.
    pub left_az: f64,
    /// Unwrapped: `left_az ≤ right_az < left_az + 2π`.
    pub right_az: f64,
    pub lower_ring: usize,
    pub upper_ring: usize,
    pub inlier_count: usize,
    pub source: PaneSource,
}

impl GlassPane {
    /// Whether the beam `(ring, azimuth)` passes through the pane's bounds.
    pub fn covers(&self, ring: usize, azimuth: f64) -> bool {
        if ring < self.lower_ring || ring > self.upper_ring {
            return false;
        }
        let a = (azimuth - self.left_az).rem_euclid(TAU);
        a <= self.right_az - self.left_az
    }

    pub fn width_rad(&self) -> f64 {
        self.right_az - self.left_az
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryParams {
    pub frame_search_dist: f64,
    pub frame_gap: usize,
    /// Glass-bearing cells must not lie in front of the plane by more than this.
    pub inlier_dist: f64,
}

impl Default for BoundaryParams {
    fn default() -> Self {
        Self { frame_search_dist: 0.10, frame_gap: 5, inlier_dist: 0.05 }
    }
}

/// Estimates the pane bounds of a fitted plane.
///
/// Ring bounds are the extreme rings of the glass-bearing cells in the plane's
/// inlier columns and the adjacent columns whose divergent beams reach past
/// the plane. Azimuth bounds come from the nearest frame point (a
/// single-echo point near the plane) within `frame_gap` columns of the
/// glass-bearing run on each side, falling back to the run's extreme column.
/// Returns `None` when the plane has no glass-bearing cells.
pub fn find_boundary(
    fit: &PlaneFit,
    candidates: &[CellPoint],
    scan: &DualScan,
    evidence: &GlassEvidence,
    params: &BoundaryParams,
    source: PaneSource,
) -> Option<GlassPane> {
    let geom = *scan.geometry();
    let plane = &fit.plane;
    let mut inlier_cols = vec![false; geom.column_count];
    let mut glass_cells: Vec<(usize, usize)> = Vec::new();
    for &i in &fit.inliers {
        let c = &candidates[i];
        inlier_cols[c.col] = true;
        glass_cells.push((c.ring, c.col));
    }
    let mut behind = vec![false; geom.column_count];
    let mut behind_cells = Vec::new();
    for (ring, col) in evidence.degree_has_glass.iter() {
        if let Some(s) = scan.strongest.get(ring, col) {
            if plane.signed_distance(&s.position()) <= params.inlier_dist {
                behind[col] = true;
                behind_cells.push((ring, col));
            }
        }
    }
    // Beams past the specular cutoff still diverge; grow over them.
    let mut grown = inlier_cols.clone();
    let mut stack: Vec<usize> = (0..geom.column_count).filter(|&c| inlier_cols[c]).collect();
    while let Some(c) = stack.pop() {
        for next in [geom.wrap_col(c as isize - 1), geom.wrap_col(c as isize + 1)] {
            if behind[next] && !grown[next] {
                grown[next] = true;
                stack.push(next);
            }
        }
    }
    glass_cells.extend(behind_cells.into_iter().filter(|&(_, c)| grown[c]));
    if glass_cells.is_empty() {
        return None;
    }
    glass_cells.sort_unstable();
    glass_cells.dedup();

    let cluster = largest_column_cluster(&glass_cells, &geom, 2 * params.frame_gap.max(1));
    let (c_lo, c_hi) = cluster;
    let in_cluster = |col: usize| {
        let off = (col as isize - c_lo as isize).rem_euclid(geom.column_count as isize) as usize;
        off <= c_hi - c_lo
    };
    let rings: Vec<usize> = glass_cells.iter().filter(|(_, c)| in_cluster(*c)).map(|(r, _)| *r).collect();
    let lower_ring = *rings.iter().min()?;
    let upper_ring = *rings.iter().max()?;

    let is_frame_col = |col: usize| {
        (lower_ring..=upper_ring).any(|ring| {
            if evidence.degree_has_glass.contains(ring, col) {
                return false;
            }
            scan.strongest
                .get(ring, col)
                .is_some_and(|s| plane.signed_distance(&s.position()).abs() <= params.frame_search_dist)
        })
    };
    let step = geom.step_azimuth;
    // c_hi is unwrapped (may exceed column_count).
    let mut right_edge = (c_hi + 1) as f64 * step;
    for k in 1..=params.frame_gap {
        if is_frame_col(geom.wrap_col((c_hi + k) as isize)) {
            right_edge = (c_hi + k) as f64 * step;
            break;
        }
    }
    let mut left_edge = c_lo as f64 * step;
    for k in 1..=params.frame_gap {
        if is_frame_col(geom.wrap_col(c_lo as isize - k as isize)) {
            left_edge = (c_lo as f64 - k as f64 + 1.0) * step;
            break;
        }
    }
    let left_az = left_edge.rem_euclid(TAU);
    Some(GlassPane {
        plane: *plane,
        left_az,
        right_az: left_az + (right_edge - left_edge),
        lower_ring,
        upper_ring,
        inlier_count: fit.inliers.len(),
        source,
    })
}

/// Splits the occupied columns into runs separated by more than `max_gap`
/// empty columns (circularly) and returns the run with the most cells as an
/// unwrapped `(first, last)` column pair.
fn largest_column_cluster(cells: &[(usize, usize)], geom: &GridGeometry, max_gap: usize) -> (usize, usize) {
    let n = geom.column_count;
    let mut weight = vec![0usize; n];
    for &(_, c) in cells {
        weight[c] += 1;
    }
    let cols: Vec<usize> = (0..n).filter(|&c| weight[c] > 0).collect();
    if cols.len() == 1 {
        return (cols[0], cols[0]);
    }
    // Rotate so the sequence starts right after the widest empty stretch.
    let mut widest = (0usize, 0usize);
    for i in 0..cols.len() {
        let next = cols[(i + 1) % cols.len()];
        let gap = (next as isize - cols[i] as isize - 1).rem_euclid(n as isize) as usize;
        if gap > widest.1 {
            widest = (i, gap);
        }
    }
    let start = (widest.0 + 1) % cols.len();
    let mut unwrapped = Vec::with_capacity(cols.len());
    let base = cols[start];
    for k in 0..cols.len() {
        let c = cols[(start + k) % cols.len()];
        let u = if c < base { c + n } else { c };
        unwrapped.push(u);
    }
    let mut best = (unwrapped[0], unwrapped[0], 0usize);
    let mut cur = (unwrapped[0], unwrapped[0], weight[unwrapped[0] % n]);
    for &u in &unwrapped[1..] {
        if u - cur.1 - 1 > max_gap {
            if cur.2 > best.2 {
                best = cur;
            }
            cur = (u, u, 0);
        }
        cur.1 = u;
        cur.2 += weight[u % n];
    }
    if cur.2 > best.2 {
        best = cur;
    }
    (best.0, best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn plane_normalizes_and_enforces_positive_offset() {
        let p = Plane::new(0.0, 0.0, 2.0, -3.0).unwrap();
        assert_abs_diff_eq!(p.normal().z, -1.0);
        assert_abs_diff_eq!(p.d(), 1.5);
        assert!(Plane::new(0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn reflect_across_xy_plane() {
        let p = Plane::from_normal_offset(Vector3::z(), 0.0).unwrap();
        assert_eq!(reflect_point(&Vector3::new(1.0, 2.0, 3.0), &p), Vector3::new(1.0, 2.0, -3.0));
    }

    #[test]
    fn reflect_across_x_equals_two() {
        let p = Plane::new(-1.0, 0.0, 0.0, 2.0).unwrap();
        assert_eq!(reflect_point(&Vector3::zeros(), &p), Vector3::new(4.0, 0.0, 0.0));
    }

    #[test]
    fn on_plane_point_is_fixed() {
        let p = Plane::new(-1.0, 0.0, 0.0, 2.0).unwrap();
        let q = Vector3::new(2.0, -7.0, 0.3);
        assert_eq!(reflect_point(&q, &p), q);
    }

    #[test]
    fn homogeneous_matrix_matches_point_form() {
        let p = Plane::new(0.3, -0.5, 0.8, 1.7).unwrap();
        let m = reflection_matrix(&p);
        let q = Vector3::new(0.4, 2.0, -1.0);
        let h = m * q.push(1.0);
        assert_abs_diff_eq!(h.xyz(), reflect_point(&q, &p), epsilon = 1e-12);
    }

    #[test]
    fn mirror_empty_and_involution() {
        let p = Plane::new(1.0, 1.0, 0.0, 3.0).unwrap();
        assert!(mirror_points(&[], &p).is_empty());
        let pts = vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(-4.0, 0.5, 9.0)];
        let back = mirror_points(&mirror_points(&pts, &p), &p);
        for (a, b) in pts.iter().zip(&back) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn ransac_recovers_exact_horizontal_plane() {
        let pts: Vec<_> = (0..200)
            .map(|i| Vector3::new((i % 20) as f64 * 0.1, (i / 20) as f64 * 0.1, 1.5))
            .collect();
        let fits = fit_planes_ransac(&pts, &RansacParams::default());
        assert_eq!(fits.len(), 1);
        let pl = &fits[0].plane;
        assert_abs_diff_eq!(*pl.normal(), Vector3::new(0.0, 0.0, -1.0), epsilon = 1e-9);
        assert_abs_diff_eq!(pl.d(), 1.5, epsilon = 1e-9);
        assert_eq!(fits[0].inliers.len(), 200);
    }

    #[test]
    fn ransac_with_two_points_is_empty() {
        let pts = vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0)];
        assert!(fit_planes_ransac(&pts, &RansacParams { loop_threshold: 0, ..Default::default() }).is_empty());
    }

    #[test]
    fn ransac_on_collinear_points_terminates() {
        let pts: Vec<_> = (0..100).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert!(fit_planes_ransac(&pts, &RansacParams::default()).is_empty());
    }

    // Independent oracle: total least squares on the whole noisy sample.
    fn tls_oracle(pts: &[Vector3<f64>]) -> Plane {
        let idx: Vec<usize> = (0..pts.len()).collect();
        refine(pts, &idx, PlaneModel::Free).unwrap()
    }

    #[test]
    fn ransac_noisy_wall_matches_tls_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.02).unwrap();
        let pts: Vec<_> = (0..300)
            .map(|i| {
                Vector3::new(
                    4.0 + noise.sample(&mut rng),
                    (i % 20) as f64 * 0.15 - 1.5,
                    (i / 20) as f64 * 0.1 - 0.7,
                )
            })
            .collect();
        let oracle = tls_oracle(&pts);
        let truth = Plane::new(-1.0, 0.0, 0.0, 4.0).unwrap();
        assert!(oracle.angle_to(&truth).to_degrees() < 1.0);
        let fits = fit_planes_ransac(&pts, &RansacParams::default());
        assert!(!fits.is_empty());
        let pl = &fits[0].plane;
        assert!(pl.angle_to(&oracle).to_degrees() <= 1.0);
        assert!((pl.d() - oracle.d()).abs() <= 0.01);
        assert!(pl.angle_to(&truth).to_degrees() <= 1.0);
        assert!((pl.d() - 4.0).abs() <= 0.01);
    }

    #[test]
    fn ransac_finds_two_planes_and_is_deterministic() {
        let mut pts = Vec::new();
        for i in 0..150 {
            pts.push(Vector3::new(3.0, (i % 15) as f64 * 0.1, (i / 15) as f64 * 0.1));
            pts.push(Vector3::new((i % 15) as f64 * 0.1, -2.0, (i / 15) as f64 * 0.1 + 0.05));
        }
        let p = RansacParams { seed: 42, ..Default::default() };
        let a = fit_planes_ransac(&pts, &p);
        let b = fit_planes_ransac(&pts, &p);
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        for fit in &a {
            for &i in &fit.inliers {
                assert!(fit.plane.signed_distance(&pts[i]).abs() <= p.inlier_dist);
            }
        }
    }

    #[test]
    fn vertical_model_ignores_vertical_noise() {
        // A single horizontal line plus a few points above: the free model is
        // under-determined, the vertical model recovers the wall.
        let pts: Vec<_> = (0..120).map(|i| Vector3::new(2.0, i as f64 * 0.02 - 1.2, 0.0)).collect();
        let fits = fit_planes_with_model(&pts, &RansacParams::default(), PlaneModel::Vertical);
        assert_eq!(fits.len(), 1);
        assert_abs_diff_eq!(*fits[0].plane.normal(), Vector3::new(-1.0, 0.0, 0.0), epsilon = 1e-9);
        assert_abs_diff_eq!(fits[0].plane.d(), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn pane_covers_across_seam() {
        let pane = GlassPane {
            plane: Plane::new(-1.0, 0.0, 0.0, 2.0).unwrap(),
            left_az: TAU - 0.1,
            right_az: TAU + 0.1,
            lower_ring: 10,
            upper_ring: 20,
            inlier_count: 40,
            source: PaneSource::DualReturn,
        };
        assert!(pane.covers(15, 0.05));
        assert!(pane.covers(15, TAU - 0.05));
        assert!(!pane.covers(15, 0.2));
        assert!(!pane.covers(9, 0.0));
    }

    #[test]
    fn column_cluster_unwraps_seam() {
        let g = GridGeometry::default();
        let cells = vec![(0, 2249), (0, 2250), (0, 0), (0, 1), (0, 900)];
        let (lo, hi) = largest_column_cluster(&cells, &g, 10);
        assert_eq!(lo, 2249);
        assert_eq!(hi, 2251 + 1);
    }

    fn arb_plane() -> impl Strategy<Value = Plane> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, 0.0f64..10.0)
            .prop_filter("nonzero normal", |(a, b, c, _)| a * a + b * b + c * c > 1e-3)
            .prop_map(|(a, b, c, d)| Plane::new(a, b, c, d).unwrap())
    }

    proptest! {
        #[test]
        fn reflection_is_an_involution(pl in arb_plane(), x in -50.0f64..50.0, y in -50.0f64..50.0, z in -50.0f64..50.0) {
            let p = Vector3::new(x, y, z);
            let back = reflect_point(&reflect_point(&p, &pl), &pl);
            prop_assert!((back - p).norm() <= 1e-9);
            let s0 = pl.signed_distance(&p);
            let s1 = pl.signed_distance(&reflect_point(&p, &pl));
            if s0.abs() >= 1e-12 {
                prop_assert!(s0.signum() != s1.signum() || s1.abs() < 1e-9);
            }
            prop_assert!((pl.normal().norm() - 1.0).abs() <= 1e-9);
            prop_assert!(pl.d() >= 0.0);
        }
    }
}
