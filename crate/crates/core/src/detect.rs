// SPDX-License-Identifier: Apache-2.0

//! Glass evidence from a single scan.
//!
//! Two independent detectors:
//!
//! * **Intensity peaks** on the horizontal ring of the strongest cloud. Glass
//!   returns are brightest where the beam meets the pane perpendicularly and
//!   fade quickly with incidence, so a pane shows up as a rise-then-fall run
//!   of intensities over contiguous ranges. Candidates are confirmed by the
//!   same shape vertically, two rings up and down at the apex column.
//! * **Dual-return divergence.** A beam whose strongest and last echoes
//!   differ passes through glass; the nearer echo is the glass candidate and
//!   can only come from the strongest channel.

use crate::cloud::{DualScan, GridGeometry, OrganizedCloud, RawReturn};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectParams {
    /// Strongest/last ranges closer than this are the same echo, meters.
    pub eps_range: f64,
    /// Adjacent points of a peak run must be closer than this, meters.
    pub gap_threshold: f64,
    pub intensity_low: f64,
    pub intensity_max: f64,
    pub min_run_len: usize,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self { eps_range: 0.01, gap_threshold: 0.3, intensity_low: 40.0, intensity_max: 180.0, min_run_len: 5 }
    }
}

/// A return together with its grid cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellPoint {
    pub ring: usize,
    pub col: usize,
    pub point: RawReturn,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeakCandidate {
    /// The rise-then-fall run, in column order.
    pub points: Vec<CellPoint>,
    /// Column of the maximum intensity.
    pub apex_col: usize,
    pub ring: usize,
}

impl PeakCandidate {
    pub fn apex(&self) -> &CellPoint {
        self.points
            .iter()
            .find(|p| p.col == self.apex_col)
            .expect("apex lies inside the run")
    }
}

/// Ring whose valid cells have the smallest mean |elevation|.
pub fn horizontal_ring(cloud: &OrganizedCloud) -> Option<usize> {
    (0..cloud.geometry().ring_count)
        .filter_map(|ring| {
            let (sum, n) = cloud
                .row(ring)
                .iter()
                .flatten()
                .fold((0.0, 0usize), |(s, n), r| (s + (r.z / r.range()).abs(), n + 1));
            (n > 0).then(|| (ring, sum / n as f64))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(ring, _)| ring)
}

/// Finds rise-then-fall intensity runs on the horizontal ring.
pub fn find_intensity_peaks(strongest: &OrganizedCloud, params: &DetectParams) -> Vec<PeakCandidate> {
    let Some(ring) = horizontal_ring(strongest) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for segment in contiguous_segments(strongest, ring, params.gap_threshold) {
        out.extend(peaks_in_segment(&segment, params));
    }
    out
}

/// Splits one ring into runs of valid cells whose neighbours are closer than
/// `gap`. Starts after a break so runs are not cut at the azimuth seam.
fn contiguous_segments(cloud: &OrganizedCloud, ring: usize, gap: f64) -> Vec<Vec<CellPoint>> {
    let geom: &GridGeometry = cloud.geometry();
    let n = geom.column_count;
    let row = cloud.row(ring);
    let breaks_before = |c: usize| -> bool {
        let prev = row[(c + n - 1) % n];
        match (prev, row[c]) {
            (Some(a), Some(b)) => (a.position() - b.position()).norm() >= gap,
            _ => true,
        }
    };
    let start = (0..n).find(|&c| breaks_before(c)).unwrap_or(0);
    let mut segments = Vec::new();
    let mut cur: Vec<CellPoint> = Vec::new();
    for k in 0..n {
        let c = (start + k) % n;
        if k > 0 && breaks_before(c) && !cur.is_empty() {
            segments.push(std::mem::take(&mut cur));
        }
        if let Some(point) = row[c] {
            cur.push(CellPoint { ring, col: c, point });
        }
    }
    if !cur.is_empty() {
        segments.push(cur);
    }
    segments
}

/// Peak runs in one gap-free segment. A run climbs strictly from below
/// `intensity_low` to an apex at or above `intensity_max` and descends
/// strictly back below `intensity_low`.
pub(crate) fn peaks_in_segment(seg: &[CellPoint], params: &DetectParams) -> Vec<PeakCandidate> {
    let inten: Vec<f64> = seg.iter().map(|p| p.point.intensity).collect();
    let mut out = Vec::new();
    if seg.len() < 3 {
        return out;
    }
    for m in 1..seg.len() - 1 {
        if !(inten[m] > inten[m - 1] && inten[m] > inten[m + 1] && inten[m] >= params.intensity_max) {
            continue;
        }
        let mut l = m;
        while l > 0 && inten[l - 1] < inten[l] {
            l -= 1;
            if inten[l] < params.intensity_low {
                break;
            }
        }
        let mut r = m;
        while r + 1 < seg.len() && inten[r + 1] < inten[r] {
            r += 1;
            if inten[r] < params.intensity_low {
                break;
            }
        }
        if inten[l] < params.intensity_low && inten[r] < params.intensity_low && r - l + 1 >= params.min_run_len {
            out.push(PeakCandidate { points: seg[l..=r].to_vec(), apex_col: seg[m].col, ring: seg[m].ring });
        }
    }
    out
}

/// Confirms a candidate by checking that the apex column also peaks
/// vertically at the candidate's ring, using up to two rings on each side.
///
/// Near the top or bottom of the grid a side that falls off the grid is
/// skipped; at least one neighbouring ring must be checked. Returns the run
/// plus the vertical neighbours on success.
pub fn verify_peak_vertical(cloud: &OrganizedCloud, candidate: &PeakCandidate) -> Option<Vec<CellPoint>> {
    let rings = cloud.geometry().ring_count as isize;
    let apex = candidate.apex().point;
    let col = candidate.apex_col;
    let mut extra = Vec::new();
    for dir in [-1isize, 1] {
        let in_grid: Vec<usize> = (1..=2)
            .map(|k| candidate.ring as isize + dir * k)
            .filter(|r| (0..rings).contains(r))
            .map(|r| r as usize)
            .collect();
        if in_grid.is_empty() {
            continue;
        }
        let mut prev = apex.intensity;
        let mut taken = 0;
        for ring in in_grid {
            let Some(p) = cloud.get(ring, col) else { break };
            if p.intensity >= prev {
                return None;
            }
            prev = p.intensity;
            extra.push(CellPoint { ring, col, point: *p });
            taken += 1;
        }
        if taken == 0 {
            return None;
        }
    }
    if extra.is_empty() {
        return None;
    }
    let mut pts = candidate.points.clone();
    pts.extend(extra);
    Some(pts)
}

/// Cells flagged as containing glass, stored as a dense mask.
#[derive(Clone, Debug, PartialEq)]
pub struct GlassMask {
    geometry: GridGeometry,
    mask: Vec<bool>,
}

impl GlassMask {
    pub fn new(geometry: GridGeometry) -> Self {
        Self { geometry, mask: vec![false; geometry.cell_count()] }
    }

    pub fn insert(&mut self, ring: usize, col: usize) {
        let i = self.geometry.index(ring, col);
        self.mask[i] = true;
    }

    #[inline]
    pub fn contains(&self, ring: usize, col: usize) -> bool {
        self.mask[self.geometry.index(ring, col)]
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|b| *b)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cols = self.geometry.column_count;
        self.mask.iter().enumerate().filter(|(_, b)| **b).map(move |(i, _)| (i / cols, i % cols))
    }

    /// Columns flagged on one ring.
    pub fn columns(&self, ring: usize) -> impl Iterator<Item = usize> + '_ {
        let cols = self.geometry.column_count;
        self.mask[ring * cols..(ring + 1) * cols].iter().enumerate().filter(|(_, b)| **b).map(|(c, _)| c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlassEvidence {
    /// Nearer member of each diverging beam, always from the strongest cloud.
    pub glass_candidates: Vec<CellPoint>,
    /// Farther member of each diverging beam.
    pub remain_points: Vec<CellPoint>,
    pub degree_has_glass: GlassMask,
    pub normal_points: Vec<CellPoint>,
}

/// Splits beams into agreeing (normal) and diverging (glass-bearing) ones.
pub fn detect_dual_divergence(scan: &DualScan, params: &DetectParams) -> GlassEvidence {
    let geom = *scan.geometry();
    let mut ev = GlassEvidence {
        glass_candidates: Vec::new(),
        remain_points: Vec::new(),
        degree_has_glass: GlassMask::new(geom),
        normal_points: Vec::new(),
    };
    for ring in 0..geom.ring_count {
        for col in 0..geom.column_count {
            let cell = |point: &RawReturn| CellPoint { ring, col, point: *point };
            match (scan.strongest.get(ring, col), scan.last.get(ring, col)) {
                (Some(s), Some(l)) => {
                    let (rs, rl) = (s.range(), l.range());
                    if (rs - rl).abs() <= params.eps_range {
                        ev.normal_points.push(cell(s));
                    } else if rs < rl {
                        ev.glass_candidates.push(cell(s));
                        ev.remain_points.push(cell(l));
                        ev.degree_has_glass.insert(ring, col);
                    } else {
                        // A last echo nearer than the strongest one cannot come
                        // from glass; keep both as ordinary points.
                        log::debug!("cell ({ring}, {col}): last return nearer than strongest");
                        ev.normal_points.push(cell(s));
                        ev.normal_points.push(cell(l));
                    }
                }
                (Some(p), None) | (None, Some(p)) => ev.normal_points.push(cell(p)),
                (None, None) => {}
            }
        }
    }
    ev
}
