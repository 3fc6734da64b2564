// SPDX-License-Identifier: Apache-2.0

//! Per-point classification against known glass panes.
//!
//! Points on a pane are glass (G); points in front of every pane, or outside
//! all pane bounds, are inside points (I). Points behind a pane are either
//! real objects seen through the glass (O) or phantom reflections (R) and are
//! resolved in three passes:
//!
//! 1. Mirror the inside points through the pane. A behind point farther
//!    than every mirrored inside point in its direction is O.
//! 2. Mirror each remaining behind point back inside and look along that
//!    direction. If the sensor saw something farther there, the mirrored
//!    position is free space, so the point is real and O.
//! 3. A remaining behind point with a farther O point in its own direction
//!    is R; its true position is its mirror image.
//!
//! Whatever is left is unknown (U). "In its direction" means within
//! `trace_window` cells in ring and column.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;

use crate::cloud::{DualScan, GridGeometry, RawReturn, ReturnChannel, RingTable};
use crate::drpc::{CellTag, ScanTags};
use crate::error::Error;
use crate::geometry::GlassPane;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    /// Inside obstacle.
    I,
    /// Glass surface.
    G,
    /// Reflection.
    R,
    /// Outside obstacle behind glass.
    O,
    /// Unresolved.
    U,
}

impl Label {
    pub const ALL: [Label; 5] = [Label::I, Label::G, Label::R, Label::O, Label::U];

    pub fn as_char(self) -> char {
        match self {
            Label::I => 'I',
            Label::G => 'G',
            Label::R => 'R',
            Label::O => 'O',
            Label::U => 'U',
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "I" => Ok(Label::I),
            "G" => Ok(Label::G),
            "R" => Ok(Label::R),
            "O" => Ok(Label::O),
            "U" => Ok(Label::U),
            other => Err(Error::Input(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassifyParams {
    /// Points this close to a pane plane are glass, meters.
    pub glass_dist: f64,
    /// Half-width of the direction cone, cells.
    pub trace_window: usize,
    /// Panes with fewer behind points are ignored.
    pub min_outside_points: usize,
    /// "Farther" in the tracing tests means farther by at least this, meters.
    pub trace_margin: f64,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        Self { glass_dist: 0.05, trace_window: 1, min_outside_points: 50, trace_margin: 0.1 }
    }
}

/// Which pass settled a label.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Prepass,
    MirroredInside,
    TraceBack,
    /// Farther return of a diverging beam, outside by elimination.
    DualReturn,
    Reflection,
    Unresolved,
    /// Read back from a file, which does not record the deciding pass.
    Restored,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointLabel {
    pub label: Label,
    /// Present iff the label is R.
    pub mirrored: Option<Vector3<f64>>,
    /// Index into [`LabeledCloud::panes`] for G, R, O and U points.
    pub pane: Option<usize>,
    pub stage: Stage,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledCloud {
    pub scan: DualScan,
    pub strongest: Vec<Option<PointLabel>>,
    pub last: Vec<Option<PointLabel>>,
    /// Panes used for classification, in canonical order.
    pub panes: Vec<GlassPane>,
}

impl LabeledCloud {
    pub fn channel(&self, channel: ReturnChannel) -> &[Option<PointLabel>] {
        match channel {
            ReturnChannel::Strongest => &self.strongest,
            ReturnChannel::Last => &self.last,
        }
    }

    pub fn get(&self, channel: ReturnChannel, ring: usize, col: usize) -> Option<&PointLabel> {
        self.channel(channel)[self.scan.geometry().index(ring, col)].as_ref()
    }

    pub fn count(&self, label: Label) -> usize {
        self.strongest.iter().chain(&self.last).flatten().filter(|p| p.label == label).count()
    }

    /// Position used for mapping and evaluation: mirrored for R, raw otherwise.
    pub fn reported_position(&self, channel: ReturnChannel, ring: usize, col: usize) -> Option<Vector3<f64>> {
        let raw = self.scan.channel(channel).get(ring, col)?;
        let l = self.get(channel, ring, col)?;
        Some(l.mirrored.unwrap_or_else(|| raw.position()))
    }

    pub fn to_tags(&self) -> ScanTags {
        let conv = |v: &Vec<Option<PointLabel>>| {
            v.iter()
                .map(|p| p.map(|p| CellTag { label: Some(p.label), position: p.mirrored, pane: p.pane }))
                .collect()
        };
        ScanTags { strongest: conv(&self.strongest), last: conv(&self.last) }
    }

    /// Rebuilds a classified scan from file annotations. Every valid point
    /// needs a label, and R points their mirrored position. Panes are not
    /// stored in scan files, so pane references are dropped.
    pub fn from_tags(scan: DualScan, tags: &ScanTags) -> Result<Self, Error> {
        let g = *scan.geometry();
        let mut labels = [vec![None; g.cell_count()], vec![None; g.cell_count()]];
        for ch in CHANNELS {
            let src = tags.channel(ch);
            for (ring, col, _) in scan.channel(ch).iter_valid() {
                let i = g.index(ring, col);
                let missing = || Error::Input(format!("cell ({ring}, {col}) {ch:?}: missing label"));
                let tag = src[i].ok_or_else(missing)?;
                let label = tag.label.ok_or_else(missing)?;
                let mirrored = match label {
                    Label::R => Some(tag.position.ok_or_else(|| {
                        Error::Input(format!("cell ({ring}, {col}) {ch:?}: reflection without mirrored position"))
                    })?),
                    _ => None,
                };
                labels[ch_index(ch)][i] = Some(PointLabel { label, mirrored, pane: None, stage: Stage::Restored });
            }
        }
        let [strongest, last] = labels;
        Ok(Self { scan, strongest, last, panes: Vec::new() })
    }
}

/// A point of the cloud handed to the map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapPoint {
    pub position: Vector3<f64>,
    pub intensity: f64,
    pub label: Label,
    pub ring: usize,
    pub col: usize,
}

/// Map points of a classified scan: I, G and O as measured, R at their
/// mirrored positions, U dropped. A beam whose two channels hold the same
/// echo contributes one point.
pub fn assemble_output(labeled: &LabeledCloud) -> Vec<MapPoint> {
    let g = *labeled.scan.geometry();
    let mut out = Vec::new();
    for ring in 0..g.ring_count {
        for col in 0..g.column_count {
            let s = labeled.scan.strongest.get(ring, col);
            let l = labeled.scan.last.get(ring, col);
            let same = matches!((s, l), (Some(a), Some(b)) if a.position() == b.position());
            for (ch, raw) in [(ReturnChannel::Strongest, s), (ReturnChannel::Last, l)] {
                if same && ch == ReturnChannel::Last {
                    continue;
                }
                let (Some(raw), Some(pl)) = (raw, labeled.get(ch, ring, col)) else { continue };
                if pl.label == Label::U {
                    continue;
                }
                out.push(MapPoint {
                    position: pl.mirrored.unwrap_or_else(|| raw.position()),
                    intensity: raw.intensity,
                    label: pl.label,
                    ring,
                    col,
                });
            }
        }
    }
    out
}

/// Panes in a canonical order so results do not depend on input order.
fn canonical(panes: &[GlassPane]) -> Vec<GlassPane> {
    let mut v = panes.to_vec();
    v.sort_by(|a, b| {
        let (ca, cb) = (a.plane.coefficients(), b.plane.coefficients());
        ca.iter()
            .zip(&cb)
            .map(|(x, y)| x.total_cmp(y))
            .chain([a.left_az.total_cmp(&b.left_az), a.lower_ring.cmp(&b.lower_ring)])
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    v
}

/// Binary-searchable ring elevations (ascending), for direction lookups.
struct RingLookup {
    elevations: Vec<(f64, usize)>,
    half_spacing: f64,
}

impl RingLookup {
    fn new(table: &RingTable) -> Self {
        let mut elevations: Vec<(f64, usize)> = (0..table.len()).filter_map(|r| table.elevation(r).map(|e| (e, r))).collect();
        elevations.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut gaps: Vec<f64> = elevations.windows(2).map(|w| w[1].0 - w[0].0).filter(|g| *g > 1e-9).collect();
        gaps.sort_by(f64::total_cmp);
        let half_spacing = 0.5 * gaps.get(gaps.len() / 2).copied().unwrap_or(0.02);
        Self { elevations, half_spacing }
    }

    fn ring_of(&self, elevation: f64) -> Option<usize> {
        let e = &self.elevations;
        let i = e.partition_point(|(x, _)| *x < elevation);
        [i.checked_sub(1), (i < e.len()).then_some(i)]
            .into_iter()
            .flatten()
            .map(|k| e[k])
            .min_by(|a, b| (a.0 - elevation).abs().total_cmp(&(b.0 - elevation).abs()))
            .filter(|(x, _)| (x - elevation).abs() <= self.half_spacing)
            .map(|(_, r)| r)
    }

    fn cell_of(&self, g: &GridGeometry, p: &Vector3<f64>) -> Option<(usize, usize)> {
        let r = p.norm();
        if r <= 0.0 {
            return None;
        }
        let ring = self.ring_of((p.z / r).clamp(-1.0, 1.0).asin())?;
        Some((ring, g.column_of(p.y.atan2(p.x))))
    }
}

/// Per-cell maximum range, `-inf` where empty.
struct DepthGrid {
    geometry: GridGeometry,
    depth: Vec<f64>,
}

impl DepthGrid {
    fn new(geometry: GridGeometry) -> Self {
        Self { geometry, depth: vec![f64::NEG_INFINITY; geometry.cell_count()] }
    }

    fn add(&mut self, ring: usize, col: usize, range: f64) {
        let i = self.geometry.index(ring, col);
        if range > self.depth[i] {
            self.depth[i] = range;
        }
    }

    /// Farthest range in the cone around a cell.
    fn cone_max(&self, ring: usize, col: usize, w: usize) -> f64 {
        let g = &self.geometry;
        let r0 = ring.saturating_sub(w);
        let r1 = (ring + w).min(g.ring_count - 1);
        let mut best = f64::NEG_INFINITY;
        for r in r0..=r1 {
            for dc in -(w as isize)..=(w as isize) {
                let c = g.wrap_col(col as isize + dc);
                best = best.max(self.depth[g.index(r, c)]);
            }
        }
        best
    }
}

#[derive(Clone, Copy)]
struct Behind {
    channel: ReturnChannel,
    ring: usize,
    col: usize,
    pane: usize,
}

/// Nearest pane crossed by the beam of a point and the point's signed
/// distance to it.
fn nearest_pane(panes: &[GlassPane], active: &[bool], g: &GridGeometry, ring: usize, col: usize, p: &RawReturn) -> Option<(usize, f64)> {
    let pos = p.position();
    let range = pos.norm();
    if range <= 0.0 {
        return None;
    }
    let dir = pos / range;
    let az = g.column_center(col);
    let mut best: Option<(usize, f64, f64)> = None;
    for (k, pane) in panes.iter().enumerate() {
        if !active[k] || !pane.covers(ring, az) {
            continue;
        }
        let Some(t) = pane.plane.ray_from_origin(&dir) else { continue };
        if best.is_none_or(|(_, bt, _)| t < bt) {
            best = Some((k, t, pane.plane.signed_distance(&pos)));
        }
    }
    best.map(|(k, _, s)| (k, s))
}

const CHANNELS: [ReturnChannel; 2] = [ReturnChannel::Strongest, ReturnChannel::Last];

fn ch_index(ch: ReturnChannel) -> usize {
    match ch {
        ReturnChannel::Strongest => 0,
        ReturnChannel::Last => 1,
    }
}

/// Whether a behind point counts as O under the mirrored-inside test: the
/// cone holds at least one mirrored inside point and the point lies farther
/// than all of them by the margin.
pub fn beyond_mirrored_inside(range: f64, cone_max_mirrored: f64, margin: f64) -> bool {
    cone_max_mirrored.is_finite() && range > cone_max_mirrored + margin
}

/// Classifies every valid point of a scan. With no panes every point is I.
///
/// Points near a pane are G and points on the sensor side are I. A point
/// behind a pane becomes O when it lies beyond every mirrored inside point
/// of its cone, when its mirrored trace-back hits something farther, or when
/// it is the farther return of a beam whose strongest return is also behind
/// the pane. Of what remains, points with a farther O in their cone are R
/// and the rest are U.
pub fn classify_points(scan: &DualScan, panes: &[GlassPane], params: &ClassifyParams) -> LabeledCloud {
    let g = *scan.geometry();
    let panes = canonical(panes);
    let mut active = vec![true; panes.len()];

    let label = |label, pane, stage| Some(PointLabel { label, mirrored: None, pane, stage });
    let mut labels: [Vec<Option<PointLabel>>; 2] = [vec![None; g.cell_count()], vec![None; g.cell_count()]];
    let mut behind: Vec<Behind>;

    // Geometric pre-pass, repeated until every surviving pane has enough
    // points behind it.
    loop {
        behind = Vec::new();
        let mut per_pane = vec![0usize; panes.len()];
        for ch in CHANNELS {
            let out = &mut labels[ch_index(ch)];
            for (ring, col, p) in scan.channel(ch).iter_valid() {
                let i = g.index(ring, col);
                out[i] = match nearest_pane(&panes, &active, &g, ring, col, p) {
                    None => label(Label::I, None, Stage::Prepass),
                    Some((k, s)) if s.abs() <= params.glass_dist => label(Label::G, Some(k), Stage::Prepass),
                    Some((_, s)) if s > 0.0 => label(Label::I, None, Stage::Prepass),
                    Some((k, _)) => {
                        behind.push(Behind { channel: ch, ring, col, pane: k });
                        per_pane[k] += 1;
                        None
                    }
                };
            }
        }
        let mut dropped = false;
        for k in 0..panes.len() {
            if active[k] && per_pane[k] < params.min_outside_points {
                active[k] = false;
                dropped = true;
            }
        }
        if !dropped {
            break;
        }
    }

    let w = params.trace_window;
    let margin = params.trace_margin;
    let rings = RingLookup::new(&scan.ring_table());
    let point = |b: &Behind| scan.channel(b.channel).get(b.ring, b.col).expect("behind points are valid").position();

    // Step 1: farther than every mirrored inside point.
    let mut mirrored_inside: Vec<Option<DepthGrid>> = (0..panes.len()).map(|_| None).collect();
    for b in &behind {
        if mirrored_inside[b.pane].is_none() {
            let plane = &panes[b.pane].plane;
            let mut grid = DepthGrid::new(g);
            for ch in CHANNELS {
                for (ring, col, p) in scan.channel(ch).iter_valid() {
                    let is_inside = labels[ch_index(ch)][g.index(ring, col)].is_some_and(|l| l.label == Label::I);
                    let pos = p.position();
                    if !is_inside || plane.signed_distance(&pos) <= 0.0 {
                        continue;
                    }
                    let m = plane.reflect(&pos);
                    if let Some((r, c)) = rings.cell_of(&g, &m) {
                        grid.add(r, c, m.norm());
                    }
                }
            }
            mirrored_inside[b.pane] = Some(grid);
        }
    }
    let mut strongest_behind: Vec<Option<usize>> = vec![None; g.cell_count()];
    for b in behind.iter().filter(|b| b.channel == ReturnChannel::Strongest) {
        strongest_behind[g.index(b.ring, b.col)] = Some(b.pane);
    }
    let mut pending = Vec::new();
    for b in behind {
        let q = point(&b);
        let grid = mirrored_inside[b.pane].as_ref().expect("built above");
        let cone = grid.cone_max(b.ring, b.col, w);
        if beyond_mirrored_inside(q.norm(), cone, margin) {
            labels[ch_index(b.channel)][g.index(b.ring, b.col)] = label(Label::O, Some(b.pane), Stage::MirroredInside);
        } else {
            pending.push((b, !cone.is_finite()));
        }
    }

    // Step 2: trace the mirrored position against inside and outside points.
    let mut seen = DepthGrid::new(g);
    for ch in CHANNELS {
        for (ring, col, p) in scan.channel(ch).iter_valid() {
            if labels[ch_index(ch)][g.index(ring, col)].is_some_and(|l| matches!(l.label, Label::I | Label::O)) {
                seen.add(ring, col, p.range());
            }
        }
    }
    let mut still = Vec::new();
    let mut step2_outside = Vec::new();
    for (b, unexplained) in pending {
        let q = point(&b);
        let m = panes[b.pane].plane.reflect(&q);
        let farther = rings
            .cell_of(&g, &m)
            .is_some_and(|(r, c)| seen.cone_max(r, c, w) > m.norm() + margin);
        if farther {
            step2_outside.push((b, Stage::TraceBack));
        } else if b.channel == ReturnChannel::Last
            && (unexplained || strongest_behind[g.index(b.ring, b.col)] == Some(b.pane))
            && scan.strongest.get(b.ring, b.col).is_some_and(|s| q.norm() > s.range() + margin)
        {
            // The last of two differing returns is outside or a reflection.
            // It is outside when the strongest return is the reflection, or
            // when no mirrored inside point could explain it.
            step2_outside.push((b, Stage::DualReturn));
        } else {
            still.push(b);
        }
    }
    for (b, stage) in &step2_outside {
        labels[ch_index(b.channel)][g.index(b.ring, b.col)] = label(Label::O, Some(b.pane), *stage);
    }

    // Step 3: a farther outside point along the same direction makes a reflection.
    let mut outside = DepthGrid::new(g);
    for ch in CHANNELS {
        for (ring, col, p) in scan.channel(ch).iter_valid() {
            if labels[ch_index(ch)][g.index(ring, col)].is_some_and(|l| l.label == Label::O) {
                outside.add(ring, col, p.range());
            }
        }
    }
    for b in still {
        let q = point(&b);
        let i = g.index(b.ring, b.col);
        labels[ch_index(b.channel)][i] = if outside.cone_max(b.ring, b.col, w) > q.norm() + margin {
            Some(PointLabel {
                label: Label::R,
                mirrored: Some(panes[b.pane].plane.reflect(&q)),
                pane: Some(b.pane),
                stage: Stage::Reflection,
            })
        } else {
            label(Label::U, Some(b.pane), Stage::Unresolved)
        };
    }

    let [strongest, last] = labels;
    let used: Vec<GlassPane> = panes.iter().zip(&active).filter(|(_, a)| **a).map(|(p, _)| *p).collect();
    // Re-index pane references to the surviving panes.
    let remap: Vec<Option<usize>> = {
        let mut next = 0;
        active
            .iter()
            .map(|a| {
                a.then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    };
    let fix = |v: Vec<Option<PointLabel>>| -> Vec<Option<PointLabel>> {
        v.into_iter()
            .map(|p| {
                p.map(|mut p| {
                    p.pane = p.pane.and_then(|k| remap[k]);
                    p
                })
            })
            .collect()
    };
    LabeledCloud { scan: scan.clone(), strongest: fix(strongest), last: fix(last), panes: used }
}

/// Re-derives the mirrored-inside test for every point labeled by it.
pub fn recheck_mirrored_inside(labeled: &LabeledCloud, params: &ClassifyParams) -> bool {
    let scan = &labeled.scan;
    let g = *scan.geometry();
    let rings = RingLookup::new(&scan.ring_table());
    labeled.panes.iter().enumerate().all(|(k, pane)| {
        let mut grid = DepthGrid::new(g);
        for ch in CHANNELS {
            for (ring, col, p) in scan.channel(ch).iter_valid() {
                let pos = p.position();
                if labeled.get(ch, ring, col).is_some_and(|l| l.label == Label::I) && pane.plane.signed_distance(&pos) > 0.0 {
                    let m = pane.plane.reflect(&pos);
                    if let Some((r, c)) = rings.cell_of(&g, &m) {
                        grid.add(r, c, m.norm());
                    }
                }
            }
        }
        CHANNELS.iter().all(|&ch| {
            scan.channel(ch).iter_valid().all(|(ring, col, p)| {
                let Some(l) = labeled.get(ch, ring, col) else { return false };
                if l.stage != Stage::MirroredInside || l.pane != Some(k) {
                    return true;
                }
                beyond_mirrored_inside(p.range(), grid.cone_max(ring, col, params.trace_window), params.trace_margin)
            })
        })
    })
}
