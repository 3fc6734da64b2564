// SPDX-License-Identifier: Apache-2.0

//! Lidar returns and the ring × azimuth organized grid.

use std::cmp::Ordering;
use std::f64::consts::TAU;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Default tolerance for "same range" between the two channels of a beam.
pub const DEFAULT_EPS_RANGE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReturnChannel {
    Strongest,
    Last,
}

/// One echo reported by the sensor, in the sensor frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawReturn {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Unitless, 0..=255.
    pub intensity: f64,
    pub ring: u16,
    /// Firing azimuth in radians, `[0, 2π)`.
    pub azimuth: f64,
    pub channel: ReturnChannel,
}

impl RawReturn {
    /// Builds a return from a position, deriving the azimuth from `atan2(y, x)`.
    pub fn from_position(p: Vector3<f64>, intensity: f64, ring: u16, channel: ReturnChannel) -> Self {
        Self {
            x: p.x,
            y: p.y,
            z: p.z,
            intensity,
            ring,
            azimuth: p.y.atan2(p.x).rem_euclid(TAU),
            channel,
        }
    }

    #[inline]
    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    #[inline]
    pub fn range(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Elevation angle above the sensor's xy plane, radians.
    pub fn elevation(&self) -> f64 {
        let r = self.range();
        if r > 0.0 {
            (self.z / r).clamp(-1.0, 1.0).asin()
        } else {
            0.0
        }
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.range() > 0.0
    }

    // Total order used to break intensity ties independently of input order.
    fn tie_order(&self, other: &Self) -> Ordering {
        self.intensity
            .total_cmp(&other.intensity)
            .then_with(|| other.x.total_cmp(&self.x))
            .then_with(|| other.y.total_cmp(&self.y))
            .then_with(|| other.z.total_cmp(&self.z))
    }
}

/// Shape of the organized grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridGeometry {
    pub ring_count: usize,
    pub column_count: usize,
    /// Radians per column.
    pub step_azimuth: f64,
}

impl Default for GridGeometry {
    /// 32 rings, 2251 columns (HDL-32E).
    fn default() -> Self {
        Self::new(32, TAU / 2251.0).expect("default grid is valid")
    }
}

impl GridGeometry {
    /// `column_count` is derived as `ceil(2π / step_azimuth)`.
    pub fn new(ring_count: usize, step_azimuth: f64) -> Result<Self> {
        if ring_count == 0 || !(step_azimuth > 0.0 && step_azimuth <= TAU) {
            return Err(Error::Malformed(format!(
                "grid needs at least one ring and a step in (0, 2π], got {ring_count} rings, step {step_azimuth}"
            )));
        }
        // Guard against 2π / (2π / n) landing a hair above n.
        let column_count = (TAU / step_azimuth - 1e-9).ceil() as usize;
        Ok(Self { ring_count, column_count, step_azimuth })
    }

    pub fn cell_count(&self) -> usize {
        self.ring_count * self.column_count
    }

    #[inline]
    pub fn index(&self, ring: usize, col: usize) -> usize {
        ring * self.column_count + col
    }

    /// Column of an azimuth (radians, any winding) by floor division.
    #[inline]
    pub fn column_of(&self, azimuth: f64) -> usize {
        let a = azimuth.rem_euclid(TAU);
        ((a / self.step_azimuth) as usize).min(self.column_count - 1)
    }

    /// Azimuth of the center of a column.
    #[inline]
    pub fn column_center(&self, col: usize) -> f64 {
        (col as f64 + 0.5) * self.step_azimuth
    }

    /// Column offset wrapped onto the ring.
    #[inline]
    pub fn wrap_col(&self, col: isize) -> usize {
        col.rem_euclid(self.column_count as isize) as usize
    }

    pub fn same_as(&self, other: &GridGeometry) -> bool {
        self.ring_count == other.ring_count
            && self.column_count == other.column_count
            && (self.step_azimuth - other.step_azimuth).abs() <= 1e-12
    }
}

/// Ring × column matrix of optional returns; absent cells are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrganizedCloud {
    geometry: GridGeometry,
    cells: Vec<Option<RawReturn>>,
}

impl OrganizedCloud {
    pub fn empty(geometry: GridGeometry) -> Self {
        Self { geometry, cells: vec![None; geometry.cell_count()] }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    #[inline]
    pub fn get(&self, ring: usize, col: usize) -> Option<&RawReturn> {
        self.cells[self.geometry.index(ring, col)].as_ref()
    }

    pub fn cells(&self) -> &[Option<RawReturn>] {
        &self.cells
    }

    pub fn row(&self, ring: usize) -> &[Option<RawReturn>] {
        let start = ring * self.geometry.column_count;
        &self.cells[start..start + self.geometry.column_count]
    }

    /// Overwrites a cell. The return's ring must match `ring`.
    pub fn set(&mut self, ring: usize, col: usize, value: Option<RawReturn>) {
        debug_assert!(value.is_none_or(|r| r.ring as usize == ring));
        let idx = self.geometry.index(ring, col);
        self.cells[idx] = value;
    }

    /// `(ring, col, return)` for every occupied cell, row-major.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, &RawReturn)> + '_ {
        let cols = self.geometry.column_count;
        self.cells
            .iter()
            .enumerate()
            .filter_map(move |(i, c)| c.as_ref().map(|r| (i / cols, i % cols, r)))
    }

    pub fn valid_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    fn insert_keep_stronger(&mut self, r: RawReturn) {
        let col = self.geometry.column_of(r.azimuth);
        let idx = self.geometry.index(r.ring as usize, col);
        match &self.cells[idx] {
            Some(existing) if existing.tie_order(&r) != Ordering::Less => {}
            _ => self.cells[idx] = Some(r),
        }
    }
}

/// Bins unordered returns into the grid at `(ring, floor(azimuth / step))`.
/// Collisions keep the higher-intensity return.
pub fn organize_scan(returns: &[RawReturn], geometry: GridGeometry) -> Result<OrganizedCloud> {
    let mut cloud = OrganizedCloud::empty(geometry);
    for (i, r) in returns.iter().enumerate() {
        check_return(i, r, &geometry)?;
        cloud.insert_keep_stronger(*r);
    }
    Ok(cloud)
}

fn check_return(i: usize, r: &RawReturn, geometry: &GridGeometry) -> Result<()> {
    if r.ring as usize >= geometry.ring_count {
        return Err(Error::Malformed(format!(
            "return {i}: ring {} outside grid of {} rings",
            r.ring, geometry.ring_count
        )));
    }
    if !r.azimuth.is_finite() {
        return Err(Error::Malformed(format!("return {i}: non-finite azimuth")));
    }
    Ok(())
}

/// Both channels of one sensor revolution, cell-aligned.
#[derive(Clone, Debug, PartialEq)]
pub struct DualScan {
    pub strongest: OrganizedCloud,
    pub last: OrganizedCloud,
    pub scan_id: u64,
    /// Seconds.
    pub timestamp: f64,
}

impl DualScan {
    pub fn new(strongest: OrganizedCloud, last: OrganizedCloud, scan_id: u64, timestamp: f64) -> Result<Self> {
        if !strongest.geometry().same_as(last.geometry()) {
            return Err(Error::Malformed(format!(
                "strongest grid {:?} differs from last grid {:?}",
                strongest.geometry(),
                last.geometry()
            )));
        }
        Ok(Self { strongest, last, scan_id, timestamp })
    }

    pub fn empty(geometry: GridGeometry, scan_id: u64, timestamp: f64) -> Self {
        Self {
            strongest: OrganizedCloud::empty(geometry),
            last: OrganizedCloud::empty(geometry),
            scan_id,
            timestamp,
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        self.strongest.geometry()
    }

    pub fn channel(&self, channel: ReturnChannel) -> &OrganizedCloud {
        match channel {
            ReturnChannel::Strongest => &self.strongest,
            ReturnChannel::Last => &self.last,
        }
    }

    /// Checks that the last return is never nearer than the strongest one by
    /// more than `eps_range`. Returns the first offending cell.
    pub fn check_range_ordering(&self, eps_range: f64) -> Result<()> {
        for (ring, col, s) in self.strongest.iter_valid() {
            if let Some(l) = self.last.get(ring, col) {
                if l.range() < s.range() - eps_range {
                    return Err(Error::Invariant(format!(
                        "cell ({ring}, {col}): last return at {:.3} m is nearer than strongest at {:.3} m",
                        l.range(),
                        s.range()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Mean elevation of each ring over both channels; `None` for empty rings.
    pub fn ring_table(&self) -> RingTable {
        let n = self.geometry().ring_count;
        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for cloud in [&self.strongest, &self.last] {
            for (ring, _, r) in cloud.iter_valid() {
                sum[ring] += r.elevation();
                count[ring] += 1;
            }
        }
        RingTable::new(sum.iter().zip(&count).map(|(s, &c)| (c > 0).then(|| s / c as f64)).collect())
    }
}

/// Splits an interleaved dual-return stream by channel and organizes both.
pub fn split_dual_returns(
    stream: &[RawReturn],
    geometry: GridGeometry,
    scan_id: u64,
    timestamp: f64,
) -> Result<DualScan> {
    let mut scan = DualScan::empty(geometry, scan_id, timestamp);
    for (i, r) in stream.iter().enumerate() {
        check_return(i, r, &geometry)?;
        match r.channel {
            ReturnChannel::Strongest => scan.strongest.insert_keep_stronger(*r),
            ReturnChannel::Last => scan.last.insert_keep_stronger(*r),
        }
    }
    Ok(scan)
}

/// Per-ring elevation angles, used to map an arbitrary direction back to a ring.
#[derive(Clone, Debug, PartialEq)]
pub struct RingTable {
    elevations: Vec<Option<f64>>,
    half_spacing: f64,
}

impl RingTable {
    /// Rings without an elevation are interpolated (or extrapolated) from
    /// their known neighbours when at least two rings are known.
    pub fn new(mut elevations: Vec<Option<f64>>) -> Self {
        let known: Vec<(usize, f64)> = elevations.iter().enumerate().filter_map(|(i, e)| e.map(|e| (i, e))).collect();
        let mut steps: Vec<f64> = known
            .windows(2)
            .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0) as f64).abs())
            .filter(|g| *g > 1e-9)
            .collect();
        steps.sort_by(f64::total_cmp);
        let spacing = steps.get(steps.len() / 2).copied().unwrap_or(0.02);
        if known.len() >= 2 {
            for (i, e) in elevations.iter_mut().enumerate() {
                if e.is_some() {
                    continue;
                }
                let before = known.iter().rev().find(|(k, _)| *k < i);
                let after = known.iter().find(|(k, _)| *k > i);
                let (a, b) = match (before, after) {
                    (Some(a), Some(b)) => (*a, *b),
                    (Some(_), None) => (known[known.len() - 2], known[known.len() - 1]),
                    (None, Some(_)) => (known[0], known[1]),
                    (None, None) => unreachable!("at least two rings are known"),
                };
                let slope = (b.1 - a.1) / (b.0 as f64 - a.0 as f64);
                *e = Some(a.1 + slope * (i as f64 - a.0 as f64));
            }
        }
        Self { elevations, half_spacing: 0.5 * spacing }
    }

    /// Nearest ring regardless of distance.
    pub fn nearest_ring(&self, elevation: f64) -> Option<usize> {
        self.elevations
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.map(|e| (i, (e - elevation).abs())))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    pub fn elevation(&self, ring: usize) -> Option<f64> {
        self.elevations.get(ring).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.elevations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elevations.is_empty()
    }

    /// Nearest ring whose elevation is within half a ring spacing.
    pub fn ring_of(&self, elevation: f64) -> Option<usize> {
        let (ring, diff) = self
            .elevations
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.map(|e| (i, (e - elevation).abs())))
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        (diff <= self.half_spacing).then_some(ring)
    }
}
