// SPDX-License-Identifier: Apache-2.0

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::scene::{NoiseSpec, Scene};
use super::trace::{select_returns, trace_beam, CompiledScene, Echo};
use super::SensorModel;
use crate::classify::Label;
use crate::cloud::{DualScan, GridGeometry, OrganizedCloud, RawReturn, ReturnChannel};
use crate::drpc::{CellTag, ScanTags};
use crate::error::{Error, Result};
use crate::geometry::Plane;
use crate::par::Exec;
use crate::registry::Pose;

/// Seconds between consecutive simulated scans.
pub const SCAN_PERIOD: f64 = 0.1;

/// What a reported point really is.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthPoint {
    pub label: Label,
    /// Sensor frame. For reflections, the real surface the light bounced off.
    pub position: Vector3<f64>,
    pub pane: Option<usize>,
}

/// Truth records for every reported point of a scan, per channel and cell.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub scan_id: u64,
    pub geometry: GridGeometry,
    pub strongest: Vec<Option<TruthPoint>>,
    pub last: Vec<Option<TruthPoint>>,
}

impl GroundTruth {
    pub fn channel(&self, channel: ReturnChannel) -> &[Option<TruthPoint>] {
        match channel {
            ReturnChannel::Strongest => &self.strongest,
            ReturnChannel::Last => &self.last,
        }
    }

    pub fn get(&self, channel: ReturnChannel, ring: usize, col: usize) -> Option<&TruthPoint> {
        self.channel(channel)[self.geometry.index(ring, col)].as_ref()
    }

    /// Number of reported points with the given true class, both channels.
    pub fn count(&self, label: Label) -> usize {
        self.strongest.iter().chain(&self.last).flatten().filter(|t| t.label == label).count()
    }

    pub fn to_tags(&self) -> ScanTags {
        let conv = |v: &Vec<Option<TruthPoint>>| {
            v.iter()
                .map(|t| t.map(|t| CellTag { label: Some(t.label), position: Some(t.position), pane: t.pane }))
                .collect()
        };
        ScanTags { strongest: conv(&self.strongest), last: conv(&self.last) }
    }

    /// Rebuilds truth from file annotations; every valid point needs a label
    /// and a position.
    pub fn from_tags(scan: &DualScan, tags: &ScanTags) -> Result<Self> {
        let g = *scan.geometry();
        let mut out = GroundTruth {
            scan_id: scan.scan_id,
            geometry: g,
            strongest: vec![None; g.cell_count()],
            last: vec![None; g.cell_count()],
        };
        for ch in [ReturnChannel::Strongest, ReturnChannel::Last] {
            let cloud = scan.channel(ch);
            let src = tags.channel(ch);
            let dst = match ch {
                ReturnChannel::Strongest => &mut out.strongest,
                ReturnChannel::Last => &mut out.last,
            };
            for (ring, col, _) in cloud.iter_valid() {
                let i = g.index(ring, col);
                let t = src[i]
                    .and_then(|t| Some(TruthPoint { label: t.label?, position: t.position?, pane: t.pane }))
                    .ok_or_else(|| Error::Input(format!("cell ({ring}, {col}) {ch:?}: missing truth label or position")))?;
                dst[i] = Some(t);
            }
        }
        Ok(out)
    }
}

/// Simulates scan `k` of the scene's trajectory.
pub fn simulate_scan(scene: &Scene, model: &SensorModel, seed: u64, k: usize) -> Result<(DualScan, GroundTruth)> {
    let compiled = CompiledScene::new(scene);
    simulate_scan_at(&compiled, &scene.noise, &scene.sensor_pose(k), model, seed, k as u64, Exec::default())
}

/// Simulates one revolution from `pose`. Each ring draws its noise from its
/// own substream of `(seed, scan_id)`, so results do not depend on `exec`.
pub fn simulate_scan_at(
    scene: &CompiledScene,
    noise: &NoiseSpec,
    pose: &Pose,
    model: &SensorModel,
    seed: u64,
    scan_id: u64,
    exec: Exec,
) -> Result<(DualScan, GroundTruth)> {
    let g = model.grid()?;
    let scan_seed = seed ^ scan_id.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let rows = exec.map_range(g.ring_count, |ring| simulate_ring(scene, noise, pose, model, &g, scan_seed, ring));

    let mut strongest = OrganizedCloud::empty(g);
    let mut last = OrganizedCloud::empty(g);
    let mut truth = GroundTruth {
        scan_id,
        geometry: g,
        strongest: vec![None; g.cell_count()],
        last: vec![None; g.cell_count()],
    };
    for (ring, row) in rows.into_iter().enumerate() {
        for (col, beam) in row.into_iter().enumerate() {
            let Some([(s, ts), (l, tl)]) = beam else { continue };
            let i = g.index(ring, col);
            strongest.set(ring, col, Some(s));
            last.set(ring, col, Some(l));
            truth.strongest[i] = Some(ts);
            truth.last[i] = Some(tl);
        }
    }
    let scan = DualScan::new(strongest, last, scan_id, scan_id as f64 * SCAN_PERIOD)?;
    Ok((scan, truth))
}

type Beam = Option<[(RawReturn, TruthPoint); 2]>;

fn simulate_ring(
    scene: &CompiledScene,
    noise: &NoiseSpec,
    pose: &Pose,
    model: &SensorModel,
    g: &GridGeometry,
    seed: u64,
    ring: usize,
) -> Vec<Beam> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ring as u64);
    let origin = pose.translation;
    let inv = pose.rotation.inverse();
    (0..g.column_count)
        .map(|col| {
            let dir_s = model.beam_direction(ring, col);
            let dir_w = pose.rotation * dir_s;
            let mut set = trace_beam(scene, model, &origin, &dir_w);
            if noise.edge_probability > 0.0 && rng.random::<f64>() < noise.edge_probability && set.len() == 1 {
                if let Some(e) = scene.edge_echo(model, &origin, &dir_w, &set.echoes[0]) {
                    set.echoes.push(e);
                }
            }
            let offsets: Vec<f64> = set
                .echoes
                .iter()
                .map(|_| if noise.range_sigma_m > 0.0 { noise.range_sigma_m * rng.sample::<f64, _>(StandardNormal) } else { 0.0 })
                .collect();
            let (s, l) = select_returns(&set);
            let report = |e: Echo, channel: ReturnChannel| {
                let k = set.echoes.iter().position(|x| *x == e).expect("selected echo comes from the set");
                let range = (e.range + offsets[k]).max(1e-3);
                let p = dir_s * range;
                let r = RawReturn {
                    x: p.x,
                    y: p.y,
                    z: p.z,
                    intensity: e.intensity.min(255.0),
                    ring: ring as u16,
                    azimuth: g.column_center(col),
                    channel,
                };
                let t = TruthPoint { label: e.label, position: inv * (e.truth - origin), pane: e.pane };
                (r, t)
            };
            match (s, l) {
                (Some(s), Some(l)) => {
                    let (mut sr, st) = report(s, ReturnChannel::Strongest);
                    let (lr, lt) = report(l, ReturnChannel::Last);
                    // Keep the ordering invariant when noise swaps two close echoes.
                    if sr.range() > lr.range() {
                        (sr.x, sr.y, sr.z) = (lr.x, lr.y, lr.z);
                    }
                    Some([(sr, st), (lr, lt)])
                }
                _ => None,
            }
        })
        .collect()
}

/// Plane of pane `pane` in the sensor frame of `pose`.
pub fn pane_plane(scene: &Scene, pane: usize, pose: &Pose) -> Plane {
    let p = &scene.panes[pane];
    let inv = pose.rotation.inverse();
    let n = inv * p.edge_u().cross(&p.edge_v());
    Plane::from_normal_point(n, inv * (p.corner() - pose.translation)).expect("validated pane")
}

fn pane_hits(scene: &Scene, pane: usize, pose: &Pose, model: &SensorModel) -> Vec<(usize, usize, Vector3<f64>)> {
    let p = &scene.panes[pane];
    let single = Scene { panes: vec![p.clone()], ..Scene::default() };
    let compiled = CompiledScene::new(&single);
    let model = SensorModel { glass_intensity_scale: 1.0, detect_threshold: 0.0, max_range: f64::INFINITY, cutoff: 89.9f64.to_radians(), ..*model };
    let mut out = Vec::new();
    for ring in 0..model.ring_count {
        let cols = (std::f64::consts::TAU / model.step_azimuth - 1e-9).ceil() as usize;
        for col in 0..cols {
            let dir_s = model.beam_direction(ring, col);
            let set = trace_beam(&compiled, &model, &pose.translation, &(pose.rotation * dir_s));
            if let Some(e) = set.echoes.iter().find(|e| e.label == Label::G) {
                out.push((ring, col, dir_s * e.range));
            }
        }
    }
    out
}

/// Every beam/pane intersection in the sensor frame, regardless of occlusion.
pub fn glass_truth_points(scene: &Scene, pane: usize, pose: &Pose, model: &SensorModel) -> Vec<Vector3<f64>> {
    pane_hits(scene, pane, pose, model).into_iter().map(|(_, _, p)| p).collect()
}

/// Grid span of the beams that meet a pane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PaneFootprint {
    /// Left edge of the first column hit, radians in `[0, 2π)`.
    pub left_az: f64,
    /// Right edge of the last column hit, unwrapped.
    pub right_az: f64,
    pub lower_ring: usize,
    pub upper_ring: usize,
}

pub fn pane_footprint(scene: &Scene, pane: usize, pose: &Pose, model: &SensorModel) -> Option<PaneFootprint> {
    let hits = pane_hits(scene, pane, pose, model);
    let g = model.grid().ok()?;
    let n = g.column_count;
    let mut used = vec![false; n];
    for (_, c, _) in &hits {
        used[*c] = true;
    }
    let cols: Vec<usize> = (0..n).filter(|&c| used[c]).collect();
    if cols.is_empty() {
        return None;
    }
    // Start after the widest empty stretch so a seam-crossing pane is contiguous.
    let (mut start, mut widest) = (0usize, 0usize);
    for i in 0..cols.len() {
        let next = cols[(i + 1) % cols.len()];
        let gap = (next as isize - cols[i] as isize - 1).rem_euclid(n as isize) as usize;
        if gap >= widest {
            widest = gap;
            start = (i + 1) % cols.len();
        }
    }
    let lo = cols[start];
    let span = n - widest;
    Some(PaneFootprint {
        left_az: lo as f64 * g.step_azimuth,
        right_az: (lo + span) as f64 * g.step_azimuth,
        lower_ring: hits.iter().map(|h| h.0).min()?,
        upper_ring: hits.iter().map(|h| h.0).max()?,
    })
}
