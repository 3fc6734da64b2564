// SPDX-License-Identifier: Apache-2.0

//! End-to-end processing of a scan sequence.
//!
//! Detection and classification run per scan, in parallel; registry updates
//! run in scan order between them. Outputs are identical for both execution
//! modes.

use std::collections::BTreeMap;
use std::ops::Range;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::Vector3;

use crate::classify::{classify_points, LabeledCloud};
use crate::cloud::DualScan;
use crate::config::Config;
use crate::detect::{detect_dual_divergence, find_intensity_peaks, verify_peak_vertical};
use crate::drpc::{read_drpc, write_drpc, TagColumns};
use crate::error::{Error, Result};
use crate::eval::{evaluate_classification, format_report, ClassMetrics, PlaneMetrics, TruthPane};
use crate::geometry::{find_boundary, fit_planes_ransac, fit_planes_with_model, GlassPane, PaneSource, PlaneModel, RansacParams};
use crate::par::Exec;
use crate::registry::{PaneRegistry, Pose};
use crate::sim::{glass_truth_points, pane_plane, simulate_scan_at, CompiledScene, GroundTruth, Scene};

/// Classification tolerance used in reports, meters.
pub const EVAL_TOL: f64 = 0.15;
/// Per-scan plane RMS threshold used in reports, meters.
pub const PLANE_RMS_THRESHOLD: f64 = 0.08;

/// One scan plus whatever is known about it.
#[derive(Clone, Debug)]
pub struct ScanInput {
    pub scan: DualScan,
    pub pose: Option<Pose>,
    pub truth: Option<GroundTruth>,
    pub truth_panes: Vec<TruthPane>,
}

/// Panes sharing more than this fraction of their cells are duplicates.
const MAX_OVERLAP: f64 = 0.5;

/// Panes found in a single scan.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub panes: Vec<GlassPane>,
    /// Apex points of the intensity peaks that passed vertical verification.
    pub peaks: Vec<Vector3<f64>>,
    pub glass_candidates: usize,
}

fn peak_ransac(params: &RansacParams, min_points: usize) -> RansacParams {
    RansacParams { min_inliers: min_points.max(3), ..*params }
}

/// Runs both detectors, fits planes and bounds them.
pub fn detect_panes(scan: &DualScan, cfg: &Config) -> Detection {
    let dp = cfg.detect_params();
    let rp = cfg.ransac_params();
    let bp = cfg.boundary_params();
    let evidence = detect_dual_divergence(scan, &dp);

    let mut panes = Vec::new();
    let points: Vec<Vector3<f64>> = evidence.glass_candidates.iter().map(|c| c.point.position()).collect();
    for fit in fit_planes_ransac(&points, &rp) {
        if let Some(p) = find_boundary(&fit, &evidence.glass_candidates, scan, &evidence, &bp, PaneSource::DualReturn) {
            panes.push(p);
        }
    }

    let mut peaks = Vec::new();
    for peak in find_intensity_peaks(&scan.strongest, &dp) {
        let Some(cells) = verify_peak_vertical(&scan.strongest, &peak) else { continue };
        peaks.push(peak.apex().point.position());
        let pts: Vec<Vector3<f64>> = cells.iter().map(|c| c.point.position()).collect();
        let params = peak_ransac(&rp, dp.min_run_len);
        if let Some(fit) = fit_planes_with_model(&pts, &params, PlaneModel::Vertical).into_iter().next() {
            if let Some(p) = find_boundary(&fit, &cells, scan, &evidence, &bp, PaneSource::IntensityPeak) {
                panes.push(p);
            }
        }
    }
    Detection {
        panes: filter_panes(panes),
        peaks,
        glass_candidates: evidence.glass_candidates.len(),
    }
}

/// Fraction of the smaller pane's cell footprint that the other covers.
fn overlap(a: &GlassPane, b: &GlassPane) -> f64 {
    let (wa, wb) = (a.width_rad(), b.width_rad());
    let off = (b.left_az - a.left_az).rem_euclid(TAU);
    let az = [off, off - TAU]
        .iter()
        .map(|&s| (wa.min(s + wb) - s.max(0.0)).max(0.0))
        .fold(0.0, f64::max);
    let rings_a = a.upper_ring - a.lower_ring + 1;
    let rings_b = b.upper_ring - b.lower_ring + 1;
    let lo = a.lower_ring.max(b.lower_ring);
    let hi = a.upper_ring.min(b.upper_ring);
    let rings = if hi >= lo { hi - lo + 1 } else { 0 };
    let az_frac = if wa.min(wb) > 0.0 { az / wa.min(wb) } else { 1.0 };
    az_frac.min(1.0) * rings as f64 / rings_a.min(rings_b) as f64
}

/// Resolves panes claiming the same beams: dual-return detections win over
/// intensity-peak ones, then the better supported pane wins.
fn filter_panes(mut panes: Vec<GlassPane>) -> Vec<GlassPane> {
    panes.sort_by(|a, b| {
        let rank = |p: &GlassPane| matches!(p.source, PaneSource::IntensityPeak) as u8;
        rank(a).cmp(&rank(b)).then(b.inlier_count.cmp(&a.inlier_count)).then(a.left_az.total_cmp(&b.left_az))
    });
    let mut kept: Vec<GlassPane> = Vec::new();
    for p in panes {
        if kept.iter().all(|k| overlap(k, &p) <= MAX_OVERLAP) {
            kept.push(p);
        }
    }
    kept.sort_by(|a, b| a.left_az.total_cmp(&b.left_az).then(a.lower_ring.cmp(&b.lower_ring)));
    kept
}

#[derive(Clone, Debug)]
pub struct ScanResult {
    pub labeled: LabeledCloud,
    /// Panes detected in this scan, before any registry lookup.
    pub detection: Detection,
    /// Whether classification used panes recalled from the registry.
    pub from_registry: bool,
    pub metrics: Option<ClassMetrics>,
    pub elapsed: Duration,
}

/// Counters reported alongside the metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunStats {
    pub scans: usize,
    pub panes_used: usize,
    pub verified_peaks: usize,
    pub scans_from_registry: usize,
}

/// Incremental processing of a scan sequence in batches. The registry and
/// metrics carry over from batch to batch, so splitting a sequence does not
/// change any result.
#[derive(Clone, Debug)]
pub struct Pipeline {
    cfg: Config,
    exec: Exec,
    registry: PaneRegistry,
    class_metrics: Option<ClassMetrics>,
    plane_metrics: Option<PlaneMetrics>,
    stats: RunStats,
}

impl Pipeline {
    pub fn new(cfg: &Config, exec: Exec) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            exec,
            registry: PaneRegistry::new(cfg.registry_params()),
            class_metrics: None,
            plane_metrics: None,
            stats: RunStats::default(),
        })
    }

    pub fn registry(&self) -> &PaneRegistry {
        &self.registry
    }

    pub fn class_metrics(&self) -> Option<&ClassMetrics> {
        self.class_metrics.as_ref()
    }

    pub fn plane_metrics(&self) -> Option<&PlaneMetrics> {
        self.plane_metrics.as_ref()
    }

    pub fn stats(&self) -> RunStats {
        self.stats
    }

    /// Processes the next scans of the sequence, which must follow the
    /// previous batch in scan order.
    pub fn process(&mut self, inputs: &[ScanInput]) -> Result<Vec<ScanResult>> {
        let cfg = &self.cfg;
        let eps = cfg.detect.eps_range_m;
        let phase1 = self.exec.map_slice(inputs, |input| {
            let start = Instant::now();
            input.scan.check_range_ordering(eps)?;
            let det = detect_panes(&input.scan, cfg);
            Ok::<_, Error>((det, start.elapsed()))
        });
        let phase1: Vec<(Detection, Duration)> = phase1.into_iter().collect::<Result<_>>()?;

        let mut plans: Vec<(Vec<GlassPane>, bool)> = Vec::with_capacity(inputs.len());
        for (input, (det, _)) in inputs.iter().zip(&phase1) {
            let Some(pose) = input.pose else {
                plans.push((det.panes.clone(), false));
                continue;
            };
            let rings = input.scan.ring_table();
            if det.panes.is_empty() {
                let recalled = self.registry.lookup_panes(&pose, &rings, input.scan.geometry());
                let any = !recalled.is_empty();
                plans.push((recalled, any));
            } else {
                for p in &det.panes {
                    if let Err(e) = self.registry.register_pane(p, &pose, &rings, Some(input.scan.scan_id)) {
                        log::warn!("scan {}: pane not registered: {e}", input.scan.scan_id);
                    }
                }
                plans.push((det.panes.clone(), false));
            }
        }

        let cp = cfg.classify_params();
        let jobs: Vec<usize> = (0..inputs.len()).collect();
        let phase3 = self.exec.map_slice(&jobs, |&i| {
            let start = Instant::now();
            let input = &inputs[i];
            let labeled = classify_points(&input.scan, &plans[i].0, &cp);
            let metrics = match &input.truth {
                Some(t) => Some(evaluate_classification(&labeled, t, EVAL_TOL)?),
                None => None,
            };
            Ok::<_, Error>((labeled, metrics, start.elapsed()))
        });

        let mut results = Vec::with_capacity(inputs.len());
        for (i, r) in phase3.into_iter().enumerate() {
            let (labeled, metrics, t3) = r?;
            let (detection, t1) = phase1[i].clone();
            let elapsed = t1 + t3;
            log::info!("scan {}: {:.1} ms, {} panes", inputs[i].scan.scan_id, elapsed.as_secs_f64() * 1e3, labeled.panes.len());
            if let Some(m) = &metrics {
                self.class_metrics.get_or_insert_with(|| ClassMetrics::new(EVAL_TOL)).merge(m);
            }
            if !inputs[i].truth_panes.is_empty() {
                self.plane_metrics
                    .get_or_insert_with(|| PlaneMetrics::new(PLANE_RMS_THRESHOLD))
                    .add_scan(&detection.panes, &inputs[i].truth_panes);
            }
            self.stats.scans += 1;
            self.stats.panes_used += labeled.panes.len();
            self.stats.verified_peaks += detection.peaks.len();
            self.stats.scans_from_registry += plans[i].1 as usize;
            results.push(ScanResult { labeled, detection, from_registry: plans[i].1, metrics, elapsed });
        }
        Ok(results)
    }

    pub fn report(&self) -> String {
        let st = self.stats;
        let extra = [
            ("scans", st.scans),
            ("panes_used", st.panes_used),
            ("verified_peaks", st.verified_peaks),
            ("scans_from_registry", st.scans_from_registry),
            ("registry_panes", self.registry.len()),
        ]
        .map(|(k, v)| (k.to_string(), v.to_string()));
        format_report(self.class_metrics.as_ref(), self.plane_metrics.as_ref(), &extra)
    }

    /// Writes `registry.txt` and `report.txt` into `dir`.
    pub fn write_summary(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.registry.write(&dir.join("registry.txt"))?;
        let report = dir.join("report.txt");
        std::fs::write(&report, self.report()).map_err(|e| Error::io(&report, e))
    }
}

/// Everything a whole-sequence run produces.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub results: Vec<ScanResult>,
    pub registry: PaneRegistry,
    pub class_metrics: Option<ClassMetrics>,
    pub plane_metrics: Option<PlaneMetrics>,
    pub stats: RunStats,
    report: String,
}

impl PipelineOutput {
    pub fn report(&self) -> &str {
        &self.report
    }
}

/// Processes a whole sequence in one batch. Scans with a pose feed the
/// registry, and those without detections recall panes from it.
pub fn run_pipeline(inputs: &[ScanInput], cfg: &Config, exec: Exec) -> Result<PipelineOutput> {
    let mut p = Pipeline::new(cfg, exec)?;
    let results = p.process(inputs)?;
    let report = p.report();
    Ok(PipelineOutput {
        results,
        registry: p.registry,
        class_metrics: p.class_metrics,
        plane_metrics: p.plane_metrics,
        stats: p.stats,
        report,
    })
}

/// Labeled DRPC file name of a scan.
pub fn labeled_file_name(scan_id: u64) -> String {
    format!("scan_{scan_id:06}.labeled.drpc")
}

/// Writes one labeled DRPC file per result into `dir`.
pub fn write_labeled(dir: &Path, results: &[ScanResult]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for r in results {
        let path = dir.join(labeled_file_name(r.labeled.scan.scan_id));
        write_drpc(&path, &r.labeled.scan, Some((&r.labeled.to_tags(), TagColumns::ALL)))?;
    }
    Ok(())
}

/// Writes labeled scans, `registry.txt` and `report.txt` into `dir`.
pub fn write_outputs(dir: &Path, out: &PipelineOutput) -> Result<()> {
    write_labeled(dir, &out.results)?;
    out.registry.write(&dir.join("registry.txt"))?;
    let report = dir.join("report.txt");
    std::fs::write(&report, &out.report).map_err(|e| Error::io(&report, e))
}

/// Simulates the given scans of a scene's trajectory with truth, truth panes
/// and poses attached.
pub fn simulate_inputs(scene: &Scene, cfg: &Config, seed: u64, scans: Range<usize>, exec: Exec) -> Result<Vec<ScanInput>> {
    let model = cfg.sensor_model();
    let compiled = CompiledScene::new(scene);
    let ids: Vec<usize> = scans.collect();
    // Parallelize over scans; each scan simulates its rings sequentially.
    let sims = exec.map_slice(&ids, |&k| {
        let pose = scene.sensor_pose(k);
        let (scan, truth) = simulate_scan_at(&compiled, &scene.noise, &pose, &model, seed, k as u64, Exec::Sequential)?;
        let truth_panes = (0..scene.panes.len())
            .map(|p| TruthPane { plane: pane_plane(scene, p, &pose), points: glass_truth_points(scene, p, &pose, &model) })
            .collect();
        Ok::<_, Error>(ScanInput { scan, pose: Some(pose), truth: Some(truth), truth_panes })
    });
    sims.into_iter().collect()
}

/// Reads scan files in scan-id order. Label and position annotations, when
/// present, become ground truth. With `poses`, every scan needs an entry.
pub fn load_inputs(files: &[PathBuf], poses: Option<&BTreeMap<u64, Pose>>) -> Result<Vec<ScanInput>> {
    let mut inputs = Vec::with_capacity(files.len());
    for path in files {
        let file = read_drpc(path)?;
        let truth = match &file.tags {
            Some(tags) if file.columns.label && file.columns.position => Some(GroundTruth::from_tags(&file.scan, tags)?),
            _ => None,
        };
        let pose = match poses {
            Some(map) => Some(*map.get(&file.scan.scan_id).ok_or_else(|| {
                Error::Input(format!("{}: no pose for scan {}", path.display(), file.scan.scan_id))
            })?),
            None => None,
        };
        inputs.push(ScanInput { scan: file.scan, pose, truth, truth_panes: Vec::new() });
    }
    inputs.sort_by_key(|i| i.scan.scan_id);
    if let Some(w) = inputs.windows(2).find(|w| w[0].scan.scan_id == w[1].scan.scan_id) {
        return Err(Error::Input(format!("scan {} appears twice", w[0].scan.scan_id)));
    }
    Ok(inputs)
}
