// SPDX-License-Identifier: Apache-2.0

//! Pipeline configuration, loaded from a TOML file.
//!
//! Every section and key is optional; omitted values take the defaults below.
//! Unknown keys are rejected so that typos surface as configuration errors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::ClassifyParams;
use crate::cloud::GridGeometry;
use crate::detect::DetectParams;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryParams, RansacParams};
use crate::registry::RegistryParams;
use crate::sim::SensorModel;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub detect: DetectSection,
    pub geometry: GeometrySection,
    pub classify: ClassifySection,
    pub sim: SimSection,
    pub registry: RegistrySection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectSection {
    pub eps_range_m: f64,
    pub gap_threshold_m: f64,
    pub intensity_low: f64,
    pub intensity_max: f64,
    pub min_run_len: usize,
}

impl Default for DetectSection {
    fn default() -> Self {
        let d = DetectParams::default();
        Self {
            eps_range_m: d.eps_range,
            gap_threshold_m: d.gap_threshold,
            intensity_low: d.intensity_low,
            intensity_max: d.intensity_max,
            min_run_len: d.min_run_len,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub ransac_inlier_dist_m: f64,
    pub min_inliers: usize,
    pub loop_threshold: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub frame_search_dist_m: f64,
    pub frame_gap_cols: usize,
}

impl Default for GeometrySection {
    fn default() -> Self {
        let r = RansacParams::default();
        let b = BoundaryParams::default();
        Self {
            ransac_inlier_dist_m: r.inlier_dist,
            min_inliers: r.min_inliers,
            loop_threshold: r.loop_threshold,
            max_iters: r.max_iters,
            seed: r.seed,
            frame_search_dist_m: b.frame_search_dist,
            frame_gap_cols: b.frame_gap,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySection {
    pub glass_dist_m: f64,
    pub trace_window_cells: usize,
    pub min_outside_points: usize,
    pub trace_margin_m: f64,
}

impl Default for ClassifySection {
    fn default() -> Self {
        let c = ClassifyParams::default();
        Self {
            glass_dist_m: c.glass_dist,
            trace_window_cells: c.trace_window,
            min_outside_points: c.min_outside_points,
            trace_margin_m: c.trace_margin,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub ring_count: usize,
    pub step_azimuth_rad: f64,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub glass_intensity_scale: f64,
    pub diffuse_intensity_scale: f64,
    pub cos_exponent: f64,
    pub cutoff_deg: f64,
    pub detect_threshold: f64,
    pub max_range_m: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let s = SensorModel::default();
        Self {
            ring_count: s.ring_count,
            step_azimuth_rad: s.step_azimuth,
            elevation_min_deg: s.elevation_min.to_degrees(),
            elevation_max_deg: s.elevation_max.to_degrees(),
            glass_intensity_scale: s.glass_intensity_scale,
            diffuse_intensity_scale: s.diffuse_intensity_scale,
            cos_exponent: s.cos_exponent,
            cutoff_deg: s.cutoff.to_degrees(),
            detect_threshold: s.detect_threshold,
            max_range_m: s.max_range,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrySection {
    pub merge_angle_deg: f64,
    pub merge_dist_m: f64,
    pub lookup_range_m: f64,
}

impl Default for RegistrySection {
    fn default() -> Self {
        let r = RegistryParams::default();
        Self {
            merge_angle_deg: r.merge_angle.to_degrees(),
            merge_dist_m: r.merge_dist,
            lookup_range_m: r.lookup_range,
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        }
        fn nonzero(name: &str, v: usize) -> Result<()> {
            if v > 0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be at least 1")))
            }
        }
        let d = &self.detect;
        positive("detect.eps_range_m", d.eps_range_m)?;
        positive("detect.gap_threshold_m", d.gap_threshold_m)?;
        positive("detect.intensity_max", d.intensity_max)?;
        nonzero("detect.min_run_len", d.min_run_len)?;
        if !(d.intensity_low >= 0.0 && d.intensity_low < d.intensity_max) {
            return Err(Error::Config("detect.intensity_low must lie in [0, intensity_max)".into()));
        }
        let g = &self.geometry;
        positive("geometry.ransac_inlier_dist_m", g.ransac_inlier_dist_m)?;
        positive("geometry.frame_search_dist_m", g.frame_search_dist_m)?;
        nonzero("geometry.min_inliers", g.min_inliers)?;
        nonzero("geometry.max_iters", g.max_iters)?;
        let c = &self.classify;
        positive("classify.glass_dist_m", c.glass_dist_m)?;
        if !(c.trace_margin_m.is_finite() && c.trace_margin_m >= 0.0) {
            return Err(Error::Config("classify.trace_margin_m must be non-negative".into()));
        }
        let s = &self.sim;
        nonzero("sim.ring_count", s.ring_count)?;
        positive("sim.step_azimuth_rad", s.step_azimuth_rad)?;
        positive("sim.glass_intensity_scale", s.glass_intensity_scale)?;
        positive("sim.diffuse_intensity_scale", s.diffuse_intensity_scale)?;
        positive("sim.cos_exponent", s.cos_exponent)?;
        positive("sim.cutoff_deg", s.cutoff_deg)?;
        positive("sim.max_range_m", s.max_range_m)?;
        if s.cutoff_deg >= 90.0 {
            return Err(Error::Config("sim.cutoff_deg must be below 90".into()));
        }
        if !(s.detect_threshold.is_finite() && s.detect_threshold >= 0.0) {
            return Err(Error::Config("sim.detect_threshold must be non-negative".into()));
        }
        if !(s.elevation_min_deg < s.elevation_max_deg || s.ring_count == 1) {
            return Err(Error::Config("sim.elevation_min_deg must be below elevation_max_deg".into()));
        }
        if s.elevation_min_deg < -90.0 || s.elevation_max_deg > 90.0 {
            return Err(Error::Config("sim elevations must lie in [-90, 90] degrees".into()));
        }
        self.grid()?;
        let r = &self.registry;
        positive("registry.merge_angle_deg", r.merge_angle_deg)?;
        positive("registry.merge_dist_m", r.merge_dist_m)?;
        positive("registry.lookup_range_m", r.lookup_range_m)?;
        Ok(())
    }

    pub fn grid(&self) -> Result<GridGeometry> {
        GridGeometry::new(self.sim.ring_count, self.sim.step_azimuth_rad)
            .map_err(|e| Error::Config(format!("sim grid: {e}")))
    }

    pub fn detect_params(&self) -> DetectParams {
        let d = &self.detect;
        DetectParams {
            eps_range: d.eps_range_m,
            gap_threshold: d.gap_threshold_m,
            intensity_low: d.intensity_low,
            intensity_max: d.intensity_max,
            min_run_len: d.min_run_len,
        }
    }

    pub fn ransac_params(&self) -> RansacParams {
        let g = &self.geometry;
        RansacParams {
            inlier_dist: g.ransac_inlier_dist_m,
            min_inliers: g.min_inliers,
            loop_threshold: g.loop_threshold,
            max_iters: g.max_iters,
            seed: g.seed,
        }
    }

    pub fn boundary_params(&self) -> BoundaryParams {
        BoundaryParams {
            frame_search_dist: self.geometry.frame_search_dist_m,
            frame_gap: self.geometry.frame_gap_cols,
            inlier_dist: self.geometry.ransac_inlier_dist_m,
        }
    }

    pub fn classify_params(&self) -> ClassifyParams {
        let c = &self.classify;
        ClassifyParams {
            glass_dist: c.glass_dist_m,
            trace_window: c.trace_window_cells,
            min_outside_points: c.min_outside_points,
            trace_margin: c.trace_margin_m,
        }
    }

    pub fn sensor_model(&self) -> SensorModel {
        let s = &self.sim;
        SensorModel {
            ring_count: s.ring_count,
            step_azimuth: s.step_azimuth_rad,
            elevation_min: s.elevation_min_deg.to_radians(),
            elevation_max: s.elevation_max_deg.to_radians(),
            glass_intensity_scale: s.glass_intensity_scale,
            diffuse_intensity_scale: s.diffuse_intensity_scale,
            cos_exponent: s.cos_exponent,
            cutoff: s.cutoff_deg.to_radians(),
            detect_threshold: s.detect_threshold,
            max_range: s.max_range_m,
        }
    }

    pub fn registry_params(&self) -> RegistryParams {
        let r = &self.registry;
        RegistryParams {
            merge_angle: r.merge_angle_deg.to_radians(),
            merge_dist: r.merge_dist_m,
            lookup_range: r.lookup_range_m,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = Config::from_toml_str("").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.detect_params(), DetectParams::default());
        assert_eq!(cfg.ransac_params(), RansacParams::default());
        assert_eq!(cfg.grid().unwrap(), GridGeometry::default());
    }

    #[test]
    fn partial_section_overrides_one_key() {
        let cfg = Config::from_toml_str("[detect]\nintensity_max = 150.0\n").unwrap();
        assert_eq!(cfg.detect.intensity_max, 150.0);
        assert_eq!(cfg.detect.intensity_low, 40.0);
    }

    #[test]
    fn unknown_key_is_config_error() {
        let err = Config::from_toml_str("[classify]\nglass_distance = 0.1\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert_eq!(err.exit_code(), 3);
        assert!(Config::from_toml_str("[planes]\n").is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(Config::from_toml_str("[geometry]\nransac_inlier_dist_m = -1.0\n").is_err());
        assert!(Config::from_toml_str("[detect]\nintensity_low = 200.0\n").is_err());
        assert!(Config::from_toml_str("[sim]\ncutoff_deg = 95.0\n").is_err());
    }

    #[test]
    fn serialized_defaults_round_trip() {
        let text = Config::default().to_toml_string();
        for section in ["[detect]", "[geometry]", "[classify]", "[sim]", "[registry]"] {
            assert!(text.contains(section), "{section} missing");
        }
        assert_eq!(Config::from_toml_str(&text).unwrap(), Config::default());
    }
}
