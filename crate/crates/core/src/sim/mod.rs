// SPDX-License-Identifier: Apache-2.0

//! Ray-casting dual-return lidar simulator with per-point ground truth.
//!
//! A beam that meets a glass pane can produce three echoes: a weak diffuse
//! echo from the pane itself (strongly dependent on the incidence angle), a
//! transmission echo from whatever lies behind the pane, and a specular echo
//! from the object hit by the mirrored ray, reported at the unfolded path
//! length along the original direction. The sensor then reports the
//! strongest and last of these.

mod scan;
mod scene;
mod trace;

use std::f64::consts::TAU;

use nalgebra::Vector3;

use crate::cloud::GridGeometry;
use crate::error::Result;

pub use scan::{
    glass_truth_points, pane_footprint, pane_plane, simulate_scan, simulate_scan_at, GroundTruth, PaneFootprint, TruthPoint,
    SCAN_PERIOD,
};
pub use scene::{NoiseSpec, PaneSpec, Scene, SensorSpec, SurfaceKind, SurfaceSpec, TrajectorySpec};
pub use trace::{select_returns, trace_beam, CompiledScene, Echo, EchoSet};

/// Sensor and intensity model parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorModel {
    pub ring_count: usize,
    /// Radians per column.
    pub step_azimuth: f64,
    /// Elevation of ring 0, radians.
    pub elevation_min: f64,
    /// Elevation of the last ring, radians.
    pub elevation_max: f64,
    /// Pane echo intensity at normal incidence, 1 m, unit diffuse coefficient.
    pub glass_intensity_scale: f64,
    /// Diffuse echo intensity of a unit-albedo surface.
    pub diffuse_intensity_scale: f64,
    pub cos_exponent: f64,
    /// Pane echoes vanish beyond this incidence angle, radians.
    pub cutoff: f64,
    /// Echoes weaker than this are not reported.
    pub detect_threshold: f64,
    pub max_range: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            ring_count: 32,
            step_azimuth: TAU / 2251.0,
            elevation_min: (-30.67f64).to_radians(),
            elevation_max: 10.67f64.to_radians(),
            glass_intensity_scale: 4000.0,
            diffuse_intensity_scale: 255.0,
            cos_exponent: 8.0,
            cutoff: 45f64.to_radians(),
            detect_threshold: 5.0,
            max_range: 100.0,
        }
    }
}

impl SensorModel {
    pub fn grid(&self) -> Result<GridGeometry> {
        GridGeometry::new(self.ring_count, self.step_azimuth)
    }

    pub fn ring_elevation(&self, ring: usize) -> f64 {
        if self.ring_count <= 1 {
            return 0.5 * (self.elevation_min + self.elevation_max);
        }
        let t = ring as f64 / (self.ring_count - 1) as f64;
        self.elevation_min + t * (self.elevation_max - self.elevation_min)
    }

    /// Unit beam direction in the sensor frame; beams fire at column centers.
    pub fn beam_direction(&self, ring: usize, col: usize) -> Vector3<f64> {
        let el = self.ring_elevation(ring);
        let az = (col as f64 + 0.5) * self.step_azimuth;
        Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }

    /// Angular falloff of the pane echo: `cos^k θ`, zero beyond the cutoff.
    pub fn glass_gain(&self, incidence: f64) -> f64 {
        if incidence > self.cutoff {
            0.0
        } else {
            incidence.cos().powf(self.cos_exponent)
        }
    }

    /// Raw pane echo intensity before clamping.
    pub fn glass_intensity(&self, diffuse: f64, incidence: f64, range: f64) -> f64 {
        self.glass_intensity_scale * diffuse * self.glass_gain(incidence) / range.max(1.0).powi(2)
    }

    pub fn diffuse_intensity(&self, albedo: f64, attenuation: f64) -> f64 {
        self.diffuse_intensity_scale * albedo * attenuation
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_elevations_span_the_field_of_view() {
        let m = SensorModel::default();
        assert!((m.ring_elevation(0).to_degrees() + 30.67).abs() < 1e-9);
        assert!((m.ring_elevation(31).to_degrees() - 10.67).abs() < 1e-9);
        assert!(m.ring_elevation(23).to_degrees().abs() < 0.01);
    }

    #[test]
    fn gain_is_monotone_and_gated() {
        let m = SensorModel::default();
        let mut prev = f64::INFINITY;
        for i in 0..=450 {
            let g = m.glass_gain((i as f64 * 0.1).to_radians());
            assert!(g <= prev);
            prev = g;
        }
        assert_eq!(m.glass_gain(60f64.to_radians()), 0.0);
        assert_eq!(m.glass_gain(0.0), 1.0);
    }

    #[test]
    fn beam_direction_is_unit() {
        let m = SensorModel::default();
        for (r, c) in [(0, 0), (23, 1125), (31, 2250)] {
            assert!((m.beam_direction(r, c).norm() - 1.0).abs() < 1e-12);
        }
    }
}
