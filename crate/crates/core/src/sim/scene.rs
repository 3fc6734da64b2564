// SPDX-License-Identifier: Apache-2.0

//! Scene description, read from TOML.
//!
//! ```toml
//! [sensor]
//! position = [0.0, 0.0, 1.0]
//! orientation = [0.0, 0.0, 0.0, 1.0]   # qx qy qz qw, sensor to world
//!
//! [noise]
//! range_sigma_m = 0.02
//! edge_probability = 0.0
//!
//! [trajectory]                          # optional; drives multi-scan runs
//! end_position = [2.0, 0.0, 1.0]
//! end_yaw_deg = 10.0
//! scans = 300
//!
//! [[pane]]
//! corner = [3.0, -1.0, 0.5]
//! edge_u = [0.0, 2.0, 0.0]
//! edge_v = [0.0, 0.0, 1.5]
//! frame_width_m = 0.08
//! transmittance = 0.5
//! reflectance = 0.4
//! diffuse = 0.05
//! frame_albedo = 0.5
//!
//! [[surface]]
//! kind = "box"                          # rect: corner/edge_u/edge_v; triangle: vertices
//! min = [-4.0, -3.0, 0.0]
//! max = [3.0, 3.0, 3.0]
//! albedo = 0.6
//! ```

use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::Plane;
use crate::registry::Pose;

type V3 = [f64; 3];

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub position: V3,
    #[serde(default = "identity_quaternion")]
    pub orientation: [f64; 4],
}

fn identity_quaternion() -> [f64; 4] {
    [0.0, 0.0, 0.0, 1.0]
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self { position: [0.0; 3], orientation: identity_quaternion() }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub range_sigma_m: f64,
    /// Probability that a beam splits over an edge and reports a second,
    /// unrelated echo.
    pub edge_probability: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { range_sigma_m: 0.02, edge_probability: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub end_position: V3,
    #[serde(default)]
    pub end_yaw_deg: f64,
    #[serde(default = "one")]
    pub scans: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaneSpec {
    pub corner: V3,
    pub edge_u: V3,
    pub edge_v: V3,
    #[serde(default)]
    pub frame_width_m: f64,
    pub transmittance: f64,
    pub reflectance: f64,
    pub diffuse: f64,
    #[serde(default = "half")]
    pub frame_albedo: f64,
}

fn half() -> f64 {
    0.5
}

impl PaneSpec {
    pub fn corner(&self) -> Vector3<f64> {
        Vector3::from(self.corner)
    }

    pub fn edge_u(&self) -> Vector3<f64> {
        Vector3::from(self.edge_u)
    }

    pub fn edge_v(&self) -> Vector3<f64> {
        Vector3::from(self.edge_v)
    }

    /// The pane's plane in the world frame.
    pub fn plane(&self) -> Plane {
        let n = self.edge_u().cross(&self.edge_v());
        Plane::from_normal_point(n, self.corner()).expect("validated pane has non-degenerate edges")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceKind {
    Rect,
    Triangle,
    Box,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub kind: SurfaceKind,
    pub albedo: f64,
    pub corner: Option<V3>,
    pub edge_u: Option<V3>,
    pub edge_v: Option<V3>,
    pub vertices: Option<[V3; 3]>,
    pub min: Option<V3>,
    pub max: Option<V3>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    #[serde(default)]
    pub sensor: SensorSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub trajectory: Option<TrajectorySpec>,
    #[serde(default, rename = "pane")]
    pub panes: Vec<PaneSpec>,
    #[serde(default, rename = "surface")]
    pub surfaces: Vec<SurfaceSpec>,
}

const BUILTIN: [(&str, &str); 6] = [
    ("classroom", include_str!("../../scenes/classroom.toml")),
    ("railing", include_str!("../../scenes/railing.toml")),
    ("corridor", include_str!("../../scenes/corridor.toml")),
    ("framed", include_str!("../../scenes/framed.toml")),
    ("room", include_str!("../../scenes/room.toml")),
    ("corridor-wall", include_str!("../../scenes/corridor_wall.toml")),
];

impl Scene {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scene: Scene = toml::from_str(text).map_err(|e| Error::Input(format!("scene: {}", e.message())))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
    }

    /// Names of the scenes shipped with the crate.
    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(n, _)| *n)
    }

    pub fn builtin(name: &str) -> Option<Self> {
        BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::from_toml_str(text).expect("builtin scenes are valid"))
    }

    /// Builtin scene by name, or a scene file path.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match Self::builtin(name_or_path) {
            Some(s) => Ok(s),
            None => Self::load(Path::new(name_or_path)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Input(format!("scene: {msg}")));
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.sensor.position) || !finite(&self.sensor.orientation) {
            return bad("sensor pose must be finite".into());
        }
        Pose::from_components(self.sensor.position, self.sensor.orientation)
            .map_err(|e| Error::Input(format!("scene sensor: {e}")))?;
        if !(self.noise.range_sigma_m >= 0.0 && self.noise.range_sigma_m.is_finite()) {
            return bad("noise.range_sigma_m must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.noise.edge_probability) {
            return bad("noise.edge_probability must lie in [0, 1]".into());
        }
        if let Some(t) = &self.trajectory {
            if !finite(&t.end_position) || !t.end_yaw_deg.is_finite() || t.scans == 0 {
                return bad("trajectory needs a finite end pose and at least one scan".into());
            }
        }
        for (i, p) in self.panes.iter().enumerate() {
            if !finite(&p.corner) || !finite(&p.edge_u) || !finite(&p.edge_v) {
                return bad(format!("pane {i}: non-finite geometry"));
            }
            if p.edge_u().norm() <= 0.0 || p.edge_v().norm() <= 0.0 || p.edge_u().cross(&p.edge_v()).norm() < 1e-9 {
                return bad(format!("pane {i}: extents must be positive and non-parallel"));
            }
            for (name, v) in [
                ("transmittance", p.transmittance),
                ("reflectance", p.reflectance),
                ("diffuse", p.diffuse),
                ("frame_albedo", p.frame_albedo),
            ] {
                if !(0.0..=1.0).contains(&v) {
                    return bad(format!("pane {i}: {name} must lie in [0, 1]"));
                }
            }
            if p.transmittance + p.reflectance + p.diffuse > 1.0 + 1e-12 {
                return bad(format!("pane {i}: transmittance + reflectance + diffuse exceeds 1"));
            }
            if !(p.frame_width_m >= 0.0 && p.frame_width_m.is_finite()) {
                return bad(format!("pane {i}: frame_width_m must be non-negative"));
            }
        }
        for (i, s) in self.surfaces.iter().enumerate() {
            if !(0.0..=1.0).contains(&s.albedo) {
                return bad(format!("surface {i}: albedo must lie in [0, 1]"));
            }
            let coords: Vec<f64> = [s.corner, s.edge_u, s.edge_v, s.min, s.max]
                .iter()
                .flatten()
                .flat_map(|v| v.iter().copied())
                .chain(s.vertices.iter().flatten().flat_map(|v| v.iter().copied()))
                .collect();
            if !finite(&coords) {
                return bad(format!("surface {i}: non-finite geometry"));
            }
            let ok = match s.kind {
                SurfaceKind::Rect => match (s.corner, s.edge_u, s.edge_v) {
                    (Some(_), Some(u), Some(v)) => Vector3::from(u).cross(&Vector3::from(v)).norm() > 1e-12,
                    _ => false,
                },
                SurfaceKind::Triangle => s.vertices.is_some_and(|[a, b, c]| {
                    let (a, b, c) = (Vector3::from(a), Vector3::from(b), Vector3::from(c));
                    (b - a).cross(&(c - a)).norm() > 1e-12
                }),
                SurfaceKind::Box => match (s.min, s.max) {
                    (Some(lo), Some(hi)) => (0..3).all(|k| hi[k] > lo[k]),
                    _ => false,
                },
            };
            if !ok {
                return bad(format!("surface {i}: missing or degenerate {:?} geometry", s.kind));
            }
        }
        Ok(())
    }

    /// Sensor pose of scan `k` along the trajectory (the start pose without one).
    pub fn sensor_pose(&self, k: usize) -> Pose {
        let start = Pose::from_components(self.sensor.position, self.sensor.orientation).expect("validated sensor pose");
        let Some(t) = &self.trajectory else {
            return start;
        };
        let f = if t.scans > 1 { k.min(t.scans - 1) as f64 / (t.scans - 1) as f64 } else { 0.0 };
        let p0 = Vector3::from(self.sensor.position);
        let p1 = Vector3::from(t.end_position);
        let yaw = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), f * t.end_yaw_deg.to_radians());
        Pose::new(yaw * start.rotation, p0 + f * (p1 - p0))
    }

    pub fn scan_count(&self) -> usize {
        self.trajectory.as_ref().map_or(1, |t| t.scans)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_scenes_parse() {
        for name in Scene::builtin_names() {
            let s = Scene::builtin(name).unwrap();
            assert!(!s.surfaces.is_empty(), "{name}");
        }
        assert!(Scene::builtin("nope").is_none());
    }

    #[test]
    fn coefficient_sum_is_checked() {
        let text = r#"
            [[pane]]
            corner = [1.0, 0.0, 0.0]
            edge_u = [0.0, 1.0, 0.0]
            edge_v = [0.0, 0.0, 1.0]
            transmittance = 0.6
            reflectance = 0.5
            diffuse = 0.05
        "#;
        let err = Scene::from_toml_str(text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn degenerate_surface_is_rejected() {
        let text = "[[surface]]\nkind = \"box\"\nmin = [0.0, 0.0, 0.0]\nmax = [1.0, 0.0, 1.0]\nalbedo = 0.5\n";
        assert!(Scene::from_toml_str(text).is_err());
        let text = "[[surface]]\nkind = \"rect\"\ncorner = [0.0, 0.0, 0.0]\nalbedo = 0.5\n";
        assert!(Scene::from_toml_str(text).is_err());
    }

    #[test]
    fn trajectory_interpolates_linearly() {
        let text = r#"
            [sensor]
            position = [0.0, 0.0, 1.0]
            [trajectory]
            end_position = [4.0, 0.0, 1.0]
            end_yaw_deg = 90.0
            scans = 5
        "#;
        let s = Scene::from_toml_str(text).unwrap();
        let p = s.sensor_pose(2);
        assert!((p.translation - Vector3::new(2.0, 0.0, 1.0)).norm() < 1e-12);
        assert!((p.rotation.angle() - 45f64.to_radians()).abs() < 1e-12);
        assert_eq!(s.scan_count(), 5);
    }
}
