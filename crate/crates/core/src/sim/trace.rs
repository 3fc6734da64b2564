// SPDX-License-Identifier: Apache-2.0

use nalgebra::Vector3;

use super::scene::{Scene, SurfaceKind};
use super::SensorModel;
use crate::classify::Label;

const T_MIN: f64 = 1e-6;

/// A planar parallelogram or triangle.
#[derive(Clone, Copy, Debug)]
struct Patch {
    origin: Vector3<f64>,
    e1: Vector3<f64>,
    e2: Vector3<f64>,
    normal: Vector3<f64>,
    uu: f64,
    uv: f64,
    vv: f64,
    inv_det: f64,
    triangle: bool,
}

impl Patch {
    fn new(origin: Vector3<f64>, e1: Vector3<f64>, e2: Vector3<f64>, triangle: bool) -> Self {
        let (uu, uv, vv) = (e1.dot(&e1), e1.dot(&e2), e2.dot(&e2));
        Self {
            origin,
            e1,
            e2,
            normal: e1.cross(&e2).normalize(),
            uu,
            uv,
            vv,
            inv_det: 1.0 / (uu * vv - uv * uv),
            triangle,
        }
    }

    /// Ray parameter of the hit, if any, beyond `T_MIN`.
    #[inline]
    fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        let denom = self.normal.dot(d);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = self.normal.dot(&(self.origin - o)) / denom;
        if t <= T_MIN {
            return None;
        }
        let w = o + d * t - self.origin;
        let (wu, wv) = (w.dot(&self.e1), w.dot(&self.e2));
        let u = (wu * self.vv - wv * self.uv) * self.inv_det;
        let v = (wv * self.uu - wu * self.uv) * self.inv_det;
        let inside = if self.triangle {
            u >= 0.0 && v >= 0.0 && u + v <= 1.0
        } else {
            (0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v)
        };
        inside.then_some(t)
    }
}

#[derive(Clone, Copy, Debug)]
struct Diffuse {
    patch: Patch,
    albedo: f64,
}

#[derive(Clone, Copy, Debug)]
struct Glass {
    patch: Patch,
    id: usize,
    transmittance: f64,
    reflectance: f64,
    diffuse: f64,
}

/// Scene flattened into intersectable patches.
#[derive(Clone, Debug)]
pub struct CompiledScene {
    diffuse: Vec<Diffuse>,
    glass: Vec<Glass>,
}

/// One echo along a beam.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Echo {
    /// Distance along the beam, meters.
    pub range: f64,
    /// Unclamped.
    pub intensity: f64,
    pub label: Label,
    /// Where the light actually bounced, world frame.
    pub truth: Vector3<f64>,
    pub pane: Option<usize>,
}

/// Echoes of one beam in increasing range order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EchoSet {
    pub echoes: Vec<Echo>,
}

impl EchoSet {
    /// Sorts by range and merges echoes closer than a nanometer, keeping the stronger.
    pub fn from_unsorted(mut echoes: Vec<Echo>) -> Self {
        echoes.sort_by(|a, b| a.range.total_cmp(&b.range));
        let mut out: Vec<Echo> = Vec::with_capacity(echoes.len());
        for e in echoes {
            match out.last_mut() {
                Some(prev) if e.range - prev.range < 1e-9 => {
                    if e.intensity > prev.intensity {
                        *prev = e;
                    }
                }
                _ => out.push(e),
            }
        }
        Self { echoes: out }
    }

    pub fn len(&self) -> usize {
        self.echoes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.echoes.is_empty()
    }
}

fn rect(diffuse: &mut Vec<Diffuse>, corner: Vector3<f64>, u: Vector3<f64>, v: Vector3<f64>, albedo: f64) {
    diffuse.push(Diffuse { patch: Patch::new(corner, u, v, false), albedo });
}

impl CompiledScene {
    pub fn new(scene: &Scene) -> Self {
        let mut diffuse = Vec::new();
        for s in &scene.surfaces {
            let v = |a: Option<[f64; 3]>| Vector3::from(a.expect("validated surface"));
            match s.kind {
                SurfaceKind::Rect => rect(&mut diffuse, v(s.corner), v(s.edge_u), v(s.edge_v), s.albedo),
                SurfaceKind::Triangle => {
                    let [a, b, c] = s.vertices.expect("validated surface").map(Vector3::from);
                    diffuse.push(Diffuse { patch: Patch::new(a, b - a, c - a, true), albedo: s.albedo });
                }
                SurfaceKind::Box => {
                    let (lo, hi) = (v(s.min), v(s.max));
                    let ext = hi - lo;
                    let (ex, ey, ez) = (Vector3::x() * ext.x, Vector3::y() * ext.y, Vector3::z() * ext.z);
                    for (corner, a, b) in [
                        (lo, ex, ey),
                        (lo + ez, ex, ey),
                        (lo, ex, ez),
                        (lo + ey, ex, ez),
                        (lo, ey, ez),
                        (lo + ex, ey, ez),
                    ] {
                        rect(&mut diffuse, corner, a, b, s.albedo);
                    }
                }
            }
        }
        let mut glass = Vec::new();
        for (id, p) in scene.panes.iter().enumerate() {
            let (c, u, v) = (p.corner(), p.edge_u(), p.edge_v());
            glass.push(Glass {
                patch: Patch::new(c, u, v, false),
                id,
                transmittance: p.transmittance,
                reflectance: p.reflectance,
                diffuse: p.diffuse,
            });
            let w = p.frame_width_m;
            if w > 0.0 {
                let (du, dv) = (u.normalize() * w, v.normalize() * w);
                let a = p.frame_albedo;
                rect(&mut diffuse, c - du - dv, u + du * 2.0, dv, a);
                rect(&mut diffuse, c - du + v, u + du * 2.0, dv, a);
                rect(&mut diffuse, c - du, du, v, a);
                rect(&mut diffuse, c + u, du, v, a);
            }
        }
        Self { diffuse, glass }
    }

    fn nearest_diffuse(&self, o: &Vector3<f64>, d: &Vector3<f64>, skip_until: f64) -> Option<(f64, &Diffuse)> {
        let mut best: Option<(f64, &Diffuse)> = None;
        for s in &self.diffuse {
            if let Some(t) = s.patch.intersect(o, d) {
                if t > skip_until && best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, s));
                }
            }
        }
        best
    }

    fn nearest_glass(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, &Glass)> {
        let mut best: Option<(f64, &Glass)> = None;
        for g in &self.glass {
            if let Some(t) = g.patch.intersect(o, d) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, g));
                }
            }
        }
        best
    }

    /// An echo from the first diffuse surface behind the one producing
    /// `first`, for edge-splitting beams.
    pub fn edge_echo(&self, model: &SensorModel, origin: &Vector3<f64>, dir: &Vector3<f64>, first: &Echo) -> Option<Echo> {
        let (t, s) = self.nearest_diffuse(origin, dir, first.range + 1e-3)?;
        let intensity = model.diffuse_intensity(s.albedo, 0.5);
        (t <= model.max_range && intensity >= model.detect_threshold).then(|| Echo {
            range: t,
            intensity,
            label: Label::I,
            truth: origin + dir * t,
            pane: None,
        })
    }
}

/// Echoes of a single beam. Panes further along a beam than the first one
/// are ignored, and specular paths bounce once.
pub fn trace_beam(scene: &CompiledScene, model: &SensorModel, origin: &Vector3<f64>, dir: &Vector3<f64>) -> EchoSet {
    let mut echoes = Vec::with_capacity(3);
    let diffuse_hit = scene.nearest_diffuse(origin, dir, 0.0);
    let glass_hit = scene.nearest_glass(origin, dir).filter(|(tg, _)| diffuse_hit.is_none_or(|(td, _)| *tg < td));
    match glass_hit {
        None => {
            if let Some((t, s)) = diffuse_hit {
                echoes.push(Echo {
                    range: t,
                    intensity: model.diffuse_intensity(s.albedo, 1.0),
                    label: Label::I,
                    truth: origin + dir * t,
                    pane: None,
                });
            }
        }
        Some((tg, g)) => {
            let n = g.patch.normal;
            let hit = origin + dir * tg;
            let incidence = dir.dot(&n).abs().min(1.0).acos();
            echoes.push(Echo {
                range: tg,
                intensity: model.glass_intensity(g.diffuse, incidence, tg),
                label: Label::G,
                truth: hit,
                pane: Some(g.id),
            });
            if let Some((t, s)) = diffuse_hit {
                echoes.push(Echo {
                    range: t,
                    intensity: model.diffuse_intensity(s.albedo, g.transmittance * g.transmittance),
                    label: Label::O,
                    truth: origin + dir * t,
                    pane: Some(g.id),
                });
            }
            let mirrored = dir - n * (2.0 * dir.dot(&n));
            if let Some((s_len, s)) = scene.nearest_diffuse(&hit, &mirrored, 0.0) {
                echoes.push(Echo {
                    range: tg + s_len,
                    intensity: model.diffuse_intensity(s.albedo, g.reflectance * g.reflectance),
                    label: Label::R,
                    truth: hit + mirrored * s_len,
                    pane: Some(g.id),
                });
            }
        }
    }
    echoes.retain(|e| e.intensity >= model.detect_threshold && e.range <= model.max_range);
    EchoSet::from_unsorted(echoes)
}

/// Dual-return selection: the last return is the farthest echo; the strongest
/// is the most intense one unless that is also the last, in which case the
/// second most intense is reported instead. A lone echo fills both channels.
pub fn select_returns(set: &EchoSet) -> (Option<Echo>, Option<Echo>) {
    let e = &set.echoes;
    match e.len() {
        0 => (None, None),
        1 => (Some(e[0]), Some(e[0])),
        n => {
            let last = n - 1;
            let by_intensity = |a: &&Echo, b: &&Echo| a.intensity.total_cmp(&b.intensity).then(b.range.total_cmp(&a.range));
            let strongest = e.iter().max_by(by_intensity).expect("non-empty");
            let strongest = if std::ptr::eq(strongest, &e[last]) {
                e[..last].iter().max_by(by_intensity).expect("at least two echoes")
            } else {
                strongest
            };
            (Some(*strongest), Some(e[last]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn echo(range: f64, intensity: f64, label: Label) -> Echo {
        Echo { range, intensity, label, truth: Vector3::new(range, 0.0, 0.0), pane: None }
    }

    fn wall_scene(pane: bool) -> Scene {
        let mut text = String::from(
            "[[surface]]\nkind = \"rect\"\ncorner = [5.0, -10.0, -5.0]\nedge_u = [0.0, 20.0, 0.0]\nedge_v = [0.0, 0.0, 10.0]\nalbedo = 0.8\n",
        );
        if pane {
            text.push_str(
                "[[pane]]\ncorner = [2.0, -4.0, -3.0]\nedge_u = [0.0, 8.0, 0.0]\nedge_v = [0.0, 0.0, 6.0]\ntransmittance = 0.5\nreflectance = 0.3\ndiffuse = 0.1\n",
            );
        }
        Scene::from_toml_str(&text).unwrap()
    }

    #[test]
    fn lone_wall_gives_one_inside_echo() {
        let scene = CompiledScene::new(&wall_scene(false));
        let set = trace_beam(&scene, &SensorModel::default(), &Vector3::zeros(), &Vector3::x());
        assert_eq!(set.len(), 1);
        assert_eq!(set.echoes[0].label, Label::I);
        assert!((set.echoes[0].range - 5.0).abs() < 1e-12);
        assert!((set.echoes[0].intensity - 255.0 * 0.8).abs() < 1e-9);
    }

    #[test]
    fn pane_echo_peaks_at_normal_incidence() {
        let model = SensorModel::default();
        let scene = CompiledScene::new(&wall_scene(true));
        let mut best = (f64::NEG_INFINITY, f64::NAN);
        for i in -40..=40 {
            let theta = (i as f64).to_radians();
            let dir = Vector3::new(theta.cos(), theta.sin(), 0.0);
            let set = trace_beam(&scene, &model, &Vector3::zeros(), &dir);
            let glass: Vec<_> = set.echoes.iter().filter(|e| e.label == Label::G).collect();
            assert_eq!(glass.len(), 1);
            assert!(set.echoes.iter().any(|e| e.label == Label::O));
            if glass[0].intensity > best.0 {
                best = (glass[0].intensity, theta);
            }
        }
        assert_eq!(best.1, 0.0);
    }

    #[test]
    fn no_pane_echo_beyond_cutoff() {
        let model = SensorModel::default();
        let scene = CompiledScene::new(&wall_scene(true));
        let theta = 60f64.to_radians();
        let dir = Vector3::new(theta.cos(), theta.sin(), 0.0);
        let set = trace_beam(&scene, &model, &Vector3::zeros(), &dir);
        assert!(set.echoes.iter().all(|e| e.label != Label::G));
        assert!(set.echoes.iter().any(|e| e.label == Label::O));
    }

    #[test]
    fn specular_truth_is_mirror_of_reported_position() {
        let model = SensorModel::default();
        let text = r#"
            [[pane]]
            corner = [2.0, -3.0, -3.0]
            edge_u = [0.0, 6.0, 0.0]
            edge_v = [0.0, 0.0, 6.0]
            transmittance = 0.5
            reflectance = 0.4
            diffuse = 0.05
            [[surface]]
            kind = "rect"
            corner = [-3.0, -5.0, -5.0]
            edge_u = [0.0, 10.0, 0.0]
            edge_v = [0.0, 0.0, 10.0]
            albedo = 0.7
        "#;
        let spec = Scene::from_toml_str(text).unwrap();
        let plane = spec.panes[0].plane();
        let scene = CompiledScene::new(&spec);
        let dir = Vector3::new(1.0, 0.3, 0.1).normalize();
        let set = trace_beam(&scene, &model, &Vector3::zeros(), &dir);
        let r = set.echoes.iter().find(|e| e.label == Label::R).expect("specular echo");
        let reported = dir * r.range;
        assert!((plane.reflect(&reported) - r.truth).norm() < 1e-9);
    }

    #[test]
    fn one_echo_fills_both_channels() {
        let set = EchoSet::from_unsorted(vec![echo(3.0, 90.0, Label::I)]);
        let (s, l) = select_returns(&set);
        assert_eq!(s, l);
        assert_eq!(select_returns(&EchoSet::default()), (None, None));
    }

    #[test]
    fn strongest_farthest_pair_substitutes_second_strongest() {
        let set = EchoSet::from_unsorted(vec![echo(5.0, 200.0, Label::O), echo(2.0, 120.0, Label::G)]);
        let (s, l) = select_returns(&set);
        assert_eq!(l.unwrap().range, 5.0);
        assert_eq!(s.unwrap().range, 2.0);
    }

    #[test]
    fn three_echo_glass_is_unreported() {
        let set = EchoSet::from_unsorted(vec![
            echo(2.0, 20.0, Label::G),
            echo(3.5, 150.0, Label::I),
            echo(6.0, 60.0, Label::O),
        ]);
        let (s, l) = select_returns(&set);
        assert_eq!(s.unwrap().label, Label::I);
        assert_eq!(l.unwrap().label, Label::O);
    }
}
