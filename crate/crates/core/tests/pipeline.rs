// SPDX-License-Identifier: Apache-2.0

use glassmap::config::Config;
use glassmap::drpc::{read_drpc, write_drpc, TagColumns};
use glassmap::pipeline::{run_pipeline, simulate_inputs, Pipeline};
use glassmap::sim::pane_plane;
use glassmap::{classify_points, Exec, GroundTruth, Label, PaneRegistry, ReturnChannel, Scene};

#[test]
fn batches_match_a_single_run() {
    let cfg = Config::default();
    let scene = Scene::builtin("framed").unwrap();
    let inputs = simulate_inputs(&scene, &cfg, 3, 0..12, Exec::Parallel).unwrap();
    let whole = run_pipeline(&inputs, &cfg, Exec::Parallel).unwrap();

    let mut p = Pipeline::new(&cfg, Exec::Sequential).unwrap();
    let mut results = Vec::new();
    for batch in [0..5, 5..9, 9..12] {
        results.extend(p.process(&inputs[batch]).unwrap());
    }
    assert_eq!(results.len(), whole.results.len());
    for (a, b) in results.iter().zip(&whole.results) {
        assert!(a.labeled == b.labeled);
        assert!(a.detection == b.detection);
        assert_eq!(a.from_registry, b.from_registry);
    }
    assert_eq!(p.registry().to_text(), whole.registry.to_text());
    assert_eq!(p.report(), whole.report());
    assert_eq!(p.stats(), whole.stats);
    assert!(p.stats().panes_used >= 12);
}

#[test]
fn registry_recalls_a_pane_from_another_pose() {
    let cfg = Config::default();
    let scene = Scene::builtin("classroom").unwrap();
    let first = simulate_inputs(&scene, &cfg, 7, 0..3, Exec::Parallel).unwrap();
    let out = run_pipeline(&first, &cfg, Exec::Parallel).unwrap();
    assert!(!out.registry.panes().is_empty());

    let later = simulate_inputs(&scene, &cfg, 7, 60..61, Exec::Parallel).unwrap().remove(0);
    let pose = later.pose.unwrap();
    let recalled = out.registry.lookup_panes(&pose, &later.scan.ring_table(), later.scan.geometry());
    assert!(!recalled.is_empty());
    let truth_plane = pane_plane(&scene, 0, &pose);
    assert!(recalled.iter().any(|p| p.plane.angle_to(&truth_plane).to_degrees() < 2.0));

    let labeled = classify_points(&later.scan, &recalled, &cfg.classify_params());
    let truth = later.truth.as_ref().unwrap();
    let g = later.scan.geometry();
    let (mut glass, mut found) = (0, 0);
    for ring in 0..g.ring_count {
        for col in 0..g.column_count {
            if truth.get(ReturnChannel::Strongest, ring, col).is_some_and(|t| t.label == Label::G) {
                glass += 1;
                found += labeled.get(ReturnChannel::Strongest, ring, col).is_some_and(|l| l.label == Label::G) as usize;
            }
        }
    }
    assert!(glass > 0);
    assert!(found as f64 >= 0.9 * glass as f64, "{found} of {glass} glass points recalled");
}

#[test]
fn empty_registry_recalls_nothing() {
    let cfg = Config::default();
    let scene = Scene::builtin("room").unwrap();
    let input = simulate_inputs(&scene, &cfg, 1, 0..1, Exec::Sequential).unwrap().remove(0);
    let reg = PaneRegistry::new(cfg.registry_params());
    assert!(reg.lookup_panes(&input.pose.unwrap(), &input.scan.ring_table(), input.scan.geometry()).is_empty());
}

#[test]
fn simulated_scan_survives_a_file_round_trip() {
    let cfg = Config::default();
    let scene = Scene::builtin("railing").unwrap();
    let input = simulate_inputs(&scene, &cfg, 11, 5..6, Exec::Parallel).unwrap().remove(0);
    let truth = input.truth.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scan.drpc");
    write_drpc(&path, &input.scan, Some((&truth.to_tags(), TagColumns::ALL))).unwrap();
    let back = read_drpc(&path).unwrap();

    assert_eq!(back.scan.scan_id, input.scan.scan_id);
    assert!(back.scan.geometry().same_as(input.scan.geometry()));
    for ch in [ReturnChannel::Strongest, ReturnChannel::Last] {
        let (a, b) = (input.scan.channel(ch), back.scan.channel(ch));
        assert_eq!(a.valid_count(), b.valid_count());
        for (ring, col, p) in a.iter_valid() {
            let q = b.get(ring, col).unwrap();
            assert!((p.position() - q.position()).norm() < 1e-5);
            assert!((p.intensity - q.intensity).abs() < 1e-5);
        }
    }
    let back_truth = GroundTruth::from_tags(&back.scan, back.tags.as_ref().unwrap()).unwrap();
    for label in [Label::I, Label::G, Label::R, Label::O] {
        assert_eq!(back_truth.count(label), truth.count(label));
    }
}
