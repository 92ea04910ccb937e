mod common;

use std::f64::consts::PI;

use phaseless_core::data::PhasedFields;
use phaseless_core::forward::ForwardModel;
use phaseless_core::imaging::{
    backpropagate, equispaced_angles, expansion_to_farfield, farfields_from_fields, translation_invariance_report,
    FarField, SearchGrid,
};
use phaseless_core::retrieval::{RadiatingBasis, RadiatingExpansion};
use phaseless_core::scene::{DirectionGrid, MeasurementSet};
use phaseless_core::{
    builtin_kite, BoundaryCondition, BoundaryCurve, Complex64, Direction, IncidentField, Obstacle, Point, Scatterer,
    Scene,
};
use proptest::prelude::*;

fn kite_scene() -> Scene {
    let o = Obstacle::new(builtin_kite(Point::ORIGIN), BoundaryCondition::SoundSoft).unwrap();
    let m = MeasurementSet::Circle {
        center: Point::ORIGIN,
        radius: 4.0,
        count: 128,
    };
    Scene::new(2.0, Scatterer::Obstacle(o), m, DirectionGrid::new(8, 1.5 * PI))
        .unwrap()
        .with_nodes(192)
}

#[test]
fn single_mode_has_a_constant_far_field() {
    let k = 1.7;
    let e = RadiatingExpansion::new(k, Point::ORIGIN, 1.0, vec![Complex64::new(1.0, 0.0)]).unwrap();
    let ff = expansion_to_farfield(&e, &equispaced_angles(16));
    let gamma0 = Complex64::from_polar((2.0 / (PI * k)).sqrt(), -PI / 4.0);
    for v in ff.values {
        assert!((v - gamma0).norm() < 1e-15);
    }
}

#[test]
fn far_field_matches_large_argument_asymptotics() {
    let k = 1.3;
    let coeffs: Vec<Complex64> = (-3i32..=3)
        .map(|n| Complex64::new(1.0 / (1.0 + n.abs() as f64), 0.3 * n as f64))
        .collect();
    let center = Point::new(0.2, -0.1);
    let e = RadiatingExpansion::new(k, center, 1.0, coeffs.clone()).unwrap();
    let angles = equispaced_angles(12);
    let ff = expansion_to_farfield(&e, &angles);
    let r = 1e4;
    for (a, v) in angles.iter().zip(&ff.values) {
        let u = e.eval(Point::from_angle(*a) * r).unwrap();
        let extracted = u * r.sqrt() * Complex64::from_polar(1.0, -k * r);
        assert!((extracted - v).norm() <= 1e-3, "{extracted} vs {v}");
    }
}

#[test]
fn fitted_expansion_reproduces_the_solver_far_field() {
    let scene = kite_scene();
    let model = ForwardModel::new(&scene).unwrap();
    let points = scene.measurement.points();
    let bbox = scene.scatterer.bounding_box().unwrap();
    let radius = bbox.corners().iter().map(|c| c.norm()).fold(0.0, f64::max);
    let basis = RadiatingBasis::new(2.0, Point::ORIGIN, radius, &points).unwrap();
    let angles = equispaced_angles(32);
    for d in [0.3, 2.1] {
        let inc = IncidentField::plane(2.0, Direction::new(d));
        let us = model.scattered(&inc, &points).unwrap();
        let fitted = expansion_to_farfield(&basis.expansion(&us), &angles);
        let solver = model.farfield(&inc, &angles).unwrap();
        let scale = solver.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let err = fitted
            .values
            .iter()
            .zip(&solver.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
            / scale;
        assert!(err <= 1e-6, "far-field mismatch {err:.3e}");
    }
}

#[test]
fn translation_keeps_single_wave_moduli_but_not_superpositions() {
    let scene = kite_scene();
    let dirs: Vec<Direction> = (0..8).map(|j| Direction::new(0.8 * j as f64)).collect();
    let r = translation_invariance_report(&scene, Point::new(0.5, 0.0), &dirs, &equispaced_angles(24)).unwrap();
    eprintln!("{r:?}");
    assert!(r.single_discrepancy <= 1e-8);
    assert!(r.shift_law_error <= 1e-8);
    assert!(r.superposition_discrepancy >= SUPERPOSITION_DISCREPANCY);
}

// Regression floor from the measured superposition discrepancy (0.914).
const SUPERPOSITION_DISCREPANCY: f64 = 0.9;

#[test]
fn zero_shift_changes_nothing() {
    let scene = kite_scene();
    let dirs = [Direction::new(0.0), Direction::new(1.0)];
    let r = translation_invariance_report(&scene, Point::ORIGIN, &dirs, &equispaced_angles(12)).unwrap();
    assert!(r.single_discrepancy <= 1e-12 && r.superposition_discrepancy <= 1e-12);
}

fn small_disk(center: Point) -> Scene {
    let k = 2.0 * PI;
    let o = Obstacle::new(BoundaryCurve::circle(center, 0.1), BoundaryCondition::SoundSoft).unwrap();
    let m = MeasurementSet::Circle {
        center: Point::ORIGIN,
        radius: 5.0,
        count: 128,
    };
    Scene::new(k, Scatterer::Obstacle(o), m, DirectionGrid::new(16, 1.5 * PI)).unwrap().with_nodes(64)
}

#[test]
fn backpropagation_locates_a_small_scatterer() {
    let scene = small_disk(Point::ORIGIN);
    let model = ForwardModel::new(&scene).unwrap();
    let angles = equispaced_angles(64);
    let ffs: Vec<FarField> = scene
        .directions
        .directions()
        .iter()
        .map(|&d| model.farfield(&scene.incident(d), &angles).unwrap())
        .collect();
    let grid = SearchGrid::new(Point::ORIGIN, 4.0, 64).unwrap();
    let map = backpropagate(&ffs, &grid).unwrap();
    let z = map.argmax_point();
    assert!(z.norm() <= grid.cell_size() * 2f64.sqrt(), "argmax at {z:?}");
    assert!(map.values.iter().all(|v| *v >= 0.0));
}

#[test]
fn far_fields_from_phased_fields_match_the_solver() {
    let scene = small_disk(Point::new(1.0, 0.0));
    let fields = PhasedFields::compute(&scene).unwrap();
    let angles = equispaced_angles(16);
    let ffs = farfields_from_fields(&fields, Point::new(1.0, 0.0), 0.1 * 2f64.sqrt(), &angles).unwrap();
    let model = ForwardModel::new(&scene).unwrap();
    for (d, ff) in fields.directions.iter().zip(&ffs) {
        let want = model.farfield(&scene.incident(*d), &angles).unwrap();
        let err = common::rel_err(&ff.values, &want.values);
        assert!(err <= 1e-6, "error {err:.3e}");
    }
}

#[test]
fn indicator_csv_reports_the_argmax() {
    let ff = FarField {
        k: 1.0,
        angles: equispaced_angles(8),
        values: vec![Complex64::new(1.0, 0.0); 8],
    };
    let grid = SearchGrid::new(Point::ORIGIN, 2.0, 5).unwrap();
    let map = backpropagate(&[ff], &grid).unwrap();
    assert_eq!(map.argmax, (2, 2));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("indicator.csv");
    map.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let header: serde_json::Value = serde_json::from_str(text.lines().next().unwrap().strip_prefix('#').unwrap()).unwrap();
    assert_eq!(header["argmax"], serde_json::json!([2, 2]));
    assert_eq!(text.lines().nth(1).unwrap(), "row,col,z1,z2,value");
    assert_eq!(text.lines().count(), 2 + 25);
}

#[test]
fn mismatched_far_fields_are_rejected() {
    let a = FarField {
        k: 1.0,
        angles: equispaced_angles(8),
        values: vec![Complex64::new(1.0, 0.0); 8],
    };
    let b = FarField {
        angles: equispaced_angles(6),
        values: vec![Complex64::new(1.0, 0.0); 6],
        ..a.clone()
    };
    let grid = SearchGrid::new(Point::ORIGIN, 1.0, 4).unwrap();
    assert!(backpropagate(&[a, b], &grid).is_err());
    assert!(backpropagate(&[], &grid).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]
    #[test]
    fn far_field_transform_is_linear(
        re in prop::collection::vec(-1.0f64..1.0, 10),
        im in prop::collection::vec(-1.0f64..1.0, 10),
        s in -2.0f64..2.0,
    ) {
        let k = 1.1;
        let a: Vec<Complex64> = re[..5].iter().zip(&im[..5]).map(|(x, y)| Complex64::new(*x, *y)).collect();
        let b: Vec<Complex64> = re[5..].iter().zip(&im[5..]).map(|(x, y)| Complex64::new(*x, *y)).collect();
        let sum: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x + y * s).collect();
        let angles = equispaced_angles(7);
        let f = |c: Vec<Complex64>| expansion_to_farfield(&RadiatingExpansion::new(k, Point::new(0.3, 0.1), 1.0, c).unwrap(), &angles).values;
        let (fa, fb, fs) = (f(a), f(b), f(sum));
        for i in 0..angles.len() {
            prop_assert!((fs[i] - fa[i] - fb[i] * s).norm() <= 1e-13);
        }
    }
}
