use jdtvb::models::{
    jacobian_vector, measure_vector, numerical_jacobian, slant_measure, standard_path_table, GroundState,
    MotionModel, SensorGeometry, StateVector,
};
use jdtvb::sim::{generate_clutter, generate_detections, generate_truth, simulate, Provenance, ScenarioConfig};
use nalgebra::Matrix3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn geom(d: f64) -> SensorGeometry<f64> {
    SensorGeometry::new(d, vec![Matrix3::identity(); 4]).unwrap()
}

#[test]
fn ff_measurement_matches_extended_precision_reference() {
    // 40-digit evaluation of the slant-range, range-rate and azimuth formulas
    const R: f64 = 1756.832358056734334290697;
    const R_DOT: f64 = 0.09544871250575432413439343;
    const ZETA: f64 = 0.4573621258485349046063321;
    let paths = standard_path_table(100.0, 260.0, 0.5).unwrap();
    let y = slant_measure(&GroundState::new(1700.0, 0.1, 0.48, 8.7e-5), &paths[3], &geom(100.0)).unwrap();
    assert!((y.r - R).abs() / R < 1e-14);
    assert!((y.r_dot - R_DOT).abs() / R_DOT < 1e-13);
    assert!((y.zeta - ZETA).abs() / ZETA < 1e-14);
}

#[test]
fn jacobian_matches_central_differences_over_region() {
    let cfg = ScenarioConfig::canonical();
    let r = &cfg.region;
    let paths = cfg.paths().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x = StateVector::new(
            rng.random_range(r.range[0]..r.range[1]),
            rng.random_range(-0.5..0.5),
            rng.random_range(r.azimuth[0]..r.azimuth[1]),
            rng.random_range(-2e-4..2e-4),
        );
        let p = &paths[rng.random_range(0..paths.len())];
        let a = jacobian_vector(&x, p.h_t, p.h_r, cfg.geometry.baseline).unwrap();
        let n = numerical_jacobian(&x, p.h_t, p.h_r, cfg.geometry.baseline).unwrap();
        for (u, v) in a.iter().zip(n.iter()) {
            // entries that vanish analytically are compared absolutely
            let scale = u.abs().max(v.abs());
            let err = if scale > 1e-9 { (u - v).abs() / scale } else { (u - v).abs() };
            worst = worst.max(err);
        }
    }
    assert!(worst < 1e-5, "worst relative error {worst:e}");
}

proptest! {
    #[test]
    fn zero_baseline_swap_symmetry(g in 1500.0f64..2000.0, gd in -0.5f64..0.5, th in 0.0f64..1.2) {
        let x = StateVector::new(g, gd, th, 0.0);
        let ef = measure_vector(&x, 100.0, 260.0, 0.0).unwrap();
        let fe = measure_vector(&x, 260.0, 100.0, 0.0).unwrap();
        prop_assert!((ef[0] - fe[0]).abs() < 1e-9);
        prop_assert!((ef[1] - fe[1]).abs() < 1e-12);
        // azimuth depends on the receive height only
        let ee = measure_vector(&x, 100.0, 100.0, 0.0).unwrap();
        prop_assert!((fe[2] - ee[2]).abs() < 1e-14);
        prop_assert!(ef[0] >= g && fe[0] >= g);
    }

    #[test]
    fn propagation_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0,
                             x1 in prop::array::uniform4(-10.0f64..10.0), x2 in prop::array::uniform4(-10.0f64..10.0)) {
        let m = MotionModel::constant_velocity(16.0, nalgebra::Matrix4::identity() * 1e-6).unwrap();
        let (x1, x2) = (StateVector::from(x1), StateVector::from(x2));
        let lhs = m.f * (x1 * a + x2 * b);
        let rhs = (m.f * x1) * a + (m.f * x2) * b;
        prop_assert!((lhs - rhs).amax() < 1e-9);
    }
}

#[test]
fn clutter_count_and_spread() {
    let cfg = ScenarioConfig::canonical();
    let n = 400;
    let mut count = 0usize;
    let mut mean_r = 0.0;
    for k in 0..n {
        let c = generate_clutter(&cfg, k).unwrap();
        count += c.len();
        mean_r += c.iter().map(|m| m.r).sum::<f64>();
    }
    mean_r /= count as f64;
    // Poisson(100) mean over 400 scans has standard error 0.5
    let avg = count as f64 / n as f64;
    assert!((avg - 100.0).abs() < 2.5, "mean clutter count {avg}");
    // uniform on [1500, 2000]: standard error of the mean about 0.36 km
    assert!((mean_r - 1750.0).abs() < 2.0, "mean clutter range {mean_r}");
}

#[test]
fn detection_rate_matches_p_d() {
    let cfg = ScenarioConfig::canonical();
    let truth = generate_truth(&cfg).unwrap();
    let (mut detected, mut opportunities) = (0usize, 0usize);
    for k in 0..cfg.scans {
        opportunities += 4 * truth.iter().filter(|t| t.alive(k)).count();
        detected += generate_detections(&truth, &cfg, k).unwrap().len();
    }
    let rate = detected as f64 / opportunities as f64;
    // 4 paths x 106 target-scans; binomial standard error about 0.024
    assert!((rate - 0.5).abs() < 0.08, "detection rate {rate}");
}

#[test]
fn seeds_change_measurements_not_truth_windows() {
    let mut cfg = ScenarioConfig::canonical();
    let a = simulate(&cfg).unwrap();
    cfg.seed += 1;
    let b = simulate(&cfg).unwrap();
    assert_ne!(a.scans, b.scans);
    for (x, y) in a.truth.iter().zip(&b.truth) {
        assert_eq!((x.birth, x.death), (y.birth, y.death));
    }
    let targets = a.scans.iter().flat_map(|s| &s.provenance).filter(|p| matches!(p, Provenance::Target { .. })).count();
    assert!(targets > 0);
}
