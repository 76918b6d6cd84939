mod common;

use common::enumerate_assignments;
use jdtvb::assoc::{bethe_entropy, run_lbp, AssignmentProblem, LbpOptions, Pair};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dense(rng: &mut ChaCha8Rng, nt: usize, ne: usize) -> AssignmentProblem<f64> {
    let mut chi = DMatrix::from_fn(nt + 1, ne + 1, |_, _| rng.random_range(-5.0..5.0));
    chi[(0, 0)] = 0.0;
    AssignmentProblem::from_dense(&chi)
}

fn max_error(p: &AssignmentProblem<f64>) -> f64 {
    let m = run_lbp(p, &LbpOptions::default()).unwrap();
    let (miss, clutter, pairs, _) = enumerate_assignments(p);
    let err = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    err(&m.miss, &miss).max(err(&m.clutter, &clutter)).max(err(&m.pairs, &pairs))
}

#[test]
fn one_by_one_matches_enumeration() {
    let (c11, c01) = (0.4, 2.0f64.ln() - 3.0);
    let p = AssignmentProblem::new(1, 1, c01, vec![Pair { target: 0, meas: 0, chi: c11 }]);
    let m = run_lbp(&p, &LbpOptions::default()).unwrap();
    let expected = c11.exp() / (c11.exp() + c01.exp());
    assert!((m.pairs[0] - expected).abs() < 1e-14);
    assert!(max_error(&p) < 1e-14);
}

#[test]
fn tree_instances_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=6 {
        for (nt, ne) in [(1, n), (n, 1)] {
            let p = random_dense(&mut rng, nt, ne);
            assert!(max_error(&p) < 1e-12, "{nt}x{ne}");
        }
    }
}

#[test]
fn sparse_tree_is_exact() {
    // chain t0-m0-t1-m1-t2
    let pairs = vec![
        Pair { target: 0, meas: 0, chi: 1.0 },
        Pair { target: 1, meas: 0, chi: 0.5 },
        Pair { target: 1, meas: 1, chi: 2.0 },
        Pair { target: 2, meas: 1, chi: -0.5 },
    ];
    let p = AssignmentProblem::new(3, 2, -1.0, pairs);
    assert!(max_error(&p) < 1e-12);
}

#[test]
fn loopy_marginals_are_close_and_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (nt, ne) in [(3, 3), (4, 4), (2, 3)] {
        let p = random_dense(&mut rng, nt, ne);
        let m = run_lbp(&p, &LbpOptions::default()).unwrap();
        assert!(m.max_constraint_violation(&p) < 1e-9);
        assert!(max_error(&p) < 0.2, "{nt}x{ne}");
    }
}

#[test]
fn bethe_entropy_below_exact_on_two_by_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let p = random_dense(&mut rng, 2, 2);
        // the bound is a property of the entropy functional, so evaluate it
        // at the exact marginals
        let mut m = run_lbp(&p, &LbpOptions::default()).unwrap();
        let (miss, clutter, pairs, exact) = enumerate_assignments(&p);
        (m.miss, m.clutter, m.pairs) = (miss, clutter, pairs);
        assert!(bethe_entropy(&p, &m) <= exact + 1e-12);
    }
}

