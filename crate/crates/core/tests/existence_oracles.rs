mod common;

use common::enumerate_chain;
use jdtvb::existence::{decide_tracks, forward_backward, MetaModel, TrackStatus};
use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_chain(rng: &mut ChaCha8Rng) -> (MetaModel<f64>, Vec<[f64; 2]>) {
    let (a, b) = (rng.random_range(0.01..0.99), rng.random_range(0.01..0.99));
    let m = MetaModel::new(rng.random_range(0.0..1.0), Matrix2::new(1.0 - a, a, b, 1.0 - b), 0.6, 0.85).unwrap();
    let k = rng.random_range(1..=8);
    let ev = (0..k).map(|_| [rng.random_range(0.01..3.0), rng.random_range(0.01..3.0)]).collect();
    (m, ev)
}

#[test]
fn forward_backward_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let (m, b) = random_chain(&mut rng);
        let post = forward_backward(&m, &b).unwrap();
        let ta = [[m.transition[(0, 0)], m.transition[(0, 1)]], [m.transition[(1, 0)], m.transition[(1, 1)]]];
        let exact = enumerate_chain(m.initial, ta, &b);
        for (q, e) in post.marginals.iter().zip(&exact) {
            assert!((q[1] - e).abs() < 1e-12);
            assert!((q[0] + q[1] - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn posterior_invariant_to_evidence_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let (m, b) = random_chain(&mut rng);
        let scaled: Vec<_> = b.iter().map(|e| {
            let c = rng.random_range(0.1..10.0);
            [e[0] * c, e[1] * c]
        }).collect();
        let p = forward_backward(&m, &b).unwrap();
        let s = forward_backward(&m, &scaled).unwrap();
        for (x, y) in p.marginals.iter().zip(&s.marginals) {
            assert!((x[1] - y[1]).abs() < 1e-12);
        }
    }
}

#[test]
fn decisions_are_monotone_in_q() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..500 {
        let q: Vec<f64> = (0..12).map(|_| rng.random_range(0.0..1.0)).collect();
        let (d, _, _) = decide_tracks(&q, 0.6, 0.85, TrackStatus::Tentative);
        let k = rng.random_range(0..12);
        let mut raised = q.clone();
        raised[k] = rng.random_range(q[k]..=1.0);
        let (d2, _, _) = decide_tracks(&raised, 0.6, 0.85, TrackStatus::Tentative);
        if d[k] {
            assert!(d2[k]);
        }
    }
}
