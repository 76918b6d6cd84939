//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use jdtvb::assoc::AssignmentProblem;
use jdtvb::smoothing::Dynamics;
use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact marginals by enumerating every valid assignment.
/// Returns (miss per target, clutter per measurement, pair marginals, joint entropy).
pub fn enumerate_assignments(p: &AssignmentProblem<f64>) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
    let nt = p.chi_miss.len();
    let ne = p.chi_clutter.len();
    let mut configs: Vec<(Vec<Option<usize>>, f64)> = Vec::new();
    let mut choice = vec![None; nt];
    fn rec(
        i: usize,
        p: &AssignmentProblem<f64>,
        used: &mut Vec<bool>,
        choice: &mut Vec<Option<usize>>,
        out: &mut Vec<(Vec<Option<usize>>, f64)>,
    ) {
        if i == choice.len() {
            let mut lw = 0.0;
            for (t, c) in choice.iter().enumerate() {
                lw += match c {
                    None => p.chi_miss[t],
                    Some(e) => p.pairs[*e].chi,
                };
            }
            for (j, u) in used.iter().enumerate() {
                if !u {
                    lw += p.chi_clutter[j];
                }
            }
            out.push((choice.clone(), lw));
            return;
        }
        choice[i] = None;
        rec(i + 1, p, used, choice, out);
        for (e, pr) in p.pairs.iter().enumerate() {
            if pr.target == i && !used[pr.meas] {
                used[pr.meas] = true;
                choice[i] = Some(e);
                rec(i + 1, p, used, choice, out);
                used[pr.meas] = false;
            }
        }
        choice[i] = None;
    }
    let mut used = vec![false; ne];
    rec(0, p, &mut used, &mut choice, &mut configs);
    let top = configs.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = configs.iter().map(|c| (c.1 - top).exp()).sum();
    let mut miss = vec![0.0; nt];
    let mut clutter = vec![1.0; ne];
    let mut pairs = vec![0.0; p.pairs.len()];
    let mut entropy = 0.0;
    for (c, lw) in &configs {
        let pr = (lw - top).exp() / z;
        entropy -= if pr > 0.0 { pr * pr.ln() } else { 0.0 };
        for (t, ch) in c.iter().enumerate() {
            match ch {
                None => miss[t] += pr,
                Some(e) => {
                    pairs[*e] += pr;
                    clutter[p.pairs[*e].meas] -= pr;
                }
            }
        }
    }
    (miss, clutter, pairs, entropy)
}

/// Exact two-state chain posteriors by enumerating all 2^K sequences.
pub fn enumerate_chain(initial: [f64; 2], ta: [[f64; 2]; 2], b: &[[f64; 2]]) -> Vec<f64> {
    let k = b.len();
    let mut q = vec![0.0; k];
    let mut z = 0.0;
    for mask in 0u32..(1 << k) {
        let s = |t: usize| ((mask >> t) & 1) as usize;
        let mut w = initial[s(0)] * b[0][s(0)];
        for t in 1..k {
            w *= ta[s(t - 1)][s(t)] * b[t][s(t)];
        }
        z += w;
        for (t, qt) in q.iter_mut().enumerate() {
            if s(t) == 1 {
                *qt += w;
            }
        }
    }
    q.iter().map(|v| v / z).collect()
}

/// Textbook Kalman filter + RTS smoother for a linear measurement.
pub fn linear_kf_rts(
    f: &Matrix4<f64>,
    q: &Matrix4<f64>,
    h: &Matrix2x4<f64>,
    ys: &[Option<(Vector2<f64>, Matrix2<f64>)>],
    x0: Vector4<f64>,
    p0: Matrix4<f64>,
) -> (Vec<(Vector4<f64>, Matrix4<f64>)>, Vec<(Vector4<f64>, Matrix4<f64>)>) {
    let mut filt = Vec::new();
    let mut pred = Vec::new();
    let (mut x, mut p) = (x0, p0);
    for (k, y) in ys.iter().enumerate() {
        if k > 0 {
            x = f * x;
            p = f * p * f.transpose() + q;
        }
        pred.push((x, p));
        if let Some((y, r)) = y {
            let s = h * p * h.transpose() + r;
            let k_gain = p * h.transpose() * s.try_inverse().unwrap();
            x += k_gain * (y - h * x);
            p = (Matrix4::identity() - k_gain * h) * p;
        }
        filt.push((x, p));
    }
    let mut smooth = filt.clone();
    for k in (0..ys.len() - 1).rev() {
        let g = filt[k].1 * f.transpose() * pred[k + 1].1.try_inverse().unwrap();
        let x = filt[k].0 + g * (smooth[k + 1].0 - pred[k + 1].0);
        let p = filt[k].1 + g * (smooth[k + 1].1 - pred[k + 1].1) * g.transpose();
        smooth[k] = (x, p);
    }
    (filt, smooth)
}

/// Linear CV system observed in range and range rate, with a few missing scans.
pub fn linear_setup(seed: u64) -> (Dynamics<f64, 4>, Vec<Option<(Vector2<f64>, Matrix2<f64>)>>, Vector4<f64>, Matrix4<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = Matrix4::identity();
    f[(0, 1)] = 16.0;
    f[(2, 3)] = 16.0;
    let q = Matrix4::from_diagonal(&Vector4::new(8e-6, 1e-6, 1e-6, 1e-7));
    let r = Matrix2::new(25.0, 0.0, 0.0, 1e-6);
    let mut x = Vector4::new(1700.0, 0.1, 0.48, 8.7e-5);
    let mut ys = Vec::new();
    for k in 0..30 {
        let y = Vector2::new(x[0] + rng.random_range(-5.0..5.0), x[1] + rng.random_range(-1e-3..1e-3));
        // a few missing scans
        ys.push(if k % 7 == 3 { None } else { Some((y, r * (1.0 + (k % 3) as f64))) });
        x = f * x;
    }
    let p0 = Matrix4::from_diagonal(&Vector4::new(25.0, 1e-4, 1e-4, 1e-8));
    (Dynamics { f, q }, ys, Vector4::new(1690.0, 0.05, 0.47, 8e-5), p0)
}
