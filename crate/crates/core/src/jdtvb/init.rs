//! Track-head initialization by multipath clustering.
//!
//! Scans are processed in order. Existing heads are extended first with a
//! gated nearest-neighbour update per path; measurements left outside every
//! head's gates are clustered (pairwise within `rho`), every assignment of
//! distinct paths to a cluster is fitted by Gauss-Newton in ground
//! coordinates, and consistent hypotheses spawn new heads. Heads carry a
//! forward existence filter; heads that never reach `delta_s` are pruned and
//! heads that mostly reuse another head's measurements are dropped.

use nalgebra::{Matrix3, Vector3};

use super::VbConfig;
use crate::error::{Error, Result};
use crate::existence::{observation_factor, xi_evidence};
use crate::models::{jacobian_vector, measure_vector, MeasVector, StateMatrix, StateVector};
use crate::sim::ScanData;
use crate::smoothing::{symmetrize, unscented_transform};

/// Heads whose forward existence drops below this stop being extended.
pub const HEAD_DROP: f64 = 0.15;
/// Fraction of shared measurements above which two heads conflict.
pub const CONFLICT_SHARE: f64 = 0.5;
/// Alternative path hypotheses kept per cluster.
pub const MAX_HYPOTHESES: usize = 3;
/// Nearest neighbours considered per cluster seed.
const MAX_NEIGHBOURS: usize = 5;
/// Acceptance quantile of the cluster consistency test.
pub const CONSISTENCY_QUANTILE: f64 = 0.99;

/// A candidate track produced by the initializer.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    /// First scan (0-based).
    pub start: usize,
    /// One past the last extended scan.
    pub end: usize,
    /// Initial state and covariance at `start`, before any update.
    pub init: (StateVector<f64>, StateMatrix<f64>),
    /// Filtered moments for scans `start..end`.
    pub filtered: Vec<(StateVector<f64>, StateMatrix<f64>)>,
    /// Forward existence probability for scans `start..end`.
    pub q: Vec<f64>,
    /// `(scan, path, measurement)` associations.
    pub assoc: Vec<(usize, usize, usize)>,
    /// Log-likelihood ratio against the clutter-only hypothesis.
    pub score: f64,
    /// Still being extended.
    pub open: bool,
}

/// Result of [`initialize_heads`].
#[derive(Debug, Clone, PartialEq)]
pub struct InitReport {
    pub heads: Vec<Head>,
    /// Heads created before pruning.
    pub spawned: usize,
    /// Heads surviving the existence prune (before conflict removal).
    pub after_prune: usize,
    /// Removed heads with the reason.
    pub discarded: Vec<(Head, Discard)>,
}

/// Why the initializer dropped a head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discard {
    /// Existence never reached the pruning threshold.
    Weak,
    /// Mostly reuses the measurements of a higher-scoring head.
    Conflict,
}

struct Fit {
    state: StateVector<f64>,
    chi2: f64,
}

/// Gauss-Newton fit of `(g, g_dot, theta)` (with zero bearing rate) to
/// measurements observed along the given paths.
fn fit_hypothesis(ys: &[(MeasVector<f64>, usize)], cfg: &VbConfig) -> Option<Fit> {
    let d = cfg.geometry.baseline;
    let mut acc = Vector3::zeros();
    for (y, tau) in ys {
        let p = &cfg.paths[*tau];
        let (g, gd, th) = crate::models::back_project(y, p.h_t, p.h_r, d).ok()?;
        acc += Vector3::new(g, gd, th);
    }
    let mut v = acc / ys.len() as f64;
    let weights: Vec<Matrix3<f64>> = ys.iter().map(|(_, tau)| cfg.r_inv[*tau]).collect();
    let mut chi2 = f64::INFINITY;
    for _ in 0..8 {
        let x = StateVector::new(v[0], v[1], v[2], 0.0);
        let mut lhs = Matrix3::zeros();
        let mut rhs = Vector3::zeros();
        chi2 = 0.0;
        for ((y, tau), w) in ys.iter().zip(&weights) {
            let p = &cfg.paths[*tau];
            let e = y - measure_vector(&x, p.h_t, p.h_r, d).ok()?;
            let j = jacobian_vector(&x, p.h_t, p.h_r, d).ok()?.fixed_columns::<3>(0).into_owned();
            lhs += j.transpose() * w * j;
            rhs += j.transpose() * w * e;
            chi2 += (e.transpose() * w * e)[(0, 0)];
        }
        let step = lhs.try_inverse()? * rhs;
        v += step;
        if step[0].abs() < 1e-6 && step[2].abs() < 1e-10 {
            break;
        }
    }
    let x = StateVector::new(v[0], v[1], v[2], 0.0);
    let mut final_chi2 = 0.0;
    for ((y, tau), w) in ys.iter().zip(&weights) {
        let p = &cfg.paths[*tau];
        let e = y - measure_vector(&x, p.h_t, p.h_r, d).ok()?;
        final_chi2 += (e.transpose() * w * e)[(0, 0)];
    }
    chi2 = chi2.min(final_chi2);
    (x.iter().all(|c| c.is_finite()) && x[0] > 0.0).then_some(Fit { state: x, chi2 })
}

/// Ordered selections of `j` distinct paths out of `n`.
fn path_permutations(n: usize, j: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, j: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == j {
            out.push(cur.clone());
            return;
        }
        for t in 0..n {
            if !cur.contains(&t) {
                cur.push(t);
                rec(n, j, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(n, j, &mut Vec::new(), &mut out);
    out
}

fn subsets_with(seed: usize, others: &[usize], max_extra: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let n = others.len();
    for mask in 1u32..(1 << n) {
        if mask.count_ones() as usize > max_extra {
            continue;
        }
        let mut s = vec![seed];
        s.extend((0..n).filter(|b| mask >> b & 1 == 1).map(|b| others[b]));
        out.push(s);
    }
    out
}

struct Hypothesis {
    members: Vec<usize>,
    paths: Vec<usize>,
    state: StateVector<f64>,
    score: f64,
}

fn within_rho(a: &MeasVector<f64>, b: &MeasVector<f64>, rho: &[f64; 3]) -> bool {
    (0..3).all(|c| (a[c] - b[c]).abs() <= rho[c])
}

/// Consistent path hypotheses for clusters of free measurements in one scan.
fn cluster_hypotheses(ys: &[MeasVector<f64>], free: &[bool], cfg: &VbConfig) -> Vec<Hypothesis> {
    let n_paths = cfg.paths.len();
    let mut hyps = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for i in (0..ys.len()).filter(|&i| free[i]) {
        let mut nb: Vec<usize> =
            (0..ys.len()).filter(|&j| j != i && free[j] && within_rho(&ys[i], &ys[j], &cfg.rho)).collect();
        let dist = |j: usize| (0..3).map(|c| ((ys[i][c] - ys[j][c]) / cfg.rho[c]).powi(2)).sum::<f64>();
        nb.sort_by(|&a, &b| dist(a).total_cmp(&dist(b)));
        nb.truncate(MAX_NEIGHBOURS);
        for mut members in subsets_with(i, &nb, n_paths - 1) {
            members.sort_unstable();
            if !seen.insert(members.clone()) {
                continue;
            }
            let clique = members.iter().all(|&a| members.iter().all(|&b| within_rho(&ys[a], &ys[b], &cfg.rho)));
            if !clique {
                continue;
            }
            let j = members.len();
            let limit = cfg.consistency_threshold[j];
            for paths in path_permutations(n_paths, j) {
                let obs: Vec<_> = members.iter().zip(&paths).map(|(&m, &t)| (ys[m], t)).collect();
                let Some(fit) = fit_hypothesis(&obs, cfg) else { continue };
                if fit.chi2 > limit {
                    continue;
                }
                let score = paths.iter().map(|&t| cfg.detect_score[t]).sum::<f64>()
                    + (0..n_paths).filter(|t| !paths.contains(t)).map(|t| cfg.miss_score[t]).sum::<f64>()
                    - 0.5 * fit.chi2;
                hyps.push(Hypothesis { members: members.clone(), paths, state: fit.state, score });
            }
        }
    }
    hyps
}

/// Per-path predicted measurement moments of a head state.
fn predict_paths(
    x: &StateVector<f64>,
    p: &StateMatrix<f64>,
    cfg: &VbConfig,
) -> Option<Vec<(MeasVector<f64>, Matrix3<f64>, nalgebra::SMatrix<f64, 4, 3>)>> {
    cfg.paths
        .iter()
        .enumerate()
        .map(|(t, path)| {
            let h = |s: &StateVector<f64>| measure_vector(s, path.h_t, path.h_r, cfg.geometry.baseline);
            let (y, pyy, pxy) = unscented_transform(x, p, &h, &cfg.ut).ok()?;
            Some((y, symmetrize(&(pyy + cfg.geometry.noise[t])), pxy))
        })
        .collect()
}

fn existence_step(q_prev: Option<f64>, detected: &[bool], cfg: &VbConfig) -> f64 {
    let n = detected.len() as f64;
    let w = vec![1.0 / n; detected.len()];
    let miss: Vec<f64> = detected.iter().map(|&d| if d { 0.0 } else { 1.0 }).collect();
    let xi = xi_evidence(&w, &miss, [&cfg.p_d_dormant, &cfg.p_d_active]);
    let b = observation_factor(xi, cfg.evidence);
    let prior = match q_prev {
        None => cfg.meta.initial,
        Some(q) => {
            let t = &cfg.meta.transition;
            [(1.0 - q) * t[(0, 0)] + q * t[(1, 0)], (1.0 - q) * t[(0, 1)] + q * t[(1, 1)]]
        }
    };
    let (a0, a1) = (prior[0] * b[0], prior[1] * b[1]);
    a1 / (a0 + a1)
}

impl Head {
    fn last(&self) -> &(StateVector<f64>, StateMatrix<f64>) {
        self.filtered.last().expect("heads are created with one scan")
    }

    /// Extends the head into scan `k`; returns the indices it gated.
    fn extend(&mut self, k: usize, ys: &[MeasVector<f64>], cfg: &VbConfig) -> Vec<usize> {
        let (x0, p0) = *self.last();
        let mut x = cfg.motion.f * x0;
        let mut p = symmetrize(&(cfg.motion.f * p0 * cfg.motion.f.transpose() + cfg.motion.q));
        let Some(pred) = predict_paths(&x, &p, cfg) else {
            self.open = false;
            return Vec::new();
        };
        let mut gated = Vec::new();
        let mut cands = Vec::new();
        for (t, (y_hat, s, _)) in pred.iter().enumerate() {
            let Some(s_inv) = s.try_inverse() else { continue };
            for (j, y) in ys.iter().enumerate() {
                let e = y - y_hat;
                let dist = (e.transpose() * s_inv * e)[(0, 0)];
                if dist <= cfg.gate_gamma {
                    cands.push((dist, t, j));
                    gated.push(j);
                }
            }
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut used_paths = vec![false; cfg.paths.len()];
        let mut used_meas = std::collections::HashSet::new();
        let mut detected = vec![false; cfg.paths.len()];
        for &(_, t, j) in &cands {
            if used_paths[t] || used_meas.contains(&j) {
                continue;
            }
            used_paths[t] = true;
            used_meas.insert(j);
            // sequential update against the current moments
            let path = &cfg.paths[t];
            let h = |s: &StateVector<f64>| measure_vector(s, path.h_t, path.h_r, cfg.geometry.baseline);
            let Ok((y_hat, pyy, pxy)) = unscented_transform(&x, &p, &h, &cfg.ut) else { continue };
            let s = symmetrize(&(pyy + cfg.geometry.noise[t]));
            let Some(s_inv) = s.try_inverse() else { continue };
            let gain = pxy * s_inv;
            let e = ys[j] - y_hat;
            x += gain * e;
            p = symmetrize(&(p - gain * s * gain.transpose()));
            let log_det = s.determinant().ln();
            self.score += cfg.log_volume + cfg.log_pd[t]
                - 0.5 * ((e.transpose() * s_inv * e)[(0, 0)] + log_det + 3.0 * std::f64::consts::TAU.ln());
            self.assoc.push((k, t, j));
            detected[t] = true;
        }
        for (t, &d) in detected.iter().enumerate() {
            if !d {
                self.score += cfg.log_1m_pd[t];
            }
        }
        let q = existence_step(self.q.last().copied(), &detected, cfg);
        self.filtered.push((x, p));
        self.q.push(q);
        self.end = k + 1;
        gated
    }
}

/// Builds, extends, prunes and de-duplicates track heads over all scans.
pub fn initialize_heads(scans: &[ScanData], cfg: &VbConfig) -> InitReport {
    let mut heads: Vec<Head> = Vec::new();
    let mut spawned = 0;
    for scan in scans {
        let k = scan.k;
        let ys = scan.vectors();
        let mut free = vec![true; ys.len()];
        for h in heads.iter_mut().filter(|h| h.open && h.end == k) {
            let gated = h.extend(k, &ys, cfg);
            let q = h.q.last().copied().unwrap_or(0.0);
            // only established heads claim their gates; a young head may be a
            // wrong-path ghost and must not block the correct hypothesis
            if q >= cfg.delta_s {
                for j in gated {
                    free[j] = false;
                }
            }
            if q < HEAD_DROP {
                h.open = false;
            }
        }

        let mut hyps = cluster_hypotheses(&ys, &free, cfg);
        hyps.sort_by(|a, b| b.score.total_cmp(&a.score));
        let mut consumed = vec![false; ys.len()];
        let mut accepted: Vec<(Vec<usize>, f64, usize)> = Vec::new();
        for hyp in hyps {
            let same = accepted.iter_mut().find(|a| a.0 == hyp.members);
            match same {
                Some(a) => {
                    if a.2 >= MAX_HYPOTHESES || hyp.score < a.1 - cfg.hypothesis_margin {
                        continue;
                    }
                    a.2 += 1;
                }
                None => {
                    if hyp.members.iter().any(|&m| consumed[m]) {
                        continue;
                    }
                    accepted.push((hyp.members.clone(), hyp.score, 1));
                }
            }
            for &m in &hyp.members {
                consumed[m] = true;
            }
            let p0 = cfg.initial_cov;
            let mut head = Head {
                start: k,
                end: k + 1,
                init: (hyp.state, p0),
                filtered: Vec::new(),
                q: Vec::new(),
                assoc: Vec::new(),
                score: 0.0,
                open: true,
            };
            // condition the head on its own cluster
            let (mut x, mut p) = (hyp.state, p0);
            let mut detected = vec![false; cfg.paths.len()];
            for (&m, &t) in hyp.members.iter().zip(&hyp.paths) {
                let path = &cfg.paths[t];
                let h = |s: &StateVector<f64>| measure_vector(s, path.h_t, path.h_r, cfg.geometry.baseline);
                if let Ok((y_hat, pyy, pxy)) = unscented_transform(&x, &p, &h, &cfg.ut) {
                    let s = symmetrize(&(pyy + cfg.geometry.noise[t]));
                    if let Some(s_inv) = s.try_inverse() {
                        let gain = pxy * s_inv;
                        x += gain * (ys[m] - y_hat);
                        p = symmetrize(&(p - gain * s * gain.transpose()));
                    }
                }
                head.assoc.push((k, t, m));
                detected[t] = true;
            }
            head.score = hyp.score;
            head.q.push(existence_step(None, &detected, cfg));
            head.filtered.push((x, p));
            heads.push(head);
            spawned += 1;
        }
    }

    let delta_s = cfg.delta_s;
    let mut discarded = Vec::new();
    let (mut heads, weak): (Vec<Head>, Vec<Head>) =
        heads.into_iter().partition(|h| h.q.iter().copied().fold(0.0, f64::max) >= delta_s);
    discarded.extend(weak.into_iter().map(|h| (h, Discard::Weak)));
    let after_prune = heads.len();

    heads.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut kept: Vec<Head> = Vec::new();
    for h in heads {
        let conflict = kept.iter().any(|o| {
            let shared = h.assoc.iter().filter(|a| o.assoc.iter().any(|b| a.0 == b.0 && a.2 == b.2)).count();
            let base = h.assoc.len().min(o.assoc.len()).max(1);
            shared as f64 / base as f64 >= CONFLICT_SHARE
        });
        if conflict {
            discarded.push((h, Discard::Conflict));
        } else {
            kept.push(h);
        }
    }
    kept.sort_by_key(|h| h.start);
    InitReport { heads: kept, spawned, after_prune, discarded }
}

/// [`initialize_heads`], reporting an empty candidate set as
/// [`Error::EmptyScenario`]. Callers treat that as a valid zero-track result.
pub fn initialize(scans: &[ScanData], cfg: &VbConfig) -> Result<InitReport> {
    let report = initialize_heads(scans, cfg);
    if report.heads.is_empty() {
        return Err(Error::EmptyScenario);
    }
    Ok(report)
}
