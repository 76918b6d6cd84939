//! Truth-to-track matching, performance metrics and the Monte-Carlo driver.
//!
//! Matching is greedy on the time-averaged normalized distance
//! `sqrt((dg / 20 km)^2 + (dtheta / 10 mrad)^2)` over the scans where the
//! track is active and the target alive; a pair is accepted when the mean is
//! at most 1. These gate widths are a convention of this crate, not a
//! property of the tracker, and they move TDSR / ANFT noticeably.

mod io;

pub use io::{read_existence_csv, read_tracks_csv, write_existence_csv, write_tracks_csv, TrackRow};

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::jdtvb::{VbConfig, VbState, VbTrack};
use crate::models::StateVector;
use crate::sim::{simulate, ScenarioConfig, TruthTrack};

/// Normalization of the match distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchGate {
    /// Ground range scale, km.
    pub range: f64,
    /// Bearing scale, rad.
    pub bearing: f64,
}

impl Default for MatchGate {
    fn default() -> Self {
        Self { range: 20.0, bearing: 0.010 }
    }
}

impl MatchGate {
    pub fn distance(&self, a: &StateVector<f64>, b: &StateVector<f64>) -> f64 {
        (((a[0] - b[0]) / self.range).powi(2) + ((a[2] - b[2]) / self.bearing).powi(2)).sqrt()
    }
}

/// Evaluation view of one track: fused state and hard decision per scan.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackEstimate {
    pub id: usize,
    pub start: usize,
    pub states: Vec<StateVector<f64>>,
    pub active: Vec<bool>,
}

impl TrackEstimate {
    pub fn from_vb(t: &VbTrack) -> Self {
        let active = if t.failed { vec![false; t.len()] } else { t.decisions.clone() };
        Self { id: t.id, start: t.start, states: t.fused.mean.clone(), active }
    }

    pub fn active_at(&self, k: usize) -> Option<&StateVector<f64>> {
        let l = k.checked_sub(self.start)?;
        (l < self.active.len() && self.active[l]).then(|| &self.states[l])
    }

    pub fn confirmed(&self) -> bool {
        self.active.iter().any(|&a| a)
    }

    pub fn active_len(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// Result of [`match_tracks`] over the confirmed tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthMatch {
    /// Ids of the confirmed tracks considered.
    pub tracks: Vec<usize>,
    /// Truth index per confirmed track, `None` for false tracks.
    pub assignment: Vec<Option<usize>>,
    /// Per confirmed track, the scans counted as matched.
    pub matched_scans: Vec<Vec<usize>>,
}

impl TruthMatch {
    pub fn matched_count(&self) -> usize {
        self.assignment.iter().flatten().count()
    }

    pub fn false_count(&self) -> usize {
        self.assignment.len() - self.matched_count()
    }

    pub fn track_for(&self, truth: usize) -> Option<usize> {
        self.assignment.iter().position(|a| *a == Some(truth))
    }
}

fn mean_distance(t: &TrackEstimate, truth: &TruthTrack, gate: &MatchGate) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for k in truth.birth..=truth.death {
        if let Some(x) = t.active_at(k) {
            sum += gate.distance(x, truth.state_at(k).expect("alive"));
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Greedy global nearest assignment of confirmed tracks to truth targets.
pub fn match_tracks(tracks: &[TrackEstimate], truth: &[TruthTrack], gate: &MatchGate) -> TruthMatch {
    let confirmed: Vec<&TrackEstimate> = tracks.iter().filter(|t| t.confirmed()).collect();
    let mut cands = Vec::new();
    for (ti, t) in confirmed.iter().enumerate() {
        for (gi, g) in truth.iter().enumerate() {
            if let Some(d) = mean_distance(t, g, gate).filter(|&d| d <= 1.0) {
                cands.push((d, ti, gi));
            }
        }
    }
    // ties broken by ids so the result does not depend on input order
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(confirmed[a.1].id.cmp(&confirmed[b.1].id)).then(a.2.cmp(&b.2)));
    let mut assignment = vec![None; confirmed.len()];
    let mut taken = vec![false; truth.len()];
    for (_, ti, gi) in cands {
        if assignment[ti].is_none() && !taken[gi] {
            assignment[ti] = Some(gi);
            taken[gi] = true;
        }
    }
    let matched_scans = confirmed
        .iter()
        .zip(&assignment)
        .map(|(t, a)| match a {
            Some(gi) => (truth[*gi].birth..=truth[*gi].death).filter(|&k| t.active_at(k).is_some()).collect(),
            None => Vec::new(),
        })
        .collect();
    TruthMatch { tracks: confirmed.iter().map(|t| t.id).collect(), assignment, matched_scans }
}

/// Metrics of one run, with the sums needed for pooling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub truth_targets: usize,
    pub matched_targets: usize,
    pub confirmed_tracks: usize,
    pub false_tracks: usize,
    /// Track length ratio per matched target.
    pub length_ratios: Vec<f64>,
    /// Active scans per false track.
    pub false_lengths: Vec<usize>,
    pub matched_scans: usize,
    pub range_sq_sum: f64,
    pub bearing_sq_sum: f64,
    /// Wall-clock seconds.
    pub runtime: f64,
}

impl RunMetrics {
    pub fn tdsr(&self) -> f64 {
        if self.truth_targets == 0 {
            return 0.0;
        }
        self.matched_targets as f64 / self.truth_targets as f64
    }

    pub fn rmser(&self) -> Option<f64> {
        (self.matched_scans > 0).then(|| (self.range_sq_sum / self.matched_scans as f64).sqrt())
    }

    /// Bearing RMSE in mrad.
    pub fn rmseb(&self) -> Option<f64> {
        (self.matched_scans > 0).then(|| 1e3 * (self.bearing_sq_sum / self.matched_scans as f64).sqrt())
    }
}

pub fn compute_metrics(m: &TruthMatch, tracks: &[TrackEstimate], truth: &[TruthTrack], runtime: f64) -> RunMetrics {
    let by_id = |id: usize| tracks.iter().find(|t| t.id == id).expect("matched ids come from the input");
    let mut out = RunMetrics {
        truth_targets: truth.len(),
        matched_targets: m.matched_count(),
        confirmed_tracks: m.tracks.len(),
        false_tracks: m.false_count(),
        length_ratios: Vec::new(),
        false_lengths: Vec::new(),
        matched_scans: 0,
        range_sq_sum: 0.0,
        bearing_sq_sum: 0.0,
        runtime,
    };
    for ((&id, a), scans) in m.tracks.iter().zip(&m.assignment).zip(&m.matched_scans) {
        let t = by_id(id);
        match a {
            Some(gi) => {
                let g = &truth[*gi];
                out.length_ratios.push(scans.len() as f64 / g.lifetime() as f64);
                for &k in scans {
                    let (x, y) = (t.active_at(k).expect("matched"), g.state_at(k).expect("alive"));
                    out.range_sq_sum += (x[0] - y[0]).powi(2);
                    out.bearing_sq_sum += (x[2] - y[2]).powi(2);
                    out.matched_scans += 1;
                }
            }
            None => out.false_lengths.push(t.active_len()),
        }
    }
    out
}

/// Aggregate over runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub tdsr: f64,
    pub atlr: f64,
    pub anft: f64,
    pub aftl: f64,
    pub rmser: Option<f64>,
    /// mrad.
    pub rmseb: Option<f64>,
    /// Mean wall-clock seconds per run.
    pub acc: f64,
    pub runs: usize,
}

impl MetricReport {
    pub fn aggregate(runs: &[RunMetrics]) -> Self {
        let n = runs.len().max(1) as f64;
        let mean = |v: Vec<f64>| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let truth: usize = runs.iter().map(|r| r.truth_targets).sum();
        let matched: usize = runs.iter().map(|r| r.matched_targets).sum();
        let scans: usize = runs.iter().map(|r| r.matched_scans).sum();
        let rsq: f64 = runs.iter().map(|r| r.range_sq_sum).sum();
        let bsq: f64 = runs.iter().map(|r| r.bearing_sq_sum).sum();
        Self {
            tdsr: if truth == 0 { 0.0 } else { matched as f64 / truth as f64 },
            atlr: mean(runs.iter().flat_map(|r| r.length_ratios.iter().copied()).collect()),
            anft: runs.iter().map(|r| r.false_tracks as f64).sum::<f64>() / n,
            aftl: mean(runs.iter().flat_map(|r| r.false_lengths.iter().map(|&l| l as f64)).collect()),
            rmser: (scans > 0).then(|| (rsq / scans as f64).sqrt()),
            rmseb: (scans > 0).then(|| 1e3 * (bsq / scans as f64).sqrt()),
            acc: runs.iter().map(|r| r.runtime).sum::<f64>() / n,
            runs: runs.len(),
        }
    }
}

/// Mean `q(s = 1)` of matched tracks over their targets' lifetimes.
pub fn mean_true_existence(m: &TruthMatch, tracks: &[VbTrack], truth: &[TruthTrack]) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for (&id, a) in m.tracks.iter().zip(&m.assignment) {
        let (Some(gi), Some(t)) = (a, tracks.iter().find(|t| t.id == id)) else { continue };
        for k in truth[*gi].birth..=truth[*gi].death {
            if let Some(l) = t.local(k) {
                sum += t.q[l];
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Fused range / bearing (mrad) RMSE of `tracks` over the matched scans of
/// `m`, so estimates from different iterations can be compared on the same
/// scan set.
pub fn rmse_on_match(m: &TruthMatch, tracks: &[VbTrack], truth: &[TruthTrack]) -> Option<(f64, f64)> {
    let (mut r, mut b, mut n) = (0.0, 0.0, 0usize);
    for ((&id, a), scans) in m.tracks.iter().zip(&m.assignment).zip(&m.matched_scans) {
        let (Some(gi), Some(t)) = (a, tracks.iter().find(|t| t.id == id)) else { continue };
        for &k in scans {
            let (Some(l), Some(y)) = (t.local(k), truth[*gi].state_at(k)) else { continue };
            let x = &t.fused.mean[l];
            r += (x[0] - y[0]).powi(2);
            b += (x[2] - y[2]).powi(2);
            n += 1;
        }
    }
    (n > 0).then(|| ((r / n as f64).sqrt(), 1e3 * (b / n as f64).sqrt()))
}

/// Invariant violations found in one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct InvariantReport {
    pub checks: usize,
    pub violations: Vec<String>,
}

impl InvariantReport {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.violations.push(what());
        }
    }
}

/// Marginal sums, probability ranges, path-weight normalization and
/// covariance symmetry / definiteness of a tracker state.
pub fn check_invariants(state: &VbState<'_>) -> InvariantReport {
    let mut rep = InvariantReport::default();
    for a in &state.assoc {
        rep.check(a.max_violation <= 1e-9, || format!("scan {} path {}: marginal sums off by {:e}", a.scan, a.path, a.max_violation));
    }
    for t in state.tracks.iter().filter(|t| !t.failed) {
        rep.check(t.q.iter().all(|q| (0.0..=1.0).contains(q)), || format!("track {}: q outside [0, 1]", t.id));
        for (l, w) in t.path_weights.iter().enumerate() {
            let s: f64 = w.iter().sum();
            rep.check((s - 1.0).abs() <= 1e-9 && w.iter().all(|&v| v >= 0.0), || {
                format!("track {} scan {}: path weights sum to {s}", t.id, t.start + l)
            });
        }
        for m in t.miss.iter().flatten() {
            rep.check((0.0..=1.0 + 1e-12).contains(m), || format!("track {}: miss marginal {m}", t.id));
        }
        let covs = t.paths.iter().flat_map(|p| p.cov.iter()).chain(&t.fused.cov);
        for p in covs {
            let asym = (p - p.transpose()).amax();
            rep.check(asym <= 1e-9 * p.amax().max(1e-300), || format!("track {}: asymmetric covariance ({asym:e})", t.id));
            rep.check(p.cholesky().is_some(), || format!("track {}: covariance not positive definite", t.id));
        }
    }
    rep.check(state.bound_history.iter().all(|b| b.is_finite()), || "non-finite bound".into());
    rep
}

/// One Monte-Carlo run evaluated after the first and the final iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRun {
    pub seed: u64,
    pub first: RunMetrics,
    pub last: RunMetrics,
    /// Mean true-target existence after the first / final iteration,
    /// both on the final matching.
    pub true_q_first: Option<f64>,
    pub true_q_last: Option<f64>,
    /// Fused `(RMSER, RMSEB)` after the first / final iteration, both on the
    /// final matched scans.
    pub fused_first: Option<(f64, f64)>,
    pub fused_last: Option<(f64, f64)>,
    pub iterations: usize,
    pub converged: bool,
    pub tracks: usize,
    pub invariants: InvariantReport,
}

/// Simulates, tracks and evaluates one seed.
pub fn run_single(cfg: &ScenarioConfig, seed: u64, max_iters: Option<usize>, gate: &MatchGate) -> Result<McRun> {
    let mut cfg = cfg.clone();
    cfg.seed = seed;
    let scenario = simulate(&cfg)?;
    let vb = VbConfig::from_scenario(&cfg)?;
    let t0 = Instant::now();
    let mut state = VbState::new(&vb, &scenario.scans)?;
    let limit = max_iters.unwrap_or(vb.r_max).max(1);
    state.run(Some(1), |_| {})?;
    let first_time = t0.elapsed().as_secs_f64();
    let first_tracks = state.tracks.clone();
    state.run(Some(limit), |_| {})?;
    let runtime = t0.elapsed().as_secs_f64();

    let est_first: Vec<_> = first_tracks.iter().map(TrackEstimate::from_vb).collect();
    let est_last: Vec<_> = state.tracks.iter().map(TrackEstimate::from_vb).collect();
    let m_first = match_tracks(&est_first, &scenario.truth, gate);
    let m_last = match_tracks(&est_last, &scenario.truth, gate);
    let mut invariants = check_invariants(&state);
    let again = VbState::new(&vb, &scenario.scans).and_then(|mut s| {
        s.run(Some(1), |_| {})?;
        Ok(s.tracks)
    });
    invariants.check(again.as_ref().is_ok_and(|t| *t == first_tracks), || format!("seed {seed}: rerun not deterministic"));
    Ok(McRun {
        seed,
        first: compute_metrics(&m_first, &est_first, &scenario.truth, first_time),
        last: compute_metrics(&m_last, &est_last, &scenario.truth, runtime),
        true_q_first: mean_true_existence(&m_last, &first_tracks, &scenario.truth),
        true_q_last: mean_true_existence(&m_last, &state.tracks, &scenario.truth),
        fused_first: rmse_on_match(&m_last, &first_tracks, &scenario.truth),
        fused_last: rmse_on_match(&m_last, &state.tracks, &scenario.truth),
        iterations: state.iteration,
        converged: state.converged,
        tracks: state.tracks.len(),
        invariants,
    })
}

/// Batch of runs with seeds `seed0, seed0 + 1, ...`, executed in parallel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McResult {
    pub runs: Vec<McRun>,
    /// `(seed, error)` of runs that failed and were excluded.
    pub failures: Vec<(u64, String)>,
    pub report: MetricReport,
    pub report_first: MetricReport,
}

pub fn run_monte_carlo(
    cfg: &ScenarioConfig,
    n_runs: usize,
    seed0: u64,
    max_iters: Option<usize>,
    gate: &MatchGate,
) -> Result<McResult> {
    if n_runs == 0 {
        return Err(crate::Error::Config("need at least one run".into()));
    }
    let results: Vec<_> = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| (seed0 + i, run_single(cfg, seed0 + i, max_iters, gate)))
        .collect();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(run) => runs.push(run),
            Err(e) => {
                log::warn!("run with seed {seed} failed: {e}");
                failures.push((seed, e.to_string()));
            }
        }
    }
    let last: Vec<_> = runs.iter().map(|r| r.last.clone()).collect();
    let first: Vec<_> = runs.iter().map(|r| r.first.clone()).collect();
    Ok(McResult { report: MetricReport::aggregate(&last), report_first: MetricReport::aggregate(&first), runs, failures })
}

/// Median of the present values.
pub fn median(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().flatten().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}
