//! Joint detection and tracking by variational Bayes.
//!
//! Each iteration runs three coordinate updates over the whole batch:
//! association (per scan and path, loopy BP on the gated assignment graph),
//! detection (two-state existence chain per track) and tracking (per-path
//! unscented smoothing on pseudo-measurements, then multipath fusion).

pub mod init;

pub use init::{initialize, initialize_heads, Discard, Head, InitReport, CONFLICT_SHARE, HEAD_DROP, MAX_HYPOTHESES};

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::assoc::{
    bethe_entropy, chi_clutter, path_weights, run_lbp, AssignmentMarginals, AssignmentProblem, ChiContext,
    LbpOptions, Pair,
};
use crate::error::{Error, Result};
use crate::existence::{
    decide_tracks, forward_backward, observation_factor, xi_evidence, EvidenceForm, LifecycleEvent, MetaModel,
    TrackStatus,
};
use crate::models::{
    measure_vector, MeasMatrix, MeasVector, MotionModel, PropagationPath, SensorGeometry, StateMatrix, StateVector,
};
use crate::sim::{ScanData, ScenarioConfig};
use crate::smoothing::{
    fuse_paths, gate_threshold, pseudo_measurement, smooth_path, symmetrize, unscented_transform, FusedTrack,
    Observation, PathTrack, UtParams,
};

/// Score margin within which alternative path hypotheses of one cluster are kept.
pub const HYPOTHESIS_MARGIN: f64 = 6.0;

/// Everything the tracker needs, resolved from a [`ScenarioConfig`].
#[derive(Debug, Clone)]
pub struct VbConfig {
    pub scans: usize,
    pub motion: MotionModel<f64>,
    pub paths: Vec<PropagationPath<f64>>,
    pub geometry: SensorGeometry<f64>,
    pub meta: MetaModel<f64>,
    pub lbp: LbpOptions,
    pub ut: UtParams,
    pub gate_gamma: f64,
    /// Clutter parameter in the prior association odds.
    pub lambda: f64,
    /// Clutter density `p_c` (uniform over the surveillance volume).
    pub clutter_density: f64,
    pub p_d_active: Vec<f64>,
    pub p_d_dormant: Vec<f64>,
    pub evidence: EvidenceForm,
    pub delta_t: f64,
    pub r_max: usize,
    pub delta_s: f64,
    pub rho: [f64; 3],
    pub initial_cov: StateMatrix<f64>,
    pub hypothesis_margin: f64,
    // derived constants for the initializer
    pub(crate) r_inv: Vec<MeasMatrix<f64>>,
    /// Consistency limit indexed by cluster size.
    pub(crate) consistency_threshold: [f64; 5],
    pub(crate) detect_score: Vec<f64>,
    pub(crate) miss_score: Vec<f64>,
    pub(crate) log_volume: f64,
    pub(crate) log_pd: Vec<f64>,
    pub(crate) log_1m_pd: Vec<f64>,
}

impl VbConfig {
    pub fn from_scenario(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let tr = &cfg.tracker;
        let geometry = cfg.sensor()?;
        let paths = cfg.paths()?;
        let n = paths.len();
        let p_d_active: Vec<f64> = paths.iter().map(|p| p.p_d).collect();
        let volume = cfg.region.volume();
        let r_inv = geometry
            .noise
            .iter()
            .map(|r| r.try_inverse().ok_or(Error::SingularCovariance))
            .collect::<Result<Vec<_>>>()?;
        let mut consistency_threshold = [f64::INFINITY; 5];
        for (j, slot) in consistency_threshold.iter_mut().enumerate().skip(2) {
            let chi2 = ChiSquared::new((3 * j - 3) as f64).map_err(|e| Error::Config(e.to_string()))?;
            *slot = chi2.inverse_cdf(init::CONSISTENCY_QUANTILE);
        }
        let clamp = |p: f64| p.clamp(1e-6, 1.0 - 1e-6);
        let log_pd: Vec<f64> = p_d_active.iter().map(|&p| clamp(p).ln()).collect();
        let log_1m_pd: Vec<f64> = p_d_active.iter().map(|&p| (1.0 - clamp(p)).ln()).collect();
        let detect_score = (0..n)
            .map(|t| {
                let log_det = (geometry.noise[t] * std::f64::consts::TAU).determinant().ln();
                log_pd[t] + volume.ln() - 0.5 * log_det
            })
            .collect();
        let r0 = &geometry.noise[0];
        let gain = nominal_rate_gain(cfg)?;
        let sample = cfg.sample_period;
        let initial_cov = StateMatrix::from_diagonal(&StateVector::new(
            r0[(0, 0)],
            r0[(1, 1)] / (gain * gain),
            r0[(2, 2)],
            4.0 * r0[(2, 2)] / (sample * sample),
        ));
        Ok(Self {
            scans: cfg.scans,
            motion: cfg.motion_model()?,
            geometry,
            meta: tr.meta_model()?,
            lbp: tr.lbp_options(),
            ut: tr.ut_params(),
            gate_gamma: gate_threshold(tr.gate_probability, 3)?,
            lambda: cfg.detection.clutter_mean.max(1e-12),
            clutter_density: cfg.clutter_density(),
            p_d_dormant: vec![tr.p_d_dormant; n],
            p_d_active,
            evidence: tr.evidence,
            delta_t: tr.delta_t,
            r_max: tr.r_max,
            delta_s: tr.delta_s(),
            rho: tr.rho,
            initial_cov,
            hypothesis_margin: HYPOTHESIS_MARGIN,
            paths,
            r_inv,
            consistency_threshold,
            miss_score: log_1m_pd.clone(),
            detect_score,
            log_volume: volume.ln(),
            log_pd,
            log_1m_pd,
        })
    }

    /// Per-component scale used by the convergence test.
    pub fn state_scale(&self) -> StateVector<f64> {
        self.initial_cov.diagonal().map(f64::sqrt)
    }
}

/// `d r_dot / d g_dot` at the centre of the surveillance region on the EE path.
fn nominal_rate_gain(cfg: &ScenarioConfig) -> Result<f64> {
    let g = 0.5 * (cfg.region.range[0] + cfg.region.range[1]);
    let th = 0.5 * (cfg.region.azimuth[0] + cfg.region.azimuth[1]);
    let h = cfg.geometry.h_e;
    let a = measure_vector(&StateVector::new(g, 1.0, th, 0.0), h, h, cfg.geometry.baseline)?;
    let b = measure_vector(&StateVector::new(g, 0.0, th, 0.0), h, h, cfg.geometry.baseline)?;
    Ok((a[1] - b[1]).abs().max(1e-3))
}

/// A track carried through the VB iterations. All per-scan vectors cover
/// the window `start..scans`.
#[derive(Debug, Clone, PartialEq)]
pub struct VbTrack {
    pub id: usize,
    pub start: usize,
    /// Initial-state distribution at `start`.
    pub prior: (StateVector<f64>, StateMatrix<f64>),
    pub paths: Vec<PathTrack<f64>>,
    pub fused: FusedTrack<f64>,
    /// `[k][tau]` path probabilities.
    pub path_weights: Vec<Vec<f64>>,
    /// `[k][tau]` missed-detection marginals.
    pub miss: Vec<Vec<f64>>,
    /// `q(s_k = 1)`.
    pub q: Vec<f64>,
    pub decisions: Vec<bool>,
    pub events: Vec<LifecycleEvent>,
    pub log_evidence: f64,
    /// Initializer score.
    pub score: f64,
    /// Numerical failure; the track is dormant from then on.
    pub failed: bool,
}

impl VbTrack {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Window position of absolute scan `k`.
    pub fn local(&self, k: usize) -> Option<usize> {
        (k >= self.start && k - self.start < self.len()).then(|| k - self.start)
    }

    pub fn active_at(&self, k: usize) -> bool {
        self.local(k).is_some_and(|l| self.decisions[l])
    }

    pub fn confirmed(&self) -> bool {
        !self.failed && self.decisions.iter().any(|&d| d)
    }
}

/// Summary of one solved association problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssocRecord {
    pub scan: usize,
    pub path: usize,
    pub n_targets: usize,
    pub n_meas: usize,
    pub converged: bool,
    pub iterations: usize,
    pub max_violation: f64,
    /// `sum E[a] chi + H_Bethe`.
    pub free_energy: f64,
}

/// Wall-clock time spent per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Timings {
    pub init: f64,
    pub association: f64,
    pub detection: f64,
    pub tracking: f64,
}

impl Timings {
    pub fn total(&self) -> f64 {
        self.init + self.association + self.detection + self.tracking
    }
}

/// Reported to observers after each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationReport {
    /// 1-based.
    pub iteration: usize,
    pub bound: f64,
    /// Largest normalized change of any fused mean.
    pub delta: f64,
    pub confirmed: usize,
}

/// Mutable state of one batch run.
#[derive(Debug, Clone)]
pub struct VbState<'a> {
    pub cfg: &'a VbConfig,
    pub scans: &'a [ScanData],
    pub tracks: Vec<VbTrack>,
    pub assoc: Vec<AssocRecord>,
    pub iteration: usize,
    pub bound_history: Vec<f64>,
    pub converged: bool,
    pub timings: Timings,
    pub init: InitReport,
    meas: Vec<Vec<MeasVector<f64>>>,
}

fn moments_track(
    target: usize,
    tau: usize,
    start: usize,
    moments: &[(StateVector<f64>, StateMatrix<f64>)],
    cfg: &VbConfig,
) -> Result<PathTrack<f64>> {
    let path = &cfg.paths[tau];
    let h = |x: &StateVector<f64>| measure_vector(x, path.h_t, path.h_r, cfg.geometry.baseline);
    let mut t = PathTrack {
        target,
        path: tau,
        start,
        mean: Vec::new(),
        cov: Vec::new(),
        y_hat: Vec::new(),
        s: Vec::new(),
        hph: Vec::new(),
        log_likelihood: 0.0,
    };
    for (x, p) in moments {
        let (y, pyy, _) = unscented_transform(x, p, &h, &cfg.ut)?;
        t.mean.push(*x);
        t.cov.push(*p);
        t.y_hat.push(y);
        t.s.push(symmetrize(&(pyy + cfg.geometry.noise[tau])));
        t.hph.push(pyy);
    }
    Ok(t)
}

fn track_from_head(id: usize, head: &Head, cfg: &VbConfig) -> Result<VbTrack> {
    let n = cfg.scans - head.start;
    let mut moments = head.filtered.clone();
    let mut q = head.q.clone();
    let ta = &cfg.meta.transition;
    while moments.len() < n {
        let (x, p) = moments.last().copied().expect("head has at least one scan");
        moments.push((cfg.motion.f * x, symmetrize(&(cfg.motion.f * p * cfg.motion.f.transpose() + cfg.motion.q))));
        let last = *q.last().expect("head has at least one scan");
        q.push((1.0 - last) * ta[(0, 1)] + last * ta[(1, 1)]);
    }
    let paths = (0..cfg.paths.len())
        .map(|tau| moments_track(id, tau, head.start, &moments, cfg))
        .collect::<Result<Vec<_>>>()?;
    let n_paths = cfg.paths.len();
    let uniform = vec![vec![1.0 / n_paths as f64; n_paths]; n];
    let fused = fuse_paths(&paths, &uniform)?;
    Ok(VbTrack {
        id,
        start: head.start,
        prior: head.init,
        paths,
        fused,
        path_weights: uniform,
        miss: vec![vec![1.0; n_paths]; n],
        decisions: vec![false; n],
        q,
        events: Vec::new(),
        log_evidence: 0.0,
        score: head.score,
        failed: false,
    })
}

/// Pseudo-measurement inputs gathered for one `(track, scan, path)`.
#[derive(Debug, Clone, Default)]
struct Gathered {
    meas: Vec<usize>,
    weights: Vec<f64>,
    miss: f64,
}

/// Association problem of scan `k`, path `tau` over the current track
/// moments, with the per-row track indices and per-column scan indices.
pub fn build_problem(
    cfg: &VbConfig,
    tracks: &[VbTrack],
    ys: &[MeasVector<f64>],
    k: usize,
    tau: usize,
) -> Result<(AssignmentProblem<f64>, Vec<usize>)> {
    let p_d = [cfg.p_d_dormant[tau], cfg.p_d_active[tau]];
    let mut rows = Vec::new();
    let mut cols: Vec<usize> = Vec::new();
    let mut raw: Vec<(usize, usize, f64)> = Vec::new();
    for (ti, t) in tracks.iter().enumerate() {
        if t.failed {
            continue;
        }
        let Some(l) = t.local(k) else { continue };
        let pt = &t.paths[tau];
        let ctx = match ChiContext::new(pt.y_hat[l], &pt.s[l], &pt.hph[l], t.q[l], p_d, cfg.lambda) {
            Ok(c) => c,
            Err(e) => {
                log::debug!("track {} scan {k} path {tau}: {e}", t.id);
                continue;
            }
        };
        let mut any = false;
        for (j, y) in ys.iter().enumerate() {
            let d = ctx.mahalanobis(y);
            if d <= cfg.gate_gamma {
                any = true;
                raw.push((rows.len(), j, ctx.base - 0.5 * d));
            }
        }
        if any {
            rows.push(ti);
        }
    }
    let mut col_of = std::collections::HashMap::new();
    let mut pairs = Vec::with_capacity(raw.len());
    for (r, j, chi) in raw {
        let c = *col_of.entry(j).or_insert_with(|| {
            cols.push(j);
            cols.len() - 1
        });
        pairs.push(Pair { target: r, meas: c, chi });
    }
    let mut problem = AssignmentProblem::new(rows.len(), cols.len(), chi_clutter(cfg.clutter_density)?, pairs);
    problem.scan = k;
    problem.path = tau;
    problem.targets = rows.iter().map(|&ti| tracks[ti].id).collect();
    problem.measurements = cols;
    Ok((problem, rows))
}

fn free_energy(problem: &AssignmentProblem<f64>, m: &AssignmentMarginals<f64>) -> f64 {
    let energy: f64 = problem.pairs.iter().zip(&m.pairs).map(|(p, &v)| v * p.chi).sum::<f64>()
        + problem.chi_miss.iter().zip(&m.miss).map(|(c, v)| c * v).sum::<f64>()
        + problem.chi_clutter.iter().zip(&m.clutter).map(|(c, v)| c * v).sum::<f64>();
    energy + bethe_entropy(problem, m)
}

impl<'a> VbState<'a> {
    /// Runs the initializer and seeds one track per surviving head.
    pub fn new(cfg: &'a VbConfig, scans: &'a [ScanData]) -> Result<Self> {
        if scans.len() != cfg.scans {
            return Err(Error::Config(format!("expected {} scans, got {}", cfg.scans, scans.len())));
        }
        let t0 = Instant::now();
        // an empty candidate set is a valid zero-track run, not an error here
        let init = initialize_heads(scans, cfg);
        let mut tracks = Vec::with_capacity(init.heads.len());
        for head in &init.heads {
            match track_from_head(tracks.len(), head, cfg) {
                Ok(t) => tracks.push(t),
                Err(e) => log::warn!("dropping head at scan {}: {e}", head.start),
            }
        }
        let timings = Timings { init: t0.elapsed().as_secs_f64(), ..Timings::default() };
        log::info!("initializer: {} heads spawned, {} after prune, {} tracks", init.spawned, init.after_prune, tracks.len());
        Ok(Self {
            cfg,
            scans,
            tracks,
            assoc: Vec::new(),
            iteration: 0,
            bound_history: Vec::new(),
            converged: false,
            timings,
            init,
            meas: scans.iter().map(|s| s.vectors()).collect(),
        })
    }

    fn associate(&mut self) -> Result<(Vec<Vec<Vec<Gathered>>>, f64)> {
        let cfg = self.cfg;
        let n_paths = cfg.paths.len();
        let mut gathered: Vec<Vec<Vec<Gathered>>> = self
            .tracks
            .iter()
            .map(|t| vec![vec![Gathered { miss: 1.0, ..Gathered::default() }; n_paths]; t.len()])
            .collect();
        self.assoc.clear();
        let tracks = &self.tracks;
        let meas = &self.meas;
        let solved = (0..cfg.scans * n_paths)
            .into_par_iter()
            .map(|idx| {
                let (k, tau) = (idx / n_paths, idx % n_paths);
                let (problem, rows) = build_problem(cfg, tracks, &meas[k], k, tau)?;
                if problem.n_targets() == 0 {
                    return Ok(None);
                }
                let m = run_lbp(&problem, &cfg.lbp)?;
                Ok(Some((problem, rows, m)))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut bound = 0.0;
        for (problem, rows, m) in solved.into_iter().flatten() {
            let (k, tau) = (problem.scan, problem.path);
            for (r, &ti) in rows.iter().enumerate() {
                let l = self.tracks[ti].local(k).expect("rows are alive at k");
                gathered[ti][l][tau].miss = m.miss[r];
            }
            for (p, &v) in problem.pairs.iter().zip(&m.pairs) {
                let ti = rows[p.target];
                let l = self.tracks[ti].local(k).expect("rows are alive at k");
                let g = &mut gathered[ti][l][tau];
                g.meas.push(problem.measurements[p.meas]);
                g.weights.push(v);
            }
            let fe = free_energy(&problem, &m);
            bound += fe;
            self.assoc.push(AssocRecord {
                scan: k,
                path: tau,
                n_targets: problem.n_targets(),
                n_meas: problem.n_meas(),
                converged: m.converged,
                iterations: m.iterations,
                max_violation: m.max_constraint_violation(&problem),
                free_energy: fe,
            });
        }
        Ok((gathered, bound))
    }

    fn update_path_weights(&mut self) {
        let n_paths = self.cfg.paths.len();
        let uniform = vec![1.0 / n_paths as f64; n_paths];
        for t in self.tracks.iter_mut().filter(|t| !t.failed) {
            for l in 0..t.len() {
                t.path_weights[l] = if self.iteration == 0 {
                    uniform.clone()
                } else {
                    let est: Vec<_> = t.paths.iter().map(|p| (p.mean[l], p.cov[l])).collect();
                    match path_weights(&est) {
                        Ok(w) => w.weights,
                        Err(e) => {
                            log::debug!("track {} path weights: {e}", t.id);
                            uniform.clone()
                        }
                    }
                };
            }
        }
    }

    fn detect(&mut self, gathered: &[Vec<Vec<Gathered>>]) -> Result<f64> {
        let cfg = self.cfg;
        let mut bound = 0.0;
        for (t, g) in self.tracks.iter_mut().zip(gathered) {
            if t.failed {
                continue;
            }
            let mut b = Vec::with_capacity(t.len());
            for l in 0..t.len() {
                t.miss[l] = g[l].iter().map(|x| x.miss).collect();
                let xi = xi_evidence(&t.path_weights[l], &t.miss[l], [&cfg.p_d_dormant, &cfg.p_d_active]);
                b.push(observation_factor(xi, cfg.evidence));
            }
            let post = forward_backward(&cfg.meta, &b)?;
            t.q = post.marginals.iter().map(|m| m[1]).collect();
            t.log_evidence = post.log_evidence;
            bound += post.log_evidence;
            let (decisions, events, _) = decide_tracks(&t.q, cfg.meta.delta_b, cfg.meta.delta_m, TrackStatus::Tentative);
            t.decisions = decisions;
            t.events = events;
        }
        Ok(bound)
    }

    fn track(&mut self, gathered: &[Vec<Vec<Gathered>>]) -> f64 {
        let cfg = self.cfg;
        let meas = &self.meas;
        self.tracks
            .par_iter_mut()
            .zip(gathered)
            .filter(|(t, _)| !t.failed)
            .map(|(t, g)| {
                let result = (|| -> Result<(Vec<PathTrack<f64>>, FusedTrack<f64>)> {
                    let mut paths = Vec::with_capacity(cfg.paths.len());
                    for (tau, path) in cfg.paths.iter().enumerate() {
                        let obs: Vec<Observation<f64, 3>> = g
                            .iter()
                            .enumerate()
                            .map(|(l, gl)| {
                                let gv = &gl[tau];
                                let ys: Vec<_> = gv.meas.iter().map(|&j| meas[t.start + l][j]).collect();
                                pseudo_measurement(&ys, &gv.weights, gv.miss, &cfg.geometry.noise[tau]).observation()
                            })
                            .collect();
                        paths.push(smooth_path(t.id, t.start, &cfg.motion, path, &cfg.geometry, &obs, t.prior, &cfg.ut)?);
                    }
                    let fused = fuse_paths(&paths, &t.path_weights)?;
                    Ok((paths, fused))
                })();
                match result {
                    Ok((paths, fused)) => {
                        let ll = paths.iter().map(|p| p.log_likelihood).sum::<f64>();
                        t.paths = paths;
                        t.fused = fused;
                        ll
                    }
                    Err(e) => {
                        log::warn!("track {} marked dormant: {e}", t.id);
                        t.failed = true;
                        t.decisions.iter_mut().for_each(|d| *d = false);
                        t.q.iter_mut().for_each(|q| *q = 0.0);
                        0.0
                    }
                }
            })
            .collect::<Vec<f64>>()
            .into_iter()
            .sum()
    }

    /// One association / detection / tracking sweep.
    pub fn iterate(&mut self) -> Result<IterationReport> {
        let before: Vec<Vec<StateVector<f64>>> = self.tracks.iter().map(|t| t.fused.mean.clone()).collect();

        let t0 = Instant::now();
        let (gathered, b_assoc) = self.associate()?;
        self.update_path_weights();
        let t1 = Instant::now();
        let b_detect = self.detect(&gathered)?;
        let t2 = Instant::now();
        let b_track = self.track(&gathered);
        let t3 = Instant::now();
        self.timings.association += (t1 - t0).as_secs_f64();
        self.timings.detection += (t2 - t1).as_secs_f64();
        self.timings.tracking += (t3 - t2).as_secs_f64();

        let scale = self.cfg.state_scale();
        let mut delta: f64 = 0.0;
        for (t, old) in self.tracks.iter().zip(&before) {
            if t.failed {
                continue;
            }
            for (a, b) in t.fused.mean.iter().zip(old) {
                delta = delta.max(((a - b).component_div(&scale)).amax());
            }
        }
        self.iteration += 1;
        let bound = b_assoc + b_detect + b_track;
        self.bound_history.push(bound);
        self.converged = delta < self.cfg.delta_t;
        let confirmed = self.tracks.iter().filter(|t| t.confirmed()).count();
        log::debug!("iteration {}: bound {bound:.3}, delta {delta:.3e}, confirmed {confirmed}", self.iteration);
        Ok(IterationReport { iteration: self.iteration, bound, delta, confirmed })
    }

    /// Iterates until convergence or `max_iters` (defaults to `r_max`).
    pub fn run(&mut self, max_iters: Option<usize>, mut observer: impl FnMut(&IterationReport)) -> Result<()> {
        let limit = max_iters.unwrap_or(self.cfg.r_max);
        while self.iteration < limit && !self.converged {
            let report = self.iterate()?;
            observer(&report);
            if self.converged {
                break;
            }
        }
        Ok(())
    }

    /// Tracks that were confirmed at least once.
    pub fn confirmed_tracks(&self) -> impl Iterator<Item = &VbTrack> {
        self.tracks.iter().filter(|t| t.confirmed())
    }

    /// Number of active tracks per scan.
    pub fn active_counts(&self) -> Vec<usize> {
        (0..self.cfg.scans).map(|k| self.tracks.iter().filter(|t| !t.failed && t.active_at(k)).count()).collect()
    }
}

/// Final tracker output, detached from the input borrow.
#[derive(Debug, Clone)]
pub struct VbOutput {
    pub tracks: Vec<VbTrack>,
    pub assoc: Vec<AssocRecord>,
    pub iterations: usize,
    pub converged: bool,
    pub bound_history: Vec<f64>,
    pub timings: Timings,
    pub heads_spawned: usize,
    pub heads_after_prune: usize,
    pub elapsed: Duration,
}

impl VbOutput {
    pub fn confirmed_tracks(&self) -> impl Iterator<Item = &VbTrack> {
        self.tracks.iter().filter(|t| t.confirmed())
    }
}

/// Initializes and iterates the tracker on one batch.
pub fn run_tracker(
    cfg: &VbConfig,
    scans: &[ScanData],
    max_iters: Option<usize>,
    observer: impl FnMut(&IterationReport),
) -> Result<VbOutput> {
    let t0 = Instant::now();
    let mut state = VbState::new(cfg, scans)?;
    state.run(max_iters, observer)?;
    Ok(VbOutput {
        tracks: state.tracks,
        assoc: state.assoc,
        iterations: state.iteration,
        converged: state.converged,
        bound_history: state.bound_history,
        timings: state.timings,
        heads_spawned: state.init.spawned,
        heads_after_prune: state.init.after_prune,
        elapsed: t0.elapsed(),
    })
}

/// Reproducibility record written next to tracker outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub config_sha256: String,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub tracks: usize,
    pub confirmed_tracks: usize,
    pub bound: Vec<f64>,
    pub timings: Timings,
    pub elapsed_seconds: f64,
}

impl RunManifest {
    pub fn new(cfg: &ScenarioConfig, out: &VbOutput) -> Result<Self> {
        let text = cfg.to_toml()?;
        let digest = Sha256::digest(text.as_bytes());
        Ok(Self {
            config_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            seed: cfg.seed,
            iterations: out.iterations,
            converged: out.converged,
            tracks: out.tracks.len(),
            confirmed_tracks: out.confirmed_tracks().count(),
            bound: out.bound_history.clone(),
            timings: out.timings,
            elapsed_seconds: out.elapsed.as_secs_f64(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
