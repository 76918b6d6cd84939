//! Scenario simulation: truth trajectories, per-path detections and clutter.
//!
//! Randomness comes from one root seed. Every draw sequence uses its own
//! ChaCha8 stream, `stream = purpose << 32 | index`, with purposes
//! 1 = process noise (index = target), 2 = detections (index = scan),
//! 3 = clutter (index = scan), 4 = per-scan shuffle (index = scan).

mod config;
mod io;

pub use config::{
    DetectionConfig, GeometryConfig, LbpConfig, MotionConfig, Region, ScenarioConfig, TargetConfig, TrackerConfig,
    UtConfig, CANONICAL_CONFIG,
};
pub use io::{read_scans_csv, read_truth_csv, write_scans_csv, write_truth_csv};

use nalgebra::{SMatrix, SVector, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::models::{measure_vector, MeasVector, PathLabel, SlantMeasurement, StateVector};

const PURPOSE_PROCESS: u64 = 1;
const PURPOSE_DETECT: u64 = 2;
const PURPOSE_CLUTTER: u64 = 3;
const PURPOSE_SHUFFLE: u64 = 4;

/// Deterministic RNG for `(purpose, index)`.
pub fn stream_rng(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 32) | index);
    rng
}

/// Ground truth for one target; scans are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTrack {
    pub id: usize,
    pub birth: usize,
    /// Last alive scan, inclusive.
    pub death: usize,
    /// State at scans `birth..=death`.
    pub states: Vec<StateVector<f64>>,
}

impl TruthTrack {
    pub fn alive(&self, k: usize) -> bool {
        k >= self.birth && k <= self.death
    }

    pub fn state_at(&self, k: usize) -> Option<&StateVector<f64>> {
        self.alive(k).then(|| &self.states[k - self.birth])
    }

    pub fn lifetime(&self) -> usize {
        self.death + 1 - self.birth
    }
}

/// Origin of a simulated measurement; never read by the tracker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Target { id: usize, path: PathLabel },
    Clutter,
}

/// Measurements of one scan with their hidden origins.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanData {
    /// 0-based scan index.
    pub k: usize,
    pub measurements: Vec<SlantMeasurement<f64>>,
    pub provenance: Vec<Provenance>,
}

impl ScanData {
    pub fn vectors(&self) -> Vec<MeasVector<f64>> {
        self.measurements.iter().map(|m| m.to_vector()).collect()
    }
}

/// A full simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub truth: Vec<TruthTrack>,
    pub scans: Vec<ScanData>,
}

/// Square root of a symmetric PSD matrix (`L L^T = A`) by eigen-decomposition,
/// clipping tiny negative eigenvalues.
pub fn psd_sqrt<const N: usize>(a: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    let eig = nalgebra::DMatrix::from_fn(N, N, |i, j| a[(i, j)]).symmetric_eigen();
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let l = eig.eigenvectors * nalgebra::DMatrix::from_diagonal(&d);
    SMatrix::from_fn(|i, j| l[(i, j)])
}

fn gaussian<const N: usize>(rng: &mut ChaCha8Rng, sqrt: &SMatrix<f64, N, N>) -> SVector<f64, N> {
    let z = SVector::<f64, N>::from_fn(|_, _| StandardNormal.sample(rng));
    sqrt * z
}

pub fn generate_truth(cfg: &ScenarioConfig) -> Result<Vec<TruthTrack>> {
    let motion = cfg.motion_model()?;
    let q_sqrt = psd_sqrt(&motion.q);
    let mut out = Vec::with_capacity(cfg.targets.len());
    for (id, t) in cfg.targets.iter().enumerate() {
        let mut rng = stream_rng(cfg.seed, PURPOSE_PROCESS, id as u64);
        let mut x = cfg.target_state(id);
        let mut states = vec![x];
        for _ in t.birth..t.death {
            x = motion.f * x + gaussian(&mut rng, &q_sqrt);
            states.push(x);
        }
        out.push(TruthTrack { id, birth: t.birth - 1, death: t.death - 1, states });
    }
    Ok(out)
}

/// Target-originated measurements of scan `k`.
pub fn generate_detections(
    truth: &[TruthTrack],
    cfg: &ScenarioConfig,
    k: usize,
) -> Result<Vec<(SlantMeasurement<f64>, Provenance)>> {
    let paths = cfg.paths()?;
    let noise: Vec<_> = cfg.noise().iter().map(psd_sqrt).collect();
    let mut rng = stream_rng(cfg.seed, PURPOSE_DETECT, k as u64);
    let mut out = Vec::new();
    for t in truth {
        let Some(x) = t.state_at(k) else { continue };
        for (p, r_sqrt) in paths.iter().zip(&noise) {
            // always draw, so the stream does not depend on feasibility
            let detected = rng.random::<f64>() < p.p_d;
            let e = gaussian(&mut rng, r_sqrt);
            if !detected {
                continue;
            }
            match measure_vector(x, p.h_t, p.h_r, cfg.geometry.baseline) {
                Ok(y) => out.push((
                    SlantMeasurement::from_vector(&(y + e), k),
                    Provenance::Target { id: t.id, path: p.label },
                )),
                Err(err) => log::warn!("scan {k}: target {} path {} infeasible: {err}", t.id, p.label),
            }
        }
    }
    Ok(out)
}

/// Poisson clutter, uniform over the surveillance region.
pub fn generate_clutter(cfg: &ScenarioConfig, k: usize) -> Result<Vec<SlantMeasurement<f64>>> {
    let n_c = cfg.detection.clutter_mean;
    if n_c == 0.0 {
        return Ok(Vec::new());
    }
    let mut rng = stream_rng(cfg.seed, PURPOSE_CLUTTER, k as u64);
    let count = Poisson::new(n_c).map_err(|e| Error::Config(e.to_string()))?.sample(&mut rng) as usize;
    let r = &cfg.region;
    Ok((0..count)
        .map(|_| {
            let y = Vector3::new(
                rng.random_range(r.range[0]..r.range[1]),
                rng.random_range(r.range_rate[0]..r.range_rate[1]),
                rng.random_range(r.azimuth[0]..r.azimuth[1]),
            );
            SlantMeasurement::from_vector(&y, k)
        })
        .collect())
}

/// Truth plus all scans, each scan shuffled so order carries no origin information.
pub fn simulate(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let truth = generate_truth(cfg)?;
    let mut scans = Vec::with_capacity(cfg.scans);
    for k in 0..cfg.scans {
        let mut items = generate_detections(&truth, cfg, k)?;
        items.extend(generate_clutter(cfg, k)?.into_iter().map(|m| (m, Provenance::Clutter)));
        items.shuffle(&mut stream_rng(cfg.seed, PURPOSE_SHUFFLE, k as u64));
        let (measurements, provenance) = items.into_iter().unzip();
        scans.push(ScanData { k, measurements, provenance });
    }
    Ok(Scenario { truth, scans })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_truth_is_deterministic_propagation() {
        let mut cfg = ScenarioConfig::canonical();
        cfg.motion.q = [[0.0; 4]; 4];
        let truth = generate_truth(&cfg).unwrap();
        let f = cfg.motion_model().unwrap().f;
        for t in &truth {
            for w in t.states.windows(2) {
                assert!((w[1] - f * w[0]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn table_windows() {
        let truth = generate_truth(&ScenarioConfig::canonical()).unwrap();
        assert!(!truth[2].alive(6) && truth[2].alive(7) && truth[2].alive(19) && !truth[2].alive(20));
        assert_eq!(truth[2].lifetime(), 13);
    }

    #[test]
    fn deterministic_limit_detections() {
        let mut cfg = ScenarioConfig::canonical();
        cfg.detection.p_d = vec![1.0; 4];
        cfg.geometry.noise = vec![[0.0; 3]; 4];
        let truth = generate_truth(&cfg).unwrap();
        let det = generate_detections(&truth, &cfg, 0).unwrap();
        assert_eq!(det.len(), 2 * 4);
        let paths = cfg.paths().unwrap();
        for (m, prov) in &det {
            let Provenance::Target { id, path } = prov else { panic!() };
            let p = paths.iter().find(|p| p.label == *path).unwrap();
            let y = measure_vector(truth[*id].state_at(0).unwrap(), p.h_t, p.h_r, cfg.geometry.baseline).unwrap();
            assert_eq!(m.to_vector(), y);
        }
        cfg.detection.p_d = vec![0.0; 4];
        assert!(generate_detections(&truth, &cfg, 0).unwrap().is_empty());
    }

    #[test]
    fn clutter_inside_region() {
        let cfg = ScenarioConfig::canonical();
        for k in 0..5 {
            assert!(generate_clutter(&cfg, k).unwrap().iter().all(|m| cfg.region.contains(&m.to_vector())));
        }
        let mut none = cfg.clone();
        none.detection.clutter_mean = 0.0;
        assert!(generate_clutter(&none, 0).unwrap().is_empty());
    }

    #[test]
    fn simulation_is_reproducible() {
        let cfg = ScenarioConfig::canonical();
        let a = simulate(&cfg).unwrap();
        assert_eq!(a, simulate(&cfg).unwrap());
        for s in &a.scans {
            assert_eq!(s.measurements.len(), s.provenance.len());
        }
    }
}
