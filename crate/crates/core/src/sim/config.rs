use std::path::Path;

use nalgebra::{Matrix2, Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::assoc::LbpOptions;
use crate::error::{Error, Result};
use crate::existence::{EvidenceForm, MetaModel};
use crate::models::{
    standard_path_table, MeasMatrix, MotionModel, PropagationPath, SensorGeometry, StateMatrix, StateVector,
};
use crate::smoothing::UtParams;

/// The shipped canonical configuration.
pub const CANONICAL_CONFIG: &str = include_str!("../../configs/othr.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub range: [f64; 2],
    pub range_rate: [f64; 2],
    pub azimuth: [f64; 2],
}

impl Region {
    pub fn volume(&self) -> f64 {
        (self.range[1] - self.range[0]) * (self.range_rate[1] - self.range_rate[0]) * (self.azimuth[1] - self.azimuth[0])
    }

    pub fn contains(&self, y: &Vector3<f64>) -> bool {
        let inside = |v: f64, b: [f64; 2]| v >= b[0] && v <= b[1];
        inside(y[0], self.range) && inside(y[1], self.range_rate) && inside(y[2], self.azimuth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub baseline: f64,
    pub h_e: f64,
    pub h_f: f64,
    /// Diagonal of `R` per path.
    pub noise: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionConfig {
    pub q: [[f64; 4]; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Per-path detection probability of an active target.
    pub p_d: Vec<f64>,
    /// Expected clutter count per scan.
    pub clutter_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetConfig {
    pub state: [f64; 4],
    /// First scan, 1-based inclusive.
    pub birth: usize,
    /// Last scan, 1-based inclusive.
    pub death: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbpConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub damping: f64,
}

impl Default for LbpConfig {
    fn default() -> Self {
        let d = LbpOptions::default();
        Self { max_iters: d.max_iters, tol: d.tol, damping: d.damping }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UtConfig {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UtConfig {
    fn default() -> Self {
        let d = UtParams::default();
        Self { alpha: d.alpha, beta: d.beta, kappa: d.kappa }
    }
}

/// Tracker settings stored next to the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub gate_probability: f64,
    pub delta_t: f64,
    pub r_max: usize,
    pub delta_b: f64,
    pub delta_m: f64,
    /// Initializer pruning threshold; defaults to `delta_b`.
    pub delta_s: Option<f64>,
    pub rho: [f64; 3],
    pub p_active: f64,
    pub transition: [[f64; 2]; 2],
    pub p_d_dormant: f64,
    pub evidence: EvidenceForm,
    pub lbp: LbpConfig,
    pub ut: UtConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            gate_probability: 0.971,
            delta_t: 1e-5,
            r_max: 20,
            delta_b: 0.6,
            delta_m: 0.85,
            delta_s: None,
            rho: [85.0, 0.007, 0.04],
            p_active: 0.3,
            transition: [[0.9, 0.1], [0.1, 0.9]],
            p_d_dormant: 0.05,
            evidence: EvidenceForm::default(),
            lbp: LbpConfig::default(),
            ut: UtConfig::default(),
        }
    }
}

impl TrackerConfig {
    pub fn meta_model(&self) -> Result<MetaModel<f64>> {
        let t = self.transition;
        MetaModel::new(self.p_active, Matrix2::new(t[0][0], t[0][1], t[1][0], t[1][1]), self.delta_b, self.delta_m)
    }

    pub fn lbp_options(&self) -> LbpOptions {
        LbpOptions { max_iters: self.lbp.max_iters, tol: self.lbp.tol, damping: self.lbp.damping }
    }

    pub fn ut_params(&self) -> UtParams {
        UtParams { alpha: self.ut.alpha, beta: self.ut.beta, kappa: self.ut.kappa }
    }

    pub fn delta_s(&self) -> f64 {
        self.delta_s.unwrap_or(self.delta_b)
    }
}

/// Scenario plus tracker settings, as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub scans: usize,
    pub sample_period: f64,
    pub region: Region,
    pub geometry: GeometryConfig,
    pub motion: MotionConfig,
    pub detection: DetectionConfig,
    #[serde(default)]
    pub targets: Vec<TargetConfig>,
    #[serde(default)]
    pub tracker: TrackerConfig,
}

impl ScenarioConfig {
    pub fn canonical() -> Self {
        Self::from_toml(CANONICAL_CONFIG).expect("canonical config is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.scans == 0 {
            return bad("scans must be at least 1");
        }
        if !(self.sample_period > 0.0) {
            return bad("sample period must be positive");
        }
        let r = &self.region;
        if [r.range, r.range_rate, r.azimuth].iter().any(|b| !(b[0] < b[1])) {
            return bad("region bounds must be ordered");
        }
        if self.detection.p_d.len() != 4 || self.geometry.noise.len() != 4 {
            return bad("expected four propagation paths");
        }
        if self.detection.p_d.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("detection probabilities must lie in [0, 1]");
        }
        if !(self.detection.clutter_mean >= 0.0) {
            return bad("clutter mean must be non-negative");
        }
        for t in &self.targets {
            if t.birth < 1 || t.birth > t.death || t.death > self.scans {
                return bad("target window outside the scan range");
            }
        }
        let tr = &self.tracker;
        if !(tr.delta_t > 0.0) || tr.r_max == 0 {
            return bad("need delta_t > 0 and r_max >= 1");
        }
        if !(tr.gate_probability > 0.0 && tr.gate_probability < 1.0) {
            return bad("gate probability must lie in (0, 1)");
        }
        if tr.rho.iter().any(|v| !(*v > 0.0)) {
            return bad("clustering threshold must be positive");
        }
        tr.meta_model()?;
        Ok(())
    }

    /// Process noise exactly as configured (may be indefinite).
    pub fn q_raw(&self) -> StateMatrix<f64> {
        let q = self.motion.q;
        Matrix4::from_fn(|i, j| q[i][j])
    }

    /// Constant-velocity model with `Q` projected onto the PSD cone.
    pub fn motion_model(&self) -> Result<MotionModel<f64>> {
        MotionModel::constant_velocity_projected(self.sample_period, self.q_raw())
    }

    pub fn paths(&self) -> Result<Vec<PropagationPath<f64>>> {
        let mut paths = standard_path_table(self.geometry.h_e, self.geometry.h_f, 0.5)?;
        for (p, &pd) in paths.iter_mut().zip(&self.detection.p_d) {
            p.p_d = pd;
        }
        Ok(paths)
    }

    pub fn noise(&self) -> Vec<MeasMatrix<f64>> {
        self.geometry.noise.iter().map(|d| Matrix3::from_diagonal(&Vector3::from(*d))).collect()
    }

    /// Sensor geometry; requires every `R` to be positive definite.
    pub fn sensor(&self) -> Result<SensorGeometry<f64>> {
        SensorGeometry::new(self.geometry.baseline, self.noise())
    }

    pub fn target_state(&self, i: usize) -> StateVector<f64> {
        StateVector::from(self.targets[i].state)
    }

    /// Surveillance volume `V`; the clutter density is `1 / V`.
    pub fn clutter_density(&self) -> f64 {
        1.0 / self.region.volume()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_parses() {
        let c = ScenarioConfig::canonical();
        assert_eq!(c.targets.len(), 6);
        assert_eq!((c.targets[2].birth, c.targets[2].death), (8, 20));
        assert_eq!(c.tracker.evidence, EvidenceForm::Symmetric);
        assert!((c.region.volume() - 500.0 * 1.048 * 0.18).abs() < 1e-9);
        assert!(c.motion_model().is_ok());
        assert!(MotionModel::constant_velocity(16.0, c.q_raw()).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = ScenarioConfig::canonical();
        assert_eq!(ScenarioConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn invalid_window_rejected() {
        let mut c = ScenarioConfig::canonical();
        c.targets[0].death = 31;
        assert!(c.validate().is_err());
    }
}
