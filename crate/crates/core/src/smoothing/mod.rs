//! Gating, pseudo-measurements, per-path unscented smoothing and
//! multipath fusion.

mod ukf;

pub use ukf::{
    sqrt_cov, symmetrize, ukf_forward, unscented_transform, urts_backward, Dynamics, ForwardStep, Observation, UtParams,
    JITTER_RETRIES,
};

use nalgebra::{SMatrix, SVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::models::{self, MeasMatrix, MeasVector, MotionModel, PropagationPath, SensorGeometry, StateMatrix, StateVector};
use crate::scalar::{lit, Real};

/// Threshold on `1 - E[a^{i,0}]` below which a pseudo-measurement is void.
pub const PSEUDO_EPS: f64 = 1e-6;

/// Gate threshold `gamma` with `P(chi2_dof <= gamma) = p_g`.
pub fn gate_threshold(p_g: f64, dof: usize) -> Result<f64> {
    if !(p_g > 0.0 && p_g < 1.0) || dof == 0 {
        return Err(Error::Config(format!("gate probability {p_g} / dof {dof}")));
    }
    let chi2 = ChiSquared::new(dof as f64).map_err(|e| Error::Config(e.to_string()))?;
    Ok(chi2.inverse_cdf(p_g))
}

/// Indices of `measurements` inside the gate `D(y - y_hat, S) <= gamma`.
pub fn gate<T: Real, const M: usize>(
    y_hat: &SVector<T, M>,
    s: &SMatrix<T, M, M>,
    measurements: &[SVector<T, M>],
    gamma: T,
) -> Result<Vec<usize>> {
    let chol = s.cholesky().ok_or(Error::SingularInnovation)?;
    Ok(measurements
        .iter()
        .enumerate()
        .filter(|(_, y)| {
            let e = *y - y_hat;
            e.dot(&chol.solve(&e)) <= gamma
        })
        .map(|(j, _)| j)
        .collect())
}

/// Association-weighted synthetic measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoMeasurement<T: Real, const M: usize> {
    pub y: SVector<T, M>,
    pub r: SMatrix<T, M, M>,
    pub valid: bool,
}

impl<T: Real, const M: usize> PseudoMeasurement<T, M> {
    pub fn observation(&self) -> Observation<T, M> {
        self.valid.then_some((self.y, self.r))
    }
}

/// `y = sum_j w_j y_j / (1 - miss)`, `R = R / (1 - miss)`; void when the
/// detected mass is below [`PSEUDO_EPS`].
pub fn pseudo_measurement<T: Real, const M: usize>(
    gated: &[SVector<T, M>],
    weights: &[T],
    miss: T,
    r: &SMatrix<T, M, M>,
) -> PseudoMeasurement<T, M> {
    let mass = T::one() - miss;
    if gated.is_empty() || mass < lit(PSEUDO_EPS) {
        return PseudoMeasurement { y: SVector::zeros(), r: *r, valid: false };
    }
    let mut y = SVector::<T, M>::zeros();
    for (yj, &w) in gated.iter().zip(weights) {
        y += yj * w;
    }
    PseudoMeasurement { y: y / mass, r: r / mass, valid: true }
}

/// Smoothed estimates of one target along one path, over the target's
/// scan window `start..start + mean.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTrack<T: Real> {
    pub target: usize,
    /// 0-based path position.
    pub path: usize,
    pub start: usize,
    pub mean: Vec<StateVector<T>>,
    pub cov: Vec<StateMatrix<T>>,
    /// Predicted measurement at the smoothed state.
    pub y_hat: Vec<MeasVector<T>>,
    /// Innovation covariance at the smoothed state (includes `R`).
    pub s: Vec<MeasMatrix<T>>,
    /// State uncertainty in measurement space (`H P H^T`).
    pub hph: Vec<MeasMatrix<T>>,
    /// Sum of forward innovation log-likelihoods.
    pub log_likelihood: T,
}

/// Global estimate of one target.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedTrack<T: Real> {
    pub target: usize,
    pub start: usize,
    pub mean: Vec<StateVector<T>>,
    pub cov: Vec<StateMatrix<T>>,
}

/// Forward UKF + backward URTS for one target on one propagation path.
#[allow(clippy::too_many_arguments)]
pub fn smooth_path<T: Real>(
    target: usize,
    start: usize,
    motion: &MotionModel<T>,
    path: &PropagationPath<T>,
    geom: &SensorGeometry<T>,
    observations: &[Observation<T, 3>],
    prior: (StateVector<T>, StateMatrix<T>),
    ut: &UtParams,
) -> Result<PathTrack<T>> {
    let d = geom.baseline;
    let h = |x: &StateVector<T>| models::measure_vector(x, path.h_t, path.h_r, d);
    let r = geom.noise_for(path);
    let dynamics = Dynamics { f: motion.f, q: motion.q };
    let forward = ukf_forward(&dynamics, &h, r, observations, prior, ut)?;
    let smoothed = urts_backward(&forward)?;
    let log_likelihood = forward.iter().fold(T::zero(), |a, s| a + s.log_likelihood);
    let mut track = PathTrack {
        target,
        path: path.index - 1,
        start,
        mean: Vec::with_capacity(smoothed.len()),
        cov: Vec::with_capacity(smoothed.len()),
        y_hat: Vec::with_capacity(smoothed.len()),
        s: Vec::with_capacity(smoothed.len()),
        hph: Vec::with_capacity(smoothed.len()),
        log_likelihood,
    };
    for (x, p) in smoothed {
        let (y, pyy, _) = unscented_transform(&x, &p, &h, ut)?;
        track.mean.push(x);
        track.cov.push(p);
        track.y_hat.push(y);
        track.s.push(symmetrize(&(pyy + r)));
        track.hph.push(pyy);
    }
    Ok(track)
}

/// Moment fusion of path estimates at one scan: `x = sum w x_tau`,
/// `P^-1 = sum w P_tau^-1`.
pub fn fuse_estimates<T: Real, const N: usize>(
    estimates: &[(SVector<T, N>, SMatrix<T, N, N>)],
    weights: &[T],
) -> Result<(SVector<T, N>, SMatrix<T, N, N>)> {
    let mut x = SVector::<T, N>::zeros();
    let mut info = SMatrix::<T, N, N>::zeros();
    for ((xt, pt), &w) in estimates.iter().zip(weights) {
        if w == T::zero() {
            continue;
        }
        x += xt * w;
        info += pt.clone().try_inverse().ok_or(Error::SingularCovariance)? * w;
    }
    let p = info.try_inverse().ok_or(Error::SingularCovariance)?;
    Ok((x, symmetrize(&p)))
}

/// Fuses the path tracks of one target; `weights[k][tau]` are the path
/// probabilities at window scan `k`.
pub fn fuse_paths<T: Real>(tracks: &[PathTrack<T>], weights: &[Vec<T>]) -> Result<FusedTrack<T>> {
    let first = tracks.first().ok_or(Error::InvalidModel("no path tracks".into()))?;
    let n = first.mean.len();
    let mut fused = FusedTrack { target: first.target, start: first.start, mean: Vec::new(), cov: Vec::new() };
    for k in 0..n {
        let est: Vec<_> = tracks.iter().map(|t| (t.mean[k], t.cov[k])).collect();
        let (x, p) = fuse_estimates(&est, &weights[k])?;
        fused.mean.push(x);
        fused.cov.push(p);
    }
    Ok(fused)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix1, Matrix3, Vector1, Vector3};

    #[test]
    fn gate_keeps_prediction() {
        let y = Vector3::new(1.0, 2.0, 3.0);
        let g = gate(&y, &Matrix3::identity(), &[y, y * 10.0], 0.0).unwrap();
        assert_eq!(g, vec![0]);
        assert!(gate(&y, &Matrix3::identity(), &[], 1.0).unwrap().is_empty());
        assert!(gate(&y, &Matrix3::zeros(), &[y], 1.0).is_err());
    }

    #[test]
    fn pseudo_measurement_cases() {
        let r = Matrix3::identity() * 4.0;
        let y1 = Vector3::new(1.0, 2.0, 3.0);
        let pm = pseudo_measurement(&[y1], &[0.7], 0.3, &r);
        assert!((pm.y - y1).norm() < 1e-14);
        let pm = pseudo_measurement(&[y1], &[0.5], 0.5, &r);
        assert_eq!(pm.r, r * 2.0);
        assert!(!pseudo_measurement(&[y1], &[0.0], 1.0, &r).valid);
        assert!(!pseudo_measurement::<f64, 3>(&[], &[], 0.0, &r).valid);
    }

    #[test]
    fn fusion_scalar_toy() {
        let est = [(Vector1::<f64>::new(1.0), Matrix1::new(1.0)), (Vector1::new(3.0), Matrix1::new(4.0))];
        let (x, p) = fuse_estimates(&est, &[0.5, 0.5]).unwrap();
        assert!((p[(0, 0)] - 1.6).abs() < 1e-14);
        assert!((x[0] - 2.0).abs() < 1e-14);
        let (x, p) = fuse_estimates(&est, &[0.0, 1.0]).unwrap();
        assert_eq!((x[0], p[(0, 0)]), (3.0, 4.0));
    }

    #[test]
    fn gate_threshold_three_dof() {
        let g = gate_threshold(0.971, 3).unwrap();
        assert!(g > 8.0 && g < 10.0);
        assert!(gate_threshold(1.0, 3).is_err());
    }
}
