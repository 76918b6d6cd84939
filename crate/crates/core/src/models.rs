//! Target dynamics and OTHR multipath measurement geometry.
//!
//! State vectors are ordered `[g, g_dot, theta, theta_dot]` (km, km/s, rad,
//! rad/s); measurement vectors are `[r, r_dot, zeta]` (km, km/s, rad).

use nalgebra::{Matrix2, Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

pub const STATE_DIM: usize = 4;
pub const MEAS_DIM: usize = 3;

pub type StateVector<T> = SVector<T, STATE_DIM>;
pub type StateMatrix<T> = SMatrix<T, STATE_DIM, STATE_DIM>;
pub type MeasVector<T> = SVector<T, MEAS_DIM>;
pub type MeasMatrix<T> = Matrix3<T>;
pub type Jacobian<T> = SMatrix<T, MEAS_DIM, STATE_DIM>;

/// Target kinematic state in ground coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundState<T> {
    pub g: T,
    pub g_dot: T,
    pub theta: T,
    pub theta_dot: T,
}

impl<T: Real> GroundState<T> {
    pub fn new(g: T, g_dot: T, theta: T, theta_dot: T) -> Self {
        Self { g, g_dot, theta, theta_dot }
    }

    pub fn from_vector(v: &StateVector<T>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_vector(&self) -> StateVector<T> {
        StateVector::new(self.g, self.g_dot, self.theta, self.theta_dot)
    }

    pub fn is_valid(&self) -> bool {
        self.g > T::zero() && self.to_vector().iter().all(|x| x.is_finite())
    }
}

/// OTHR return in slant coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlantMeasurement<T> {
    pub r: T,
    pub r_dot: T,
    pub zeta: T,
    /// Scan index `k` (1-based).
    pub scan: usize,
}

impl<T: Real> SlantMeasurement<T> {
    pub fn from_vector(v: &MeasVector<T>, scan: usize) -> Self {
        Self { r: v[0], r_dot: v[1], zeta: v[2], scan }
    }

    pub fn to_vector(&self) -> MeasVector<T> {
        MeasVector::new(self.r, self.r_dot, self.zeta)
    }
}

/// Transmit/receive ionospheric layer pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PathLabel {
    EE,
    EF,
    FE,
    FF,
}

impl std::fmt::Display for PathLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PathLabel::EE => "EE",
            PathLabel::EF => "EF",
            PathLabel::FE => "FE",
            PathLabel::FF => "FF",
        };
        f.write_str(s)
    }
}

/// One-hop propagation path with fixed virtual heights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationPath<T> {
    /// 1-based path index.
    pub index: usize,
    pub label: PathLabel,
    /// Transmit-layer virtual height (km).
    pub h_t: T,
    /// Receive-layer virtual height (km).
    pub h_r: T,
    pub p_d: T,
}

impl<T: Real> PropagationPath<T> {
    pub fn new(index: usize, label: PathLabel, h_t: T, h_r: T, p_d: T) -> Result<Self> {
        if !(h_t > T::zero() && h_r > T::zero()) {
            return Err(Error::InvalidModel("virtual heights must be positive".into()));
        }
        if !(p_d >= T::zero() && p_d <= T::one()) {
            return Err(Error::InvalidModel("detection probability outside [0, 1]".into()));
        }
        Ok(Self { index, label, h_t, h_r, p_d })
    }
}

/// The EE, EF, FE, FF path table, indexed 1..=4 in that order.
pub fn standard_path_table<T: Real>(h_e: T, h_f: T, p_d: T) -> Result<Vec<PropagationPath<T>>> {
    [
        (PathLabel::EE, h_e, h_e),
        (PathLabel::EF, h_e, h_f),
        (PathLabel::FE, h_f, h_e),
        (PathLabel::FF, h_f, h_f),
    ]
    .into_iter()
    .enumerate()
    .map(|(n, (label, h_t, h_r))| PropagationPath::new(n + 1, label, h_t, h_r, p_d))
    .collect()
}

/// Linear motion model `x_{k+1} = F x_k + v`, `v ~ N(0, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel<T: Real> {
    pub f: StateMatrix<T>,
    pub q: StateMatrix<T>,
}

impl<T: Real> MotionModel<T> {
    /// Builds the constant-velocity model `I_2 (x) [[1, T_s], [0, 1]]`.
    ///
    /// `q` must be symmetric positive semidefinite.
    pub fn constant_velocity(sample_period: T, q: StateMatrix<T>) -> Result<Self> {
        if !sample_period.is_finite() || sample_period <= T::zero() {
            return Err(Error::InvalidModel("sample period must be positive".into()));
        }
        check_psd(&q)?;
        Ok(Self { f: cv_transition(sample_period), q })
    }

    /// As [`MotionModel::constant_velocity`], but an indefinite `q` is replaced by
    /// its nearest positive semidefinite matrix (negative eigenvalues clipped).
    pub fn constant_velocity_projected(sample_period: T, q: StateMatrix<T>) -> Result<Self> {
        let repaired = project_psd(&q);
        if repaired != q {
            // once per process; Monte-Carlo batches rebuild the model per run
            static WARNED: std::sync::Once = std::sync::Once::new();
            WARNED.call_once(|| log::warn!("process noise covariance was indefinite; projected onto the PSD cone"));
        }
        Self::constant_velocity(sample_period, repaired)
    }

    /// Noise-free mean prediction `F x`.
    pub fn propagate(&self, x: &GroundState<T>) -> GroundState<T> {
        GroundState::from_vector(&(self.f * x.to_vector()))
    }
}

fn cv_transition<T: Real>(ts: T) -> StateMatrix<T> {
    let mut f = StateMatrix::identity();
    f[(0, 1)] = ts;
    f[(2, 3)] = ts;
    f
}

fn check_psd<T: Real>(q: &StateMatrix<T>) -> Result<()> {
    if !q.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidModel("process noise has non-finite entries".into()));
    }
    let asym = (q - q.transpose()).abs().max();
    let scale = q.abs().max().max(T::one());
    if asym > lit::<T>(1e-12) * scale {
        return Err(Error::InvalidModel("process noise is not symmetric".into()));
    }
    let eig = q.symmetric_eigenvalues();
    let tol = lit::<T>(-1e-12) * scale;
    if eig.iter().any(|&e| e < tol) {
        return Err(Error::InvalidModel("process noise is not positive semidefinite".into()));
    }
    Ok(())
}

/// Nearest (Frobenius) symmetric positive semidefinite matrix.
pub fn project_psd<T: Real>(q: &StateMatrix<T>) -> StateMatrix<T> {
    let sym = (q + q.transpose()) * lit::<T>(0.5);
    let eig = sym.symmetric_eigen();
    if eig.eigenvalues.iter().all(|&e| e >= T::zero()) {
        return *q;
    }
    let clipped = eig.eigenvalues.map(|e| e.max(T::zero()));
    let out = eig.eigenvectors * StateMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    (out + out.transpose()) * lit::<T>(0.5)
}

/// Transmitter/receiver baseline and per-path measurement noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorGeometry<T: Real> {
    /// Transmitter-receiver distance `d` (km).
    pub baseline: T,
    /// `R^tau`, indexed by `path.index - 1`.
    pub noise: Vec<MeasMatrix<T>>,
}

impl<T: Real> SensorGeometry<T> {
    pub fn new(baseline: T, noise: Vec<MeasMatrix<T>>) -> Result<Self> {
        if !(baseline >= T::zero()) {
            return Err(Error::InvalidModel("baseline must be non-negative".into()));
        }
        for r in &noise {
            if r.cholesky().is_none() || (r - r.transpose()).abs().max() > T::zero() {
                return Err(Error::InvalidModel(
                    "measurement noise must be symmetric positive definite".into(),
                ));
            }
        }
        Ok(Self { baseline, noise })
    }

    pub fn noise_for(&self, path: &PropagationPath<T>) -> &MeasMatrix<T> {
        &self.noise[path.index - 1]
    }
}

struct Legs<T> {
    r_alpha: T,
    r_beta: T,
    sin_t: T,
    cos_t: T,
}

fn legs<T: Real>(g: T, theta: T, h_t: T, h_r: T, d: T) -> Legs<T> {
    let four = lit::<T>(4.0);
    let (sin_t, cos_t) = theta.sin_cos();
    let r_alpha = (g * g / four + h_r * h_r).sqrt();
    let r_beta = ((g * g - lit::<T>(2.0) * d * g * sin_t + d * d) / four + h_t * h_t).sqrt();
    Legs { r_alpha, r_beta, sin_t, cos_t }
}

/// Noise-free slant measurement `[r, r_dot, zeta]` of a state vector.
pub fn measure_vector<T: Real>(x: &StateVector<T>, h_t: T, h_r: T, d: T) -> Result<MeasVector<T>> {
    let (g, g_dot, theta) = (x[0], x[1], x[2]);
    let l = legs(g, theta, h_t, h_r, d);
    let r = l.r_alpha + l.r_beta;
    let r_dot = g_dot / lit(4.0) * (g / l.r_alpha + (g - d * l.sin_t) / l.r_beta);
    let w = g * l.sin_t / (lit::<T>(2.0) * l.r_alpha);
    if !(w >= -T::one() && w <= T::one()) {
        return Err(Error::Domain(format!(
            "azimuth arcsin argument {} outside [-1, 1]",
            crate::scalar::to_f64(w)
        )));
    }
    Ok(Vector3::new(r, r_dot, w.asin()))
}

/// Noise-free slant measurement of `x` through `path`.
pub fn slant_measure<T: Real>(
    x: &GroundState<T>,
    path: &PropagationPath<T>,
    geom: &SensorGeometry<T>,
) -> Result<SlantMeasurement<T>> {
    let v = measure_vector(&x.to_vector(), path.h_t, path.h_r, geom.baseline)?;
    Ok(SlantMeasurement::from_vector(&v, 0))
}

/// Analytic Jacobian of [`measure_vector`] with respect to the state.
pub fn jacobian_vector<T: Real>(x: &StateVector<T>, h_t: T, h_r: T, d: T) -> Result<Jacobian<T>> {
    // domain check shared with the forward map
    measure_vector(x, h_t, h_r, d)?;
    let (g, g_dot, theta) = (x[0], x[1], x[2]);
    let Legs { r_alpha: ra, r_beta: rb, sin_t, cos_t } = legs(g, theta, h_t, h_r, d);
    let two = lit::<T>(2.0);
    let four = lit::<T>(4.0);
    let eight = lit::<T>(8.0);
    let u = g - d * sin_t;

    let dra_dg = g / (four * ra);
    let drb_dg = u / (four * rb);
    let drb_dth = -(d * g * cos_t) / (four * rb);

    let a = g / ra;
    let b = u / rb;
    let da_dg = T::one() / ra - g * dra_dg / (ra * ra);
    let db_dg = T::one() / rb - u * drb_dg / (rb * rb);
    let db_dth = -(d * cos_t) / rb - u * drb_dth / (rb * rb);

    let w = g * sin_t / (two * ra);
    let dzeta_dw = T::one() / (T::one() - w * w).sqrt();
    let dw_dg = sin_t / (two * ra) - g * g * sin_t / (eight * ra * ra * ra);
    let dw_dth = g * cos_t / (two * ra);

    let mut h = Jacobian::zeros();
    h[(0, 0)] = dra_dg + drb_dg;
    h[(0, 2)] = drb_dth;
    h[(1, 0)] = g_dot / four * (da_dg + db_dg);
    h[(1, 1)] = (a + b) / four;
    h[(1, 2)] = g_dot / four * db_dth;
    h[(2, 0)] = dzeta_dw * dw_dg;
    h[(2, 2)] = dzeta_dw * dw_dth;
    Ok(h)
}

/// Measurement Jacobian `H = dy/dx` at `x` for `path`.
pub fn measurement_jacobian<T: Real>(
    x: &GroundState<T>,
    path: &PropagationPath<T>,
    geom: &SensorGeometry<T>,
) -> Result<Jacobian<T>> {
    jacobian_vector(&x.to_vector(), path.h_t, path.h_r, geom.baseline)
}

/// Central-difference Jacobian with step `1e-6 * max(1, |x_n|)`.
pub fn numerical_jacobian<T: Real>(x: &StateVector<T>, h_t: T, h_r: T, d: T) -> Result<Jacobian<T>> {
    let mut h = Jacobian::zeros();
    for n in 0..STATE_DIM {
        let step = lit::<T>(1e-6) * T::one().max(x[n].abs());
        let mut hi = *x;
        let mut lo = *x;
        hi[n] += step;
        lo[n] -= step;
        let col = (measure_vector(&hi, h_t, h_r, d)? - measure_vector(&lo, h_t, h_r, d)?)
            / (lit::<T>(2.0) * step);
        h.set_column(n, &col);
    }
    Ok(h)
}

/// Inverts the range/azimuth geometry of one path: returns `(g, g_dot, theta)`
/// consistent with a slant measurement. Used to seed track heads.
pub fn back_project<T: Real>(y: &MeasVector<T>, h_t: T, h_r: T, d: T) -> Result<(T, T, T)> {
    let (r_obs, r_dot_obs, zeta_obs) = (y[0], y[1], y[2]);
    // d = 0 closed form for the starting range: r ~ g + (h_t^2 + h_r^2)/g
    let mut g = r_obs - (h_t * h_t + h_r * h_r) / r_obs;
    let mut theta = zeta_obs;
    for _ in 0..50 {
        let x = StateVector::new(g, T::zero(), theta, T::zero());
        let y_hat = measure_vector(&x, h_t, h_r, d)?;
        let jac = jacobian_vector(&x, h_t, h_r, d)?;
        let resid = nalgebra::Vector2::new(r_obs - y_hat[0], zeta_obs - y_hat[2]);
        let j2 = Matrix2::new(jac[(0, 0)], jac[(0, 2)], jac[(2, 0)], jac[(2, 2)]);
        let step = j2
            .try_inverse()
            .ok_or_else(|| Error::Domain("singular back-projection Jacobian".into()))?
            * resid;
        g += step[0];
        theta += step[1];
        if step[0].abs() < lit(1e-9) && step[1].abs() < lit(1e-12) {
            break;
        }
    }
    if !(g > T::zero()) {
        return Err(Error::Domain("back-projection produced non-positive range".into()));
    }
    let l = legs(g, theta, h_t, h_r, d);
    let gain = (g / l.r_alpha + (g - d * l.sin_t) / l.r_beta) / lit(4.0);
    Ok((g, r_dot_obs / gain, theta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn first_target() -> GroundState<f64> {
        GroundState::new(1700.0, 0.1, 0.48, 8.7e-5)
    }

    fn configured_q() -> StateMatrix<f64> {
        let mut q = StateMatrix::zeros();
        q[(0, 0)] = 8e-6;
        q[(0, 1)] = 4e-6;
        q[(1, 0)] = 4e-6;
        q[(1, 1)] = 1e-6;
        q[(2, 2)] = 1e-6;
        q[(2, 3)] = 1e-8;
        q[(3, 2)] = 1e-8;
        q[(3, 3)] = 1e-7;
        q
    }

    fn geom(d: f64) -> SensorGeometry<f64> {
        SensorGeometry::new(d, vec![Matrix3::from_diagonal(&Vector3::new(25.0, 1e-6, 9e-6)); 4]).unwrap()
    }

    #[test]
    fn propagate_constant_velocity() {
        let m = MotionModel::constant_velocity(16.0, StateMatrix::zeros()).unwrap();
        let x = m.propagate(&first_target());
        assert!((x.g - 1701.6).abs() < 1e-9);
        assert_eq!(x.g_dot, 0.1);
        assert!((x.theta - 0.481392).abs() < 1e-12);
        assert_eq!(x.theta_dot, 8.7e-5);
    }

    #[test]
    fn propagate_zero_velocity_is_identity_on_positions() {
        let m = MotionModel::constant_velocity(16.0, StateMatrix::zeros()).unwrap();
        let x0 = GroundState::new(1600.0, 0.0, 0.5, 0.0);
        assert_eq!(m.propagate(&x0), x0);
    }

    #[test]
    fn propagate_nineteen_steps_matches_closed_form() {
        let m = MotionModel::constant_velocity(16.0, StateMatrix::zeros()).unwrap();
        let x0 = first_target();
        let mut x = x0;
        for _ in 0..19 {
            x = m.propagate(&x);
        }
        let t = 19.0 * 16.0;
        assert!((x.g - (x0.g + t * x0.g_dot)).abs() < 1e-9);
        assert!((x.theta - (x0.theta + t * x0.theta_dot)).abs() < 1e-12);
    }

    #[test]
    fn indefinite_process_noise_is_rejected_or_projected() {
        assert!(MotionModel::constant_velocity(16.0, configured_q()).is_err());
        let m = MotionModel::constant_velocity_projected(16.0, configured_q()).unwrap();
        assert!(m.q.symmetric_eigenvalues().iter().all(|&e| e >= -1e-18));
        // the bearing block is already PSD and must be untouched
        assert!((m.q[(2, 2)] - 1e-6).abs() < 1e-15);
        assert!((m.q[(3, 3)] - 1e-7).abs() < 1e-15);
    }

    #[test]
    fn slant_range_closed_form_at_zero_baseline() {
        let paths = standard_path_table(100.0, 260.0, 0.5).unwrap();
        for theta in [0.0, 0.3, 0.55] {
            let x = GroundState::new(1700.0, 0.1, theta, 0.0);
            let y = slant_measure(&x, &paths[0], &geom(0.0)).unwrap();
            let expected = 2.0 * (1700.0f64 * 1700.0 / 4.0 + 100.0 * 100.0).sqrt();
            assert!((y.r - expected).abs() < 1e-9);
            assert!((y.r - 1711.724).abs() < 1e-3);
        }
    }

    #[test]
    fn ef_fe_symmetry_at_zero_baseline() {
        let paths = standard_path_table(100.0, 260.0, 0.5).unwrap();
        let x = GroundState::new(1833.0, -0.21, 0.51, 3e-5);
        let ef = slant_measure(&x, &paths[1], &geom(0.0)).unwrap();
        let fe = slant_measure(&x, &paths[2], &geom(0.0)).unwrap();
        assert!((ef.r - fe.r).abs() < 1e-10);
        assert!((ef.r_dot - fe.r_dot).abs() < 1e-12);
        // azimuth follows the receive height only
        let ee = slant_measure(&x, &paths[0], &geom(0.0)).unwrap();
        assert!((fe.zeta - ee.zeta).abs() < 1e-15);
        assert!((ef.zeta - fe.zeta).abs() > 1e-3);
    }

    #[test]
    fn ff_path_matches_direct_formula() {
        // Direct transcription at the default precision; the extended-precision
        // oracle lives in the integration tests.
        let x = first_target();
        let (g, gd, th) = (x.g, x.g_dot, x.theta);
        let (h, d) = (260.0f64, 100.0f64);
        let ra = (g * g / 4.0 + h * h).sqrt();
        let rb = ((g * g - 2.0 * d * g * th.sin() + d * d) / 4.0 + h * h).sqrt();
        let paths = standard_path_table(100.0, 260.0, 0.5).unwrap();
        let y = slant_measure(&x, &paths[3], &geom(d)).unwrap();
        assert!((y.r - (ra + rb)).abs() < 1e-9);
        assert!((y.r_dot - gd / 4.0 * (g / ra + (g - d * th.sin()) / rb)).abs() < 1e-14);
        assert!((y.zeta - (g * th.sin() / (2.0 * ra)).asin()).abs() < 1e-14);
    }

    #[test]
    fn non_finite_azimuth_argument_is_a_domain_error() {
        // |g sin(theta) / (2 r_alpha)| < 1 for every real state, so only a
        // non-finite state can leave the arcsin domain
        let x = StateVector::new(1700.0, 0.0, f64::NAN, 0.0);
        assert!(matches!(measure_vector(&x, 100.0, 100.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(jacobian_vector(&x, 100.0, 100.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn jacobian_structural_zeros() {
        let paths = standard_path_table(100.0, 260.0, 0.5).unwrap();
        let x = GroundState::new(1750.0, 0.2, 0.5, 1e-4);
        for p in &paths {
            let h = measurement_jacobian(&x, p, &geom(100.0)).unwrap();
            assert_eq!(h[(0, 1)], 0.0);
            assert_eq!(h[(0, 3)], 0.0);
        }
        let x0 = GroundState::new(1750.0, 0.2, 0.0, 1e-4);
        let h = measurement_jacobian(&x0, &paths[0], &geom(0.0)).unwrap();
        assert_eq!(h[(2, 0)], 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let x = StateVector::<f64>::new(1820.0, -0.3, 0.47, 2e-4);
        for (ht, hr) in [(100.0, 100.0), (100.0, 260.0), (260.0, 100.0), (260.0, 260.0)] {
            let a = jacobian_vector(&x, ht, hr, 100.0).unwrap();
            let n = numerical_jacobian(&x, ht, hr, 100.0).unwrap();
            for (u, v) in a.iter().zip(n.iter()) {
                let denom = u.abs().max(v.abs());
                if denom > 0.0 {
                    assert!((u - v).abs() / denom < 1e-5, "{u} vs {v}");
                }
            }
        }
    }

    #[test]
    fn path_table_order_and_heights() {
        let paths = standard_path_table(100.0, 260.0, 0.5).unwrap();
        let labels: Vec<_> = paths.iter().map(|p| p.label).collect();
        assert_eq!(labels, [PathLabel::EE, PathLabel::EF, PathLabel::FE, PathLabel::FF]);
        assert_eq!(paths[0].index, 1);
        assert_eq!(paths[3].index, 4);
        assert_eq!((paths[1].h_t, paths[1].h_r), (100.0, 260.0));
        let flat = standard_path_table(150.0, 150.0, 0.5).unwrap();
        assert!(flat.iter().all(|p| p.h_t == 150.0 && p.h_r == 150.0));
        assert!(standard_path_table(-1.0, 260.0, 0.5).is_err());
    }

    #[test]
    fn back_projection_inverts_measurement() {
        let paths = standard_path_table(100.0, 260.0, 0.5).unwrap();
        let x = StateVector::<f64>::new(1777.0, 0.15, 0.52, 0.0);
        for p in &paths {
            let y = measure_vector(&x, p.h_t, p.h_r, 100.0).unwrap();
            let (g, gd, th) = back_project(&y, p.h_t, p.h_r, 100.0).unwrap();
            assert!((g - 1777.0).abs() < 1e-6);
            assert!((gd - 0.15).abs() < 1e-9);
            assert!((th - 0.52).abs() < 1e-9);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let paths = standard_path_table(100.0f32, 260.0, 0.5).unwrap();
        let g = SensorGeometry::new(100.0f32, vec![Matrix3::identity(); 4]).unwrap();
        let y = slant_measure(&GroundState::new(1700.0f32, 0.1, 0.48, 8.7e-5), &paths[0], &g).unwrap();
        assert!((y.r - 1745.0).abs() < 60.0);
    }
}
