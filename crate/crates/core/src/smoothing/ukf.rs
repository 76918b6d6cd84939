//! Unscented forward filter and Rauch-Tung-Striebel backward pass.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Unscented transform parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UtParams {
    fn default() -> Self {
        Self { alpha: 0.5, beta: 2.0, kappa: 0.0 }
    }
}

/// Jitter retries before giving up on a square root.
pub const JITTER_RETRIES: usize = 3;

/// Lower Cholesky factor, retrying with `1e-9 * trace` diagonal jitter.
pub fn sqrt_cov<T: Real, const N: usize>(p: &SMatrix<T, N, N>) -> Result<SMatrix<T, N, N>> {
    let step = lit::<T>(1e-9) * p.trace().abs().max(lit::<T>(1e-300).max(T::default_epsilon()));
    let mut m = *p;
    for retry in 0..=JITTER_RETRIES {
        if let Some(c) = m.cholesky() {
            if retry > 0 {
                log::debug!("covariance square root needed {retry} jitter retries");
            }
            return Ok(c.l());
        }
        for i in 0..N {
            m[(i, i)] += step;
        }
    }
    Err(Error::CovarianceBreakdown { retries: JITTER_RETRIES })
}

pub fn symmetrize<T: Real, const N: usize>(p: &SMatrix<T, N, N>) -> SMatrix<T, N, N> {
    (p + p.transpose()) * lit::<T>(0.5)
}

struct SigmaSet<T: Real, const N: usize> {
    points: Vec<SVector<T, N>>,
    wm: Vec<T>,
    wc: Vec<T>,
}

fn sigma_points<T: Real, const N: usize>(
    x: &SVector<T, N>,
    p: &SMatrix<T, N, N>,
    ut: &UtParams,
) -> Result<SigmaSet<T, N>> {
    let n = N as f64;
    let lambda = ut.alpha * ut.alpha * (n + ut.kappa) - n;
    let l = sqrt_cov(p)? * lit::<T>((n + lambda).sqrt());
    let mut points = Vec::with_capacity(2 * N + 1);
    points.push(*x);
    for i in 0..N {
        points.push(x + l.column(i));
    }
    for i in 0..N {
        points.push(x - l.column(i));
    }
    let w = 1.0 / (2.0 * (n + lambda));
    let mut wm = vec![lit::<T>(w); 2 * N + 1];
    let mut wc = wm.clone();
    wm[0] = lit(lambda / (n + lambda));
    wc[0] = lit(lambda / (n + lambda) + 1.0 - ut.alpha * ut.alpha + ut.beta);
    Ok(SigmaSet { points, wm, wc })
}

/// Unscented moments of `h(x)`: mean, covariance (no additive noise) and
/// cross-covariance `Cov(x, h(x))`.
pub fn unscented_transform<T: Real, const N: usize, const M: usize>(
    x: &SVector<T, N>,
    p: &SMatrix<T, N, N>,
    h: &impl Fn(&SVector<T, N>) -> Result<SVector<T, M>>,
    ut: &UtParams,
) -> Result<(SVector<T, M>, SMatrix<T, M, M>, SMatrix<T, N, M>)> {
    let s = sigma_points(x, p, ut)?;
    let ys = s.points.iter().map(h).collect::<Result<Vec<_>>>()?;
    let mut mean = SVector::<T, M>::zeros();
    for (y, &w) in ys.iter().zip(&s.wm) {
        mean += y * w;
    }
    let mut cov = SMatrix::<T, M, M>::zeros();
    let mut cross = SMatrix::<T, N, M>::zeros();
    for ((y, xp), &w) in ys.iter().zip(&s.points).zip(&s.wc) {
        let dy = y - mean;
        cov += dy * dy.transpose() * w;
        cross += (xp - x) * dy.transpose() * w;
    }
    Ok((mean, symmetrize(&cov), cross))
}

/// Linear-Gaussian dynamics `x_k = F x_{k-1} + w`, `w ~ N(0, Q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dynamics<T: Real, const N: usize> {
    pub f: SMatrix<T, N, N>,
    pub q: SMatrix<T, N, N>,
}

/// Synthetic measurement for one scan; `None` means prediction only.
pub type Observation<T, const M: usize> = Option<(SVector<T, M>, SMatrix<T, M, M>)>;

/// Per-scan output of [`ukf_forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardStep<T: Real, const N: usize, const M: usize> {
    pub x_pred: SVector<T, N>,
    pub p_pred: SMatrix<T, N, N>,
    /// `Cov(x_{k-1}, x_k)` under the filtered `k-1` posterior (zero at the first scan).
    pub cross: SMatrix<T, N, N>,
    pub x: SVector<T, N>,
    pub p: SMatrix<T, N, N>,
    pub y_pred: SVector<T, M>,
    /// Innovation covariance (with the observation covariance when updated).
    pub s: SMatrix<T, M, M>,
    pub updated: bool,
    /// `log N(y; y_pred, S)` for updated scans, zero otherwise.
    pub log_likelihood: T,
}

fn log_gauss<T: Real, const M: usize>(e: &SVector<T, M>, s: &SMatrix<T, M, M>) -> Result<T> {
    let c = s.cholesky().ok_or(Error::SingularInnovation)?;
    let z = c.solve(e);
    let log_det = c.l().diagonal().iter().fold(T::zero(), |a, &d| a + d.ln()) * lit::<T>(2.0);
    let half = lit::<T>(0.5);
    Ok(-half * (e.dot(&z) + log_det + lit::<T>(M as f64) * T::two_pi().ln()))
}

/// Unscented Kalman filter. `prior` is the distribution of the state at
/// the first scan before its observation; `fallback_r` gives the innovation
/// covariance reported on prediction-only scans.
pub fn ukf_forward<T: Real, const N: usize, const M: usize>(
    dynamics: &Dynamics<T, N>,
    h: &impl Fn(&SVector<T, N>) -> Result<SVector<T, M>>,
    fallback_r: &SMatrix<T, M, M>,
    observations: &[Observation<T, M>],
    prior: (SVector<T, N>, SMatrix<T, N, N>),
    ut: &UtParams,
) -> Result<Vec<ForwardStep<T, N, M>>> {
    let mut out: Vec<ForwardStep<T, N, M>> = Vec::with_capacity(observations.len());
    let fx = |x: &SVector<T, N>| -> Result<SVector<T, N>> { Ok(dynamics.f * x) };
    for (k, obs) in observations.iter().enumerate() {
        let (x_pred, p_pred, cross) = match out.last() {
            None => (prior.0, prior.1, SMatrix::zeros()),
            Some(prev) => {
                let (m, c, d) = unscented_transform(&prev.x, &prev.p, &fx, ut)?;
                (m, symmetrize(&(c + dynamics.q)), d)
            }
        };
        let (y_pred, pyy, pxy) = unscented_transform(&x_pred, &p_pred, h, ut)?;
        let step = match obs {
            Some((y, r)) => {
                let s = symmetrize(&(pyy + r));
                let chol = s.cholesky().ok_or(Error::SingularInnovation)?;
                let gain = chol.solve(&pxy.transpose()).transpose();
                let e = y - y_pred;
                let x = x_pred + gain * e;
                let p = symmetrize(&(p_pred - gain * s * gain.transpose()));
                sqrt_cov(&p)?;
                let log_likelihood = log_gauss(&e, &s)?;
                ForwardStep { x_pred, p_pred, cross, x, p, y_pred, s, updated: true, log_likelihood }
            }
            None => ForwardStep {
                x_pred,
                p_pred,
                cross,
                x: x_pred,
                p: p_pred,
                y_pred,
                s: symmetrize(&(pyy + fallback_r)),
                updated: false,
                log_likelihood: T::zero(),
            },
        };
        if !step.x.iter().all(|v| v.is_finite()) {
            return Err(Error::CovarianceBreakdown { retries: 0 });
        }
        log::trace!("ukf scan {k} updated={}", step.updated);
        out.push(step);
    }
    Ok(out)
}

/// Backward RTS recursion over a forward pass; returns smoothed means and
/// covariances.
pub fn urts_backward<T: Real, const N: usize, const M: usize>(
    forward: &[ForwardStep<T, N, M>],
) -> Result<Vec<(SVector<T, N>, SMatrix<T, N, N>)>> {
    let k = forward.len();
    let mut out = vec![(SVector::zeros(), SMatrix::zeros()); k];
    if k == 0 {
        return Ok(out);
    }
    out[k - 1] = (forward[k - 1].x, forward[k - 1].p);
    for t in (0..k - 1).rev() {
        let next = &forward[t + 1];
        let chol = next.p_pred.cholesky().ok_or(Error::SingularCovariance)?;
        // G = D P_pred^{-1}
        let g = chol.solve(&next.cross.transpose()).transpose();
        let (xs, ps) = out[t + 1];
        let x = forward[t].x + g * (xs - next.x_pred);
        let p = symmetrize(&(forward[t].p + g * (ps - next.p_pred) * g.transpose()));
        sqrt_cov(&p)?;
        out[t] = (x, p);
    }
    Ok(out)
}
