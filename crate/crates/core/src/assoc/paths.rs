use nalgebra::{SMatrix, SVector};

use super::{AssignmentMarginals, AssignmentProblem};
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Floor applied to a zero Mahalanobis distance before `1/sqrt(D)`.
pub const DISTANCE_FLOOR: f64 = 1e-12;

/// Path-association probabilities of one target at one scan, with the
/// precision-weighted global estimate they were scored against.
#[derive(Debug, Clone, PartialEq)]
pub struct PathWeights<T: Real, const N: usize> {
    pub weights: Vec<T>,
    pub mean: SVector<T, N>,
    pub cov: SMatrix<T, N, N>,
}

fn spd_inverse<T: Real, const N: usize>(m: &SMatrix<T, N, N>) -> Result<SMatrix<T, N, N>> {
    m.cholesky().map(|c| c.inverse()).ok_or(Error::SingularCovariance)
}

/// Scores each path estimate by `1/sqrt(D)` where `D` is its Mahalanobis
/// distance to the precision-weighted global mean under `P_tau + Sigma`.
pub fn path_weights<T: Real, const N: usize>(
    estimates: &[(SVector<T, N>, SMatrix<T, N, N>)],
) -> Result<PathWeights<T, N>> {
    if estimates.is_empty() {
        return Err(Error::InvalidModel("no path estimates".into()));
    }
    let mut info = SMatrix::<T, N, N>::zeros();
    let mut info_mean = SVector::<T, N>::zeros();
    for (x, p) in estimates {
        let pi = spd_inverse(p)?;
        info += pi;
        info_mean += pi * x;
    }
    let cov = spd_inverse(&info)?;
    let mean = cov * info_mean;
    let floor = lit::<T>(DISTANCE_FLOOR);
    let mut weights = Vec::with_capacity(estimates.len());
    for (tau, (x, p)) in estimates.iter().enumerate() {
        let e = x - mean;
        let d = (e.transpose() * spd_inverse(&(p + cov))? * e)[(0, 0)];
        if !d.is_finite() {
            return Err(Error::DegenerateDistance(format!("path {tau}")));
        }
        weights.push(T::one() / d.max(floor).sqrt());
    }
    let total = weights.iter().fold(T::zero(), |a, &b| a + b);
    for w in &mut weights {
        *w /= total;
    }
    Ok(PathWeights { weights, mean, cov })
}

fn plogp<T: Real>(p: T) -> T {
    if p > T::zero() {
        p * p.ln()
    } else {
        T::zero()
    }
}

/// Bethe entropy of one association problem: row entropies plus column
/// entropies minus the binary entropies of the shared interior variables.
pub fn bethe_entropy<T: Real>(problem: &AssignmentProblem<T>, m: &AssignmentMarginals<T>) -> T {
    let mut row = m.miss.iter().map(|&p| plogp(p)).collect::<Vec<_>>();
    let mut col = m.clutter.iter().map(|&p| plogp(p)).collect::<Vec<_>>();
    let mut pair = T::zero();
    for (pr, &p) in problem.pairs.iter().zip(&m.pairs) {
        let h = plogp(p);
        row[pr.target] += h;
        col[pr.meas] += h;
        pair += h + plogp(T::one() - p);
    }
    let sum = |v: Vec<T>| v.into_iter().fold(T::zero(), |a, b| a + b);
    -sum(row) - sum(col) + pair
}

/// Entropy of a path-weight distribution.
pub fn path_entropy<T: Real>(weights: &[T]) -> T {
    -weights.iter().fold(T::zero(), |a, &w| a + plogp(w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assoc::{run_lbp, LbpOptions, Pair};
    use nalgebra::{Matrix4, Vector4};

    #[test]
    fn identical_estimates_are_uniform() {
        let e = (Vector4::new(1.0, 2.0, 3.0, 4.0), Matrix4::<f64>::identity());
        let w = path_weights(&[e, e, e, e]).unwrap();
        assert!(w.weights.iter().all(|&q| (q - 0.25).abs() < 1e-15));
    }

    #[test]
    fn distant_path_vanishes() {
        // the outlier must not dominate the global mean, so it also carries a wide covariance
        let p = Matrix4::<f64>::identity();
        let far = (Vector4::repeat(1e14), p * 1e14);
        let w = path_weights(&[(Vector4::zeros(), p), (Vector4::new(0.1, 0.0, 0.0, 0.0), p), far]).unwrap();
        assert!(w.weights[2] < 1e-6);
    }

    #[test]
    fn non_finite_distance_is_degenerate() {
        let p = Matrix4::<f64>::identity();
        let r = path_weights(&[(Vector4::zeros(), p), (Vector4::repeat(f64::INFINITY), p)]);
        assert!(r.is_err());
    }

    #[test]
    fn deterministic_marginals_have_zero_entropy() {
        let p = AssignmentProblem::<f64>::new(1, 1, -50.0, vec![Pair { target: 0, meas: 0, chi: 50.0 }]);
        let m = run_lbp(&p, &LbpOptions::default()).unwrap();
        assert!(bethe_entropy(&p, &m).abs() < 1e-12);
        assert_eq!(path_entropy(&[1.0f64, 0.0]), 0.0);
    }

    #[test]
    fn single_pair_entropy_is_exact() {
        let p = AssignmentProblem::new(1, 1, 0.2f64, vec![Pair { target: 0, meas: 0, chi: 0.9 }]);
        let m = run_lbp(&p, &LbpOptions::default()).unwrap();
        let q = m.pairs[0];
        let exact = -(q * q.ln() + (1.0 - q) * (1.0 - q).ln());
        assert!((bethe_entropy(&p, &m) - exact).abs() < 1e-14);
    }
}
