//! Multipath data association: conjugate assignment parameters, loopy BP
//! marginals and path-association probabilities.

mod lbp;
mod paths;

pub use lbp::{build_factor_graph, run_lbp, run_lbp_traced, FactorGraph, LbpOptions, MessageKind};
pub use paths::{bethe_entropy, path_entropy, path_weights, PathWeights};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::existence::PD_CLAMP;
use crate::models::{MeasMatrix, MeasVector};
use crate::scalar::{lit, Real};

/// Gated association variable `a^{i,j}` with its parameter `chi^{i,j}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair<T> {
    /// Row (target) position within the problem, 0-based.
    pub target: usize,
    /// Column (measurement) position within the problem, 0-based.
    pub meas: usize,
    pub chi: T,
}

/// One scan/path association problem over gated target-measurement pairs.
///
/// Pairs absent from `pairs` are outside the gate and forced to zero.
/// The missed-detection column (`chi^{i,0}`) and clutter row (`chi^{0,j}`)
/// are always present.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentProblem<T> {
    pub scan: usize,
    pub path: usize,
    /// Global target ids, one per row.
    pub targets: Vec<usize>,
    /// Scan-local measurement indices, one per column.
    pub measurements: Vec<usize>,
    pub chi_miss: Vec<T>,
    pub chi_clutter: Vec<T>,
    pub pairs: Vec<Pair<T>>,
}

impl<T: Real> AssignmentProblem<T> {
    /// Problem with default ids (`0..n`) and zero miss parameters.
    pub fn new(n_targets: usize, n_meas: usize, chi_clutter: T, pairs: Vec<Pair<T>>) -> Self {
        Self {
            scan: 0,
            path: 0,
            targets: (0..n_targets).collect(),
            measurements: (0..n_meas).collect(),
            chi_miss: vec![T::zero(); n_targets],
            chi_clutter: vec![chi_clutter; n_meas],
            pairs,
        }
    }

    /// Fully connected problem from a dense `(N_T+1) x (N_E+1)` matrix;
    /// entry `(0, 0)` is ignored.
    pub fn from_dense(chi: &DMatrix<T>) -> Self {
        let (nt, ne) = (chi.nrows() - 1, chi.ncols() - 1);
        let mut pairs = Vec::with_capacity(nt * ne);
        for i in 0..nt {
            for j in 0..ne {
                pairs.push(Pair { target: i, meas: j, chi: chi[(i + 1, j + 1)] });
            }
        }
        Self {
            scan: 0,
            path: 0,
            targets: (0..nt).collect(),
            measurements: (0..ne).collect(),
            chi_miss: (0..nt).map(|i| chi[(i + 1, 0)]).collect(),
            chi_clutter: (0..ne).map(|j| chi[(0, j + 1)]).collect(),
            pairs,
        }
    }

    pub fn n_targets(&self) -> usize {
        self.chi_miss.len()
    }

    pub fn n_meas(&self) -> usize {
        self.chi_clutter.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (nt, ne) = (self.n_targets(), self.n_meas());
        if self.targets.len() != nt || self.measurements.len() != ne {
            return Err(Error::InvalidModel("id lists do not match parameter sizes".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.pairs {
            if p.target >= nt || p.meas >= ne || !seen.insert((p.target, p.meas)) {
                return Err(Error::InvalidModel(format!("bad pair ({}, {})", p.target, p.meas)));
            }
        }
        let all = self.chi_miss.iter().chain(&self.chi_clutter).chain(self.pairs.iter().map(|p| &p.chi));
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite chi".into()));
        }
        Ok(())
    }
}

/// Marginals `E[a^{i,j}]` of one [`AssignmentProblem`], stored in the same
/// sparse layout.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMarginals<T> {
    /// `E[a^{i,0}]` per row.
    pub miss: Vec<T>,
    /// `E[a^{0,j}]` per column.
    pub clutter: Vec<T>,
    /// Aligned with `AssignmentProblem::pairs`.
    pub pairs: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
}

impl<T: Real> AssignmentMarginals<T> {
    pub fn row_sum(&self, problem: &AssignmentProblem<T>, i: usize) -> T {
        problem
            .pairs
            .iter()
            .zip(&self.pairs)
            .filter(|(p, _)| p.target == i)
            .fold(self.miss[i], |acc, (_, &m)| acc + m)
    }

    pub fn col_sum(&self, problem: &AssignmentProblem<T>, j: usize) -> T {
        problem
            .pairs
            .iter()
            .zip(&self.pairs)
            .filter(|(p, _)| p.meas == j)
            .fold(self.clutter[j], |acc, (_, &m)| acc + m)
    }

    /// Dense `(N_T+1) x (N_E+1)` view; entry `(0, 0)` is zero.
    pub fn to_dense(&self, problem: &AssignmentProblem<T>) -> DMatrix<T> {
        let mut m = DMatrix::zeros(problem.n_targets() + 1, problem.n_meas() + 1);
        for (i, &v) in self.miss.iter().enumerate() {
            m[(i + 1, 0)] = v;
        }
        for (j, &v) in self.clutter.iter().enumerate() {
            m[(0, j + 1)] = v;
        }
        for (p, &v) in problem.pairs.iter().zip(&self.pairs) {
            m[(p.target + 1, p.meas + 1)] = v;
        }
        m
    }

    /// Largest violation of the row/column sum-to-one constraints.
    pub fn max_constraint_violation(&self, problem: &AssignmentProblem<T>) -> T {
        let rows = (0..problem.n_targets()).map(|i| (self.row_sum(problem, i) - T::one()).abs());
        let cols = (0..problem.n_meas()).map(|j| (self.col_sum(problem, j) - T::one()).abs());
        rows.chain(cols).fold(T::zero(), |a, b| a.max(b))
    }
}

fn log_odds<T: Real>(p_d: T, lambda: T) -> T {
    let eps = lit::<T>(PD_CLAMP);
    let p = p_d.max(eps).min(T::one() - eps);
    (p / ((T::one() - p) * lambda)).ln()
}

/// Prior parameter `chi^{i,j}` for a target-measurement pair.
/// The miss and clutter entries of the prior are zero.
pub fn chi_prior<T: Real>(p_d: T, lambda: T) -> Result<T> {
    if !(lambda > T::zero()) {
        return Err(Error::Domain("clutter parameter must be positive".into()));
    }
    Ok(log_odds(p_d, lambda))
}

/// Per-(target, path, scan) part of the posterior `chi`: everything except
/// the measurement-dependent Mahalanobis term.
#[derive(Debug, Clone)]
pub struct ChiContext<T: Real> {
    pub y_hat: MeasVector<T>,
    pub s_inv: MeasMatrix<T>,
    /// `-1/2 Tr(S^-1 H P H^T) + C_k + E_s`.
    pub base: T,
}

impl<T: Real> ChiContext<T> {
    /// `hph` is the state uncertainty mapped to measurement space (`H P H^T`).
    /// `p_d[s]` is the detection probability under meta-state `s`.
    pub fn new(
        y_hat: MeasVector<T>,
        s: &MeasMatrix<T>,
        hph: &MeasMatrix<T>,
        q_active: T,
        p_d: [T; 2],
        lambda: T,
    ) -> Result<Self> {
        let chol = s.cholesky().ok_or(Error::SingularInnovation)?;
        let s_inv = chol.inverse();
        let log_det = chol.l().diagonal().iter().fold(T::zero(), |a, &d| a + d.ln()) * lit::<T>(2.0);
        let half = lit::<T>(0.5);
        let trace = (s_inv * hph).trace();
        // C_k = log(2 pi |S|^{-1/2})
        let c_k = T::two_pi().ln() - half * log_det;
        let e_s = (T::one() - q_active) * chi_prior(p_d[0], lambda)? + q_active * chi_prior(p_d[1], lambda)?;
        let base = -half * trace + c_k + e_s;
        if !base.is_finite() {
            return Err(Error::SingularInnovation);
        }
        Ok(Self { y_hat, s_inv, base })
    }

    pub fn mahalanobis(&self, y: &MeasVector<T>) -> T {
        let e = y - self.y_hat;
        (e.transpose() * self.s_inv * e)[(0, 0)]
    }

    /// `chi_p^{i,j}` for measurement `y`.
    pub fn chi(&self, y: &MeasVector<T>) -> T {
        self.base - lit::<T>(0.5) * self.mahalanobis(y)
    }
}

/// Single posterior entry `chi_p^{i,j} = E_x + E_s`.
#[allow(clippy::too_many_arguments)]
pub fn chi_posterior<T: Real>(
    y: &MeasVector<T>,
    y_hat: &MeasVector<T>,
    s: &MeasMatrix<T>,
    hph: &MeasMatrix<T>,
    q_active: T,
    p_d: [T; 2],
    lambda: T,
) -> Result<T> {
    Ok(ChiContext::new(*y_hat, s, hph, q_active, p_d, lambda)?.chi(y))
}

/// Posterior clutter entry `chi_p^{0,j} = log p_c`.
pub fn chi_clutter<T: Real>(p_c: T) -> Result<T> {
    if !(p_c > T::zero()) {
        return Err(Error::Domain("clutter density must be positive".into()));
    }
    Ok(p_c.ln())
}
