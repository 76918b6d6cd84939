//! Target existence: two-state meta-state chain, detection evidence,
//! forward-backward smoothing and track lifecycle decisions.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Detection probabilities are clamped to this band before taking logs.
pub const PD_CLAMP: f64 = 1e-6;

/// How the per-scan evidence `xi` becomes the observation factor `b_k(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvidenceForm {
    /// `b_k(s) = exp(s * xi_k(1))`, so `b_k(0) = 1`.
    #[default]
    ActiveOnly,
    /// `b_k(s) = exp(xi_k(s))`, evaluating `xi` with the dormant detection
    /// probability for `s = 0`.
    Symmetric,
}

/// Active/dormant Markov chain with lifecycle thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaModel<T: Real> {
    /// `initial[e] = p(s_1 = e)`.
    pub initial: [T; 2],
    /// `transition[(c, e)] = p(s_k = e | s_{k-1} = c)`; rows sum to one.
    pub transition: Matrix2<T>,
    /// Birth (initiation) threshold.
    pub delta_b: T,
    /// Survival (maintenance) threshold.
    pub delta_m: T,
}

impl<T: Real> MetaModel<T> {
    pub fn new(p_active: T, transition: Matrix2<T>, delta_b: T, delta_m: T) -> Result<Self> {
        let tol = lit::<T>(1e-9);
        for c in 0..2 {
            let row = transition.row(c);
            if row.iter().any(|&p| p < T::zero()) || (row.sum() - T::one()).abs() > tol {
                return Err(Error::InvalidModel("transition rows must be distributions".into()));
            }
        }
        if !(p_active >= T::zero() && p_active <= T::one()) {
            return Err(Error::InvalidModel("initial active probability outside [0, 1]".into()));
        }
        let unit = |x: T| x > T::zero() && x < T::one();
        if !unit(delta_b) || !unit(delta_m) {
            return Err(Error::InvalidModel("thresholds must lie in (0, 1)".into()));
        }
        Ok(Self { initial: [T::one() - p_active, p_active], transition, delta_b, delta_m })
    }
}

/// Per-target existence posterior and hard decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct ExistencePosterior<T> {
    /// `q(s_k = 1)` per scan.
    pub q_active: Vec<T>,
    pub decisions: Vec<bool>,
}

fn clamp_pd<T: Real>(p: T) -> T {
    let eps = lit::<T>(PD_CLAMP);
    p.max(eps).min(T::one() - eps)
}

/// Evidence `[xi(0), xi(1)]` for one target at one scan.
///
/// `path_weights[tau] = E[phi^{i,tau}]`, `miss[tau] = E[a^{i,0,tau}]`,
/// and `p_d[s][tau]` is the detection probability of path `tau` under meta-state `s`.
pub fn xi_evidence<T: Real>(path_weights: &[T], miss: &[T], p_d: [&[T]; 2]) -> [T; 2] {
    let mut xi = [T::zero(); 2];
    for (s, out) in xi.iter_mut().enumerate() {
        for (tau, (&w, &m)) in path_weights.iter().zip(miss).enumerate() {
            let pd = clamp_pd(p_d[s][tau]);
            *out += w * ((T::one() - m) * pd.ln() + m * (T::one() - pd).ln());
        }
    }
    xi
}

/// Observation factor `b_k(s)` from evidence.
pub fn observation_factor<T: Real>(xi: [T; 2], form: EvidenceForm) -> [T; 2] {
    match form {
        EvidenceForm::ActiveOnly => [T::one(), xi[1].exp()],
        EvidenceForm::Symmetric => {
            // shift by the max; the posterior is invariant to per-scan scaling
            let top = xi[0].max(xi[1]);
            [(xi[0] - top).exp(), (xi[1] - top).exp()]
        }
    }
}

/// Output of [`forward_backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPosterior<T> {
    /// `q(s_k = e)` per scan.
    pub marginals: Vec<[T; 2]>,
    /// `log sum_S p(S) prod_k b_k(s_k)`.
    pub log_evidence: T,
}

/// Scaled forward-backward smoothing of a two-state chain.
pub fn forward_backward<T: Real>(model: &MetaModel<T>, b: &[[T; 2]]) -> Result<ChainPosterior<T>> {
    let n = b.len();
    if b.iter().flatten().any(|&v| !(v > T::zero()) || !v.is_finite()) {
        return Err(Error::InvalidModel("observation factors must be positive and finite".into()));
    }
    if n == 0 {
        return Ok(ChainPosterior { marginals: Vec::new(), log_evidence: T::zero() });
    }
    let ta = &model.transition;
    let mut alpha = vec![[T::zero(); 2]; n];
    let mut scale = vec![T::zero(); n];
    let mut log_evidence = T::zero();
    for k in 0..n {
        let mut a = [T::zero(); 2];
        for e in 0..2 {
            let prior = if k == 0 {
                model.initial[e]
            } else {
                alpha[k - 1][0] * ta[(0, e)] + alpha[k - 1][1] * ta[(1, e)]
            };
            a[e] = prior * b[k][e];
        }
        let c = a[0] + a[1];
        scale[k] = c;
        log_evidence += c.ln();
        alpha[k] = [a[0] / c, a[1] / c];
    }
    let mut beta = vec![[T::one(); 2]; n];
    for k in (0..n - 1).rev() {
        for e in 0..2 {
            beta[k][e] = (0..2)
                .map(|c| ta[(e, c)] * b[k + 1][c] * beta[k + 1][c])
                .fold(T::zero(), |acc, v| acc + v)
                / scale[k + 1];
        }
    }
    let marginals = alpha
        .iter()
        .zip(&beta)
        .map(|(a, bt)| {
            let u = [a[0] * bt[0], a[1] * bt[1]];
            let z = u[0] + u[1];
            [u[0] / z, u[1] / z]
        })
        .collect();
    Ok(ChainPosterior { marginals, log_evidence })
}

/// Track status carried across scans by [`decide_tracks`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Terminated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LifecycleKind {
    Initiated,
    Maintained,
    Terminated,
    /// A terminated track whose existence is back above the maintenance threshold.
    Resumed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LifecycleEvent {
    /// Position in the input sequence.
    pub index: usize,
    pub kind: LifecycleKind,
}

/// Applies the initiation / maintenance / termination rules to a sequence of
/// active probabilities.
///
/// A track is initiated the first time `q >= delta_b`; from then on it is
/// active exactly at the scans where `q >= delta_m`. A terminated track is
/// therefore not re-initiated at the looser birth threshold, but resumes
/// once its existence is back above the maintenance threshold.
pub fn decide_tracks<T: Real>(
    q_active: &[T],
    delta_b: T,
    delta_m: T,
    status: TrackStatus,
) -> (Vec<bool>, Vec<LifecycleEvent>, TrackStatus) {
    let mut status = status;
    let mut decisions = Vec::with_capacity(q_active.len());
    let mut events = Vec::new();
    for (index, &q) in q_active.iter().enumerate() {
        let active = match status {
            TrackStatus::Tentative if q >= delta_b => {
                status = TrackStatus::Confirmed;
                events.push(LifecycleEvent { index, kind: LifecycleKind::Initiated });
                true
            }
            TrackStatus::Confirmed if q >= delta_m => {
                events.push(LifecycleEvent { index, kind: LifecycleKind::Maintained });
                true
            }
            TrackStatus::Confirmed => {
                status = TrackStatus::Terminated;
                events.push(LifecycleEvent { index, kind: LifecycleKind::Terminated });
                false
            }
            TrackStatus::Terminated if q >= delta_m => {
                status = TrackStatus::Confirmed;
                events.push(LifecycleEvent { index, kind: LifecycleKind::Resumed });
                true
            }
            _ => false,
        };
        decisions.push(active);
    }
    (decisions, events, status)
}

/// `N_k^X`: number of active tracks per scan.
pub fn active_count(decisions: &[Vec<bool>], scans: usize) -> Vec<usize> {
    (0..scans)
        .map(|k| decisions.iter().filter(|d| d.get(k).copied().unwrap_or(false)).count())
        .collect()
}
