//! Loopy belief propagation on the assignment factor graph.
//!
//! Each gated pair `a^{i,j}` is a binary variable shared (through an
//! equality node) between the row constraint of target `i` and the column
//! constraint of measurement `j`. The miss variable `a^{i,0}` and the
//! clutter variable `a^{0,j}` are leaves of a single constraint and are
//! summed out analytically, which leaves every interior variable with the
//! log-odds evidence `w = chi^{i,j} - chi^{i,0} - chi^{0,j}`. Messages are
//! kept as log-likelihood ratios.

use std::fmt;

use super::{AssignmentMarginals, AssignmentProblem};
use crate::error::Result;
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbpOptions {
    pub max_iters: usize,
    /// Convergence threshold on the largest log-message change.
    pub tol: f64,
    /// Weight kept from the previous message (0 = undamped).
    pub damping: f64,
}

impl Default for LbpOptions {
    fn default() -> Self {
        Self { max_iters: 200, tol: 1e-6, damping: 0.5 }
    }
}

/// Reduced factor graph: one interior variable per gated pair.
#[derive(Debug, Clone)]
pub struct FactorGraph<T> {
    pub n_targets: usize,
    pub n_meas: usize,
    /// `(target, meas)` per interior variable.
    pub edges: Vec<(usize, usize)>,
    /// Evidence log-odds per interior variable.
    pub weights: Vec<T>,
    pub row_edges: Vec<Vec<usize>>,
    pub col_edges: Vec<Vec<usize>>,
    components: usize,
}

impl<T: Real> FactorGraph<T> {
    /// Number of independent loops (`E - V + C` over the constraint nodes).
    pub fn cyclomatic_number(&self) -> usize {
        self.edges.len() + self.components - (self.n_targets + self.n_meas)
    }

    pub fn is_forest(&self) -> bool {
        self.cyclomatic_number() == 0
    }

    /// Text dump: header line then one `edge target meas weight` line each.
    pub fn dump(&self) -> String {
        let mut s = format!("graph targets {} meas {} loops {}\n", self.n_targets, self.n_meas, self.cyclomatic_number());
        for (&(i, j), w) in self.edges.iter().zip(&self.weights) {
            s.push_str(&format!("edge {i} {j} {:e}\n", crate::scalar::to_f64(*w)));
        }
        s
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

pub fn build_factor_graph<T: Real>(problem: &AssignmentProblem<T>) -> Result<FactorGraph<T>> {
    problem.validate()?;
    let (nt, ne) = (problem.n_targets(), problem.n_meas());
    let mut row_edges = vec![Vec::new(); nt];
    let mut col_edges = vec![Vec::new(); ne];
    let mut edges = Vec::with_capacity(problem.pairs.len());
    let mut weights = Vec::with_capacity(problem.pairs.len());
    let mut parent: Vec<usize> = (0..nt + ne).collect();
    let mut components = nt + ne;
    for (e, p) in problem.pairs.iter().enumerate() {
        edges.push((p.target, p.meas));
        weights.push(p.chi - problem.chi_miss[p.target] - problem.chi_clutter[p.meas]);
        row_edges[p.target].push(e);
        col_edges[p.meas].push(e);
        let (a, b) = (find(&mut parent, p.target), find(&mut parent, nt + p.meas));
        if a != b {
            parent[a] = b;
            components -= 1;
        }
    }
    Ok(FactorGraph { n_targets: nt, n_meas: ne, edges, weights, row_edges, col_edges, components })
}

/// Which message a trace line refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    /// Variable to column constraint (row evidence included).
    RowToCol,
    /// Column constraint to variable.
    ColToRow,
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MessageKind::RowToCol => "row",
            MessageKind::ColToRow => "col",
        })
    }
}

/// `ln(1 + sum exp(xs))`, stable for large arguments.
fn log1p_sum_exp<T: Real>(xs: impl Iterator<Item = T> + Clone) -> T {
    let m = xs.clone().fold(T::zero(), |a, b| a.max(b));
    // m >= 0 includes the implicit `1 = exp(0)` term
    let s = xs.fold((-m).exp(), |acc, x| acc + (x - m).exp());
    m + s.ln()
}

/// Computes `-ln(1 + sum_{k != e} exp(a_k))` for every `e` in `group`.
fn exclusive_update<T: Real>(group: &[usize], a: &[T], out: &mut [T]) {
    for &e in group {
        let others = group.iter().filter(|&&k| k != e).map(|&k| a[k]);
        out[e] = -log1p_sum_exp(others);
    }
}

pub fn run_lbp<T: Real>(problem: &AssignmentProblem<T>, opts: &LbpOptions) -> Result<AssignmentMarginals<T>> {
    run_lbp_traced(problem, opts, |_, _, _, _, _| {})
}

/// As [`run_lbp`], invoking `trace(iter, kind, target, meas, value)` for
/// every message at every iteration.
pub fn run_lbp_traced<T: Real>(
    problem: &AssignmentProblem<T>,
    opts: &LbpOptions,
    mut trace: impl FnMut(usize, MessageKind, usize, usize, f64),
) -> Result<AssignmentMarginals<T>> {
    let g = build_factor_graph(problem)?;
    let n = g.edges.len();
    // a tree is solved exactly by undamped flooding
    let damping = if g.is_forest() { T::zero() } else { lit::<T>(opts.damping) };
    let tol = lit::<T>(opts.tol);

    // mu: variable -> column (w + row message); nu: column -> variable
    let mut mu = g.weights.clone();
    let mut nu = vec![T::zero(); n];
    let mut a = vec![T::zero(); n];
    let mut fresh = vec![T::zero(); n];
    let mut converged = n == 0;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iters {
        iterations += 1;
        let mut residual = T::zero();

        for e in 0..n {
            a[e] = mu[e];
        }
        for group in &g.col_edges {
            exclusive_update(group, &a, &mut fresh);
        }
        for e in 0..n {
            let v = damping * nu[e] + (T::one() - damping) * fresh[e];
            residual = residual.max((v - nu[e]).abs());
            nu[e] = v;
            trace(iterations, MessageKind::ColToRow, g.edges[e].0, g.edges[e].1, crate::scalar::to_f64(v));
        }

        for e in 0..n {
            a[e] = g.weights[e] + nu[e];
        }
        for group in &g.row_edges {
            exclusive_update(group, &a, &mut fresh);
        }
        for e in 0..n {
            let v = damping * mu[e] + (T::one() - damping) * (g.weights[e] + fresh[e]);
            residual = residual.max((v - mu[e]).abs());
            mu[e] = v;
            trace(iterations, MessageKind::RowToCol, g.edges[e].0, g.edges[e].1, crate::scalar::to_f64(v));
        }

        converged = residual < tol;
    }

    Ok(beliefs(problem, &g, &nu, converged, iterations))
}

/// Row-side beliefs, then projection onto the row/column constraints.
fn beliefs<T: Real>(
    problem: &AssignmentProblem<T>,
    g: &FactorGraph<T>,
    nu: &[T],
    converged: bool,
    iterations: usize,
) -> AssignmentMarginals<T> {
    let mut pairs = vec![T::zero(); g.edges.len()];
    for group in &g.row_edges {
        let xs = group.iter().map(|&e| g.weights[e] + nu[e]);
        let z = log1p_sum_exp(xs);
        for &e in group {
            pairs[e] = (g.weights[e] + nu[e] - z).exp();
        }
    }
    // scale down over-full columns; rows only lose mass
    for group in &g.col_edges {
        let s = group.iter().fold(T::zero(), |acc, &e| acc + pairs[e]);
        if s > T::one() {
            for &e in group {
                pairs[e] /= s;
            }
        }
    }
    let slack = |group: &Vec<usize>| {
        let s = group.iter().fold(T::zero(), |acc, &e| acc + pairs[e]);
        (T::one() - s).max(T::zero())
    };
    let miss = g.row_edges.iter().map(slack).collect();
    let clutter = g.col_edges.iter().map(slack).collect();
    debug_assert_eq!(problem.pairs.len(), pairs.len());
    AssignmentMarginals { miss, clutter, pairs, converged, iterations }
}
