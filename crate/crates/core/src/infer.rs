//! Forward inference on a grid-discretized field: loopy belief propagation and
//! exact forward–backward elimination on chains.
//!
//! The field is tabulated at the `G` cell centers of a uniform partition, so every
//! integral becomes a midpoint sum with cell width `chi / G`. This is independent
//! of the basis machinery used to learn the field.

use rayon::prelude::*;

use crate::dataset::Interval;
use crate::energy::LocalTerms;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;

pub const DEFAULT_DAMPING: f64 = 0.5;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Node and edge factors `exp(theta_i)`, `exp(w_ij)` on a uniform grid.
///
/// Factors are stored divided by `exp(max)` of their own log-table; the removed
/// amount is kept in `log_shift` so partition functions stay exact.
#[derive(Debug, Clone)]
pub struct DiscretizedField<T> {
    graph: Graph,
    interval: Interval<T>,
    grid: Vec<T>,
    cell: T,
    node_factors: Vec<Vec<T>>,
    edge_factors: Vec<Vec<T>>,
    log_shift: T,
}

/// Tabulates `theta_i` and `w_ij` of a pairwise energy at `cells` cell centers.
pub fn discretize<T: Scalar, M: LocalTerms<T> + ?Sized>(
    model: &M,
    cells: usize,
) -> Result<DiscretizedField<T>> {
    if cells < 8 {
        return Err(Error::invalid(format!(
            "grid size must be >= 8, got {cells}"
        )));
    }
    let graph = model.graph().clone();
    let interval = model.interval();
    let grid = interval.cell_centers(cells);
    let node_log: Vec<Vec<T>> = (0..graph.n())
        .into_par_iter()
        .map(|i| grid.iter().map(|&x| model.node_term(i, x)).collect())
        .collect();
    let edge_log: Vec<Vec<T>> = (0..graph.edge_count())
        .into_par_iter()
        .map(|e| {
            let mut t = Vec::with_capacity(cells * cells);
            for &a in &grid {
                for &b in &grid {
                    t.push(model.edge_term(e, a, b));
                }
            }
            t
        })
        .collect();
    DiscretizedField::from_log_tables(graph, interval, cells, node_log, edge_log)
}

impl<T: Scalar> DiscretizedField<T> {
    /// Builds a field from tabulated `theta_i` (length `G`) and `w_e` (`G x G`,
    /// row index for the smaller node of the edge).
    pub fn from_log_tables(
        graph: Graph,
        interval: Interval<T>,
        cells: usize,
        node_log: Vec<Vec<T>>,
        edge_log: Vec<Vec<T>>,
    ) -> Result<Self> {
        if node_log.len() != graph.n() || edge_log.len() != graph.edge_count() {
            return Err(Error::invalid("log tables do not match graph"));
        }
        if node_log.iter().any(|t| t.len() != cells)
            || edge_log.iter().any(|t| t.len() != cells * cells)
        {
            return Err(Error::invalid("log table has wrong length"));
        }
        let mut log_shift = T::zero();
        let mut exp_table = |t: Vec<T>| -> Result<Vec<T>> {
            let max = t.iter().copied().fold(T::neg_infinity(), T::max);
            if !max.is_finite() || t.iter().any(|v| v.is_nan()) {
                return Err(Error::Numeric(
                    "non-finite factor in discretized field".into(),
                ));
            }
            log_shift += max;
            let f: Vec<T> = t.into_iter().map(|v| (v - max).exp()).collect();
            if f.iter().any(|&v| !(v > T::zero()) || !v.is_finite()) {
                return Err(Error::Numeric("factor underflows to zero".into()));
            }
            Ok(f)
        };
        let node_factors = node_log
            .into_iter()
            .map(&mut exp_table)
            .collect::<Result<Vec<_>>>()?;
        let edge_factors = edge_log
            .into_iter()
            .map(&mut exp_table)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: interval.cell_centers(cells),
            cell: interval.width() / T::from_count(cells),
            graph,
            interval,
            node_factors,
            edge_factors,
            log_shift,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn interval(&self) -> Interval<T> {
        self.interval
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    pub fn cells(&self) -> usize {
        self.grid.len()
    }

    /// Cell width `chi / G`.
    pub fn cell_width(&self) -> T {
        self.cell
    }

    pub fn node_factors(&self, i: usize) -> &[T] {
        &self.node_factors[i]
    }

    pub fn edge_factors(&self, e: usize) -> &[T] {
        &self.edge_factors[e]
    }

    /// Sum of the per-table maxima removed from the stored factors.
    pub fn log_shift(&self) -> T {
        self.log_shift
    }

    // e^{w}(x_from = a, x_to = b) along a directed edge.
    #[inline]
    fn edge_factor(&self, e: usize, from_is_low: bool, a: usize, b: usize) -> T {
        let g = self.grid.len();
        if from_is_low {
            self.edge_factors[e][a * g + b]
        } else {
            self.edge_factors[e][b * g + a]
        }
    }
}

/// Directed message index: `2e` for low -> high, `2e + 1` for high -> low.
fn directed(graph: &Graph, from: usize, to: usize) -> usize {
    let e = graph.edge_index(from, to).expect("nodes are adjacent");
    2 * e + usize::from(from > to)
}

fn normalize<T: Scalar>(v: &mut [T], cell: T) {
    let total: T = v.iter().copied().sum::<T>() * cell;
    if total > T::zero() && total.is_finite() {
        v.iter_mut().for_each(|x| *x /= total);
    }
}

/// Messages of a (possibly unfinished) belief propagation run.
#[derive(Debug, Clone)]
pub struct LbpState<T> {
    /// `messages[2e]` is `m_{i->j}(x_j)` and `messages[2e+1]` is `m_{j->i}(x_i)` for edge `e = (i, j)`.
    pub messages: Vec<Vec<T>>,
    /// Largest absolute message change in the last sweep.
    pub residual: T,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct LbpOptions<T> {
    pub damping: T,
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for LbpOptions<T> {
    fn default() -> Self {
        Self {
            damping: T::lit(DEFAULT_DAMPING),
            tol: T::lit(DEFAULT_TOL),
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl<T: Scalar> LbpState<T> {
    /// Flat messages `1 / chi`.
    pub fn flat(field: &DiscretizedField<T>) -> Self {
        let flat = T::one() / field.interval.width();
        Self {
            messages: vec![vec![flat; field.cells()]; 2 * field.graph.edge_count()],
            residual: T::infinity(),
            iterations: 0,
            converged: false,
        }
    }

    /// `e^{theta_i} Π_{k ∈ ∂i \ skip} m_{k->i}`, normalized on the grid.
    fn cavity(&self, field: &DiscretizedField<T>, i: usize, skip: Option<usize>) -> Vec<T> {
        let mut p = field.node_factors[i].clone();
        for &k in field.graph.neighbors(i) {
            if Some(k) == skip {
                continue;
            }
            let m = &self.messages[directed(&field.graph, k, i)];
            p.iter_mut().zip(m).for_each(|(a, &b)| *a *= b);
        }
        normalize(&mut p, field.cell);
        p
    }

    /// One synchronous, damped update of every directed message. Returns the residual.
    pub fn sweep(&mut self, field: &DiscretizedField<T>, damping: T) -> T {
        let g = field.cells();
        let edges = field.graph.edges();
        let updated: Vec<Vec<T>> = (0..2 * edges.len())
            .into_par_iter()
            .map(|d| {
                let (lo, hi) = edges[d / 2];
                let (from, to) = if d % 2 == 0 { (lo, hi) } else { (hi, lo) };
                let pi = self.cavity(field, from, Some(to));
                let mut out = vec![T::zero(); g];
                for (b, o) in out.iter_mut().enumerate() {
                    let mut acc = T::zero();
                    for (a, &p) in pi.iter().enumerate() {
                        acc += p * field.edge_factor(d / 2, from < to, a, b);
                    }
                    *o = acc * field.cell;
                }
                normalize(&mut out, field.cell);
                let old = &self.messages[d];
                out.iter_mut()
                    .zip(old)
                    .for_each(|(n, &o)| *n = (T::one() - damping) * *n + damping * o);
                out
            })
            .collect();
        let residual = updated
            .iter()
            .zip(&self.messages)
            .flat_map(|(n, o)| n.iter().zip(o).map(|(&a, &b)| (a - b).abs()))
            .fold(T::zero(), T::max);
        self.messages = updated;
        self.iterations += 1;
        self.residual = residual;
        residual
    }
}

/// Iterates synchronous damped sweeps from flat messages until the residual is below `tol`.
///
/// Non-convergence is reported through `converged = false`, not as an error.
pub fn lbp_solve<T: Scalar>(
    field: &DiscretizedField<T>,
    opts: LbpOptions<T>,
) -> Result<LbpState<T>> {
    if !(opts.tol > T::zero()) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if !(opts.damping >= T::zero() && opts.damping < T::one()) {
        return Err(Error::invalid("damping must lie in [0, 1)"));
    }
    let mut state = LbpState::flat(field);
    while state.iterations < opts.max_iter {
        if state.sweep(field, opts.damping) < opts.tol {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

/// Grid beliefs: node densities (length `G`) and edge densities (`G x G`, canonical orientation).
#[derive(Debug, Clone)]
pub struct GridBeliefs<T> {
    pub nodes: Vec<Vec<T>>,
    pub edges: Vec<Vec<T>>,
}

pub fn lbp_beliefs<T: Scalar>(field: &DiscretizedField<T>, state: &LbpState<T>) -> GridBeliefs<T> {
    let g = field.cells();
    let nodes = (0..field.graph.n())
        .map(|i| state.cavity(field, i, None))
        .collect();
    let edges = field
        .graph
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| {
            let pi = state.cavity(field, i, Some(j));
            let pj = state.cavity(field, j, Some(i));
            let mut xi = vec![T::zero(); g * g];
            for a in 0..g {
                for b in 0..g {
                    xi[a * g + b] = field.edge_factors[e][a * g + b] * pi[a] * pj[b];
                }
            }
            normalize(&mut xi, field.cell * field.cell);
            xi
        })
        .collect();
    GridBeliefs { nodes, edges }
}

/// Exact marginals and log-partition of a discretized chain field.
#[derive(Debug, Clone)]
pub struct ChainMarginals<T> {
    pub nodes: Vec<Vec<T>>,
    /// `ln Σ_grid exp(-Psi) * cell^n`.
    pub log_partition: T,
}

/// Forward–backward elimination with per-step rescaling; requires edges `{k, k+1}`.
pub fn chain_marginals_exact<T: Scalar>(field: &DiscretizedField<T>) -> Result<ChainMarginals<T>> {
    if !field.graph.is_path() {
        return Err(Error::invalid(
            "exact chain marginals need a path graph 0-1-...-(n-1)",
        ));
    }
    let n = field.graph.n();
    let g = field.cells();
    let cell = field.cell;
    let mut forward: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut log_z = field.log_shift;

    let mut a: Vec<T> = field.node_factors[0].iter().map(|&f| f * cell).collect();
    for k in 0..n {
        if k > 0 {
            let prev = &forward[k - 1];
            let e = &field.edge_factors[k - 1];
            a = (0..g)
                .map(|y| {
                    let s: T = (0..g).map(|x| prev[x] * e[x * g + y]).sum();
                    field.node_factors[k][y] * cell * s
                })
                .collect();
        }
        let c: T = a.iter().copied().sum();
        if !(c > T::zero() && c.is_finite()) {
            return Err(Error::Numeric("forward pass lost all mass".into()));
        }
        log_z += c.ln();
        a.iter_mut().for_each(|v| *v /= c);
        forward.push(a.clone());
    }

    let mut backward = vec![vec![T::one(); g]; n];
    for k in (0..n - 1).rev() {
        let e = &field.edge_factors[k];
        let next = &backward[k + 1];
        let mut b: Vec<T> = (0..g)
            .map(|x| {
                (0..g)
                    .map(|y| e[x * g + y] * field.node_factors[k + 1][y] * next[y])
                    .sum()
            })
            .collect();
        let c: T = b.iter().copied().sum();
        b.iter_mut().for_each(|v| *v /= c);
        backward[k] = b;
    }

    let nodes = (0..n)
        .map(|k| {
            let mut m: Vec<T> = forward[k]
                .iter()
                .zip(&backward[k])
                .map(|(&f, &b)| f * b)
                .collect();
            normalize(&mut m, cell);
            m
        })
        .collect();
    Ok(ChainMarginals {
        nodes,
        log_partition: log_z,
    })
}

/// `Σ |p - q| * cell` for two grid densities.
pub fn l1_distance<T: Scalar>(p: &[T], q: &[T], cell: T) -> T {
    p.iter().zip(q).map(|(&a, &b)| (a - b).abs()).sum::<T>() * cell
}
