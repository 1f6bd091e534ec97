//! Energies `Psi(x)` on `[lo, hi]^n` defining densities `P(x) ∝ exp(-Psi(x))`.

use crate::dataset::Interval;
use crate::graph::Graph;
use crate::scalar::Scalar;

pub trait EnergyModel<T: Scalar>: Sync {
    /// Number of variables.
    fn n(&self) -> usize;

    fn interval(&self) -> Interval<T>;

    /// `Psi(x)`; `x` is assumed to lie in the box.
    fn energy(&self, x: &[T]) -> T;

    /// `Psi(x with x_i = to) - Psi(x with x_i = x[i])`.
    fn delta_energy(&self, x: &[T], i: usize, to: T) -> T {
        let before = self.energy(x);
        let mut y = x.to_vec();
        y[i] = to;
        self.energy(&y) - before
    }
}

/// A pairwise energy `Psi = -Σ_i theta_i(x_i) - Σ_{ij} w_ij(x_i, x_j)`.
///
/// For an edge `(i, j)` with `i < j`, `edge_term(e, a, b)` receives `x_i = a`, `x_j = b`.
pub trait LocalTerms<T: Scalar>: EnergyModel<T> {
    fn graph(&self) -> &Graph;

    fn node_term(&self, i: usize, x: T) -> T;

    fn edge_term(&self, edge: usize, a: T, b: T) -> T;
}

/// Energy given by a closure.
pub struct FnEnergy<T, F> {
    n: usize,
    interval: Interval<T>,
    f: F,
}

impl<T: Scalar, F: Fn(&[T]) -> T + Sync> FnEnergy<T, F> {
    pub fn new(n: usize, interval: Interval<T>, f: F) -> Self {
        Self { n, interval, f }
    }
}

impl<T: Scalar, F: Fn(&[T]) -> T + Sync> EnergyModel<T> for FnEnergy<T, F> {
    fn n(&self) -> usize {
        self.n
    }

    fn interval(&self) -> Interval<T> {
        self.interval
    }

    fn energy(&self, x: &[T]) -> T {
        (self.f)(x)
    }
}

/// `Psi ≡ 0`: the uniform density on the box.
#[derive(Debug, Clone, Copy)]
pub struct ZeroEnergy<T> {
    pub n: usize,
    pub interval: Interval<T>,
}

impl<T: Scalar> EnergyModel<T> for ZeroEnergy<T> {
    fn n(&self) -> usize {
        self.n
    }

    fn interval(&self) -> Interval<T> {
        self.interval
    }

    fn energy(&self, _x: &[T]) -> T {
        T::zero()
    }

    fn delta_energy(&self, _x: &[T], _i: usize, _to: T) -> T {
        T::zero()
    }
}

/// Evaluates a pairwise energy from its local terms.
pub fn energy_from_terms<T: Scalar, M: LocalTerms<T> + ?Sized>(model: &M, x: &[T]) -> T {
    let g = model.graph();
    let nodes: T = (0..g.n()).map(|i| model.node_term(i, x[i])).sum();
    let edges: T = g
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| model.edge_term(e, x[i], x[j]))
        .sum();
    -nodes - edges
}

/// Single-site energy change from local terms only.
pub fn delta_from_terms<T: Scalar, M: LocalTerms<T> + ?Sized>(
    model: &M,
    x: &[T],
    i: usize,
    to: T,
) -> T {
    let g = model.graph();
    let from = x[i];
    let mut d = model.node_term(i, from) - model.node_term(i, to);
    for &j in g.neighbors(i) {
        let e = g.edge_index(i, j).expect("neighbor implies edge");
        if i < j {
            d += model.edge_term(e, from, x[j]) - model.edge_term(e, to, x[j]);
        } else {
            d += model.edge_term(e, x[j], from) - model.edge_term(e, x[j], to);
        }
    }
    d
}
