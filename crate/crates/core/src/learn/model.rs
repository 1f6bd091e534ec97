use rayon::prelude::*;

use crate::basis::BasisSystem;
use crate::dataset::{Dataset, Interval};
use crate::energy::{EnergyModel, LocalTerms};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::learn::moments::{compute_moments, MomentSet};
use crate::quadrature::CutoffQuadrature;
use crate::scalar::Scalar;

/// Default cutoff level.
pub const DEFAULT_EPSILON: f64 = 1e-4;

/// A fitted CMRF: truncated beliefs with the `max(eps, .)` cutoff.
///
/// Its energy is `-Σ_i (1 - |∂i|) ln max(eps, b_i) - Σ_ij ln max(eps, xi_ij)`,
/// without the constant coming from the cutoff normalizers. The normalizers are
/// still kept so that the cutoff beliefs can be reported as proper densities.
#[derive(Debug, Clone)]
pub struct LearnedModel<T> {
    moments: MomentSet<T>,
    epsilon: T,
    node_normalizers: Vec<T>,
    edge_normalizers: Vec<T>,
    node_cutoff: Vec<bool>,
    edge_cutoff: Vec<bool>,
    quadrature: CutoffQuadrature<T>,
}

/// Moments followed by cutoff normalization.
pub fn fit<T: Scalar>(
    data: &Dataset<T>,
    graph: &Graph,
    basis: &BasisSystem<T>,
    k: usize,
    epsilon: T,
) -> Result<LearnedModel<T>> {
    if !(epsilon > T::zero() && epsilon.is_finite()) {
        return Err(Error::invalid(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let moments = compute_moments(data, graph, basis, k)?;
    LearnedModel::from_moments(moments, epsilon)
}

impl<T: Scalar> LearnedModel<T> {
    pub fn from_moments(moments: MomentSet<T>, epsilon: T) -> Result<Self> {
        Self::with_quadrature(moments, epsilon, CutoffQuadrature::default())
    }

    pub fn with_quadrature(
        moments: MomentSet<T>,
        epsilon: T,
        quadrature: CutoffQuadrature<T>,
    ) -> Result<Self> {
        if !(epsilon > T::zero() && epsilon.is_finite()) {
            return Err(Error::invalid(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        let iv = moments.basis().interval();
        let n = moments.n();
        let nodes: Vec<(T, bool)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let belief = |x: T| moments.node_belief_at(i, &moments.phis(x));
                let pts = quadrature.points_1d(iv, epsilon, belief);
                let z: T = pts.iter().map(|&(x, w)| w * belief(x).max(epsilon)).sum();
                let active =
                    pts.iter().any(|&(x, _)| belief(x) < epsilon) || belief(iv.lo) < epsilon;
                (z, active)
            })
            .collect();
        let edges: Vec<(T, bool)> = (0..moments.graph().edge_count())
            .into_par_iter()
            .map(|e| {
                let belief =
                    |a: T, b: T| moments.edge_belief_at(e, &moments.phis(a), &moments.phis(b));
                let pts = quadrature.points_2d(iv, epsilon, belief);
                let mut z = T::zero();
                let mut active = false;
                for &(a, b, w) in &pts {
                    let v = belief(a, b);
                    active |= v < epsilon;
                    z += w * v.max(epsilon);
                }
                (z, active)
            })
            .collect();
        if nodes
            .iter()
            .chain(&edges)
            .any(|(z, _)| !(z.is_finite() && *z > T::zero()))
        {
            return Err(Error::Numeric(
                "cutoff normalizer is not a positive finite number".into(),
            ));
        }
        Ok(Self {
            node_normalizers: nodes.iter().map(|p| p.0).collect(),
            node_cutoff: nodes.iter().map(|p| p.1).collect(),
            edge_normalizers: edges.iter().map(|p| p.0).collect(),
            edge_cutoff: edges.iter().map(|p| p.1).collect(),
            moments,
            epsilon,
            quadrature,
        })
    }

    pub fn moments(&self) -> &MomentSet<T> {
        &self.moments
    }

    pub fn graph(&self) -> &Graph {
        self.moments.graph()
    }

    pub fn basis(&self) -> &BasisSystem<T> {
        self.moments.basis()
    }

    pub fn k(&self) -> usize {
        self.moments.k()
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn quadrature(&self) -> &CutoffQuadrature<T> {
        &self.quadrature
    }

    /// `∫ max(eps, b_i)` per node.
    pub fn node_normalizers(&self) -> &[T] {
        &self.node_normalizers
    }

    /// `∫∫ max(eps, xi_ij)` per canonical edge.
    pub fn edge_normalizers(&self) -> &[T] {
        &self.edge_normalizers
    }

    /// True if some truncated belief drops below `eps` on the quadrature/prescan points.
    pub fn cutoff_active(&self) -> bool {
        self.node_cutoff.iter().chain(&self.edge_cutoff).any(|&a| a)
    }

    pub fn node_cutoff_active(&self, i: usize) -> bool {
        self.node_cutoff[i]
    }

    pub fn edge_cutoff_active(&self, e: usize) -> bool {
        self.edge_cutoff[e]
    }

    /// Normalized cutoff node belief `max(eps, b_i) / Z_i`.
    pub fn tilde_node(&self, i: usize, x: T) -> T {
        self.moments
            .node_belief_at(i, &self.moments.phis(x))
            .max(self.epsilon)
            / self.node_normalizers[i]
    }

    /// Normalized cutoff edge belief for canonical edge `e`.
    pub fn tilde_edge(&self, e: usize, a: T, b: T) -> T {
        let m = &self.moments;
        m.edge_belief_at(e, &m.phis(a), &m.phis(b))
            .max(self.epsilon)
            / self.edge_normalizers[e]
    }

    fn check_point(&self, x: &[T]) -> Result<()> {
        if x.len() != self.moments.n() {
            return Err(Error::invalid(format!(
                "point has {} coordinates, model has {}",
                x.len(),
                self.moments.n()
            )));
        }
        for &v in x {
            self.basis().check_domain(v)?;
        }
        Ok(())
    }

    /// Energy with domain checks.
    pub fn energy_checked(&self, x: &[T]) -> Result<T> {
        self.check_point(x)?;
        Ok(self.energy_at(x))
    }

    /// `exp(-energy)`; strictly positive.
    pub fn unnorm_density(&self, x: &[T]) -> Result<T> {
        Ok((-self.energy_checked(x)?).exp())
    }

    fn energy_at(&self, x: &[T]) -> T {
        let m = &self.moments;
        let g = m.graph();
        let phis: Vec<Vec<T>> = x.iter().map(|&v| m.phis(v)).collect();
        let eps = self.epsilon;
        let mut psi = T::zero();
        for i in 0..g.n() {
            let weight = T::one() - T::from_count(g.degree(i));
            if weight != T::zero() {
                psi -= weight * m.node_belief_at(i, &phis[i]).max(eps).ln();
            }
        }
        for (e, &(i, j)) in g.edges().iter().enumerate() {
            psi -= m.edge_belief_at(e, &phis[i], &phis[j]).max(eps).ln();
        }
        psi
    }

    /// Uniform grid of cell centers, for tabulating beliefs.
    pub fn grid(&self, cells: usize) -> Vec<T> {
        self.basis().interval().cell_centers(cells)
    }

    pub fn interval(&self) -> Interval<T> {
        self.basis().interval()
    }
}

impl<T: Scalar> EnergyModel<T> for LearnedModel<T> {
    fn n(&self) -> usize {
        self.moments.n()
    }

    fn interval(&self) -> Interval<T> {
        self.basis().interval()
    }

    fn energy(&self, x: &[T]) -> T {
        self.energy_at(x)
    }

    fn delta_energy(&self, x: &[T], i: usize, to: T) -> T {
        crate::energy::delta_from_terms(self, x, i, to)
    }
}

impl<T: Scalar> LocalTerms<T> for LearnedModel<T> {
    fn graph(&self) -> &Graph {
        self.moments.graph()
    }

    /// `(1 - |∂i|) ln max(eps, b_i(x))`.
    fn node_term(&self, i: usize, x: T) -> T {
        let g = self.moments.graph();
        let weight = T::one() - T::from_count(g.degree(i));
        if weight == T::zero() {
            return T::zero();
        }
        weight
            * self
                .moments
                .node_belief_at(i, &self.moments.phis(x))
                .max(self.epsilon)
                .ln()
    }

    /// `ln max(eps, xi_ij(a, b))`.
    fn edge_term(&self, e: usize, a: T, b: T) -> T {
        let m = &self.moments;
        m.edge_belief_at(e, &m.phis(a), &m.phis(b))
            .max(self.epsilon)
            .ln()
    }
}
