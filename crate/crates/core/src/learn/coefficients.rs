use rayon::prelude::*;

use crate::basis::BasisSystem;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::learn::model::LearnedModel;
use crate::learn::moments::MomentSet;
use crate::scalar::Scalar;

/// Energy coefficients of the learned field in the `Psi†` parameterization,
/// together with the log-belief expansion coefficients they come from.
///
/// * `a(i, s)  = ∫ phi_s ln b~_i`
/// * `b(e, s, t) = ∫∫ phi_s phi_t ln xi~_e`, `s, t` in `0..=L`
/// * `h(i, s)  = (1 - |∂i|) a(i, s) + chi^{-1/2} Σ_{j ∈ ∂i} B_ij^(s,0)`
/// * `j(e, s, t) = b(e, s, t)` for `s, t >= 1`
#[derive(Debug, Clone)]
pub struct CoefficientSet<T> {
    order: usize,
    graph: Graph,
    basis: BasisSystem<T>,
    a: Vec<T>,
    b: Vec<T>,
    h: Vec<T>,
}

impl<T: Scalar> CoefficientSet<T> {
    /// Highest expansion order `L`.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// `A_i^(s)`, `s` in `1..=L`.
    pub fn a(&self, i: usize, s: usize) -> T {
        self.a[i * self.order + s - 1]
    }

    /// `B^(s,t)` on canonical edge `e`, `s, t` in `0..=L`, `s` attached to the smaller node.
    pub fn b(&self, e: usize, s: usize, t: usize) -> T {
        let w = self.order + 1;
        self.b[e * w * w + s * w + t]
    }

    /// `H_i^(s)`, `s` in `1..=L`.
    pub fn h(&self, i: usize, s: usize) -> T {
        self.h[i * self.order + s - 1]
    }

    /// `J^(s,t)` on canonical edge `e`, `s, t` in `1..=L`.
    pub fn j(&self, e: usize, s: usize, t: usize) -> T {
        self.b(e, s, t)
    }

    /// `J_{ij}^(s,t)` with `s` attached to node `i`, for either orientation.
    pub fn j_pair(&self, i: usize, j: usize, s: usize, t: usize) -> Option<T> {
        let e = self.graph.edge_index(i, j)?;
        Some(if i < j {
            self.j(e, s, t)
        } else {
            self.j(e, t, s)
        })
    }

    /// Largest `|H|` or `|J|` entry.
    pub fn max_abs(&self) -> T {
        let l = self.order;
        let mut m = self.h.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
        for e in 0..self.graph.edge_count() {
            for s in 1..=l {
                for t in 1..=l {
                    m = m.max(self.j(e, s, t).abs());
                }
            }
        }
        m
    }

    /// `Psi†(x) = -Σ_i Σ_s H_i^(s) phi_s(x_i) - Σ_ij Σ_st J^(s,t) phi_s(x_i) phi_t(x_j)`.
    pub fn dagger_energy(&self, x: &[T]) -> T {
        let l = self.order;
        let phis: Vec<Vec<T>> = x
            .iter()
            .map(|&v| {
                let mut p = vec![T::zero(); l + 1];
                self.basis.eval_all(v, &mut p);
                p
            })
            .collect();
        let mut psi = T::zero();
        for i in 0..self.graph.n() {
            for s in 1..=l {
                psi -= self.h(i, s) * phis[i][s];
            }
        }
        for (e, &(i, j)) in self.graph.edges().iter().enumerate() {
            for s in 1..=l {
                for t in 1..=l {
                    psi -= self.j(e, s, t) * phis[i][s] * phis[j][t];
                }
            }
        }
        psi
    }
}

/// Recovers `H`, `J` up to the model's truncation order `K`.
pub fn recover_coefficients<T: Scalar>(model: &LearnedModel<T>) -> Result<CoefficientSet<T>> {
    recover_coefficients_to_order(model, model.k())
}

/// Recovers `H`, `J` up to an arbitrary order `L <= max_order`.
///
/// The log-beliefs are not finite series, so `L > K` captures more of them.
pub fn recover_coefficients_to_order<T: Scalar>(
    model: &LearnedModel<T>,
    order: usize,
) -> Result<CoefficientSet<T>> {
    let basis = *model.basis();
    if order > basis.max_order() {
        return Err(Error::invalid(format!(
            "order {order} exceeds basis max_order {}",
            basis.max_order()
        )));
    }
    let m = model.moments();
    let g = m.graph();
    let iv = basis.interval();
    let eps = model.epsilon();
    let quad = model.quadrature();
    let w = order + 1;

    let a: Vec<T> = (0..g.n())
        .into_par_iter()
        .flat_map_iter(|i| {
            let belief = |x: T| m.node_belief_at(i, &m.phis(x));
            let pts = quad.points_1d(iv, eps, belief);
            let z = model.node_normalizers()[i];
            let mut acc = vec![T::zero(); order];
            let mut phi = vec![T::zero(); w];
            for &(x, wt) in &pts {
                let lb = (belief(x).max(eps) / z).ln();
                basis.eval_all(x, &mut phi);
                for s in 1..=order {
                    acc[s - 1] += wt * phi[s] * lb;
                }
            }
            acc
        })
        .collect();

    let b: Vec<T> = (0..g.edge_count())
        .into_par_iter()
        .flat_map_iter(|e| {
            let belief = |x: T, y: T| m.edge_belief_at(e, &m.phis(x), &m.phis(y));
            let pts = quad.points_2d(iv, eps, belief);
            let z = model.edge_normalizers()[e];
            let mut acc = vec![T::zero(); w * w];
            let mut px = vec![T::zero(); w];
            let mut py = vec![T::zero(); w];
            for &(x, y, wt) in &pts {
                let lx = (belief(x, y).max(eps) / z).ln() * wt;
                basis.eval_all(x, &mut px);
                basis.eval_all(y, &mut py);
                for s in 0..w {
                    let f = lx * px[s];
                    for t in 0..w {
                        acc[s * w + t] += f * py[t];
                    }
                }
            }
            acc
        })
        .collect();

    let root_chi = basis.chi().sqrt();
    let mut h = vec![T::zero(); g.n() * order];
    for i in 0..g.n() {
        let weight = T::one() - T::from_count(g.degree(i));
        for s in 1..=order {
            let mut v = weight * a[i * order + s - 1];
            for &j in g.neighbors(i) {
                let e = g.edge_index(i, j).expect("neighbor implies edge");
                let boundary = if i < j {
                    b[e * w * w + s * w]
                } else {
                    b[e * w * w + s]
                };
                v += boundary / root_chi;
            }
            h[i * order + s - 1] = v;
        }
    }
    if a.iter().chain(&b).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite log-belief coefficient".into()));
    }
    Ok(CoefficientSet {
        order,
        graph: g.clone(),
        basis,
        a,
        b,
        h,
    })
}

/// Bethe free energy `F(c, d)` of the moments under fixed energy coefficients.
///
/// Entropy terms use the normalized cutoff beliefs `b~`, `xi~` built from
/// `moments` at level `epsilon`, integrated by cutoff-aware quadrature.
pub fn bethe_free_energy<T: Scalar>(
    moments: &MomentSet<T>,
    coeffs: &CoefficientSet<T>,
    epsilon: T,
) -> Result<T> {
    let k = moments.k();
    if coeffs.order() < k {
        return Err(Error::invalid(format!(
            "coefficient order {} below moment order {k}",
            coeffs.order()
        )));
    }
    if coeffs.graph() != moments.graph() {
        return Err(Error::invalid(
            "coefficients and moments live on different graphs",
        ));
    }
    let model = LearnedModel::from_moments(moments.clone(), epsilon)?;
    let g = moments.graph();
    let mut energy = T::zero();
    for i in 0..g.n() {
        for s in 1..=k {
            energy -= coeffs.h(i, s) * moments.c(i, s);
        }
    }
    for e in 0..g.edge_count() {
        for s in 1..=k {
            for t in 1..=k {
                energy -= coeffs.j(e, s, t) * moments.d(e, s, t);
            }
        }
    }
    let (node_s, edge_s) = neg_entropies(&model);
    let mut f = energy;
    for i in 0..g.n() {
        f += (T::one() - T::from_count(g.degree(i))) * node_s[i];
    }
    f += edge_s.into_iter().sum::<T>();
    Ok(f)
}

/// `∫ b~ ln b~` per node and `∫∫ xi~ ln xi~` per edge.
pub fn neg_entropies<T: Scalar>(model: &LearnedModel<T>) -> (Vec<T>, Vec<T>) {
    let m = model.moments();
    let iv = model.interval();
    let eps = model.epsilon();
    let quad = model.quadrature();
    let nodes = (0..m.n())
        .into_par_iter()
        .map(|i| {
            let belief = |x: T| m.node_belief_at(i, &m.phis(x));
            let z = model.node_normalizers()[i];
            quad.points_1d(iv, eps, belief)
                .into_iter()
                .map(|(x, w)| {
                    let p = belief(x).max(eps) / z;
                    w * p * p.ln()
                })
                .sum()
        })
        .collect();
    let edges = (0..m.graph().edge_count())
        .into_par_iter()
        .map(|e| {
            let belief = |x: T, y: T| m.edge_belief_at(e, &m.phis(x), &m.phis(y));
            let z = model.edge_normalizers()[e];
            quad.points_2d(iv, eps, belief)
                .into_iter()
                .map(|(x, y, w)| {
                    let p = belief(x, y).max(eps) / z;
                    w * p * p.ln()
                })
                .sum()
        })
        .collect();
    (nodes, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Interval;
    use crate::energy::EnergyModel;
    use crate::quadrature::QuadratureRule;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn moments(g: &Graph, k: usize, amp: f64, seed: u64) -> MomentSet<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = BasisSystem::cosine(Interval::unit()).unwrap();
        let c = (0..g.n() * k).map(|_| rng.gen_range(-amp..amp)).collect();
        let d = (0..g.edge_count() * k * k)
            .map(|_| rng.gen_range(-amp..amp))
            .collect();
        MomentSet::new(g.clone(), b, k, c, d).unwrap()
    }

    #[test]
    fn uniform_model_has_zero_coefficients() {
        let g = Graph::grid(2, 2).unwrap();
        let b = BasisSystem::cosine(Interval::<f64>::new(0.0, 3.0).unwrap()).unwrap();
        let model = LearnedModel::from_moments(MomentSet::uniform(g, b, 3).unwrap(), 1e-4).unwrap();
        let co = recover_coefficients(&model).unwrap();
        assert!(co.max_abs() < 1e-12);
        for i in 0..4 {
            for s in 1..=3 {
                assert!(co.a(i, s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_edge_field_comes_from_boundary_row() {
        let g = Graph::chain(2).unwrap();
        let model = LearnedModel::from_moments(moments(&g, 2, 0.2, 1), 1e-4).unwrap();
        let co = recover_coefficients(&model).unwrap();
        let root = 1.0f64.sqrt();
        for s in 1..=2 {
            assert_abs_diff_eq!(co.h(0, s), co.b(0, s, 0) / root, epsilon = 1e-15);
            assert_abs_diff_eq!(co.h(1, s), co.b(0, 0, s) / root, epsilon = 1e-15);
        }
    }

    #[test]
    fn j_symmetry_under_reorientation() {
        let g = Graph::chain(3).unwrap();
        let model = LearnedModel::from_moments(moments(&g, 2, 0.2, 2), 1e-4).unwrap();
        let co = recover_coefficients(&model).unwrap();
        for s in 1..=2 {
            for t in 1..=2 {
                assert_eq!(co.j_pair(1, 2, s, t), co.j_pair(2, 1, t, s));
            }
        }
        assert_eq!(co.j_pair(0, 2, 1, 1), None);
    }

    #[test]
    fn coefficients_match_direct_quadrature() {
        let g = Graph::chain(2).unwrap();
        let model = LearnedModel::from_moments(moments(&g, 2, 0.05, 3), 1e-4).unwrap();
        assert!(!model.cutoff_active());
        let co = recover_coefficients(&model).unwrap();
        let b = *model.basis();
        let rule = QuadratureRule::gauss_legendre(Interval::unit(), 80).unwrap();
        let want_a = rule.integrate(|x| b.phi(2, x) * model.tilde_node(0, x).ln());
        assert_abs_diff_eq!(co.a(0, 2), want_a, epsilon = 1e-10);
        let want_b =
            rule.integrate_2d(|x, y| b.phi(1, x) * b.phi(2, y) * model.tilde_edge(0, x, y).ln());
        assert_abs_diff_eq!(co.b(0, 1, 2), want_b, epsilon = 1e-10);
    }

    #[test]
    fn dagger_energy_tracks_learned_energy() {
        let g = Graph::chain(4).unwrap();
        let model = LearnedModel::from_moments(moments(&g, 2, 0.15, 4), 1e-4).unwrap();
        let co = recover_coefficients_to_order(&model, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let diffs: Vec<f64> = (0..100)
            .map(|_| {
                let x: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..=1.0)).collect();
                model.energy(&x) - co.dagger_energy(&x)
            })
            .collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let worst = diffs.iter().map(|d| (d - mean).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-3, "max deviation {worst}");
    }

    #[test]
    fn uniform_free_energy_is_pure_entropy() {
        let g = Graph::grid(2, 3).unwrap();
        let chi: f64 = 2.0;
        let b = BasisSystem::cosine(Interval::new(0.0, chi).unwrap()).unwrap();
        let m = MomentSet::uniform(g.clone(), b, 2).unwrap();
        let model = LearnedModel::from_moments(m.clone(), 1e-4).unwrap();
        let mut co = recover_coefficients(&model).unwrap();
        co.h.iter_mut().for_each(|v| *v = 0.0);
        co.b.iter_mut().for_each(|v| *v = 0.0);
        let f = bethe_free_energy(&m, &co, 1e-4).unwrap();
        let want: f64 = -(0..g.n())
            .map(|i| (1.0 - g.degree(i) as f64) * chi.ln())
            .sum::<f64>()
            - g.edge_count() as f64 * (chi * chi).ln();
        assert_abs_diff_eq!(f, want, epsilon = 1e-10);
    }

    #[test]
    fn free_energy_is_stationary_at_recovered_coefficients() {
        let g = Graph::chain(3).unwrap();
        let m = moments(&g, 2, 0.05, 7);
        let model = LearnedModel::from_moments(m.clone(), 1e-4).unwrap();
        assert!(!model.cutoff_active());
        let co = recover_coefficients(&model).unwrap();
        let h = 1e-4;
        let shifted = |delta: f64| {
            let mut p = m.clone();
            p.c_mut()[2 + 1] += delta; // node 1, s = 2
            bethe_free_energy(&p, &co, 1e-4).unwrap()
        };
        let f0 = bethe_free_energy(&m, &co, 1e-4).unwrap();
        let (fp, fm) = (shifted(h), shifted(-h));
        let slope = (fp - fm) / (2.0 * h);
        assert!(slope.abs() < 1e-7, "slope {slope}");
        assert!((fp - f0).abs() < 10.0 * h * h);
        // with the energy coefficients removed the same direction has a clear slope
        let mut zero = co.clone();
        zero.h.iter_mut().for_each(|v| *v = 0.0);
        let mut p = m.clone();
        p.c_mut()[3] += h;
        let mut q = m.clone();
        q.c_mut()[3] -= h;
        let slope0 = (bethe_free_energy(&p, &zero, 1e-4).unwrap()
            - bethe_free_energy(&q, &zero, 1e-4).unwrap())
            / (2.0 * h);
        assert!(slope0.abs() > 1e-3);
        // and the edge direction d^(1,2) on edge 0 is stationary too
        let mut p = m.clone();
        p.d_mut()[1] += h;
        let mut q = m.clone();
        q.d_mut()[1] -= h;
        let slope_d = (bethe_free_energy(&p, &co, 1e-4).unwrap()
            - bethe_free_energy(&q, &co, 1e-4).unwrap())
            / (2.0 * h);
        assert!(slope_d.abs() < 1e-7, "edge slope {slope_d}");
    }

    #[test]
    fn independent_chain_free_energy_factorizes() {
        let g = Graph::chain(3).unwrap();
        let b = BasisSystem::cosine(Interval::unit()).unwrap();
        let k = 2;
        let c = vec![0.2, -0.1, 0.05, 0.15, -0.2, 0.1];
        let mut d = Vec::new();
        for &(i, j) in g.edges() {
            for s in 0..k {
                for t in 0..k {
                    d.push(c[i * k + s] * c[j * k + t]);
                }
            }
        }
        let m = MomentSet::new(g.clone(), b, k, c.clone(), d).unwrap();
        let model = LearnedModel::from_moments(m.clone(), 1e-4).unwrap();
        assert!(!model.cutoff_active());
        let co = recover_coefficients(&model).unwrap();
        let f = bethe_free_energy(&m, &co, 1e-4).unwrap();

        // independent oracle: energy term plus one 1D entropy per node
        let rule = QuadratureRule::gauss_legendre(Interval::unit(), 64).unwrap();
        let mut oracle = 0.0;
        for i in 0..3 {
            for s in 1..=k {
                oracle -= co.h(i, s) * c[i * k + s - 1];
            }
            let bi = |x: f64| 1.0 + (1..=k).map(|s| c[i * k + s - 1] * b.phi(s, x)).sum::<f64>();
            oracle += rule.integrate(|x| bi(x) * bi(x).ln());
        }
        for (e, &(i, j)) in g.edges().iter().enumerate() {
            for s in 1..=k {
                for t in 1..=k {
                    oracle -= co.j(e, s, t) * c[i * k + s - 1] * c[j * k + t - 1];
                }
            }
        }
        assert_abs_diff_eq!(f, oracle, epsilon = 1e-9);
    }
}
