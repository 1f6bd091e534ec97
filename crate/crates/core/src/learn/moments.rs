use rayon::prelude::*;

use crate::basis::BasisSystem;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;

/// Empirical expansion coefficients of the one- and two-variable beliefs.
///
/// `c(i, s)` is the sample mean of `phi_s(x_i)` and `d(e, s, t)` the sample mean
/// of `phi_s(x_i) phi_t(x_j)` for the canonical edge `e = (i, j)`, `i < j`, with
/// `s, t` in `1..=K`. Row index `s` always belongs to the smaller node.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet<T> {
    k: usize,
    graph: Graph,
    basis: BasisSystem<T>,
    c: Vec<T>,
    d: Vec<T>,
}

impl<T: Scalar> MomentSet<T> {
    /// Wraps given coefficients; `c` is `n x K` and `d` is `|E| x K x K`, row-major.
    pub fn new(
        graph: Graph,
        basis: BasisSystem<T>,
        k: usize,
        c: Vec<T>,
        d: Vec<T>,
    ) -> Result<Self> {
        if k > basis.max_order() {
            return Err(Error::invalid(format!(
                "K = {k} exceeds basis max_order {}",
                basis.max_order()
            )));
        }
        if c.len() != graph.n() * k || d.len() != graph.edge_count() * k * k {
            return Err(Error::invalid(format!(
                "coefficient lengths ({}, {}) do not match n = {}, |E| = {}, K = {k}",
                c.len(),
                d.len(),
                graph.n(),
                graph.edge_count()
            )));
        }
        if c.iter().chain(&d).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite moment".into()));
        }
        Ok(Self {
            k,
            graph,
            basis,
            c,
            d,
        })
    }

    /// All non-constant coefficients zero: independent uniform beliefs.
    pub fn uniform(graph: Graph, basis: BasisSystem<T>, k: usize) -> Result<Self> {
        let c = vec![T::zero(); graph.n() * k];
        let d = vec![T::zero(); graph.edge_count() * k * k];
        Self::new(graph, basis, k, c, d)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn basis(&self) -> &BasisSystem<T> {
        &self.basis
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// `c_i^(s)`, `s` in `1..=K`.
    pub fn c(&self, i: usize, s: usize) -> T {
        self.c[i * self.k + s - 1]
    }

    /// Node `i`'s coefficients `[c_i^(1), ..., c_i^(K)]`.
    pub fn c_row(&self, i: usize) -> &[T] {
        &self.c[i * self.k..(i + 1) * self.k]
    }

    /// `d^(s,t)` for the canonical edge with index `e`.
    pub fn d(&self, e: usize, s: usize, t: usize) -> T {
        let k = self.k;
        self.d[e * k * k + (s - 1) * k + (t - 1)]
    }

    /// `d_{ij}^(s,t)` with `s` attached to node `i`, for either orientation.
    pub fn d_pair(&self, i: usize, j: usize, s: usize, t: usize) -> Option<T> {
        let e = self.graph.edge_index(i, j)?;
        Some(if i < j {
            self.d(e, s, t)
        } else {
            self.d(e, t, s)
        })
    }

    pub fn c_values(&self) -> &[T] {
        &self.c
    }

    pub fn d_values(&self) -> &[T] {
        &self.d
    }

    #[cfg(test)]
    pub(crate) fn c_mut(&mut self) -> &mut [T] {
        &mut self.c
    }

    #[cfg(test)]
    pub(crate) fn d_mut(&mut self) -> &mut [T] {
        &mut self.d
    }

    /// `[phi_0(x), ..., phi_K(x)]`.
    pub fn phis(&self, x: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.k + 1];
        self.basis.eval_all(x, &mut out);
        out
    }

    /// Truncated node belief from precomputed `phis`.
    pub fn node_belief_at(&self, i: usize, phi: &[T]) -> T {
        let inv_chi = T::one() / self.basis.chi();
        inv_chi
            + self
                .c_row(i)
                .iter()
                .zip(&phi[1..])
                .map(|(&c, &p)| c * p)
                .sum::<T>()
    }

    /// Truncated edge belief for canonical edge `e` from precomputed `phis`.
    pub fn edge_belief_at(&self, e: usize, phi_i: &[T], phi_j: &[T]) -> T {
        let (i, j) = self.graph.edges()[e];
        let k = self.k;
        let inv_chi = T::one() / self.basis.chi();
        let mut v = inv_chi * inv_chi;
        let mut lin = T::zero();
        for s in 1..=k {
            lin += self.c(i, s) * phi_i[s] + self.c(j, s) * phi_j[s];
        }
        v += inv_chi * lin;
        let block = &self.d[e * k * k..(e + 1) * k * k];
        for s in 0..k {
            let row: T = block[s * k..(s + 1) * k]
                .iter()
                .zip(&phi_j[1..])
                .map(|(&d, &p)| d * p)
                .sum();
            v += phi_i[s + 1] * row;
        }
        v
    }

    /// `b_i^(K)(x) = 1/chi + Σ_s c_i^(s) phi_s(x)`; may be negative.
    pub fn belief_node(&self, i: usize, x: T) -> Result<T> {
        if i >= self.n() {
            return Err(Error::invalid(format!("node {i} out of range")));
        }
        self.basis.check_domain(x)?;
        Ok(self.node_belief_at(i, &self.phis(x)))
    }

    /// `xi_ij^(K)(x_i, x_j)` for the edge `{i, j}` in either orientation.
    pub fn belief_edge(&self, i: usize, j: usize, x_i: T, x_j: T) -> Result<T> {
        let e = self
            .graph
            .edge_index(i, j)
            .filter(|_| i != j)
            .ok_or_else(|| Error::invalid(format!("{{{i},{j}}} is not an edge")))?;
        self.basis.check_domain(x_i)?;
        self.basis.check_domain(x_j)?;
        let (a, b) = if i < j { (x_i, x_j) } else { (x_j, x_i) };
        Ok(self.edge_belief_at(e, &self.phis(a), &self.phis(b)))
    }
}

/// Sample averages of the basis functions over the data.
pub fn compute_moments<T: Scalar>(
    data: &Dataset<T>,
    graph: &Graph,
    basis: &BasisSystem<T>,
    k: usize,
) -> Result<MomentSet<T>> {
    if data.n() != graph.n() {
        return Err(Error::invalid(format!(
            "dataset has {} variables but graph has {} nodes",
            data.n(),
            graph.n()
        )));
    }
    if data.interval() != basis.interval() {
        return Err(Error::invalid(
            "dataset interval differs from basis interval",
        ));
    }
    if k > basis.max_order() {
        return Err(Error::invalid(format!(
            "K = {k} exceeds basis max_order {}",
            basis.max_order()
        )));
    }
    let n = graph.n();
    let samples = data.len();
    // table[(mu * n + i) * k + s - 1] = phi_s(x_i^mu)
    let mut table = vec![T::zero(); samples * n * k];
    if k > 0 {
        table
            .par_chunks_mut(n * k)
            .zip(data.values().par_chunks(n))
            .for_each(|(dst, row)| {
                let mut phi = vec![T::zero(); k + 1];
                for (i, &x) in row.iter().enumerate() {
                    basis.eval_all(x, &mut phi);
                    dst[i * k..(i + 1) * k].copy_from_slice(&phi[1..]);
                }
            });
    }
    let inv_n = T::one() / T::from_count(samples);
    let at = |mu: usize, i: usize, s: usize| table[(mu * n + i) * k + s];

    let c: Vec<T> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let at = &at;
            (0..k).map(move |s| (0..samples).map(|mu| at(mu, i, s)).sum::<T>() * inv_n)
        })
        .collect();
    let d: Vec<T> = graph
        .edges()
        .par_iter()
        .flat_map_iter(|&(i, j)| {
            let at = &at;
            (0..k * k).map(move |st| {
                let (s, t) = (st / k, st % k);
                (0..samples)
                    .map(|mu| at(mu, i, s) * at(mu, j, t))
                    .sum::<T>()
                    * inv_n
            })
        })
        .collect();
    MomentSet::new(graph.clone(), *basis, k, c, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Interval;
    use crate::quadrature::QuadratureRule;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis() -> BasisSystem<f64> {
        BasisSystem::cosine(Interval::unit()).unwrap()
    }

    #[test]
    fn identical_points_give_point_values() {
        let g = Graph::chain(3).unwrap();
        let b = basis();
        let point = [0.2, 0.7, 0.45];
        let rows = vec![point.to_vec(); 5];
        let data = Dataset::from_rows(&rows, Interval::unit()).unwrap();
        let m = compute_moments(&data, &g, &b, 4).unwrap();
        for i in 0..3 {
            for s in 1..=4 {
                assert_abs_diff_eq!(m.c(i, s), b.phi(s, point[i]), epsilon = 1e-14);
            }
        }
        for (e, &(i, j)) in g.edges().iter().enumerate() {
            for s in 1..=4 {
                for t in 1..=4 {
                    let want = b.phi(s, point[i]) * b.phi(t, point[j]);
                    assert_abs_diff_eq!(m.d(e, s, t), want, epsilon = 1e-14);
                    assert_eq!(m.d_pair(j, i, t, s), Some(m.d(e, s, t)));
                }
            }
        }
    }

    #[test]
    fn two_points_average() {
        let g = Graph::chain(2).unwrap();
        let b = basis();
        let data = Dataset::from_rows(&[vec![0.1, 0.9], vec![0.6, 0.3]], Interval::unit()).unwrap();
        let m = compute_moments(&data, &g, &b, 3).unwrap();
        for s in 1..=3 {
            assert_abs_diff_eq!(
                m.c(0, s),
                0.5 * (b.phi(s, 0.1) + b.phi(s, 0.6)),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn uniform_samples_have_small_moments() {
        let g = Graph::chain(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let vals: Vec<f64> = (0..200_000).map(|_| rng.gen_range(0.0..1.0)).collect();
        let data = Dataset::new(2, vals, Interval::unit()).unwrap();
        let m = compute_moments(&data, &g, &basis(), 6).unwrap();
        assert!(m.c_values().iter().all(|c| c.abs() <= 0.02));
        let b = basis();
        for i in 0..2 {
            for s in 1..=6 {
                assert!(m.c(i, s).abs() <= b.sup_norm(s));
            }
        }
    }

    #[test]
    fn argument_errors() {
        let g = Graph::chain(3).unwrap();
        let data = Dataset::from_rows(&[vec![0.1, 0.2]], Interval::unit()).unwrap();
        assert!(compute_moments(&data, &g, &basis(), 2).is_err());
        let data = Dataset::from_rows(&[vec![0.1, 0.2, 0.3]], Interval::unit()).unwrap();
        assert!(compute_moments(&data, &g, &basis(), 17).is_err());
        let other = BasisSystem::cosine(Interval::new(0.0, 2.0).unwrap()).unwrap();
        assert!(compute_moments(&data, &g, &other, 2).is_err());
    }

    #[test]
    fn belief_examples() {
        let g = Graph::chain(2).unwrap();
        let pi = std::f64::consts::PI;
        let b = BasisSystem::<f64>::native(crate::basis::BasisKind::Cosine, 16);
        let m0 = MomentSet::uniform(g.clone(), b, 0).unwrap();
        assert_abs_diff_eq!(m0.belief_node(0, 1.3).unwrap(), 1.0 / pi, epsilon = 1e-15);
        assert_abs_diff_eq!(
            m0.belief_edge(0, 1, 0.2, 2.0).unwrap(),
            1.0 / (pi * pi),
            epsilon = 1e-15
        );
        let m1 = MomentSet::new(g.clone(), b, 1, vec![0.1, 0.0], vec![0.0]).unwrap();
        let x = 0.8;
        let want = 1.0 / pi + 0.1 * (2.0 / pi).sqrt() * f64::cos(x);
        assert_abs_diff_eq!(m1.belief_node(0, x).unwrap(), want, epsilon = 1e-15);
        assert!(matches!(m1.belief_node(0, 4.0), Err(Error::Domain(_))));
        let g3 = Graph::chain(3).unwrap();
        let m3 = MomentSet::uniform(g3, b, 1).unwrap();
        assert!(matches!(
            m3.belief_edge(0, 2, 0.1, 0.1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn beliefs_normalize_and_marginalize() {
        let g = Graph::chain(2).unwrap();
        let b = basis();
        let k = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c: Vec<f64> = (0..2 * k).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let d: Vec<f64> = (0..k * k).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let m = MomentSet::new(g, b, k, c, d).unwrap();
        let rule = QuadratureRule::gauss_legendre(Interval::unit(), 64).unwrap();
        assert_abs_diff_eq!(
            rule.integrate(|x| m.belief_node(0, x).unwrap()),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            rule.integrate_2d(|x, y| m.belief_edge(0, 1, x, y).unwrap()),
            1.0,
            epsilon = 1e-12
        );
        for x in [0.0, 0.37, 1.0] {
            let marg = rule.integrate(|y| m.belief_edge(0, 1, x, y).unwrap());
            assert_abs_diff_eq!(marg, m.belief_node(0, x).unwrap(), epsilon = 1e-12);
            let marg = rule.integrate(|y| m.belief_edge(1, 0, x, y).unwrap());
            assert_abs_diff_eq!(marg, m.belief_node(1, x).unwrap(), epsilon = 1e-12);
        }
    }
}
