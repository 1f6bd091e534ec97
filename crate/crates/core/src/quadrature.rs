//! Gauss–Legendre rules and cutoff-aware integration point sets.

use crate::dataset::Interval;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default 1D rule size.
pub const DEFAULT_ORDER_1D: usize = 64;
/// Default per-axis rule size for 2D tensor products.
pub const DEFAULT_ORDER_2D: usize = 48;
/// Cells scanned when locating cutoff crossings.
pub const DEFAULT_PRESCAN: usize = 256;

/// Nodes and positive weights on an interval; exact for polynomials of degree `2 * len - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<T> {
    interval: Interval<T>,
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Scalar> QuadratureRule<T> {
    /// Gauss–Legendre rule with `order` nodes mapped to `interval`.
    pub fn gauss_legendre(interval: Interval<T>, order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::invalid(format!(
                "quadrature order must be >= 2, got {order}"
            )));
        }
        let (x, w) = reference_nodes::<T>(order);
        let half = interval.width() / T::lit(2.0);
        let mid = (interval.lo + interval.hi) / T::lit(2.0);
        Ok(Self {
            interval,
            nodes: x.iter().map(|&u| mid + half * u).collect(),
            weights: w.iter().map(|&v| half * v).collect(),
        })
    }

    pub fn interval(&self) -> Interval<T> {
        self.interval
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Largest polynomial degree integrated exactly.
    pub fn design_degree(&self) -> usize {
        2 * self.nodes.len() - 1
    }

    pub fn points(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn integrate(&self, f: impl Fn(T) -> T) -> T {
        self.points().map(|(x, w)| w * f(x)).sum()
    }

    /// Tensor-product integral over `interval^2`.
    pub fn integrate_2d(&self, f: impl Fn(T, T) -> T) -> T {
        self.points()
            .map(|(x, wx)| wx * self.points().map(|(y, wy)| wy * f(x, y)).sum::<T>())
            .sum()
    }

    /// The same rule carried to another interval.
    pub fn remap(&self, target: Interval<T>) -> Self {
        let scale = target.width() / self.interval.width();
        Self {
            interval: target,
            nodes: self
                .nodes
                .iter()
                .map(|&x| target.lo + (x - self.interval.lo) * scale)
                .collect(),
            weights: self.weights.iter().map(|&w| w * scale).collect(),
        }
    }
}

/// Convenience constructor mirroring [`QuadratureRule::gauss_legendre`].
pub fn make_quadrature<T: Scalar>(
    interval: Interval<T>,
    order: usize,
) -> Result<QuadratureRule<T>> {
    QuadratureRule::gauss_legendre(interval, order)
}

// Newton iteration on P_n, nodes in ascending order on [-1, 1].
fn reference_nodes<T: Scalar>(n: usize) -> (Vec<T>, Vec<T>) {
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let nf = T::from_count(n);
    let tol = T::epsilon() * T::lit(4.0);
    for i in 0..n.div_ceil(2) {
        let mut x = (T::PI() * (T::from_count(i) + T::lit(0.75)) / (nf + T::lit(0.5))).cos();
        let mut dp = T::one();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= tol {
                let (_, d) = legendre_with_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = T::lit(2.0) / ((T::one() - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = T::zero();
    }
    (nodes, weights)
}

fn legendre_with_derivative<T: Scalar>(n: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    for k in 2..=n {
        let kf = T::from_count(k);
        let p2 = ((T::lit(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = T::from_count(n);
    (p1, nf * (x * p1 - p0) / (x * x - T::one()))
}

/// Builds integration point sets for integrands containing `max(eps, f)`.
///
/// The domain is pre-scanned on uniform cells; cells where `f - eps` changes sign
/// are bisected to the crossing, and a Gauss rule is applied on each panel
/// between crossings. Without crossings this is a plain Gauss rule.
#[derive(Debug, Clone)]
pub struct CutoffQuadrature<T> {
    reference_1d: QuadratureRule<T>,
    reference_2d: QuadratureRule<T>,
    prescan: usize,
}

impl<T: Scalar> Default for CutoffQuadrature<T> {
    fn default() -> Self {
        Self::new(DEFAULT_ORDER_1D, DEFAULT_ORDER_2D, DEFAULT_PRESCAN)
            .expect("default orders are valid")
    }
}

impl<T: Scalar> CutoffQuadrature<T> {
    pub fn new(order_1d: usize, order_2d: usize, prescan: usize) -> Result<Self> {
        if prescan == 0 {
            return Err(Error::invalid("prescan needs at least one cell"));
        }
        let reference = Interval {
            lo: -T::one(),
            hi: T::one(),
        };
        Ok(Self {
            reference_1d: QuadratureRule::gauss_legendre(reference, order_1d)?,
            reference_2d: QuadratureRule::gauss_legendre(reference, order_2d)?,
            prescan,
        })
    }

    /// Points `x` where `f(x) - level` changes sign on the prescan grid.
    pub fn crossings(&self, interval: Interval<T>, level: T, f: impl Fn(T) -> T) -> Vec<T> {
        let h = interval.width() / T::from_count(self.prescan);
        let mut out = Vec::new();
        let mut a = interval.lo;
        let mut ga = f(a) - level;
        for k in 1..=self.prescan {
            let b = if k == self.prescan {
                interval.hi
            } else {
                interval.lo + T::from_count(k) * h
            };
            let gb = f(b) - level;
            if (ga < T::zero()) != (gb < T::zero()) {
                out.push(bisect(&f, level, a, b, ga));
            }
            a = b;
            ga = gb;
        }
        out
    }

    fn panels(interval: Interval<T>, breaks: &[T]) -> Vec<Interval<T>> {
        let mut edges = Vec::with_capacity(breaks.len() + 2);
        edges.push(interval.lo);
        edges.extend(
            breaks
                .iter()
                .copied()
                .filter(|&b| b > interval.lo && b < interval.hi),
        );
        edges.push(interval.hi);
        edges
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| Interval { lo: w[0], hi: w[1] })
            .collect()
    }

    fn panel_points(
        rule: &QuadratureRule<T>,
        interval: Interval<T>,
        breaks: &[T],
        out: &mut Vec<(T, T)>,
    ) {
        for panel in Self::panels(interval, breaks) {
            let half = panel.width() / T::lit(2.0);
            let mid = (panel.lo + panel.hi) / T::lit(2.0);
            out.extend(rule.points().map(|(u, w)| (mid + half * u, half * w)));
        }
    }

    /// 1D points and weights adapted to the kinks of `max(level, f)`.
    pub fn points_1d(&self, interval: Interval<T>, level: T, f: impl Fn(T) -> T) -> Vec<(T, T)> {
        let breaks = self.crossings(interval, level, &f);
        let mut out = Vec::with_capacity(self.reference_1d.len() * (breaks.len() + 1));
        Self::panel_points(&self.reference_1d, interval, &breaks, &mut out);
        out
    }

    /// Plain 1D rule on `interval`.
    pub fn plain_1d(&self, interval: Interval<T>) -> Vec<(T, T)> {
        let mut out = Vec::with_capacity(self.reference_1d.len());
        Self::panel_points(&self.reference_1d, interval, &[], &mut out);
        out
    }

    /// 2D points `(x, y, w)` for `max(level, f(x, y))` on `interval^2`.
    ///
    /// The outer axis uses a fixed rule; each inner line is split at its own crossings.
    pub fn points_2d(
        &self,
        interval: Interval<T>,
        level: T,
        f: impl Fn(T, T) -> T,
    ) -> Vec<(T, T, T)> {
        let outer = self.reference_2d.remap(interval);
        let mut out = Vec::with_capacity(outer.len() * self.reference_2d.len());
        let mut line = Vec::new();
        for (x, wx) in outer.points() {
            let breaks = self.crossings(interval, level, |y| f(x, y));
            line.clear();
            Self::panel_points(&self.reference_2d, interval, &breaks, &mut line);
            out.extend(line.iter().map(|&(y, wy)| (x, y, wx * wy)));
        }
        out
    }

    /// Plain tensor-product 2D rule.
    pub fn plain_2d(&self, interval: Interval<T>) -> Vec<(T, T, T)> {
        let rule = self.reference_2d.remap(interval);
        let mut out = Vec::with_capacity(rule.len() * rule.len());
        for (x, wx) in rule.points() {
            out.extend(rule.points().map(|(y, wy)| (x, y, wx * wy)));
        }
        out
    }
}

fn bisect<T: Scalar>(f: &impl Fn(T) -> T, level: T, mut a: T, mut b: T, ga: T) -> T {
    let a_neg = ga < T::zero();
    for _ in 0..200 {
        let m = (a + b) / T::lit(2.0);
        if m <= a || m >= b {
            break;
        }
        if ((f(m) - level) < T::zero()) == a_neg {
            a = m;
        } else {
            b = m;
        }
    }
    (a + b) / T::lit(2.0)
}
