//! Orthonormal function systems on a finite interval.
//!
//! Every system has a constant zeroth member `phi_0 = 1/sqrt(width)`, which is
//! what makes truncated belief expansions normalized for any coefficients.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Interval;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_MAX_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    /// `1/sqrt(pi)`, `sqrt(2/pi) cos(s x)` on `[0, pi]`.
    Cosine,
    /// Normalized Legendre polynomials on `[-1, 1]`.
    Legendre,
}

impl BasisKind {
    pub fn native_interval<T: Scalar>(self) -> Interval<T> {
        match self {
            BasisKind::Cosine => Interval {
                lo: T::zero(),
                hi: T::PI(),
            },
            BasisKind::Legendre => Interval {
                lo: -T::one(),
                hi: T::one(),
            },
        }
    }
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisKind::Cosine => "cosine",
            BasisKind::Legendre => "legendre",
        })
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "cosine" => Ok(BasisKind::Cosine),
            "legendre" => Ok(BasisKind::Legendre),
            other => Err(Error::invalid(format!("unknown basis kind '{other}'"))),
        }
    }
}

/// An orthonormal family `{phi_s}` carried to an arbitrary interval by an affine map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisSystem<T> {
    kind: BasisKind,
    interval: Interval<T>,
    max_order: usize,
    // affine map x -> u = native.lo + (x - lo) * slope, value scale sqrt(slope)
    slope: T,
    scale: T,
}

impl<T: Scalar> BasisSystem<T> {
    /// The system on its native interval.
    pub fn native(kind: BasisKind, max_order: usize) -> Self {
        let interval = kind.native_interval();
        Self {
            kind,
            interval,
            max_order,
            slope: T::one(),
            scale: T::one(),
        }
    }

    /// The system carried to `interval`.
    pub fn new(kind: BasisKind, interval: Interval<T>, max_order: usize) -> Result<Self> {
        Self::native(kind, max_order).transform_interval(interval)
    }

    pub fn cosine(interval: Interval<T>) -> Result<Self> {
        Self::new(BasisKind::Cosine, interval, DEFAULT_MAX_ORDER)
    }

    pub fn legendre(interval: Interval<T>) -> Result<Self> {
        Self::new(BasisKind::Legendre, interval, DEFAULT_MAX_ORDER)
    }

    /// Returns `phi~_s(x) = sqrt(w/w~) phi_s(u(x))` on `target`, where `u` is the
    /// increasing affine map sending `target` onto this system's interval.
    pub fn transform_interval(&self, target: Interval<T>) -> Result<Self> {
        if !(target.lo < target.hi) || !target.lo.is_finite() || !target.hi.is_finite() {
            return Err(Error::invalid(format!(
                "target interval needs lo < hi, got [{}, {}]",
                target.lo, target.hi
            )));
        }
        let native_width = self.kind.native_interval::<T>().width();
        let slope = native_width / target.width();
        Ok(Self {
            kind: self.kind,
            interval: target,
            max_order: self.max_order,
            slope,
            scale: slope.sqrt(),
        })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn interval(&self) -> Interval<T> {
        self.interval
    }

    /// Interval width `chi`.
    pub fn chi(&self) -> T {
        self.interval.width()
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn with_max_order(mut self, max_order: usize) -> Self {
        self.max_order = max_order;
        self
    }

    /// `phi_0 = 1/sqrt(chi)`.
    pub fn phi0(&self) -> T {
        T::one() / self.chi().sqrt()
    }

    /// `phi_s(x)` with domain and order checks.
    pub fn phi_eval(&self, s: usize, x: T) -> Result<T> {
        if s > self.max_order {
            return Err(Error::invalid(format!(
                "order {s} exceeds max_order {}",
                self.max_order
            )));
        }
        self.check_domain(x)?;
        Ok(self.phi(s, x))
    }

    pub(crate) fn check_domain(&self, x: T) -> Result<()> {
        if self.interval.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "x = {x} outside [{}, {}]",
                self.interval.lo, self.interval.hi
            )))
        }
    }

    fn to_native(self, x: T) -> T {
        let native = self.kind.native_interval::<T>();
        let u = native.lo + (x - self.interval.lo) * self.slope;
        u.max(native.lo).min(native.hi)
    }

    /// `phi_s(x)` without checks.
    pub fn phi(&self, s: usize, x: T) -> T {
        if s == 0 {
            return self.phi0();
        }
        let u = self.to_native(x);
        let v = match self.kind {
            BasisKind::Cosine => (T::lit(2.0) / T::PI()).sqrt() * (T::from_count(s) * u).cos(),
            BasisKind::Legendre => legendre_recursive(s, u),
        };
        self.scale * v
    }

    /// Fills `out[s] = phi_s(x)` for `s = 0..out.len()`, without checks.
    pub fn eval_all(&self, x: T, out: &mut [T]) {
        if out.is_empty() {
            return;
        }
        out[0] = self.phi0();
        if out.len() == 1 {
            return;
        }
        let u = self.to_native(x);
        match self.kind {
            BasisKind::Cosine => {
                let amp = self.scale * (T::lit(2.0) / T::PI()).sqrt();
                for (s, o) in out.iter_mut().enumerate().skip(1) {
                    *o = amp * (T::from_count(s) * u).cos();
                }
            }
            BasisKind::Legendre => {
                let mut prev = T::one() / T::lit(2.0).sqrt();
                let mut cur = T::lit(1.5).sqrt() * u;
                out[1] = self.scale * cur;
                for s in 1..out.len() - 1 {
                    let next = legendre_step(s, u, cur, prev);
                    prev = cur;
                    cur = next;
                    out[s + 1] = self.scale * cur;
                }
            }
        }
    }

    /// `max |phi_s|` over the interval.
    pub fn sup_norm(&self, s: usize) -> T {
        if s == 0 {
            return self.phi0();
        }
        match self.kind {
            BasisKind::Cosine => self.scale * (T::lit(2.0) / T::PI()).sqrt(),
            BasisKind::Legendre => self.scale * ((T::from_count(2 * s + 1)) / T::lit(2.0)).sqrt(),
        }
    }
}

// L_{s+1} from L_s and L_{s-1}, s >= 1.
fn legendre_step<T: Scalar>(s: usize, u: T, cur: T, prev: T) -> T {
    let sf = T::from_count(s);
    let a = (T::lit(2.0) * sf + T::one()) / (sf + T::one())
        * ((T::lit(2.0) * sf + T::lit(3.0)) / (T::lit(2.0) * sf + T::one())).sqrt();
    let b = sf / (sf + T::one())
        * ((T::lit(2.0) * sf + T::lit(3.0)) / (T::lit(2.0) * sf - T::one())).sqrt();
    a * u * cur - b * prev
}

fn legendre_recursive<T: Scalar>(s: usize, u: T) -> T {
    let mut prev = T::one() / T::lit(2.0).sqrt();
    if s == 0 {
        return prev;
    }
    let mut cur = T::lit(1.5).sqrt() * u;
    for k in 1..s {
        let next = legendre_step(k, u, cur, prev);
        prev = cur;
        cur = next;
    }
    cur
}

/// Normalized Legendre polynomial from its closed binomial sum.
///
/// Slow and less stable than the recursion; kept as an independent reference.
pub fn legendre_explicit<T: Scalar>(s: usize, x: T) -> T {
    let mut sum = T::zero();
    let mut binom = T::one();
    for k in 0..=s {
        if k > 0 {
            binom = binom * T::from_count(s + 1 - k) / T::from_count(k);
        }
        sum += binom * binom * (x - T::one()).powi((s - k) as i32) * (x + T::one()).powi(k as i32);
    }
    let norm = ((T::from_count(2 * s + 1)) / T::lit(2.0)).sqrt() / T::lit(2.0).powi(s as i32);
    norm * sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::QuadratureRule;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit() -> Interval<f64> {
        Interval::unit()
    }

    fn gram_error(b: &BasisSystem<f64>, order: usize) -> f64 {
        let rule = QuadratureRule::gauss_legendre(b.interval(), 96).unwrap();
        let mut worst: f64 = 0.0;
        for s in 0..=order {
            for t in 0..=order {
                let v = rule.integrate(|x| b.phi(s, x) * b.phi(t, x));
                let target = if s == t { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        worst
    }

    #[test]
    fn cosine_zero_order_is_constant() {
        let b = BasisSystem::<f64>::native(BasisKind::Cosine, 16);
        for x in [0.0, 1.0, 2.5, std::f64::consts::PI] {
            assert_eq!(b.phi_eval(0, x).unwrap(), 1.0 / std::f64::consts::PI.sqrt());
        }
    }

    #[test]
    fn legendre_first_order_at_one() {
        let b = BasisSystem::<f64>::native(BasisKind::Legendre, 16);
        assert_abs_diff_eq!(b.phi_eval(1, 1.0).unwrap(), 1.5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn legendre_fourth_order_matches_explicit() {
        let b = BasisSystem::<f64>::native(BasisKind::Legendre, 16);
        assert_abs_diff_eq!(
            b.phi_eval(4, 0.37).unwrap(),
            legendre_explicit(4, 0.37),
            epsilon = 1e-13
        );
    }

    #[test]
    fn explicit_examples() {
        assert_abs_diff_eq!(
            legendre_explicit(0, 0.3_f64),
            1.0 / 2f64.sqrt(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            legendre_explicit(2, 1.0_f64),
            2.5f64.sqrt(),
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(legendre_explicit(3, 0.0_f64), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn domain_and_order_errors() {
        let b = BasisSystem::cosine(unit()).unwrap();
        assert!(matches!(b.phi_eval(1, 1.5), Err(Error::Domain(_))));
        assert!(matches!(
            b.phi_eval(17, 0.5),
            Err(Error::InvalidArgument(_))
        ));
        assert!(b.transform_interval(Interval { lo: 1.0, hi: 1.0 }).is_err());
        assert!(b.transform_interval(Interval { lo: 2.0, hi: 1.0 }).is_err());
    }

    #[test]
    fn transform_examples() {
        let c = BasisSystem::cosine(unit()).unwrap();
        for x in [0.0, 0.3, 1.0] {
            assert_abs_diff_eq!(c.phi(0, x), 1.0, epsilon = 1e-15);
        }
        let l = BasisSystem::legendre(unit()).unwrap();
        assert_abs_diff_eq!(l.phi(1, 1.0), 2f64.sqrt() * 1.5f64.sqrt(), epsilon = 1e-14);
        let native = BasisSystem::<f64>::native(BasisKind::Legendre, 16);
        let same = native.transform_interval(native.interval()).unwrap();
        for k in 0..=20 {
            let x = -1.0 + 0.1 * k as f64;
            for s in 0..=8 {
                assert_eq!(same.phi(s, x), native.phi(s, x));
            }
        }
    }

    #[test]
    fn orthonormal_on_native_and_transformed() {
        for kind in [BasisKind::Cosine, BasisKind::Legendre] {
            let native = BasisSystem::<f64>::native(kind, 16);
            assert!(gram_error(&native, 12) <= 1e-8, "{kind}");
            let moved = native
                .transform_interval(Interval::new(-0.7, 2.3).unwrap())
                .unwrap();
            assert!(gram_error(&moved, 12) <= 1e-8, "{kind} transformed");
        }
    }

    #[test]
    fn single_function_integrals() {
        for kind in [BasisKind::Cosine, BasisKind::Legendre] {
            let b = BasisSystem::new(kind, Interval::<f64>::new(0.5, 3.0).unwrap(), 16).unwrap();
            let rule = QuadratureRule::gauss_legendre(b.interval(), 64).unwrap();
            assert_abs_diff_eq!(
                rule.integrate(|x| b.phi(0, x)),
                b.chi().sqrt(),
                epsilon = 1e-12
            );
            for s in 1..=12 {
                assert_abs_diff_eq!(rule.integrate(|x| b.phi(s, x)), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn eval_all_matches_phi() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [BasisKind::Cosine, BasisKind::Legendre] {
            let b = BasisSystem::new(kind, Interval::new(-2.0, 5.0).unwrap(), 16).unwrap();
            let mut out = [0.0; 17];
            for _ in 0..50 {
                let x = rng.gen_range(-2.0..=5.0);
                b.eval_all(x, &mut out);
                for (s, &v) in out.iter().enumerate() {
                    assert_abs_diff_eq!(v, b.phi(s, x), epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn recursion_agrees_with_explicit_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = BasisSystem::<f64>::native(BasisKind::Legendre, 16);
        for _ in 0..100 {
            let x: f64 = rng.gen_range(-1.0..=1.0);
            for s in 0..=8 {
                assert!((b.phi(s, x) - legendre_explicit(s, x)).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn phi0_constant_everywhere() {
        let b = BasisSystem::legendre(Interval::new(0.0, 7.0).unwrap()).unwrap();
        let target = 1.0 / 7f64.sqrt();
        let worst = (0..1000)
            .map(|k| (b.phi(0, 7.0 * k as f64 / 999.0) - target).abs())
            .fold(0.0, f64::max);
        assert_eq!(worst, 0.0);
    }

    #[test]
    fn sup_norm_bounds_values() {
        for kind in [BasisKind::Cosine, BasisKind::Legendre] {
            let b = BasisSystem::new(kind, unit(), 16).unwrap();
            for s in 0..=10 {
                let m = (0..=400)
                    .map(|k| b.phi(s, k as f64 / 400.0).abs())
                    .fold(0.0, f64::max);
                assert!(m <= b.sup_norm(s) + 1e-12);
                assert!(m >= b.sup_norm(s) - 1e-9, "{kind} s={s}");
            }
        }
    }

    #[test]
    fn works_in_single_precision() {
        let b = BasisSystem::<f32>::cosine(Interval::unit()).unwrap();
        let rule = QuadratureRule::gauss_legendre(Interval::unit(), 32).unwrap();
        let v = rule.integrate(|x| b.phi(3, x) * b.phi(3, x));
        assert!((v - 1.0).abs() < 1e-4);
        let l = BasisSystem::<f32>::native(BasisKind::Legendre, 8);
        assert!((l.phi(5, 0.3) - legendre_explicit(5, 0.3_f32)).abs() < 1e-5);
    }
}
