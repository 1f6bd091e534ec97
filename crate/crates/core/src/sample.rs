//! Single-site Metropolis–Hastings sampling and the benchmark generative energy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Interval};
use crate::energy::{delta_from_terms, energy_from_terms, EnergyModel, LocalTerms};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;

/// `Psi_gen(x) = -Σ_i (x_i - mu)^2 - Σ_{ij} |x_i - x_j|` with `mu = (hi - lo) / 2`.
///
/// With `negated` the sign of the whole energy is flipped.
#[derive(Debug, Clone)]
pub struct GenerativeEnergy<T> {
    graph: Graph,
    interval: Interval<T>,
    mu: T,
    sign: T,
}

impl<T: Scalar> GenerativeEnergy<T> {
    pub fn new(graph: Graph, interval: Interval<T>, negated: bool) -> Self {
        Self {
            mu: (interval.hi - interval.lo) / T::lit(2.0),
            sign: if negated { -T::one() } else { T::one() },
            graph,
            interval,
        }
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn is_negated(&self) -> bool {
        self.sign < T::zero()
    }
}

pub fn generative_energy<T: Scalar>(graph: Graph, interval: Interval<T>) -> GenerativeEnergy<T> {
    GenerativeEnergy::new(graph, interval, false)
}

impl<T: Scalar> EnergyModel<T> for GenerativeEnergy<T> {
    fn n(&self) -> usize {
        self.graph.n()
    }

    fn interval(&self) -> Interval<T> {
        self.interval
    }

    fn energy(&self, x: &[T]) -> T {
        energy_from_terms(self, x)
    }

    fn delta_energy(&self, x: &[T], i: usize, to: T) -> T {
        delta_from_terms(self, x, i, to)
    }
}

impl<T: Scalar> LocalTerms<T> for GenerativeEnergy<T> {
    fn graph(&self) -> &Graph {
        &self.graph
    }

    fn node_term(&self, _i: usize, x: T) -> T {
        let d = x - self.mu;
        self.sign * d * d
    }

    fn edge_term(&self, _edge: usize, a: T, b: T) -> T {
        self.sign * (a - b).abs()
    }
}

pub const DEFAULT_BURN_IN: usize = 10_000;
pub const DEFAULT_THINNING: usize = 10;

/// Burn-in and thinning are counted in sweeps of `n` single-site updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            burn_in: DEFAULT_BURN_IN,
            thinning: DEFAULT_THINNING,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// `min(1, exp(-ΔPsi))` for moving `x_i` to `to`.
pub fn acceptance_probability<T: Scalar, M: EnergyModel<T> + ?Sized>(
    model: &M,
    x: &[T],
    i: usize,
    to: T,
) -> T {
    let d = model.delta_energy(x, i, to);
    if d <= T::zero() {
        T::one()
    } else {
        (-d).exp()
    }
}

/// Draws `count` configurations from `exp(-Psi)` with one Metropolis chain.
///
/// The chain starts from a uniform draw. Each step picks a site uniformly and
/// proposes a uniform value on the interval. After `burn_in` sweeps, the state is
/// recorded once every `thinning` sweeps.
pub fn mh_sample<T: Scalar, M: EnergyModel<T> + ?Sized>(
    model: &M,
    count: usize,
    cfg: &SamplerConfig,
) -> Result<Dataset<T>> {
    if count == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    if cfg.thinning == 0 {
        return Err(Error::invalid("thinning must be >= 1"));
    }
    let n = model.n();
    let iv = model.interval();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x: Vec<T> = (0..n).map(|_| rng.gen_range(iv.lo..iv.hi)).collect();
    let sweep = |x: &mut Vec<T>, rng: &mut ChaCha8Rng| {
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            let to: T = rng.gen_range(iv.lo..iv.hi);
            let u: T = rng.gen_range(T::zero()..T::one());
            if u < acceptance_probability(model, x, i, to) {
                x[i] = to;
            }
        }
    };
    for _ in 0..cfg.burn_in {
        sweep(&mut x, &mut rng);
    }
    let mut values = Vec::with_capacity(count * n);
    for _ in 0..count {
        for _ in 0..cfg.thinning {
            sweep(&mut x, &mut rng);
        }
        values.extend_from_slice(&x);
    }
    Dataset::new(n, values, iv)
}
