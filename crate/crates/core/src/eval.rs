//! Scoring: Monte Carlo log-partition, log-likelihood, KL divergence and AIC.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::energy::{EnergyModel, LocalTerms};
use crate::error::{Error, Result};
use crate::infer::{chain_marginals_exact, discretize};
use crate::sample::{mh_sample, SamplerConfig};
use crate::scalar::Scalar;

pub const DEFAULT_MC_SAMPLES: usize = 20_000;
pub const DEFAULT_EXACT_GRID: usize = 256;
const MC_PARTITION: usize = 4096;

/// Estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub se: T,
}

impl<T: Scalar> Estimate<T> {
    pub fn exact(value: T) -> Self {
        Self {
            value,
            se: T::zero(),
        }
    }
}

/// `ln Z` from `M` uniform draws on the box: `Z ≈ chi^n / M * Σ exp(-Psi(y))`.
///
/// Draws are split into fixed partitions of 4096 indices, each with its own
/// ChaCha stream, so the result does not depend on scheduling.
/// The standard error is the delta-method value `sd(w) / (mean(w) sqrt(M))`.
pub fn mc_log_partition<T: Scalar, M: EnergyModel<T> + ?Sized>(
    model: &M,
    m: usize,
    seed: u64,
) -> Result<Estimate<T>> {
    if m < 100 {
        return Err(Error::invalid(format!("M must be >= 100, got {m}")));
    }
    let n = model.n();
    let iv = model.interval();
    let parts = m.div_ceil(MC_PARTITION);
    let neg_energies: Vec<T> = (0..parts)
        .into_par_iter()
        .flat_map_iter(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            let len = MC_PARTITION.min(m - p * MC_PARTITION);
            let mut y = vec![T::zero(); n];
            (0..len)
                .map(|_| {
                    y.iter_mut().for_each(|v| *v = rng.gen_range(iv.lo..iv.hi));
                    -model.energy(&y)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    log_mean_exp(&neg_energies).map(|e| Estimate {
        value: e.value + T::from_count(n) * iv.width().ln(),
        se: e.se,
    })
}

/// `ln mean(exp(v))` with its delta-method standard error.
pub fn log_mean_exp<T: Scalar>(v: &[T]) -> Result<Estimate<T>> {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    if v.iter().any(|x| x.is_nan()) || max == T::infinity() {
        return Err(Error::Numeric(
            "non-finite energy in Monte Carlo sum".into(),
        ));
    }
    if max == T::neg_infinity() {
        return Err(Error::Numeric("all Monte Carlo weights vanish".into()));
    }
    let count = T::from_count(v.len());
    let (s1, s2) = v.iter().fold((T::zero(), T::zero()), |(a, b), &x| {
        let w = (x - max).exp();
        (a + w, b + w * w)
    });
    let mean = s1 / count;
    let var = ((s2 / count - mean * mean) * count / (count - T::one())).max(T::zero());
    Ok(Estimate {
        value: max + mean.ln(),
        se: var.sqrt() / (mean * count.sqrt()),
    })
}

/// Exact log-partition of a chain energy discretized on `cells` grid points.
pub fn exact_chain_log_partition<T: Scalar, M: LocalTerms<T> + ?Sized>(
    model: &M,
    cells: usize,
) -> Result<T> {
    let field = discretize(model, cells)?;
    Ok(chain_marginals_exact(&field)?.log_partition)
}

/// `(1 / (n N)) Σ_mu [-Psi(x^mu) - ln Z]`.
pub fn log_likelihood<T: Scalar, M: EnergyModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    log_z: T,
) -> Result<T> {
    if data.n() != model.n() {
        return Err(Error::invalid(format!(
            "dataset has {} columns but model has {} variables",
            data.n(),
            model.n()
        )));
    }
    let total: T = data.rows().map(|x| -model.energy(x)).sum();
    let value = total / T::from_count(data.len() * data.n()) - log_z / T::from_count(data.n());
    // `-0` would leak into reports for constant energies
    Ok(value + T::zero())
}

/// `R_K = n K + |E| K^2`.
pub fn param_count(n: usize, k: usize, edges: usize) -> usize {
    n * k + edges * k * k
}

/// `-2 loglik + 2 R_K / (n N)`.
pub fn aic<T: Scalar>(loglik: T, n: usize, samples: usize, k: usize, edges: usize) -> T {
    let r = T::from_count(param_count(n, k, edges));
    -T::lit(2.0) * loglik + T::lit(2.0) * r / T::from_count(n * samples)
}

/// Samples from the generative model together with their energies and `ln Z_gen`.
#[derive(Debug, Clone)]
pub struct KldReference<T> {
    samples: Dataset<T>,
    energies: Vec<T>,
    log_z: Estimate<T>,
}

impl<T: Scalar> KldReference<T> {
    /// Draws `count` samples with `sampler` and uses the given `ln Z_gen`.
    pub fn new<G: EnergyModel<T> + ?Sized>(
        gen: &G,
        count: usize,
        sampler: &SamplerConfig,
        log_z: Estimate<T>,
    ) -> Result<Self> {
        let samples = mh_sample(gen, count, sampler)?;
        let energies = samples.rows().map(|x| gen.energy(x)).collect();
        Ok(Self {
            samples,
            energies,
            log_z,
        })
    }

    pub fn samples(&self) -> &Dataset<T> {
        &self.samples
    }

    pub fn log_z(&self) -> Estimate<T> {
        self.log_z
    }

    /// `(1/n) [mean(Psi_K - Psi_gen) + ln Z_K - ln Z_gen]`, standard errors added in quadrature.
    pub fn kld<M: EnergyModel<T> + ?Sized>(
        &self,
        model: &M,
        model_log_z: Estimate<T>,
    ) -> Result<Estimate<T>> {
        let n = self.samples.n();
        if model.n() != n || model.interval() != self.samples.interval() {
            return Err(Error::invalid(
                "model and generative model differ in size or interval",
            ));
        }
        let diffs: Vec<T> = self
            .samples
            .rows()
            .zip(&self.energies)
            .map(|(x, &g)| model.energy(x) - g)
            .collect();
        let count = T::from_count(diffs.len());
        let mean = diffs.iter().copied().sum::<T>() / count;
        let var = if diffs.len() > 1 {
            diffs.iter().map(|&d| (d - mean) * (d - mean)).sum::<T>() / (count - T::one())
        } else {
            T::zero()
        };
        let nn = T::from_count(n);
        let value = (mean + model_log_z.value - self.log_z.value) / nn;
        let se = (var / count + model_log_z.se.powi(2) + self.log_z.se.powi(2)).sqrt() / nn;
        if !value.is_finite() {
            return Err(Error::Numeric("KL divergence is not finite".into()));
        }
        Ok(Estimate { value, se })
    }
}

/// KL divergence per node from `gen` to `model`, both normalizers from `M` uniform draws.
///
/// `seed` drives the generative samples; the two MC estimates use derived seeds.
pub fn kld_estimate<T: Scalar, G: EnergyModel<T> + ?Sized, M: EnergyModel<T> + ?Sized>(
    gen: &G,
    model: &M,
    samples: usize,
    m: usize,
    sampler: &SamplerConfig,
    seed: u64,
) -> Result<Estimate<T>> {
    let gen_z = mc_log_partition(gen, m, seed ^ 0x5eed_0001)?;
    let model_z = mc_log_partition(model, m, seed ^ 0x5eed_0002)?;
    let reference = KldReference::new(gen, samples, &sampler.with_seed(seed), gen_z)?;
    reference.kld(model, model_z)
}

/// Scores of one fitted model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score<T> {
    pub loglik: T,
    pub loglik_se: T,
    pub aic: T,
    pub kld: Option<Estimate<T>>,
    pub log_z: Estimate<T>,
    /// Monte Carlo sample count, 0 for an exact normalizer.
    pub mc_samples: usize,
    pub seed: u64,
    pub n: usize,
    pub samples: usize,
    pub k: usize,
    pub edges: usize,
}

impl<T: Scalar> Score<T> {
    /// Builds the score from a log-likelihood at `log_z`; `aic` is derived, never stored independently.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        loglik: T,
        log_z: Estimate<T>,
        n: usize,
        samples: usize,
        k: usize,
        edges: usize,
        mc_samples: usize,
        seed: u64,
    ) -> Self {
        Self {
            loglik,
            loglik_se: log_z.se / T::from_count(n),
            aic: aic(loglik, n, samples, k, edges),
            kld: None,
            log_z,
            mc_samples,
            seed,
            n,
            samples,
            k,
            edges,
        }
    }

    pub fn param_count(&self) -> usize {
        param_count(self.n, self.k, self.edges)
    }
}
