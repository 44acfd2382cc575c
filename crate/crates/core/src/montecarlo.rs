//! Shot-by-shot stochastic simulation of the detector array.
//!
//! Each shot scatters `m` photons uniformly over the `n` detectors, thins
//! them by the quantum efficiency, and lets every photonless-or-undetected
//! detector dark-fire with probability `p_d` — the event-level process the
//! closed-form distribution summarizes. Nothing here shares a formula with
//! the closed form, which makes the sampled statistics an independent
//! validation channel: [`goodness_of_fit`] quantifies the agreement with a
//! total-variation distance and a Pearson chi-square test.
//!
//! Sampling is reproducible by construction: shots are partitioned into
//! fixed-size chunks, each chunk draws from its own counter-derived RNG
//! stream, and aggregation is an integer sum — so a given
//! `(seed, chunk_size, samples)` triple yields identical counts at any
//! thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use statrs::function::gamma::gamma_ur;

use crate::distribution::{ClickDistribution, DetectorArrayModel, DistributionMode};
use crate::errors::l1_half_distance;
use crate::numerics::accumulate_f64;
use crate::{Error, Result};

/// Sampling plan for [`empirical_distribution`]: total shot count, RNG
/// seed, and the chunk granularity that fixes the parallel stream layout
/// (all three identify the result exactly).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimulationConfig {
    pub samples: u64,
    pub seed: u64,
    pub chunk_size: u64,
}

impl SimulationConfig {
    /// Plan with the default chunk size of 65 536 shots.
    pub fn new(samples: u64, seed: u64) -> Self {
        Self {
            samples,
            seed,
            chunk_size: 1 << 16,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidParameter(
                "samples must be at least 1".to_string(),
            ));
        }
        if self.chunk_size == 0 {
            return Err(Error::InvalidParameter(
                "chunk_size must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Simulates one detection window and returns the click count.
///
/// Every photon picks a uniform detector and survives detection with
/// probability `eta`; a detector with at least one detected photon clicks,
/// and each of the remaining detectors dark-fires with probability `p_d`
/// (drawn collectively as a binomial, which is the same law).
pub fn simulate_shot<R: Rng + ?Sized>(m: u64, model: &DetectorArrayModel, rng: &mut R) -> u64 {
    let n = model.n();
    let eta = model.eta();
    let p_d = model.p_d();

    let mut lit: Vec<u64> = Vec::with_capacity(m.min(64) as usize);
    for _ in 0..m {
        let detector = rng.random_range(0..n);
        if eta >= 1.0 || (eta > 0.0 && rng.random::<f64>() < eta) {
            lit.push(detector);
        }
    }
    lit.sort_unstable();
    lit.dedup();
    let photon_clicks = lit.len() as u64;

    let silent = n - photon_clicks;
    let dark_clicks = if p_d <= 0.0 || silent == 0 {
        0
    } else if p_d >= 1.0 {
        silent
    } else {
        Binomial::new(silent, p_d)
            .expect("p_d validated to lie in (0, 1)")
            .sample(rng)
    };
    photon_clicks + dark_clicks
}

/// Histogram of simulated click counts: `counts[k]` shots ended with `k`
/// clicks, `Σ counts = samples`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmpiricalDistribution {
    m: u64,
    n: u64,
    counts: Vec<u64>,
    samples: u64,
}

impl EmpiricalDistribution {
    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Shot counts indexed by click number, length `n + 1`.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    /// Relative frequencies `counts[k] / samples`.
    pub fn frequencies(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| c as f64 / self.samples as f64)
            .collect()
    }

    /// Repackages the frequencies as a [`ClickDistribution`] so the
    /// distance and reporting machinery applies to sampled data too.
    pub fn to_distribution(&self) -> ClickDistribution {
        let probs = self.frequencies();
        let residual = accumulate_f64(probs.iter().copied()).value - 1.0;
        ClickDistribution::from_parts(
            self.m,
            Some(self.n),
            probs,
            None,
            DistributionMode::Empirical,
            residual,
            true,
        )
    }
}

/// Samples `cfg.samples` shots of [`simulate_shot`] and histograms the
/// click counts.
///
/// Shots are split into chunks of `cfg.chunk_size`; chunk `i` draws from
/// stream `i` of a counter-based RNG seeded with `cfg.seed`, and the
/// per-chunk histograms are summed. Chunks run in parallel, but because the
/// stream layout depends only on the config and integer addition is
/// order-independent, the result is identical for every thread count.
pub fn empirical_distribution(
    m: u64,
    model: &DetectorArrayModel,
    cfg: &SimulationConfig,
) -> Result<EmpiricalDistribution> {
    cfg.validate()?;
    let n = model.n();
    let chunks = cfg.samples.div_ceil(cfg.chunk_size);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(chunk);
            let lo = chunk * cfg.chunk_size;
            let hi = (lo + cfg.chunk_size).min(cfg.samples);
            let mut counts = vec![0u64; n as usize + 1];
            for _ in lo..hi {
                let k = simulate_shot(m, model, &mut rng);
                counts[k as usize] += 1;
            }
            counts
        })
        .reduce(
            || vec![0u64; n as usize + 1],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    Ok(EmpiricalDistribution {
        m,
        n,
        counts,
        samples: cfg.samples,
    })
}

/// Agreement report between a sampled histogram and a reference
/// distribution: total-variation distance plus a Pearson chi-square test.
#[derive(Clone, Debug, PartialEq)]
pub struct GoodnessOfFit {
    /// ½ Σ |frequency_k − reference_k|.
    pub tv_distance: f64,
    /// Pearson statistic over the pooled bins.
    pub chi2_stat: f64,
    /// Pooled bin count minus one.
    pub dof: u64,
    /// Upper chi-square tail probability of the statistic; 1 when every
    /// bin pooled away.
    pub p_value: f64,
}

/// Compares sampled counts against a reference click distribution.
///
/// Pearson validity needs expected counts ≥ 5 per bin, so underfilled bins
/// are pooled into their neighbor toward `k = m` (tails collapse inward,
/// where the reference mass lives). If pooling swallows everything into a
/// single bin the test is vacuous: `dof = 0`, `p_value = 1`.
pub fn goodness_of_fit(
    emp: &EmpiricalDistribution,
    reference: &ClickDistribution,
) -> Result<GoodnessOfFit> {
    if emp.m() != reference.m() {
        return Err(Error::Mismatch(format!(
            "photon numbers differ: sampled at m={}, reference at m={}",
            emp.m(),
            reference.m()
        )));
    }
    if let Some(ref_n) = reference.n() {
        if ref_n != emp.n() {
            return Err(Error::Mismatch(format!(
                "array sizes differ: sampled at n={}, reference at n={ref_n}",
                emp.n()
            )));
        }
    }

    let tv_distance = l1_half_distance(&emp.frequencies(), reference.probs());

    let samples = emp.samples() as f64;
    let top = emp.n() as usize;
    let observed: Vec<f64> = emp.counts().iter().map(|&c| c as f64).collect();
    let expected: Vec<f64> = (0..=top)
        .map(|k| reference.prob(k as u64) * samples)
        .collect();
    let center = (emp.m().min(emp.n())) as usize;
    let bins = pooled_bins(&observed, &expected, center);

    let chi2_stat = bins
        .iter()
        .map(|&(obs, exp)| (obs - exp).powi(2) / exp)
        .sum::<f64>();
    let dof = bins.len().saturating_sub(1) as u64;
    let p_value = if dof == 0 || chi2_stat <= 0.0 {
        1.0
    } else {
        gamma_ur(dof as f64 / 2.0, chi2_stat / 2.0)
    };
    Ok(GoodnessOfFit {
        tv_distance,
        chi2_stat,
        dof,
        p_value,
    })
}

/// Pools adjacent `(observed, expected)` cells until every bin has expected
/// count ≥ 5, sweeping each tail inward toward `center`. Leftover
/// accumulation that never reaches 5 joins the nearest kept bin (preferring
/// the inward side); if nothing reaches 5 at all, a single catch-all bin
/// remains.
fn pooled_bins(observed: &[f64], expected: &[f64], center: usize) -> Vec<(f64, f64)> {
    let mut left: Vec<(f64, f64)> = Vec::new();
    let (mut obs_acc, mut exp_acc) = (0.0, 0.0);
    for i in 0..=center {
        obs_acc += observed[i];
        exp_acc += expected[i];
        if exp_acc >= 5.0 {
            left.push((obs_acc, exp_acc));
            (obs_acc, exp_acc) = (0.0, 0.0);
        }
    }
    let left_pending = (obs_acc, exp_acc);

    // Outer-to-inner over the right tail; `right` ends with the bin nearest
    // the center.
    let mut right: Vec<(f64, f64)> = Vec::new();
    let (mut obs_acc, mut exp_acc) = (0.0, 0.0);
    for i in (center + 1..observed.len()).rev() {
        obs_acc += observed[i];
        exp_acc += expected[i];
        if exp_acc >= 5.0 {
            right.push((obs_acc, exp_acc));
            (obs_acc, exp_acc) = (0.0, 0.0);
        }
    }
    let right_pending = (obs_acc, exp_acc);

    let merge = |bin: &mut (f64, f64), pending: (f64, f64)| {
        bin.0 += pending.0;
        bin.1 += pending.1;
    };
    let mut orphan = (0.0, 0.0);
    if left_pending.1 > 0.0 || left_pending.0 > 0.0 {
        if let Some(last) = left.last_mut() {
            merge(last, left_pending);
        } else if let Some(inner) = right.last_mut() {
            merge(inner, left_pending);
        } else {
            merge(&mut orphan, left_pending);
        }
    }
    if right_pending.1 > 0.0 || right_pending.0 > 0.0 {
        if let Some(inner) = left.last_mut() {
            merge(inner, right_pending);
        } else if let Some(last) = right.last_mut() {
            merge(last, right_pending);
        } else {
            merge(&mut orphan, right_pending);
        }
    }

    let mut bins = left;
    bins.extend(right.into_iter().rev());
    if bins.is_empty() && (orphan.0 > 0.0 || orphan.1 > 0.0) {
        bins.push(orphan);
    }
    bins
}
