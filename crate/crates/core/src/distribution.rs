//! The click-number distribution of a uniformly illuminated detector array.
//!
//! `m` photons land independently and uniformly on `n` binary detectors;
//! each detector clicks unless every photon it received went undetected
//! (efficiency `eta` per photon) and no dark count fired (probability `p_d`).
//! This module provides four routes to the distribution of the total click
//! count:
//!
//! - [`click_distribution_bruteforce`]: direct enumeration of all photon
//!   placements and click patterns. Exponentially expensive and guarded by a
//!   work bound; it exists as an independent oracle for the closed form.
//! - [`click_distribution_closed`]: the closed form, with a fast
//!   floating-point evaluator (a cancellation-free occupancy decomposition),
//!   an exact rational evaluator of the alternating sum, and an automatic
//!   mode that falls back from fast to exact when a result is flagged.
//! - [`binomial_limit_distribution`]: the infinite-array limit, where the
//!   click count is simply binomial in the number of detected photons.
//! - [`crate::montecarlo::empirical_distribution`]: sampled shot by shot.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};

use crate::numerics::{
    accumulate_f64, bigint_pow, binomial_coefficient, f64_to_exact, ln_biguint, ln_binomial,
    ln_factorial, next_stirling_second_row, rational_to_f64, signed_accumulate, ExactRational,
    SignedLogValue, CANCELLATION_FALLBACK_RATIO,
};
use crate::{Error, EvalMode, Result};

/// Largest `n` the brute-force enumerator accepts.
pub const BRUTEFORCE_MAX_N: u64 = 6;
/// Largest `m` the brute-force enumerator accepts.
pub const BRUTEFORCE_MAX_M: u64 = 8;

/// Fast-mode probabilities this far outside `[0, 1]` are rounding noise
/// and get clamped to the nearest endpoint; anything further out marks the
/// result unreliable.
const ROUNDING_CLAMP: f64 = 1e-10;

/// Pulls rounding-level excursions outside `[0, 1]` back to the endpoint.
/// Larger excursions mean the digits are gone: the value is kept visible
/// and the reliability flag cleared instead of hiding the damage.
fn clamp_unit_interval(probs: &mut [f64], reliable: &mut bool) {
    for p in probs {
        if *p < 0.0 {
            if *p >= -ROUNDING_CLAMP {
                *p = 0.0;
            } else {
                *reliable = false;
            }
        } else if *p > 1.0 {
            if *p <= 1.0 + ROUNDING_CLAMP {
                *p = 1.0;
            } else {
                *reliable = false;
            }
        }
    }
}

/// A fast-mode probability whose alternating sum cancelled catastrophically
/// is still harmless when the surviving value sits below this absolute
/// floor: whatever its relative error, it cannot disturb the distribution,
/// its normalization, or any distance built on it beyond ~`n` times this.
/// (Far-tail click counts — reachable only through many simultaneous dark
/// counts — always land here.)
const ABS_NOISE_FLOOR: f64 = 1e-13;

/// A uniformly illuminated array of `n` identical single-photon detectors
/// with per-photon detection efficiency `eta` and per-shot dark-count
/// probability `p_d` per detector.
///
/// Models built with [`DetectorArrayModel::new`] carry floating-point
/// parameters only; exact evaluation then reports
/// [`Error::ExactUnavailable`] (automatic fallback instead interprets the
/// floats as the dyadic rationals they store). Models built with
/// [`DetectorArrayModel::from_rational`] carry exact parameters and support
/// every mode.
#[derive(Clone, Debug)]
pub struct DetectorArrayModel {
    n: u64,
    eta: f64,
    p_d: f64,
    eta_exact: Option<ExactRational>,
    p_d_exact: Option<ExactRational>,
}

impl DetectorArrayModel {
    /// Model from floating-point parameters. `n ≥ 1`; `eta` and `p_d` must
    /// lie in `[0, 1]`.
    pub fn new(n: u64, eta: f64, p_d: f64) -> Result<DetectorArrayModel> {
        validate_unit("eta", eta)?;
        validate_unit("p_d", p_d)?;
        if n == 0 {
            return Err(Error::InvalidParameter(
                "detector count n must be at least 1".into(),
            ));
        }
        Ok(DetectorArrayModel {
            n,
            eta,
            p_d,
            eta_exact: None,
            p_d_exact: None,
        })
    }

    /// Model from exact rational parameters; enables exact evaluation.
    pub fn from_rational(
        n: u64,
        eta: ExactRational,
        p_d: ExactRational,
    ) -> Result<DetectorArrayModel> {
        validate_unit_rational("eta", &eta)?;
        validate_unit_rational("p_d", &p_d)?;
        if n == 0 {
            return Err(Error::InvalidParameter(
                "detector count n must be at least 1".into(),
            ));
        }
        Ok(DetectorArrayModel {
            n,
            eta: rational_to_f64(&eta),
            p_d: rational_to_f64(&p_d),
            eta_exact: Some(eta),
            p_d_exact: Some(p_d),
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn p_d(&self) -> f64 {
        self.p_d
    }

    pub fn eta_exact(&self) -> Option<&ExactRational> {
        self.eta_exact.as_ref()
    }

    pub fn p_d_exact(&self) -> Option<&ExactRational> {
        self.p_d_exact.as_ref()
    }

    /// The same array with dark counts switched off (used to isolate the
    /// dark-count contribution to the error budget). Exactness is preserved.
    pub fn with_p_d_zero(&self) -> DetectorArrayModel {
        DetectorArrayModel {
            n: self.n,
            eta: self.eta,
            p_d: 0.0,
            eta_exact: self.eta_exact.clone(),
            p_d_exact: self.eta_exact.as_ref().map(|_| ExactRational::zero()),
        }
    }

    /// Exact parameters, or [`Error::ExactUnavailable`] when the model was
    /// built from floats.
    pub(crate) fn exact_params(&self) -> Result<(ExactRational, ExactRational)> {
        match (&self.eta_exact, &self.p_d_exact) {
            (Some(e), Some(p)) => Ok((e.clone(), p.clone())),
            _ => Err(Error::ExactUnavailable(
                "model was built from floating-point parameters; \
                 construct it with DetectorArrayModel::from_rational"
                    .into(),
            )),
        }
    }

    /// Exact parameters if declared, otherwise the dyadic rationals stored
    /// by the floats (used by automatic fallback, which must not fail).
    pub(crate) fn exact_params_or_dyadic(&self) -> (ExactRational, ExactRational) {
        match self.exact_params() {
            Ok(pair) => pair,
            // eta and p_d were validated finite, so the conversion succeeds.
            Err(_) => (
                f64_to_exact(self.eta).expect("validated finite"),
                f64_to_exact(self.p_d).expect("validated finite"),
            ),
        }
    }
}

fn validate_unit(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} = {x} is outside [0, 1]"
        )))
    }
}

fn validate_unit_rational(name: &str, x: &ExactRational) -> Result<()> {
    if !x.is_negative() && *x <= ExactRational::one() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} = {x} is outside [0, 1]"
        )))
    }
}

/// How a [`ClickDistribution`] was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistributionMode {
    /// Closed form, floating point (log-domain, compensated sums).
    Fast,
    /// Closed form, exact rational arithmetic.
    Exact,
    /// Independent brute-force enumeration.
    BruteForce,
    /// Infinite-array binomial limit.
    BinomialLimit,
    /// Empirical frequencies from Monte Carlo sampling.
    Empirical,
}

impl DistributionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DistributionMode::Fast => "fast",
            DistributionMode::Exact => "exact",
            DistributionMode::BruteForce => "brute_force",
            DistributionMode::BinomialLimit => "binomial_limit",
            DistributionMode::Empirical => "empirical",
        }
    }
}

/// A probability distribution over the number of clicking detectors.
///
/// Probabilities are stored for `k = 0 ..= support_max()`; [`prob`] returns
/// exactly 0 beyond that (with `p_d = 0` at most `min(n, m)` detectors can
/// click, so the stored vector may be much shorter than `n + 1`).
///
/// [`prob`]: ClickDistribution::prob
#[derive(Clone, Debug)]
pub struct ClickDistribution {
    m: u64,
    n: Option<u64>,
    probs: Vec<f64>,
    exact_probs: Option<Vec<ExactRational>>,
    mode: DistributionMode,
    normalization_residual: f64,
    reliable: bool,
}

impl ClickDistribution {
    pub(crate) fn from_parts(
        m: u64,
        n: Option<u64>,
        probs: Vec<f64>,
        exact_probs: Option<Vec<ExactRational>>,
        mode: DistributionMode,
        normalization_residual: f64,
        reliable: bool,
    ) -> ClickDistribution {
        debug_assert!(!probs.is_empty());
        ClickDistribution {
            m,
            n,
            probs,
            exact_probs,
            mode,
            normalization_residual,
            reliable,
        }
    }

    pub(crate) fn from_exact_probs(
        m: u64,
        n: Option<u64>,
        exact_probs: Vec<ExactRational>,
        mode: DistributionMode,
    ) -> ClickDistribution {
        let probs = exact_probs.iter().map(rational_to_f64).collect();
        ClickDistribution::from_parts(m, n, probs, Some(exact_probs), mode, 0.0, true)
    }

    /// Number of incident photons.
    pub fn m(&self) -> u64 {
        self.m
    }

    /// Number of detectors; `None` for the infinite-array binomial limit.
    pub fn n(&self) -> Option<u64> {
        self.n
    }

    /// Probability of exactly `k` clicks (0 beyond the stored support).
    pub fn prob(&self, k: u64) -> f64 {
        usize::try_from(k)
            .ok()
            .and_then(|k| self.probs.get(k).copied())
            .unwrap_or(0.0)
    }

    /// Exact probability of `k` clicks, when this distribution was computed
    /// exactly.
    pub fn exact_prob(&self, k: u64) -> Option<ExactRational> {
        self.exact_probs.as_ref().map(|v| {
            usize::try_from(k)
                .ok()
                .and_then(|k| v.get(k).cloned())
                .unwrap_or_else(ExactRational::zero)
        })
    }

    /// Stored probabilities for `k = 0 ..= support_max()`.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Exact probabilities, when available.
    pub fn exact_probs(&self) -> Option<&[ExactRational]> {
        self.exact_probs.as_deref()
    }

    /// Largest click count with a stored probability; beyond it all
    /// probabilities are exactly 0.
    pub fn support_max(&self) -> u64 {
        (self.probs.len() - 1) as u64
    }

    pub fn mode(&self) -> DistributionMode {
        self.mode
    }

    /// Sum of the (raw, pre-clamping) probabilities minus 1. Exactly 0 for
    /// exact and brute-force modes; small for reliable fast results.
    pub fn normalization_residual(&self) -> f64 {
        self.normalization_residual
    }

    /// False when fast-mode evaluation hit severe cancellation, non-finite
    /// intermediates, or negative probabilities beyond rounding noise; the
    /// automatic mode reacts by recomputing exactly.
    pub fn is_reliable(&self) -> bool {
        self.reliable
    }
}

/// Probability that a single detector (array size 1) reports click state
/// `k` (1 = click, 0 = silence) when hit by `m` photons:
/// `Pr(1) = 1 - (1-eta)^m (1-p_d)` and `Pr(0)` its complement.
pub fn single_click_prob(k: u8, m: u64, eta: f64, p_d: f64) -> Result<f64> {
    if k > 1 {
        return Err(Error::Domain(format!(
            "a single detector reports 0 or 1 clicks, not {k}"
        )));
    }
    validate_unit("eta", eta)?;
    validate_unit("p_d", p_d)?;
    let p_silent = pow_one_minus(eta, m) * (1.0 - p_d);
    Ok(if k == 0 { p_silent } else { 1.0 - p_silent })
}

/// `(1 - x)^m` computed stably for `x ∈ [0, 1]`, with `0^0 = 1`.
fn pow_one_minus(x: f64, m: u64) -> f64 {
    if m == 0 {
        1.0
    } else if x >= 1.0 {
        0.0
    } else {
        (m as f64 * (-x).ln_1p()).exp()
    }
}

// ---------------------------------------------------------------------------
// Brute force: the independent oracle
// ---------------------------------------------------------------------------

/// Computes the click distribution by enumerating every way to distribute
/// `m` photons over `n` detectors (weighted by multinomial counts) and every
/// click pattern of the array. Cost grows as `C(m+n-1, n-1) * 2^n`, so the
/// enumeration refuses to run beyond `n = `[`BRUTEFORCE_MAX_N`],
/// `m = `[`BRUTEFORCE_MAX_M`].
///
/// This function shares no formulas with [`click_distribution_closed`]
/// beyond the single-detector click probability; it exists to validate the
/// closed form.
pub fn click_distribution_bruteforce(
    m: u64,
    model: &DetectorArrayModel,
    mode: EvalMode,
) -> Result<ClickDistribution> {
    let n = model.n();
    if n > BRUTEFORCE_MAX_N || m > BRUTEFORCE_MAX_M {
        return Err(Error::WorkBoundExceeded {
            n,
            m,
            max_n: BRUTEFORCE_MAX_N,
            max_m: BRUTEFORCE_MAX_M,
        });
    }
    match mode {
        EvalMode::Fast => Ok(bruteforce_f64(m, n, model.eta(), model.p_d())),
        EvalMode::Exact => {
            let (eta, p_d) = model.exact_params()?;
            Ok(bruteforce_exact(m, n, &eta, &p_d))
        }
        EvalMode::Auto => match model.exact_params() {
            Ok((eta, p_d)) => Ok(bruteforce_exact(m, n, &eta, &p_d)),
            Err(_) => Ok(bruteforce_f64(m, n, model.eta(), model.p_d())),
        },
    }
}

fn bruteforce_exact(m: u64, n: u64, eta: &ExactRational, p_d: &ExactRational) -> ClickDistribution {
    let nu = n as usize;
    let mu = m as usize;

    // Per-detector silence probability given x absorbed photons:
    // (1-eta)^x (1-p_d), for x = 0..=m.
    let one = ExactRational::one();
    let q_eta = &one - eta;
    let q_pd = &one - p_d;
    let mut p_silent: Vec<ExactRational> = Vec::with_capacity(mu + 1);
    let mut pow = one.clone();
    for _ in 0..=mu {
        p_silent.push(&pow * &q_pd);
        pow *= &q_eta;
    }
    let p_click: Vec<ExactRational> = p_silent.iter().map(|p| &one - p).collect();

    let mut factorial: Vec<BigUint> = Vec::with_capacity(mu + 1);
    factorial.push(BigUint::one());
    for i in 1..=mu {
        factorial.push(&factorial[i - 1] * BigUint::from(i));
    }
    let n_pow_m = bigint_pow(&BigInt::from(n), m).magnitude().clone();

    let mut probs = vec![ExactRational::zero(); nu + 1];
    let mut photons = vec![0u64; nu];

    // Enumerate compositions of m into n ordered parts.
    fn compositions(
        detector: usize,
        remaining: u64,
        photons: &mut Vec<u64>,
        visit: &mut impl FnMut(&[u64]),
    ) {
        if detector + 1 == photons.len() {
            photons[detector] = remaining;
            visit(photons);
            return;
        }
        for x in 0..=remaining {
            photons[detector] = x;
            compositions(detector + 1, remaining - x, photons, visit);
        }
    }

    // For one composition, walk every click pattern, carrying the running
    // probability product; leaves accumulate into probs[clicks].
    fn click_patterns(
        detector: usize,
        clicks: usize,
        product: ExactRational,
        photons: &[u64],
        p_silent: &[ExactRational],
        p_click: &[ExactRational],
        probs: &mut [ExactRational],
    ) {
        if detector == photons.len() {
            probs[clicks] += product;
            return;
        }
        let x = photons[detector] as usize;
        if !p_silent[x].is_zero() {
            click_patterns(
                detector + 1,
                clicks,
                &product * &p_silent[x],
                photons,
                p_silent,
                p_click,
                probs,
            );
        }
        if !p_click[x].is_zero() {
            click_patterns(
                detector + 1,
                clicks + 1,
                &product * &p_click[x],
                photons,
                p_silent,
                p_click,
                probs,
            );
        }
    }

    compositions(0, m, &mut photons, &mut |photons| {
        let mut ways = factorial[mu].clone();
        for &x in photons {
            ways /= &factorial[x as usize];
        }
        let weight = ExactRational::new(BigInt::from(ways), BigInt::from(n_pow_m.clone()));
        click_patterns(0, 0, weight, photons, &p_silent, &p_click, &mut probs);
    });

    debug_assert!(probs.iter().sum::<ExactRational>().is_one());
    ClickDistribution::from_exact_probs(m, Some(n), probs, DistributionMode::BruteForce)
}

fn bruteforce_f64(m: u64, n: u64, eta: f64, p_d: f64) -> ClickDistribution {
    let nu = n as usize;
    let mu = m as usize;

    let mut p_silent: Vec<f64> = Vec::with_capacity(mu + 1);
    for x in 0..=mu {
        p_silent.push(pow_one_minus(eta, x as u64) * (1.0 - p_d));
    }
    let p_click: Vec<f64> = p_silent.iter().map(|p| 1.0 - p).collect();

    let mut factorial = vec![1.0f64; mu + 1];
    for i in 1..=mu {
        factorial[i] = factorial[i - 1] * i as f64;
    }
    let n_pow_m = (n as f64).powi(m as i32);

    let mut probs = vec![0.0f64; nu + 1];
    let mut photons = vec![0u64; nu];

    fn compositions(
        detector: usize,
        remaining: u64,
        photons: &mut Vec<u64>,
        visit: &mut impl FnMut(&[u64]),
    ) {
        if detector + 1 == photons.len() {
            photons[detector] = remaining;
            visit(photons);
            return;
        }
        for x in 0..=remaining {
            photons[detector] = x;
            compositions(detector + 1, remaining - x, photons, visit);
        }
    }

    fn click_patterns(
        detector: usize,
        clicks: usize,
        product: f64,
        photons: &[u64],
        p_silent: &[f64],
        p_click: &[f64],
        probs: &mut [f64],
    ) {
        if detector == photons.len() {
            probs[clicks] += product;
            return;
        }
        let x = photons[detector] as usize;
        if p_silent[x] != 0.0 {
            click_patterns(
                detector + 1,
                clicks,
                product * p_silent[x],
                photons,
                p_silent,
                p_click,
                probs,
            );
        }
        if p_click[x] != 0.0 {
            click_patterns(
                detector + 1,
                clicks + 1,
                product * p_click[x],
                photons,
                p_silent,
                p_click,
                probs,
            );
        }
    }

    compositions(0, m, &mut photons, &mut |photons| {
        let mut weight = factorial[mu] / n_pow_m;
        for &x in photons {
            weight /= factorial[x as usize];
        }
        click_patterns(0, 0, weight, photons, &p_silent, &p_click, &mut probs);
    });

    let residual = probs.iter().sum::<f64>() - 1.0;
    ClickDistribution::from_parts(
        m,
        Some(n),
        probs,
        None,
        DistributionMode::BruteForce,
        residual,
        true,
    )
}

// ---------------------------------------------------------------------------
// Closed form
// ---------------------------------------------------------------------------

/// Evaluates the closed-form click distribution
/// `Pr(k) = C(n,k)/n^m · Σ_{l=0..k} (-1)^l (1-p_d)^{n-k+l} C(k,l) (n - (n-k+l)·eta)^m`.
///
/// With `p_d = 0` at most `min(n, m)` detectors can click and the evaluation
/// is restricted to that support, which keeps the cost bounded in `m` no
/// matter how large `n` is; with `p_d > 0` all `n + 1` click counts carry
/// probability.
///
/// Three evaluation modes exist. `Exact` computes the alternating sum in
/// rational arithmetic (every probability an exact integer ratio) and
/// requires exact model parameters. `Fast` answers in floating point;
/// rather than evaluating the alternating sum — whose terms dwarf the result
/// by enough orders of magnitude that double precision keeps no digits at
/// moderate `n` — it uses an algebraically identical decomposition with only
/// nonnegative addends (binomial thinning of the photons, occupancy counts
/// for the detectors they land on, and a binomial convolution for dark
/// counts), so every probability comes out with near-full relative
/// precision. For photon numbers beyond [`FAST_OCCUPANCY_MAX_M`] it falls
/// back to direct log-domain evaluation of the alternating sum and flags
/// results whose digits cancelled away. `Auto` runs fast and transparently
/// recomputes exactly when the fast result is flagged.
pub fn click_distribution_closed(
    m: u64,
    model: &DetectorArrayModel,
    mode: EvalMode,
) -> Result<ClickDistribution> {
    match mode {
        EvalMode::Fast => Ok(closed_fast(m, model.n(), model.eta(), model.p_d())),
        EvalMode::Exact => {
            let (eta, p_d) = model.exact_params()?;
            Ok(closed_exact(m, model.n(), &eta, &p_d))
        }
        EvalMode::Auto => {
            let fast = closed_fast(m, model.n(), model.eta(), model.p_d());
            if fast.is_reliable() {
                Ok(fast)
            } else {
                let (eta, p_d) = model.exact_params_or_dyadic();
                Ok(closed_exact(m, model.n(), &eta, &p_d))
            }
        }
    }
}

/// Largest photon number the occupancy-based fast route handles: building
/// the Stirling-number rows costs `O(m²)` big-integer additions, which stays
/// in the low milliseconds up to here. Beyond it the fast path evaluates the
/// alternating sum directly (and relies on the unreliability flag).
pub const FAST_OCCUPANCY_MAX_M: u64 = 512;

fn closed_fast(m: u64, n: u64, eta: f64, p_d: f64) -> ClickDistribution {
    if m <= FAST_OCCUPANCY_MAX_M {
        closed_fast_occupancy(m, n, eta, p_d)
    } else {
        closed_fast_alternating(m, n, eta, p_d)
    }
}

/// Cancellation-free fast evaluation.
///
/// Condition on the number `i` of detected photons (binomial thinning with
/// success probability `eta`); the detected photons land independently and
/// uniformly, so the photon-click count `k` follows the classical occupancy
/// law `C(n,k) k! S(i,k) / n^i` with `S` the Stirling numbers of the second
/// kind. Dark counts then fire independently on the `n - k` silent
/// detectors, a binomial layer convolved on top:
///
/// ```text
/// Pr(k) = Σ_{k0 ≤ min(k,m)} [Σ_i C(m,i) eta^i (1-eta)^(m-i) ·
///          C(n,k0) k0! S(i,k0) / n^i] · C(n-k0, k-k0) p_d^(k-k0) (1-p_d)^(n-k)
/// ```
///
/// Every addend is nonnegative, so nothing cancels: each probability —
/// including far-tail ones hundreds of orders of magnitude down — carries
/// near-full relative precision at any array size. Factors are assembled in
/// log domain to dodge over/underflow; sums use compensated accumulation.
fn closed_fast_occupancy(m: u64, n: u64, eta: f64, p_d: f64) -> ClickDistribution {
    let mu = m as usize;
    let k0_max = n.min(m) as usize;
    let nf = n as f64;
    let ln_n = nf.ln();

    // ln S(i, k) for i ≤ m, k ≤ k0_max; NEG_INFINITY marks S = 0. Rows are
    // built locally so the cost is one pass of the recurrence per call.
    let mut ln_stirling = vec![vec![f64::NEG_INFINITY; k0_max + 1]; mu + 1];
    {
        let mut row: Vec<BigUint> = vec![BigUint::one()];
        for (i, lns) in ln_stirling.iter_mut().enumerate() {
            if i > 0 {
                row = next_stirling_second_row(&row);
            }
            for (k, s) in row.iter().enumerate().take(k0_max + 1) {
                if !s.is_zero() {
                    lns[k] = ln_biguint(s);
                }
            }
        }
    }

    // Thinning weights ln C(m,i) + i·ln eta + (m-i)·ln(1-eta); None is an
    // exact zero (all-or-nothing detection at the eta endpoints).
    let ln_eta = eta.ln();
    let ln_one_minus_eta = (-eta).ln_1p();
    let ln_w: Vec<Option<f64>> = (0..=mu)
        .map(|i| {
            if (eta == 0.0 && i > 0) || (eta == 1.0 && i < mu) {
                return None;
            }
            let mut log = ln_binomial(m, i as u64);
            if i > 0 {
                log += i as f64 * ln_eta;
            }
            if i < mu {
                log += (mu - i) as f64 * ln_one_minus_eta;
            }
            Some(log)
        })
        .collect();

    // Photon-click counts: Pr0(k) = Σ_i w_i · C(n,k) k! S(i,k) / n^i. The
    // log of each addend is ≤ 0 up to rounding — it is a probability times
    // a weight — so overflow is impossible.
    let mut reliable = true;
    let mut core = Vec::with_capacity(k0_max + 1);
    // k indexes the inner dimension of ln_stirling while the iterator
    // below runs over the outer one, so enumerate() cannot replace it.
    #[allow(clippy::needless_range_loop)]
    for k in 0..=k0_max {
        let ln_front = ln_binomial(n, k as u64) + ln_factorial(k as u64);
        let acc = signed_accumulate((k..=mu).filter_map(|i| {
            let ln_w_i = ln_w[i]?;
            let ln_s = ln_stirling[i][k];
            if ln_s == f64::NEG_INFINITY {
                return None;
            }
            Some(SignedLogValue::new(
                1,
                ln_w_i + ln_front + ln_s - i as f64 * ln_n,
            ))
        }));
        if !acc.reliable || !acc.value.is_finite() {
            reliable = false;
        }
        core.push(acc.value);
    }

    // Dark-count layer: k - k0 of the n - k0 photon-silent detectors fire.
    let probs: Vec<f64> = if p_d == 0.0 {
        core
    } else if p_d >= 1.0 {
        // Every photon-silent detector fires: all n detectors click.
        let mut probs = vec![0.0; n as usize + 1];
        probs[n as usize] = accumulate_f64(core.iter().copied()).value;
        probs
    } else {
        let ln_pd = p_d.ln();
        let ln_q_pd = (-p_d).ln_1p();
        (0..=n as usize)
            .map(|k| {
                let acc = accumulate_f64((0..=k.min(k0_max)).map(|k0| {
                    let fired = (k - k0) as f64;
                    let silent = (n as usize - k) as f64;
                    let ln_dark = ln_binomial(n - k0 as u64, (k - k0) as u64)
                        + fired * ln_pd
                        + silent * ln_q_pd;
                    core[k0] * ln_dark.exp()
                }));
                if !acc.value.is_finite() {
                    reliable = false;
                }
                acc.value
            })
            .collect()
    };

    let sum = accumulate_f64(probs.iter().copied());
    let residual = if sum.value.is_finite() {
        sum.value - 1.0
    } else {
        reliable = false;
        f64::NAN
    };
    let mut probs = probs;
    clamp_unit_interval(&mut probs, &mut reliable);

    ClickDistribution::from_parts(
        m,
        Some(n),
        probs,
        None,
        DistributionMode::Fast,
        residual,
        reliable,
    )
}

/// Direct log-domain evaluation of the alternating closed form, used for
/// photon numbers beyond the occupancy route's cap. Terms can exceed the
/// result by hundreds of orders of magnitude, so catastrophic cancellation
/// is detected per click count and clears the reliability flag whenever a
/// cancelled value is large enough to matter.
fn closed_fast_alternating(m: u64, n: u64, eta: f64, p_d: f64) -> ClickDistribution {
    let k_max = if p_d == 0.0 { n.min(m) } else { n };
    let j_lo = n - k_max;

    // Per-j factor a_j = (1-p_d)^j ((n - j·eta)/n)^m in log domain.
    // `None` marks an exact zero factor.
    let ln_q_pd = (-p_d).ln_1p(); // -inf when p_d = 1
    let nf = n as f64;
    let mf = m as f64;
    let log_a: Vec<Option<f64>> = (j_lo..=n)
        .map(|j| {
            let jf = j as f64;
            let mut log = 0.0f64;
            if j > 0 {
                if p_d >= 1.0 {
                    return None;
                }
                log += jf * ln_q_pd;
            }
            if m > 0 {
                let x = jf * eta / nf;
                if x >= 1.0 {
                    return None;
                }
                log += mf * (-x).ln_1p();
            }
            Some(log)
        })
        .collect();

    let mut raw = Vec::with_capacity(k_max as usize + 1);
    let mut reliable = true;
    let mut terms: Vec<SignedLogValue> = Vec::new();
    for k in 0..=k_max {
        let ln_cnk = ln_binomial(n, k);
        terms.clear();
        let mut any_nonzero = false;
        for l in 0..=k {
            let j = n - k + l;
            match log_a[(j - j_lo) as usize] {
                None => terms.push(SignedLogValue::ZERO),
                Some(log_aj) => {
                    any_nonzero = true;
                    let sign = if l % 2 == 0 { 1 } else { -1 };
                    terms.push(SignedLogValue::new(
                        sign,
                        ln_cnk + ln_binomial(k, l) + log_aj,
                    ));
                }
            }
        }
        let acc = signed_accumulate(terms.iter().copied());
        let cancelled_and_visible = any_nonzero
            && acc.cancellation_ratio < CANCELLATION_FALLBACK_RATIO
            && acc.value.abs() > ABS_NOISE_FLOOR;
        if !acc.reliable || !acc.value.is_finite() || cancelled_and_visible {
            reliable = false;
        }
        raw.push(acc.value);
    }

    // Raw normalization residual, then clamp away rounding-level
    // excursions outside [0, 1].
    let sum = signed_accumulate(raw.iter().map(|&x| SignedLogValue::from_f64(x)));
    let residual = if sum.reliable {
        sum.value - 1.0
    } else {
        f64::NAN
    };
    let mut probs = raw;
    clamp_unit_interval(&mut probs, &mut reliable);

    ClickDistribution::from_parts(
        m,
        Some(n),
        probs,
        None,
        DistributionMode::Fast,
        residual,
        reliable,
    )
}

fn closed_exact(m: u64, n: u64, eta: &ExactRational, p_d: &ExactRational) -> ClickDistribution {
    // Write eta = c/d and p_d = a/b in lowest terms. Every probability is
    // then an integer over the common denominator D = b^n d^m n^m:
    //   Pr(k) = C(n,k) Σ_l (-1)^l C(k,l) u_{n-k+l} / D,
    //   u_j   = (b-a)^j b^{n-j} (n d - j c)^m,
    // so the whole vector is assembled in integer arithmetic with a single
    // reduction per k.
    let c = eta.numer();
    let d = eta.denom();
    let a = p_d.numer();
    let b = p_d.denom();

    let k_max = if p_d.is_zero() { n.min(m) } else { n };
    let j_lo = n - k_max;
    let window = (k_max + 1) as usize;

    let nd = BigInt::from(n) * d;
    let u: Vec<BigInt> = if p_d.is_zero() {
        // b = 1, a = 0: only the illumination factor survives.
        (0..window)
            .map(|i| {
                let j = j_lo + i as u64;
                bigint_pow(&(&nd - BigInt::from(j) * c), m)
            })
            .collect()
    } else {
        let b_minus_a = b - a;
        // Ascending powers of (b-a) and of b covering the window.
        let mut pow_ba = Vec::with_capacity(window);
        let mut pow_b = Vec::with_capacity(window);
        pow_ba.push(bigint_pow(&b_minus_a, j_lo));
        pow_b.push(BigInt::one());
        for i in 1..window {
            let next_ba = &pow_ba[i - 1] * &b_minus_a;
            pow_ba.push(next_ba);
            let next_b = &pow_b[i - 1] * b;
            pow_b.push(next_b);
        }
        (0..window)
            .map(|i| {
                let j = j_lo + i as u64;
                let illum = bigint_pow(&(&nd - BigInt::from(j) * c), m);
                &pow_ba[i] * &pow_b[window - 1 - i] * illum
            })
            .collect()
    };

    let denom = bigint_pow(b, n) * bigint_pow(d, m) * bigint_pow(&BigInt::from(n), m);

    let mut numerators: Vec<BigInt> = Vec::with_capacity(window);
    for k in 0..=k_max {
        let cnk = BigInt::from(binomial_coefficient(n, k as i64));
        let mut acc = BigInt::zero();
        for l in 0..=k {
            let j = n - k + l;
            let term = BigInt::from(binomial_coefficient(k, l as i64)) * &u[(j - j_lo) as usize];
            if l % 2 == 0 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        numerators.push(cnk * acc);
    }

    debug_assert_eq!(
        numerators.iter().sum::<BigInt>(),
        denom,
        "exact closed form must sum to 1"
    );
    let probs: Vec<ExactRational> = numerators
        .into_iter()
        .map(|num| ExactRational::new(num, denom.clone()))
        .collect();
    ClickDistribution::from_exact_probs(m, Some(n), probs, DistributionMode::Exact)
}

// ---------------------------------------------------------------------------
// Binomial limit
// ---------------------------------------------------------------------------

/// The `n → ∞` limit of the click distribution: every photon lands on its
/// own detector, so (with `p_d = 0`) the click count is binomial,
/// `Pr(k) = C(m,k) eta^k (1-eta)^(m-k)`.
pub fn binomial_limit_distribution(m: u64, eta: f64) -> Result<ClickDistribution> {
    validate_unit("eta", eta)?;
    let mu = m as usize;
    let mut probs = vec![0.0f64; mu + 1];
    if eta == 0.0 {
        probs[0] = 1.0;
    } else if eta == 1.0 {
        probs[mu] = 1.0;
    } else {
        let ln_eta = eta.ln();
        let ln_q = (-eta).ln_1p();
        for (k, slot) in probs.iter_mut().enumerate() {
            let log = ln_binomial(m, k as u64) + k as f64 * ln_eta + (mu - k) as f64 * ln_q;
            *slot = log.exp();
        }
    }
    let residual = probs.iter().sum::<f64>() - 1.0;
    Ok(ClickDistribution::from_parts(
        m,
        None,
        probs,
        None,
        DistributionMode::BinomialLimit,
        residual,
        true,
    ))
}

/// Exact-rational version of [`binomial_limit_distribution`].
pub fn binomial_limit_distribution_exact(m: u64, eta: &ExactRational) -> Result<ClickDistribution> {
    validate_unit_rational("eta", eta)?;
    let c = eta.numer();
    let d = eta.denom();
    let denom = bigint_pow(d, m);
    let d_minus_c = d - c;
    let probs: Vec<ExactRational> = (0..=m)
        .map(|k| {
            let num = BigInt::from(binomial_coefficient(m, k as i64))
                * bigint_pow(c, k)
                * bigint_pow(&d_minus_c, m - k);
            ExactRational::new(num, denom.clone())
        })
        .collect();
    Ok(ClickDistribution::from_exact_probs(
        m,
        None,
        probs,
        DistributionMode::BinomialLimit,
    ))
}

// ---------------------------------------------------------------------------
// Mode cross-validation
// ---------------------------------------------------------------------------

/// Comparison of the fast and exact evaluators on the same model.
#[derive(Clone, Copy, Debug)]
pub struct ModeValidationReport {
    /// Largest absolute difference between fast and exact probabilities.
    pub max_abs_diff: f64,
    /// Click count at which the largest difference occurs.
    pub worst_k: u64,
    /// Whether the fast evaluator considered its own result reliable.
    pub fast_reliable: bool,
}

/// Runs both closed-form evaluators and reports how far apart they are.
/// Requires exact model parameters. Never panics or overflows: if the fast
/// route destroyed all digits, the report simply carries a large difference
/// and `fast_reliable = false`.
pub fn validate_modes(m: u64, model: &DetectorArrayModel) -> Result<ModeValidationReport> {
    let (eta, p_d) = model.exact_params()?;
    let fast = closed_fast(m, model.n(), model.eta(), model.p_d());
    let exact = closed_exact(m, model.n(), &eta, &p_d);
    let top = fast.support_max().max(exact.support_max());
    let mut max_abs_diff = 0.0f64;
    let mut worst_k = 0u64;
    for k in 0..=top {
        let diff = (fast.prob(k) - exact.prob(k)).abs();
        if diff > max_abs_diff {
            max_abs_diff = diff;
            worst_k = k;
        }
    }
    Ok(ModeValidationReport {
        max_abs_diff,
        worst_k,
        fast_reliable: fast.is_reliable(),
    })
}
