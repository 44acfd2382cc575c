//! Click statistics of uniformly illuminated single-photon detector arrays.
//!
//! An array of `n` identical binary (click / no-click) detectors splits `m`
//! incident photons uniformly at random. Each detector fires if it absorbs at
//! least one photon (each photon is detected with efficiency `eta`) or if it
//! produces a dark count (probability `p_d` per detector per shot). This crate
//! computes the resulting distribution of the number of clicks and the
//! figures of merit built on top of it:
//!
//! - [`distribution`]: the closed-form click distribution (fast floating-point
//!   and exact rational evaluators, plus an independent brute-force
//!   enumerator and the infinite-array binomial limit),
//! - [`errors`]: total detection error and its decomposition into dark-count,
//!   finite-size, and quantum-efficiency parts,
//! - [`temporal`]: temporally multiplexed arrays built from chains of 50/50
//!   couplers, and the optimal chain depth for a given photon number,
//! - [`montecarlo`]: a direct per-shot simulator with goodness-of-fit checks
//!   against the analytic distribution,
//! - [`numerics`]: the shared combinatorial and compensated-summation
//!   primitives.
//!
//! Every quantity with a floating-point evaluator also has an exact
//! arbitrary-precision route, selected through [`EvalMode`].

// Staged build scaffolding; modules land one by one.
pub mod distribution;
pub mod numerics;

pub use distribution::{
    binomial_limit_distribution, binomial_limit_distribution_exact, click_distribution_bruteforce,
    click_distribution_closed, single_click_prob, validate_modes, ClickDistribution,
    DetectorArrayModel, DistributionMode, ModeValidationReport,
};
pub mod errors;

pub use errors::{
    dark_count_error_numeric, dark_count_error_unilluminated, error_budget, finite_size_error,
    finite_size_error_eta1_series, l1_half_distance, quantum_efficiency_error, total_error,
    ErrorBudget, SeriesTruncation,
};
pub mod temporal;

pub use temporal::{
    effective_efficiency, optimal_coupler_count, sweep_temporal, temporal_error, OptimalCouplers,
    TemporalArrayConfig, TemporalSweepRow,
};
pub mod montecarlo;

pub use montecarlo::{
    empirical_distribution, goodness_of_fit, simulate_shot, EmpiricalDistribution, GoodnessOfFit,
    SimulationConfig,
};

pub use numerics::{
    parse_exact_rational, rational_to_f64, signed_accumulate, AccumulatedSum, ExactRational,
    SignedLogValue,
};

/// How a quantity is evaluated.
///
/// `Fast` uses floating point throughout (log-domain terms, compensated
/// summation) and annotates the result with a reliability estimate. `Exact`
/// uses arbitrary-precision rational arithmetic and requires the model
/// parameters to be available as exact rationals. `Auto` runs the fast route
/// and falls back to the exact route when the fast result is flagged
/// unreliable (severe cancellation, non-finite intermediates, or negative
/// probabilities beyond rounding noise).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum EvalMode {
    Fast,
    Exact,
    #[default]
    Auto,
}

impl EvalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Fast => "fast",
            EvalMode::Exact => "exact",
            EvalMode::Auto => "auto",
        }
    }
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(EvalMode::Fast),
            "exact" => Ok(EvalMode::Exact),
            "auto" => Ok(EvalMode::Auto),
            other => Err(Error::InvalidParameter(format!(
                "unknown evaluation mode `{other}` (expected fast, exact, or auto)"
            ))),
        }
    }
}

/// Errors reported by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter is outside its documented domain (e.g. a probability
    /// outside `[0, 1]`, or `n = 0`).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An argument is outside the domain of the requested function (e.g. a
    /// click indicator other than 0 or 1).
    #[error("domain error: {0}")]
    Domain(String),

    /// The brute-force enumerator was asked for a configuration larger than
    /// its work bound. The bound exists because the enumeration cost grows
    /// as the number of compositions times `2^n`.
    #[error(
        "brute-force enumeration refused: n = {n}, m = {m} exceeds the work bound \
         (max n = {max_n}, max m = {max_m})"
    )]
    WorkBoundExceeded {
        n: u64,
        m: u64,
        max_n: u64,
        max_m: u64,
    },

    /// Exact evaluation was requested but the model was constructed from
    /// floating-point parameters without exact rational counterparts.
    #[error("exact evaluation unavailable: {0}")]
    ExactUnavailable(String),

    /// A string could not be parsed as an exact rational number.
    #[error("cannot parse `{0}` as a rational number")]
    ParseRational(String),

    /// Two quantities that must describe the same configuration disagree
    /// (e.g. an empirical distribution compared against a reference with a
    /// different detector count).
    #[error("mismatched inputs: {0}")]
    Mismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
