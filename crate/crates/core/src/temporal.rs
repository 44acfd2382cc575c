//! Temporally multiplexed arrays: one physical detector unrolled into
//! `n = 2^N` time bins by a binary tree of `N` couplers.
//!
//! Each coupler stage transmits a photon with probability `eta_c`, so every
//! path through the tree sees the same effective efficiency
//! `η_eff = eta_c^N · eta`. Growing the tree trades collision error (fewer
//! photons share a bin) against loss error (more couplers eat more
//! photons); the total error as a function of `N` therefore dips to a
//! minimum at a finite tree depth. [`optimal_coupler_count`] locates that
//! minimum, [`sweep_temporal`] maps the whole curve, and dark counts are
//! fixed at zero throughout (time bins are read out gated).

use num_traits::{One, Zero};

use crate::distribution::DetectorArrayModel;
use crate::errors::{total_error, total_error_exact};
use crate::numerics::{rational_pow, rational_to_f64, ExactRational};
use crate::{Error, EvalMode, Result};

/// Default search limit for [`optimal_coupler_count`]: 24 couplers is 16.7
/// million time bins, past every minimum this model can produce.
pub const DEFAULT_MAX_COUPLERS: u32 = 24;

/// Deepest coupler tree accepted: `2^62` time bins still fits the detector
/// count in a `u64` with headroom.
const MAX_COUPLERS: u32 = 62;

/// A temporally multiplexed array: `n_couplers` tree stages of transmission
/// `eta_c` in front of one detector of quantum efficiency `eta`, giving
/// `2^n_couplers` dark-count-free effective detectors.
///
/// Configs built with [`TemporalArrayConfig::new`] carry floating-point
/// transmissions; [`TemporalArrayConfig::from_rational`] carries exact ones
/// and unlocks exact-mode evaluation.
#[derive(Clone, Debug)]
pub struct TemporalArrayConfig {
    n_couplers: u32,
    eta_c: f64,
    eta: f64,
    exact: Option<(ExactRational, ExactRational)>,
}

impl TemporalArrayConfig {
    pub fn new(n_couplers: u32, eta_c: f64, eta: f64) -> Result<Self> {
        validate_coupler_count(n_couplers)?;
        validate_transmission("eta_c", eta_c)?;
        validate_transmission("eta", eta)?;
        Ok(Self {
            n_couplers,
            eta_c,
            eta,
            exact: None,
        })
    }

    pub fn from_rational(
        n_couplers: u32,
        eta_c: ExactRational,
        eta: ExactRational,
    ) -> Result<Self> {
        validate_coupler_count(n_couplers)?;
        validate_transmission_rational("eta_c", &eta_c)?;
        validate_transmission_rational("eta", &eta)?;
        let config = Self {
            n_couplers,
            eta_c: rational_to_f64(&eta_c),
            eta: rational_to_f64(&eta),
            exact: Some((eta_c, eta)),
        };
        Ok(config)
    }

    /// Number of coupler stages `N`.
    pub fn n_couplers(&self) -> u32 {
        self.n_couplers
    }

    /// Number of effective detectors, `2^N`.
    pub fn n_detectors(&self) -> u64 {
        1u64 << self.n_couplers
    }

    pub fn eta_c(&self) -> f64 {
        self.eta_c
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    fn exact_params(&self) -> Result<(ExactRational, ExactRational)> {
        self.exact.clone().ok_or_else(|| {
            Error::ExactUnavailable(
                "config was built from floating-point transmissions; construct it with \
                 TemporalArrayConfig::from_rational"
                    .to_string(),
            )
        })
    }
}

fn validate_coupler_count(n_couplers: u32) -> Result<()> {
    if n_couplers > MAX_COUPLERS {
        return Err(Error::InvalidParameter(format!(
            "coupler count {n_couplers} exceeds the supported maximum {MAX_COUPLERS}"
        )));
    }
    Ok(())
}

fn validate_transmission(name: &str, value: f64) -> Result<()> {
    if !(value > 0.0 && value <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "{name} must lie in (0, 1], got {value}"
        )));
    }
    Ok(())
}

fn validate_transmission_rational(name: &str, value: &ExactRational) -> Result<()> {
    if value <= &ExactRational::zero() || value > &ExactRational::one() {
        return Err(Error::InvalidParameter(format!(
            "{name} must lie in (0, 1], got {value}"
        )));
    }
    Ok(())
}

/// Effective per-bin quantum efficiency `eta_c^N · eta`: every photon
/// traverses all `N` coupler stages before reaching the detector.
pub fn effective_efficiency(config: &TemporalArrayConfig) -> f64 {
    config.eta_c.powi(config.n_couplers as i32) * config.eta
}

/// [`effective_efficiency`] as an exact rational.
pub fn effective_efficiency_exact(config: &TemporalArrayConfig) -> Result<ExactRational> {
    let (eta_c, eta) = config.exact_params()?;
    Ok(rational_pow(&eta_c, config.n_couplers as u64) * eta)
}

/// Builds the equivalent flat detector-array model: `2^N` detectors at the
/// effective efficiency, no dark counts.
fn as_array_model(config: &TemporalArrayConfig, exact: bool) -> Result<DetectorArrayModel> {
    if exact || config.exact.is_some() {
        let eta_eff = effective_efficiency_exact(config)?;
        DetectorArrayModel::from_rational(config.n_detectors(), eta_eff, ExactRational::zero())
    } else {
        DetectorArrayModel::new(config.n_detectors(), effective_efficiency(config), 0.0)
    }
}

/// Total error of the temporal array for an `m`-photon input: the distance
/// of the `2^N`-bin click distribution at the effective efficiency from the
/// ideal response, as computed by [`total_error`].
pub fn temporal_error(m: u64, config: &TemporalArrayConfig, mode: EvalMode) -> Result<f64> {
    let model = as_array_model(config, matches!(mode, EvalMode::Exact))?;
    total_error(m, &model, mode)
}

/// [`temporal_error`] as an exact rational (requires a config built from
/// rationals).
pub fn temporal_error_exact(m: u64, config: &TemporalArrayConfig) -> Result<ExactRational> {
    let model = as_array_model(config, true)?;
    total_error_exact(m, &model)
}

/// Result of the optimal-depth search: the smallest coupler count attaining
/// the minimal total error (within an absolute tie tolerance of 1e-12) and
/// that error. `at_boundary` warns that the minimum sat at the search limit
/// `n_max`, where a deeper tree might still improve it.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimalCouplers {
    pub m: u64,
    pub n_couplers: u32,
    pub epsilon: f64,
    pub at_boundary: bool,
}

/// Ties within this absolute error count as equal minima; the smaller tree
/// wins (fewer couplers is less hardware at indistinguishable error).
const TIE_TOLERANCE: f64 = 1e-12;

/// Exhaustively evaluates `N = 0..=n_max` and returns the smallest `N`
/// minimizing [`temporal_error`] for `m` photons. The optimal depth is
/// independent of the detector's own `eta` (it scales every candidate's
/// fidelity by the same `eta^m`), which makes this a property of the
/// coupler transmission alone.
pub fn optimal_coupler_count(m: u64, eta_c: f64, eta: f64, n_max: u32) -> Result<OptimalCouplers> {
    let mut epsilons = Vec::with_capacity(n_max as usize + 1);
    for n_couplers in 0..=n_max {
        let config = TemporalArrayConfig::new(n_couplers, eta_c, eta)?;
        epsilons.push(temporal_error(m, &config, EvalMode::Auto)?);
    }
    let minimum = epsilons.iter().copied().fold(f64::INFINITY, f64::min);
    let (n_star, eps_star) = epsilons
        .iter()
        .enumerate()
        .find(|(_, &eps)| eps <= minimum + TIE_TOLERANCE)
        .map(|(n, &eps)| (n as u32, eps))
        .expect("the candidate list is never empty");
    Ok(OptimalCouplers {
        m,
        n_couplers: n_star,
        epsilon: eps_star,
        at_boundary: n_star == n_max,
    })
}

/// One evaluated grid point of a temporal sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalSweepRow {
    pub m: u64,
    pub n_couplers: u32,
    pub epsilon: f64,
}

/// Evaluates [`temporal_error`] over the full `(m, N)` grid, in
/// deterministic m-major, N-minor order.
pub fn sweep_temporal(
    m_list: &[u64],
    eta_c: f64,
    eta: f64,
    n_range: std::ops::RangeInclusive<u32>,
) -> Result<Vec<TemporalSweepRow>> {
    let mut rows = Vec::new();
    for &m in m_list {
        for n_couplers in n_range.clone() {
            let config = TemporalArrayConfig::new(n_couplers, eta_c, eta)?;
            rows.push(TemporalSweepRow {
                m,
                n_couplers,
                epsilon: temporal_error(m, &config, EvalMode::Auto)?,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::parse_exact_rational;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn rational(s: &str) -> ExactRational {
        parse_exact_rational(s).unwrap()
    }

    #[test]
    fn effective_efficiency_examples() {
        let no_tree = TemporalArrayConfig::new(0, 0.95, 0.8).unwrap();
        assert_eq!(effective_efficiency(&no_tree), 0.8);
        assert_eq!(no_tree.n_detectors(), 1);

        let lossless_couplers = TemporalArrayConfig::new(7, 1.0, 0.6).unwrap();
        assert_eq!(effective_efficiency(&lossless_couplers), 0.6);

        let nine = TemporalArrayConfig::new(9, 0.99, 1.0).unwrap();
        assert_abs_diff_eq!(effective_efficiency(&nine), 0.9135, epsilon = 1e-4);
        assert_eq!(nine.n_detectors(), 512);

        let exact =
            TemporalArrayConfig::from_rational(2, rational("19/20"), rational("1")).unwrap();
        assert_eq!(
            effective_efficiency_exact(&exact).unwrap(),
            rational("361/400")
        );
    }

    #[test]
    fn config_validation() {
        assert!(TemporalArrayConfig::new(0, 0.0, 1.0).is_err());
        assert!(TemporalArrayConfig::new(0, 1.0, 0.0).is_err());
        assert!(TemporalArrayConfig::new(0, 1.2, 1.0).is_err());
        assert!(TemporalArrayConfig::new(63, 0.9, 1.0).is_err());
        assert!(TemporalArrayConfig::from_rational(2, rational("0"), rational("1")).is_err());
        assert!(TemporalArrayConfig::new(0, 0.9, 1.0)
            .unwrap()
            .exact_params()
            .is_err(),);
    }

    #[test]
    fn temporal_error_examples() {
        // One photon, bare detector at unit efficiency: already ideal.
        let bare = TemporalArrayConfig::new(0, 0.95, 1.0).unwrap();
        assert_eq!(temporal_error(1, &bare, EvalMode::Auto).unwrap(), 0.0);

        // Two photons on a lossless two-bin tree: collision probability 1/2.
        let two_bins = TemporalArrayConfig::from_rational(1, rational("1"), rational("1")).unwrap();
        assert_eq!(temporal_error_exact(2, &two_bins).unwrap(), rational("1/2"));
        assert_abs_diff_eq!(
            temporal_error(2, &two_bins, EvalMode::Fast).unwrap(),
            0.5,
            epsilon = 1e-14
        );
    }

    #[test]
    fn zero_couplers_cannot_resolve_two_photons() {
        for m in 2..=5u64 {
            let config = TemporalArrayConfig::new(0, 0.95, 1.0).unwrap();
            assert_eq!(temporal_error(m, &config, EvalMode::Auto).unwrap(), 1.0);
        }
    }

    #[test]
    fn frozen_optimum_two_photons_at_95_percent_couplers() {
        // Exact value of the m = 2 error at the optimal depth N = 3:
        // 1 − (0.95³)² · (8·7)/8² = 0.356794595703125 as a dyadic rational.
        let config =
            TemporalArrayConfig::from_rational(3, rational("19/20"), rational("1")).unwrap();
        let exact = temporal_error_exact(2, &config).unwrap();
        assert_abs_diff_eq!(
            rational_to_f64(&exact),
            0.356_794_595_703_125,
            epsilon = 1e-15
        );

        let best = optimal_coupler_count(2, 0.95, 1.0, DEFAULT_MAX_COUPLERS).unwrap();
        assert_eq!(best.n_couplers, 3);
        assert!(!best.at_boundary);
        assert_abs_diff_eq!(best.epsilon, 0.356_794_595_703_125, epsilon = 1e-12);
    }

    #[test]
    fn frozen_optima_across_photon_numbers() {
        // (m, N*, ε*) at η_c = 0.95 and 0.99, detector η = 1; ε* frozen to
        // four significant digits from exact-rational evaluation.
        let at_95: [(u64, u32, f64); 5] = [
            (2, 3, 0.3568),
            (3, 4, 0.5567),
            (4, 5, 0.7049),
            (5, 5, 0.8002),
            (6, 5, 0.8696),
        ];
        for (m, n_star, eps_star) in at_95 {
            let best = optimal_coupler_count(m, 0.95, 1.0, DEFAULT_MAX_COUPLERS).unwrap();
            assert_eq!(best.n_couplers, n_star, "m={m}");
            assert_relative_eq!(best.epsilon, eps_star, max_relative = 1e-3);
            assert!(!best.at_boundary);
        }
        let at_99: [(u64, u32, f64); 7] = [
            (2, 5, 0.1239),
            (3, 6, 0.2042),
            (4, 7, 0.2802),
            (5, 7, 0.3500),
            (6, 7, 0.4178),
            (7, 8, 0.4756),
            (8, 8, 0.5294),
        ];
        for (m, n_star, eps_star) in at_99 {
            let best = optimal_coupler_count(m, 0.99, 1.0, DEFAULT_MAX_COUPLERS).unwrap();
            assert_eq!(best.n_couplers, n_star, "m={m}");
            assert_relative_eq!(best.epsilon, eps_star, max_relative = 1e-3);
        }
    }

    #[test]
    fn photon_resolution_thresholds() {
        // At 95% couplers two photons resolve below one-half error, three
        // do not; at 99% seven photons still resolve, the eighth is worse
        // than the seventh.
        let two = optimal_coupler_count(2, 0.95, 1.0, DEFAULT_MAX_COUPLERS).unwrap();
        assert!(two.epsilon < 0.5);
        let three = optimal_coupler_count(3, 0.95, 1.0, DEFAULT_MAX_COUPLERS).unwrap();
        assert!(three.epsilon > 0.5);

        let seven = optimal_coupler_count(7, 0.99, 1.0, DEFAULT_MAX_COUPLERS).unwrap();
        assert!(seven.epsilon < 0.5);
        let eight = optimal_coupler_count(8, 0.99, 1.0, DEFAULT_MAX_COUPLERS).unwrap();
        assert!(eight.epsilon > seven.epsilon);
    }

    #[test]
    fn single_photon_needs_no_couplers() {
        for eta_c in [0.9, 0.95, 0.99] {
            let best = optimal_coupler_count(1, eta_c, 1.0, 10).unwrap();
            assert_eq!(best.n_couplers, 0);
            assert_eq!(best.epsilon, 0.0);
        }
    }

    #[test]
    fn optimal_depth_is_independent_of_detector_efficiency() {
        for eta_c in [0.95, 0.99] {
            for m in 1..=6u64 {
                let ideal = optimal_coupler_count(m, eta_c, 1.0, 16).unwrap();
                let lossy = optimal_coupler_count(m, eta_c, 0.8, 16).unwrap();
                assert_eq!(ideal.n_couplers, lossy.n_couplers, "m={m}, eta_c={eta_c}");
            }
        }
    }

    #[test]
    fn deeper_trees_beyond_the_optimum_only_lose() {
        let best = optimal_coupler_count(2, 0.95, 1.0, 14).unwrap();
        let mut previous = best.epsilon;
        for n in best.n_couplers + 1..=14 {
            let config = TemporalArrayConfig::new(n, 0.95, 1.0).unwrap();
            let eps = temporal_error(2, &config, EvalMode::Auto).unwrap();
            assert!(eps > previous, "N={n}: {eps} <= {previous}");
            previous = eps;
        }
    }

    #[test]
    fn boundary_minimum_is_flagged() {
        // m = 2 at 99% couplers keeps improving past N = 3, so a search
        // capped there must flag the boundary.
        let capped = optimal_coupler_count(2, 0.99, 1.0, 3).unwrap();
        assert_eq!(capped.n_couplers, 3);
        assert!(capped.at_boundary);
    }

    #[test]
    fn sweep_single_photon_lossless_is_identically_zero() {
        let rows = sweep_temporal(&[1], 1.0, 1.0, 0..=3).unwrap();
        assert_eq!(rows.len(), 4);
        for row in rows {
            assert_eq!(row.epsilon, 0.0);
        }
    }

    #[test]
    fn sweep_shape_and_coupler_quality_ordering() {
        let ms = [2u64, 3, 4, 5];
        let sweep_95 = sweep_temporal(&ms, 0.95, 1.0, 0..=14).unwrap();
        let sweep_99 = sweep_temporal(&ms, 0.99, 1.0, 0..=14).unwrap();
        assert_eq!(sweep_95.len(), ms.len() * 15);
        // m-major, N-minor ordering.
        assert_eq!(sweep_95[0].m, 2);
        assert_eq!(sweep_95[14].n_couplers, 14);
        assert_eq!(sweep_95[15].m, 3);

        for (i, &m) in ms.iter().enumerate() {
            let curve_95: Vec<f64> = sweep_95[i * 15..(i + 1) * 15]
                .iter()
                .map(|r| r.epsilon)
                .collect();
            let curve_99: Vec<f64> = sweep_99[i * 15..(i + 1) * 15]
                .iter()
                .map(|r| r.epsilon)
                .collect();
            let argmin = |c: &[f64]| -> (usize, f64) {
                c.iter()
                    .copied()
                    .enumerate()
                    .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                    .unwrap()
            };
            let (n_95, min_95) = argmin(&curve_95);
            let (n_99, min_99) = argmin(&curve_99);
            // Interior minimum for every m ≥ 2 curve...
            assert!(n_95 > 0 && n_95 < 14, "m={m}");
            assert!(n_99 > 0 && n_99 < 14, "m={m}");
            // ...better couplers give lower minima and (here) deeper trees.
            assert!(min_99 <= min_95, "m={m}");
            assert!(n_99 >= n_95, "m={m}");
        }
    }
}
