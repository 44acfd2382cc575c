//! The subcommand implementations. Each returns a [`Table`] plus the
//! process exit code (commands that validate something use the exit code
//! to report the verdict, so CI pipelines can gate on it).

use clap::Args;
use clickcounter::{
    click_distribution_bruteforce, click_distribution_closed, empirical_distribution, error_budget,
    errors, goodness_of_fit, optimal_coupler_count, validate_modes, DetectorArrayModel, EvalMode,
    SimulationConfig, TemporalArrayConfig,
};

use crate::output::Table;
use crate::parse::{parse_prob, parse_u32_multi, parse_u64_multi, Prob};
use crate::CliError;

/// Fast-vs-exact agreement tolerance used by the selftest matrix.
const SELFTEST_FAST_TOLERANCE: f64 = 1e-10;

#[derive(Args, Debug)]
pub struct DistArgs {
    /// Number of detectors.
    #[arg(long)]
    pub n: u64,
    /// Number of incident photons.
    #[arg(long)]
    pub m: u64,
    /// Quantum efficiency (rational `p/q` or decimal).
    #[arg(long)]
    pub eta: String,
    /// Dark-count probability per detector.
    #[arg(long)]
    pub pd: String,
}

pub fn cmd_dist(args: &DistArgs, mode: EvalMode) -> Result<(Table, u8), CliError> {
    let eta = parse_prob(&args.eta)?;
    let pd = parse_prob(&args.pd)?;
    let model = DetectorArrayModel::from_rational(args.n, eta.exact, pd.exact)?;
    let dist = click_distribution_closed(args.m, &model, mode)?;

    let mut table = Table::new(vec!["k", "probability"]);
    table.meta("m", args.m);
    table.meta("n", args.n);
    table.meta("eta", eta.text);
    table.meta("p_d", pd.text);
    table.meta("mode", mode.as_str());
    table.meta("normalization_residual", dist.normalization_residual());
    for k in 0..=dist.support_max() {
        table.row(vec![k.into(), dist.prob(k).into()]);
    }
    Ok((table, 0))
}

#[derive(Args, Debug)]
pub struct ErrorArgs {
    /// Number of detectors.
    #[arg(long)]
    pub n: u64,
    /// Number of incident photons.
    #[arg(long)]
    pub m: u64,
    /// Quantum efficiency.
    #[arg(long)]
    pub eta: String,
    /// Dark-count probability per detector.
    #[arg(long)]
    pub pd: String,
}

pub fn cmd_error(args: &ErrorArgs, mode: EvalMode) -> Result<(Table, u8), CliError> {
    let eta = parse_prob(&args.eta)?;
    let pd = parse_prob(&args.pd)?;
    let model = DetectorArrayModel::from_rational(args.n, eta.exact, pd.exact)?;
    let budget = error_budget(args.m, &model, mode)?;

    let mut table = Table::new(vec![
        "epsilon_total",
        "eps_d",
        "eps_n",
        "eps_eta",
        "triangle_slack",
    ]);
    table.meta("m", args.m);
    table.meta("n", args.n);
    table.meta("eta", eta.text);
    table.meta("p_d", pd.text);
    table.meta("mode", mode.as_str());
    table.row(vec![
        budget.epsilon_total.into(),
        budget.eps_d.into(),
        budget.eps_n.into(),
        budget.eps_eta.into(),
        budget.triangle_slack.into(),
    ]);
    Ok((table, 0))
}

#[derive(Args, Debug)]
pub struct FiniteSizeArgs {
    /// Quantum efficiencies, comma-separated.
    #[arg(long)]
    pub eta: String,
    /// Photon numbers: values and/or inclusive `a..b` ranges.
    #[arg(long)]
    pub m: String,
    /// Detector counts: values and/or inclusive ranges.
    #[arg(long)]
    pub n: String,
}

pub fn cmd_finite_size_sweep(
    args: &FiniteSizeArgs,
    mode: EvalMode,
) -> Result<(Table, u8), CliError> {
    let etas = crate::parse::parse_prob_list(&args.eta)?;
    let ms = parse_u64_multi(&args.m)?;
    let ns = parse_u64_multi(&args.n)?;

    let mut table = Table::new(vec!["eta", "n", "m", "eps_n", "eps_n_leading"]);
    table.meta("eta", args.eta.clone());
    table.meta("m", args.m.clone());
    table.meta("n", args.n.clone());
    table.meta("mode", mode.as_str());
    for eta in &etas {
        for &n in &ns {
            for &m in &ms {
                let eps_n = finite_size_error_for(m, eta, n, mode)?;
                let leading = (m * m.saturating_sub(1) / 2) as f64 / n as f64;
                table.row(vec![
                    eta.value.into(),
                    n.into(),
                    m.into(),
                    eps_n.into(),
                    leading.into(),
                ]);
            }
        }
    }
    Ok((table, 0))
}

/// Routes exact mode through the caller's exact rational η rather than its
/// double rounding.
fn finite_size_error_for(m: u64, eta: &Prob, n: u64, mode: EvalMode) -> Result<f64, CliError> {
    match mode {
        EvalMode::Exact => Ok(clickcounter::rational_to_f64(
            &errors::finite_size_error_exact(m, &eta.exact, n)?,
        )),
        other => Ok(errors::finite_size_error(m, eta.value, n, other)?),
    }
}

#[derive(Args, Debug)]
pub struct TemporalArgs {
    /// Coupler transmission.
    #[arg(long = "eta-c")]
    pub eta_c: String,
    /// Detector quantum efficiency.
    #[arg(long, default_value = "1")]
    pub eta: String,
    /// Photon numbers: values and/or inclusive ranges.
    #[arg(long)]
    pub m: String,
    /// Coupler counts: values and/or inclusive ranges.
    #[arg(long = "N", default_value = "0..24")]
    pub n_couplers: String,
}

pub fn cmd_temporal(args: &TemporalArgs, mode: EvalMode) -> Result<(Table, u8), CliError> {
    let eta_c = parse_prob(&args.eta_c)?;
    let eta = parse_prob(&args.eta)?;
    let ms = parse_u64_multi(&args.m)?;
    let ncs = parse_u32_multi(&args.n_couplers)?;
    let n_max = *ncs.iter().max().expect("list validated non-empty");

    let mut table = Table::new(vec!["m", "N", "epsilon"]);
    table.meta("eta_c", eta_c.text.clone());
    table.meta("eta", eta.text.clone());
    table.meta("m", args.m.clone());
    table.meta("N", args.n_couplers.clone());
    table.meta("mode", mode.as_str());
    // Optimum summary: best coupler count per photon number over 0..=N_max,
    // flagged when it sits on the search boundary.
    for &m in &ms {
        let best = optimal_coupler_count(m, eta_c.value, eta.value, n_max)?;
        table.meta(format!("optimum_m{m}_n_star"), u64::from(best.n_couplers));
        table.meta(format!("optimum_m{m}_eps_star"), best.epsilon);
        table.meta(format!("optimum_m{m}_at_boundary"), best.at_boundary);
    }
    for &m in &ms {
        for &nc in &ncs {
            let cfg =
                TemporalArrayConfig::from_rational(nc, eta_c.exact.clone(), eta.exact.clone())?;
            let eps = clickcounter::temporal_error(m, &cfg, mode)?;
            table.row(vec![m.into(), nc.into(), eps.into()]);
        }
    }
    Ok((table, 0))
}

#[derive(Args, Debug)]
pub struct McArgs {
    /// Number of detectors.
    #[arg(long)]
    pub n: u64,
    /// Number of incident photons.
    #[arg(long)]
    pub m: u64,
    /// Quantum efficiency the shots are simulated with.
    #[arg(long)]
    pub eta: String,
    /// Dark-count probability the shots are simulated with.
    #[arg(long)]
    pub pd: String,
    /// Number of simulated shots.
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
    /// Shots per RNG stream (part of the reproducibility contract).
    #[arg(long = "chunk-size", default_value_t = 65_536)]
    pub chunk_size: u64,
    /// Compute the reference at this η instead of --eta (power checks).
    #[arg(long = "assume-eta")]
    pub assume_eta: Option<String>,
    /// Compute the reference at this p_d instead of --pd.
    #[arg(long = "assume-pd")]
    pub assume_pd: Option<String>,
    /// Accept the fit when the chi-square p-value is at least this.
    #[arg(long = "p-threshold", default_value = "1e-3")]
    pub p_threshold: f64,
}

pub fn cmd_mc_validate(args: &McArgs, mode: EvalMode, seed: u64) -> Result<(Table, u8), CliError> {
    let eta = parse_prob(&args.eta)?;
    let pd = parse_prob(&args.pd)?;
    let assumed_eta = match &args.assume_eta {
        Some(s) => parse_prob(s)?,
        None => eta.clone(),
    };
    let assumed_pd = match &args.assume_pd {
        Some(s) => parse_prob(s)?,
        None => pd.clone(),
    };

    let model = DetectorArrayModel::from_rational(args.n, eta.exact.clone(), pd.exact.clone())?;
    let reference_model = DetectorArrayModel::from_rational(
        args.n,
        assumed_eta.exact.clone(),
        assumed_pd.exact.clone(),
    )?;
    let cfg = SimulationConfig {
        samples: args.samples,
        seed,
        chunk_size: args.chunk_size,
    };
    let emp = empirical_distribution(args.m, &model, &cfg)?;
    let reference = click_distribution_closed(args.m, &reference_model, mode)?;
    let fit = goodness_of_fit(&emp, &reference)?;
    let accept = fit.p_value >= args.p_threshold;

    let mut table = Table::new(vec!["tv_distance", "chi2_stat", "dof", "p_value"]);
    table.meta("m", args.m);
    table.meta("n", args.n);
    table.meta("eta", eta.text);
    table.meta("p_d", pd.text);
    table.meta("assumed_eta", assumed_eta.text);
    table.meta("assumed_p_d", assumed_pd.text);
    table.meta("samples", args.samples);
    table.meta("seed", seed);
    table.meta("chunk_size", args.chunk_size);
    table.meta("mode", mode.as_str());
    table.meta("p_threshold", args.p_threshold);
    table.meta("verdict", if accept { "accept" } else { "reject" });
    table.row(vec![
        fit.tv_distance.into(),
        fit.chi2_stat.into(),
        fit.dof.into(),
        fit.p_value.into(),
    ]);
    Ok((table, if accept { 0 } else { 1 }))
}

#[derive(Args, Debug)]
pub struct SelftestArgs {
    /// Largest detector count in the cross-check grid.
    #[arg(long = "max-n", default_value_t = 5)]
    pub max_n: u64,
    /// Largest photon number in the cross-check grid.
    #[arg(long = "max-m", default_value_t = 6)]
    pub max_m: u64,
    /// Corrupt one comparison on purpose, to prove failures are detected.
    #[arg(long = "inject-mismatch", hide = true)]
    pub inject_mismatch: bool,
}

pub fn cmd_selftest(args: &SelftestArgs) -> Result<(Table, u8), CliError> {
    let etas = ["0", "1/4", "1/2", "1"];
    let pds = ["0", "1/10"];

    let mut table = Table::new(vec!["n", "m", "cases", "max_fast_diff", "status"]);
    table.meta("max_n", args.max_n);
    table.meta("max_m", args.max_m);
    table.meta("eta_grid", etas.join(";"));
    table.meta("p_d_grid", pds.join(";"));

    let mut failures = 0u64;
    let mut injected = args.inject_mismatch;
    for n in 1..=args.max_n {
        for m in 0..=args.max_m {
            let mut cases = 0u64;
            let mut max_fast_diff = 0.0f64;
            let mut ok = true;
            for eta in etas {
                for pd in pds {
                    let eta = parse_prob(eta)?;
                    let pd = parse_prob(pd)?;
                    let model = DetectorArrayModel::from_rational(n, eta.exact, pd.exact)?;

                    // Closed form against the independent enumerator, in
                    // exact rational arithmetic: equality must be literal.
                    let closed = click_distribution_closed(m, &model, EvalMode::Exact)?;
                    let brute = click_distribution_bruteforce(m, &model, EvalMode::Exact)?;
                    let mut equal = (0..=n).all(|k| {
                        let mut closed_k = closed.exact_prob(k).expect("exact evaluation");
                        if injected {
                            closed_k += clickcounter::ExactRational::new(1.into(), 1000.into());
                            injected = false;
                        }
                        closed_k == brute.exact_prob(k).expect("exact evaluation")
                    });

                    // Fast evaluator against the exact one; an unreliable
                    // fast result is acceptable (auto mode falls back) but
                    // a reliable one must agree tightly.
                    let report = validate_modes(m, &model)?;
                    if report.fast_reliable {
                        max_fast_diff = max_fast_diff.max(report.max_abs_diff);
                        equal &= report.max_abs_diff <= SELFTEST_FAST_TOLERANCE;
                    }

                    ok &= equal;
                    cases += 1;
                }
            }
            if !ok {
                failures += 1;
            }
            table.row(vec![
                n.into(),
                m.into(),
                cases.into(),
                max_fast_diff.into(),
                if ok { "ok" } else { "FAIL" }.into(),
            ]);
        }
    }
    table.meta("failures", failures);
    Ok((table, if failures == 0 { 0 } else { 1 }))
}
