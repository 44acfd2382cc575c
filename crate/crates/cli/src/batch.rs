//! Batch sweeps driven by a JSON spec file.
//!
//! A spec file names one quantity and the parameter grids to sweep it
//! over; the command walks the cartesian product and emits one long-format
//! table. Integer grids are JSON arrays or inclusive `"a..b"` range
//! strings; probabilities are strings (`"3/4"`, `"0.95"`, `"1e-4"`) so
//! they stay exact. The file may also pin `mode`, `format`, and `out`,
//! which then override the command-line values.

use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;

use clickcounter::{
    click_distribution_closed, error_budget, errors, goodness_of_fit, rational_to_f64,
    DetectorArrayModel, EvalMode, SimulationConfig, TemporalArrayConfig,
};

use crate::output::{Format, Table};
use crate::parse::{parse_prob, parse_u64_multi, Prob};
use crate::CliError;

#[derive(Args, Debug)]
pub struct BatchArgs {
    /// Path to the JSON sweep-spec file.
    #[arg(long)]
    pub spec: PathBuf,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    quantity: Quantity,
    #[serde(default)]
    m: Option<IntGrid>,
    #[serde(default)]
    n: Option<IntGrid>,
    #[serde(default)]
    eta: Option<Vec<String>>,
    #[serde(default)]
    p_d: Option<Vec<String>>,
    #[serde(default)]
    eta_c: Option<Vec<String>>,
    #[serde(default, rename = "N")]
    n_couplers: Option<IntGrid>,
    #[serde(default)]
    mode: Option<String>,
    #[serde(default)]
    format: Option<String>,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    samples: Option<u64>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    chunk_size: Option<u64>,
}

#[derive(Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum Quantity {
    Dist,
    TotalError,
    FiniteSize,
    DarkCount,
    QeError,
    Temporal,
    Mc,
}

impl Quantity {
    fn name(self) -> &'static str {
        match self {
            Quantity::Dist => "dist",
            Quantity::TotalError => "total_error",
            Quantity::FiniteSize => "finite_size",
            Quantity::DarkCount => "dark_count",
            Quantity::QeError => "qe_error",
            Quantity::Temporal => "temporal",
            Quantity::Mc => "mc",
        }
    }
}

/// An integer grid: explicit list, or an inclusive `"a..b"` range string.
#[derive(Deserialize, Debug)]
#[serde(untagged)]
enum IntGrid {
    List(Vec<u64>),
    Range(String),
}

impl IntGrid {
    fn values(&self, what: &str) -> Result<Vec<u64>, CliError> {
        let values = match self {
            IntGrid::List(v) => v.clone(),
            IntGrid::Range(s) => parse_u64_multi(s)?,
        };
        if values.is_empty() {
            return Err(CliError::Invalid(format!("grid `{what}` is empty")));
        }
        Ok(values)
    }
}

/// Output destination and format chosen by the spec file (falling back to
/// the command-line values when absent).
pub struct BatchOverrides {
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
}

pub fn cmd_batch(
    args: &BatchArgs,
    cli_mode: EvalMode,
    cli_seed: u64,
) -> Result<(Table, u8, BatchOverrides), CliError> {
    let text = std::fs::read_to_string(&args.spec)?;
    let spec: SweepSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::Invalid(format!("invalid sweep spec: {e}")))?;

    let mode = match &spec.mode {
        Some(s) => s.parse::<EvalMode>()?,
        None => cli_mode,
    };
    let format = match spec.format.as_deref() {
        Some("csv") => Some(Format::Csv),
        Some("json") => Some(Format::Json),
        Some(other) => {
            return Err(CliError::Invalid(format!(
                "unknown format `{other}` in sweep spec (expected csv or json)"
            )))
        }
        None => None,
    };
    let overrides = BatchOverrides {
        format,
        out: spec.out.clone(),
    };

    let mut table = run_quantity(&spec, mode, cli_seed)?;
    table.meta("mode", mode.as_str());
    Ok((table, 0, overrides))
}

fn run_quantity(spec: &SweepSpec, mode: EvalMode, cli_seed: u64) -> Result<Table, CliError> {
    let quantity = spec.quantity;
    let grid = |g: &Option<IntGrid>, what: &str| -> Result<Vec<u64>, CliError> {
        g.as_ref()
            .ok_or_else(|| {
                CliError::Invalid(format!(
                    "quantity `{}` requires the `{what}` grid",
                    quantity.name()
                ))
            })?
            .values(what)
    };
    let probs =
        |list: &Option<Vec<String>>, what: &str, default: &str| -> Result<Vec<Prob>, CliError> {
            let texts = match list {
                Some(v) if v.is_empty() => {
                    return Err(CliError::Invalid(format!("grid `{what}` is empty")))
                }
                Some(v) => v.clone(),
                None => vec![default.to_string()],
            };
            texts.iter().map(|s| parse_prob(s)).collect()
        };

    let mut table;
    match quantity {
        Quantity::Dist => {
            let (ms, ns) = (grid(&spec.m, "m")?, grid(&spec.n, "n")?);
            let etas = probs(&spec.eta, "eta", "1")?;
            let pds = probs(&spec.p_d, "p_d", "0")?;
            table = Table::new(vec!["m", "n", "eta", "p_d", "k", "probability"]);
            for eta in &etas {
                for pd in &pds {
                    for &n in &ns {
                        let model = DetectorArrayModel::from_rational(
                            n,
                            eta.exact.clone(),
                            pd.exact.clone(),
                        )?;
                        for &m in &ms {
                            let dist = click_distribution_closed(m, &model, mode)?;
                            for k in 0..=dist.support_max() {
                                table.row(vec![
                                    m.into(),
                                    n.into(),
                                    eta.value.into(),
                                    pd.value.into(),
                                    k.into(),
                                    dist.prob(k).into(),
                                ]);
                            }
                        }
                    }
                }
            }
        }
        Quantity::TotalError => {
            let (ms, ns) = (grid(&spec.m, "m")?, grid(&spec.n, "n")?);
            let etas = probs(&spec.eta, "eta", "1")?;
            let pds = probs(&spec.p_d, "p_d", "0")?;
            table = Table::new(vec![
                "m",
                "n",
                "eta",
                "p_d",
                "epsilon_total",
                "eps_d",
                "eps_n",
                "eps_eta",
                "triangle_slack",
            ]);
            for eta in &etas {
                for pd in &pds {
                    for &n in &ns {
                        let model = DetectorArrayModel::from_rational(
                            n,
                            eta.exact.clone(),
                            pd.exact.clone(),
                        )?;
                        for &m in &ms {
                            let b = error_budget(m, &model, mode)?;
                            table.row(vec![
                                m.into(),
                                n.into(),
                                eta.value.into(),
                                pd.value.into(),
                                b.epsilon_total.into(),
                                b.eps_d.into(),
                                b.eps_n.into(),
                                b.eps_eta.into(),
                                b.triangle_slack.into(),
                            ]);
                        }
                    }
                }
            }
        }
        Quantity::FiniteSize => {
            let (ms, ns) = (grid(&spec.m, "m")?, grid(&spec.n, "n")?);
            let etas = probs(&spec.eta, "eta", "1")?;
            table = Table::new(vec!["eta", "n", "m", "eps_n", "eps_n_leading"]);
            for eta in &etas {
                for &n in &ns {
                    for &m in &ms {
                        let eps_n = match mode {
                            EvalMode::Exact => {
                                rational_to_f64(&errors::finite_size_error_exact(m, &eta.exact, n)?)
                            }
                            other => errors::finite_size_error(m, eta.value, n, other)?,
                        };
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
        }
        Quantity::DarkCount => {
            let (ms, ns) = (grid(&spec.m, "m")?, grid(&spec.n, "n")?);
            let etas = probs(&spec.eta, "eta", "1")?;
            let pds = probs(&spec.p_d, "p_d", "0")?;
            table = Table::new(vec!["m", "n", "eta", "p_d", "eps_d", "eps_d_unilluminated"]);
            for eta in &etas {
                for pd in &pds {
                    for &n in &ns {
                        let model = DetectorArrayModel::from_rational(
                            n,
                            eta.exact.clone(),
                            pd.exact.clone(),
                        )?;
                        let unlit = clickcounter::dark_count_error_unilluminated(&model);
                        for &m in &ms {
                            let eps_d = clickcounter::dark_count_error_numeric(m, &model, mode)?;
                            table.row(vec![
                                m.into(),
                                n.into(),
                                eta.value.into(),
                                pd.value.into(),
                                eps_d.into(),
                                unlit.into(),
                            ]);
                        }
                    }
                }
            }
        }
        Quantity::QeError => {
            let ms = grid(&spec.m, "m")?;
            let etas = probs(&spec.eta, "eta", "1")?;
            table = Table::new(vec!["m", "eta", "eps_eta"]);
            for eta in &etas {
                for &m in &ms {
                    let eps = match mode {
                        EvalMode::Exact => {
                            rational_to_f64(&errors::quantum_efficiency_error_exact(m, &eta.exact)?)
                        }
                        _ => errors::quantum_efficiency_error(m, eta.value)?,
                    };
                    table.row(vec![m.into(), eta.value.into(), eps.into()]);
                }
            }
        }
        Quantity::Temporal => {
            let ms = grid(&spec.m, "m")?;
            let etas = probs(&spec.eta, "eta", "1")?;
            let eta_cs = probs(&spec.eta_c, "eta_c", "1")?;
            let ncs = spec
                .n_couplers
                .as_ref()
                .map(|g| g.values("N"))
                .transpose()?
                .unwrap_or_else(|| (0..=24).collect());
            table = Table::new(vec!["eta_c", "eta", "m", "N", "epsilon"]);
            for eta_c in &eta_cs {
                for eta in &etas {
                    for &m in &ms {
                        for &nc in &ncs {
                            let nc = u32::try_from(nc).map_err(|_| {
                                CliError::Invalid(format!("coupler count {nc} is too large"))
                            })?;
                            let cfg = TemporalArrayConfig::from_rational(
                                nc,
                                eta_c.exact.clone(),
                                eta.exact.clone(),
                            )?;
                            let eps = clickcounter::temporal_error(m, &cfg, mode)?;
                            table.row(vec![
                                eta_c.value.into(),
                                eta.value.into(),
                                m.into(),
                                nc.into(),
                                eps.into(),
                            ]);
                        }
                    }
                }
            }
        }
        Quantity::Mc => {
            let (ms, ns) = (grid(&spec.m, "m")?, grid(&spec.n, "n")?);
            let etas = probs(&spec.eta, "eta", "1")?;
            let pds = probs(&spec.p_d, "p_d", "0")?;
            let samples = spec.samples.unwrap_or(100_000);
            let seed = spec.seed.unwrap_or(cli_seed);
            let chunk_size = spec.chunk_size.unwrap_or(1 << 16);
            table = Table::new(vec![
                "m",
                "n",
                "eta",
                "p_d",
                "samples",
                "seed",
                "tv_distance",
                "chi2_stat",
                "dof",
                "p_value",
            ]);
            table.meta("chunk_size", chunk_size);
            for eta in &etas {
                for pd in &pds {
                    for &n in &ns {
                        let model = DetectorArrayModel::from_rational(
                            n,
                            eta.exact.clone(),
                            pd.exact.clone(),
                        )?;
                        for &m in &ms {
                            let cfg = SimulationConfig {
                                samples,
                                seed,
                                chunk_size,
                            };
                            let emp = clickcounter::empirical_distribution(m, &model, &cfg)?;
                            let reference = click_distribution_closed(m, &model, mode)?;
                            let fit = goodness_of_fit(&emp, &reference)?;
                            table.row(vec![
                                m.into(),
                                n.into(),
                                eta.value.into(),
                                pd.value.into(),
                                samples.into(),
                                seed.into(),
                                fit.tv_distance.into(),
                                fit.chi2_stat.into(),
                                fit.dof.into(),
                                fit.p_value.into(),
                            ]);
                        }
                    }
                }
            }
        }
    }
    table.meta("quantity", quantity.name());
    Ok(table)
}
