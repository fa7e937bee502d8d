//! The `optimize` subcommand: solves the constrained lag minimization per
//! grid cell and compares the capped randomized policy against change-aware,
//! with and without the sampling budget applied to the latter.

use rayon::prelude::*;
use serde_json::json;
use via_metrics::optimizer::{self, OptimizationOutcome, OptimizationProblem};
use via_metrics::{analytics, ChannelParams, Policy, SourceParams};

use crate::config::ExperimentConfig;
use crate::output::{CellValue, Table};
use crate::CliError;

pub fn columns() -> Vec<String> {
    [
        "p",
        "q",
        "p_s",
        "eta",
        "e_max",
        "delta",
        "status",
        "p_star",
        "lower_bound",
        "rsc_avg_via",
        "rsc_pe",
        "rsc_cost",
        "ca_avg_via",
        "ca_rate",
        "ca_cost",
        "rs_beats_ca_threshold",
        "via_winner",
        "via_winner_budgeted",
    ]
    .map(String::from)
    .to_vec()
}

pub fn run(config: &ExperimentConfig) -> Result<(Table, Vec<String>), CliError> {
    let Some(opt) = config.optimization else {
        return Err(CliError::Config(
            "optimize requires an [optimization] section (eta, e_max, delta)".into(),
        ));
    };
    let mut warnings = Vec::new();
    let mut cells = Vec::new();
    for cell in config.cells() {
        if cell.0 * cell.1 == 0.0 {
            warnings.push(format!(
                "skipped cell p={} q={} p_s={}: degenerate source (p*q = 0)",
                cell.0, cell.1, cell.2
            ));
        } else {
            cells.push(cell);
        }
    }

    let rows: Result<Vec<Vec<CellValue>>, CliError> = cells
        .par_iter()
        .map(|&(p, q, p_s)| {
            let src = SourceParams::new(p, q).map_err(CliError::runtime)?;
            let ch = ChannelParams::new(p_s).map_err(CliError::runtime)?;
            let problem =
                OptimizationProblem::new(src, ch, opt.delta, opt.delta * opt.eta, opt.e_max)
                    .map_err(CliError::runtime)?;
            let outcome = optimizer::solve(&problem).map_err(CliError::runtime)?;

            let ca_via = analytics::avg_via(&Policy::ChangeAware, &src, &ch)
                .map_err(CliError::runtime)?;
            let ca_rate = Policy::ChangeAware
                .sampling_rate(&src, &ch)
                .map_err(CliError::runtime)?;
            let ca_cost = opt.delta * ca_rate;
            let ca_within_budget = ca_cost <= opt.delta * opt.eta + 1e-12;
            let threshold = analytics::rs_beats_ca_threshold(&src, &ch);

            let mut row: Vec<CellValue> = vec![
                p.into(),
                q.into(),
                p_s.into(),
                opt.eta.into(),
                opt.e_max.into(),
                opt.delta.into(),
            ];
            match outcome {
                OptimizationOutcome::Optimal {
                    p_star,
                    lower_bound,
                    achieved_via,
                    achieved_pe,
                    achieved_cost,
                } => {
                    row.push("optimal".into());
                    row.push(p_star.into());
                    row.push(lower_bound.into());
                    row.push(achieved_via.into());
                    row.push(achieved_pe.into());
                    row.push(achieved_cost.into());
                    row.push(ca_via.into());
                    row.push(ca_rate.into());
                    row.push(ca_cost.into());
                    row.push(threshold.into());
                    row.push(winner(achieved_via, Some(ca_via)));
                    row.push(winner(
                        achieved_via,
                        ca_within_budget.then_some(ca_via),
                    ));
                }
                OptimizationOutcome::Infeasible { lower_bound } => {
                    row.push("infeasible".into());
                    row.push(CellValue::Missing);
                    row.push(if lower_bound.is_finite() {
                        lower_bound.into()
                    } else {
                        CellValue::Missing
                    });
                    row.push(CellValue::Missing);
                    row.push(CellValue::Missing);
                    row.push(CellValue::Missing);
                    row.push(ca_via.into());
                    row.push(ca_rate.into());
                    row.push(ca_cost.into());
                    row.push(threshold.into());
                    row.push("ca".into());
                    row.push(if ca_within_budget {
                        "ca".into()
                    } else {
                        "none".into()
                    });
                }
            }
            Ok(row)
        })
        .collect();

    let mut table = Table::new(columns());
    for row in rows? {
        table.push_row(row);
    }
    Ok((table, warnings))
}

/// Lower average lag wins; ties within 1e-12 are labeled as such.
fn winner(rsc_via: f64, ca_via: Option<f64>) -> CellValue {
    match ca_via {
        None => "rsc".into(),
        Some(ca) => {
            if (rsc_via - ca).abs() <= 1e-12 {
                "tie".into()
            } else if rsc_via < ca {
                "rsc".into()
            } else {
                "ca".into()
            }
        }
    }
}

pub fn sidecar_extra(table: &Table, warnings: &[String]) -> Vec<(&'static str, serde_json::Value)> {
    vec![
        ("columns", json!(table.columns)),
        ("rows", table.to_json_rows()),
        ("warnings", json!(warnings)),
    ]
}
