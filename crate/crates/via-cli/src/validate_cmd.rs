//! The `validate` subcommand: three-way agreement of closed forms, chain
//! oracle, and Monte Carlo over the configured grid, with one report line
//! per comparison.

use serde_json::json;
use via_metrics::validation::{
    validate_grid, Cell, Injection, ValidationPlan, ValidationReport, MC_REL_TOL, MC_SIGMAS,
    TOL_CLOSED_VS_ORACLE, TOL_SMALL_CHAIN, TV_TOL,
};

use crate::config::ExperimentConfig;
use crate::CliError;

pub struct ValidateRun {
    pub report: ValidationReport,
    pub plan_cells: usize,
}

pub fn run(
    config: &ExperimentConfig,
    seed: u64,
    corrupt_one_cell: bool,
) -> Result<ValidateRun, CliError> {
    let policies = config.policies();
    if policies.is_empty() {
        return Err(CliError::Config("validate needs at least one policy".into()));
    }
    let cells: Vec<Cell> = config
        .cells()
        .into_iter()
        .map(|(p, q, p_s)| Cell { p, q, p_s })
        .collect();
    let mut plan = ValidationPlan::new(cells, policies, config.simulation.slots, seed);
    plan.burn_in = config.simulation.burn_in;

    // Negative-control fixture: corrupt one closed form and expect the run
    // to flag exactly that cell.
    let injection = corrupt_one_cell.then_some(Injection {
        cell_index: 0,
        factor: 1.05,
    });
    let report = validate_grid(&plan, injection).map_err(CliError::runtime)?;
    Ok(ValidateRun {
        plan_cells: plan.cells.len(),
        report,
    })
}

pub fn text_report(run: &ValidateRun) -> String {
    let mut out = String::new();
    for line in &run.report.skipped {
        out.push_str("SKIP ");
        out.push_str(line);
        out.push('\n');
    }
    for comparison in &run.report.comparisons {
        out.push_str(&comparison.to_string());
        out.push('\n');
    }
    out.push_str(&format!("summary: {}\n", run.report.summary()));
    out
}

pub fn sidecar_extra(run: &ValidateRun) -> Vec<(&'static str, serde_json::Value)> {
    let failures: Vec<String> = run.report.failures().map(|f| f.to_string()).collect();
    vec![
        (
            "tolerances",
            json!({
                "closed_vs_oracle": TOL_CLOSED_VS_ORACLE,
                "small_chain": TOL_SMALL_CHAIN,
                "mc_relative": MC_REL_TOL,
                "mc_sigmas": MC_SIGMAS,
                "tv_at_1e7_slots": TV_TOL,
            }),
        ),
        (
            "summary",
            json!({
                "cells": run.plan_cells,
                "comparisons": run.report.comparisons.len(),
                "failed": failures.len(),
                "skipped": run.report.skipped.len(),
            }),
        ),
        ("failures", json!(failures)),
        ("skipped", json!(run.report.skipped)),
    ]
}
