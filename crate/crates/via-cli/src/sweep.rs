//! The `sweep` subcommand: one table row per (p, q, p_s) grid cell with
//! analytic, simulated, and oracle-delta values for each configured policy,
//! plus per-metric best-policy labels.

use rayon::prelude::*;
use serde_json::json;
use via_metrics::{analytics, oracle, sim, ChannelParams, Policy, SourceParams};

use crate::config::ExperimentConfig;
use crate::output::{CellValue, Table};
use crate::CliError;

/// Lag truncation for the oracle chains backing the oracle-delta columns.
const ORACLE_LAG_TRUNCATION: usize = 200;

struct PolicyBlock {
    closed_via: Option<f64>,
    closed_aoiv: f64,
    closed_aoii: f64,
    closed_pe: f64,
    closed_rate: f64,
    cost: f64,
    sim_via: f64,
    sim_via_stderr: Option<f64>,
    sim_aoiv: f64,
    sim_aoiv_stderr: Option<f64>,
    sim_aoii: f64,
    sim_aoii_stderr: Option<f64>,
    sim_pe: f64,
    sim_rate: f64,
    via_oracle_delta: Option<f64>,
    aoiv_oracle_delta: f64,
}

pub fn columns(policies: &[Policy]) -> Vec<String> {
    let mut columns = vec!["p".to_string(), "q".to_string(), "p_s".to_string()];
    for policy in policies {
        let tag = policy.kind().tag();
        for suffix in [
            "avg_via_closed",
            "avg_aoiv_closed",
            "avg_aoii_closed",
            "pe_closed",
            "rate_closed",
            "cost",
            "avg_via_sim",
            "avg_via_stderr",
            "avg_aoiv_sim",
            "avg_aoiv_stderr",
            "avg_aoii_sim",
            "avg_aoii_stderr",
            "pe_sim",
            "rate_sim",
            "avg_via_rel_diff",
            "avg_aoiv_rel_diff",
            "avg_aoii_rel_diff",
            "pe_rel_diff",
            "rate_rel_diff",
            "avg_via_oracle_delta",
            "avg_aoiv_oracle_delta",
        ] {
            columns.push(format!("{tag}_{suffix}"));
        }
    }
    columns.extend(
        ["best_via_policy", "best_aoiv_policy", "best_aoii_policy"]
            .map(String::from),
    );
    columns
}

pub fn run(config: &ExperimentConfig, seed: u64) -> Result<(Table, Vec<String>), CliError> {
    let policies = config.policies();
    if policies.is_empty() {
        return Err(CliError::Config("sweep needs at least one policy".into()));
    }
    let mut warnings = Vec::new();
    let mut cells = Vec::new();
    for (idx, cell) in config.cells().into_iter().enumerate() {
        if cell.0 * cell.1 == 0.0 {
            warnings.push(format!(
                "skipped cell p={} q={} p_s={}: degenerate source (p*q = 0)",
                cell.0, cell.1, cell.2
            ));
        } else {
            cells.push((idx, cell));
        }
    }

    let delta = config.optimization.map_or(1.0, |o| o.delta);
    let reps = config.simulation.replications as u64;
    let n_policies = policies.len() as u64;

    let rows: Result<Vec<Vec<CellValue>>, CliError> = cells
        .par_iter()
        .map(|&(cell_idx, (p, q, p_s))| {
            let src = SourceParams::new(p, q).map_err(CliError::runtime)?;
            let ch = ChannelParams::new(p_s).map_err(CliError::runtime)?;
            let mut row: Vec<CellValue> = vec![p.into(), q.into(), p_s.into()];
            let mut blocks = Vec::new();
            for (policy_idx, policy) in policies.iter().enumerate() {
                let stream = (cell_idx as u64 * n_policies + policy_idx as u64) * reps;
                let block =
                    policy_block(policy, &src, &ch, config, seed, stream, delta)?;
                push_block(&mut row, &block);
                blocks.push(block);
            }
            let best = |pick: fn(&PolicyBlock) -> f64| -> CellValue {
                let mut best: Option<(usize, f64)> = None;
                for (idx, block) in blocks.iter().enumerate() {
                    let value = pick(block);
                    if best.map_or(true, |(_, v)| value < v) {
                        best = Some((idx, value));
                    }
                }
                best.map_or(CellValue::Missing, |(idx, _)| {
                    CellValue::Text(policies[idx].kind().tag().to_string())
                })
            };
            row.push(best(|b| b.sim_via));
            row.push(best(|b| b.sim_aoiv));
            row.push(best(|b| b.sim_aoii));
            Ok(row)
        })
        .collect();

    let mut table = Table::new(columns(&policies));
    for row in rows? {
        table.push_row(row);
    }
    Ok((table, warnings))
}

fn policy_block(
    policy: &Policy,
    src: &SourceParams,
    ch: &ChannelParams,
    config: &ExperimentConfig,
    seed: u64,
    stream: u64,
    delta: f64,
) -> Result<PolicyBlock, CliError> {
    let closed_via = match analytics::avg_via(policy, src, ch) {
        Ok(v) => Some(v),
        Err(via_metrics::Error::NoClosedForm { .. }) => None,
        Err(e) => return Err(CliError::runtime(e)),
    };
    let closed_aoiv = analytics::avg_aoiv(policy, src, ch).map_err(CliError::runtime)?;
    let closed_aoii = analytics::avg_aoii(policy, src, ch).map_err(CliError::runtime)?;
    let closed_pe =
        analytics::reconstruction_error(policy, src, ch).map_err(CliError::runtime)?;
    let closed_rate = policy.sampling_rate(src, ch).map_err(CliError::runtime)?;

    // Oracle routes, where the chains exist.
    let oracle_via = match policy {
        Policy::RandomizedStationary { p_sample } => Some(
            oracle_lag_mean(oracle::build_via_chain(
                src,
                ch,
                *p_sample,
                ORACLE_LAG_TRUNCATION,
            ))?,
        ),
        Policy::ChangeAware => Some(oracle_lag_mean(oracle::build_via_chain_ca(
            src,
            ch,
            ORACLE_LAG_TRUNCATION,
        ))?),
        Policy::SemanticsAware => None,
    };
    let aoiv_chain = oracle::build_aoiv_chain(policy, src, ch).map_err(CliError::runtime)?;
    let aoiv_pi = oracle::stationary(&aoiv_chain).map_err(CliError::runtime)?;
    let oracle_aoiv = aoiv_pi[1] + aoiv_pi[2];

    // Monte Carlo route.
    let base = sim::SimulationConfig {
        src: *src,
        ch: *ch,
        policy: *policy,
        slots: config.simulation.slots,
        burn_in: config.simulation.burn_in,
        seed,
        stream,
        histogram_cap: 64,
    };
    let reps = config.simulation.replications;
    let (sim_via, sim_via_stderr, sim_aoiv, sim_aoiv_stderr, sim_aoii, sim_aoii_stderr, sim_pe, sim_rate);
    if reps <= 1 {
        let report = sim::run(&base).map_err(CliError::runtime)?;
        sim_via = report.avg_via;
        sim_via_stderr = report.stderr_via;
        sim_aoiv = report.avg_aoiv;
        sim_aoiv_stderr = report.stderr_aoiv;
        sim_aoii = report.avg_aoii;
        sim_aoii_stderr = report.stderr_aoii;
        sim_pe = report.empirical_pe;
        sim_rate = report.sampling_rate;
    } else {
        let agg = sim::run_replicated(&base, reps as usize).map_err(CliError::runtime)?;
        let n = (reps as f64).sqrt();
        sim_via = agg.avg_via.mean;
        sim_via_stderr = Some(agg.avg_via.sd / n);
        sim_aoiv = agg.avg_aoiv.mean;
        sim_aoiv_stderr = Some(agg.avg_aoiv.sd / n);
        sim_aoii = agg.avg_aoii.mean;
        sim_aoii_stderr = Some(agg.avg_aoii.sd / n);
        sim_pe = agg.empirical_pe.mean;
        sim_rate = agg.sampling_rate.mean;
    }

    Ok(PolicyBlock {
        closed_via,
        closed_aoiv,
        closed_aoii,
        closed_pe,
        closed_rate,
        cost: delta * closed_rate,
        sim_via,
        sim_via_stderr,
        sim_aoiv,
        sim_aoiv_stderr,
        sim_aoii,
        sim_aoii_stderr,
        sim_pe,
        sim_rate,
        via_oracle_delta: match (closed_via, oracle_via) {
            (Some(closed), Some(oracle)) => Some((closed - oracle).abs()),
            _ => None,
        },
        aoiv_oracle_delta: (closed_aoiv - oracle_aoiv).abs(),
    })
}

fn oracle_lag_mean(
    chain: Result<oracle::FiniteChain, via_metrics::Error>,
) -> Result<f64, CliError> {
    let chain = chain.map_err(CliError::runtime)?;
    let pi = oracle::stationary(&chain).map_err(CliError::runtime)?;
    Ok((0..=ORACLE_LAG_TRUNCATION)
        .map(|lag| {
            lag as f64
                * (pi[oracle::lag_state_index(lag, false)]
                    + pi[oracle::lag_state_index(lag, true)])
        })
        .sum())
}

fn push_block(row: &mut Vec<CellValue>, block: &PolicyBlock) {
    // Relative gap of each analytic/simulated pair; absent when no closed
    // form exists or the closed value is exactly zero.
    let rel_diff = |closed: Option<f64>, sim: f64| -> CellValue {
        match closed {
            Some(c) if c != 0.0 => ((c - sim).abs() / c.abs()).into(),
            _ => CellValue::Missing,
        }
    };
    row.push(block.closed_via.into());
    row.push(block.closed_aoiv.into());
    row.push(block.closed_aoii.into());
    row.push(block.closed_pe.into());
    row.push(block.closed_rate.into());
    row.push(block.cost.into());
    row.push(block.sim_via.into());
    row.push(block.sim_via_stderr.into());
    row.push(block.sim_aoiv.into());
    row.push(block.sim_aoiv_stderr.into());
    row.push(block.sim_aoii.into());
    row.push(block.sim_aoii_stderr.into());
    row.push(block.sim_pe.into());
    row.push(block.sim_rate.into());
    row.push(rel_diff(block.closed_via, block.sim_via));
    row.push(rel_diff(Some(block.closed_aoiv), block.sim_aoiv));
    row.push(rel_diff(Some(block.closed_aoii), block.sim_aoii));
    row.push(rel_diff(Some(block.closed_pe), block.sim_pe));
    row.push(rel_diff(Some(block.closed_rate), block.sim_rate));
    row.push(block.via_oracle_delta.into());
    row.push(block.aoiv_oracle_delta.into());
}

pub fn sidecar_extra(table: &Table, warnings: &[String]) -> Vec<(&'static str, serde_json::Value)> {
    vec![
        ("columns", json!(table.columns)),
        ("rows", table.to_json_rows()),
        ("warnings", json!(warnings)),
    ]
}
