//! Three-way cross-validation: closed forms vs numeric chains vs Monte
//! Carlo.
//!
//! For every grid cell and policy this module evaluates each quantity along
//! every route that provides it and records one [`Comparison`] per pair of
//! routes. Closed forms must match the chain solver to solver precision;
//! Monte Carlo estimates must land within the larger of a 1% relative band
//! and three standard errors; empirical lag and error-streak histograms must
//! match the closed-form distributions in total-variation distance.

use rayon::prelude::*;
use std::fmt;

use crate::analytics;
use crate::error::{Error, Result};
use crate::markov::{ChannelParams, SourceParams};
use crate::oracle::{self, AOIV_STATES};
use crate::policy::Policy;
use crate::sim::{self, SimulationConfig};

/// Closed form vs chain solver, per-entry, for truncated chains.
pub const TOL_CLOSED_VS_ORACLE: f64 = 1e-9;
/// Closed form vs chain solver for the exactly-solved 4-state chains.
pub const TOL_SMALL_CHAIN: f64 = 1e-12;
/// Relative floor of the Monte Carlo tolerance band.
pub const MC_REL_TOL: f64 = 0.01;
/// Standard-error multiple of the Monte Carlo tolerance band.
pub const MC_SIGMAS: f64 = 3.0;
/// Total-variation threshold for empirical histograms at 1e7 slots.
pub const TV_TOL: f64 = 0.005;
/// Lag truncation used for closed-form tables and oracle chains.
pub const LAG_TRUNCATION: usize = 200;
/// Lag levels compared entry-by-entry between closed form and oracle.
pub const COMPARE_LEVELS: usize = 50;

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub p: f64,
    pub q: f64,
    pub p_s: f64,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p={} q={} p_s={}", self.p, self.q, self.p_s)
    }
}

/// What to validate and how long to simulate.
#[derive(Debug, Clone)]
pub struct ValidationPlan {
    pub cells: Vec<Cell>,
    pub policies: Vec<Policy>,
    pub slots: u64,
    pub burn_in: u64,
    pub seed: u64,
}

impl ValidationPlan {
    pub fn new(cells: Vec<Cell>, policies: Vec<Policy>, slots: u64, seed: u64) -> Self {
        let burn_in = if slots > 10_000 { 10_000 } else { slots / 10 };
        Self {
            cells,
            policies,
            slots,
            burn_in,
            seed,
        }
    }
}

/// Test fixture: multiplies the closed-form error-indicator average of every
/// policy at one cell, so the cross-validation must flag that cell.
#[derive(Debug, Clone, Copy)]
pub struct Injection {
    pub cell_index: usize,
    pub factor: f64,
}

/// A single two-route check.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub cell: Cell,
    pub policy: &'static str,
    pub quantity: String,
    /// Route the reference value came from (always the closed form here).
    pub reference: f64,
    /// Value along the independent route.
    pub candidate: f64,
    pub tolerance: f64,
    pub route: &'static str,
    pub pass: bool,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} policy={} quantity={} route={} reference={:.12e} candidate={:.12e} tolerance={:.3e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.cell,
            self.policy,
            self.quantity,
            self.route,
            self.reference,
            self.candidate,
            self.tolerance,
        )
    }
}

/// Every comparison made, plus cells that were skipped as degenerate.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub comparisons: Vec<Comparison>,
    pub skipped: Vec<String>,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &Comparison> {
        self.comparisons.iter().filter(|c| !c.pass)
    }

    pub fn all_passed(&self) -> bool {
        self.comparisons.iter().all(|c| c.pass)
    }

    pub fn summary(&self) -> String {
        format!(
            "{} comparisons, {} failed, {} cells skipped",
            self.comparisons.len(),
            self.failures().count(),
            self.skipped.len()
        )
    }
}

struct CellTask<'a> {
    cell: Cell,
    policy: &'a Policy,
    stream: u64,
    inject: Option<f64>,
}

/// Runs the full three-way validation over the plan's grid.
///
/// Cells with `p = 0` or `q = 0` are skipped with a note: their chains are
/// reducible and the stationary analysis does not apply. Each (cell, policy)
/// pair simulates on its own RNG stream, so results do not depend on worker
/// scheduling.
pub fn validate_grid(plan: &ValidationPlan, inject: Option<Injection>) -> Result<ValidationReport> {
    if plan.slots < 100_000 {
        return Err(Error::InvalidConfig(
            "validation needs at least 1e5 slots for stable error bands".into(),
        ));
    }
    let mut tasks = Vec::new();
    let mut skipped = Vec::new();
    for (cell_idx, &cell) in plan.cells.iter().enumerate() {
        if cell.p * cell.q == 0.0 {
            skipped.push(format!(
                "skipped {cell}: degenerate source, stationary analysis needs p*q > 0"
            ));
            continue;
        }
        for (policy_idx, policy) in plan.policies.iter().enumerate() {
            tasks.push(CellTask {
                cell,
                policy,
                stream: (cell_idx * plan.policies.len() + policy_idx) as u64,
                inject: inject
                    .filter(|inj| inj.cell_index == cell_idx)
                    .map(|inj| inj.factor),
            });
        }
    }

    let results: Result<Vec<Vec<Comparison>>> = tasks
        .par_iter()
        .map(|task| validate_cell(task, plan))
        .collect();
    let comparisons = results?.into_iter().flatten().collect();
    Ok(ValidationReport {
        comparisons,
        skipped,
    })
}

fn validate_cell(task: &CellTask<'_>, plan: &ValidationPlan) -> Result<Vec<Comparison>> {
    let cell = task.cell;
    let src = SourceParams::new(cell.p, cell.q)?;
    let ch = ChannelParams::new(cell.p_s)?;
    let policy = task.policy;
    let corrupt = task.inject.unwrap_or(1.0);

    let mut out = Vec::new();
    let mut push = |quantity: String, reference: f64, candidate: f64, tol: f64, route: &'static str| {
        out.push(Comparison {
            cell,
            policy: policy.label(),
            quantity,
            reference,
            candidate,
            tolerance: tol,
            route,
            pass: (reference - candidate).abs() <= tol,
        });
    };

    // Closed form vs chain solver.
    let aoiv_table = analytics::aoiv_stationary(policy, &src, &ch)?;
    let aoiv_chain = oracle::build_aoiv_chain(policy, &src, &ch)?;
    let aoiv_pi = oracle::stationary(&aoiv_chain)?;
    for (idx, &(x, x_hat, age)) in AOIV_STATES.iter().enumerate() {
        push(
            format!("aoiv-table[{},{},{}]", u8::from(x), u8::from(x_hat), age),
            aoiv_table.get(x, x_hat, age),
            aoiv_pi[idx],
            TOL_SMALL_CHAIN,
            "oracle",
        );
    }
    let closed_pe = analytics::reconstruction_error(policy, &src, &ch)? * corrupt;
    let closed_aoiv = analytics::avg_aoiv(policy, &src, &ch)? * corrupt;
    let oracle_error_mass = aoiv_pi[1] + aoiv_pi[2];
    push(
        "avg-aoiv".into(),
        closed_aoiv,
        oracle_error_mass,
        TOL_SMALL_CHAIN,
        "oracle",
    );
    push(
        "pe".into(),
        closed_pe,
        oracle_error_mass,
        TOL_SMALL_CHAIN,
        "oracle",
    );

    let via_closed: Option<analytics::ViaStationary> = match policy {
        Policy::RandomizedStationary { p_sample } => {
            Some(analytics::via_stationary_rs(&src, &ch, *p_sample, LAG_TRUNCATION)?)
        }
        Policy::ChangeAware => Some(analytics::via_stationary_ca(&src, &ch, LAG_TRUNCATION)?),
        Policy::SemanticsAware => None,
    };
    if let Some(table) = &via_closed {
        let chain = match policy {
            Policy::RandomizedStationary { p_sample } => {
                oracle::build_via_chain(&src, &ch, *p_sample, LAG_TRUNCATION)?
            }
            _ => oracle::build_via_chain_ca(&src, &ch, LAG_TRUNCATION)?,
        };
        let pi = oracle::stationary(&chain)?;
        for lag in 0..=COMPARE_LEVELS {
            push(
                format!("via-table-pi0[{lag}]"),
                table.pi0(lag),
                pi[oracle::lag_state_index(lag, false)],
                TOL_CLOSED_VS_ORACLE,
                "oracle",
            );
            push(
                format!("via-table-pi1[{lag}]"),
                table.pi1(lag),
                pi[oracle::lag_state_index(lag, true)],
                TOL_CLOSED_VS_ORACLE,
                "oracle",
            );
        }
        let oracle_mean: f64 = (0..=LAG_TRUNCATION)
            .map(|lag| {
                lag as f64
                    * (pi[oracle::lag_state_index(lag, false)]
                        + pi[oracle::lag_state_index(lag, true)])
            })
            .sum();
        let closed_avg = analytics::avg_via(policy, &src, &ch)?;
        push(
            "avg-via".into(),
            closed_avg,
            oracle_mean,
            TOL_CLOSED_VS_ORACLE,
            "oracle",
        );
    }
    if matches!(policy, Policy::RandomizedStationary { .. }) {
        let p_sample = policy.p_sample().unwrap();
        let recon_table = analytics::joint_recon_stationary_rs(&src, &ch, p_sample)?;
        let recon_chain = oracle::build_recon_chain(&src, &ch, p_sample)?;
        let recon_pi = oracle::stationary(&recon_chain)?;
        let states = [(false, false), (false, true), (true, false), (true, true)];
        for (idx, &(x, x_hat)) in states.iter().enumerate() {
            push(
                format!("recon-table[{},{}]", u8::from(x), u8::from(x_hat)),
                recon_table.get(x, x_hat),
                recon_pi[idx],
                TOL_SMALL_CHAIN,
                "oracle",
            );
        }
    }

    // Closed form vs Monte Carlo.
    let config = SimulationConfig {
        src,
        ch,
        policy: *policy,
        slots: plan.slots,
        burn_in: plan.burn_in,
        seed: plan.seed,
        stream: task.stream,
        histogram_cap: 64,
    };
    let report = sim::run(&config)?;
    let mc_tol = |reference: f64, stderr: Option<f64>| -> f64 {
        let stderr = stderr.unwrap_or(f64::INFINITY);
        (MC_REL_TOL * reference.abs()).max(MC_SIGMAS * stderr)
    };

    if via_closed.is_some() {
        let closed_avg = analytics::avg_via(policy, &src, &ch)?;
        push(
            "avg-via".into(),
            closed_avg,
            report.avg_via,
            mc_tol(closed_avg, report.stderr_via),
            "monte-carlo",
        );
    }
    push(
        "avg-aoiv".into(),
        closed_aoiv,
        report.avg_aoiv,
        mc_tol(closed_aoiv, report.stderr_aoiv),
        "monte-carlo",
    );
    push(
        "pe".into(),
        closed_pe,
        report.empirical_pe,
        mc_tol(closed_pe, report.stderr_aoiv),
        "monte-carlo",
    );
    let closed_aoii = analytics::avg_aoii(policy, &src, &ch)?;
    push(
        "avg-aoii".into(),
        closed_aoii,
        report.avg_aoii,
        mc_tol(closed_aoii, report.stderr_aoii),
        "monte-carlo",
    );
    let closed_rate = policy.sampling_rate(&src, &ch)?;
    push(
        "sampling-rate".into(),
        closed_rate,
        report.sampling_rate,
        mc_tol(closed_rate, report.stderr_rate),
        "monte-carlo",
    );

    // Distribution-level checks in total variation. The 0.005 threshold is
    // calibrated for 1e7-slot runs; shorter runs get the 1/sqrt(n) scaling.
    let tv_tol = TV_TOL * (1e7 / report.slots_counted as f64).sqrt().max(1.0);
    if let Some(table) = &via_closed {
        let tv = tv_against_histogram(
            &report.via_hist,
            report.slots_counted,
            |i| table.level_mass(i),
        );
        push("via-hist-tv".into(), 0.0, tv, tv_tol, "monte-carlo");
    }
    let aoii_dist = analytics::aoii_distribution(policy, &src, &ch, 64)?;
    let tv = tv_against_histogram(&report.aoii_hist, report.slots_counted, |i| aoii_dist.pmf(i));
    push("aoii-hist-tv".into(), 0.0, tv, tv_tol, "monte-carlo");

    Ok(out)
}

/// Total-variation distance between an empirical histogram (with trailing
/// overflow bucket) and a closed-form pmf, folding everything at or above
/// the cap into one bucket on both sides.
pub fn tv_against_histogram<F>(hist: &[u64], total: u64, pmf: F) -> f64
where
    F: Fn(usize) -> f64,
{
    let cap = hist.len() - 1;
    let mut tv = 0.0;
    let mut closed_mass_below = 0.0;
    for (i, &count) in hist.iter().take(cap).enumerate() {
        let p = pmf(i);
        closed_mass_below += p;
        tv += (count as f64 / total as f64 - p).abs();
    }
    let closed_overflow = (1.0 - closed_mass_below).max(0.0);
    tv += (hist[cap] as f64 / total as f64 - closed_overflow).abs();
    tv / 2.0
}
