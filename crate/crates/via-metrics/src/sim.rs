//! Monte Carlo engine.
//!
//! Runs the slot dynamics under a policy for a fixed horizon and reports
//! empirical counterparts of every closed-form quantity: time-averaged ages,
//! reconstruction error, sampling rate, and lag histograms. Runs are
//! deterministic in the config (seed and stream included), and independent
//! streams make grid sweeps and replications reproducible under any degree
//! of parallelism.

use crate::error::{Error, Result};
use crate::markov::{advance_slot, ChannelParams, RngHandle, SlotState, SourceParams};
use crate::policy::Policy;

/// Number of batches used for the batch-means standard-error estimate.
/// Batch lengths far exceed the mixing time for any horizon this library
/// runs, so batch means are effectively independent.
const STDERR_BATCHES: u64 = 100;

/// Everything a run needs; two configs that compare equal produce identical
/// reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    pub src: SourceParams,
    pub ch: ChannelParams,
    pub policy: Policy,
    /// Total slots simulated, including burn-in.
    pub slots: u64,
    /// Leading slots discarded before measurement starts.
    pub burn_in: u64,
    pub seed: u64,
    /// RNG stream; distinct streams from one seed are independent.
    pub stream: u64,
    /// Histogram buckets cover values `0..cap`, with one overflow bucket.
    pub histogram_cap: usize,
}

impl SimulationConfig {
    /// Config with the standard burn-in (10^4 slots, shortened for small
    /// horizons) and a 64-bucket histogram.
    pub fn standard(
        src: SourceParams,
        ch: ChannelParams,
        policy: Policy,
        slots: u64,
        seed: u64,
    ) -> Self {
        let burn_in = if slots > 10_000 { 10_000 } else { slots / 10 };
        Self {
            src,
            ch,
            policy,
            slots,
            burn_in,
            seed,
            stream: 0,
            histogram_cap: 64,
        }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1 slot".into()));
        }
        if self.burn_in >= self.slots {
            return Err(Error::InvalidConfig(format!(
                "burn-in {} must be below the horizon {}",
                self.burn_in, self.slots
            )));
        }
        if self.histogram_cap == 0 {
            return Err(Error::InvalidConfig("histogram cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// The slot dynamics plus a policy and a random stream, advanced one slot at
/// a time. Engines are independent; run one per thread and give each its own
/// stream.
#[derive(Debug, Clone)]
pub struct Engine {
    src: SourceParams,
    ch: ChannelParams,
    policy: Policy,
    state: SlotState,
    rng: RngHandle,
}

impl Engine {
    /// Starts synced at state 0 with all ages zero.
    pub fn new(src: SourceParams, ch: ChannelParams, policy: Policy, rng: RngHandle) -> Self {
        Self {
            src,
            ch,
            policy,
            state: SlotState::synced_origin(),
            rng,
        }
    }

    pub fn state(&self) -> &SlotState {
        &self.state
    }

    /// Advances one slot and returns the new state.
    #[inline]
    pub fn step(&mut self) -> SlotState {
        let policy = self.policy;
        self.state = advance_slot(
            &self.src,
            &self.ch,
            &self.state,
            |x_now, x_prev, x_hat, rng| policy.decide(x_now, x_prev, x_hat, rng),
            &mut self.rng,
        );
        self.state
    }
}

/// Empirical estimates from one run.
///
/// Histograms have `histogram_cap + 1` buckets; the last collects all values
/// at or above the cap, and the corresponding `*_overflow_sum` carries their
/// exact total so capped histograms never bias the averages.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub avg_via: f64,
    pub avg_aoiv: f64,
    pub avg_aoii: f64,
    /// Fraction of measured slots in the erroneous state, counted directly
    /// from the state pair rather than through the age recursion.
    pub empirical_pe: f64,
    pub sampling_rate: f64,
    /// Batch-means standard errors; `None` when the horizon is too short to
    /// form batches.
    pub stderr_via: Option<f64>,
    pub stderr_aoiv: Option<f64>,
    pub stderr_aoii: Option<f64>,
    pub stderr_rate: Option<f64>,
    pub via_hist: Vec<u64>,
    pub aoii_hist: Vec<u64>,
    pub via_overflow_sum: u64,
    pub aoii_overflow_sum: u64,
    pub slots_counted: u64,
}

impl SimulationReport {
    /// Average reconstructed from the capped histogram plus the exact
    /// overflow sum; equals `avg_via` identically.
    pub fn via_mean_from_histogram(&self) -> f64 {
        let cap = self.via_hist.len() - 1;
        let kept: u64 = self
            .via_hist
            .iter()
            .take(cap)
            .enumerate()
            .map(|(i, &c)| i as u64 * c)
            .sum();
        (kept + self.via_overflow_sum) as f64 / self.slots_counted as f64
    }

    pub fn aoii_mean_from_histogram(&self) -> f64 {
        let cap = self.aoii_hist.len() - 1;
        let kept: u64 = self
            .aoii_hist
            .iter()
            .take(cap)
            .enumerate()
            .map(|(i, &c)| i as u64 * c)
            .sum();
        (kept + self.aoii_overflow_sum) as f64 / self.slots_counted as f64
    }
}

struct BatchStats {
    len: u64,
    filled: u64,
    sums: Vec<f64>,
}

impl BatchStats {
    fn new(measured: u64) -> Self {
        let batches = STDERR_BATCHES.min(measured);
        Self {
            len: measured.checked_div(batches).unwrap_or(0),
            filled: 0,
            sums: Vec::new(),
        }
    }

    #[inline]
    fn push(&mut self, value: f64) {
        if self.len == 0 {
            return;
        }
        if self.filled == 0 {
            self.sums.push(0.0);
        }
        *self.sums.last_mut().unwrap() += value;
        self.filled += 1;
        if self.filled == self.len {
            self.filled = 0;
        }
    }

    /// Standard error of the overall mean from the batch means.
    fn stderr(&self) -> Option<f64> {
        // Drop a trailing partial batch.
        let full = if self.filled == 0 {
            self.sums.len()
        } else {
            self.sums.len() - 1
        };
        if full < 2 || self.len == 0 {
            return None;
        }
        let means: Vec<f64> = self.sums[..full]
            .iter()
            .map(|s| s / self.len as f64)
            .collect();
        let n = means.len() as f64;
        let mean = means.iter().sum::<f64>() / n;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Some((var / n).sqrt())
    }
}

/// Runs the configured horizon and reports time averages over the slots
/// after burn-in. Ages are accumulated in exact integer sums.
pub fn run(config: &SimulationConfig) -> Result<SimulationReport> {
    config.validate()?;
    let mut engine = Engine::new(
        config.src,
        config.ch,
        config.policy,
        RngHandle::with_stream(config.seed, config.stream),
    );

    let measured = config.slots - config.burn_in;
    let cap = config.histogram_cap;
    let mut via_hist = vec![0u64; cap + 1];
    let mut aoii_hist = vec![0u64; cap + 1];
    let mut via_sum = 0u64;
    let mut aoiv_sum = 0u64;
    let mut aoii_sum = 0u64;
    let mut err_count = 0u64;
    let mut sampled_count = 0u64;
    let mut via_overflow_sum = 0u64;
    let mut aoii_overflow_sum = 0u64;
    let mut via_batches = BatchStats::new(measured);
    let mut aoiv_batches = BatchStats::new(measured);
    let mut aoii_batches = BatchStats::new(measured);
    let mut rate_batches = BatchStats::new(measured);

    for _ in 0..config.burn_in {
        engine.step();
    }
    for _ in 0..measured {
        let s = engine.step();
        via_sum += s.via;
        aoiv_sum += u64::from(s.aoiv);
        aoii_sum += s.aoii;
        err_count += u64::from(s.erroneous());
        sampled_count += u64::from(s.sampled);

        let via_bucket = (s.via as usize).min(cap);
        via_hist[via_bucket] += 1;
        if via_bucket == cap {
            via_overflow_sum += s.via;
        }
        let aoii_bucket = (s.aoii as usize).min(cap);
        aoii_hist[aoii_bucket] += 1;
        if aoii_bucket == cap {
            aoii_overflow_sum += s.aoii;
        }

        via_batches.push(s.via as f64);
        aoiv_batches.push(f64::from(s.aoiv));
        aoii_batches.push(s.aoii as f64);
        rate_batches.push(f64::from(u8::from(s.sampled)));
    }

    let denom = measured as f64;
    Ok(SimulationReport {
        avg_via: via_sum as f64 / denom,
        avg_aoiv: aoiv_sum as f64 / denom,
        avg_aoii: aoii_sum as f64 / denom,
        empirical_pe: err_count as f64 / denom,
        sampling_rate: sampled_count as f64 / denom,
        stderr_via: via_batches.stderr(),
        stderr_aoiv: aoiv_batches.stderr(),
        stderr_aoii: aoii_batches.stderr(),
        stderr_rate: rate_batches.stderr(),
        via_hist,
        aoii_hist,
        via_overflow_sum,
        aoii_overflow_sum,
        slots_counted: measured,
    })
}

/// Mean, sample standard deviation, and a 95% normal-approximation interval
/// over replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl MetricSummary {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() < 2 {
            0.0
        } else {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        };
        let sd = var.sqrt();
        let half = 1.96 * sd / n.sqrt();
        Self {
            mean,
            sd,
            ci_low: mean - half,
            ci_high: mean + half,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        (self.ci_low..=self.ci_high).contains(&value)
    }
}

/// Replication-level aggregate of independent runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicatedReport {
    pub replications: usize,
    pub avg_via: MetricSummary,
    pub avg_aoiv: MetricSummary,
    pub avg_aoii: MetricSummary,
    pub empirical_pe: MetricSummary,
    pub sampling_rate: MetricSummary,
}

/// Pure reduction of per-replication reports.
pub fn aggregate(reports: &[SimulationReport]) -> Result<ReplicatedReport> {
    if reports.len() < 2 {
        return Err(Error::InvalidConfig(
            "aggregation needs at least 2 replications".into(),
        ));
    }
    let collect = |f: fn(&SimulationReport) -> f64| -> MetricSummary {
        let values: Vec<f64> = reports.iter().map(f).collect();
        MetricSummary::from_values(&values)
    };
    Ok(ReplicatedReport {
        replications: reports.len(),
        avg_via: collect(|r| r.avg_via),
        avg_aoiv: collect(|r| r.avg_aoiv),
        avg_aoii: collect(|r| r.avg_aoii),
        empirical_pe: collect(|r| r.empirical_pe),
        sampling_rate: collect(|r| r.sampling_rate),
    })
}

/// Runs `n_reps` independent replications on consecutive RNG streams
/// (`config.stream`, `config.stream + 1`, ...) and aggregates them.
pub fn run_replicated(config: &SimulationConfig, n_reps: usize) -> Result<ReplicatedReport> {
    if n_reps < 2 {
        return Err(Error::InvalidConfig(
            "replication needs at least 2 runs".into(),
        ));
    }
    let reports: Vec<SimulationReport> = (0..n_reps)
        .map(|r| run(&config.with_stream(config.stream + r as u64)))
        .collect::<Result<_>>()?;
    aggregate(&reports)
}
