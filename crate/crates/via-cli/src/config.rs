//! Strict experiment configuration.
//!
//! A single TOML file drives every subcommand. Parsing is strict: unknown
//! keys anywhere are errors, so a typo in a sweep config fails fast instead
//! of silently running the wrong experiment.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use via_metrics::Policy;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSection,
    pub policies: Vec<PolicySection>,
    pub simulation: SimulationSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimization: Option<OptimizationSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub p: AxisSection,
    pub q: AxisSection,
    pub p_s: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSection {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_sample: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    /// Horizon per run, including burn-in.
    pub slots: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: u64,
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: u32,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizationSection {
    /// Budget ratio delta_max / delta capping the sampling probability.
    pub eta: f64,
    pub e_max: f64,
    /// Cost per attempted sample.
    pub delta: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub directory: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: default_out_dir(),
            format: OutputFormat::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
    #[default]
    Both,
}

impl OutputFormat {
    pub fn wants_csv(&self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }

    pub fn wants_json(&self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }
}

fn default_burn_in() -> u64 {
    10_000
}

fn default_replications() -> u32 {
    1
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Parses and fully validates a config file's contents.
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| format!("config parse error: {e}"))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), String> {
        self.grid.p.validate("grid.p")?;
        self.grid.q.validate("grid.q")?;
        for (i, p_s) in self.grid.p_s.iter().enumerate() {
            if !(0.0..=1.0).contains(p_s) {
                return Err(format!(
                    "grid.p_s[{i}] = {p_s} is not a probability in [0, 1]"
                ));
            }
        }
        let mut kinds = Vec::new();
        for (i, section) in self.policies.iter().enumerate() {
            let policy = section
                .to_policy()
                .map_err(|e| format!("policies[{i}]: {e}"))?;
            if kinds.contains(&policy.kind()) {
                return Err(format!(
                    "policies[{i}]: duplicate policy kind `{}`",
                    section.kind
                ));
            }
            kinds.push(policy.kind());
        }
        if self.simulation.slots == 0 {
            return Err("simulation.slots must be at least 1".into());
        }
        if self.simulation.burn_in >= self.simulation.slots {
            return Err(format!(
                "simulation.burn_in = {} must be below simulation.slots = {}",
                self.simulation.burn_in, self.simulation.slots
            ));
        }
        if self.simulation.replications == 0 {
            return Err("simulation.replications must be at least 1".into());
        }
        if let Some(opt) = &self.optimization {
            if !(0.0..=1.0).contains(&opt.eta) {
                return Err(format!("optimization.eta = {} must lie in [0, 1]", opt.eta));
            }
            if !(opt.e_max > 0.0 && opt.e_max <= 1.0) {
                return Err(format!(
                    "optimization.e_max = {} must lie in (0, 1]",
                    opt.e_max
                ));
            }
            if !opt.delta.is_finite() || opt.delta <= 0.0 {
                return Err(format!(
                    "optimization.delta = {} must be positive",
                    opt.delta
                ));
            }
        }
        Ok(())
    }

    /// Policies in a fixed canonical order (randomized stationary, then
    /// change-aware, then semantics-aware), independent of config order, so
    /// output column order is stable.
    pub fn policies(&self) -> Vec<Policy> {
        let mut policies: Vec<Policy> = self
            .policies
            .iter()
            .map(|s| s.to_policy().expect("validated at parse time"))
            .collect();
        policies.sort_by_key(|p| match p {
            Policy::RandomizedStationary { .. } => 0,
            Policy::ChangeAware => 1,
            Policy::SemanticsAware => 2,
        });
        policies
    }

    /// Grid cells ordered by (p, q, p_s).
    pub fn cells(&self) -> Vec<(f64, f64, f64)> {
        let mut cells = Vec::new();
        for p in self.grid.p.values() {
            for q in self.grid.q.values() {
                for &p_s in &self.grid.p_s {
                    cells.push((p, q, p_s));
                }
            }
        }
        cells
    }
}

impl AxisSection {
    fn validate(&self, name: &str) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.min) || !(0.0..=1.0).contains(&self.max) {
            return Err(format!("{name}: bounds must lie in [0, 1]"));
        }
        if self.min > self.max {
            return Err(format!("{name}: min {} exceeds max {}", self.min, self.max));
        }
        if !self.step.is_finite() || self.step <= 0.0 {
            return Err(format!("{name}: step must be positive, got {}", self.step));
        }
        Ok(())
    }

    /// `min, min+step, ...` up to `max`, snapped to 9 decimals so grid
    /// coordinates print cleanly.
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.max - self.min) / self.step + 1e-9).floor() as usize;
        (0..=count)
            .map(|k| {
                let v = self.min + k as f64 * self.step;
                (v * 1e9).round() / 1e9
            })
            .filter(|v| *v <= self.max + 1e-9)
            .collect()
    }
}

impl PolicySection {
    pub fn to_policy(&self) -> Result<Policy, String> {
        match self.kind.as_str() {
            "randomized-stationary" => {
                let p_sample = self.p_sample.ok_or_else(|| {
                    "randomized-stationary requires a p_sample".to_string()
                })?;
                Policy::randomized_stationary(p_sample).map_err(|e| e.to_string())
            }
            "change-aware" | "semantics-aware" => {
                if self.p_sample.is_some() {
                    return Err(format!("{} takes no p_sample", self.kind));
                }
                Ok(if self.kind == "change-aware" {
                    Policy::ChangeAware
                } else {
                    Policy::SemanticsAware
                })
            }
            other => Err(format!(
                "unknown policy kind `{other}` (expected randomized-stationary, change-aware, or semantics-aware)"
            )),
        }
    }
}
