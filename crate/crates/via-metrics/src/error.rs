use thiserror::Error;

/// Errors produced by constructors, closed-form evaluations, and the
/// numeric stationary solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("probability `{name}` must lie in [0, 1], got {value}")]
    InvalidProbability { name: &'static str, value: f64 },

    /// Both transition probabilities are zero, so the source chain is
    /// reducible and has no unique stationary distribution.
    #[error("degenerate source: p and q are both zero")]
    DegenerateSource,

    /// The per-slot delivery probability is zero, so version-lag series
    /// diverge instead of reaching a stationary value.
    #[error("average diverges: per-slot delivery probability is zero")]
    Divergent,

    #[error("stationary series does not converge (ratio {ratio} >= 1)")]
    NonConvergent { ratio: f64 },

    #[error("no closed form for {quantity} under the {policy} policy")]
    NoClosedForm {
        policy: &'static str,
        quantity: &'static str,
    },

    /// Conditioning on a lag level that carries no stationary mass.
    #[error("lag level {level} has zero stationary mass; conditional transition undefined")]
    DegenerateLevel { level: usize },

    #[error("chain is reducible: no unique stationary distribution")]
    Reducible,

    #[error("stationary solve stalled: residual {achieved:e} above target {target:e}")]
    SolverStalled { target: f64, achieved: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
