//! Sampling and transmission policies.
//!
//! Three policies decide, slot by slot, whether the fresh source state is
//! sampled and transmitted:
//!
//! - randomized stationary: sample with a fixed probability, independent of
//!   state;
//! - change-aware: sample exactly when the source state differs from the
//!   previous slot;
//! - semantics-aware: sample exactly when the estimate is known (via perfect
//!   ACK/NACK feedback) to disagree with the source.

use crate::error::{Error, Result};
use crate::markov::{check_probability, ChannelParams, RngHandle, SourceParams};

/// Policy identity without parameters; used to key tables and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    RandomizedStationary,
    ChangeAware,
    SemanticsAware,
}

impl PolicyKind {
    pub fn label(&self) -> &'static str {
        match self {
            PolicyKind::RandomizedStationary => "randomized-stationary",
            PolicyKind::ChangeAware => "change-aware",
            PolicyKind::SemanticsAware => "semantics-aware",
        }
    }

    /// Short column-name prefix.
    pub fn tag(&self) -> &'static str {
        match self {
            PolicyKind::RandomizedStationary => "rs",
            PolicyKind::ChangeAware => "ca",
            PolicyKind::SemanticsAware => "sa",
        }
    }
}

/// A sampling policy with its parameter, if any.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    RandomizedStationary { p_sample: f64 },
    ChangeAware,
    SemanticsAware,
}

impl Policy {
    pub fn randomized_stationary(p_sample: f64) -> Result<Self> {
        check_probability("p_sample", p_sample)?;
        Ok(Policy::RandomizedStationary { p_sample })
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::RandomizedStationary { .. } => PolicyKind::RandomizedStationary,
            Policy::ChangeAware => PolicyKind::ChangeAware,
            Policy::SemanticsAware => PolicyKind::SemanticsAware,
        }
    }

    pub fn label(&self) -> &'static str {
        self.kind().label()
    }

    /// Sampling probability of the randomized stationary policy, if that is
    /// what this is.
    pub fn p_sample(&self) -> Option<f64> {
        match self {
            Policy::RandomizedStationary { p_sample } => Some(*p_sample),
            _ => None,
        }
    }

    /// Per-slot sampling decision.
    ///
    /// `x_now` is the source state after this slot's transition, `x_prev` the
    /// state before it, and `x_hat` the receiver estimate before this slot's
    /// communication round. Pure up to the randomized stationary draw.
    #[inline]
    pub fn decide(&self, x_now: bool, x_prev: bool, x_hat: bool, rng: &mut RngHandle) -> bool {
        match self {
            Policy::RandomizedStationary { p_sample } => rng.chance(*p_sample),
            Policy::ChangeAware => x_now != x_prev,
            Policy::SemanticsAware => x_now != x_hat,
        }
    }

    /// Long-run fraction of slots in which the policy samples.
    ///
    /// Randomized stationary samples at its fixed probability, change-aware
    /// at the stationary change rate `2pq/(p+q)`. The semantics-aware rate is
    /// the stationary probability that the pre-communication state is
    /// erroneous, `2pq / ((p+q)[p+q+(1-p-q)p_s])`; consistently, the
    /// reconstruction error equals this rate times the failure probability.
    pub fn sampling_rate(&self, src: &SourceParams, ch: &ChannelParams) -> Result<f64> {
        let (p, q) = (src.p(), src.q());
        if p + q == 0.0 {
            return Err(Error::DegenerateSource);
        }
        Ok(match self {
            Policy::RandomizedStationary { p_sample } => *p_sample,
            Policy::ChangeAware => 2.0 * p * q / (p + q),
            Policy::SemanticsAware => {
                let d = p + q + (1.0 - p - q) * ch.p_s();
                2.0 * p * q / ((p + q) * d)
            }
        })
    }
}
