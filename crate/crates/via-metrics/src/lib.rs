//! Version-age metrics for remote monitoring of a two-state Markov source
//! over an unreliable channel.
//!
//! A sampler watches a two-state discrete-time Markov chain and may transmit
//! the fresh state to a receiver over a packet-drop channel. Three
//! freshness/semantics metrics track how well the receiver keeps up:
//!
//! - **VIA** (version innovation age): how many versions the receiver lags
//!   behind the source; resets on a successful delivery.
//! - **AoIV** (age of incorrect version): outdated versions counted only
//!   while the receiver estimate is wrong; for a two-state source this is
//!   the error indicator.
//! - **AoII** (age of incorrect information): consecutive slots spent in the
//!   erroneous state.
//!
//! The crate provides the slot-level dynamics ([`markov`]), the three
//! sampling policies ([`policy`]), closed-form stationary distributions and
//! averages ([`analytics`]), an independent chain-solver cross-check
//! ([`oracle`]), a deterministic Monte Carlo engine ([`sim`]), a constrained
//! optimizer for the sampling probability ([`optimizer`]), and a three-way
//! validation harness comparing all routes ([`validation`]).
//!
//! ```
//! use via_metrics::{analytics, ChannelParams, Policy, SourceParams};
//!
//! let src = SourceParams::new(0.3, 0.3)?;
//! let ch = ChannelParams::new(0.8)?;
//! let policy = Policy::randomized_stationary(0.5)?;
//! let avg = analytics::avg_via(&policy, &src, &ch)?;
//! assert!((avg - 0.45).abs() < 1e-12);
//! # Ok::<(), via_metrics::Error>(())
//! ```

pub mod analytics;
pub mod error;
pub mod markov;
pub mod optimizer;
pub mod oracle;
pub mod policy;
pub mod sim;
pub mod validation;

pub use error::{Error, Result};
pub use markov::{
    advance_slot, step_channel, step_source, ChannelParams, RngHandle, SlotState, SourceParams,
};
pub use policy::{Policy, PolicyKind};

/// Compiles and runs every code block in the guide, keeping the book in sync
/// with the library.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            pub struct $name;
        };
    }

    chapter!(Introduction, "../../../book/src/introduction.md");
    chapter!(Model, "../../../book/src/model.md");
    chapter!(Policies, "../../../book/src/policies.md");
    chapter!(Metrics, "../../../book/src/metrics.md");
    chapter!(Validation, "../../../book/src/validation.md");
    chapter!(Optimization, "../../../book/src/optimization.md");
    chapter!(Cli, "../../../book/src/cli.md");
}
