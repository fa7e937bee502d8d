//! Source, channel, and per-slot system state.
//!
//! The monitored source is a two-state discrete-time Markov chain; states are
//! represented as `bool` with `false` ≡ state 0 and `true` ≡ state 1. Each
//! slot the source may flip, the sampler may transmit the fresh state over a
//! packet-drop channel, and the receiver-side estimate plus the three age
//! metrics are updated from the outcome.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Transition probabilities of the two-state source chain: `p` is the
/// per-slot probability of leaving state 0, `q` of leaving state 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    p: f64,
    q: f64,
}

impl SourceParams {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        check_probability("p", p)?;
        check_probability("q", q)?;
        Ok(Self { p, q })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Probability that the chain leaves state `x` in one slot.
    pub fn flip_prob(&self, x: bool) -> f64 {
        if x {
            self.q
        } else {
            self.p
        }
    }

    /// Stationary distribution `(Pr[X=0], Pr[X=1]) = (q, p) / (p + q)`.
    ///
    /// Rejects `p = q = 0`, where the chain is reducible.
    pub fn stationary(&self) -> Result<(f64, f64)> {
        if self.p + self.q == 0.0 {
            return Err(Error::DegenerateSource);
        }
        let total = self.p + self.q;
        Ok((self.q / total, self.p / total))
    }

    /// Source params exchanged (`p` ↔ `q`); states 0 and 1 swap roles.
    pub fn swapped(&self) -> Self {
        Self {
            p: self.q,
            q: self.p,
        }
    }
}

/// Success probability of a transmitted sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    p_s: f64,
}

impl ChannelParams {
    pub fn new(p_s: f64) -> Result<Self> {
        check_probability("p_s", p_s)?;
        Ok(Self { p_s })
    }

    pub fn p_s(&self) -> f64 {
        self.p_s
    }
}

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidProbability { name, value })
    }
}

/// Deterministic random stream: identical `(seed, stream)` and call sequence
/// reproduce identical draws. Distinct streams from one seed are independent,
/// which lets grid sweeps and replications draw per-cell streams without
/// coordination.
#[derive(Debug, Clone)]
pub struct RngHandle {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngHandle {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Bernoulli draw: `true` with probability `prob`.
    #[inline]
    pub fn chance(&mut self, prob: f64) -> bool {
        self.rng.random::<f64>() < prob
    }

    /// Uniform draw in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

/// Full per-slot system state after the slot's communication round.
///
/// Invariants for every reachable state:
/// - `aoiv == 1` exactly when `x != x_hat` (two-state sources collapse the
///   incorrect-version count to the error indicator), else `aoiv == 0`;
/// - `aoii == 0` exactly when `x == x_hat`;
/// - `delivered` implies `sampled`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotState {
    /// Source state.
    pub x: bool,
    /// Receiver-side estimate of the source state.
    pub x_hat: bool,
    /// Versions the receiver lags behind the source.
    pub via: u64,
    /// Outdated versions counted only while erroneous; 0 or 1 here.
    pub aoiv: u8,
    /// Consecutive slots spent in the erroneous state.
    pub aoii: u64,
    /// Whether this slot's policy decision was to sample.
    pub sampled: bool,
    /// Whether this slot's transmission was delivered.
    pub delivered: bool,
}

impl SlotState {
    /// Synced starting point: source and estimate both in state 0, all ages
    /// zero, no communication yet.
    pub fn synced_origin() -> Self {
        Self {
            x: false,
            x_hat: false,
            via: 0,
            aoiv: 0,
            aoii: 0,
            sampled: false,
            delivered: false,
        }
    }

    /// True when the receiver estimate disagrees with the source.
    pub fn erroneous(&self) -> bool {
        self.x != self.x_hat
    }

    pub fn invariants_hold(&self) -> bool {
        let indicator = u8::from(self.erroneous());
        self.aoiv == indicator
            && (self.aoii == 0) == !self.erroneous()
            && self.aoii >= u64::from(self.aoiv)
            && (!self.delivered || self.sampled)
    }
}

/// One source transition: from state `x`, flips with probability `p` (from 0)
/// or `q` (from 1), otherwise self-loops.
#[inline]
pub fn step_source(src: &SourceParams, x: bool, rng: &mut RngHandle) -> bool {
    if rng.chance(src.flip_prob(x)) {
        !x
    } else {
        x
    }
}

/// One channel use: a transmitted sample is delivered with probability `p_s`;
/// without a transmission nothing is delivered.
#[inline]
pub fn step_channel(ch: &ChannelParams, sampled: bool, rng: &mut RngHandle) -> bool {
    sampled && rng.chance(ch.p_s())
}

/// Advances the system one slot.
///
/// Order within the slot: the source transitions, the sampler decides on the
/// fresh state (`decide` sees the new source state, the previous one, and the
/// current estimate), the channel fires, the estimate updates on delivery,
/// and the three ages update from the same round:
///
/// - `via` resets to 0 on delivery, increments on an undelivered source
///   change, and is unchanged otherwise;
/// - `aoiv` resets to 0 when synced, increments on a change while erroneous,
///   and is unchanged while erroneous without a change;
/// - `aoii` counts consecutive erroneous slots.
///
/// Delivering after the transition is what makes the estimate track the
/// current version and keeps `aoiv` equal to the same-slot error indicator.
pub fn advance_slot<F>(
    src: &SourceParams,
    ch: &ChannelParams,
    state: &SlotState,
    decide: F,
    rng: &mut RngHandle,
) -> SlotState
where
    F: FnOnce(bool, bool, bool, &mut RngHandle) -> bool,
{
    let x_prev = state.x;
    let x = step_source(src, x_prev, rng);
    let sampled = decide(x, x_prev, state.x_hat, rng);
    let delivered = step_channel(ch, sampled, rng);
    let x_hat = if delivered { x } else { state.x_hat };

    let changed = x != x_prev;
    let via = if delivered {
        0
    } else {
        state.via + u64::from(changed)
    };
    let erroneous = x != x_hat;
    let aoiv = if erroneous {
        state.aoiv + u8::from(changed)
    } else {
        0
    };
    let aoii = if erroneous { state.aoii + 1 } else { 0 };

    let next = SlotState {
        x,
        x_hat,
        via,
        aoiv,
        aoii,
        sampled,
        delivered,
    };
    debug_assert!(next.invariants_hold());
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rng() -> RngHandle {
        RngHandle::new(0x5eed)
    }

    #[test]
    fn frozen_source_never_moves() {
        let src = SourceParams::new(0.0, 0.0).unwrap();
        let mut r = rng();
        for _ in 0..100 {
            assert!(!step_source(&src, false, &mut r));
        }
    }

    #[test]
    fn deterministic_toggle() {
        let src = SourceParams::new(1.0, 1.0).unwrap();
        let mut r = rng();
        for _ in 0..100 {
            assert!(step_source(&src, false, &mut r));
            assert!(!step_source(&src, true, &mut r));
        }
    }

    #[test]
    fn source_stationary_matches_linear_solve() {
        // q/(p+q), p/(p+q) for the 2x2 chain.
        let src = SourceParams::new(0.1, 0.4).unwrap();
        let (pi0, pi1) = src.stationary().unwrap();
        assert!((pi0 - 0.8).abs() < 1e-15);
        assert!((pi1 - 0.2).abs() < 1e-15);

        let symmetric = SourceParams::new(0.3, 0.3).unwrap();
        assert_eq!(symmetric.stationary().unwrap(), (0.5, 0.5));
        let toggling = SourceParams::new(1.0, 1.0).unwrap();
        assert_eq!(toggling.stationary().unwrap(), (0.5, 0.5));
    }

    #[test]
    fn degenerate_source_rejected() {
        let src = SourceParams::new(0.0, 0.0).unwrap();
        assert_eq!(src.stationary(), Err(Error::DegenerateSource));
    }

    #[test]
    fn invalid_probabilities_rejected() {
        assert!(SourceParams::new(-0.1, 0.5).is_err());
        assert!(SourceParams::new(0.5, 1.5).is_err());
        assert!(ChannelParams::new(f64::NAN).is_err());
    }

    #[test]
    fn empirical_occupancy_matches_stationary() {
        let src = SourceParams::new(0.3, 0.3).unwrap();
        let mut r = rng();
        let mut x = false;
        let mut ones = 0u64;
        let n = 10_000_000u64;
        for _ in 0..n {
            x = step_source(&src, x, &mut r);
            ones += u64::from(x);
        }
        let frac = ones as f64 / n as f64;
        // Binomial-ish bound; the chain mixes fast at p = q = 0.3.
        assert!((frac - 0.5).abs() < 1e-3, "occupancy {frac}");
    }

    #[test]
    fn channel_requires_transmission() {
        let ch = ChannelParams::new(0.9).unwrap();
        let mut r = rng();
        for _ in 0..100 {
            assert!(!step_channel(&ch, false, &mut r));
        }
        let perfect = ChannelParams::new(1.0).unwrap();
        assert!(step_channel(&perfect, true, &mut r));
    }

    #[test]
    fn channel_success_rate() {
        let ch = ChannelParams::new(0.8).unwrap();
        let mut r = rng();
        let n = 10_000_000u64;
        let hits = (0..n).filter(|_| step_channel(&ch, true, &mut r)).count();
        let rate = hits as f64 / n as f64;
        assert!((rate - 0.8).abs() < 1e-3, "rate {rate}");
    }

    #[test]
    fn identical_seeds_reproduce_trajectories() {
        let src = SourceParams::new(0.25, 0.4).unwrap();
        let ch = ChannelParams::new(0.6).unwrap();
        let run = || {
            let mut r = RngHandle::with_stream(7, 3);
            let mut s = SlotState::synced_origin();
            let mut trace = Vec::new();
            for _ in 0..2000 {
                s = advance_slot(&src, &ch, &s, |_, _, _, rng| rng.chance(0.5), &mut r);
                trace.push(s);
            }
            trace
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = RngHandle::with_stream(7, 0);
        let mut b = RngHandle::with_stream(7, 1);
        let xs: Vec<f64> = (0..8).map(|_| a.uniform()).collect();
        let ys: Vec<f64> = (0..8).map(|_| b.uniform()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn delivery_resets_via() {
        let src = SourceParams::new(0.5, 0.5).unwrap();
        let ch = ChannelParams::new(1.0).unwrap();
        let mut r = rng();
        let mut state = SlotState::synced_origin();
        state.via = 17;
        state.x_hat = true;
        state.aoiv = 1;
        state.aoii = 9;
        let next = advance_slot(&src, &ch, &state, |_, _, _, _| true, &mut r);
        assert!(next.delivered);
        assert_eq!(next.via, 0);
        assert_eq!(next.aoiv, 0);
        assert_eq!(next.aoii, 0);
    }

    #[test]
    fn quiet_slot_leaves_ages_alone() {
        let src = SourceParams::new(0.0, 0.0).unwrap();
        let ch = ChannelParams::new(0.8).unwrap();
        let mut r = rng();
        let state = SlotState::synced_origin();
        let next = advance_slot(&src, &ch, &state, |_, _, _, _| false, &mut r);
        assert_eq!(next.via, 0);
        assert_eq!(next.aoiv, 0);
        assert_eq!(next.aoii, 0);
    }

    #[test]
    fn persistent_error_grows_aoii_only() {
        // Erroneous state, frozen source, no sampling: aoii ticks, aoiv holds.
        let src = SourceParams::new(0.0, 0.0).unwrap();
        let ch = ChannelParams::new(0.8).unwrap();
        let mut r = rng();
        let mut state = SlotState {
            x: false,
            x_hat: true,
            via: 1,
            aoiv: 1,
            aoii: 2,
            sampled: false,
            delivered: false,
        };
        state = advance_slot(&src, &ch, &state, |_, _, _, _| false, &mut r);
        assert_eq!(state.aoii, 3);
        assert_eq!(state.aoiv, 1);
        assert_eq!(state.via, 1);
    }

    #[test]
    fn hand_traced_three_slot_scenario() {
        // Deterministic toggle source, transmissions forced off, so every
        // slot is a source change without delivery. Cross-checked against an
        // exhaustive one-slot enumeration in `single_slot_enumeration`.
        let src = SourceParams::new(1.0, 1.0).unwrap();
        let ch = ChannelParams::new(0.0).unwrap();
        let mut r = rng();
        let mut state = SlotState::synced_origin();
        // Slot 1: 0 -> 1 undelivered: erroneous, all ages 1.
        state = advance_slot(&src, &ch, &state, |_, _, _, _| true, &mut r);
        assert_eq!((state.via, state.aoiv, state.aoii), (1, 1, 1));
        // Slot 2: 1 -> 0 undelivered: back in sync with the stale estimate.
        state = advance_slot(&src, &ch, &state, |_, _, _, _| true, &mut r);
        assert_eq!((state.via, state.aoiv, state.aoii), (2, 0, 0));
        // Slot 3: 0 -> 1 undelivered again.
        state = advance_slot(&src, &ch, &state, |_, _, _, _| true, &mut r);
        assert_eq!((state.via, state.aoiv, state.aoii), (3, 1, 1));
    }

    #[test]
    fn single_slot_enumeration() {
        // All combinations of (x, x_hat, change, sampled, success): the
        // returned state must satisfy the update rules case by case.
        for x in [false, true] {
            for x_hat in [false, true] {
                for change in [false, true] {
                    for sampled in [false, true] {
                        for success in [false, true] {
                            let src = if change {
                                SourceParams::new(1.0, 1.0).unwrap()
                            } else {
                                SourceParams::new(0.0, 0.0).unwrap()
                            };
                            let ch = ChannelParams::new(if success { 1.0 } else { 0.0 }).unwrap();
                            let erroneous = x != x_hat;
                            let state = SlotState {
                                x,
                                x_hat,
                                via: 5,
                                aoiv: u8::from(erroneous),
                                aoii: if erroneous { 3 } else { 0 },
                                sampled: false,
                                delivered: false,
                            };
                            let mut r = rng();
                            let next =
                                advance_slot(&src, &ch, &state, |_, _, _, _| sampled, &mut r);

                            let delivered = sampled && success;
                            let x_next = x != change;
                            assert_eq!(next.x, x_next);
                            assert_eq!(next.delivered, delivered);
                            assert_eq!(next.x_hat, if delivered { x_next } else { x_hat });
                            let expect_via = if delivered {
                                0
                            } else {
                                state.via + u64::from(change)
                            };
                            assert_eq!(next.via, expect_via);
                            assert!(next.invariants_hold());
                        }
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn invariants_hold_along_random_trajectories(
            p in 0.0f64..=1.0,
            q in 0.0f64..=1.0,
            p_s in 0.0f64..=1.0,
            p_sample in 0.0f64..=1.0,
            seed in any::<u64>(),
        ) {
            let src = SourceParams::new(p, q).unwrap();
            let ch = ChannelParams::new(p_s).unwrap();
            let mut r = RngHandle::new(seed);
            let mut state = SlotState::synced_origin();
            let mut prev_via = 0u64;
            for _ in 0..300 {
                state = advance_slot(&src, &ch, &state, |_, _, _, rng| rng.chance(p_sample), &mut r);
                prop_assert!(state.invariants_hold());
                // via never decreases except by a reset on delivery
                prop_assert!(state.via >= prev_via || (state.delivered && state.via == 0));
                prev_via = state.via;
            }
        }
    }
}
