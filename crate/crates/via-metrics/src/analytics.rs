//! Closed-form stationary distributions and averages for the three age
//! metrics under each sampling policy.
//!
//! Everything here is exact scalar or series evaluation; no simulation. The
//! matching numeric cross-checks live in [`crate::oracle`] (explicit chains)
//! and [`crate::sim`] (Monte Carlo), and the three routes are compared by
//! [`crate::validation`].
//!
//! Notation used throughout: `p` and `q` are the source transition
//! probabilities out of states 0 and 1, `p_s` the channel success
//! probability, and for the randomized stationary policy `rho = p_sample *
//! p_s` is the per-slot delivery probability. Stationary quantities assume an
//! irreducible source (`p + q > 0`); formulas for the change-aware and
//! semantics-aware policies additionally assume both transitions occur
//! (`p*q > 0`) except where a degenerate value is defined explicitly.

use crate::error::{Error, Result};
use crate::markov::{check_probability, ChannelParams, SourceParams};
use crate::policy::{Policy, PolicyKind};

/// `x + (1 - x) * rho`: probability that a run of consecutive slots in one
/// source state ends this slot, either by the source leaving (prob `x`) or by
/// a delivery (prob `rho`).
#[inline]
fn phi(x: f64, rho: f64) -> f64 {
    x + (1.0 - x) * rho
}

/// `p + q + (1 - p - q) * rho`: common denominator scale of the joint
/// source/estimate stationary tables. Strictly positive whenever `p + q > 0`.
#[inline]
fn joint_scale(p: f64, q: f64, rho: f64) -> f64 {
    p + q + (1.0 - p - q) * rho
}

/// Geometric decay ratio of the version-lag series under the randomized
/// stationary policy: `sqrt(pq) (1 - rho) / sqrt(phi(p) phi(q))`.
///
/// Zero when the source never leaves one of its states.
pub fn convergence_ratio(src: &SourceParams, ch: &ChannelParams, p_sample: f64) -> Result<f64> {
    check_probability("p_sample", p_sample)?;
    let (p, q) = (src.p(), src.q());
    if p * q == 0.0 {
        return Ok(0.0);
    }
    let rho = p_sample * ch.p_s();
    Ok((p * q).sqrt() * (1.0 - rho) / (phi(p, rho) * phi(q, rho)).sqrt())
}

/// True when the version-lag stationary series converges (ratio < 1).
pub fn check_convergence(src: &SourceParams, ch: &ChannelParams, p_sample: f64) -> Result<bool> {
    Ok(convergence_ratio(src, ch, p_sample)? < 1.0)
}

/// Truncated stationary distribution of the joint (source state, version
/// lag) chain, with the series tail summed in closed form.
///
/// `pi0[i]` is the stationary probability of (source in 0, lag `i`), `pi1[i]`
/// of (source in 1, lag `i`). Entries decay geometrically: two lag levels up
/// multiply by the squared convergence ratio.
#[derive(Debug, Clone)]
pub struct ViaStationary {
    kind: PolicyKind,
    pi0: Vec<f64>,
    pi1: Vec<f64>,
    tail_mass: f64,
}

impl ViaStationary {
    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    /// Largest retained lag level.
    pub fn i_max(&self) -> usize {
        self.pi0.len() - 1
    }

    pub fn pi0(&self, i: usize) -> f64 {
        self.pi0[i]
    }

    pub fn pi1(&self, i: usize) -> f64 {
        self.pi1[i]
    }

    /// Stationary probability of lag `i` regardless of source state.
    pub fn level_mass(&self, i: usize) -> f64 {
        self.pi0[i] + self.pi1[i]
    }

    /// Mass beyond the truncation, summed analytically.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Retained mass plus the analytic tail; 1 up to rounding.
    pub fn total_mass(&self) -> f64 {
        let kept: f64 = self.pi0.iter().sum::<f64>() + self.pi1.iter().sum::<f64>();
        kept + self.tail_mass
    }

    /// Mean lag over the retained levels only.
    pub fn truncated_mean(&self) -> f64 {
        self.pi0
            .iter()
            .zip(&self.pi1)
            .enumerate()
            .map(|(i, (a, b))| i as f64 * (a + b))
            .sum()
    }
}

/// Version-lag stationary table for the randomized stationary policy.
///
/// Entries follow the alternating two-step recurrence
/// `pi0[i+1] = pi0[i] * p(1-rho)/phi(q)` (even `i`) and
/// `pi0[i+1] = pi0[i] * q(1-rho)/phi(p)` (odd `i`), seeded by
/// `pi0[0] = q rho / ((p+q) phi(p))`, with `pi1` the p<->q mirror.
pub fn via_stationary_rs(
    src: &SourceParams,
    ch: &ChannelParams,
    p_sample: f64,
    i_max: usize,
) -> Result<ViaStationary> {
    check_probability("p_sample", p_sample)?;
    let (p, q) = (src.p(), src.q());
    if p + q == 0.0 {
        return Err(Error::DegenerateSource);
    }
    let rho = p_sample * ch.p_s();
    if rho == 0.0 {
        return Err(Error::Divergent);
    }
    let ratio = convergence_ratio(src, ch, p_sample)?;
    if ratio >= 1.0 {
        return Err(Error::NonConvergent { ratio });
    }

    let phi_p = phi(p, rho);
    let phi_q = phi(q, rho);
    let step_from_even_0 = p * (1.0 - rho) / phi_q;
    let step_from_odd_0 = q * (1.0 - rho) / phi_p;
    let step_from_even_1 = q * (1.0 - rho) / phi_p;
    let step_from_odd_1 = p * (1.0 - rho) / phi_q;

    let mut pi0 = Vec::with_capacity(i_max + 1);
    let mut pi1 = Vec::with_capacity(i_max + 1);
    let mut a = q * rho / ((p + q) * phi_p);
    let mut b = p * rho / ((p + q) * phi_q);
    let mut first_out = 0.0;
    for i in 0..=i_max + 2 {
        if i <= i_max {
            pi0.push(a);
            pi1.push(b);
        } else {
            // Levels i_max+1 and i_max+2 seed the exact tail sum below.
            first_out += a + b;
        }
        if i % 2 == 0 {
            a *= step_from_even_0;
            b *= step_from_even_1;
        } else {
            a *= step_from_odd_0;
            b *= step_from_odd_1;
        }
    }
    // The four series repeat with the two-step ratio u, so everything past
    // the retained levels is first_out * (1 + u + u^2 + ...).
    let u = ratio * ratio;
    let tail_mass = first_out / (1.0 - u);

    Ok(ViaStationary {
        kind: PolicyKind::RandomizedStationary,
        pi0,
        pi1,
        tail_mass,
    })
}

/// Version-lag stationary table for the change-aware policy:
/// `pi0[i] = q p_s (1-p_s)^i / (p+q)` and `pi1[i] = p p_s (1-p_s)^i / (p+q)`,
/// a plain geometric family with exact tail `(1-p_s)^(i_max+1)`.
pub fn via_stationary_ca(
    src: &SourceParams,
    ch: &ChannelParams,
    i_max: usize,
) -> Result<ViaStationary> {
    let (p, q) = (src.p(), src.q());
    if p + q == 0.0 {
        return Err(Error::DegenerateSource);
    }
    let p_s = ch.p_s();
    if p_s == 0.0 {
        return Err(Error::Divergent);
    }
    let mut pi0 = Vec::with_capacity(i_max + 1);
    let mut pi1 = Vec::with_capacity(i_max + 1);
    let mut geom = p_s;
    for _ in 0..=i_max {
        pi0.push(q * geom / (p + q));
        pi1.push(p * geom / (p + q));
        geom *= 1.0 - p_s;
    }
    // By this point `geom` is p_s (1-p_s)^(i_max+1); summing the remaining
    // geometric series cancels the leading p_s.
    let tail_mass = geom / p_s;
    Ok(ViaStationary {
        kind: PolicyKind::ChangeAware,
        pi0,
        pi1,
        tail_mass,
    })
}

/// One-step transition probability of the version-lag chain under the
/// randomized stationary policy, conditioning the source state on the current
/// lag level.
///
/// Nonzero only for `j` in {0, i, i+1}: reset on delivery, hold on a quiet
/// slot, increment on an undelivered change.
pub fn via_transition_prob(
    src: &SourceParams,
    ch: &ChannelParams,
    p_sample: f64,
    i: usize,
    j: usize,
) -> Result<f64> {
    let table = via_stationary_rs(src, ch, p_sample, i)?;
    let mass = table.level_mass(i);
    if mass == 0.0 {
        return Err(Error::DegenerateLevel { level: i });
    }
    let w0 = table.pi0(i) / mass;
    let w1 = table.pi1(i) / mass;
    let (p, q) = (src.p(), src.q());
    let rho = p_sample * ch.p_s();
    let miss = 1.0 - rho;

    let case = |stay: f64, grow: f64| -> f64 {
        let mut prob = 0.0;
        if j == 0 {
            prob += rho;
        }
        if j == i {
            prob += stay * miss;
        }
        if j == i + 1 {
            prob += grow * miss;
        }
        prob
    };
    Ok(case(1.0 - p, p) * w0 + case(1.0 - q, q) * w1)
}

/// Closed-form average version lag.
///
/// Randomized stationary: `2pq(1-rho) / ((p+q) rho)`; change-aware:
/// `(1-p_s)/p_s`. The semantics-aware policy has no closed form here — use
/// the simulator.
pub fn avg_via(policy: &Policy, src: &SourceParams, ch: &ChannelParams) -> Result<f64> {
    let (p, q) = (src.p(), src.q());
    if p + q == 0.0 {
        return Err(Error::DegenerateSource);
    }
    match policy {
        Policy::RandomizedStationary { p_sample } => {
            if p * q == 0.0 {
                return Ok(0.0);
            }
            let rho = p_sample * ch.p_s();
            if rho == 0.0 {
                return Err(Error::Divergent);
            }
            Ok(2.0 * p * q * (1.0 - rho) / ((p + q) * rho))
        }
        Policy::ChangeAware => {
            let p_s = ch.p_s();
            if p_s == 0.0 {
                return Err(Error::Divergent);
            }
            Ok((1.0 - p_s) / p_s)
        }
        Policy::SemanticsAware => Err(Error::NoClosedForm {
            policy: "semantics-aware",
            quantity: "average version lag",
        }),
    }
}

/// Outcome of comparing average version lag between the randomized
/// stationary policy (at a given `p_sample`) and the change-aware policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViaOrdering {
    RsLower,
    CaLower,
    Equal,
}

/// Change-aware beats randomized stationary exactly below this sampling
/// probability: `2pq / (p+q + (2pq-p-q) p_s)`.
pub fn rs_beats_ca_threshold(src: &SourceParams, ch: &ChannelParams) -> f64 {
    let (p, q) = (src.p(), src.q());
    if p * q == 0.0 {
        return 0.0;
    }
    2.0 * p * q / (p + q + (2.0 * p * q - p - q) * ch.p_s())
}

/// Orders the two closed-form averages directly, treating a zero delivery
/// probability as a divergent (infinite) average.
pub fn compare_via_rs_ca(src: &SourceParams, ch: &ChannelParams, p_sample: f64) -> ViaOrdering {
    let (p, q) = (src.p(), src.q());
    let rho = p_sample * ch.p_s();
    let rs = if p * q == 0.0 {
        0.0
    } else if rho == 0.0 {
        f64::INFINITY
    } else {
        2.0 * p * q * (1.0 - rho) / ((p + q) * rho)
    };
    let ca = if ch.p_s() == 0.0 {
        f64::INFINITY
    } else {
        (1.0 - ch.p_s()) / ch.p_s()
    };
    if rs == ca {
        ViaOrdering::Equal
    } else if rs < ca {
        ViaOrdering::RsLower
    } else {
        ViaOrdering::CaLower
    }
}

/// Long-run fraction of erroneous slots (estimate disagrees with source).
pub fn reconstruction_error(policy: &Policy, src: &SourceParams, ch: &ChannelParams) -> Result<f64> {
    let (p, q) = (src.p(), src.q());
    if p + q == 0.0 {
        return Err(Error::DegenerateSource);
    }
    let p_s = ch.p_s();
    Ok(match policy {
        Policy::RandomizedStationary { p_sample } => {
            let rho = p_sample * p_s;
            2.0 * p * q * (1.0 - rho) / ((p + q) * joint_scale(p, q, rho))
        }
        Policy::ChangeAware => (1.0 - p_s) / (2.0 - p_s),
        Policy::SemanticsAware => 2.0 * p * q * (1.0 - p_s) / ((p + q) * joint_scale(p, q, p_s)),
    })
}

/// Average version lag expressed through the reconstruction error; equals
/// [`avg_via`] identically for the policies that have both forms.
pub fn avg_via_of_pe(policy: &Policy, src: &SourceParams, ch: &ChannelParams) -> Result<f64> {
    let pe = reconstruction_error(policy, src, ch)?;
    let (p, q) = (src.p(), src.q());
    let p_s = ch.p_s();
    match policy {
        Policy::RandomizedStationary { p_sample } => {
            let rho = p_sample * p_s;
            if rho == 0.0 {
                return if p * q == 0.0 { Ok(0.0) } else { Err(Error::Divergent) };
            }
            Ok(joint_scale(p, q, rho) * pe / rho)
        }
        Policy::ChangeAware => {
            if p_s == 0.0 {
                return Err(Error::Divergent);
            }
            Ok((2.0 / p_s - 1.0) * pe)
        }
        Policy::SemanticsAware => Err(Error::NoClosedForm {
            policy: "semantics-aware",
            quantity: "average version lag",
        }),
    }
}

/// Stationary distribution of the joint (source, estimate, incorrect-version
/// count) chain. Only four of the eight states are reachable; the other four
/// carry exactly zero mass.
#[derive(Debug, Clone, PartialEq)]
pub struct AoivStationary {
    kind: PolicyKind,
    entries: [f64; 8],
}

impl AoivStationary {
    fn index(x: bool, x_hat: bool, aoiv: u8) -> usize {
        (usize::from(x) << 2) | (usize::from(x_hat) << 1) | usize::from(aoiv != 0)
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn get(&self, x: bool, x_hat: bool, aoiv: u8) -> f64 {
        self.entries[Self::index(x, x_hat, aoiv)]
    }

    /// All eight entries as ((x, x_hat, aoiv), probability).
    pub fn entries(&self) -> impl Iterator<Item = ((bool, bool, u8), f64)> + '_ {
        (0..8usize).map(|idx| {
            let x = idx & 0b100 != 0;
            let x_hat = idx & 0b010 != 0;
            let aoiv = u8::from(idx & 0b001 != 0);
            ((x, x_hat, aoiv), self.entries[idx])
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().sum()
    }

    /// Probability of being erroneous: mass of (0,1,1) plus (1,0,1).
    pub fn error_mass(&self) -> f64 {
        self.get(false, true, 1) + self.get(true, false, 1)
    }
}

/// Closed-form joint (source, estimate, incorrect-version count) stationary
/// table for each policy.
pub fn aoiv_stationary(policy: &Policy, src: &SourceParams, ch: &ChannelParams) -> Result<AoivStationary> {
    let (p, q) = (src.p(), src.q());
    if p + q == 0.0 {
        return Err(Error::DegenerateSource);
    }
    let p_s = ch.p_s();

    // (synced-at-0, erroneous est=1, erroneous est=0, synced-at-1)
    let (pi000, pi011, pi101, pi110) = match policy {
        Policy::RandomizedStationary { p_sample } => {
            let rho = p_sample * p_s;
            let denom = (p + q) * joint_scale(p, q, rho);
            (
                q * phi(q, rho) / denom,
                p * q * (1.0 - rho) / denom,
                p * q * (1.0 - rho) / denom,
                p * phi(p, rho) / denom,
            )
        }
        Policy::ChangeAware => {
            let denom = (p + q) * (2.0 - p_s);
            (
                q / denom,
                q * (1.0 - p_s) / denom,
                p * (1.0 - p_s) / denom,
                p / denom,
            )
        }
        Policy::SemanticsAware => {
            let denom = (p + q) * joint_scale(p, q, p_s);
            (
                q * phi(q, p_s) / denom,
                p * q * (1.0 - p_s) / denom,
                p * q * (1.0 - p_s) / denom,
                p * phi(p, p_s) / denom,
            )
        }
    };

    let mut entries = [0.0; 8];
    entries[AoivStationary::index(false, false, 0)] = pi000;
    entries[AoivStationary::index(false, true, 1)] = pi011;
    entries[AoivStationary::index(true, false, 1)] = pi101;
    entries[AoivStationary::index(true, true, 0)] = pi110;
    Ok(AoivStationary {
        kind: policy.kind(),
        entries,
    })
}

/// Average incorrect-version count, read off the stationary table as the
/// total erroneous mass. Coincides with [`reconstruction_error`] for every
/// policy.
pub fn avg_aoiv(policy: &Policy, src: &SourceParams, ch: &ChannelParams) -> Result<f64> {
    Ok(aoiv_stationary(policy, src, ch)?.error_mass())
}

/// Stationary distribution of the joint (source, estimate) chain under the
/// randomized stationary policy. Off-diagonal entries are equal.
#[derive(Debug, Clone, PartialEq)]
pub struct JointReconStationary {
    entries: [f64; 4],
}

impl JointReconStationary {
    fn index(x: bool, x_hat: bool) -> usize {
        (usize::from(x) << 1) | usize::from(x_hat)
    }

    pub fn get(&self, x: bool, x_hat: bool) -> f64 {
        self.entries[Self::index(x, x_hat)]
    }

    pub fn entries(&self) -> impl Iterator<Item = ((bool, bool), f64)> + '_ {
        (0..4usize).map(|idx| ((idx & 0b10 != 0, idx & 0b01 != 0), self.entries[idx]))
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().sum()
    }

    pub fn synced_mass(&self) -> f64 {
        self.get(false, false) + self.get(true, true)
    }
}

pub fn joint_recon_stationary_rs(
    src: &SourceParams,
    ch: &ChannelParams,
    p_sample: f64,
) -> Result<JointReconStationary> {
    check_probability("p_sample", p_sample)?;
    let (p, q) = (src.p(), src.q());
    if p + q == 0.0 {
        return Err(Error::DegenerateSource);
    }
    let rho = p_sample * ch.p_s();
    let denom = (p + q) * joint_scale(p, q, rho);
    let off = p * q * (1.0 - rho) / denom;
    let mut entries = [0.0; 4];
    entries[JointReconStationary::index(false, false)] = q * phi(q, rho) / denom;
    entries[JointReconStationary::index(false, true)] = off;
    entries[JointReconStationary::index(true, false)] = off;
    entries[JointReconStationary::index(true, true)] = p * phi(p, rho) / denom;
    Ok(JointReconStationary { entries })
}

/// Truncated pmf of the consecutive-erroneous-slot count, with the geometric
/// tail summed in closed form.
#[derive(Debug, Clone)]
pub struct AoiiDistribution {
    kind: PolicyKind,
    pmf: Vec<f64>,
    tail_mass: f64,
}

impl AoiiDistribution {
    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn i_max(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn pmf(&self, i: usize) -> f64 {
        self.pmf[i]
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn total_mass(&self) -> f64 {
        self.pmf.iter().sum::<f64>() + self.tail_mass
    }

    /// Mean over the retained support only; the missing tail contribution is
    /// bounded by the analytic tail decay.
    pub fn truncated_mean(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(i, v)| i as f64 * v)
            .sum()
    }
}

/// Closed-form pmf of the error-streak length for each policy.
///
/// A streak that is `i` slots old survived `i-1` further slots after the
/// entry slot, so each policy yields two geometric series, one per source
/// state the streak started from.
pub fn aoii_distribution(
    policy: &Policy,
    src: &SourceParams,
    ch: &ChannelParams,
    i_max: usize,
) -> Result<AoiiDistribution> {
    let (p, q) = (src.p(), src.q());
    if p + q == 0.0 {
        return Err(Error::DegenerateSource);
    }
    let p_s = ch.p_s();
    let kind = policy.kind();

    let mut pmf = Vec::with_capacity(i_max + 1);
    let tail_mass = match policy {
        Policy::RandomizedStationary { .. } | Policy::SemanticsAware => {
            let rho = match policy {
                Policy::RandomizedStationary { p_sample } => p_sample * p_s,
                _ => p_s,
            };
            let scale = joint_scale(p, q, rho);
            pmf.push((p * p + q * q + (p + q - p * p - q * q) * rho) / ((p + q) * scale));
            let base = p * q / ((p + q) * scale);
            let miss = 1.0 - rho;
            // t_x tracks (1-rho)^i (1-x)^(i-1) for x in {q, p}.
            let (mut t_q, mut t_p) = (miss, miss);
            for _ in 1..=i_max {
                pmf.push(base * (t_q * phi(q, rho) + t_p * phi(p, rho)));
                t_q *= miss * (1.0 - q);
                t_p *= miss * (1.0 - p);
            }
            // After the loop t_x is (1-rho)^(i_max+1) (1-x)^(i_max); the
            // remaining series sums to miss * a_x^i_max with a_x = miss(1-x),
            // because 1 - a_x = phi(x).
            base * (t_q + t_p)
        }
        Policy::ChangeAware => {
            if p * q == 0.0 {
                // Reducible corner: the synced process never leaves streak 0.
                pmf.push(1.0);
                pmf.resize(i_max + 1, 0.0);
                return Ok(AoiiDistribution {
                    kind,
                    pmf,
                    tail_mass: 0.0,
                });
            }
            pmf.push(1.0 / (2.0 - p_s));
            let c = p * q * (1.0 - p_s) / ((p + q) * (2.0 - p_s));
            let (mut g_q, mut g_p) = (1.0, 1.0);
            for _ in 1..=i_max {
                pmf.push(c * (g_q + g_p));
                g_q *= 1.0 - q;
                g_p *= 1.0 - p;
            }
            c * (g_q / q + g_p / p)
        }
    };
    Ok(AoiiDistribution {
        kind,
        pmf,
        tail_mass,
    })
}

/// Closed-form average error-streak length.
pub fn avg_aoii(policy: &Policy, src: &SourceParams, ch: &ChannelParams) -> Result<f64> {
    let (p, q) = (src.p(), src.q());
    if p + q == 0.0 {
        return Err(Error::DegenerateSource);
    }
    if p * q == 0.0 {
        // Every policy keeps the synced degenerate process error-free.
        return Ok(0.0);
    }
    let p_s = ch.p_s();
    Ok(match policy {
        Policy::RandomizedStationary { p_sample } => {
            let rho = p_sample * p_s;
            p * q * (1.0 - rho) * (p + q + (2.0 - p - q) * rho)
                / ((p + q) * phi(p, rho) * phi(q, rho) * joint_scale(p, q, rho))
        }
        Policy::ChangeAware => {
            (p * p + q * q) * (1.0 - p_s) / (p * q * (p + q) * (2.0 - p_s))
        }
        Policy::SemanticsAware => {
            p * q * (1.0 - p_s) * (p + q + (2.0 - p - q) * p_s)
                / ((p + q) * phi(p, p_s) * phi(q, p_s) * joint_scale(p, q, p_s))
        }
    })
}
