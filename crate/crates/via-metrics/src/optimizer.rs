//! Constrained minimization of the average version lag over the randomized
//! stationary policy's sampling probability.
//!
//! The objective is strictly decreasing in the sampling probability, so the
//! solution is closed-form: sample at the budget cap whenever the
//! reconstruction-error constraint leaves the cap reachable, otherwise no
//! feasible point exists. A grid brute force confirms the algebra.

use crate::analytics;
use crate::error::{Error, Result};
use crate::markov::{ChannelParams, SourceParams};
use crate::policy::Policy;

/// A constrained problem instance: minimize average version lag subject to a
/// per-slot sampling budget (`cost = delta * p_sample <= delta_max`) and a
/// reconstruction-error ceiling (`P_E <= e_max`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizationProblem {
    src: SourceParams,
    ch: ChannelParams,
    delta: f64,
    delta_max: f64,
    e_max: f64,
}

impl OptimizationProblem {
    pub fn new(
        src: SourceParams,
        ch: ChannelParams,
        delta: f64,
        delta_max: f64,
        e_max: f64,
    ) -> Result<Self> {
        if !delta.is_finite() || delta <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "sampling cost delta must be positive, got {delta}"
            )));
        }
        if !delta_max.is_finite() || delta_max < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "budget delta_max must be nonnegative, got {delta_max}"
            )));
        }
        if delta_max / delta > 1.0 {
            return Err(Error::InvalidConfig(format!(
                "budget ratio eta = {} exceeds 1; any sampling probability would satisfy it",
                delta_max / delta
            )));
        }
        if !(e_max > 0.0 && e_max <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "error ceiling e_max must lie in (0, 1], got {e_max}"
            )));
        }
        Ok(Self {
            src,
            ch,
            delta,
            delta_max,
            e_max,
        })
    }

    pub fn src(&self) -> &SourceParams {
        &self.src
    }

    pub fn ch(&self) -> &ChannelParams {
        &self.ch
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn delta_max(&self) -> f64 {
        self.delta_max
    }

    pub fn e_max(&self) -> f64 {
        self.e_max
    }

    /// Budget ratio `delta_max / delta`, the cap on the sampling probability.
    pub fn eta(&self) -> f64 {
        self.delta_max / self.delta
    }

    /// Average version lag at a given sampling probability; infinite when
    /// nothing is ever delivered but the source keeps moving.
    pub fn objective(&self, p_sample: f64) -> f64 {
        let (p, q) = (self.src.p(), self.src.q());
        if p * q == 0.0 {
            return 0.0;
        }
        let rho = p_sample * self.ch.p_s();
        if rho == 0.0 {
            return f64::INFINITY;
        }
        2.0 * p * q * (1.0 - rho) / ((p + q) * rho)
    }

    /// Reconstruction error at a given sampling probability.
    pub fn error_at(&self, p_sample: f64) -> f64 {
        let policy = Policy::RandomizedStationary { p_sample };
        analytics::reconstruction_error(&policy, &self.src, &self.ch).unwrap_or(0.0)
    }

    /// Time-averaged sampling cost `delta * p_sample`.
    pub fn cost_at(&self, p_sample: f64) -> f64 {
        self.delta * p_sample
    }
}

/// Result of the closed-form solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizationOutcome {
    Optimal {
        /// Optimal sampling probability.
        p_star: f64,
        /// Error-constraint lower bound on the sampling probability
        /// (clamped to 0 when slack).
        lower_bound: f64,
        achieved_via: f64,
        achieved_pe: f64,
        achieved_cost: f64,
    },
    Infeasible {
        lower_bound: f64,
    },
}

impl OptimizationOutcome {
    pub fn is_optimal(&self) -> bool {
        matches!(self, OptimizationOutcome::Optimal { .. })
    }

    pub fn p_star(&self) -> Option<f64> {
        match self {
            OptimizationOutcome::Optimal { p_star, .. } => Some(*p_star),
            OptimizationOutcome::Infeasible { .. } => None,
        }
    }
}

/// Error-constraint lower bound on the sampling probability, clamped to 0
/// when slack. Errors out when the channel never delivers and the ceiling is
/// unreachable regardless of sampling.
fn error_lower_bound(problem: &OptimizationProblem) -> Result<f64> {
    let (p, q) = (problem.src.p(), problem.src.q());
    let p_s = problem.ch.p_s();
    if p * q == 0.0 {
        // The source never alternates, the error is identically zero, and
        // the error constraint is vacuous.
        return Ok(0.0);
    }
    if p_s == 0.0 {
        // Sampling cannot influence the error; the constraint is either
        // satisfied by every probability or by none.
        let fixed_error = 2.0 * p * q / ((p + q) * (p + q));
        if problem.e_max < fixed_error {
            return Err(Error::InvalidConfig(format!(
                "error ceiling {} is below the no-delivery error {fixed_error}",
                problem.e_max
            )));
        }
        return Ok(0.0);
    }
    let num = 2.0 * p * q - problem.e_max * (p + q) * (p + q);
    let den = p_s * (2.0 * p * q + problem.e_max * (p + q) * (1.0 - p - q));
    Ok(if num <= 0.0 {
        0.0
    } else if den <= 0.0 {
        f64::INFINITY
    } else {
        num / den
    })
}

/// Sampling probabilities that satisfy both constraints, as a closed
/// interval `[max(lower, 0), eta]`; `None` when the error constraint pushes
/// the lower end above the budget cap.
pub fn feasible_interval(problem: &OptimizationProblem) -> Result<Option<(f64, f64)>> {
    let lower = error_lower_bound(problem)?;
    let eta = problem.eta();
    if lower > eta {
        Ok(None)
    } else {
        Ok(Some((lower, eta)))
    }
}

/// Closed-form solve: the objective decreases in the sampling probability,
/// so the optimum sits at the budget cap `eta` whenever the feasible
/// interval is nonempty and delivery is possible at all.
pub fn solve(problem: &OptimizationProblem) -> Result<OptimizationOutcome> {
    let (p, q) = (problem.src.p(), problem.src.q());
    let eta = problem.eta();

    if p * q == 0.0 {
        // Every probability in [0, eta] attains the zero optimum; sample as
        // little as possible.
        return Ok(OptimizationOutcome::Optimal {
            p_star: 0.0,
            lower_bound: 0.0,
            achieved_via: 0.0,
            achieved_pe: 0.0,
            achieved_cost: 0.0,
        });
    }
    let lower = error_lower_bound(problem)?;
    if lower > eta {
        return Ok(OptimizationOutcome::Infeasible { lower_bound: lower });
    }
    if eta * problem.ch.p_s() == 0.0 {
        // Nothing is ever delivered anywhere in the feasible set, so the
        // objective is infinite everywhere: no optimum exists.
        return Ok(OptimizationOutcome::Infeasible { lower_bound: lower });
    }
    Ok(OptimizationOutcome::Optimal {
        p_star: eta,
        lower_bound: lower,
        achieved_via: problem.objective(eta),
        achieved_pe: problem.error_at(eta),
        achieved_cost: problem.cost_at(eta),
    })
}

/// Brute-force confirmation of [`solve`] on the grid `{h, 2h, ..., 1}`.
///
/// Agreement means: identical feasibility verdicts and, when feasible, a
/// grid argmin within one step of the closed-form optimum. A feasible
/// interval narrower than the step can hide between grid points; that case
/// counts as agreement, since the grid cannot see it.
pub fn verify_by_grid(problem: &OptimizationProblem, grid_step: f64) -> Result<bool> {
    if !(grid_step > 0.0 && grid_step <= 0.01) {
        return Err(Error::InvalidConfig(format!(
            "grid step must lie in (0, 0.01], got {grid_step}"
        )));
    }
    let outcome = solve(problem)?;
    let steps = (1.0 / grid_step).round() as usize;
    let slack = 1e-12;

    let mut best: Option<(f64, f64)> = None;
    for k in 1..=steps {
        let candidate = (k as f64 * grid_step).min(1.0);
        if problem.cost_at(candidate) > problem.delta_max + slack {
            continue;
        }
        if problem.error_at(candidate) > problem.e_max + slack {
            continue;
        }
        let value = problem.objective(candidate);
        if best.map_or(true, |(_, v)| value < v) {
            best = Some((candidate, value));
        }
    }

    Ok(match (&outcome, best) {
        (OptimizationOutcome::Optimal { p_star, .. }, Some((argmin, value))) => {
            // The closed-form optimum must also dominate every feasible grid
            // point it claims to beat.
            (argmin - p_star).abs() <= grid_step + slack
                && problem.objective(*p_star) <= value + slack
        }
        (OptimizationOutcome::Infeasible { .. }, None) => true,
        (
            OptimizationOutcome::Optimal {
                p_star,
                lower_bound,
                ..
            },
            None,
        ) => p_star - lower_bound < grid_step,
        (OptimizationOutcome::Infeasible { .. }, Some(_)) => false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::RngHandle;

    fn problem(p: f64, q: f64, p_s: f64, eta: f64, e_max: f64) -> OptimizationProblem {
        OptimizationProblem::new(
            SourceParams::new(p, q).unwrap(),
            ChannelParams::new(p_s).unwrap(),
            1.0,
            eta,
            e_max,
        )
        .unwrap()
    }

    #[test]
    fn construction_guards() {
        let src = SourceParams::new(0.3, 0.3).unwrap();
        let ch = ChannelParams::new(0.8).unwrap();
        assert!(OptimizationProblem::new(src, ch, 0.0, 0.0, 0.5).is_err());
        assert!(OptimizationProblem::new(src, ch, 1.0, 1.5, 0.5).is_err());
        assert!(OptimizationProblem::new(src, ch, 1.0, 0.5, 0.0).is_err());
        assert!(OptimizationProblem::new(src, ch, 2.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn feasible_interval_worked_values() {
        // Slack error constraint: lower bound exactly 0.
        let pr = problem(0.3, 0.3, 0.8, 0.5, 0.5);
        assert_eq!(feasible_interval(&pr).unwrap(), Some((0.0, 0.5)));
        // Tight error constraint pushes the lower end above the cap.
        let tight = problem(0.45, 0.45, 0.5, 0.2, 0.1);
        assert_eq!(feasible_interval(&tight).unwrap(), None);
        // e_max = 1 never binds.
        let loose = problem(0.45, 0.45, 0.5, 0.2, 1.0);
        assert_eq!(feasible_interval(&loose).unwrap(), Some((0.0, 0.2)));
    }

    #[test]
    fn solve_worked_values() {
        let pr = problem(0.3, 0.3, 0.8, 0.5, 0.5);
        match solve(&pr).unwrap() {
            OptimizationOutcome::Optimal {
                p_star,
                achieved_via,
                achieved_pe,
                achieved_cost,
                ..
            } => {
                assert_eq!(p_star, 0.5);
                assert!((achieved_via - 0.45).abs() < 1e-15);
                assert!((achieved_pe - 0.108 / 0.456).abs() < 1e-15);
                assert!(achieved_pe <= 0.5);
                assert!((achieved_cost - 0.5).abs() < 1e-15);
            }
            other => panic!("expected optimal, got {other:?}"),
        }

        let tight = problem(0.45, 0.45, 0.5, 0.2, 0.1);
        assert!(!solve(&tight).unwrap().is_optimal());

        let unconstrained = problem(0.3, 0.3, 1.0, 1.0, 1.0);
        assert_eq!(solve(&unconstrained).unwrap().p_star(), Some(1.0));
    }

    #[test]
    fn zero_budget_is_infeasible_for_live_sources() {
        let pr = problem(0.3, 0.3, 0.8, 0.0, 1.0);
        assert!(!solve(&pr).unwrap().is_optimal());
    }

    #[test]
    fn degenerate_source_prefers_free_optimum() {
        let pr = problem(0.0, 0.4, 0.8, 0.5, 0.5);
        match solve(&pr).unwrap() {
            OptimizationOutcome::Optimal {
                p_star,
                achieved_via,
                achieved_cost,
                ..
            } => {
                assert_eq!(p_star, 0.0);
                assert_eq!(achieved_via, 0.0);
                assert_eq!(achieved_cost, 0.0);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn dead_channel_with_reachable_error_is_still_infeasible() {
        // p_s = 0 keeps the error at its no-delivery level; with a lenient
        // ceiling the constraint holds but the objective diverges.
        let pr = problem(0.3, 0.3, 0.0, 0.5, 0.9);
        assert!(!solve(&pr).unwrap().is_optimal());
        // With a ceiling below the no-delivery error the instance is
        // rejected outright.
        let rejected = problem(0.3, 0.3, 0.0, 0.5, 0.2);
        assert!(feasible_interval(&rejected).is_err());
    }

    #[test]
    fn grid_confirms_worked_instances() {
        assert!(verify_by_grid(&problem(0.3, 0.3, 0.8, 0.5, 0.5), 1e-4).unwrap());
        assert!(verify_by_grid(&problem(0.45, 0.45, 0.5, 0.2, 0.1), 1e-4).unwrap());
        assert!(verify_by_grid(&problem(0.3, 0.3, 1.0, 1.0, 1.0), 1e-4).unwrap());
        assert!(verify_by_grid(&problem(0.2, 0.4, 0.7, 1.0, 1.0), 1e-2).unwrap());
    }

    #[test]
    fn grid_step_validation() {
        let pr = problem(0.3, 0.3, 0.8, 0.5, 0.5);
        assert!(verify_by_grid(&pr, 0.0).is_err());
        assert!(verify_by_grid(&pr, 0.5).is_err());
    }

    #[test]
    fn random_problems_agree_with_grid() {
        let mut rng = RngHandle::new(0x0517);
        for _ in 0..200 {
            let pr = problem(
                0.05 + 0.9 * rng.uniform(),
                0.05 + 0.9 * rng.uniform(),
                0.1 + 0.9 * rng.uniform(),
                rng.uniform(),
                0.05 + 0.95 * rng.uniform(),
            );
            assert!(verify_by_grid(&pr, 1e-3).unwrap(), "{pr:?}");
            if let OptimizationOutcome::Optimal {
                p_star,
                lower_bound,
                achieved_pe,
                achieved_cost,
                ..
            } = solve(&pr).unwrap()
            {
                assert!(lower_bound <= p_star + 1e-12);
                assert!(achieved_pe <= pr.e_max() + 1e-12);
                assert!(achieved_cost <= pr.delta_max() + 1e-12);
            }
        }
    }
}
