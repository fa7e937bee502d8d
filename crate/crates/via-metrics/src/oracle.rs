//! Brute-force numeric validator.
//!
//! Each joint chain the analysis reasons about is materialized here as an
//! explicit row-stochastic transition matrix (truncated where the state space
//! is infinite) and solved for its stationary distribution numerically. No
//! closed form from [`crate::analytics`] is consulted anywhere in this
//! module, so agreement between the two routes is evidence, not tautology.

use crate::error::{Error, Result};
use crate::markov::{ChannelParams, SourceParams};
use crate::policy::Policy;

/// Residual target for the stationary solve. The lag-weighted mean of a
/// truncated chain amplifies per-entry residual by up to the truncation
/// level, so the target sits several orders below the tightest comparison
/// tolerance.
const SOLVE_RESIDUAL: f64 = 1e-14;
const MAX_POWER_ITERATIONS: usize = 1_000_000;
/// Chains up to this many states are solved directly; larger ones by power
/// iteration.
const DIRECT_SOLVE_LIMIT: usize = 8;

/// Label of one state of a built chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateLabel {
    /// (source state, version lag) of a truncated version-lag chain.
    SourceLag { x: bool, lag: usize },
    /// (source, estimate, incorrect-version count) of the 4-state joint chain.
    SourceEstimateAge { x: bool, x_hat: bool, aoiv: u8 },
    /// (source, estimate) of the reconstruction chain.
    SourceEstimate { x: bool, x_hat: bool },
}

/// An explicit finite Markov chain: labeled states and a dense row-stochastic
/// transition matrix.
#[derive(Debug, Clone)]
pub struct FiniteChain {
    labels: Vec<StateLabel>,
    matrix: Vec<f64>,
    truncation_note: Option<String>,
}

impl FiniteChain {
    /// Builds a chain after checking that every row is a distribution.
    pub fn new(labels: Vec<StateLabel>, matrix: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if matrix.len() != n * n {
            return Err(Error::InvalidConfig(format!(
                "transition matrix has {} entries for {} states",
                matrix.len(),
                n
            )));
        }
        for (i, row) in matrix.chunks(n).enumerate() {
            if row.iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidConfig(format!("negative entry in row {i}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidConfig(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self {
            labels,
            matrix,
            truncation_note: None,
        })
    }

    fn with_note(mut self, note: String) -> Self {
        self.truncation_note = Some(note);
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[StateLabel] {
        &self.labels
    }

    pub fn truncation_note(&self) -> Option<&str> {
        self.truncation_note.as_deref()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.matrix[i * n..(i + 1) * n]
    }

    pub fn position(&self, label: &StateLabel) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// max over rows of |sum - 1|; zero for a perfectly stochastic matrix.
    pub fn max_row_defect(&self) -> f64 {
        (0..self.len())
            .map(|i| (self.row(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    fn multiply_left(&self, v: &[f64], out: &mut [f64]) {
        let n = self.len();
        out.fill(0.0);
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let row = &self.matrix[i * n..(i + 1) * n];
            for (o, &m) in out.iter_mut().zip(row) {
                *o += vi * m;
            }
        }
    }
}

/// Index of state (lag, x) in the version-lag chains: states are ordered
/// level-major, so `pi0(lag)` sits at `2*lag` and `pi1(lag)` at `2*lag + 1`.
pub fn lag_state_index(lag: usize, x: bool) -> usize {
    2 * lag + usize::from(x)
}

fn lag_labels(i_max: usize) -> Vec<StateLabel> {
    (0..=i_max)
        .flat_map(|lag| {
            [false, true]
                .into_iter()
                .map(move |x| StateLabel::SourceLag { x, lag })
        })
        .collect()
}

/// Truncated (source state, version lag) chain for the randomized stationary
/// policy: deliveries reset the lag, undelivered source changes push it up.
/// Transitions that would overflow past `i_max` are redirected to stay at
/// level `i_max`, which keeps rows stochastic and biases retained levels by
/// at most the geometric tail.
pub fn build_via_chain(
    src: &SourceParams,
    ch: &ChannelParams,
    p_sample: f64,
    i_max: usize,
) -> Result<FiniteChain> {
    let rho = p_sample * ch.p_s();
    build_lag_chain(i_max, |x, lag, edge: &mut EdgeSink| {
        let flip = src.flip_prob(x);
        // Delivery of the (possibly fresh) state resets the lag.
        edge.add(lag_state_index(0, x), (1.0 - flip) * rho);
        edge.add(lag_state_index(0, !x), flip * rho);
        // Without delivery the lag holds or grows with the source change.
        edge.add(lag_state_index(lag, x), (1.0 - flip) * (1.0 - rho));
        edge.add(lag_state_index((lag + 1).min(i_max), !x), flip * (1.0 - rho));
    })
}

/// Truncated (source state, version lag) chain for the change-aware policy:
/// only a source change triggers a transmission, so the lag resets with
/// probability `p_s` exactly on change slots.
pub fn build_via_chain_ca(
    src: &SourceParams,
    ch: &ChannelParams,
    i_max: usize,
) -> Result<FiniteChain> {
    let p_s = ch.p_s();
    build_lag_chain(i_max, |x, lag, edge: &mut EdgeSink| {
        let flip = src.flip_prob(x);
        edge.add(lag_state_index(lag, x), 1.0 - flip);
        edge.add(lag_state_index(0, !x), flip * p_s);
        edge.add(lag_state_index((lag + 1).min(i_max), !x), flip * (1.0 - p_s));
    })
}

struct EdgeSink<'a> {
    row: &'a mut [f64],
}

impl EdgeSink<'_> {
    fn add(&mut self, to: usize, prob: f64) {
        self.row[to] += prob;
    }
}

fn build_lag_chain<F>(i_max: usize, mut edges: F) -> Result<FiniteChain>
where
    F: FnMut(bool, usize, &mut EdgeSink),
{
    if i_max < 2 {
        return Err(Error::InvalidConfig(
            "lag truncation must keep at least levels 0..=2".into(),
        ));
    }
    let labels = lag_labels(i_max);
    let n = labels.len();
    let mut matrix = vec![0.0; n * n];
    for lag in 0..=i_max {
        for x in [false, true] {
            let from = lag_state_index(lag, x);
            let mut sink = EdgeSink {
                row: &mut matrix[from * n..(from + 1) * n],
            };
            edges(x, lag, &mut sink);
        }
    }
    Ok(FiniteChain::new(labels, matrix)?.with_note(format!(
        "lag overflow at level {i_max} redirected to stay at level {i_max}"
    )))
}

/// The four joint (source, estimate, incorrect-version count) states, in the
/// order used by [`build_aoiv_chain`].
pub const AOIV_STATES: [(bool, bool, u8); 4] = [
    (false, false, 0),
    (false, true, 1),
    (true, false, 1),
    (true, true, 0),
];

/// The 4-state joint (source, estimate, incorrect-version) chain with the
/// policy's effective delivery behavior: the randomized stationary policy
/// delivers any slot with probability `p_sample * p_s`, the change-aware
/// policy delivers change slots with probability `p_s`, and the
/// semantics-aware policy delivers erroneous slots with probability `p_s`.
pub fn build_aoiv_chain(
    policy: &Policy,
    src: &SourceParams,
    ch: &ChannelParams,
) -> Result<FiniteChain> {
    let (p, q) = (src.p(), src.q());
    let labels: Vec<StateLabel> = AOIV_STATES
        .iter()
        .map(|&(x, x_hat, aoiv)| StateLabel::SourceEstimateAge { x, x_hat, aoiv })
        .collect();
    // Row order: synced-at-0, erroneous (0,1), erroneous (1,0), synced-at-1.
    let matrix: [[f64; 4]; 4] = match policy {
        Policy::RandomizedStationary { p_sample } => {
            let rho = p_sample * ch.p_s();
            joint_age_rows(p, q, rho)
        }
        Policy::SemanticsAware => joint_age_rows(p, q, ch.p_s()),
        Policy::ChangeAware => {
            let p_s = ch.p_s();
            [
                [1.0 - p, 0.0, p * (1.0 - p_s), p * p_s],
                [0.0, 1.0 - p, 0.0, p],
                [q, 0.0, 1.0 - q, 0.0],
                [q * p_s, q * (1.0 - p_s), 0.0, 1.0 - q],
            ]
        }
    };
    FiniteChain::new(labels, matrix.concat())
}

/// Rows of the joint age chain when every slot delivers independently with
/// probability `rho` (the semantics-aware case is the same chain because in
/// synced states a delivery changes nothing).
fn joint_age_rows(p: f64, q: f64, rho: f64) -> [[f64; 4]; 4] {
    [
        [1.0 - p, 0.0, p * (1.0 - rho), p * rho],
        [(1.0 - p) * rho, (1.0 - p) * (1.0 - rho), 0.0, p],
        [q, 0.0, (1.0 - q) * (1.0 - rho), (1.0 - q) * rho],
        [q * rho, q * (1.0 - rho), 0.0, 1.0 - q],
    ]
}

/// The 4-state joint (source, estimate) chain under the randomized
/// stationary policy, ordered (0,0), (0,1), (1,0), (1,1).
pub fn build_recon_chain(
    src: &SourceParams,
    ch: &ChannelParams,
    p_sample: f64,
) -> Result<FiniteChain> {
    let (p, q) = (src.p(), src.q());
    let rho = p_sample * ch.p_s();
    let labels: Vec<StateLabel> = [(false, false), (false, true), (true, false), (true, true)]
        .iter()
        .map(|&(x, x_hat)| StateLabel::SourceEstimate { x, x_hat })
        .collect();
    let matrix = [
        [1.0 - p, 0.0, p * (1.0 - rho), p * rho],
        [(1.0 - p) * rho, (1.0 - p) * (1.0 - rho), 0.0, p],
        [q, 0.0, (1.0 - q) * (1.0 - rho), (1.0 - q) * rho],
        [q * rho, q * (1.0 - rho), 0.0, 1.0 - q],
    ];
    FiniteChain::new(labels, matrix.concat())
}

/// Stationary distribution of a built chain.
///
/// Small chains are solved directly from the balance equations; truncated
/// chains by damped power iteration. Either way the result satisfies
/// `pi P = pi` with an infinity-norm residual below 1e-13.
pub fn stationary(chain: &FiniteChain) -> Result<Vec<f64>> {
    let pi = if chain.len() <= DIRECT_SOLVE_LIMIT {
        stationary_direct(chain)?
    } else {
        stationary_power(chain)?
    };
    let mut image = vec![0.0; chain.len()];
    chain.multiply_left(&pi, &mut image);
    let residual = pi
        .iter()
        .zip(&image)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if residual > 10.0 * SOLVE_RESIDUAL {
        return Err(Error::SolverStalled {
            target: SOLVE_RESIDUAL,
            achieved: residual,
        });
    }
    Ok(pi)
}

/// Gaussian elimination on the balance equations, with the normalization
/// `sum pi = 1` replacing one (redundant) balance row. A vanishing pivot
/// means the chain has no unique stationary distribution.
fn stationary_direct(chain: &FiniteChain) -> Result<Vec<f64>> {
    let n = chain.len();
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for r in 0..n - 1 {
        for c in 0..n {
            a[r * n + c] = chain.row(c)[r] - if r == c { 1.0 } else { 0.0 };
        }
    }
    for c in 0..n {
        a[(n - 1) * n + c] = 1.0;
    }
    b[n - 1] = 1.0;

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| {
                a[r1 * n + col]
                    .abs()
                    .partial_cmp(&a[r2 * n + col].abs())
                    .unwrap()
            })
            .unwrap();
        let pivot = a[pivot_row * n + col];
        if pivot.abs() < 1e-12 {
            return Err(Error::Reducible);
        }
        if pivot_row != col {
            for c in 0..n {
                a.swap(col * n + c, pivot_row * n + c);
            }
            b.swap(col, pivot_row);
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = a[r * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                a[r * n + c] -= factor * a[col * n + c];
            }
            b[r] -= factor * b[col];
        }
    }
    Ok((0..n).map(|i| b[i] / a[i * n + i]).collect())
}

/// Damped power iteration `v <- (v + vP)/2`, which shares fixed points with
/// `P` but also converges on periodic chains.
fn stationary_power(chain: &FiniteChain) -> Result<Vec<f64>> {
    let n = chain.len();
    let mut v = vec![1.0 / n as f64; n];
    let mut image = vec![0.0; n];
    let mut best = f64::INFINITY;
    for _ in 0..MAX_POWER_ITERATIONS {
        chain.multiply_left(&v, &mut image);
        let residual = v
            .iter()
            .zip(&image)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        best = best.min(residual);
        if residual < SOLVE_RESIDUAL {
            return Ok(v);
        }
        let mut mass = 0.0;
        for (vi, im) in v.iter_mut().zip(&image) {
            *vi = 0.5 * (*vi + im);
            mass += *vi;
        }
        for vi in v.iter_mut() {
            *vi /= mass;
        }
    }
    Err(Error::SolverStalled {
        target: SOLVE_RESIDUAL,
        achieved: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics;
    use crate::markov::RngHandle;

    fn src(p: f64, q: f64) -> SourceParams {
        SourceParams::new(p, q).unwrap()
    }

    fn ch(p_s: f64) -> ChannelParams {
        ChannelParams::new(p_s).unwrap()
    }

    #[test]
    fn rows_are_stochastic_for_all_builders() {
        let mut rng = RngHandle::new(3);
        for _ in 0..50 {
            let s = src(rng.uniform(), rng.uniform());
            let c = ch(rng.uniform());
            let p_sample = rng.uniform();
            let rs = Policy::randomized_stationary(p_sample).unwrap();
            for chain in [
                build_via_chain(&s, &c, p_sample, 40).unwrap(),
                build_via_chain_ca(&s, &c, 40).unwrap(),
                build_aoiv_chain(&rs, &s, &c).unwrap(),
                build_aoiv_chain(&Policy::ChangeAware, &s, &c).unwrap(),
                build_aoiv_chain(&Policy::SemanticsAware, &s, &c).unwrap(),
                build_recon_chain(&s, &c, p_sample).unwrap(),
            ] {
                assert!(chain.max_row_defect() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_chain_reported_reducible() {
        let labels = vec![
            StateLabel::SourceEstimate {
                x: false,
                x_hat: false,
            },
            StateLabel::SourceEstimate {
                x: true,
                x_hat: true,
            },
        ];
        let chain = FiniteChain::new(labels, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(stationary(&chain), Err(Error::Reducible));
    }

    #[test]
    fn two_state_source_chain_stationary() {
        let labels = vec![
            StateLabel::SourceEstimate {
                x: false,
                x_hat: false,
            },
            StateLabel::SourceEstimate {
                x: true,
                x_hat: true,
            },
        ];
        let chain = FiniteChain::new(labels, vec![0.9, 0.1, 0.4, 0.6]).unwrap();
        let pi = stationary(&chain).unwrap();
        assert!((pi[0] - 0.8).abs() < 1e-13);
        assert!((pi[1] - 0.2).abs() < 1e-13);
    }

    #[test]
    fn via_chain_matches_closed_form() {
        let s = src(0.3, 0.3);
        let c = ch(0.8);
        let chain = build_via_chain(&s, &c, 0.5, 200).unwrap();
        let pi = stationary(&chain).unwrap();
        let table = analytics::via_stationary_rs(&s, &c, 0.5, 200).unwrap();
        for lag in 0..=50 {
            assert!(
                (pi[lag_state_index(lag, false)] - table.pi0(lag)).abs() < 1e-9,
                "pi0 lag {lag}"
            );
            assert!(
                (pi[lag_state_index(lag, true)] - table.pi1(lag)).abs() < 1e-9,
                "pi1 lag {lag}"
            );
        }
    }

    #[test]
    fn via_chain_perfect_delivery_concentrates_at_zero() {
        let chain = build_via_chain(&src(0.3, 0.4), &ch(1.0), 1.0, 20).unwrap();
        let pi = stationary(&chain).unwrap();
        let level0 = pi[lag_state_index(0, false)] + pi[lag_state_index(0, true)];
        assert!((level0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn via_chain_ca_matches_closed_form() {
        let s = src(0.1, 0.4);
        let c = ch(0.8);
        let chain = build_via_chain_ca(&s, &c, 200).unwrap();
        let pi = stationary(&chain).unwrap();
        let table = analytics::via_stationary_ca(&s, &c, 200).unwrap();
        for lag in 0..=50 {
            assert!((pi[lag_state_index(lag, false)] - table.pi0(lag)).abs() < 1e-9);
            assert!((pi[lag_state_index(lag, true)] - table.pi1(lag)).abs() < 1e-9);
        }
    }

    #[test]
    fn truncation_is_robust() {
        let s = src(0.3, 0.3);
        let c = ch(0.8);
        let pi_small = stationary(&build_via_chain(&s, &c, 0.5, 100).unwrap()).unwrap();
        let pi_large = stationary(&build_via_chain(&s, &c, 0.5, 200).unwrap()).unwrap();
        for lag in 0..=50 {
            for x in [false, true] {
                let idx = lag_state_index(lag, x);
                assert!((pi_small[idx] - pi_large[idx]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn aoiv_chain_matches_closed_tables() {
        let s = src(0.3, 0.3);
        let c = ch(0.8);
        for policy in [
            Policy::randomized_stationary(0.5).unwrap(),
            Policy::ChangeAware,
            Policy::SemanticsAware,
        ] {
            let chain = build_aoiv_chain(&policy, &s, &c).unwrap();
            let pi = stationary(&chain).unwrap();
            let table = analytics::aoiv_stationary(&policy, &s, &c).unwrap();
            for (idx, &(x, x_hat, aoiv)) in AOIV_STATES.iter().enumerate() {
                assert!(
                    (pi[idx] - table.get(x, x_hat, aoiv)).abs() < 1e-12,
                    "{policy:?} state {idx}"
                );
            }
        }
    }

    #[test]
    fn recon_chain_matches_closed_table() {
        let s = src(0.3, 0.3);
        let c = ch(0.8);
        let chain = build_recon_chain(&s, &c, 0.5).unwrap();
        let pi = stationary(&chain).unwrap();
        let table = analytics::joint_recon_stationary_rs(&s, &c, 0.5).unwrap();
        let states = [(false, false), (false, true), (true, false), (true, true)];
        for (idx, &(x, x_hat)) in states.iter().enumerate() {
            assert!((pi[idx] - table.get(x, x_hat)).abs() < 1e-12);
        }
        // Symmetric parameters put equal mass on the two synced corners.
        assert!((pi[0] - pi[3]).abs() < 1e-12);
    }

    #[test]
    fn recon_chain_perfect_delivery() {
        let chain = build_recon_chain(&src(0.3, 0.4), &ch(1.0), 1.0).unwrap();
        let pi = stationary(&chain).unwrap();
        assert!(pi[1].abs() < 1e-15);
        assert!(pi[2].abs() < 1e-15);
    }

    #[test]
    fn solver_residuals_are_tight() {
        let s = src(0.2, 0.45);
        let c = ch(0.6);
        for chain in [
            build_via_chain(&s, &c, 0.7, 150).unwrap(),
            build_recon_chain(&s, &c, 0.7).unwrap(),
        ] {
            let pi = stationary(&chain).unwrap();
            let mut image = vec![0.0; chain.len()];
            chain.multiply_left(&pi, &mut image);
            let residual = pi
                .iter()
                .zip(&image)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(residual < 1e-12, "residual {residual}");
        }
    }
}
