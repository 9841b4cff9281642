//! Exact machinery for small MDPs: value iteration, probability-1
//! reachability on deterministic transition graphs, and a sampling verifier
//! for the communicability bound
//! `max_R |V*_R(s) - V*_R(s')| <= (1 - gamma^max(k1,k2)) / (1 - gamma)`
//! over reward functions in `[0,1]^S`.
//!
//! Rewards are per-state and collected at the current state:
//! `V(s) = r(s) + gamma * max_a E[V(s')]`.

use std::collections::VecDeque;
use std::fmt;

use crate::rng::RngStream;

pub const MAX_EXACT_STATES: usize = 10_000;
const DIST_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum MdpError {
    InvalidDistribution { state: usize, action: usize, sum: f64 },
    TooManyStates(usize),
    InvalidGamma(f64),
    StochasticUnsupported,
}

impl fmt::Display for MdpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MdpError::InvalidDistribution { state, action, sum } => {
                write!(f, "T({state},{action}) sums to {sum}, not 1")
            }
            MdpError::TooManyStates(n) => write!(f, "{n} states exceeds {MAX_EXACT_STATES}"),
            MdpError::InvalidGamma(g) => write!(f, "gamma {g} outside [0,1)"),
            MdpError::StochasticUnsupported => {
                write!(f, "operation requires a deterministic MDP")
            }
        }
    }
}

impl std::error::Error for MdpError {}

/// Finite MDP with sparse transition rows.
#[derive(Debug, Clone)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    /// `trans[s * n_actions + a]` lists `(next_state, probability)`.
    trans: Vec<Vec<(usize, f64)>>,
}

impl FiniteMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        trans: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self, MdpError> {
        if n_states > MAX_EXACT_STATES {
            return Err(MdpError::TooManyStates(n_states));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(MdpError::InvalidGamma(gamma));
        }
        assert_eq!(trans.len(), n_states * n_actions);
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &trans[s * n_actions + a];
                let sum: f64 = row.iter().map(|&(_, p)| p).sum();
                if (sum - 1.0).abs() > DIST_TOLERANCE
                    || row.iter().any(|&(t, p)| t >= n_states || p < 0.0)
                {
                    return Err(MdpError::InvalidDistribution { state: s, action: a, sum });
                }
            }
        }
        Ok(FiniteMdp { n_states, n_actions, gamma, trans })
    }

    /// Deterministic MDP from a successor table `next[s][a]`.
    pub fn deterministic(next: &[Vec<usize>], gamma: f64) -> Result<Self, MdpError> {
        let n_states = next.len();
        let n_actions = next.first().map_or(0, |r| r.len());
        let mut trans = Vec::with_capacity(n_states * n_actions);
        for row in next {
            assert_eq!(row.len(), n_actions);
            for &t in row {
                trans.push(vec![(t, 1.0)]);
            }
        }
        Self::new(n_states, n_actions, gamma, trans)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn transitions(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.trans[s * self.n_actions + a]
    }

    /// Every transition row a point mass.
    pub fn is_deterministic(&self) -> bool {
        self.trans.iter().all(|row| row.len() == 1 && row[0].1 == 1.0)
    }
}

/// Fixed point of the Bellman optimality operator for per-state rewards, to
/// within `tol` in sup-norm. Stops once the sweep residual drops below
/// `tol * (1 - gamma) / gamma`.
pub fn value_iteration(mdp: &FiniteMdp, rewards: &[f64], tol: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), mdp.n_states);
    assert!(tol > 0.0);
    let gamma = mdp.gamma;
    let stop = if gamma > 0.0 { tol * (1.0 - gamma) / gamma } else { f64::INFINITY };
    let mut v = vec![0.0f64; mdp.n_states];
    let mut next = vec![0.0f64; mdp.n_states];
    loop {
        let mut residual = 0.0f64;
        for s in 0..mdp.n_states {
            let mut best = f64::NEG_INFINITY;
            for a in 0..mdp.n_actions {
                let mut exp = 0.0;
                for &(t, p) in mdp.transitions(s, a) {
                    exp += p * v[t];
                }
                if exp > best {
                    best = exp;
                }
            }
            next[s] = rewards[s] + gamma * best;
            residual = residual.max((next[s] - v[s]).abs());
        }
        std::mem::swap(&mut v, &mut next);
        if residual <= stop {
            return v;
        }
    }
}

/// Greedy action-value table `Q(s,a) = r(s) + gamma * E[V(s')]` from a value
/// function, for comparing against learned Q tables.
pub fn q_from_values(mdp: &FiniteMdp, rewards: &[f64], v: &[f64]) -> Vec<Vec<f64>> {
    (0..mdp.n_states)
        .map(|s| {
            (0..mdp.n_actions)
                .map(|a| {
                    let exp: f64 =
                        mdp.transitions(s, a).iter().map(|&(t, p)| p * v[t]).sum();
                    rewards[s] + mdp.gamma * exp
                })
                .collect()
        })
        .collect()
}

/// Fewest steps in which `from` reaches `to` with probability 1, or `None`
/// when unreachable. Only defined for deterministic MDPs, where this is BFS
/// distance over the transition graph.
pub fn prob1_reach_steps(
    mdp: &FiniteMdp,
    from: usize,
    to: usize,
) -> Result<Option<usize>, MdpError> {
    if !mdp.is_deterministic() {
        return Err(MdpError::StochasticUnsupported);
    }
    Ok(bfs_distances(mdp, from)[to])
}

fn bfs_distances(mdp: &FiniteMdp, from: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; mdp.n_states];
    dist[from] = Some(0);
    let mut queue = VecDeque::from([from]);
    while let Some(s) = queue.pop_front() {
        let d = dist[s].unwrap();
        for a in 0..mdp.n_actions {
            let t = mdp.transitions(s, a)[0].0;
            if dist[t].is_none() {
                dist[t] = Some(d + 1);
                queue.push_back(t);
            }
        }
    }
    dist
}

/// One mutually-reachable state pair checked by the verifier.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCheck {
    pub s: usize,
    pub s_other: usize,
    pub k1: usize,
    pub k2: usize,
    pub bound: f64,
    /// Largest `|V*(s) - V*(s')|` observed across sampled rewards.
    pub max_gap: f64,
}

#[derive(Debug, Clone)]
pub struct Prop1Report {
    pub gamma: f64,
    pub n_reward_samples: usize,
    pub pairs: Vec<PairCheck>,
    /// Pairs whose observed gap exceeded the bound plus tolerance.
    pub violations: Vec<PairCheck>,
}

impl Prop1Report {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Samples rewards uniformly from `[0,1]^S` (plus the indicator reward of
/// every state, which realizes the extremal geometric structure), computes
/// optimal values exactly, and checks the communicability bound for every
/// mutually reachable pair. Also checks the strict outer bound
/// `1 / (1 - gamma)`.
pub fn check_prop1(
    mdp: &FiniteMdp,
    n_reward_samples: usize,
    rng: &mut RngStream,
    tol: f64,
) -> Result<Prop1Report, MdpError> {
    if !mdp.is_deterministic() {
        return Err(MdpError::StochasticUnsupported);
    }
    assert!(n_reward_samples >= 1);
    let n = mdp.n_states;
    let gamma = mdp.gamma;
    let dist: Vec<Vec<Option<usize>>> = (0..n).map(|s| bfs_distances(mdp, s)).collect();

    let mut pairs: Vec<PairCheck> = Vec::new();
    for s in 0..n {
        for t in (s + 1)..n {
            if let (Some(k1), Some(k2)) = (dist[s][t], dist[t][s]) {
                let k = k1.max(k2) as i32;
                let bound = (1.0 - gamma.powi(k)) / (1.0 - gamma);
                pairs.push(PairCheck { s, s_other: t, k1, k2, bound, max_gap: 0.0 });
            }
        }
    }

    let outer = 1.0 / (1.0 - gamma);
    let check_reward = |pairs: &mut Vec<PairCheck>, rewards: &[f64]| {
        let v = value_iteration(mdp, rewards, tol.min(1e-9));
        for pair in pairs.iter_mut() {
            let gap = (v[pair.s] - v[pair.s_other]).abs();
            if gap > pair.max_gap {
                pair.max_gap = gap;
            }
            debug_assert!(gap < outer + tol, "strict outer bound breached");
        }
    };

    for _ in 0..n_reward_samples {
        let rewards: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
        check_reward(&mut pairs, &rewards);
    }
    // Adversarial indicator rewards r = 1_{u}.
    for u in 0..n {
        let mut rewards = vec![0.0; n];
        rewards[u] = 1.0;
        check_reward(&mut pairs, &rewards);
    }

    let violations =
        pairs.iter().filter(|p| p.max_gap > p.bound + tol).cloned().collect();
    Ok(Prop1Report { gamma, n_reward_samples, pairs, violations })
}

/// Uniformly random deterministic MDP, used by the verifier's callers.
pub fn random_deterministic_mdp(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    rng: &mut RngStream,
) -> FiniteMdp {
    let next: Vec<Vec<usize>> = (0..n_states)
        .map(|_| (0..n_actions).map(|_| rng.range(n_states as u64) as usize).collect())
        .collect();
    FiniteMdp::deterministic(&next, gamma).expect("constructed rows are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_loop_value_is_geometric_series() {
        let mdp = FiniteMdp::deterministic(&[vec![0]], 0.5).unwrap();
        let v = value_iteration(&mdp, &[1.0], 1e-10);
        assert!((v[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn zero_reward_zero_value() {
        let mdp = FiniteMdp::deterministic(&[vec![1, 0], vec![0, 1]], 0.9).unwrap();
        let v = value_iteration(&mdp, &[0.0, 0.0], 1e-10);
        assert_eq!(v, vec![0.0, 0.0]);
    }

    #[test]
    fn three_state_chain_matches_hand_backups() {
        // s0 -> s1 -> s2 (absorbing), rewards (0, 0, 1), gamma 0.9.
        let mdp = FiniteMdp::deterministic(&[vec![1], vec![2], vec![2]], 0.9).unwrap();
        let v = value_iteration(&mdp, &[0.0, 0.0, 1.0], 1e-9);
        assert!((v[2] - 10.0).abs() < 1e-6);
        assert!((v[1] - 9.0).abs() < 1e-6);
        assert!((v[0] - 8.1).abs() < 1e-6);
    }

    #[test]
    fn values_bounded_for_unit_rewards() {
        let mut rng = RngStream::from_seed(5);
        for _ in 0..20 {
            let mdp = random_deterministic_mdp(8, 3, 0.9, &mut rng);
            let rewards: Vec<f64> = (0..8).map(|_| rng.next_f64()).collect();
            let v = value_iteration(&mdp, &rewards, 1e-8);
            assert!(v.iter().all(|&x| (0.0..=10.0 + 1e-6).contains(&x)));
        }
    }

    #[test]
    fn reachability_examples() {
        let mdp = FiniteMdp::deterministic(&[vec![1], vec![0]], 0.5).unwrap();
        assert_eq!(prob1_reach_steps(&mdp, 0, 0).unwrap(), Some(0));
        assert_eq!(prob1_reach_steps(&mdp, 0, 1).unwrap(), Some(1));
        assert_eq!(prob1_reach_steps(&mdp, 1, 0).unwrap(), Some(1));

        // Absorbing state 1 with no path back to 0.
        let one_way = FiniteMdp::deterministic(&[vec![1], vec![1]], 0.5).unwrap();
        assert_eq!(prob1_reach_steps(&one_way, 1, 0).unwrap(), None);
    }

    #[test]
    fn stochastic_reachability_is_unsupported() {
        let mdp = FiniteMdp::new(
            2,
            1,
            0.5,
            vec![vec![(0, 0.5), (1, 0.5)], vec![(1, 1.0)]],
        )
        .unwrap();
        assert_eq!(prob1_reach_steps(&mdp, 0, 1), Err(MdpError::StochasticUnsupported));
        let mut rng = RngStream::from_seed(1);
        assert!(check_prop1(&mdp, 1, &mut rng, 1e-6).is_err());
    }

    #[test]
    fn invalid_distribution_rejected() {
        let e = FiniteMdp::new(1, 1, 0.5, vec![vec![(0, 0.7)]]).unwrap_err();
        assert!(matches!(e, MdpError::InvalidDistribution { .. }));
    }

    #[test]
    fn two_cycle_bound_holds() {
        let mdp = FiniteMdp::deterministic(&[vec![1], vec![0]], 0.5).unwrap();
        let mut rng = RngStream::from_seed(17);
        let report = check_prop1(&mdp, 10_000, &mut rng, 1e-6).unwrap();
        assert!(report.holds());
        let pair = &report.pairs[0];
        // k1 = k2 = 1: bound (1 - 0.5) / 0.5 = 1.
        assert_eq!(pair.bound, 1.0);
        assert!(pair.max_gap <= 1.0 + 1e-6);
    }

    #[test]
    fn one_way_chain_indicator_reward_approaches_directed_bound() {
        // s0 -> s1 -> s2 -> s3 (absorbing). Indicator reward on s3 yields
        // V(s3) = 1/(1-g) and V(s0) = g^3/(1-g); the gap is exactly
        // (1 - g^3)/(1 - g).
        for gamma in [0.5, 0.9, 0.97] {
            let mdp =
                FiniteMdp::deterministic(&[vec![1], vec![2], vec![3], vec![3]], gamma).unwrap();
            let mut rewards = vec![0.0; 4];
            rewards[3] = 1.0;
            let v = value_iteration(&mdp, &rewards, 1e-9);
            let gap = (v[3] - v[0]).abs();
            let bound = (1.0 - gamma.powi(3)) / (1.0 - gamma);
            assert!(gap >= 0.95 * bound, "gamma {gamma}: gap {gap} vs bound {bound}");
            assert!(gap <= bound + 1e-6);
        }
    }

    #[test]
    fn sweep_residual_contracts_by_gamma() {
        let mut rng = RngStream::from_seed(23);
        let mdp = random_deterministic_mdp(10, 3, 0.9, &mut rng);
        let rewards: Vec<f64> = (0..10).map(|_| rng.next_f64()).collect();
        // Manual sweeps to observe the residual sequence.
        let mut v = vec![0.0f64; 10];
        let mut prev_residual = f64::INFINITY;
        for _ in 0..60 {
            let mut next = vec![0.0f64; 10];
            let mut residual = 0.0f64;
            for s in 0..10 {
                let best = (0..3)
                    .map(|a| v[mdp.transitions(s, a)[0].0])
                    .fold(f64::NEG_INFINITY, f64::max);
                next[s] = rewards[s] + 0.9 * best;
                residual = residual.max((next[s] - v[s]).abs());
            }
            v = next;
            if prev_residual.is_finite() && prev_residual > 0.0 {
                assert!(residual <= 0.9 * prev_residual + 1e-12);
            }
            prev_residual = residual;
        }
    }
}
