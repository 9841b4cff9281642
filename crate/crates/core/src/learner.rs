//! Desk-scale Q-learning: tabular over hashed full states and linear over
//! downsampled observation features, with epsilon-greedy behavior.

use std::collections::HashMap;
use std::fmt;

use crate::auxgen::{downsample, AuxRewardFn, FEATURE_DIM};
use crate::ca::Board;
use crate::env::{Action, Curriculum, EnvState, GenError, ACTIONS, N_ACTIONS};
use crate::rng::RngStream;

pub type StateKey = u64;

/// State representation fed to a Q-function. The tabular kind consumes
/// digests; the linear kind consumes feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum QState {
    Key(StateKey),
    Features(Vec<f64>),
}

/// How environment states map to [`QState`]s.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateMap {
    /// Digest of (board, agent position, goal flag); keeps small boards
    /// Markov.
    Digest,
    /// Downsampled egocentric observation features.
    Downsample,
    /// Digest of per-block, per-channel cell counts of the pooled
    /// observation: a coarse observation class. Being observation-derived it
    /// collapses board microstates the window renders identically, which
    /// keeps tabular auxiliary Q-functions dense enough to converge, while
    /// the color channels stay separate so persistent pattern changes never
    /// alias against transient litter.
    ObsClass,
}

impl StateMap {
    pub fn encode(&self, state: &EnvState) -> QState {
        match self {
            StateMap::Digest => QState::Key(state.state_key()),
            StateMap::Downsample => QState::Features(downsample(&state.observe())),
            StateMap::ObsClass => QState::Key(obs_class_key(&state.observe())),
        }
    }
}

/// Hash of exact per-block cell-channel counts over the 5x5 pooled grid.
fn obs_class_key(obs: &crate::env::Observation) -> StateKey {
    use crate::ca::{CellColor, CellKind};
    const POOL: usize = 5;
    const CHANNELS: usize = 10;
    let blocks = crate::env::OBS_SIDE / POOL;
    let mut counts = vec![0u8; blocks * blocks * CHANNELS];
    for wy in 0..crate::env::OBS_SIDE {
        for wx in 0..crate::env::OBS_SIDE {
            let cell = obs.get(wx, wy).cell;
            let channel = match (cell.kind, cell.color) {
                (CellKind::Empty, _) => continue,
                (CellKind::Wall, _) => 0,
                (CellKind::Crate, _) => 1,
                (CellKind::Tree, _) => 2,
                (CellKind::Spawner, _) => 3,
                (CellKind::Goal, _) => 4,
                (CellKind::Life, CellColor::Green) => 6,
                (CellKind::Life, CellColor::Red) => 7,
                (CellKind::Life, CellColor::Yellow) => 8,
                (CellKind::Life, _) => 5,
            };
            let block = (wy / POOL) * blocks + wx / POOL;
            counts[block * CHANNELS + channel] += 1;
        }
    }
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for c in counts {
        h ^= c as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub enum LearnerError {
    NonFiniteReward(f64),
    NonFiniteFeature,
    KindMismatch,
}

impl fmt::Display for LearnerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerError::NonFiniteReward(r) => write!(f, "non-finite reward {r}"),
            LearnerError::NonFiniteFeature => write!(f, "non-finite feature vector"),
            LearnerError::KindMismatch => {
                write!(f, "state representation does not match Q-function kind")
            }
        }
    }
}

impl std::error::Error for LearnerError {}

#[derive(Debug, Clone, PartialEq)]
enum QRepr {
    Tabular {
        table: HashMap<StateKey, [f64; N_ACTIONS]>,
        visits: HashMap<(StateKey, u8), u32>,
        q0: f64,
        visit_decay: bool,
    },
    Linear {
        /// One weight row per action over the feature vector.
        weights: Vec<Vec<f64>>,
    },
}

/// An action-value function with its own learning parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QFunction {
    repr: QRepr,
    pub gamma: f64,
    pub alpha: f64,
}

impl QFunction {
    pub fn tabular(gamma: f64, alpha: f64, q0: f64, visit_decay: bool) -> QFunction {
        QFunction {
            repr: QRepr::Tabular {
                table: HashMap::new(),
                visits: HashMap::new(),
                q0,
                visit_decay,
            },
            gamma,
            alpha,
        }
    }

    pub fn linear(dim: usize, gamma: f64, alpha: f64) -> QFunction {
        QFunction {
            repr: QRepr::Linear { weights: vec![vec![0.0; dim]; N_ACTIONS] },
            gamma,
            alpha,
        }
    }

    pub fn is_tabular(&self) -> bool {
        matches!(self.repr, QRepr::Tabular { .. })
    }

    pub fn n_entries(&self) -> usize {
        match &self.repr {
            QRepr::Tabular { table, .. } => table.len(),
            QRepr::Linear { weights } => weights.iter().map(|w| w.len()).sum(),
        }
    }

    /// Sorted (key, values) rows of a tabular function.
    pub fn tabular_rows(&self) -> Option<Vec<(StateKey, [f64; N_ACTIONS])>> {
        match &self.repr {
            QRepr::Tabular { table, .. } => {
                let mut rows: Vec<_> = table.iter().map(|(&k, &v)| (k, v)).collect();
                rows.sort_by_key(|&(k, _)| k);
                Some(rows)
            }
            QRepr::Linear { .. } => None,
        }
    }

    pub fn tabular_default(&self) -> Option<(f64, bool)> {
        match &self.repr {
            QRepr::Tabular { q0, visit_decay, .. } => Some((*q0, *visit_decay)),
            QRepr::Linear { .. } => None,
        }
    }

    pub fn linear_weights(&self) -> Option<&Vec<Vec<f64>>> {
        match &self.repr {
            QRepr::Linear { weights } => Some(weights),
            QRepr::Tabular { .. } => None,
        }
    }

    pub(crate) fn insert_tabular_row(&mut self, key: StateKey, values: [f64; N_ACTIONS]) {
        if let QRepr::Tabular { table, .. } = &mut self.repr {
            table.insert(key, values);
        }
    }

    pub(crate) fn set_linear_weights(&mut self, weights: Vec<Vec<f64>>) {
        self.repr = QRepr::Linear { weights };
    }

    pub fn action_values(&self, s: &QState) -> [f64; N_ACTIONS] {
        match (&self.repr, s) {
            (QRepr::Tabular { table, q0, .. }, QState::Key(k)) => {
                table.get(k).copied().unwrap_or([*q0; N_ACTIONS])
            }
            (QRepr::Linear { weights }, QState::Features(x)) => {
                let mut out = [0.0; N_ACTIONS];
                for (o, row) in out.iter_mut().zip(weights) {
                    *o = row.iter().zip(x).map(|(w, xi)| w * xi).sum();
                }
                out
            }
            _ => panic!("{}", LearnerError::KindMismatch),
        }
    }

    pub fn q_value(&self, s: &QState, a: Action) -> f64 {
        self.action_values(s)[a.index()]
    }

    pub fn max_value(&self, s: &QState) -> f64 {
        self.action_values(s).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Deterministic greedy action: the lowest-index maximizer.
    pub fn greedy(&self, s: &QState) -> Action {
        let values = self.action_values(s);
        let mut best = 0;
        for i in 1..N_ACTIONS {
            if values[i] > values[best] {
                best = i;
            }
        }
        ACTIONS[best]
    }

    /// One Q-learning backup:
    /// `Q(s,a) += alpha_eff * (r + gamma * max_a' Q(s',a') - Q(s,a))`,
    /// with the bootstrap dropped on terminal transitions. The linear kind
    /// takes the equivalent gradient step. Tabular step sizes decay as
    /// `alpha / sqrt(visits)` when configured.
    pub fn update(
        &mut self,
        s: &QState,
        a: Action,
        r: f64,
        next: &QState,
        done: bool,
    ) -> Result<(), LearnerError> {
        if !r.is_finite() {
            return Err(LearnerError::NonFiniteReward(r));
        }
        let target = if done { r } else { r + self.gamma * self.max_value(next) };
        let alpha = self.alpha;
        match (&mut self.repr, s) {
            (QRepr::Tabular { table, visits, q0, visit_decay }, QState::Key(k)) => {
                let row = table.entry(*k).or_insert([*q0; N_ACTIONS]);
                let n = visits.entry((*k, a.index() as u8)).or_insert(0);
                *n += 1;
                let alpha_eff =
                    if *visit_decay { alpha / (*n as f64).sqrt() } else { alpha };
                row[a.index()] += alpha_eff * (target - row[a.index()]);
                Ok(())
            }
            (QRepr::Linear { weights }, QState::Features(x)) => {
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(LearnerError::NonFiniteFeature);
                }
                let prediction: f64 =
                    weights[a.index()].iter().zip(x).map(|(w, xi)| w * xi).sum();
                let err = target - prediction;
                for (w, xi) in weights[a.index()].iter_mut().zip(x) {
                    *w += alpha * err * xi;
                }
                Ok(())
            }
            _ => Err(LearnerError::KindMismatch),
        }
    }
}

/// Linear epsilon schedule, annealed over the first `anneal_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_steps: u64,
}

impl EpsSchedule {
    pub fn at(&self, step: u64) -> f64 {
        if self.anneal_steps == 0 || step >= self.anneal_steps {
            return self.end;
        }
        let t = step as f64 / self.anneal_steps as f64;
        self.start + (self.end - self.start) * t
    }
}

impl Default for EpsSchedule {
    fn default() -> Self {
        EpsSchedule { start: 1.0, end: 0.05, anneal_steps: 100_000 }
    }
}

/// Epsilon-greedy draw: with probability `eps` a uniform action, otherwise a
/// uniform pick among the exact maximizers.
pub fn epsilon_greedy(q: &QFunction, s: &QState, eps: f64, rng: &mut RngStream) -> Action {
    if rng.chance(eps) {
        return ACTIONS[rng.range(N_ACTIONS as u64) as usize];
    }
    let values = q.action_values(s);
    let best = values.into_iter().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..N_ACTIONS).filter(|&i| values[i] == best).collect();
    if tied.len() == 1 {
        ACTIONS[tied[0]]
    } else {
        ACTIONS[tied[rng.range(tied.len() as u64) as usize]]
    }
}

/// Per-step reward context. `global_step` counts steps within the current
/// training run.
#[derive(Debug, Clone, Copy)]
pub struct StepCtx {
    pub global_step: u64,
}

/// What a reward function reports for one transition.
#[derive(Debug, Clone, Copy, Default)]
pub struct RewardSignal {
    pub total: f64,
    /// Magnitude subtracted from the primary reward (zero for plain).
    pub penalty: f64,
    pub lambda: f64,
}

/// A reward signal over transitions; implementations may keep per-episode
/// state via `on_episode_start`.
pub trait RewardFn {
    fn on_episode_start(&mut self, _initial: &EnvState) {}
    fn eval(
        &mut self,
        ctx: StepCtx,
        prev: &EnvState,
        action: Action,
        next: &EnvState,
        primary: f64,
    ) -> RewardSignal;
}

/// The task's own reward, unchanged.
pub struct PrimaryReward;

impl RewardFn for PrimaryReward {
    fn eval(
        &mut self,
        _ctx: StepCtx,
        _prev: &EnvState,
        _action: Action,
        _next: &EnvState,
        primary: f64,
    ) -> RewardSignal {
        RewardSignal { total: primary, penalty: 0.0, lambda: 0.0 }
    }
}

/// An auxiliary reward, evaluated at the state where the action is taken.
pub struct AuxReward {
    pub func: AuxRewardFn,
}

impl RewardFn for AuxReward {
    fn eval(
        &mut self,
        _ctx: StepCtx,
        prev: &EnvState,
        _action: Action,
        _next: &EnvState,
        _primary: f64,
    ) -> RewardSignal {
        RewardSignal { total: self.func.reward(&prev.observe()), penalty: 0.0, lambda: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QKind {
    Tabular { visit_decay: bool },
    Linear,
}

/// Q-learning configuration shared by all training phases.
#[derive(Debug, Clone, PartialEq)]
pub struct QConfig {
    pub kind: QKind,
    pub gamma: f64,
    pub alpha: f64,
    pub q0: f64,
    pub eps: EpsSchedule,
    pub state_map: StateMap,
}

impl Default for QConfig {
    fn default() -> Self {
        QConfig {
            kind: QKind::Tabular { visit_decay: true },
            gamma: 0.97,
            alpha: 0.1,
            q0: 0.0,
            eps: EpsSchedule::default(),
            state_map: StateMap::Digest,
        }
    }
}

impl QConfig {
    pub fn build(&self) -> QFunction {
        match self.kind {
            QKind::Tabular { visit_decay } => {
                QFunction::tabular(self.gamma, self.alpha, self.q0, visit_decay)
            }
            QKind::Linear => QFunction::linear(FEATURE_DIM, self.gamma, self.alpha),
        }
    }

    /// Same configuration with epsilon annealed over the first half of a
    /// phase of the given length.
    pub fn with_anneal_over(&self, steps: u64) -> QConfig {
        let mut cfg = self.clone();
        cfg.eps.anneal_steps = steps / 2;
        cfg
    }
}

/// Everything recorded about one completed training episode.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub episode: u64,
    /// Global step count after the episode's last transition.
    pub end_step: u64,
    pub primary_return: f64,
    pub shaped_return: f64,
    pub length: u32,
    pub mean_penalty: f64,
    pub lambda_end: f64,
    pub initial_board: Board,
    pub final_board: Board,
    /// Counterfactual stream seed for this episode's side-effect score.
    pub episode_index_seed: u64,
}

#[derive(Debug)]
pub enum TrainError {
    Gen(GenError),
    Learner(LearnerError),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Gen(e) => write!(f, "{e}"),
            TrainError::Learner(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for TrainError {}

impl From<GenError> for TrainError {
    fn from(e: GenError) -> Self {
        TrainError::Gen(e)
    }
}

impl From<LearnerError> for TrainError {
    fn from(e: LearnerError) -> Self {
        TrainError::Learner(e)
    }
}

/// Runs epsilon-greedy episodes over the curriculum for exactly `steps`
/// transitions, applying a Q backup on each. Completed episodes are reported
/// through `on_episode`; an episode cut off by the budget is not.
pub fn train_q(
    curriculum: &Curriculum,
    reward: &mut dyn RewardFn,
    steps: u64,
    cfg: &QConfig,
    rng: &mut RngStream,
    mut on_episode: impl FnMut(&EpisodeRecord),
) -> Result<QFunction, TrainError> {
    let mut q = cfg.build();
    let mut global: u64 = 0;
    let mut episode: u64 = 0;

    'training: while global < steps {
        let start = curriculum.env_for_episode(episode)?;
        reward.on_episode_start(&start);
        let initial_board = start.board.clone();
        let mut state = start;
        let mut qs = cfg.state_map.encode(&state);
        let mut primary_return = 0.0;
        let mut shaped_return = 0.0;
        let mut penalty_sum = 0.0;
        let mut length: u32 = 0;

        loop {
            if global >= steps {
                break 'training;
            }
            let eps = cfg.eps.at(global);
            let action = epsilon_greedy(&q, &qs, eps, rng);
            let (next, primary, done) =
                state.apply_action(action).expect("unfinished episode");
            let signal =
                reward.eval(StepCtx { global_step: global }, &state, action, &next, primary);
            let next_qs = cfg.state_map.encode(&next);
            q.update(&qs, action, signal.total, &next_qs, done)?;

            global += 1;
            length += 1;
            primary_return += primary;
            shaped_return += signal.total;
            penalty_sum += signal.penalty;
            state = next;
            qs = next_qs;

            if done {
                on_episode(&EpisodeRecord {
                    episode,
                    end_step: global,
                    primary_return,
                    shaped_return,
                    length,
                    mean_penalty: penalty_sum / length as f64,
                    lambda_end: signal.lambda,
                    initial_board: initial_board.clone(),
                    final_board: state.board.clone(),
                    episode_index_seed: episode,
                });
                episode += 1;
                break;
            }
        }
    }
    Ok(q)
}

/// A deterministic greedy evaluation rollout.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub actions: Vec<Action>,
    pub primary_return: f64,
    pub length: u32,
    pub reached_goal: bool,
    pub final_state: EnvState,
    /// Fraction of visited states where the greedy choice was no-op.
    pub noop_fraction: f64,
}

/// Rolls the greedy policy out from `start` until termination, with
/// epsilon 0 and seeded tie-breaking.
pub fn greedy_rollout(
    q: &QFunction,
    state_map: &StateMap,
    start: EnvState,
    rng: &mut RngStream,
) -> Rollout {
    let mut state = start;
    let mut actions = Vec::new();
    let mut primary_return = 0.0;
    let mut noop_states = 0u32;
    let mut length = 0u32;
    while !state.finished {
        let qs = state_map.encode(&state);
        if q.greedy(&qs) == Action::NoOp {
            noop_states += 1;
        }
        let action = epsilon_greedy(q, &qs, 0.0, rng);
        let (next, r, _) = state.apply_action(action).expect("unfinished episode");
        actions.push(action);
        primary_return += r;
        length += 1;
        state = next;
    }
    Rollout {
        actions,
        primary_return,
        reached_goal: state.on_goal(),
        noop_fraction: if length == 0 { 1.0 } else { noop_states as f64 / length as f64 },
        length,
        final_state: state,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(k: u64) -> QState {
        QState::Key(k)
    }

    #[test]
    fn terminal_backup_with_unit_alpha_sets_reward() {
        let mut q = QFunction::tabular(0.9, 1.0, 0.0, false);
        q.update(&key(1), Action::MoveE, 1.0, &key(2), true).unwrap();
        assert_eq!(q.q_value(&key(1), Action::MoveE), 1.0);
    }

    #[test]
    fn zero_rewards_leave_q_at_zero() {
        let mut q = QFunction::tabular(0.9, 0.5, 0.0, false);
        for k in 0..50u64 {
            q.update(&key(k), Action::MoveN, 0.0, &key(k + 1), false).unwrap();
        }
        for k in 0..50u64 {
            assert_eq!(q.action_values(&key(k)), [0.0; N_ACTIONS]);
        }
    }

    #[test]
    fn update_is_fixed_point_at_target() {
        let mut q = QFunction::tabular(0.5, 0.7, 0.0, false);
        // Set Q(s,a) = 2.0 via a terminal update with alpha... build state:
        q.update(&key(7), Action::NoOp, 2.0, &key(8), true).unwrap();
        q.update(&key(7), Action::NoOp, 2.0, &key(8), true).unwrap();
        let before = q.q_value(&key(7), Action::NoOp);
        // Target equals current value: r + gamma*max(next)=2.0 when next has
        // value 0 and r=2.0 terminal.
        q.update(&key(7), Action::NoOp, before, &key(8), true).unwrap();
        assert_eq!(q.q_value(&key(7), Action::NoOp), before);
    }

    #[test]
    fn two_state_chain_converges_to_discounted_values() {
        // s0 --toward--> s1 (terminal, r=1). gamma 0.5, alpha 1: exact.
        let mut q = QFunction::tabular(0.5, 1.0, 0.0, false);
        for _ in 0..10 {
            q.update(&key(0), Action::MoveE, 0.0, &key(1), false).unwrap();
            q.update(&key(1), Action::MoveE, 1.0, &key(2), true).unwrap();
        }
        assert_eq!(q.q_value(&key(1), Action::MoveE), 1.0);
        assert_eq!(q.q_value(&key(0), Action::MoveE), 0.5);
    }

    #[test]
    fn non_finite_rewards_are_contract_errors() {
        let mut q = QFunction::tabular(0.9, 0.1, 0.0, false);
        assert!(matches!(
            q.update(&key(0), Action::NoOp, f64::NAN, &key(1), false),
            Err(LearnerError::NonFiniteReward(_))
        ));
        let mut lin = QFunction::linear(2, 0.9, 0.1);
        let bad = QState::Features(vec![f64::INFINITY, 0.0]);
        assert!(matches!(
            lin.update(&bad, Action::NoOp, 0.5, &bad, true),
            Err(LearnerError::NonFiniteFeature)
        ));
    }

    #[test]
    fn epsilon_one_is_uniform_within_three_sigma() {
        let q = QFunction::tabular(0.9, 0.1, 0.0, false);
        let mut rng = RngStream::from_seed(2);
        let n = 10_000;
        let mut counts = [0u32; N_ACTIONS];
        for _ in 0..n {
            counts[epsilon_greedy(&q, &key(1), 1.0, &mut rng).index()] += 1;
        }
        let p = 1.0 / N_ACTIONS as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "counts {counts:?}");
        }
    }

    #[test]
    fn epsilon_zero_takes_unique_maximizer() {
        let mut q = QFunction::tabular(0.9, 1.0, 0.0, false);
        q.update(&key(3), Action::MoveW, 2.0, &key(4), true).unwrap();
        let mut rng = RngStream::from_seed(4);
        for _ in 0..100 {
            assert_eq!(epsilon_greedy(&q, &key(3), 0.0, &mut rng), Action::MoveW);
        }
    }

    #[test]
    fn all_equal_values_tie_break_uniformly() {
        let q = QFunction::tabular(0.9, 0.1, 0.0, false);
        let mut rng = RngStream::from_seed(6);
        let n = 10_000;
        let mut counts = [0u32; N_ACTIONS];
        for _ in 0..n {
            counts[epsilon_greedy(&q, &key(1), 0.0, &mut rng).index()] += 1;
        }
        let p = 1.0 / N_ACTIONS as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "counts {counts:?}");
        }
    }

    #[test]
    fn linear_matches_tabular_on_one_hot_features() {
        // Four states as one-hot features; identical update sequences must
        // produce identical values (constant alpha, no visit decay).
        let mut tab = QFunction::tabular(0.8, 0.3, 0.0, false);
        let mut lin = QFunction::linear(4, 0.8, 0.3);
        let one_hot = |i: usize| {
            let mut x = vec![0.0; 4];
            x[i] = 1.0;
            QState::Features(x)
        };
        let mut rng = RngStream::from_seed(12);
        for t in 0..500 {
            let s = (t % 4) as usize;
            let sn = rng.range(4) as usize;
            let a = ACTIONS[rng.range(9) as usize];
            let r = rng.next_f64() - 0.3;
            let done = t % 7 == 0;
            tab.update(&key(s as u64), a, r, &key(sn as u64), done).unwrap();
            lin.update(&one_hot(s), a, r, &one_hot(sn), done).unwrap();
        }
        for s in 0..4 {
            let tv = tab.action_values(&key(s as u64));
            let lv = lin.action_values(&one_hot(s));
            for a in 0..N_ACTIONS {
                assert!((tv[a] - lv[a]).abs() < 1e-12, "state {s} action {a}");
            }
        }
    }

    #[test]
    fn epsilon_schedule_is_clamped_linear() {
        let eps = EpsSchedule { start: 1.0, end: 0.1, anneal_steps: 100 };
        assert_eq!(eps.at(0), 1.0);
        assert!((eps.at(50) - 0.55).abs() < 1e-12);
        assert_eq!(eps.at(100), 0.1);
        assert_eq!(eps.at(10_000), 0.1);
    }
}
