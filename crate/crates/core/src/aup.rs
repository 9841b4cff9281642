//! Attainable utility preservation: the penalized reward transform
//!
//! `r_aup(s,a) = r(s,a) - (lambda / |R|) * sum_i |Q_i(s,a) - Q_i(s,noop)|`,
//!
//! its linear lambda schedule, the naive state-difference baseline, and the
//! three-phase training loop (exploration buffer and encoder, auxiliary
//! Q-functions, penalized policy training with frozen auxiliaries).

use std::fmt;
use std::sync::Arc;

use crate::auxgen::{
    collect_exploration_buffer, train_encoder, AuxRewardFn, Encoder, EncoderError, EncoderKind,
};
use crate::ca::Board;
use crate::env::{Action, Curriculum, EnvState};
use crate::learner::{
    train_q, AuxReward, EpisodeRecord, QConfig, QFunction, QState, RewardFn, RewardSignal,
    StateMap, StepCtx, TrainError,
};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub enum AupError {
    NoAuxFunctions,
    InvalidConfig(String),
    BoardMismatch,
}

impl fmt::Display for AupError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AupError::NoAuxFunctions => write!(f, "penalty needs at least one auxiliary Q"),
            AupError::InvalidConfig(s) => write!(f, "invalid aup config: {s}"),
            AupError::BoardMismatch => write!(f, "boards have different dimensions"),
        }
    }
}

impl std::error::Error for AupError {}

/// Phase budgets and penalty parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AupConfig {
    pub lambda_start: f64,
    /// The ramp target, reached at the end of penalized training.
    pub lambda_final: f64,
    /// Number of auxiliary reward functions, `|R|`.
    pub n_aux: u32,
    /// Encoder latent dimension Z (ignored by the identity encoder).
    pub z_dim: usize,
    /// Phase 1: random exploration steps for the encoder buffer.
    pub explore_steps: u64,
    /// Phase 1: encoder training epochs (MLP only).
    pub encoder_epochs: u32,
    /// Phase 2: training steps per auxiliary Q-function.
    pub aux_steps: u64,
    /// Phase 3: penalized policy training steps.
    pub aup_steps: u64,
    pub encoder: EncoderKind,
    /// Discount for the auxiliary Q-functions. Short horizons converge far
    /// faster on tabular observation classes and only rescale the penalty.
    pub aux_gamma: f64,
}

impl Default for AupConfig {
    fn default() -> Self {
        AupConfig {
            lambda_start: 0.001,
            lambda_final: 0.1,
            n_aux: 1,
            z_dim: 1,
            explore_steps: 2000,
            encoder_epochs: 20,
            aux_steps: 50_000,
            aup_steps: 200_000,
            encoder: EncoderKind::LinearWhitened,
            aux_gamma: 0.97,
        }
    }
}

impl AupConfig {
    /// Random-projection condition: identity encoder over downsampled
    /// features, flat small lambda, no encoder phase.
    pub fn projection() -> Self {
        AupConfig {
            encoder: EncoderKind::Identity,
            lambda_start: 1e-3,
            lambda_final: 1e-3,
            ..AupConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), AupError> {
        if self.lambda_start < 0.0 || self.lambda_final < 0.0 {
            return Err(AupError::InvalidConfig("lambda must be nonnegative".into()));
        }
        if self.lambda_start > self.lambda_final {
            return Err(AupError::InvalidConfig(
                "lambda_start must not exceed lambda_final".into(),
            ));
        }
        if self.n_aux == 0 {
            return Err(AupError::InvalidConfig("n_aux must be at least 1".into()));
        }
        if self.z_dim == 0 {
            return Err(AupError::InvalidConfig("z_dim must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.aux_gamma) {
            return Err(AupError::InvalidConfig("aux_gamma must lie in [0,1)".into()));
        }
        Ok(())
    }
}

/// Decomposition of one penalty evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyTerm {
    /// `|Q_i(s,a) - Q_i(s,noop)|` per auxiliary function.
    pub components: Vec<f64>,
    pub mean: f64,
    /// `lambda * mean`, the amount subtracted from the primary reward.
    pub scaled: f64,
}

/// The penalized reward. The learned auxiliary Q stands in for the optimal
/// one.
pub fn aup_reward(
    r_primary: f64,
    aux_qs: &[QFunction],
    s: &QState,
    action: Action,
    lambda: f64,
) -> Result<(f64, PenaltyTerm), AupError> {
    if aux_qs.is_empty() {
        return Err(AupError::NoAuxFunctions);
    }
    let components: Vec<f64> = aux_qs
        .iter()
        .map(|q| (q.q_value(s, action) - q.q_value(s, Action::NoOp)).abs())
        .collect();
    let mean = components.iter().sum::<f64>() / components.len() as f64;
    let scaled = lambda * mean;
    Ok((r_primary - scaled, PenaltyTerm { components, mean, scaled }))
}

/// Clamped linear interpolation from `lambda_start` at `start_step` to
/// `lambda_final` at `end_step`.
pub fn lambda_schedule(
    step: u64,
    start_step: u64,
    end_step: u64,
    lambda_start: f64,
    lambda_final: f64,
) -> f64 {
    debug_assert!(start_step <= end_step);
    if step <= start_step || end_step == start_step {
        return lambda_start;
    }
    if step >= end_step {
        return lambda_final;
    }
    let t = (step - start_step) as f64 / (end_step - start_step) as f64;
    lambda_start + (lambda_final - lambda_start) * t
}

/// Count of cells whose (kind, color) differs from the initial board: the
/// unscaled L1 distance between states.
pub fn naive_penalty(state: &EnvState, initial: &EnvState) -> Result<f64, AupError> {
    board_difference(&state.board, &initial.board)
}

fn board_difference(a: &Board, b: &Board) -> Result<f64, AupError> {
    if a.dims() != b.dims() {
        return Err(AupError::BoardMismatch);
    }
    Ok(a.cells().iter().zip(b.cells()).filter(|(x, y)| x != y).count() as f64)
}

/// The naive baseline: primary reward minus the state difference from the
/// episode's initial board, applied as a per-step level (or as its per-step
/// delta behind the flag).
pub struct NaiveReward {
    pub delta_mode: bool,
    initial: Option<Board>,
}

impl NaiveReward {
    pub fn new(delta_mode: bool) -> NaiveReward {
        NaiveReward { delta_mode, initial: None }
    }
}

impl RewardFn for NaiveReward {
    fn on_episode_start(&mut self, initial: &EnvState) {
        self.initial = Some(initial.board.clone());
    }

    fn eval(
        &mut self,
        _ctx: StepCtx,
        prev: &EnvState,
        _action: Action,
        next: &EnvState,
        primary: f64,
    ) -> RewardSignal {
        let initial = self.initial.as_ref().expect("episode started");
        let level = board_difference(&next.board, initial).expect("same level dimensions");
        let penalty = if self.delta_mode {
            level - board_difference(&prev.board, initial).expect("same level dimensions")
        } else {
            level
        };
        RewardSignal { total: primary - penalty, penalty, lambda: 0.0 }
    }
}

/// Reward transform for phase 3: frozen auxiliary Q-functions and the lambda
/// ramp spanning the phase.
pub struct AupRewardFn {
    pub aux: Vec<QFunction>,
    pub state_map: StateMap,
    pub lambda_start: f64,
    pub lambda_final: f64,
    /// Step at which the ramp tops out; normally the phase length.
    pub ramp_steps: u64,
}

impl RewardFn for AupRewardFn {
    fn eval(
        &mut self,
        ctx: StepCtx,
        prev: &EnvState,
        action: Action,
        _next: &EnvState,
        primary: f64,
    ) -> RewardSignal {
        let lambda = lambda_schedule(
            ctx.global_step,
            0,
            self.ramp_steps,
            self.lambda_start,
            self.lambda_final,
        );
        let s = self.state_map.encode(prev);
        let (total, term) =
            aup_reward(primary, &self.aux, &s, action, lambda).expect("aux set not empty");
        RewardSignal { total, penalty: term.scaled, lambda }
    }
}

/// Everything produced by the phased trainer.
pub struct AupOutcome {
    pub policy: QFunction,
    pub aux: Vec<QFunction>,
    pub encoder: Arc<Encoder>,
    pub phis: Vec<Vec<f64>>,
}

#[derive(Debug)]
pub enum AupTrainError {
    Train(TrainError),
    Encoder(EncoderError),
    Config(AupError),
}

impl fmt::Display for AupTrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AupTrainError::Train(e) => write!(f, "{e}"),
            AupTrainError::Encoder(e) => write!(f, "{e}"),
            AupTrainError::Config(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for AupTrainError {}

impl From<TrainError> for AupTrainError {
    fn from(e: TrainError) -> Self {
        AupTrainError::Train(e)
    }
}
impl From<EncoderError> for AupTrainError {
    fn from(e: EncoderError) -> Self {
        AupTrainError::Encoder(e)
    }
}
impl From<AupError> for AupTrainError {
    fn from(e: AupError) -> Self {
        AupTrainError::Config(e)
    }
}

/// The full pipeline. Named streams split from `master` keep the phases
/// independent: phase 3 draws from the same `"policy"` stream a plain run
/// would use, so `lambda_final = 0` reproduces plain training bit for bit.
/// Episode records from phase 3 go to `on_episode`; the earlier phases train
/// silently.
///
/// Auxiliary Q-functions live on coarse observation classes and are trained
/// off-policy from uniform random behavior with visit-decayed step sizes:
/// the desk analogue of a smoothed value network learned from undirected
/// experience. With a one-dimensional latent the auxiliary reward is the
/// encoder output itself; for larger Z each functional is drawn from
/// `(0,1)^Z`.
pub fn train_aup(
    curriculum: &Curriculum,
    cfg: &AupConfig,
    qcfg: &QConfig,
    master: &RngStream,
    on_episode: impl FnMut(&EpisodeRecord),
) -> Result<AupOutcome, AupTrainError> {
    cfg.validate()?;

    // Phase 1: exploration buffer and encoder. The identity encoder needs
    // neither.
    let encoder = if cfg.encoder == EncoderKind::Identity {
        Arc::new(Encoder::identity(crate::auxgen::FEATURE_DIM))
    } else {
        let mut explore_rng = master.split("explore");
        let buffer = collect_exploration_buffer(curriculum, cfg.explore_steps, &mut explore_rng)
            .map_err(TrainError::Gen)?;
        let mut encoder_rng = master.split("encoder");
        Arc::new(train_encoder(
            &buffer,
            cfg.z_dim,
            cfg.encoder,
            cfg.encoder_epochs,
            &mut encoder_rng,
        )?)
    };

    // Phase 2: one Q-function per auxiliary reward.
    let aux_cfg = QConfig {
        kind: crate::learner::QKind::Tabular { visit_decay: true },
        state_map: StateMap::ObsClass,
        gamma: cfg.aux_gamma,
        alpha: qcfg.alpha,
        q0: 0.0,
        eps: crate::learner::EpsSchedule { start: 1.0, end: 1.0, anneal_steps: 0 },
    };
    let mut aux_qs = Vec::with_capacity(cfg.n_aux as usize);
    let mut phis = Vec::with_capacity(cfg.n_aux as usize);
    for i in 0..cfg.n_aux as u64 {
        let aux_fn = if encoder.latent_dim() == 1 {
            AuxRewardFn::new(encoder.clone(), vec![1.0]).expect("unit functional fits")
        } else {
            let mut phi_rng = master.split_indexed("phi", i);
            AuxRewardFn::draw(encoder.clone(), &mut phi_rng)
        };
        phis.push(aux_fn.phi.clone());
        let mut reward = AuxReward { func: aux_fn };
        let mut stream = master.split_indexed("aux", i);
        let q = train_q(curriculum, &mut reward, cfg.aux_steps, &aux_cfg, &mut stream, |_| {})?;
        aux_qs.push(q);
    }

    // Phase 3: the auxiliaries are frozen inside the reward transform.
    let mut aup_fn = AupRewardFn {
        aux: aux_qs,
        state_map: StateMap::ObsClass,
        lambda_start: cfg.lambda_start,
        lambda_final: cfg.lambda_final,
        ramp_steps: cfg.aup_steps,
    };
    let mut stream = master.split("policy");
    let policy = train_q(curriculum, &mut aup_fn, cfg.aup_steps, qcfg, &mut stream, on_episode)?;

    Ok(AupOutcome { policy, aux: aup_fn.aux, encoder, phis })
}
