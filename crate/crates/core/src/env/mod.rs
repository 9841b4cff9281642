//! The Markov decision process around the cellular automaton: agent
//! movement, toggling, task rewards, episode lifecycle and observations.
//!
//! Each `apply_action` resolves in a fixed order: agent sub-move (moves,
//! crate pushes, toggles), one automaton step with the freeze zone at the
//! agent's new position, reward accrual as the per-step delta of the task
//! counter plus the goal-entry bonus, goal reopening/closing from current
//! counters, then the termination check.

mod curriculum;
mod gen;

pub use curriculum::{make_curriculum, Curriculum, CurriculumSize};
pub use gen::{generate_environment, GenError, GenParams, STILL_LIFE_LIBRARY};

use std::fmt;

use crate::ca::{Board, BoardFile, CaRule, Cell, CellColor, CellKind, Pos};
use crate::rng::RngStream;

pub const OBS_SIDE: usize = 25;
const OBS_HALF: i32 = (OBS_SIDE as i32 - 1) / 2;

/// The nine agent actions. `NoOp` is always available; `Toggle*` spawns gray
/// life on an adjacent empty cell and deletes adjacent life of any color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Action {
    NoOp = 0,
    MoveN = 1,
    MoveS = 2,
    MoveE = 3,
    MoveW = 4,
    ToggleN = 5,
    ToggleS = 6,
    ToggleE = 7,
    ToggleW = 8,
}

pub const ACTIONS: [Action; 9] = [
    Action::NoOp,
    Action::MoveN,
    Action::MoveS,
    Action::MoveE,
    Action::MoveW,
    Action::ToggleN,
    Action::ToggleS,
    Action::ToggleE,
    Action::ToggleW,
];

pub const N_ACTIONS: usize = 9;

impl Action {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        ACTIONS[i]
    }

    /// (dx, dy) for moves and toggles; `None` for `NoOp`. North is -y.
    pub fn direction(self) -> Option<(i32, i32)> {
        match self {
            Action::NoOp => None,
            Action::MoveN | Action::ToggleN => Some((0, -1)),
            Action::MoveS | Action::ToggleS => Some((0, 1)),
            Action::MoveE | Action::ToggleE => Some((1, 0)),
            Action::MoveW | Action::ToggleW => Some((-1, 0)),
        }
    }

    pub fn is_toggle(self) -> bool {
        matches!(self, Action::ToggleN | Action::ToggleS | Action::ToggleE | Action::ToggleW)
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::NoOp => "noop",
            Action::MoveN => "move-n",
            Action::MoveS => "move-s",
            Action::MoveE => "move-e",
            Action::MoveW => "move-w",
            Action::ToggleN => "toggle-n",
            Action::ToggleS => "toggle-s",
            Action::ToggleE => "toggle-e",
            Action::ToggleW => "toggle-w",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    AppendStillEasy,
    AppendStill,
    AppendSpawn,
    PruneStillEasy,
}

impl TaskKind {
    pub fn is_append(self) -> bool {
        !matches!(self, TaskKind::PruneStillEasy)
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::AppendStillEasy => "append-still-easy",
            TaskKind::AppendStill => "append-still",
            TaskKind::AppendSpawn => "append-spawn",
            TaskKind::PruneStillEasy => "prune-still-easy",
        }
    }

    pub fn from_name(name: &str) -> Option<TaskKind> {
        Some(match name {
            "append-still-easy" => TaskKind::AppendStillEasy,
            "append-still" => TaskKind::AppendStill,
            "append-spawn" => TaskKind::AppendSpawn,
            "prune-still-easy" => TaskKind::PruneStillEasy,
            _ => return None,
        })
    }
}

/// Episode-level parameters stamped into every state of an environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvRules {
    /// Goal opens when gray-on-blue reaches `ceil(theta_append * blue_tiles)`.
    pub theta_append: f64,
    /// Goal opens when removed red reaches `ceil(theta_prune * initial_red)`.
    pub theta_prune: f64,
    pub max_steps: u32,
    pub ca: CaRule,
}

impl Default for EnvRules {
    fn default() -> Self {
        EnvRules { theta_append: 0.5, theta_prune: 0.5, max_steps: 1000, ca: CaRule::default() }
    }
}

/// Task progress counters, refreshed from the board after every step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    Append { gray_on_blue: u32, blue_tiles: u32 },
    Prune { initial_red: u32, current_red: u32 },
}

impl Progress {
    fn goal_open(&self, rules: &EnvRules) -> bool {
        match *self {
            Progress::Append { gray_on_blue, blue_tiles } => {
                let need = (rules.theta_append * blue_tiles as f64).ceil() as i64;
                gray_on_blue as i64 >= need
            }
            Progress::Prune { initial_red, current_red } => {
                let need = (rules.theta_prune * initial_red as f64).ceil() as i64;
                initial_red as i64 - current_red as i64 >= need
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeError {
    Finished,
    AgentNotOnWalkable,
}

impl fmt::Display for EpisodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpisodeError::Finished => write!(f, "apply_action on a finished episode"),
            EpisodeError::AgentNotOnWalkable => {
                write!(f, "agent start is not an empty cell")
            }
        }
    }
}

impl std::error::Error for EpisodeError {}

/// Full environment state. A value: `apply_action` returns the successor.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub board: Board,
    pub agent_pos: Pos,
    pub step: u32,
    pub task: TaskKind,
    pub progress: Progress,
    pub goal_open: bool,
    pub finished: bool,
    pub rules: EnvRules,
    pub rng: RngStream,
}

fn count_gray_on_blue(board: &Board) -> u32 {
    board
        .positions()
        .filter(|&p| {
            let c = board.get(p);
            board.is_blue(p) && c.kind == CellKind::Life && c.color == CellColor::Gray
        })
        .count() as u32
}

impl EnvState {
    /// Wraps a board into a fresh episode. The agent must stand on an empty
    /// cell.
    pub fn new(
        board: Board,
        agent_pos: Pos,
        task: TaskKind,
        rules: EnvRules,
        rng: RngStream,
    ) -> Result<EnvState, EpisodeError> {
        if board.get(agent_pos).kind != CellKind::Empty {
            return Err(EpisodeError::AgentNotOnWalkable);
        }
        let progress = if task.is_append() {
            Progress::Append {
                gray_on_blue: count_gray_on_blue(&board),
                blue_tiles: board.blue_mask().iter().filter(|&&b| b).count() as u32,
            }
        } else {
            let red = board.count_life(CellColor::Red) as u32;
            Progress::Prune { initial_red: red, current_red: red }
        };
        let mut state = EnvState {
            board,
            agent_pos,
            step: 0,
            task,
            progress,
            goal_open: false,
            finished: false,
            rules,
            rng,
        };
        state.goal_open = state.progress.goal_open(&state.rules);
        Ok(state)
    }

    /// Builds an episode from a parsed board fixture (which must carry an
    /// agent marker).
    pub fn from_board_file(
        file: &BoardFile,
        task: TaskKind,
        rules: EnvRules,
        rng: RngStream,
    ) -> Result<EnvState, EpisodeError> {
        let agent = file.agent_start.ok_or(EpisodeError::AgentNotOnWalkable)?;
        EnvState::new(file.board.clone(), agent, task, rules, rng)
    }

    /// One environment step. Returns `(next_state, primary_reward, done)`.
    pub fn apply_action(&self, action: Action) -> Result<(EnvState, f64, bool), EpisodeError> {
        if self.finished {
            return Err(EpisodeError::Finished);
        }
        let mut next = self.clone();
        next.step += 1;
        let mut entered_goal = false;

        // (1) Agent sub-move.
        if let Some((dx, dy)) = action.direction() {
            let target = self.board.offset(self.agent_pos, dx, dy);
            if action.is_toggle() {
                if target != self.agent_pos {
                    match self.board.get(target).kind {
                        CellKind::Empty => next.board.set(target, Cell::life(CellColor::Gray)),
                        CellKind::Life => next.board.set(target, Cell::EMPTY),
                        _ => {}
                    }
                }
            } else {
                match self.board.get(target).kind {
                    CellKind::Empty => next.agent_pos = target,
                    CellKind::Goal if self.goal_open => {
                        next.agent_pos = target;
                        entered_goal = true;
                    }
                    CellKind::Crate => {
                        let beyond = self.board.offset(target, dx, dy);
                        if self.board.get(beyond).kind == CellKind::Empty
                            && beyond != self.agent_pos
                        {
                            next.board.set(beyond, Cell::of(CellKind::Crate));
                            next.board.set(target, Cell::EMPTY);
                            next.agent_pos = target;
                        }
                    }
                    _ => {}
                }
            }
        }

        // (2) Automaton step, freezing the ring around the agent's new
        // position. The agent's own tile is restored afterwards: nothing can
        // be born under the agent.
        let agent_tile = next.board.get(next.agent_pos);
        next.board = next.board.step(Some(next.agent_pos), &self.rules.ca, &mut next.rng);
        next.board.set(next.agent_pos, agent_tile);

        // (3) Reward: per-step delta of the task counter plus goal bonus.
        let mut reward = 0.0;
        match &mut next.progress {
            Progress::Append { gray_on_blue, .. } => {
                let now = count_gray_on_blue(&next.board);
                reward += now as f64 - *gray_on_blue as f64;
                *gray_on_blue = now;
            }
            Progress::Prune { current_red, .. } => {
                let now = next.board.count_life(CellColor::Red) as u32;
                reward += *current_red as f64 - now as f64;
                *current_red = now;
            }
        }
        if entered_goal {
            reward += 1.0;
        }

        // (4) Goal state follows the counters; it may close again.
        next.goal_open = next.progress.goal_open(&next.rules);

        // (5) Termination.
        if entered_goal || next.step >= next.rules.max_steps {
            next.finished = true;
        }
        let done = next.finished;
        Ok((next, reward, done))
    }

    /// Egocentric 25x25 window centered on the agent, torus-wrapped.
    pub fn observe(&self) -> Observation {
        let mut cells = Vec::with_capacity(OBS_SIDE * OBS_SIDE);
        for wy in 0..OBS_SIDE as i32 {
            for wx in 0..OBS_SIDE as i32 {
                let p = self.board.offset(self.agent_pos, wx - OBS_HALF, wy - OBS_HALF);
                cells.push(ObsCell { cell: self.board.get(p), blue: self.board.is_blue(p) });
            }
        }
        Observation { cells, goal_open: self.goal_open }
    }

    /// The agent stands on the goal tile, which only happens on entry.
    pub fn on_goal(&self) -> bool {
        self.board.get(self.agent_pos).kind == CellKind::Goal
    }

    /// Digest of (board cells, agent position, goal flag) for tabular state
    /// keys. Step and progress counters are excluded; they are functions of
    /// the board within an episode.
    pub fn state_key(&self) -> u64 {
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        let mut eat = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        };
        for c in self.board.cells() {
            eat(c.kind as u8);
            eat(c.color as u8);
        }
        eat((self.agent_pos.x & 0xFF) as u8);
        eat((self.agent_pos.x >> 8) as u8);
        eat((self.agent_pos.y & 0xFF) as u8);
        eat((self.agent_pos.y >> 8) as u8);
        eat(self.goal_open as u8);
        h
    }
}

/// One observation cell: the board cell plus its goal-region flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObsCell {
    pub cell: Cell,
    pub blue: bool,
}

/// Egocentric observation window plus the goal flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    cells: Vec<ObsCell>,
    pub goal_open: bool,
}

impl Observation {
    pub fn get(&self, wx: usize, wy: usize) -> ObsCell {
        self.cells[wy * OBS_SIDE + wx]
    }

    pub fn cells(&self) -> &[ObsCell] {
        &self.cells
    }
}
