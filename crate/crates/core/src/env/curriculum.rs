//! Fixed or fresh-per-episode environment curricula, regenerable bit-exactly
//! from `(task, master seed)`.

use crate::rng::RngStream;

use super::{generate_environment, EnvState, GenError, GenParams, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurriculumSize {
    Fixed(u32),
    /// Every episode takes place in a newly generated environment.
    Fresh,
}

#[derive(Debug, Clone)]
pub struct Curriculum {
    pub task: TaskKind,
    pub master_seed: u64,
    size: CurriculumSize,
    gen: Option<GenParams>,
    base: Vec<EnvState>,
    root: RngStream,
}

/// Builds the environment set. `Fixed(n)` environments come from independent
/// split streams of the master seed; `Fresh` defers generation to reset time.
pub fn make_curriculum(
    task: TaskKind,
    size: CurriculumSize,
    gen: GenParams,
    master_seed: u64,
) -> Result<Curriculum, GenError> {
    let root = RngStream::from_seed(master_seed);
    let mut base = Vec::new();
    if let CurriculumSize::Fixed(n) = size {
        assert!(n >= 1, "fixed curriculum needs at least one environment");
        for i in 0..n {
            let mut stream = root.split_indexed("env", i as u64);
            base.push(generate_environment(task, &gen, &mut stream)?);
        }
    }
    Ok(Curriculum { task, master_seed, size, gen: Some(gen), base, root })
}

impl Curriculum {
    /// Curriculum over hand-built environments (level fixtures).
    pub fn from_states(task: TaskKind, states: Vec<EnvState>, master_seed: u64) -> Curriculum {
        assert!(!states.is_empty());
        Curriculum {
            task,
            master_seed,
            size: CurriculumSize::Fixed(states.len() as u32),
            gen: None,
            base: states,
            root: RngStream::from_seed(master_seed),
        }
    }
}

impl Curriculum {
    pub fn size(&self) -> CurriculumSize {
        self.size
    }

    /// Environment count for budget splitting; fresh mode counts as one.
    pub fn n_env(&self) -> usize {
        match self.size {
            CurriculumSize::Fixed(n) => n as usize,
            CurriculumSize::Fresh => 1,
        }
    }

    pub fn base_envs(&self) -> &[EnvState] {
        &self.base
    }

    /// Initial state for the given episode. Fixed curricula cycle
    /// round-robin with a per-episode spawner stream; fresh mode generates a
    /// new level.
    pub fn env_for_episode(&self, episode: u64) -> Result<EnvState, GenError> {
        match self.size {
            CurriculumSize::Fixed(n) => {
                let mut state = self.base[(episode % n as u64) as usize].clone();
                state.rng = self.root.split_indexed("episode", episode);
                Ok(state)
            }
            CurriculumSize::Fresh => {
                let gen = self.gen.as_ref().expect("fresh curricula carry gen params");
                let mut stream = self.root.split_indexed("fresh", episode);
                generate_environment(self.task, gen, &mut stream)
            }
        }
    }
}
