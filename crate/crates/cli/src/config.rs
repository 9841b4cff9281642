//! Flat key=value experiment configuration with environment-variable
//! overrides (`LIFELAB_<KEY>`). Unknown keys are rejected; type errors name
//! the offending key. A config plus its seeds fully determines a run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lifelab::aup::AupConfig;
use lifelab::auxgen::EncoderKind;
use lifelab::env::{CurriculumSize, EnvRules, GenParams, TaskKind};
use lifelab::learner::{EpsSchedule, QConfig, QKind, StateMap};

use crate::CliError;

pub const ENV_PREFIX: &str = "LIFELAB_";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    Plain,
    Naive,
    Aup,
    AupProj,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Plain => "plain",
            Condition::Naive => "naive",
            Condition::Aup => "aup",
            Condition::AupProj => "aup-proj",
        }
    }

    fn from_name(name: &str) -> Option<Condition> {
        Some(match name {
            "plain" => Condition::Plain,
            "naive" => Condition::Naive,
            "aup" => Condition::Aup,
            "aup-proj" => Condition::AupProj,
            _ => return None,
        })
    }
}

/// Everything a run needs. Identical config and seeds reproduce identical
/// metrics byte for byte.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub condition: Condition,
    pub seeds: Vec<u64>,
    pub counterfactual_seed: u64,
    pub n_env: CurriculumSize,
    /// Board fixture path; set it to train on a fixed level instead of
    /// generated ones. Resolved relative to the config file.
    pub level_file: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub jobs: u32,
    pub snapshot_every: u64,
    pub gen: GenParams,
    pub aup: AupConfig,
    pub q: QConfig,
    /// Fraction of the training phase over which epsilon anneals.
    pub eps_anneal_frac: f64,
    pub naive_delta: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: TaskKind::AppendStillEasy,
            condition: Condition::Plain,
            seeds: vec![0],
            counterfactual_seed: 7,
            n_env: CurriculumSize::Fixed(4),
            level_file: None,
            out_dir: PathBuf::from("runs/out"),
            jobs: 1,
            snapshot_every: 0,
            gen: GenParams::desk(TaskKind::AppendStillEasy),
            aup: AupConfig::default(),
            q: QConfig::default(),
            eps_anneal_frac: 0.5,
            naive_delta: false,
        }
    }
}

fn parse_as<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse::<T>()
        .map_err(|_| CliError::config(format!("key {key:?}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::config(format!("key {key:?}: expected a bool, got {value:?}"))),
    }
}

impl ExperimentConfig {
    /// Parses config text, then applies `LIFELAB_*` environment overrides,
    /// then explicit `--set` overrides.
    pub fn load(
        text: &str,
        base_dir: &Path,
        sets: &[(String, String)],
    ) -> Result<ExperimentConfig, CliError> {
        let mut pairs: BTreeMap<String, String> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::config(format!("line {}: expected key=value, got {line:?}", i + 1))
            })?;
            pairs.insert(key.trim().to_string(), value.trim().to_string());
        }
        for (k, v) in std::env::vars() {
            if let Some(key) = k.strip_prefix(ENV_PREFIX) {
                pairs.insert(key.to_lowercase(), v);
            }
        }
        for (k, v) in sets {
            pairs.insert(k.clone(), v.clone());
        }

        let mut cfg = ExperimentConfig::default();
        // The task shapes generator defaults, so read it first.
        if let Some(task) = pairs.get("task") {
            cfg.task = TaskKind::from_name(task)
                .ok_or_else(|| CliError::config(format!("key \"task\": unknown task {task:?}")))?;
        }
        cfg.gen = GenParams::desk(cfg.task);

        for (key, value) in &pairs {
            cfg.apply(key, value, base_dir)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str, base_dir: &Path) -> Result<(), CliError> {
        match key {
            "task" => {} // handled in load
            "condition" => {
                self.condition = Condition::from_name(value).ok_or_else(|| {
                    CliError::config(format!("key \"condition\": unknown condition {value:?}"))
                })?;
                if self.condition == Condition::AupProj {
                    let tuned = AupConfig::projection();
                    self.aup.encoder = tuned.encoder;
                    self.aup.lambda_start = tuned.lambda_start;
                    self.aup.lambda_final = tuned.lambda_final;
                }
            }
            "seeds" => {
                self.seeds = value
                    .split(',')
                    .map(|s| parse_as::<u64>(key, s.trim()))
                    .collect::<Result<_, _>>()?;
                if self.seeds.is_empty() {
                    return Err(CliError::config("key \"seeds\": must list at least one seed"));
                }
            }
            "counterfactual_seed" => self.counterfactual_seed = parse_as(key, value)?,
            "n_env" => {
                self.n_env = if value == "fresh" {
                    CurriculumSize::Fresh
                } else {
                    CurriculumSize::Fixed(parse_as(key, value)?)
                };
            }
            "level_file" => self.level_file = Some(base_dir.join(value)),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "jobs" => self.jobs = parse_as(key, value)?,
            "snapshot_every" => self.snapshot_every = parse_as(key, value)?,

            "width" => self.gen.width = parse_as(key, value)?,
            "height" => self.gen.height = parse_as(key, value)?,
            "wall_density" => self.gen.wall_density = parse_as(key, value)?,
            "crate_density" => self.gen.crate_density = parse_as(key, value)?,
            "tree_density" => self.gen.tree_density = parse_as(key, value)?,
            "green_patterns" => self.gen.green_patterns = parse_as(key, value)?,
            "red_patterns" => self.gen.red_patterns = parse_as(key, value)?,
            "spawners" => self.gen.spawners = parse_as(key, value)?,
            "blue_width" => self.gen.blue_width = parse_as(key, value)?,
            "blue_height" => self.gen.blue_height = parse_as(key, value)?,
            "max_attempts" => self.gen.max_attempts = parse_as(key, value)?,
            "theta_append" => self.gen.rules.theta_append = parse_as(key, value)?,
            "theta_prune" => self.gen.rules.theta_prune = parse_as(key, value)?,
            "max_steps" => self.gen.rules.max_steps = parse_as(key, value)?,
            "spawn_prob" => self.gen.rules.ca.spawn_prob = parse_as(key, value)?,

            "lambda_start" => self.aup.lambda_start = parse_as(key, value)?,
            "lambda_final" => self.aup.lambda_final = parse_as(key, value)?,
            "n_aux" => self.aup.n_aux = parse_as(key, value)?,
            "z_dim" => self.aup.z_dim = parse_as(key, value)?,
            "explore_steps" => self.aup.explore_steps = parse_as(key, value)?,
            "encoder_epochs" => self.aup.encoder_epochs = parse_as(key, value)?,
            "aux_steps" => self.aup.aux_steps = parse_as(key, value)?,
            "aup_steps" => self.aup.aup_steps = parse_as(key, value)?,
            "aux_gamma" => self.aup.aux_gamma = parse_as(key, value)?,
            "encoder" => {
                self.aup.encoder = EncoderKind::from_name(value).ok_or_else(|| {
                    CliError::config(format!("key \"encoder\": unknown encoder {value:?}"))
                })?;
            }

            "gamma" => self.q.gamma = parse_as(key, value)?,
            "alpha" => self.q.alpha = parse_as(key, value)?,
            "alpha_decay" => {
                let decay = parse_bool(key, value)?;
                self.q.kind = QKind::Tabular { visit_decay: decay };
            }
            "q_kind" => {
                self.q.kind = match value {
                    "tabular" => QKind::Tabular { visit_decay: true },
                    "linear" => QKind::Linear,
                    _ => {
                        return Err(CliError::config(format!(
                            "key \"q_kind\": unknown kind {value:?}"
                        )))
                    }
                };
                self.q.state_map = match self.q.kind {
                    QKind::Linear => StateMap::Downsample,
                    _ => StateMap::Digest,
                };
            }
            "q0" => self.q.q0 = parse_as(key, value)?,
            "eps_start" => self.q.eps.start = parse_as(key, value)?,
            "eps_end" => self.q.eps.end = parse_as(key, value)?,
            "eps_anneal_frac" => self.eps_anneal_frac = parse_as(key, value)?,
            "naive_delta" => self.naive_delta = parse_bool(key, value)?,

            _ => return Err(CliError::config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(0.0..1.0).contains(&self.q.gamma) {
            return Err(CliError::config("key \"gamma\": must lie in [0, 1)"));
        }
        if self.q.alpha <= 0.0 {
            return Err(CliError::config("key \"alpha\": must be positive"));
        }
        if !(0.0..=1.0).contains(&self.q.eps.start) || !(0.0..=1.0).contains(&self.q.eps.end) {
            return Err(CliError::config("key \"eps_start\"/\"eps_end\": must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.eps_anneal_frac) {
            return Err(CliError::config("key \"eps_anneal_frac\": must lie in (0, 1]"));
        }
        if self.jobs == 0 {
            return Err(CliError::config("key \"jobs\": must be at least 1"));
        }
        self.aup.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(())
    }

    /// Steps the main policy trains for under this condition.
    pub fn policy_steps(&self) -> u64 {
        self.aup.aup_steps
    }

    /// Q-learning configuration with epsilon annealed over the configured
    /// fraction of the phase.
    pub fn phase_qconfig(&self) -> QConfig {
        let mut q = self.q.clone();
        q.eps = EpsSchedule {
            start: self.q.eps.start,
            end: self.q.eps.end,
            anneal_steps: (self.policy_steps() as f64 * self.eps_anneal_frac) as u64,
        };
        q
    }

    pub fn rules(&self) -> EnvRules {
        self.gen.rules
    }
}
