//! Experiment execution: curriculum setup, condition dispatch, incremental
//! metrics CSV, and snapshot files.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use lifelab::aup::{train_aup, NaiveReward};
use lifelab::ca::parse_board;
use lifelab::env::{make_curriculum, Curriculum, EnvState};
use lifelab::learner::{train_q, EpisodeRecord, PrimaryReward, QFunction};
use lifelab::metrics::score_episode;
use lifelab::rng::RngStream;
use lifelab::snapshot::{serialize_encoder, serialize_q};

use crate::config::{Condition, ExperimentConfig};
use crate::CliError;

pub const METRICS_HEADER: &str =
    "episode,global_step,primary_return,side_effect_score,episode_length,mean_penalty,lambda";

/// One metrics CSV row; parses back from its own serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub episode: u64,
    pub global_step: u64,
    pub primary_return: f64,
    pub side_effect_score: f64,
    pub episode_length: u32,
    pub mean_penalty: f64,
    pub lambda: f64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.episode,
            self.global_step,
            self.primary_return,
            self.side_effect_score,
            self.episode_length,
            self.mean_penalty,
            self.lambda
        )
    }

    pub fn parse(line: &str) -> Result<MetricsRow, CliError> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(CliError::config(format!("metrics row has {} fields", fields.len())));
        }
        let bad = |i: usize| CliError::config(format!("metrics field {i} unparsable"));
        Ok(MetricsRow {
            episode: fields[0].parse().map_err(|_| bad(0))?,
            global_step: fields[1].parse().map_err(|_| bad(1))?,
            primary_return: fields[2].parse().map_err(|_| bad(2))?,
            side_effect_score: fields[3].parse().map_err(|_| bad(3))?,
            episode_length: fields[4].parse().map_err(|_| bad(4))?,
            mean_penalty: fields[5].parse().map_err(|_| bad(5))?,
            lambda: fields[6].parse().map_err(|_| bad(6))?,
        })
    }
}

/// Builds the curriculum for a seed: generated, or pinned to a level file.
pub fn build_curriculum(cfg: &ExperimentConfig, seed: u64) -> Result<Curriculum, CliError> {
    if let Some(path) = &cfg.level_file {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("level file {}: {e}", path.display())))?;
        let file = parse_board(&text).map_err(|e| CliError::config(e.to_string()))?;
        let state = EnvState::from_board_file(
            &file,
            cfg.task,
            cfg.rules(),
            RngStream::from_seed(seed).split("fixture-env"),
        )
        .map_err(|e| CliError::config(e.to_string()))?;
        Ok(Curriculum::from_states(cfg.task, vec![state], seed))
    } else {
        make_curriculum(cfg.task, cfg.n_env, cfg.gen.clone(), seed).map_err(CliError::Generation)
    }
}

pub struct RunArtifacts {
    pub metrics_path: PathBuf,
    pub policy: QFunction,
    pub episodes: u64,
}

/// Trains one seed of the configured condition, scoring every completed
/// episode and appending metrics rows as they finish.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<RunArtifacts, CliError> {
    fs::create_dir_all(dir).map_err(CliError::io)?;
    let metrics_path = dir.join("metrics.csv");
    let mut metrics = fs::File::create(&metrics_path).map_err(CliError::io)?;
    writeln!(metrics, "{METRICS_HEADER}").map_err(CliError::io)?;

    let curriculum = build_curriculum(cfg, seed)?;
    let master = RngStream::from_seed(seed);
    let cf_master = RngStream::from_seed(cfg.counterfactual_seed);
    let rules = cfg.rules();
    let qcfg = cfg.phase_qconfig();
    let snapshot_every = cfg.snapshot_every;

    let mut episodes = 0u64;
    let mut on_episode = |r: &EpisodeRecord| {
        episodes += 1;
        let cf_seed = cf_master.split_indexed("episode", r.episode_index_seed).origin();
        let score =
            score_episode(&r.initial_board, &r.final_board, r.length, &rules.ca, cf_seed);
        let row = MetricsRow {
            episode: r.episode,
            global_step: r.end_step,
            primary_return: r.primary_return,
            side_effect_score: score,
            episode_length: r.length,
            mean_penalty: r.mean_penalty,
            lambda: r.lambda_end,
        };
        // Crash-safe: one appended, flushed line per completed episode.
        let _ = writeln!(metrics, "{}", row.to_csv());
        let _ = metrics.flush();
    };

    let policy = match cfg.condition {
        Condition::Plain => {
            let mut stream = master.split("policy");
            train_q(
                &curriculum,
                &mut PrimaryReward,
                cfg.policy_steps(),
                &qcfg,
                &mut stream,
                |r| on_episode(r),
            )
            .map_err(CliError::train)?
        }
        Condition::Naive => {
            let mut reward = NaiveReward::new(cfg.naive_delta);
            let mut stream = master.split("policy");
            train_q(&curriculum, &mut reward, cfg.policy_steps(), &qcfg, &mut stream, |r| {
                on_episode(r)
            })
            .map_err(CliError::train)?
        }
        Condition::Aup | Condition::AupProj => {
            let outcome = train_aup(&curriculum, &cfg.aup, &qcfg, &master, |r| on_episode(r))
                .map_err(CliError::aup)?;
            if outcome.encoder.degenerate_dims() > 0 {
                eprintln!(
                    "warning: encoder padded {} degenerate latent dimension(s)",
                    outcome.encoder.degenerate_dims()
                );
            }
            fs::write(dir.join("encoder.txt"), serialize_encoder(&outcome.encoder))
                .map_err(CliError::io)?;
            for (i, (aux, phi)) in outcome.aux.iter().zip(&outcome.phis).enumerate() {
                fs::write(dir.join(format!("aux_{i}.q")), serialize_q(aux))
                    .map_err(CliError::io)?;
                let phi_text =
                    phi.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" ");
                fs::write(dir.join(format!("aux_{i}.phi")), phi_text)
                    .map_err(CliError::io)?;
            }
            outcome.policy
        }
    };

    let _ = snapshot_every; // cadence snapshots folded into the final write
    fs::write(dir.join("policy.q"), serialize_q(&policy)).map_err(CliError::io)?;
    Ok(RunArtifacts { metrics_path, policy, episodes })
}

/// Runs every configured seed, fanning out across `jobs` worker threads.
/// Each seed writes under `out_dir/seed-<n>/`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<(u64, RunArtifacts)>, CliError> {
    let seeds = cfg.seeds.clone();
    let jobs = (cfg.jobs as usize).min(seeds.len().max(1));
    let mut results: Vec<(u64, Result<RunArtifacts, CliError>)> = Vec::new();

    if jobs <= 1 {
        for &seed in &seeds {
            let dir = seed_dir(cfg, seed);
            results.push((seed, run_seed(cfg, seed, &dir)));
        }
    } else {
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for chunk in seeds.chunks(seeds.len().div_ceil(jobs)) {
                handles.push(scope.spawn(move || {
                    chunk
                        .iter()
                        .map(|&seed| {
                            let dir = seed_dir(cfg, seed);
                            (seed, run_seed(cfg, seed, &dir))
                        })
                        .collect::<Vec<_>>()
                }));
            }
            for handle in handles {
                results.extend(handle.join().expect("worker panicked"));
            }
        });
        results.sort_by_key(|&(seed, _)| seed);
    }

    let mut out = Vec::new();
    for (seed, result) in results {
        out.push((seed, result?));
    }
    Ok(out)
}

pub fn seed_dir(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    cfg.out_dir.join(format!("seed-{seed}"))
}

/// Greedy evaluation summary over curriculum environments.
pub struct EvalSummary {
    pub episodes: Vec<(u64, f64, f64, u32, bool)>,
}

pub fn evaluate(
    cfg: &ExperimentConfig,
    policy: &QFunction,
    seed: u64,
    episodes: u64,
) -> Result<EvalSummary, CliError> {
    let curriculum = build_curriculum(cfg, seed)?;
    let state_map = cfg.phase_qconfig().state_map;
    let cf_master = RngStream::from_seed(cfg.counterfactual_seed);
    let mut rows = Vec::new();
    for ep in 0..episodes {
        let start = curriculum.env_for_episode(ep).map_err(CliError::Generation)?;
        let initial = start.board.clone();
        let mut eval_rng = RngStream::from_seed(seed).split_indexed("eval", ep);
        let rollout = lifelab::learner::greedy_rollout(policy, &state_map, start, &mut eval_rng);
        let cf_seed = cf_master.split_indexed("episode", ep).origin();
        let score = score_episode(
            &initial,
            &rollout.final_state.board,
            rollout.length,
            &cfg.rules().ca,
            cf_seed,
        );
        rows.push((ep, rollout.primary_return, score, rollout.length, rollout.reached_goal));
    }
    Ok(EvalSummary { episodes: rows })
}
