//! Subcommand implementations built on the core library.

use std::fs;
use std::path::{Path, PathBuf};

use lifelab::ca::{parse_board, serialize_board, BoardFile, CaRule, Cell, CellColor, CellKind};
use lifelab::env::{generate_environment, EnvState};
use lifelab::learner::QFunction;
use lifelab::metrics::{counterfactual_rollout, side_effect_score, CellConfiguration};
use lifelab::rng::RngStream;
use lifelab::theory::{check_prop1, random_deterministic_mdp};

use crate::config::ExperimentConfig;
use crate::experiment::{build_curriculum, evaluate, run_experiment};
use crate::CliError;

pub fn cmd_gen(
    cfg: &ExperimentConfig,
    seed: u64,
    count: u32,
    out: &Path,
) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(CliError::io)?;
    for i in 0..count {
        let mut stream = RngStream::from_seed(seed).split_indexed("env", i as u64);
        let state =
            generate_environment(cfg.task, &cfg.gen, &mut stream).map_err(CliError::Generation)?;
        let file = BoardFile { board: state.board.clone(), agent_start: Some(state.agent_pos) };
        let path = out.join(format!("{}-seed{seed}-{i}.board", cfg.task.name()));
        fs::write(&path, serialize_board(&file)).map_err(CliError::io)?;
        println!("{}", path.display());
    }
    Ok(())
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let results = run_experiment(cfg)?;
    for (seed, artifacts) in results {
        println!(
            "seed {seed}: {} episodes -> {}",
            artifacts.episodes,
            artifacts.metrics_path.display()
        );
    }
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<QFunction, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io)?;
    lifelab::snapshot::parse_q(&text).map_err(|e| CliError::config(e.to_string()))
}

pub fn cmd_eval(
    cfg: &ExperimentConfig,
    snapshot: &Path,
    seed: u64,
    episodes: u64,
) -> Result<(), CliError> {
    let policy = load_snapshot(snapshot)?;
    let summary = evaluate(cfg, &policy, seed, episodes)?;
    println!("episode,primary_return,side_effect_score,length,reached_goal");
    let mut ret = 0.0;
    let mut score = 0.0;
    let n = summary.episodes.len().max(1) as f64;
    for (ep, r, s, len, goal) in &summary.episodes {
        println!("{ep},{r},{s},{len},{goal}");
        ret += r;
        score += s;
    }
    println!("# mean primary_return {} side_effect_score {}", ret / n, score / n);
    Ok(())
}

pub fn cmd_score(
    initial: &Path,
    final_path: &Path,
    steps: u32,
    seed: u64,
    spawn_prob: f64,
) -> Result<(), CliError> {
    let load = |p: &Path| -> Result<BoardFile, CliError> {
        let text = fs::read_to_string(p).map_err(CliError::io)?;
        parse_board(&text).map_err(|e| CliError::config(e.to_string()))
    };
    let initial = load(initial)?;
    let final_board = load(final_path)?;
    let rule = CaRule { spawn_prob };
    let reference = CellConfiguration::from_board(
        &counterfactual_rollout(&initial.board, steps, &rule, seed),
        CellColor::Green,
    );
    let actual = CellConfiguration::from_board(&final_board.board, CellColor::Green);
    let report = side_effect_score(&reference, &actual)
        .map_err(|e| CliError::invariant(e.to_string()))?;
    println!("score {}", report.score);
    println!(
        "matched {} unmatched_reference {} unmatched_actual {}",
        report.matches.len(),
        report.unmatched_reference,
        report.unmatched_actual
    );
    for (from, to, d) in &report.matches {
        println!("match ({},{}) -> ({},{}) cost {d}", from.x, from.y, to.x, to.y);
    }
    Ok(())
}

pub fn cmd_render(
    cfg: &ExperimentConfig,
    snapshot: &Path,
    seed: u64,
    env_index: u64,
    max_frames: u32,
) -> Result<(), CliError> {
    let policy = load_snapshot(snapshot)?;
    let curriculum = build_curriculum(cfg, seed)?;
    let mut state = curriculum.env_for_episode(env_index).map_err(CliError::Generation)?;
    let state_map = cfg.phase_qconfig().state_map;
    let mut rng = RngStream::from_seed(seed).split("render");

    let frame = |state: &EnvState| {
        serialize_board(&BoardFile {
            board: state.board.clone(),
            agent_start: Some(state.agent_pos),
        })
    };
    println!("step 0 (initial, goal_open={})", state.goal_open);
    print!("{}", frame(&state));
    let mut step = 0u32;
    while !state.finished && step < max_frames {
        let qs = state_map.encode(&state);
        let action = lifelab::learner::epsilon_greedy(&policy, &qs, 0.0, &mut rng);
        let (next, reward, done) = state
            .apply_action(action)
            .map_err(|e| CliError::invariant(e.to_string()))?;
        step += 1;
        println!("step {step} action {} reward {reward} done {done}", action.name());
        print!("{}", frame(&next));
        state = next;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_verify_prop1(
    n_mdps: u32,
    n_states_max: usize,
    n_actions_max: usize,
    samples: usize,
    gammas: &[f64],
    seed: u64,
    tol: f64,
) -> Result<(), CliError> {
    let mut rng = RngStream::from_seed(seed).split("prop1");
    let mut checked_pairs = 0usize;
    let mut worst_ratio = 0.0f64;
    let mut violations = 0usize;
    for &gamma in gammas {
        for i in 0..n_mdps {
            let n_states = 2 + rng.range(n_states_max.saturating_sub(1) as u64) as usize;
            let n_actions = 1 + rng.range(n_actions_max as u64) as usize;
            let mdp = random_deterministic_mdp(n_states, n_actions, gamma, &mut rng);
            let report = check_prop1(&mdp, samples, &mut rng, tol)
                .map_err(|e| CliError::invariant(e.to_string()))?;
            checked_pairs += report.pairs.len();
            for pair in &report.pairs {
                if pair.bound > 0.0 {
                    worst_ratio = worst_ratio.max(pair.max_gap / pair.bound);
                }
            }
            if !report.holds() {
                violations += report.violations.len();
                for v in &report.violations {
                    println!(
                        "violation: gamma {gamma} mdp {i} pair ({},{}) gap {} bound {}",
                        v.s, v.s_other, v.max_gap, v.bound
                    );
                }
            }
        }
    }
    println!(
        "checked {} mutually reachable pairs across {} MDPs x {} gammas",
        checked_pairs,
        n_mdps,
        gammas.len()
    );
    println!("worst observed gap/bound ratio {worst_ratio:.6}");
    if violations > 0 {
        return Err(CliError::invariant(format!("{violations} bound violations")));
    }
    println!("communicability bound held everywhere (tol {tol})");
    Ok(())
}

pub fn cmd_bench(width: usize, height: usize, steps: u32, life_density: f64) -> Result<(), CliError> {
    let mut rng = RngStream::from_seed(1).split("bench");
    let mut board = lifelab::ca::Board::empty(width, height);
    for pos in board.positions().collect::<Vec<_>>() {
        if rng.chance(life_density) {
            board.set(pos, Cell::life(CellColor::Gray));
        }
    }
    // Warmup step so allocators settle.
    board = board.step(None, &CaRule::DETERMINISTIC, &mut rng);
    let start = std::time::Instant::now();
    for _ in 0..steps {
        board = board.step(None, &CaRule::DETERMINISTIC, &mut rng);
    }
    let elapsed = start.elapsed();
    let updates = (width * height) as f64 * steps as f64;
    let rate = updates / elapsed.as_secs_f64();
    println!(
        "{}x{} board, {} steps in {:.3}s: {:.0} cell-updates/second (live now: {})",
        width,
        height,
        steps,
        elapsed.as_secs_f64(),
        rate,
        board.cells().iter().filter(|c| c.kind == CellKind::Life).count()
    );
    Ok(())
}

pub fn read_config(
    path: Option<&PathBuf>,
    sets: &[(String, String)],
) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::config(format!("config {}: {e}", p.display())))?;
            let base = p.parent().unwrap_or(Path::new("."));
            ExperimentConfig::load(&text, base, sets)
        }
        None => ExperimentConfig::load("", Path::new("."), sets),
    }
}

pub fn parse_set(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got {s:?}"))
}
