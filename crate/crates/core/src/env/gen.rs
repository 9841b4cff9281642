//! Procedural level generation.
//!
//! Green and red patterns come only from a still-life library so that they
//! persist absent interference. A pattern placement requires its cells to be
//! empty and every cell within Chebyshev distance two of the pattern's
//! bounding box to be non-alive; with that margin no outside cell can feed a
//! birth next to the pattern, and separately placed patterns cannot interact.
//! Tree placement refuses to give any empty cell three live neighbors.
//! Levels are accepted only when the goal is BFS-reachable from the agent
//! start through empty cells.

use std::collections::VecDeque;
use std::fmt;

use crate::ca::{Board, Cell, CellColor, CellKind, Pos};
use crate::rng::RngStream;

use super::{EnvRules, EnvState, TaskKind};

/// The five still lifes used for generated patterns, as cell offsets.
pub const STILL_LIFE_LIBRARY: [(&str, &[(i32, i32)]); 5] = [
    ("block", &[(0, 0), (1, 0), (0, 1), (1, 1)]),
    ("beehive", &[(1, 0), (2, 0), (0, 1), (3, 1), (1, 2), (2, 2)]),
    ("loaf", &[(1, 0), (2, 0), (0, 1), (3, 1), (1, 2), (3, 2), (2, 3)]),
    ("boat", &[(0, 0), (1, 0), (0, 1), (2, 1), (1, 2)]),
    ("tub", &[(1, 0), (0, 1), (2, 1), (1, 2)]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub width: usize,
    pub height: usize,
    pub wall_density: f64,
    pub crate_density: f64,
    pub tree_density: f64,
    pub green_patterns: u32,
    pub red_patterns: u32,
    pub spawners: u32,
    /// Blue region dimensions; zero disables the region.
    pub blue_width: usize,
    pub blue_height: usize,
    pub rules: EnvRules,
    /// Full level regeneration attempts before giving up.
    pub max_attempts: u32,
}

impl GenParams {
    /// Small-board defaults per task.
    pub fn desk(task: TaskKind) -> GenParams {
        let mut p = GenParams {
            width: 13,
            height: 13,
            wall_density: 0.06,
            crate_density: 0.03,
            tree_density: 0.03,
            green_patterns: 3,
            red_patterns: 0,
            spawners: 0,
            blue_width: 3,
            blue_height: 3,
            rules: EnvRules::default(),
            max_attempts: 64,
        };
        match task {
            TaskKind::AppendStillEasy => {}
            TaskKind::AppendStill => p.green_patterns = 5,
            TaskKind::AppendSpawn => p.spawners = 2,
            TaskKind::PruneStillEasy => {
                p.red_patterns = 3;
                p.blue_width = 0;
                p.blue_height = 0;
            }
        }
        p
    }

    /// Larger boards matching the native observation window.
    pub fn full(task: TaskKind) -> GenParams {
        let mut p = GenParams::desk(task);
        p.width = 25;
        p.height = 25;
        p.blue_width = 4;
        p.blue_height = 4;
        if task == TaskKind::PruneStillEasy {
            p.blue_width = 0;
            p.blue_height = 0;
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenError {
    pub seed: u64,
    pub attempts: u32,
    pub reason: String,
}

impl fmt::Display for GenError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "level generation failed after {} attempts (seed {}): {}",
            self.attempts, self.seed, self.reason
        )
    }
}

impl std::error::Error for GenError {}

const PLACEMENT_TRIES: u32 = 128;

/// Generates a solvable level for `task`, or an error carrying the seed.
pub fn generate_environment(
    task: TaskKind,
    params: &GenParams,
    rng: &mut RngStream,
) -> Result<EnvState, GenError> {
    let seed = rng.origin();
    let mut last_reason = String::new();
    for _ in 0..params.max_attempts.max(1) {
        match attempt(task, params, rng) {
            Ok(state) => return Ok(state),
            Err(reason) => last_reason = reason,
        }
    }
    Err(GenError { seed, attempts: params.max_attempts.max(1), reason: last_reason })
}

fn attempt(task: TaskKind, p: &GenParams, rng: &mut RngStream) -> Result<EnvState, String> {
    let (w, h) = (p.width, p.height);
    let mut board = Board::empty(w, h);
    let cells = w * h;

    // Blue region: an axis-aligned rectangle, non-wrapping.
    if task.is_append() && p.blue_width > 0 && p.blue_height > 0 {
        if p.blue_width > w || p.blue_height > h {
            return Err("blue region larger than board".into());
        }
        let x0 = rng.range((w - p.blue_width + 1) as u64) as usize;
        let y0 = rng.range((h - p.blue_height + 1) as u64) as usize;
        for y in y0..y0 + p.blue_height {
            for x in x0..x0 + p.blue_width {
                board.set_blue(Pos::new(x as u16, y as u16), true);
            }
        }
    }

    let free_cell = |board: &Board, rng: &mut RngStream, allow_blue: bool| -> Option<Pos> {
        for _ in 0..PLACEMENT_TRIES {
            let pos = Pos::new(rng.range(w as u64) as u16, rng.range(h as u64) as u16);
            if board.get(pos).kind == CellKind::Empty && (allow_blue || !board.is_blue(pos)) {
                return Some(pos);
            }
        }
        None
    };

    let goal = free_cell(&board, rng, false).ok_or("no room for goal")?;
    board.set(goal, Cell::of(CellKind::Goal));

    let scatter = |board: &mut Board, rng: &mut RngStream, kind: CellKind, n: u32| -> bool {
        for _ in 0..n {
            let mut placed = false;
            for _ in 0..PLACEMENT_TRIES {
                let pos = Pos::new(rng.range(w as u64) as u16, rng.range(h as u64) as u16);
                if board.get(pos).kind != CellKind::Empty || board.is_blue(pos) {
                    continue;
                }
                if kind.is_alive() && !alive_placement_safe(board, pos, kind) {
                    continue;
                }
                board.set(pos, Cell::of(kind));
                placed = true;
                break;
            }
            if !placed {
                return false;
            }
        }
        true
    };

    // Inert obstacles first, then the fragile patterns on a quiet board,
    // then the alive furniture (trees, spawners) with stability checks
    // against what is already placed.
    let n_of = |density: f64| (density * cells as f64).round() as u32;
    if !scatter(&mut board, rng, CellKind::Wall, n_of(p.wall_density)) {
        return Err("no room for walls".into());
    }
    if !scatter(&mut board, rng, CellKind::Crate, n_of(p.crate_density)) {
        return Err("no room for crates".into());
    }

    for _ in 0..p.green_patterns {
        if !place_pattern(&mut board, CellColor::Green, rng) {
            return Err("no room for a green pattern".into());
        }
    }
    for _ in 0..p.red_patterns {
        if !place_pattern(&mut board, CellColor::Red, rng) {
            return Err("no room for a red pattern".into());
        }
    }

    if !scatter(&mut board, rng, CellKind::Tree, n_of(p.tree_density)) {
        return Err("no room for trees".into());
    }
    if !scatter(&mut board, rng, CellKind::Spawner, p.spawners) {
        return Err("no room for spawners".into());
    }

    let agent = free_cell(&board, rng, false).ok_or("no room for agent start")?;
    if !goal_reachable(&board, agent, goal) {
        return Err("goal not reachable from agent start".into());
    }

    let episode_rng = rng.fork();
    EnvState::new(board, agent, task, p.rules, episode_rng).map_err(|e| e.to_string())
}

/// A permanent alive cell (tree, spawner) may not give any surrounding
/// empty cell three live neighbors, nor push a neighboring life cell past
/// three; either would set the board in motion.
fn alive_placement_safe(board: &Board, pos: Pos, kind: CellKind) -> bool {
    let mut probe = board.clone();
    probe.set(pos, Cell::of(kind));
    for dy in -1..=1 {
        for dx in -1..=1 {
            if dx == 0 && dy == 0 {
                continue;
            }
            let q = probe.offset(pos, dx, dy);
            let n = probe.count_live_neighbors(q);
            match probe.get(q).kind {
                CellKind::Empty if n == 3 => return false,
                CellKind::Life if n > 3 => return false,
                _ => {}
            }
        }
    }
    true
}

fn place_pattern(board: &mut Board, color: CellColor, rng: &mut RngStream) -> bool {
    let (w, h) = board.dims();
    for _ in 0..PLACEMENT_TRIES {
        let (_, offsets) = STILL_LIFE_LIBRARY[rng.range(STILL_LIFE_LIBRARY.len() as u64) as usize];
        let bw = offsets.iter().map(|&(x, _)| x).max().unwrap() + 1;
        let bh = offsets.iter().map(|&(_, y)| y).max().unwrap() + 1;
        let origin =
            Pos::new(rng.range(w as u64) as u16, rng.range(h as u64) as u16);

        let cells: Vec<Pos> =
            offsets.iter().map(|&(dx, dy)| board.offset(origin, dx, dy)).collect();
        let ok_cells = cells
            .iter()
            .all(|&c| board.get(c).kind == CellKind::Empty && !board.is_blue(c));
        if !ok_cells {
            continue;
        }
        // Margin: everything within Chebyshev distance 2 of the bounding box
        // that is not a pattern cell must be non-alive.
        let mut clear = true;
        'margin: for dy in -2..bh + 2 {
            for dx in -2..bw + 2 {
                let q = board.offset(origin, dx, dy);
                if cells.contains(&q) {
                    continue;
                }
                if board.get(q).kind.is_alive() {
                    clear = false;
                    break 'margin;
                }
            }
        }
        if !clear {
            continue;
        }
        for &c in &cells {
            board.set(c, Cell::life(color));
        }
        return true;
    }
    false
}

/// BFS through empty cells (4-connected, torus); the goal tile itself is the
/// target.
fn goal_reachable(board: &Board, start: Pos, goal: Pos) -> bool {
    let (w, h) = board.dims();
    let mut seen = vec![false; w * h];
    let idx = |p: Pos| p.y as usize * w + p.x as usize;
    let mut queue = VecDeque::from([start]);
    seen[idx(start)] = true;
    while let Some(p) = queue.pop_front() {
        for (dx, dy) in [(0, -1), (0, 1), (1, 0), (-1, 0)] {
            let q = board.offset(p, dx, dy);
            if seen[idx(q)] {
                continue;
            }
            if q == goal {
                return true;
            }
            if board.get(q).kind == CellKind::Empty {
                seen[idx(q)] = true;
                queue.push_back(q);
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ca::{serialize_board, BoardFile, CaRule};

    #[test]
    fn generation_is_deterministic_per_seed() {
        let p = GenParams::desk(TaskKind::AppendStillEasy);
        let a = generate_environment(
            TaskKind::AppendStillEasy,
            &p,
            &mut RngStream::from_seed(42),
        )
        .unwrap();
        let b = generate_environment(
            TaskKind::AppendStillEasy,
            &p,
            &mut RngStream::from_seed(42),
        )
        .unwrap();
        assert_eq!(a.board, b.board);
        assert_eq!(a.agent_pos, b.agent_pos);
    }

    #[test]
    fn zero_densities_leave_only_required_furniture() {
        let mut p = GenParams::desk(TaskKind::AppendStillEasy);
        p.wall_density = 0.0;
        p.crate_density = 0.0;
        p.tree_density = 0.0;
        p.green_patterns = 0;
        let s =
            generate_environment(TaskKind::AppendStillEasy, &p, &mut RngStream::from_seed(7))
                .unwrap();
        assert_eq!(s.board.count_kind(CellKind::Goal), 1);
        assert_eq!(s.board.count_kind(CellKind::Wall), 0);
        assert_eq!(s.board.count_kind(CellKind::Crate), 0);
        assert_eq!(s.board.count_kind(CellKind::Tree), 0);
        assert_eq!(s.board.count_kind(CellKind::Life), 0);
        assert_eq!(s.board.blue_mask().iter().filter(|&&b| b).count(), 9);

        let mut pp = GenParams::desk(TaskKind::PruneStillEasy);
        pp.wall_density = 0.0;
        pp.crate_density = 0.0;
        pp.tree_density = 0.0;
        pp.green_patterns = 0;
        pp.red_patterns = 1;
        let s = generate_environment(TaskKind::PruneStillEasy, &pp, &mut RngStream::from_seed(7))
            .unwrap();
        assert!(s.board.count_life(CellColor::Red) >= 4);
        assert_eq!(s.board.count_kind(CellKind::Wall), 0);
    }

    #[test]
    fn prune_levels_keep_red_still_for_fifty_steps() {
        let p = GenParams::desk(TaskKind::PruneStillEasy);
        for seed in [1u64, 2, 3, 4, 5] {
            let s = generate_environment(
                TaskKind::PruneStillEasy,
                &p,
                &mut RngStream::from_seed(seed),
            )
            .unwrap();
            let mut rolled = s.board.clone();
            let mut rng = RngStream::from_seed(99);
            for _ in 0..50 {
                rolled = rolled.step(None, &CaRule::DETERMINISTIC, &mut rng);
            }
            let reds = |b: &Board| {
                b.positions()
                    .filter(|&q| {
                        b.get(q).kind == CellKind::Life && b.get(q).color == CellColor::Red
                    })
                    .collect::<Vec<_>>()
            };
            assert_eq!(reds(&rolled), reds(&s.board), "seed {seed}");
        }
    }

    #[test]
    fn append_spawn_is_the_only_kind_with_spawners() {
        for task in [
            TaskKind::AppendStillEasy,
            TaskKind::AppendStill,
            TaskKind::AppendSpawn,
            TaskKind::PruneStillEasy,
        ] {
            let p = GenParams::desk(task);
            let s = generate_environment(task, &p, &mut RngStream::from_seed(11)).unwrap();
            let n = s.board.count_kind(CellKind::Spawner);
            if task == TaskKind::AppendSpawn {
                assert!(n > 0);
            } else {
                assert_eq!(n, 0);
            }
        }
    }

    #[test]
    fn generated_level_round_trips_through_the_file_format() {
        let p = GenParams::desk(TaskKind::AppendSpawn);
        let s = generate_environment(TaskKind::AppendSpawn, &p, &mut RngStream::from_seed(3))
            .unwrap();
        let file = BoardFile { board: s.board.clone(), agent_start: Some(s.agent_pos) };
        let text = serialize_board(&file);
        let parsed = crate::ca::parse_board(&text).unwrap();
        assert_eq!(parsed, file);
    }

    #[test]
    fn impossible_parameters_error_with_seed() {
        let mut p = GenParams::desk(TaskKind::AppendStillEasy);
        p.width = 4;
        p.height = 4;
        p.wall_density = 1.0;
        p.max_attempts = 3;
        let e = generate_environment(TaskKind::AppendStillEasy, &p, &mut RngStream::from_seed(5))
            .unwrap_err();
        assert_eq!(e.seed, 5);
        assert_eq!(e.attempts, 3);
    }
}
