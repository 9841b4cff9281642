//! Toroidal Game-of-Life engine with typed, colored cells.
//!
//! The update rule is B3/S23 applied synchronously: only `Life` cells are
//! born or die, while `Wall`, `Crate`, `Tree`, `Spawner` and `Goal` cells
//! never change kind. `Tree` and `Spawner` count as alive for neighbor
//! counting. After the life pass, each spawner turns each of its empty Moore
//! neighbors into a yellow `Life` cell with probability `spawn_prob`. An
//! optional freeze zone exempts the eight cells around the agent from every
//! change.
//!
//! Neighbor positions are computed modulo the board dimensions, so on boards
//! narrower than three cells the same neighbor is counted with multiplicity.

mod format;

pub use format::{parse_board, serialize_board, BoardFile, ParseError};

use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum CellKind {
    Empty = 0,
    Life = 1,
    Wall = 2,
    Crate = 3,
    Tree = 4,
    Spawner = 5,
    Goal = 6,
}

impl CellKind {
    /// Counts toward live-neighbor totals.
    #[inline]
    pub fn is_alive(self) -> bool {
        matches!(self, CellKind::Life | CellKind::Tree | CellKind::Spawner)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum CellColor {
    None = 0,
    Gray = 1,
    Green = 2,
    Red = 3,
    Yellow = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub kind: CellKind,
    pub color: CellColor,
}

impl Cell {
    pub const EMPTY: Cell = Cell { kind: CellKind::Empty, color: CellColor::None };

    pub fn life(color: CellColor) -> Cell {
        Cell { kind: CellKind::Life, color }
    }

    pub fn of(kind: CellKind) -> Cell {
        let color = if kind == CellKind::Tree { CellColor::Green } else { CellColor::None };
        Cell { kind, color }
    }

    /// Color this cell contributes as a birth parent. Trees carry green,
    /// spawners breed yellow.
    #[inline]
    fn parent_color(self) -> CellColor {
        match self.kind {
            CellKind::Spawner => CellColor::Yellow,
            _ => self.color,
        }
    }
}

/// Cell coordinate. All arithmetic wraps modulo the board dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pos {
    pub x: u16,
    pub y: u16,
}

impl Pos {
    pub fn new(x: u16, y: u16) -> Pos {
        Pos { x, y }
    }
}

/// The eight Moore offsets in reading order (NW..SE). The spawner pass and
/// the freeze zone both visit neighbors in exactly this order.
pub const MOORE_OFFSETS: [(i32, i32); 8] =
    [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// Dynamics parameters for the stochastic part of the rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaRule {
    /// Probability that a spawner fills each empty Moore neighbor per step.
    pub spawn_prob: f64,
}

impl Default for CaRule {
    fn default() -> Self {
        CaRule { spawn_prob: 0.3 }
    }
}

impl CaRule {
    pub const DETERMINISTIC: CaRule = CaRule { spawn_prob: 0.0 };
}

pub const MAX_SIDE: usize = 1024;

/// Dense toroidal grid of cells plus the goal-region mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Board {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    blue: Vec<bool>,
}

impl Board {
    /// All-empty board. Panics if a dimension is zero or above [`MAX_SIDE`].
    pub fn empty(width: usize, height: usize) -> Board {
        assert!(width > 0 && height > 0, "board dimensions must be positive");
        assert!(width <= MAX_SIDE && height <= MAX_SIDE, "board side above {MAX_SIDE}");
        Board {
            width,
            height,
            cells: vec![Cell::EMPTY; width * height],
            blue: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    fn idx(&self, pos: Pos) -> usize {
        debug_assert!((pos.x as usize) < self.width && (pos.y as usize) < self.height);
        pos.y as usize * self.width + pos.x as usize
    }

    #[inline]
    pub fn get(&self, pos: Pos) -> Cell {
        self.cells[self.idx(pos)]
    }

    #[inline]
    pub fn set(&mut self, pos: Pos, cell: Cell) {
        let i = self.idx(pos);
        self.cells[i] = cell;
    }

    #[inline]
    pub fn is_blue(&self, pos: Pos) -> bool {
        self.blue[self.idx(pos)]
    }

    pub fn set_blue(&mut self, pos: Pos, flag: bool) {
        let i = self.idx(pos);
        self.blue[i] = flag;
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn blue_mask(&self) -> &[bool] {
        &self.blue
    }

    /// Torus-wrapped offset from `pos`.
    #[inline]
    pub fn offset(&self, pos: Pos, dx: i32, dy: i32) -> Pos {
        let w = self.width as i64;
        let h = self.height as i64;
        Pos {
            x: (pos.x as i64 + dx as i64).rem_euclid(w) as u16,
            y: (pos.y as i64 + dy as i64).rem_euclid(h) as u16,
        }
    }

    pub fn positions(&self) -> impl Iterator<Item = Pos> + '_ {
        let w = self.width;
        (0..self.cells.len()).map(move |i| Pos::new((i % w) as u16, (i / w) as u16))
    }

    pub fn count_kind(&self, kind: CellKind) -> usize {
        self.cells.iter().filter(|c| c.kind == kind).count()
    }

    pub fn count_life(&self, color: CellColor) -> usize {
        self.cells.iter().filter(|c| c.kind == CellKind::Life && c.color == color).count()
    }

    /// Live cells (Life, Tree, Spawner) among the eight torus-wrapped Moore
    /// neighbors, counted per neighbor position (with multiplicity on
    /// degenerate boards).
    pub fn count_live_neighbors(&self, pos: Pos) -> u8 {
        let mut n = 0;
        for (dx, dy) in MOORE_OFFSETS {
            if self.get(self.offset(pos, dx, dy)).kind.is_alive() {
                n += 1;
            }
        }
        n
    }

    /// One synchronous update. Every rule reads `self`; the returned board is
    /// the next generation. `frozen_center` exempts the eight cells around
    /// the agent: they are copied unchanged from `self` and spawners do not
    /// draw for them. Spawner draws happen in row-major spawner order,
    /// neighbors in [`MOORE_OFFSETS`] order, one draw per thawed empty
    /// neighbor.
    pub fn step(&self, frozen_center: Option<Pos>, rule: &CaRule, rng: &mut RngStream) -> Board {
        let w = self.width;
        let h = self.height;
        let mut alive = vec![0u8; w * h];
        for (i, c) in self.cells.iter().enumerate() {
            alive[i] = c.kind.is_alive() as u8;
        }

        let mut next = self.clone();

        // Life pass: births and deaths from the pre-step board.
        for y in 0..h {
            let ym = if y == 0 { h - 1 } else { y - 1 } * w;
            let yc = y * w;
            let yp = if y == h - 1 { 0 } else { y + 1 } * w;
            for x in 0..w {
                let xm = if x == 0 { w - 1 } else { x - 1 };
                let xp = if x == w - 1 { 0 } else { x + 1 };
                let n = alive[ym + xm]
                    + alive[ym + x]
                    + alive[ym + xp]
                    + alive[yc + xm]
                    + alive[yc + xp]
                    + alive[yp + xm]
                    + alive[yp + x]
                    + alive[yp + xp];
                let cell = self.cells[yc + x];
                match cell.kind {
                    CellKind::Life => {
                        if n != 2 && n != 3 {
                            next.cells[yc + x] = Cell::EMPTY;
                        }
                    }
                    CellKind::Empty => {
                        if n == 3 {
                            let pos = Pos::new(x as u16, y as u16);
                            next.cells[yc + x] = Cell::life(self.newborn_color(pos));
                        }
                    }
                    _ => {}
                }
            }
        }

        // Spawner pass over the post-life board. Skips frozen cells so the
        // draw sequence is well defined under the freeze override.
        if rule.spawn_prob > 0.0 {
            let frozen = frozen_center.map(|c| self.freeze_set(c));
            for i in 0..self.cells.len() {
                if self.cells[i].kind != CellKind::Spawner {
                    continue;
                }
                let pos = Pos::new((i % w) as u16, (i / w) as u16);
                for (dx, dy) in MOORE_OFFSETS {
                    let np = self.offset(pos, dx, dy);
                    let ni = self.idx(np);
                    if let Some(fr) = &frozen {
                        if fr.contains(&np) {
                            continue;
                        }
                    }
                    if next.cells[ni].kind == CellKind::Empty && rng.chance(rule.spawn_prob) {
                        next.cells[ni] = Cell::life(CellColor::Yellow);
                    }
                }
            }
        }

        // Freeze override: the eight surrounding cells revert to the input.
        if let Some(center) = frozen_center {
            for p in self.freeze_set(center) {
                let i = self.idx(p);
                next.cells[i] = self.cells[i];
            }
        }

        next
    }

    /// The eight cells surrounding `center` (not the center itself).
    fn freeze_set(&self, center: Pos) -> Vec<Pos> {
        MOORE_OFFSETS.iter().map(|&(dx, dy)| self.offset(center, dx, dy)).collect()
    }

    /// Color for a cell born at `pos`: the color shared by at least two of
    /// its three live parents, else gray.
    fn newborn_color(&self, pos: Pos) -> CellColor {
        let mut colors = [CellColor::None; 3];
        let mut k = 0;
        for (dx, dy) in MOORE_OFFSETS {
            let c = self.get(self.offset(pos, dx, dy));
            if c.kind.is_alive() {
                if k < 3 {
                    colors[k] = c.parent_color();
                }
                k += 1;
            }
        }
        debug_assert_eq!(k, 3, "newborn must have exactly three live parents");
        if colors[0] == colors[1] || colors[0] == colors[2] {
            colors[0]
        } else if colors[1] == colors[2] {
            colors[1]
        } else {
            CellColor::Gray
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> RngStream {
        RngStream::from_seed(1)
    }

    /// 2x2 gray block with its top-left corner at `at`.
    pub(crate) fn place_block(board: &mut Board, at: Pos, color: CellColor) {
        for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            board.set(board.offset(at, dx, dy), Cell::life(color));
        }
    }

    #[test]
    fn empty_board_has_no_neighbors() {
        let b = Board::empty(5, 5);
        for pos in b.positions().collect::<Vec<_>>() {
            assert_eq!(b.count_live_neighbors(pos), 0);
        }
    }

    #[test]
    fn block_cell_sees_three_neighbors() {
        let mut b = Board::empty(6, 6);
        place_block(&mut b, Pos::new(2, 2), CellColor::Gray);
        assert_eq!(b.count_live_neighbors(Pos::new(2, 2)), 3);
        assert_eq!(b.count_live_neighbors(Pos::new(3, 3)), 3);
    }

    #[test]
    fn full_3x3_torus_counts_eight_everywhere() {
        let mut b = Board::empty(3, 3);
        for pos in b.positions().collect::<Vec<_>>() {
            b.set(pos, Cell::life(CellColor::Gray));
        }
        // On a 3x3 torus the eight neighbor positions of any cell, corner or
        // center, are exactly the other eight cells.
        assert_eq!(b.count_live_neighbors(Pos::new(1, 1)), 8);
        assert_eq!(b.count_live_neighbors(Pos::new(0, 0)), 8);
    }

    #[test]
    fn block_is_still() {
        let mut b = Board::empty(6, 6);
        place_block(&mut b, Pos::new(2, 2), CellColor::Gray);
        let next = b.step(None, &CaRule::DETERMINISTIC, &mut rng());
        assert_eq!(next, b);
    }

    #[test]
    fn blinker_oscillates_with_period_two() {
        let mut b = Board::empty(7, 7);
        for x in 2..5 {
            b.set(Pos::new(x, 3), Cell::life(CellColor::Gray));
        }
        let one = b.step(None, &CaRule::DETERMINISTIC, &mut rng());
        let mut vertical = Board::empty(7, 7);
        for y in 2..5 {
            vertical.set(Pos::new(3, y), Cell::life(CellColor::Gray));
        }
        assert_eq!(one, vertical);
        let two = one.step(None, &CaRule::DETERMINISTIC, &mut rng());
        assert_eq!(two, b);
    }

    #[test]
    fn fully_frozen_blinker_is_unchanged() {
        let mut b = Board::empty(7, 7);
        for x in 2..5 {
            b.set(Pos::new(x, 3), Cell::life(CellColor::Gray));
        }
        // Freeze centered on the middle cell: the ring holds both end cells
        // (which would die) and both birth sites (3,2) and (3,4). The center
        // itself survives on its own with two live neighbors, so the whole
        // board is a fixed point under the frozen step.
        let next = b.step(Some(Pos::new(3, 3)), &CaRule::DETERMINISTIC, &mut rng());
        assert_eq!(next, b);
    }

    #[test]
    fn freeze_ring_is_bitwise_preserved() {
        let mut b = Board::empty(7, 7);
        for x in 2..5 {
            b.set(Pos::new(x, 3), Cell::life(CellColor::Gray));
        }
        let frozen = Pos::new(3, 4);
        let next = b.step(Some(frozen), &CaRule::DETERMINISTIC, &mut rng());
        for (dx, dy) in MOORE_OFFSETS {
            let p = b.offset(frozen, dx, dy);
            assert_eq!(next.get(p), b.get(p));
        }
    }

    #[test]
    fn newborn_takes_majority_color() {
        // Two green parents + one red parent in an L; the cell born at the
        // corner is green.
        let mut b = Board::empty(6, 6);
        b.set(Pos::new(2, 2), Cell::life(CellColor::Green));
        b.set(Pos::new(3, 2), Cell::life(CellColor::Green));
        b.set(Pos::new(2, 3), Cell::life(CellColor::Red));
        let next = b.step(None, &CaRule::DETERMINISTIC, &mut rng());
        assert_eq!(next.get(Pos::new(3, 3)), Cell::life(CellColor::Green));
    }

    #[test]
    fn newborn_with_three_distinct_parents_is_gray() {
        let mut b = Board::empty(6, 6);
        b.set(Pos::new(2, 2), Cell::life(CellColor::Green));
        b.set(Pos::new(3, 2), Cell::life(CellColor::Yellow));
        b.set(Pos::new(2, 3), Cell::life(CellColor::Red));
        let next = b.step(None, &CaRule::DETERMINISTIC, &mut rng());
        assert_eq!(next.get(Pos::new(3, 3)), Cell::life(CellColor::Gray));
    }

    #[test]
    fn tree_parents_breed_green() {
        let mut b = Board::empty(6, 6);
        b.set(Pos::new(2, 2), Cell::of(CellKind::Tree));
        b.set(Pos::new(3, 2), Cell::of(CellKind::Tree));
        b.set(Pos::new(2, 3), Cell::life(CellColor::Gray));
        let next = b.step(None, &CaRule::DETERMINISTIC, &mut rng());
        assert_eq!(next.get(Pos::new(3, 3)), Cell::life(CellColor::Green));
    }

    #[test]
    fn spawner_fills_neighbors_with_yellow_at_p_one() {
        let mut b = Board::empty(5, 5);
        b.set(Pos::new(2, 2), Cell::of(CellKind::Spawner));
        let rule = CaRule { spawn_prob: 1.0 };
        let next = b.step(None, &rule, &mut rng());
        for (dx, dy) in MOORE_OFFSETS {
            let p = b.offset(Pos::new(2, 2), dx, dy);
            assert_eq!(next.get(p), Cell::life(CellColor::Yellow));
        }
        assert_eq!(next.get(Pos::new(2, 2)).kind, CellKind::Spawner);
    }

    #[test]
    fn spawner_respects_freeze_zone() {
        let mut b = Board::empty(7, 7);
        b.set(Pos::new(2, 2), Cell::of(CellKind::Spawner));
        let rule = CaRule { spawn_prob: 1.0 };
        // Freeze centered east of the spawner: (3,1),(3,2),(3,3) and the
        // column at x=4,5 are frozen; the spawner's west neighbors are not.
        let next = b.step(Some(Pos::new(4, 2)), &rule, &mut rng());
        assert_eq!(next.get(Pos::new(3, 2)), Cell::EMPTY);
        assert_eq!(next.get(Pos::new(1, 2)), Cell::life(CellColor::Yellow));
    }
}
