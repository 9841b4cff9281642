//! Plain-text board files.
//!
//! ```text
//! [terrain]
//! .#cTSE
//! agry.A
//! [blue]
//! ..BB..
//! ......
//! ```
//!
//! Terrain glyphs: `.` empty, `#` wall, `c` crate, `T` tree, `S` spawner,
//! `E` goal, `a`/`g`/`r`/`y` gray/green/red/yellow life, `A` agent start
//! (empty underneath). The `[blue]` section is optional; missing means all
//! false. Serialization is canonical: rows are LF-terminated and `[blue]` is
//! emitted only when some flag is set.

use std::fmt;

use super::{Board, Cell, CellColor, CellKind, Pos, MAX_SIDE};

/// A parsed board file: the grid plus the optional agent start marker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoardFile {
    pub board: Board,
    pub agent_start: Option<Pos>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// 1-based line in the file.
    pub line: usize,
    /// 1-based column; 0 when the error concerns the whole line.
    pub col: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    MissingTerrainHeader,
    UnknownGlyph(char),
    RaggedRow { expected: usize, got: usize },
    EmptyGrid,
    OversizedGrid,
    DuplicateAgent,
    UnexpectedSection(String),
    BlueSizeMismatch,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: ", self.line, self.col)?;
        match &self.kind {
            ParseErrorKind::MissingTerrainHeader => write!(f, "expected [terrain] header"),
            ParseErrorKind::UnknownGlyph(c) => write!(f, "unknown glyph {c:?}"),
            ParseErrorKind::RaggedRow { expected, got } => {
                write!(f, "ragged row: expected width {expected}, got {got}")
            }
            ParseErrorKind::EmptyGrid => write!(f, "terrain section has no rows"),
            ParseErrorKind::OversizedGrid => write!(f, "grid side exceeds {MAX_SIDE}"),
            ParseErrorKind::DuplicateAgent => write!(f, "second agent marker"),
            ParseErrorKind::UnexpectedSection(s) => write!(f, "unexpected section {s:?}"),
            ParseErrorKind::BlueSizeMismatch => {
                write!(f, "[blue] section does not match terrain dimensions")
            }
        }
    }
}

impl std::error::Error for ParseError {}

fn glyph_to_cell(c: char) -> Option<(Cell, bool)> {
    let cell = match c {
        '.' => Cell::EMPTY,
        '#' => Cell::of(CellKind::Wall),
        'c' => Cell::of(CellKind::Crate),
        'T' => Cell::of(CellKind::Tree),
        'S' => Cell::of(CellKind::Spawner),
        'E' => Cell::of(CellKind::Goal),
        'a' => Cell::life(CellColor::Gray),
        'g' => Cell::life(CellColor::Green),
        'r' => Cell::life(CellColor::Red),
        'y' => Cell::life(CellColor::Yellow),
        'A' => return Some((Cell::EMPTY, true)),
        _ => return None,
    };
    Some((cell, false))
}

fn cell_to_glyph(cell: Cell) -> char {
    match cell.kind {
        CellKind::Empty => '.',
        CellKind::Wall => '#',
        CellKind::Crate => 'c',
        CellKind::Tree => 'T',
        CellKind::Spawner => 'S',
        CellKind::Goal => 'E',
        CellKind::Life => match cell.color {
            CellColor::Green => 'g',
            CellColor::Red => 'r',
            CellColor::Yellow => 'y',
            _ => 'a',
        },
    }
}

pub fn parse_board(text: &str) -> Result<BoardFile, ParseError> {
    let err = |line, col, kind| ParseError { line, col, kind };
    let mut lines = text.lines().enumerate().peekable();

    match lines.next() {
        Some((_, "[terrain]")) => {}
        Some((i, _)) => return Err(err(i + 1, 0, ParseErrorKind::MissingTerrainHeader)),
        None => return Err(err(1, 0, ParseErrorKind::MissingTerrainHeader)),
    }

    let mut rows: Vec<(usize, &str)> = Vec::new();
    let mut blue_header_line = None;
    for (i, line) in lines.by_ref() {
        if line == "[blue]" {
            blue_header_line = Some(i);
            break;
        }
        if line.starts_with('[') {
            return Err(err(i + 1, 0, ParseErrorKind::UnexpectedSection(line.to_string())));
        }
        if line.is_empty() {
            continue;
        }
        rows.push((i, line));
    }
    if rows.is_empty() {
        return Err(err(1, 0, ParseErrorKind::EmptyGrid));
    }

    let width = rows[0].1.chars().count();
    let height = rows.len();
    if width == 0 {
        return Err(err(rows[0].0 + 1, 0, ParseErrorKind::EmptyGrid));
    }
    if width > MAX_SIDE || height > MAX_SIDE {
        return Err(err(rows[0].0 + 1, 0, ParseErrorKind::OversizedGrid));
    }

    let mut board = Board::empty(width, height);
    let mut agent = None;
    for (y, &(line_no, row)) in rows.iter().enumerate() {
        let got = row.chars().count();
        if got != width {
            return Err(err(line_no + 1, 0, ParseErrorKind::RaggedRow { expected: width, got }));
        }
        for (x, ch) in row.chars().enumerate() {
            let (cell, is_agent) = glyph_to_cell(ch)
                .ok_or_else(|| err(line_no + 1, x + 1, ParseErrorKind::UnknownGlyph(ch)))?;
            let pos = Pos::new(x as u16, y as u16);
            if is_agent {
                if agent.is_some() {
                    return Err(err(line_no + 1, x + 1, ParseErrorKind::DuplicateAgent));
                }
                agent = Some(pos);
            }
            board.set(pos, cell);
        }
    }

    if blue_header_line.is_some() {
        let mut blue_rows: Vec<(usize, &str)> = Vec::new();
        for (i, line) in lines {
            if line.starts_with('[') {
                return Err(err(i + 1, 0, ParseErrorKind::UnexpectedSection(line.to_string())));
            }
            if line.is_empty() {
                continue;
            }
            blue_rows.push((i, line));
        }
        if blue_rows.len() != height {
            let line = blue_header_line.unwrap() + 1;
            return Err(err(line, 0, ParseErrorKind::BlueSizeMismatch));
        }
        for (y, &(line_no, row)) in blue_rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(err(line_no + 1, 0, ParseErrorKind::BlueSizeMismatch));
            }
            for (x, ch) in row.chars().enumerate() {
                match ch {
                    '.' => {}
                    'B' => board.set_blue(Pos::new(x as u16, y as u16), true),
                    _ => {
                        return Err(err(line_no + 1, x + 1, ParseErrorKind::UnknownGlyph(ch)));
                    }
                }
            }
        }
    }

    Ok(BoardFile { board, agent_start: agent })
}

pub fn serialize_board(file: &BoardFile) -> String {
    let board = &file.board;
    let (w, h) = board.dims();
    let mut out = String::with_capacity((w + 1) * (h + 1) * 2);
    out.push_str("[terrain]\n");
    for y in 0..h {
        for x in 0..w {
            let pos = Pos::new(x as u16, y as u16);
            if file.agent_start == Some(pos) {
                out.push('A');
            } else {
                out.push(cell_to_glyph(board.get(pos)));
            }
        }
        out.push('\n');
    }
    if board.blue_mask().iter().any(|&b| b) {
        out.push_str("[blue]\n");
        for y in 0..h {
            for x in 0..w {
                out.push(if board.is_blue(Pos::new(x as u16, y as u16)) { 'B' } else { '.' });
            }
            out.push('\n');
        }
    }
    out
}
