//! Grid-world files: a TOML header, a `---` line, then an ASCII map.
//!
//! ```text
//! name = "room"
//! horizon = 2
//! slip = 0.0
//! ---
//! #####
//! #S..#
//! #.#.#
//! #####
//! ```
//!
//! `#` is a wall, `.` floor and `S` the (single) start cell.

use std::collections::BTreeSet;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use repemp_core::envemp::{Cell, GridError, GridMDP};

#[derive(Debug, Error)]
pub enum GridFileError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("missing `---` line between header and map")]
    NoSeparator,
    #[error("header: {0}")]
    Header(#[from] toml::de::Error),
    #[error("map line {line}: unexpected character `{ch}`")]
    BadChar { line: usize, ch: char },
    #[error("map rows have different widths")]
    Ragged,
    #[error("map needs exactly one `S`, found {0}")]
    Start(usize),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    name: String,
    #[serde(default = "one")]
    horizon: u32,
    #[serde(default)]
    slip: f64,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub name: String,
    pub horizon: u32,
    pub mdp: GridMDP,
    pub start: Cell,
}

impl GridFile {
    pub fn load(path: impl AsRef<Path>) -> Result<GridFile, GridFileError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| GridFileError::Io { path: path.display().to_string(), source })?;
        GridFile::parse(&text)
    }

    pub fn parse(text: &str) -> Result<GridFile, GridFileError> {
        let mut header = String::new();
        let mut lines = text.lines();
        loop {
            match lines.next() {
                None => return Err(GridFileError::NoSeparator),
                Some(l) if l.trim() == "---" => break,
                Some(l) => {
                    header.push_str(l);
                    header.push('\n');
                }
            }
        }
        let h: Header = toml::from_str(&header)?;
        let rows: Vec<&str> = lines.map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let width = rows.first().map_or(0, |r| r.chars().count());
        if rows.iter().any(|r| r.chars().count() != width) {
            return Err(GridFileError::Ragged);
        }
        let mut walls = BTreeSet::new();
        let mut starts = Vec::new();
        for (y, row) in rows.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                match ch {
                    '#' => {
                        walls.insert((x, y));
                    }
                    '.' => {}
                    'S' => starts.push((x, y)),
                    _ => return Err(GridFileError::BadChar { line: y + 1, ch }),
                }
            }
        }
        if starts.len() != 1 {
            return Err(GridFileError::Start(starts.len()));
        }
        let mdp = GridMDP::new(width, rows.len(), walls, h.slip)?;
        Ok(GridFile { name: h.name, horizon: h.horizon, mdp, start: starts[0] })
    }

    pub fn floor(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for y in 0..self.mdp.height() {
            for x in 0..self.mdp.width() {
                if self.mdp.is_floor((x, y)) {
                    out.push((x, y));
                }
            }
        }
        out
    }
}
