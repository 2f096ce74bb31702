//! Uniform grids and sampled profiles.
//!
//! Every solver in the crate works on uniform node spacing; the grid type
//! enforces that once so downstream code reads `h` instead of re-deriving it.
//! Profiles serialize to a two-column CSV with enough digits to round-trip
//! `f64` exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::SolverError;

/// Uniform grid on `[a, b]` with `n` nodes, spacing `h = (b - a)/(n - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self, SolverError> {
        if !a.is_finite() || !b.is_finite() || b <= a {
            return Err(SolverError::invalid_input(format!(
                "grid endpoints must be finite with b > a (got a={a}, b={b})"
            )));
        }
        if n < 3 {
            return Err(SolverError::invalid_input(format!(
                "grid needs at least 3 nodes (got n={n})"
            )));
        }
        Ok(Grid { a, b, n })
    }

    /// Node spacing.
    pub fn h(&self) -> f64 {
        (self.b - self.a) / (self.n - 1) as f64
    }

    /// Coordinate of node `i`. The last node is pinned to `b` exactly.
    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.b
        } else {
            self.a + i as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Symmetric grids keep a node on the midpoint when `n` is odd.
    pub fn is_symmetric(&self) -> bool {
        self.a == -self.b && self.n % 2 == 1
    }
}

/// Values sampled on the nodes of a grid. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Profile {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, SolverError> {
        if values.len() != grid.n {
            return Err(SolverError::invalid_input(format!(
                "profile has {} values for a grid of {} nodes",
                values.len(),
                grid.n
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(SolverError::invalid_input(format!(
                "profile contains a non-finite value ({v})"
            )));
        }
        Ok(Profile { grid, values })
    }

    /// Profile that is identically zero on `grid`.
    pub fn zeros(grid: Grid) -> Self {
        Profile {
            grid,
            values: vec![0.0; grid.n],
        }
    }

    /// Sample `f` at every node.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self, SolverError> {
        Profile::new(grid, grid.nodes().into_iter().map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// CSV document: `# grid` header, column names, one row per node.
    /// 17 significant digits, enough for exact `f64` round-trips.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&grid_header(&self.grid));
        out.push_str("x,value\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", fmt_f64(self.grid.x(i)), fmt_f64(*v)));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), SolverError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self, SolverError> {
        let (grid, rows) = parse_csv(text, 1)?;
        Profile::new(grid, rows.into_iter().map(|r| r[0]).collect())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, SolverError> {
        Profile::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// 17 significant digits; round-trips every finite `f64` exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn grid_header(grid: &Grid) -> String {
    format!(
        "# grid a={} b={} n={}\n",
        fmt_f64(grid.a),
        fmt_f64(grid.b),
        grid.n
    )
}

/// Parse a profile-family CSV: `# grid` header line, a column-name line, then
/// `1 + cols` comma-separated numeric columns (x first).
pub(crate) fn parse_csv(text: &str, cols: usize) -> Result<(Grid, Vec<Vec<f64>>), SolverError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| SolverError::Parse("empty document".into()))?;
    let grid = parse_grid_header(header)?;
    // Column-name line; content is informational only.
    lines
        .next()
        .ok_or_else(|| SolverError::Parse("missing column header".into()))?;
    let mut rows = Vec::with_capacity(grid.n);
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols + 1 {
            return Err(SolverError::Parse(format!(
                "row {} has {} fields, expected {}",
                lineno + 3,
                fields.len(),
                cols + 1
            )));
        }
        let mut row = Vec::with_capacity(cols);
        // fields[0] is the node coordinate; the grid header is authoritative,
        // so the x column is not re-parsed into the result.
        for f in &fields[1..] {
            row.push(
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| SolverError::Parse(format!("row {}: {e}", lineno + 3)))?,
            );
        }
        rows.push(row);
    }
    if rows.len() != grid.n {
        return Err(SolverError::Parse(format!(
            "grid header says n={} but found {} rows",
            grid.n,
            rows.len()
        )));
    }
    Ok((grid, rows))
}

fn parse_grid_header(line: &str) -> Result<Grid, SolverError> {
    let rest = line
        .strip_prefix("# grid ")
        .ok_or_else(|| SolverError::Parse("first line is not a '# grid' header".into()))?;
    let mut a = None;
    let mut b = None;
    let mut n = None;
    for part in rest.split_whitespace() {
        let (key, val) = part
            .split_once('=')
            .ok_or_else(|| SolverError::Parse(format!("bad header field '{part}'")))?;
        let bad = |k: &str| SolverError::Parse(format!("header field '{k}' is not numeric"));
        match key {
            "a" => a = Some(val.parse::<f64>().map_err(|_| bad("a"))?),
            "b" => b = Some(val.parse::<f64>().map_err(|_| bad("b"))?),
            "n" => n = Some(val.parse::<usize>().map_err(|_| bad("n"))?),
            _ => return Err(SolverError::Parse(format!("unknown header key '{key}'"))),
        }
    }
    match (a, b, n) {
        (Some(a), Some(b), Some(n)) => Grid::new(a, b, n),
        _ => Err(SolverError::Parse("header must carry a=, b= and n=".into())),
    }
}
