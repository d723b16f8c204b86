//! Text grid files: header `# nx ny x0 y0 h`, then `ny` rows of `nx`
//! comma-separated values with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::family::ParameterDomain;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
}

/// Values on a regular node grid with spacing `h` and node `(0, 0)` at `(x0, y0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub h: f64,
    /// Row-major, `j * nx + i`.
    pub values: Vec<f64>,
}

fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

impl Grid {
    pub fn on_domain(dom: &ParameterDomain<f64>, values: Vec<f64>) -> Self {
        let o = dom.origin();
        Grid { nx: dom.nx, ny: dom.ny, x0: o.re, y0: o.im, h: dom.h(), values }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# {} {} {} {} {}\n", self.nx, self.ny, fmt17(self.x0), fmt17(self.y0), fmt17(self.h));
        for row in self.values.chunks(self.nx.max(1)) {
            let line: Vec<String> = row.iter().map(|&v| fmt17(v)).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, GridError> {
        let bad = |line: usize, reason: &str| GridError::Format { line, reason: reason.to_string() };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
        let fields: Vec<&str> = header
            .strip_prefix('#')
            .ok_or_else(|| bad(1, "header must start with `#`"))?
            .split_whitespace()
            .collect();
        if fields.len() != 5 {
            return Err(bad(1, "header needs `nx ny x0 y0 h`"));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(1, "nx and ny must be integers"));
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(1, "x0, y0 and h must be numbers"));
        let (nx, ny) = (int(fields[0])?, int(fields[1])?);
        let (x0, y0, h) = (num(fields[2])?, num(fields[3])?, num(fields[4])?);
        let mut values = Vec::with_capacity(nx * ny);
        let mut rows = 0;
        for (idx, line) in lines {
            let row: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| bad(idx + 1, "not a number")))
                .collect::<Result<_, _>>()?;
            if row.len() != nx {
                return Err(bad(idx + 1, &format!("expected {nx} values, got {}", row.len())));
            }
            values.extend(row);
            rows += 1;
        }
        if rows != ny {
            return Err(bad(0, &format!("expected {ny} rows, got {rows}")));
        }
        Ok(Grid { nx, ny, x0, y0, h, values })
    }

    pub fn read(path: &Path) -> Result<Self, GridError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let values = vec![0.1, -1.0 / 3.0, f64::MIN_POSITIVE, 1e300, f64::NAN, 5e-324];
        let g = Grid { nx: 3, ny: 2, x0: -2.0 / 3.0, y0: 0.1, h: 0.3, values };
        let back = Grid::parse(&g.to_text()).unwrap();
        assert_eq!((back.nx, back.ny), (3, 2));
        for (a, b) in g.values.iter().zip(&back.values) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
        assert_eq!(back.x0.to_bits(), g.x0.to_bits());
        assert_eq!(back.h.to_bits(), g.h.to_bits());
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(Grid::parse("# 2 1 0 0 1\n1,2,3\n").is_err());
        assert!(Grid::parse("# 2 2 0 0 1\n1,2\n").is_err());
        assert!(Grid::parse("2 2 0 0 1\n").is_err());
    }
}
