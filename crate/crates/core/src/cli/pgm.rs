//! 8-bit binary PGM (P5) rendering of grids.

use std::str::FromStr;

use super::grid_io::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Linear,
    /// Natural log of positive values; non-positive values render black.
    Log,
    /// Symmetric about zero: 0 is gray 128, `±max|v|` are 255 and 1.
    Signed,
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linear" => Ok(Scale::Linear),
            "log" => Ok(Scale::Log),
            "signed" => Ok(Scale::Signed),
            other => Err(format!("unknown scale `{other}` (linear, log, signed)")),
        }
    }
}

fn finite_range(vals: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    vals.filter(|v| v.is_finite()).fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

/// Gray levels, row-major in stored grid order. Non-finite cells render black.
pub fn gray_levels(values: &[f64], scale: Scale) -> Vec<u8> {
    let quantize = |t: f64| (t.clamp(0.0, 1.0) * 255.0).round() as u8;
    match scale {
        Scale::Linear | Scale::Log => {
            let mapped: Vec<f64> = match scale {
                Scale::Log => values.iter().map(|&v| if v > 0.0 { v.ln() } else { f64::NAN }).collect(),
                _ => values.to_vec(),
            };
            let Some((lo, hi)) = finite_range(mapped.iter().copied()) else {
                return vec![0; values.len()];
            };
            let span = hi - lo;
            mapped
                .iter()
                .map(|&v| if v.is_finite() && span > 0.0 { quantize((v - lo) / span) } else { 0 })
                .collect()
        }
        Scale::Signed => {
            let m = values.iter().filter(|v| v.is_finite()).fold(0.0f64, |m, v| m.max(v.abs()));
            let constant = finite_range(values.iter().copied()).is_none_or(|(lo, hi)| lo == hi);
            values
                .iter()
                .map(|&v| {
                    if !v.is_finite() {
                        0
                    } else if constant || m == 0.0 {
                        128
                    } else {
                        (128.0 + 127.0 * v / m).round().clamp(1.0, 255.0) as u8
                    }
                })
                .collect()
        }
    }
}

pub fn render(grid: &Grid, scale: Scale) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.nx, grid.ny).into_bytes();
    out.extend(gray_levels(&grid.values, scale));
    out
}
