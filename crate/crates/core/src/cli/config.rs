//! Flat `key = value` run configuration with dotted section names.
//!
//! ```text
//! # quadratic family demo
//! family.preset = quadratic
//! family.escape_radius = 3
//! domain.center = -0.75
//! domain.half_width = 1.5
//! domain.nx = 32
//! run.seed = 7
//! run.tasks = sweep, ddc
//! sweep.depth = 24
//! sweep.count = 500
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use num_complex::Complex64;
use thiserror::Error;

use crate::family::{FamilyError, FamilySpec, ParamPoly, ParameterDomain};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("missing required field `{0}`")]
    Missing(String),
    #[error("field `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("unknown key `{0}`")]
    Unknown(String),
    #[error("family: {0}")]
    Family(#[from] FamilyError),
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), reason: reason.into() }
}

/// Parses `a`, `bi`, `a+bi`, `a-bi`, `i`, `-i` (whitespace ignored).
pub fn parse_complex(s: &str) -> Option<Complex64> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if t.is_empty() {
        return None;
    }
    let Some(body) = t.strip_suffix('i') else {
        return t.parse().ok().map(|re| Complex64::new(re, 0.0));
    };
    // split at the last sign that is not an exponent sign or the leading sign
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        v => v.parse().ok()?,
    };
    Some(Complex64::new(re.parse().ok()?, im))
}

/// Key-value table with line numbers, before interpretation.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: idx + 1 })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(ConfigError::Syntax { line: idx + 1 });
            }
            if entries.insert(k.to_string(), (idx + 1, v.to_string())).is_some() {
                return Err(ConfigError::Duplicate { line: idx + 1, key: k.to_string() });
            }
        }
        Ok(RawConfig { entries })
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), (0, value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.1.as_str())
    }

    fn req(&self, key: &str) -> Result<&str, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    fn parsed<V: FromStr>(&self, key: &str) -> Result<Option<V>, ConfigError> {
        self.get(key)
            .map(|v| v.parse::<V>().map_err(|_| invalid(key, format!("cannot parse `{v}`"))))
            .transpose()
    }

    fn num<V: FromStr>(&self, key: &str) -> Result<V, ConfigError> {
        self.parsed(key)?.ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    fn num_or<V: FromStr>(&self, key: &str, default: V) -> Result<V, ConfigError> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn complex(&self, key: &str) -> Result<Complex64, ConfigError> {
        let v = self.req(key)?;
        parse_complex(v).ok_or_else(|| invalid(key, format!("not a complex number: `{v}`")))
    }

    fn complex_list(&self, key: &str) -> Result<Vec<Complex64>, ConfigError> {
        self.req(key)?
            .split(',')
            .map(|s| parse_complex(s).ok_or_else(|| invalid(key, format!("not a complex number: `{}`", s.trim()))))
            .collect()
    }

    fn usize_list(&self, key: &str) -> Result<Vec<usize>, ConfigError> {
        self.req(key)?
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| invalid(key, format!("not an integer: `{}`", s.trim()))))
            .collect()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Sorted `key = value` lines, independent of layout and comments.
    pub fn canonical(&self) -> String {
        self.entries.iter().map(|(k, (_, v))| format!("{k} = {v}\n")).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Task {
    Sweep,
    Ddc,
    Cycles,
    Misiurewicz,
    Volume,
    Census,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Sweep => "sweep",
            Task::Ddc => "ddc",
            Task::Cycles => "cycles",
            Task::Misiurewicz => "misiurewicz",
            Task::Volume => "volume",
            Task::Census => "census",
        }
    }

    fn parse(s: &str) -> Option<Task> {
        Some(match s {
            "sweep" => Task::Sweep,
            "ddc" => Task::Ddc,
            "cycles" => Task::Cycles,
            "misiurewicz" => Task::Misiurewicz,
            "volume" => Task::Volume,
            "census" => Task::Census,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug)]
pub struct SweepTask {
    pub depth: usize,
    pub count: usize,
}

#[derive(Clone, Debug)]
pub struct DdcTask {
    /// Stable reference window for the noise floor: center, side, nodes.
    pub reference: Option<(Complex64, f64, usize)>,
}

#[derive(Clone, Debug)]
pub struct CyclesTask {
    pub base: Complex64,
    pub periods: Vec<usize>,
    /// Largest number of repelling cycles continued per period.
    pub max_tracks: usize,
}

#[derive(Clone, Debug)]
pub struct MisiurewiczTask {
    pub n0_max: usize,
    pub julia_tolerance: f64,
}

#[derive(Clone, Debug)]
pub struct VolumeTask {
    pub center: Complex64,
    pub side: f64,
    pub cells: usize,
    pub n_min: usize,
    pub n_max: usize,
}

#[derive(Clone, Debug)]
pub struct CensusTask {
    pub lambda: Complex64,
    pub center: Complex64,
    pub center_w: Complex64,
    pub radius: f64,
    pub rho: f64,
    pub ns: Vec<usize>,
    pub sample_depth: usize,
    pub sample_count: usize,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub family: FamilySpec<f64>,
    pub domain: ParameterDomain<f64>,
    pub seed: u64,
    pub output: PathBuf,
    pub tasks: Vec<Task>,
    pub sweep: Option<SweepTask>,
    pub ddc: Option<DdcTask>,
    pub cycles: Option<CyclesTask>,
    pub misiurewicz: Option<MisiurewiczTask>,
    pub volume: Option<VolumeTask>,
    pub census: Option<CensusTask>,
}

const KEYS: &[&str] = &[
    "family.preset",
    "family.escape_radius",
    "family.d_star_upper",
    "domain.center",
    "domain.half_width",
    "domain.half_height",
    "domain.nx",
    "domain.ny",
    "run.seed",
    "run.output",
    "run.tasks",
    "sweep.depth",
    "sweep.count",
    "ddc.reference_center",
    "ddc.reference_side",
    "ddc.reference_nodes",
    "cycles.base",
    "cycles.periods",
    "cycles.max_tracks",
    "misiurewicz.n0_max",
    "misiurewicz.julia_tolerance",
    "volume.center",
    "volume.side",
    "volume.cells",
    "volume.n_min",
    "volume.n_max",
    "census.lambda",
    "census.center",
    "census.center_w",
    "census.radius",
    "census.rho",
    "census.n",
    "census.sample_depth",
    "census.sample_count",
];

/// Fixed keys plus the coefficient tables `family.p.<k>` and `family.q.<j>.<i>`.
fn is_known_key(key: &str) -> bool {
    let parts: Vec<&str> = key.split('.').collect();
    KEYS.contains(&key) || matches!(parts.as_slice(), ["family", "p", _] | ["family", "q", _, _])
}

fn param_poly(raw: &RawConfig, key: &str) -> Result<ParamPoly<f64>, ConfigError> {
    Ok(ParamPoly(raw.complex_list(key)?))
}

fn family(raw: &RawConfig) -> Result<FamilySpec<f64>, ConfigError> {
    let radius: f64 = raw.num("family.escape_radius")?;
    let spec = if let Some(preset) = raw.get("family.preset") {
        match preset {
            "quadratic" => FamilySpec::quadratic(radius),
            "cubic" => FamilySpec::cubic(radius),
            "skew_quadratic" => FamilySpec::skew_quadratic(radius),
            "product_squares" => FamilySpec::product_squares(radius),
            other => match other.strip_prefix("monomial") {
                Some(d) => {
                    let d: usize = d.parse().map_err(|_| invalid("family.preset", format!("unknown preset `{other}`")))?;
                    if d < 2 {
                        return Err(invalid("family.preset", "monomial degree must be at least 2"));
                    }
                    FamilySpec::monomial(d, radius)
                }
                None => return Err(invalid("family.preset", format!("unknown preset `{other}`"))),
            },
        }
    } else {
        // family.p.<k> = coefficients of the λ-polynomial in front of z^k
        let mut p = Vec::new();
        let mut q: Vec<Vec<ParamPoly<f64>>> = Vec::new();
        for key in raw.keys() {
            let parts: Vec<&str> = key.split('.').collect();
            match parts.as_slice() {
                ["family", "p", k] => {
                    let k: usize = k.parse().map_err(|_| invalid(key, "power must be an integer"))?;
                    if p.len() <= k {
                        p.resize(k + 1, ParamPoly::zero());
                    }
                    p[k] = param_poly(raw, key)?;
                }
                ["family", "q", j, i] => {
                    let j: usize = j.parse().map_err(|_| invalid(key, "w power must be an integer"))?;
                    let i: usize = i.parse().map_err(|_| invalid(key, "z power must be an integer"))?;
                    if q.len() <= j {
                        q.resize(j + 1, Vec::new());
                    }
                    if q[j].len() <= i {
                        q[j].resize(i + 1, ParamPoly::zero());
                    }
                    q[j][i] = param_poly(raw, key)?;
                }
                _ => {}
            }
        }
        if p.is_empty() {
            return Err(ConfigError::Missing("family.preset or family.p.<k>".into()));
        }
        if q.is_empty() {
            FamilySpec::univariate(p, radius)?
        } else {
            FamilySpec::skew_product(p, q, radius)?
        }
    };
    Ok(match raw.parsed::<f64>("family.d_star_upper")? {
        Some(d) => spec.with_d_star_upper(d)?,
        None => spec,
    })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_raw(&RawConfig::parse(text)?)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        if let Some(key) = raw.keys().find(|k| !is_known_key(k)) {
            return Err(ConfigError::Unknown(key.to_string()));
        }
        let seed: u64 = raw.num("run.seed")?;
        let family = family(raw)?;
        let center = raw.complex("domain.center")?;
        let hw: f64 = raw.num("domain.half_width")?;
        let nx: usize = raw.num("domain.nx")?;
        let ny: usize = raw.num_or("domain.ny", nx)?;
        let hh: f64 = raw.num_or("domain.half_height", hw * ny as f64 / nx.max(1) as f64)?;
        let domain = ParameterDomain::new(center, hw, hh, nx, ny)?;

        let mut tasks: Vec<Task> = raw
            .req("run.tasks")?
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| Task::parse(s).ok_or_else(|| invalid("run.tasks", format!("unknown task `{s}`"))))
            .collect::<Result<_, _>>()?;
        tasks.sort();
        tasks.dedup();
        let has = |t: Task| tasks.contains(&t);
        if has(Task::Ddc) && !has(Task::Sweep) {
            return Err(invalid("run.tasks", "ddc requires sweep"));
        }
        if has(Task::Misiurewicz) && !has(Task::Cycles) {
            return Err(invalid("run.tasks", "misiurewicz requires cycles"));
        }

        let sweep = has(Task::Sweep)
            .then(|| -> Result<_, ConfigError> { Ok(SweepTask { depth: raw.num("sweep.depth")?, count: raw.num("sweep.count")? }) })
            .transpose()?;
        let ddc = has(Task::Ddc)
            .then(|| -> Result<_, ConfigError> {
                let reference = match raw.get("ddc.reference_center") {
                    Some(_) => Some((
                        raw.complex("ddc.reference_center")?,
                        raw.num("ddc.reference_side")?,
                        raw.num_or("ddc.reference_nodes", nx)?,
                    )),
                    None => None,
                };
                Ok(DdcTask { reference })
            })
            .transpose()?;
        let cycles = has(Task::Cycles)
            .then(|| -> Result<_, ConfigError> {
                Ok(CyclesTask {
                    base: raw.complex("cycles.base")?,
                    periods: raw.usize_list("cycles.periods")?,
                    max_tracks: raw.num_or("cycles.max_tracks", 16)?,
                })
            })
            .transpose()?;
        let misiurewicz = has(Task::Misiurewicz)
            .then(|| -> Result<_, ConfigError> {
                Ok(MisiurewiczTask {
                    n0_max: raw.num("misiurewicz.n0_max")?,
                    julia_tolerance: raw.num_or("misiurewicz.julia_tolerance", 0.05)?,
                })
            })
            .transpose()?;
        let volume = has(Task::Volume)
            .then(|| -> Result<_, ConfigError> {
                let v = VolumeTask {
                    center: raw.complex("volume.center")?,
                    side: raw.num("volume.side")?,
                    cells: raw.num_or("volume.cells", 8)?,
                    n_min: raw.num("volume.n_min")?,
                    n_max: raw.num("volume.n_max")?,
                };
                if v.n_min == 0 || v.n_max < v.n_min {
                    return Err(invalid("volume.n_max", "need 1 <= n_min <= n_max"));
                }
                Ok(v)
            })
            .transpose()?;
        let census = has(Task::Census)
            .then(|| -> Result<_, ConfigError> {
                Ok(CensusTask {
                    lambda: raw.complex("census.lambda")?,
                    center: raw.complex("census.center")?,
                    center_w: raw.get("census.center_w").map_or(Ok(Complex64::new(0.0, 0.0)), |_| raw.complex("census.center_w"))?,
                    radius: raw.num("census.radius")?,
                    rho: raw.num("census.rho")?,
                    ns: raw.usize_list("census.n")?,
                    sample_depth: raw.num_or("census.sample_depth", 30)?,
                    sample_count: raw.num_or("census.sample_count", 2000)?,
                })
            })
            .transpose()?;

        Ok(RunConfig {
            family,
            domain,
            seed,
            output: PathBuf::from(raw.get("run.output").unwrap_or("out")),
            tasks,
            sweep,
            ddc,
            cycles,
            misiurewicz,
            volume,
            census,
        })
    }
}
