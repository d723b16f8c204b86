//! Executes the tasks of a run configuration and writes their artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::config::{ConfigError, RawConfig, RunConfig, Task};
use super::grid_io::Grid;
use super::manifest::{sha256_hex, RunManifest, TaskRecord};
use super::pgm::{render, Scale};
use crate::critical::{
    classify_stability, inverse_branch_census, volume_series, CensusConfig, MassConfig, RateFit,
};
use crate::family::{FamilyError, FamilySpec, ParameterDomain, Point};
use crate::lyapunov::{sweep_grid, BifField, LyapunovGrid};
use crate::measure::{find_periodic, sample_equilibrium, PeriodicConfig, SamplerConfig};
use crate::misiurewicz::{
    continue_cycle, misiurewicz_scan, verify_hit, ContinuationConfig, CycleTrack, ScanConfig, SweepOrder,
};
use crate::scalar::Cx;
use crate::seed::derive_seed;

pub const CACHE_ENV: &str = "BIFLAB_CACHE_DIR";

/// Seed-path tags of the auxiliary random streams.
const TAG_REFERENCE: u64 = u64::MAX - 1;
const TAG_SCAN: u64 = u64::MAX - 2;
const TAG_VOLUME: u64 = u64::MAX - 3;
const TAG_CENSUS: u64 = u64::MAX - 4;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("cannot read config {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },
    #[error("geometry certification failed for {what}: {source}")]
    Geometry { what: String, source: FamilyError },
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::ReadConfig { .. } => 1,
            RunError::Geometry { .. } => 2,
            RunError::Io(_) => 3,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub output: PathBuf,
    pub manifest: RunManifest,
}

impl RunOutcome {
    /// 0 when every task succeeded, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.manifest.tasks.iter().any(|t| t.status != "ok") {
            3
        } else {
            0
        }
    }
}

fn c2(z: Cx<f64>) -> [f64; 2] {
    [z.re, z.im]
}

fn pt2(p: &Point<f64>) -> [[f64; 2]; 2] {
    [c2(p.z), c2(p.w)]
}

fn fit_json(f: &RateFit<f64>) -> Value {
    json!({ "rate": f.rate, "ci": f.ci, "intercept": f.intercept, "points": f.points })
}

/// Sweep output in a form that survives a cache round trip.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
struct SweepData {
    values: Vec<Option<f64>>,
    std_error: Vec<Option<f64>>,
    clipped: Vec<Option<f64>>,
    errors: Vec<(usize, usize, String)>,
}

impl SweepData {
    fn from_grid(g: &LyapunovGrid<f64>) -> Self {
        let pick = |f: fn(&crate::lyapunov::LyapunovEstimate<f64>) -> f64| {
            g.cells.iter().map(|c| c.as_ref().ok().map(f)).collect::<Vec<_>>()
        };
        SweepData {
            values: pick(|e| e.value),
            std_error: pick(|e| e.std_error),
            clipped: pick(|e| e.clipped_fraction),
            errors: g.errors().into_iter().map(|(i, j, e)| (i, j, e.to_string())).collect(),
        }
    }

    fn values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.unwrap_or(f64::NAN)).collect()
    }
}

fn sweep_key(spec: &FamilySpec<f64>, dom: &ParameterDomain<f64>, depth: usize, count: usize, seed: u64) -> String {
    sha256_hex(format!("sweep-v1|{spec:?}|{dom:?}|{depth}|{count}|{seed}").as_bytes())
}

/// `sweep_grid` with an optional on-disk cache keyed by every input.
fn cached_sweep(
    spec: &FamilySpec<f64>,
    dom: &ParameterDomain<f64>,
    depth: usize,
    count: usize,
    seed: u64,
    cache: Option<&Path>,
    manifest: &mut RunManifest,
) -> Result<SweepData, String> {
    let key = sweep_key(spec, dom, depth, count, seed);
    let file = cache.map(|d| d.join(format!("{key}.json")));
    if let Some(f) = &file {
        if let Some(data) = std::fs::read(f).ok().and_then(|b| serde_json::from_slice::<SweepData>(&b).ok()) {
            if data.values.len() == dom.len() {
                manifest.cache_hits.push(key);
                return Ok(data);
            }
        }
    }
    let grid = sweep_grid(spec, dom, depth, count, seed).map_err(|e| e.to_string())?;
    let data = SweepData::from_grid(&grid);
    if let (Some(f), Some(dir)) = (&file, cache) {
        let stored = std::fs::create_dir_all(dir).and_then(|_| {
            let tmp = f.with_extension("tmp");
            std::fs::write(&tmp, serde_json::to_vec(&data).unwrap_or_default())?;
            std::fs::rename(&tmp, f)
        });
        if let Err(e) = stored {
            manifest.warnings.push(format!("cache write failed: {e}"));
        }
    }
    Ok(data)
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    cache: Option<&'a Path>,
    manifest: RunManifest,
    sweep: Option<SweepData>,
    bif: Option<BifField<f64>>,
    floor: Option<f64>,
    tracks: Vec<CycleTrack<f64>>,
}

impl Ctx<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), String> {
        self.manifest.write_artifact(self.out, name, bytes).map_err(|e| format!("writing {name}: {e}"))
    }

    fn write_json(&mut self, name: &str, v: &Value) -> Result<(), String> {
        let mut bytes = serde_json::to_vec_pretty(v).map_err(|e| e.to_string())?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    fn write_grid(&mut self, stem: &str, grid: &Grid, scale: Option<Scale>) -> Result<(), String> {
        self.write(&format!("{stem}.csv"), grid.to_text().as_bytes())?;
        if let Some(s) = scale {
            self.write(&format!("{stem}.pgm"), &render(grid, s))?;
        }
        Ok(())
    }

    fn sweep(&mut self) -> Result<(), String> {
        let t = self.cfg.sweep.as_ref().ok_or("sweep section missing")?;
        let (spec, dom) = (&self.cfg.family, &self.cfg.domain);
        let data = cached_sweep(spec, dom, t.depth, t.count, self.cfg.seed, self.cache, &mut self.manifest)?;
        for (i, j, e) in &data.errors {
            self.manifest.warnings.push(format!("sweep cell ({i}, {j}): {e}"));
        }
        let clipped = data.clipped.iter().flatten().filter(|&&c| c > 0.0).count();
        if clipped > 0 {
            self.manifest.warnings.push(format!("sweep: {clipped} cells clipped some Jacobian samples"));
        }
        let values = Grid::on_domain(dom, data.values());
        let stderr = Grid::on_domain(dom, data.std_error.iter().map(|v| v.unwrap_or(f64::NAN)).collect());
        self.write_grid("L", &values, Some(Scale::Linear))?;
        self.write_grid("L_stderr", &stderr, None)?;
        self.sweep = Some(data);
        Ok(())
    }

    fn ddc(&mut self) -> Result<(), String> {
        let data = self.sweep.as_ref().ok_or("sweep did not complete")?;
        let dom = self.cfg.domain;
        let bif = BifField::from_values(&dom, data.values()).map_err(|e| e.to_string())?;
        let (ix, iy) = bif.interior_dims();
        let density: Vec<f64> = bif.laplacian.iter().map(|v| v / std::f64::consts::TAU).collect();
        let bad = density.iter().filter(|v| !v.is_finite()).count();
        if bad > 0 {
            self.manifest.warnings.push(format!("ddc: {bad} interior nodes touch failed sweep cells"));
        }
        let inner = dom.node(1, 1);
        let grid = Grid { nx: ix, ny: iy, x0: inner.re, y0: inner.im, h: dom.h(), values: density };
        self.write_grid("ddc", &grid, Some(Scale::Signed))?;

        let mut summary = json!({
            "total_mass": bif.total_mass(),
            "boundary_flux": bif.boundary_flux(),
            "interior": [ix, iy],
        });
        if let Some((center, side, nodes)) = self.cfg.ddc.as_ref().and_then(|d| d.reference) {
            let t = self.cfg.sweep.as_ref().ok_or("sweep section missing")?;
            let rdom = ParameterDomain::square(center, side, nodes).map_err(|e| e.to_string())?;
            let seed = derive_seed(self.cfg.seed, &[TAG_REFERENCE]);
            let rdata = cached_sweep(&self.cfg.family, &rdom, t.depth, t.count, seed, self.cache, &mut self.manifest)?;
            let rbif = BifField::from_values(&rdom, rdata.values()).map_err(|e| e.to_string())?;
            let floor = crate::lyapunov::noise_floor(rbif.total_mass());
            summary["reference"] = json!({ "center": c2(center), "side": side, "nodes": nodes, "mass": rbif.total_mass() });
            summary["noise_floor"] = json!(floor);
            self.floor = Some(floor);
        }
        self.write_json("ddc.json", &summary)?;
        self.bif = Some(bif);
        Ok(())
    }

    fn cycles(&mut self) -> Result<(), String> {
        let t = self.cfg.cycles.as_ref().ok_or("cycles section missing")?.clone();
        let spec = &self.cfg.family;
        let dom = self.cfg.domain;
        let cont = ContinuationConfig::default();
        let mut report = Vec::new();
        for &period in &t.periods {
            let set = find_periodic(spec, t.base, period, &PeriodicConfig::default()).map_err(|e| e.to_string())?;
            for base in cycle_representatives(spec, t.base, &set.points, &set.repelling, period).into_iter().take(t.max_tracks) {
                match continue_cycle(spec, &dom, t.base, base, period, &cont, SweepOrder::Standard) {
                    Ok(mut track) => {
                        track.id = self.tracks.len();
                        let invalid = track.valid.len() - track.valid_count();
                        if invalid > 0 {
                            self.manifest.warnings.push(format!(
                                "cycle track {} (period {period}): {invalid} invalid cells, {} on seams",
                                track.id, track.seam_cells
                            ));
                        }
                        report.push(json!({
                            "id": track.id,
                            "period": period,
                            "base_point": pt2(&track.base_point),
                            "valid_cells": track.valid_count(),
                            "seam_cells": track.seam_cells,
                        }));
                        self.tracks.push(track);
                    }
                    Err(e) => self.manifest.warnings.push(format!("cycle at {:?} (period {period}) not continued: {e}", pt2(&base))),
                }
            }
        }
        self.write_json("cycles.json", &json!({ "base": c2(t.base), "tracks": report }))
    }

    fn misiurewicz(&mut self) -> Result<(), String> {
        let t = self.cfg.misiurewicz.as_ref().ok_or("misiurewicz section missing")?;
        let spec = &self.cfg.family;
        let scan_cfg = ScanConfig {
            n0_max: t.n0_max,
            julia_tolerance: t.julia_tolerance,
            seed: derive_seed(self.cfg.seed, &[TAG_SCAN]),
            ..ScanConfig::default()
        };
        let report = misiurewicz_scan(spec, &self.cfg.domain, &self.tracks, &scan_cfg).map_err(|e| e.to_string())?;
        if report.skipped_components > 0 {
            self.manifest.warnings.push(format!("misiurewicz: {} critical curves not scanned", report.skipped_components));
        }
        let mut hits = Vec::new();
        for h in &report.hits {
            let mut v = json!({
                "lambda": c2(h.lambda_star),
                "n0": h.n0,
                "critical_id": h.critical_id,
                "cycle_id": h.cycle_id,
                "cycle_index": h.cycle_index,
                "residual": h.residual,
                "transversality": h.transversality,
                "cycle_point": pt2(&h.cycle_point),
                "multiplier_modulus": h.multiplier_modulus,
                "julia_distance": h.julia_distance,
            });
            if let Some(bif) = &self.bif {
                let floor = self.floor.unwrap_or(0.0);
                let ver = verify_hit(spec, h, bif, floor, None).map_err(|e| e.to_string())?;
                v["neighborhood_mass"] = json!(ver.neighborhood_mass);
                v["above_floor"] = json!(ver.above_floor);
                if ver.contradiction {
                    self.manifest.warnings.push(format!("misiurewicz hit at {:?} has no dd^c mass above the floor", c2(h.lambda_star)));
                }
            }
            hits.push(v);
        }
        self.write_json(
            "misiurewicz.json",
            &json!({
                "hits": hits,
                "skipped_cells": report.skipped_cells,
                "candidates": report.candidates,
                "rejected": {
                    "persistent": report.rejected_persistent,
                    "transversality": report.rejected_transversality,
                    "not_repelling": report.rejected_not_repelling,
                    "julia": report.rejected_julia,
                    "unconverged": report.rejected_unconverged,
                },
                "punctured": report.punctured,
                "skipped_components": report.skipped_components,
            }),
        )
    }

    fn volume(&mut self) -> Result<(), String> {
        let t = self.cfg.volume.as_ref().ok_or("volume section missing")?;
        let spec = &self.cfg.family;
        let window = ParameterDomain::square(t.center, t.side, t.cells).map_err(|e| e.to_string())?;
        let mass_cfg = MassConfig { seed: derive_seed(self.cfg.seed, &[TAG_VOLUME]), ..MassConfig::default() };
        let series = volume_series(spec, &window, t.n_min..=t.n_max, &mass_cfg).map_err(|e| e.to_string())?;
        if !series.truncated.is_empty() {
            self.manifest.warnings.push(format!("volume: cell budget exhausted at n = {:?}", series.truncated));
        }
        let mut v = json!({
            "center": c2(t.center),
            "side": t.side,
            "n": series.ns,
            "log_mass": series.log_mass,
            "truncated": series.truncated,
            "d_star_upper": spec.d_star_upper,
            "threshold": spec.d_star_upper.ln(),
        });
        match series.fit() {
            Ok(fit) => {
                v["fit"] = fit_json(&fit);
                v["stability"] = json!(format!("{:?}", classify_stability(&fit, spec.d_star_upper, spec.d_t())));
            }
            Err(e) => self.manifest.warnings.push(format!("volume: {e}")),
        }
        self.write_json("volume.json", &v)
    }

    fn census(&mut self) -> Result<(), String> {
        let t = self.cfg.census.as_ref().ok_or("census section missing")?;
        let spec = &self.cfg.family;
        let seed = derive_seed(self.cfg.seed, &[TAG_CENSUS]);
        let julia = sample_equilibrium(spec, t.lambda, &SamplerConfig::new(t.sample_depth, t.sample_count), seed)
            .map_err(|e| e.to_string())?;
        let a0 = Point::new(t.center, t.center_w);
        let ccfg = CensusConfig::for_spec(spec);
        let mut rows = Vec::new();
        for &n in &t.ns {
            let c = inverse_branch_census(spec, t.lambda, a0, t.radius, t.rho, n, &julia, &ccfg).map_err(|e| e.to_string())?;
            rows.push(json!({ "n": n, "count": c.count, "total": c.total, "ratio": c.ratio, "max_lipschitz": c.max_lipschitz }));
        }
        self.write_json(
            "census.json",
            &json!({ "lambda": c2(t.lambda), "center": pt2(&a0), "radius": t.radius, "rho": t.rho, "rows": rows }),
        )
    }
}

/// One repelling point of exact period `period` per cycle.
fn cycle_representatives(
    spec: &FamilySpec<f64>,
    lambda: Cx<f64>,
    points: &[Point<f64>],
    repelling: &[bool],
    period: usize,
) -> Vec<Point<f64>> {
    let tol = 1e-7;
    let bound = f64::INFINITY;
    let exact = |p: &Point<f64>| {
        (1..period)
            .filter(|k| period % k == 0)
            .all(|k| spec.iterate(lambda, *p, k, bound).map(|q| q.dist(p) > tol).unwrap_or(true))
    };
    let mut taken = vec![false; points.len()];
    let mut reps = Vec::new();
    for k in 0..points.len() {
        if taken[k] || !repelling[k] || !exact(&points[k]) {
            continue;
        }
        reps.push(points[k]);
        let mut x = points[k];
        for _ in 0..period {
            for (m, q) in points.iter().enumerate() {
                if q.dist(&x) < tol {
                    taken[m] = true;
                }
            }
            match spec.evaluate(lambda, x) {
                Ok(y) => x = y,
                Err(_) => break,
            }
        }
    }
    reps
}

/// Certifies every parameter region the configured tasks touch.
fn check_geometry(cfg: &RunConfig) -> Result<(), RunError> {
    let spec = &cfg.family;
    let geo = |what: &str, source: FamilyError| RunError::Geometry { what: what.to_string(), source };
    spec.validate_polynomial_like(&cfg.domain).map_err(|e| geo("domain", e))?;
    if let Some(v) = &cfg.volume {
        let w = ParameterDomain::square(v.center, v.side, v.cells.max(1)).map_err(|e| geo("volume window", e))?;
        spec.validate_polynomial_like(&w).map_err(|e| geo("volume window", e))?;
    }
    if let Some((c, side, _)) = cfg.ddc.as_ref().and_then(|d| d.reference) {
        spec.escape_bound(c.norm() + side).map_err(|e| geo("ddc reference window", e))?;
    }
    if let Some(c) = &cfg.census {
        spec.escape_bound(c.lambda.norm()).map_err(|e| geo("census parameter", e))?;
    }
    if let Some(c) = &cfg.cycles {
        spec.escape_bound(c.base.norm()).map_err(|e| geo("cycle base parameter", e))?;
    }
    Ok(())
}

/// Parses, validates and runs a configuration text.
pub fn run_text(text: &str, opts: &RunOptions) -> Result<RunOutcome, RunError> {
    let mut raw = RawConfig::parse(text)?;
    if let Some(s) = opts.seed {
        raw.set("run.seed", &s.to_string());
    }
    let cfg = RunConfig::from_raw(&raw)?;
    check_geometry(&cfg)?;
    let out = opts.output.clone().unwrap_or_else(|| cfg.output.clone());
    std::fs::create_dir_all(&out)?;

    let manifest = RunManifest {
        config_hash: sha256_hex(raw.canonical().as_bytes()),
        seed: cfg.seed,
        d_star_upper: cfg.family.d_star_upper,
        ..Default::default()
    };
    let mut ctx = Ctx {
        cfg: &cfg,
        out: &out,
        cache: opts.cache_dir.as_deref(),
        manifest,
        sweep: None,
        bif: None,
        floor: None,
        tracks: Vec::new(),
    };
    let mut failed: Vec<Task> = Vec::new();
    for &task in &cfg.tasks {
        let blocked = match task {
            Task::Ddc => failed.contains(&Task::Sweep),
            Task::Misiurewicz => failed.contains(&Task::Cycles),
            _ => false,
        };
        let start = Instant::now();
        let result = if blocked {
            Err("skipped: a prerequisite task failed".to_string())
        } else {
            match task {
                Task::Sweep => ctx.sweep(),
                Task::Ddc => ctx.ddc(),
                Task::Cycles => ctx.cycles(),
                Task::Misiurewicz => ctx.misiurewicz(),
                Task::Volume => ctx.volume(),
                Task::Census => ctx.census(),
            }
        };
        let status = match (&result, blocked) {
            (Ok(()), _) => "ok",
            (Err(_), true) => "skipped",
            (Err(_), false) => "failed",
        };
        if result.is_err() {
            failed.push(task);
        }
        ctx.manifest.tasks.push(TaskRecord {
            name: task.name().to_string(),
            status: status.to_string(),
            seconds: start.elapsed().as_secs_f64(),
            error: result.err(),
        });
    }
    let manifest = ctx.manifest;
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(std::io::Error::other)?;
    bytes.push(b'\n');
    std::fs::write(out.join("manifest.json"), bytes)?;
    Ok(RunOutcome { output: out, manifest })
}

pub fn run_file(path: &Path, opts: &RunOptions) -> Result<RunOutcome, RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::ReadConfig { path: path.to_path_buf(), source })?;
    run_text(&text, opts)
}

/// Reads a grid CSV and writes its PGM rendering.
pub fn render_file(input: &Path, scale: Scale, output: &Path) -> Result<(), String> {
    let grid = Grid::read(input).map_err(|e| format!("{}: {e}", input.display()))?;
    std::fs::write(output, render(&grid, scale)).map_err(|e| format!("{}: {e}", output.display()))
}

