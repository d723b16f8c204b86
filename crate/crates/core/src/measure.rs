//! Equilibrium measure sampling, periodic points and moment discrepancies.
//!
//! The equilibrium measure `μ_λ` is approximated by endpoints of random
//! backward orbits: start anywhere in `V`, repeatedly pick one of the `d_t`
//! preimages (with multiplicity) and keep the last point. The final `m`
//! branch choices of the `N` orbits are stratified over all `d_t^m`
//! itineraries with a random digit shift, so every orbit is still marginally
//! uniform but the sample covers the cylinders of `J_λ` evenly.

use num_traits::{One, Zero};
use rand::Rng as _;
use rayon::prelude::*;
use thiserror::Error;

use crate::family::{FamilyError, FamilyKind, FamilySpec, Point};
use crate::polyroots::{self, PolyEval, RootError, SolverConfig};
use crate::scalar::{cx, is_finite, Cx, Real};
use crate::seed::{derive_seed, rng_for};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error("root solve failed: {0}")]
    RootSolve(String),
    #[error("StartOnExceptionalOrbit: backward orbit {orbit} kept collapsing after {restarts} restarts")]
    StartOnExceptionalOrbit { orbit: usize, restarts: usize },
    #[error("DegreeCapExceeded: period equation has degree {degree} above cap {cap}")]
    DegreeCapExceeded { degree: usize, cap: usize },
    #[error("sample is empty")]
    EmptySample,
    #[error("samples belong to different parameters")]
    ParameterMismatch,
    #[error("depth {depth} must exceed the discarded transient {transient}")]
    DepthTooShort { depth: usize, transient: usize },
    #[error("period must be at least 1")]
    ZeroPeriod,
}

impl<T: Real> From<RootError<T>> for MeasureError {
    fn from(e: RootError<T>) -> Self {
        MeasureError::RootSolve(e.to_string())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SamplerConfig {
    pub depth: usize,
    pub count: usize,
    /// Defaults to `depth / 3`.
    pub transient: Option<usize>,
    pub stratify: bool,
    /// Consecutive fully-collapsed preimage steps that trigger a restart.
    pub collapse_run: usize,
    pub max_restarts: usize,
}

impl SamplerConfig {
    pub fn new(depth: usize, count: usize) -> Self {
        SamplerConfig { depth, count, transient: None, stratify: true, collapse_run: 3, max_restarts: 8 }
    }

    pub fn transient(&self) -> usize {
        self.transient.unwrap_or(self.depth / 3)
    }
}

/// Uniformly weighted point cloud approximating `μ_λ`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureSample<T: Real> {
    pub lambda: Cx<T>,
    pub points: Vec<Point<T>>,
    pub depth: usize,
    pub seed: u64,
    pub discarded_transient: usize,
    /// Orbits restarted by the exceptional-orbit heuristic.
    pub restarts: usize,
}

impl<T: Real> MeasureSample<T> {
    /// Wraps an arbitrary point list (e.g. periodic points) as a sample.
    pub fn from_points(lambda: Cx<T>, points: Vec<Point<T>>) -> Self {
        MeasureSample { lambda, points, depth: 0, seed: 0, discarded_transient: 0, restarts: 0 }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Weight of each point; the weights sum to one (vacuously when empty).
    pub fn weight(&self) -> T {
        if self.points.is_empty() {
            T::zero()
        } else {
            T::one() / T::nat(self.points.len())
        }
    }

    /// Distance from `pt` to the nearest sample point.
    pub fn nearest_distance(&self, pt: &Point<T>) -> T {
        self.points
            .iter()
            .map(|p| p.dist(pt))
            .fold(T::infinity(), T::min)
    }
}

fn uniform_in_disk<T: Real>(rng: &mut impl rand::Rng, radius: T) -> Cx<T> {
    let r = radius * T::c(rng.gen::<f64>().sqrt());
    let t = T::c(2.0 * std::f64::consts::PI * rng.gen::<f64>());
    cx(r * t.cos(), r * t.sin())
}

/// Per-sample stratification of the last `levels` branch choices.
#[derive(Clone, Debug)]
struct Strata {
    base: usize,
    levels: usize,
    shift: Vec<usize>,
}

impl Strata {
    fn new(d: usize, count: usize, depth: usize, enabled: bool, seed: u64) -> Self {
        let mut levels = 0;
        let mut size = 1usize;
        if enabled && d >= 2 {
            while levels < depth && size.saturating_mul(d) <= count {
                size *= d;
                levels += 1;
            }
        }
        let mut rng = rng_for(seed, &[u64::MAX]);
        let shift = (0..levels).map(|_| rng.gen_range(0..d)).collect();
        Strata { base: d, levels, shift }
    }

    /// Forced choice at `step` (0-based from the start) for orbit `i`.
    fn choice(&self, i: usize, step: usize, depth: usize) -> Option<usize> {
        let k = depth - 1 - step;
        if k >= self.levels {
            return None;
        }
        let stratum = i % self.base.pow(self.levels as u32);
        let digit = (stratum / self.base.pow(k as u32)) % self.base;
        Some((digit + self.shift[k]) % self.base)
    }
}

/// Samples `μ_λ` by `count` independent backward orbits of length `depth`.
pub fn sample_equilibrium<T: Real>(
    spec: &FamilySpec<T>,
    lambda: Cx<T>,
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<MeasureSample<T>, MeasureError> {
    sample_equilibrium_from(spec, lambda, cfg, seed, None)
}

/// As [`sample_equilibrium`], with every orbit's first attempt starting at
/// `start` instead of a random point.
pub fn sample_equilibrium_from<T: Real>(
    spec: &FamilySpec<T>,
    lambda: Cx<T>,
    cfg: &SamplerConfig,
    seed: u64,
    start: Option<Point<T>>,
) -> Result<MeasureSample<T>, MeasureError> {
    spec.escape_bound(lambda.norm())?;
    let transient = cfg.transient();
    if cfg.count > 0 && cfg.depth < transient + 1 {
        return Err(MeasureError::DepthTooShort { depth: cfg.depth, transient });
    }
    let strata = Strata::new(spec.d_t(), cfg.count, cfg.depth, cfg.stratify, seed);
    let orbits: Vec<(Point<T>, usize)> = (0..cfg.count)
        .into_par_iter()
        .map(|i| backward_orbit(spec, lambda, cfg, seed, i, &strata, start))
        .collect::<Result<_, _>>()?;
    let restarts = orbits.iter().map(|o| o.1).sum();
    Ok(MeasureSample {
        lambda,
        points: orbits.into_iter().map(|o| o.0).collect(),
        depth: cfg.depth,
        seed,
        discarded_transient: transient,
        restarts,
    })
}

fn backward_orbit<T: Real>(
    spec: &FamilySpec<T>,
    lambda: Cx<T>,
    cfg: &SamplerConfig,
    seed: u64,
    index: usize,
    strata: &Strata,
    start: Option<Point<T>>,
) -> Result<(Point<T>, usize), MeasureError> {
    let mut rng = rng_for(seed, &[index as u64]);
    let radius = spec.escape_radius;
    let random_start = |rng: &mut crate::seed::Rng| match spec.kind {
        FamilyKind::Univariate => Point::scalar(uniform_in_disk(rng, radius)),
        FamilyKind::SkewProduct => Point::new(uniform_in_disk(rng, radius), uniform_in_disk(rng, radius)),
    };
    let d = spec.d_t();
    let mut restarts = 0;
    let mut x = match start {
        Some(s) => s,
        None => random_start(&mut rng),
    };
    'attempt: loop {
        let mut collapsed = 0;
        for step in 0..cfg.depth {
            let pre = polyroots::solve_shifted(spec, lambda, x)?;
            let choices = pre.expanded();
            debug_assert_eq!(choices.len(), d);
            let free = rng.gen_range(0..d);
            let k = strata.choice(index, step, cfg.depth).unwrap_or(free);
            if d > 1 && pre.points().len() == 1 {
                collapsed += 1;
                if collapsed >= cfg.collapse_run {
                    restarts += 1;
                    if restarts > cfg.max_restarts {
                        return Err(MeasureError::StartOnExceptionalOrbit { orbit: index, restarts });
                    }
                    x = random_start(&mut rng);
                    continue 'attempt;
                }
            } else {
                collapsed = 0;
            }
            x = choices[k];
        }
        return Ok((x, restarts));
    }
}

/// Indices `(a, b)` of the moments `mean(z^a z̄^b)` with `a + b ≤ 3`.
pub const MOMENT_INDICES: [(u32, u32); 10] =
    [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)];

/// Low-order moments of each coordinate: `[z-moments..., w-moments...]`.
pub fn moments<T: Real>(points: &[Point<T>]) -> Vec<Cx<T>> {
    let n = T::nat(points.len().max(1));
    let mut out = Vec::with_capacity(2 * MOMENT_INDICES.len());
    for coord in 0..2 {
        for &(a, b) in &MOMENT_INDICES {
            let s = points.iter().fold(Cx::<T>::zero(), |acc, p| {
                let z = if coord == 0 { p.z } else { p.w };
                acc + z.powu(a) * z.conj().powu(b)
            });
            out.push(s / n);
        }
    }
    out
}

/// Largest absolute difference between two moment vectors.
pub fn moment_gap<T: Real>(a: &[Cx<T>], b: &[Cx<T>]) -> T {
    a.iter()
        .zip(b)
        .map(|(x, y)| (*x - *y).norm())
        .fold(T::zero(), T::max)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PushforwardReport<T: Real> {
    pub gap: T,
    /// Points whose image overflowed (excluded from the image moments).
    pub escaped: usize,
}

/// Compares the moments of a sample with those of its image under `f_λ`.
pub fn pushforward_check<T: Real>(
    sample: &MeasureSample<T>,
    spec: &FamilySpec<T>,
) -> Result<PushforwardReport<T>, MeasureError> {
    if sample.is_empty() {
        return Err(MeasureError::EmptySample);
    }
    let images: Vec<Point<T>> = sample
        .points
        .iter()
        .filter_map(|&p| spec.evaluate(sample.lambda, p).ok())
        .collect();
    let escaped = sample.len() - images.len();
    let gap = moment_gap(&moments(&sample.points), &moments(&images));
    Ok(PushforwardReport { gap, escaped })
}

/// Max moment gap between two samples at the same parameter.
pub fn discrepancy<T: Real>(a: &MeasureSample<T>, b: &MeasureSample<T>) -> Result<T, MeasureError> {
    if (a.lambda - b.lambda).norm() > T::tol(1e-12) * (T::one() + a.lambda.norm()) {
        return Err(MeasureError::ParameterMismatch);
    }
    Ok(moment_gap(&moments(&a.points), &moments(&b.points)))
}

#[derive(Clone, Copy, Debug)]
pub struct PeriodicConfig<T: Real> {
    /// Largest `d_t^n` solved directly (univariate only).
    pub degree_cap: usize,
    /// A point is repelling when every multiplier exceeds `1 + repelling_tol`.
    pub repelling_tol: T,
    /// Newton path: distinct points closer than this are one point.
    pub dedup_radius: T,
    pub newton_iterations: usize,
    pub residual_tol: T,
    /// Above the cap, fall back to Newton from sampled seeds instead of failing.
    pub newton_beyond_cap: bool,
}

impl<T: Real> Default for PeriodicConfig<T> {
    fn default() -> Self {
        PeriodicConfig {
            degree_cap: 4096,
            repelling_tol: T::tol(1e-9),
            dedup_radius: T::tol(1e-8),
            newton_iterations: 60,
            residual_tol: T::tol(1e-10),
            newton_beyond_cap: true,
        }
    }
}

/// Solutions of `f_λ^n(x) = x` with their multipliers.
#[derive(Clone, Debug)]
pub struct CycleSet<T: Real> {
    pub lambda: Cx<T>,
    pub period: usize,
    pub points: Vec<Point<T>>,
    pub multiplicities: Vec<usize>,
    /// Eigenvalues of `D(f_λ^n)` at each point (one per ambient dimension).
    pub multipliers: Vec<Vec<Cx<T>>>,
    pub repelling: Vec<bool>,
    pub residual_max: T,
    /// Newton path only: fraction of the `d_t^n` expected points not found.
    pub miss_rate: Option<T>,
}

impl<T: Real> CycleSet<T> {
    /// Count with multiplicity.
    pub fn count(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    pub fn repelling_points(&self) -> Vec<Point<T>> {
        self.points
            .iter()
            .zip(&self.repelling)
            .filter(|(_, &r)| r)
            .map(|(p, _)| *p)
            .collect()
    }

    /// Repelling fraction, counted with multiplicity.
    pub fn repelling_fraction(&self) -> T {
        let rep: usize = self
            .multiplicities
            .iter()
            .zip(&self.repelling)
            .filter(|(_, &r)| r)
            .map(|(m, _)| *m)
            .sum();
        T::nat(rep) / T::nat(self.count().max(1))
    }

    pub fn repelling_sample(&self) -> MeasureSample<T> {
        MeasureSample::from_points(self.lambda, self.repelling_points())
    }
}

/// `f_λ^n(z) − z` evaluated by iterating the map, never expanded.
pub struct PeriodEquation<'a, T: Real> {
    pub spec: &'a FamilySpec<T>,
    pub lambda: Cx<T>,
    pub period: usize,
}

impl<T: Real> PeriodEquation<'_, T> {
    /// `(f^n(z), (f^n)'(z))`, or the step at which `|f^k(z)|` exceeded `big`.
    fn orbit(&self, z: Cx<T>, big: T) -> Result<(Cx<T>, Cx<T>), (usize, Cx<T>, Cx<T>)> {
        let mut x = z;
        let mut d = Cx::<T>::one();
        for k in 0..self.period {
            let pp = self.spec.p_partials(self.lambda, x);
            d = d * pp.dz;
            x = pp.v;
            if !(x.norm() < big) {
                return Err((k + 1, x, d));
            }
        }
        Ok((x, d))
    }
}

impl<T: Real> PolyEval<T> for PeriodEquation<'_, T> {
    fn degree(&self) -> usize {
        self.spec.deg_p().pow(self.period as u32)
    }

    fn eval(&self, z: Cx<T>) -> (Cx<T>, Cx<T>) {
        match self.orbit(z, T::infinity()) {
            Ok((x, d)) => (x - z, d - Cx::<T>::one()),
            Err((_, x, d)) => (x - z, d - Cx::<T>::one()),
        }
    }

    fn scale(&self, z: Cx<T>) -> T {
        let (x, d) = match self.orbit(z, T::infinity()) {
            Ok(v) => v,
            Err((_, x, d)) => (x, d),
        };
        T::nat(self.period) * (T::one() + d.norm()) * z.norm().max(T::one()) + x.norm()
    }

    fn newton_ratio(&self, z: Cx<T>) -> Cx<T> {
        let big = T::c(1e100).min(T::max_value().sqrt());
        match self.orbit(z, big) {
            Ok((x, d)) => (x - z) / (d - Cx::<T>::one()),
            Err((k, x, d)) => {
                // Far out the map is dominated by its leading term, so each
                // further step divides x/(f^k)' by the degree.
                let remaining = (self.period - k) as i32;
                x / d / T::nat(self.spec.deg_p()).powi(remaining)
            }
        }
    }
}

/// All `d_t^n` backward images of `a` under `f_λ^n`, with multiplicity, in
/// canonical branch order (leaf `i` has base-`d_t` digits = branch choices,
/// first step most significant).
pub fn backward_tree<T: Real>(
    spec: &FamilySpec<T>,
    lambda: Cx<T>,
    a: Point<T>,
    depth: usize,
) -> Result<Vec<Point<T>>, MeasureError> {
    let mut level = vec![a];
    for _ in 0..depth {
        let next: Vec<Vec<Point<T>>> = level
            .par_iter()
            .map(|&x| polyroots::solve_shifted(spec, lambda, x).map(|p| p.expanded()))
            .collect::<Result<_, _>>()?;
        level = next.into_iter().flatten().collect();
    }
    Ok(level)
}

/// A point close to `J_λ`: a deterministic backward orbit from inside `V`.
fn julia_anchor<T: Real>(spec: &FamilySpec<T>, lambda: Cx<T>) -> Result<Point<T>, MeasureError> {
    let r = spec.escape_radius * T::c(0.5);
    let mut x = Point::new(cx(r * T::c(0.6), r * T::c(0.8)), cx(r * T::c(0.8), -r * T::c(0.6)));
    if spec.kind == FamilyKind::Univariate {
        x.w = Cx::<T>::zero();
    }
    for _ in 0..24 {
        x = polyroots::solve_shifted(spec, lambda, x)?.expanded()[0];
    }
    Ok(x)
}

pub(crate) fn multipliers<T: Real>(spec: &FamilySpec<T>, lambda: Cx<T>, x: Point<T>, n: usize) -> Vec<Cx<T>> {
    let mut mz = Cx::<T>::one();
    let mut mw = Cx::<T>::one();
    let mut y = x;
    for _ in 0..n {
        let j = spec.jacobian_matrix(lambda, y);
        mz = mz * j[0][0];
        mw = mw * j[1][1];
        y = match spec.evaluate(lambda, y) {
            Ok(v) => v,
            Err(_) => break,
        };
    }
    match spec.kind {
        FamilyKind::Univariate => vec![mz],
        FamilyKind::SkewProduct => vec![mz, mw],
    }
}

pub(crate) fn is_repelling<T: Real>(mults: &[Cx<T>], tol: T) -> bool {
    mults.iter().all(|m| m.norm() > T::one() + tol)
}

/// All solutions of `f_λ^n(z) = z` for a univariate family, by Aberth on the
/// iterated map seeded with the `d_t^n` backward images of a Julia point.
/// Skew products are delegated to [`find_periodic_seeded`] with an
/// equilibrium sample as seeds.
pub fn find_periodic<T: Real>(
    spec: &FamilySpec<T>,
    lambda: Cx<T>,
    period: usize,
    cfg: &PeriodicConfig<T>,
) -> Result<CycleSet<T>, MeasureError> {
    if period == 0 {
        return Err(MeasureError::ZeroPeriod);
    }
    spec.escape_bound(lambda.norm())?;
    let degree = spec.d_t().checked_pow(period as u32).unwrap_or(usize::MAX);
    if spec.kind == FamilyKind::SkewProduct || (degree > cfg.degree_cap && cfg.newton_beyond_cap) {
        let seeds_cfg = SamplerConfig::new(24.max(period + 1), (4 * degree).clamp(256, 1 << 14));
        let seeds = sample_equilibrium(spec, lambda, &seeds_cfg, derive_seed(0x5eed, &[period as u64]))?;
        return find_periodic_seeded(spec, lambda, period, &seeds.points, cfg);
    }
    if degree > cfg.degree_cap {
        return Err(MeasureError::DegreeCapExceeded { degree, cap: cfg.degree_cap });
    }
    let anchor = julia_anchor(spec, lambda)?;
    let init: Vec<Cx<T>> = backward_tree(spec, lambda, anchor, period)?
        .into_iter()
        .map(|p| p.z)
        .collect();
    let eq = PeriodEquation { spec, lambda, period };
    let solver = SolverConfig::default();
    let (values, ok) = polyroots::aberth(&eq, init, &solver);
    let roots = polyroots::finish(&eq, values, ok, &solver)?;
    let mut set = CycleSet {
        lambda,
        period,
        points: Vec::new(),
        multiplicities: Vec::new(),
        multipliers: Vec::new(),
        repelling: Vec::new(),
        residual_max: roots.residual_max,
        miss_rate: None,
    };
    for r in &roots.roots {
        let p = Point::scalar(r.value);
        let m = multipliers(spec, lambda, p, period);
        set.repelling.push(is_repelling(&m, cfg.repelling_tol));
        set.multipliers.push(m);
        set.points.push(p);
        set.multiplicities.push(r.multiplicity);
    }
    Ok(set)
}

/// Newton solve of `f_λ^n(x) = x` from each seed, de-duplicated.
pub fn find_periodic_seeded<T: Real>(
    spec: &FamilySpec<T>,
    lambda: Cx<T>,
    period: usize,
    seeds: &[Point<T>],
    cfg: &PeriodicConfig<T>,
) -> Result<CycleSet<T>, MeasureError> {
    if period == 0 {
        return Err(MeasureError::ZeroPeriod);
    }
    let found: Vec<Option<(Point<T>, T)>> = seeds
        .par_iter()
        .map(|&s| newton_periodic(spec, lambda, period, s, cfg))
        .collect();
    let mut set = CycleSet {
        lambda,
        period,
        points: Vec::new(),
        multiplicities: Vec::new(),
        multipliers: Vec::new(),
        repelling: Vec::new(),
        residual_max: T::zero(),
        miss_rate: None,
    };
    for (p, res) in found.into_iter().flatten() {
        if set.points.iter().any(|q| q.dist(&p) < cfg.dedup_radius) {
            continue;
        }
        let m = multipliers(spec, lambda, p, period);
        set.repelling.push(is_repelling(&m, cfg.repelling_tol));
        set.multipliers.push(m);
        set.points.push(p);
        set.multiplicities.push(1);
        set.residual_max = set.residual_max.max(res);
    }
    let expected = spec.d_t().checked_pow(period as u32).unwrap_or(usize::MAX);
    let miss = T::one() - T::nat(set.points.len().min(expected)) / T::nat(expected);
    set.miss_rate = Some(miss);
    Ok(set)
}

/// `f^n(x) − x` and its (lower triangular) Jacobian.
pub(crate) fn period_residual<T: Real>(
    spec: &FamilySpec<T>,
    lambda: Cx<T>,
    n: usize,
    x: Point<T>,
) -> Option<(Point<T>, [[Cx<T>; 2]; 2])> {
    let mut y = x;
    let mut m = [[Cx::<T>::one(), Cx::<T>::zero()], [Cx::<T>::zero(), Cx::<T>::one()]];
    for _ in 0..n {
        let j = spec.jacobian_matrix(lambda, y);
        // m ← j·m for lower triangular matrices
        m = [
            [j[0][0] * m[0][0], Cx::<T>::zero()],
            [j[1][0] * m[0][0] + j[1][1] * m[1][0], j[1][1] * m[1][1]],
        ];
        y = spec.evaluate(lambda, y).ok()?;
        if y.norm() > spec.escape_radius * T::c(4.0) {
            return None;
        }
    }
    let f = Point::new(y.z - x.z, y.w - x.w);
    Some((f, m))
}

fn newton_periodic<T: Real>(
    spec: &FamilySpec<T>,
    lambda: Cx<T>,
    n: usize,
    seed: Point<T>,
    cfg: &PeriodicConfig<T>,
) -> Option<(Point<T>, T)> {
    let mut x = seed;
    let max_step = spec.escape_radius * T::c(0.25);
    for _ in 0..cfg.newton_iterations {
        let (f, m) = period_residual(spec, lambda, n, x)?;
        let a = m[0][0] - Cx::<T>::one();
        let dz = f.z / a;
        let (dw, res) = match spec.kind {
            FamilyKind::Univariate => (Cx::<T>::zero(), f.z.norm()),
            FamilyKind::SkewProduct => {
                let b = m[1][1] - Cx::<T>::one();
                ((f.w - m[1][0] * dz) / b, f.norm())
            }
        };
        let scale = T::one() + m[0][0].norm().max(m[1][1].norm()) * x.norm().max(T::one());
        if res <= cfg.residual_tol * scale {
            return Some((x, res));
        }
        if !is_finite(dz) || !is_finite(dw) {
            return None;
        }
        let len = dz.norm().max(dw.norm());
        let damp = if len > max_step { max_step / len } else { T::one() };
        x = Point::new(x.z - dz * damp, x.w - dw * damp);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::re;

    #[test]
    fn empty_sample_is_vacuously_normalized() {
        let s = sample_equilibrium(&FamilySpec::<f64>::quadratic(3.0), re(0.0), &SamplerConfig::new(10, 0), 1).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.weight(), 0.0);
        assert_eq!(
            pushforward_check(&s, &FamilySpec::quadratic(3.0)),
            Err(MeasureError::EmptySample)
        );
    }

    #[test]
    fn circle_sample() {
        let spec = FamilySpec::<f64>::monomial(2, 2.0);
        let s = sample_equilibrium(&spec, re(0.0), &SamplerConfig::new(30, 2000), 3).unwrap();
        let mean: f64 = s.points.iter().map(|p| p.z.norm()).sum::<f64>() / s.len() as f64;
        assert!((0.99..=1.01).contains(&mean), "mean |z| = {mean}");
        assert!((s.weight() * s.len() as f64 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chebyshev_sample_is_real_segment() {
        let spec = FamilySpec::<f64>::quadratic(3.0);
        let s = sample_equilibrium(&spec, re(-2.0), &SamplerConfig::new(30, 2000), 5).unwrap();
        for p in &s.points {
            assert!(p.z.im.abs() < 0.01 && p.z.re.abs() <= 2.0 + 1e-9, "{:?}", p.z);
        }
    }

    #[test]
    fn sample_is_deterministic() {
        let spec = FamilySpec::<f64>::quadratic(3.0);
        let cfg = SamplerConfig::new(20, 300);
        let a = sample_equilibrium(&spec, cx(-0.1, 0.6), &cfg, 9).unwrap();
        let b = sample_equilibrium(&spec, cx(-0.1, 0.6), &cfg, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exceptional_start_is_restarted() {
        // 0 is totally invariant for z², every pullback collapses.
        let spec = FamilySpec::<f64>::monomial(2, 2.0);
        let cfg = SamplerConfig::new(12, 4);
        let s = sample_equilibrium_from(&spec, re(0.0), &cfg, 1, Some(Point::scalar(re(0.0)))).unwrap();
        assert_eq!(s.restarts, 4);
        assert!(s.points.iter().all(|p| p.z.norm() > 0.5));

        let stuck = SamplerConfig { max_restarts: 0, ..cfg };
        assert!(matches!(
            sample_equilibrium_from(&spec, re(0.0), &stuck, 1, Some(Point::scalar(re(0.0)))),
            Err(MeasureError::StartOnExceptionalOrbit { .. })
        ));
    }

    #[test]
    fn pushforward_of_fixed_point_mass() {
        let spec = FamilySpec::<f64>::monomial(2, 2.0);
        let s = MeasureSample::from_points(re(0.0), vec![Point::scalar(re(1.0))]);
        assert_eq!(pushforward_check(&s, &spec).unwrap().gap, 0.0);
    }

    #[test]
    fn discrepancy_examples() {
        let spec = FamilySpec::<f64>::monomial(2, 2.0);
        let s = sample_equilibrium(&spec, re(0.0), &SamplerConfig::new(30, 1000), 3).unwrap();
        assert_eq!(discrepancy(&s, &s).unwrap(), 0.0);
        let dirac = MeasureSample::from_points(re(0.0), vec![Point::scalar(re(0.0))]);
        assert!(discrepancy(&s, &dirac).unwrap() >= 1.0 - 1e-9);
        let other = MeasureSample::from_points(re(0.5), vec![]);
        assert_eq!(discrepancy(&s, &other), Err(MeasureError::ParameterMismatch));
    }

    #[test]
    fn fixed_points_of_z_squared() {
        let spec = FamilySpec::<f64>::monomial(2, 2.0);
        let c = find_periodic(&spec, re(0.0), 1, &PeriodicConfig::default()).unwrap();
        assert_eq!(c.count(), 2);
        for (p, (m, r)) in c.points.iter().zip(c.multipliers.iter().zip(&c.repelling)) {
            if p.z.norm() < 1e-12 {
                assert!(m[0].norm() < 1e-12 && !r);
            } else {
                assert!((p.z - re(1.0)).norm() < 1e-14);
                assert!((m[0] - re(2.0)).norm() < 1e-13 && *r);
            }
        }
    }

    #[test]
    fn period_four_of_z_squared() {
        let spec = FamilySpec::<f64>::monomial(2, 2.0);
        let c = find_periodic(&spec, re(0.0), 4, &PeriodicConfig::default()).unwrap();
        assert_eq!(c.count(), 16);
        assert_eq!(c.points.len(), 16);
        for (p, m) in c.points.iter().zip(&c.multipliers) {
            if p.z.norm() > 0.5 {
                assert!((p.z.powu(15) - re(1.0)).norm() < 1e-12);
                assert!((m[0].norm() - 16.0).abs() < 1e-10);
            }
        }
        assert_eq!(c.repelling.iter().filter(|&&r| r).count(), 15);
    }

    #[test]
    fn period_two_of_basilica() {
        let spec = FamilySpec::<f64>::quadratic(3.0);
        let c = find_periodic(&spec, re(-1.0), 2, &PeriodicConfig::default()).unwrap();
        assert_eq!(c.count(), 4);
        let golden = [(1.0 + 5f64.sqrt()) / 2.0, (1.0 - 5f64.sqrt()) / 2.0];
        for (p, (m, r)) in c.points.iter().zip(c.multipliers.iter().zip(&c.repelling)) {
            if p.z.norm() < 1e-12 || (p.z + re(1.0)).norm() < 1e-12 {
                assert!(m[0].norm() < 1e-12 && !r);
            } else {
                assert!(golden.iter().any(|g| (p.z - re(*g)).norm() < 1e-13), "{:?}", p.z);
                assert!(*r);
            }
        }
    }

    #[test]
    fn degree_cap() {
        let spec = FamilySpec::<f64>::quadratic(3.0);
        let cfg = PeriodicConfig { degree_cap: 64, newton_beyond_cap: false, ..PeriodicConfig::default() };
        assert_eq!(
            find_periodic(&spec, re(0.0), 7, &cfg).unwrap_err(),
            MeasureError::DegreeCapExceeded { degree: 128, cap: 64 }
        );
    }

    #[test]
    fn skew_fixed_points_by_newton() {
        // (z², w²): fixed points are {0,1}², only (1,1) repelling
        let spec = FamilySpec::<f64>::product_squares(2.0);
        let c = find_periodic(&spec, re(0.0), 1, &PeriodicConfig::default()).unwrap();
        assert!(c.points.iter().any(|p| (p.z - re(1.0)).norm() < 1e-10 && (p.w - re(1.0)).norm() < 1e-10));
        for (p, r) in c.points.iter().zip(&c.repelling) {
            let expect = (p.z - re(1.0)).norm() < 1e-8 && (p.w - re(1.0)).norm() < 1e-8;
            assert_eq!(*r, expect);
        }
        assert!(c.miss_rate.is_some());
    }
}
