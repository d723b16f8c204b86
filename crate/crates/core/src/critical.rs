//! Postcritical volume growth, the stability classifier built on it, and the
//! census of contracting inverse branches.
//!
//! For one-dimensional fibers the mass of `(f^n)_* C_f` over a window `Λ` is
//! the area of the graph of `λ ↦ f_λ^n(c(λ))` inside `Λ × U`, i.e.
//! `∫_Λ (1 + |g_n'|²) 1[g_n ∈ U] dA`. Near active parameters `g_n ∈ U` only
//! on a set of thousands of tiny islands, so the integral runs on a quadtree
//! that discards cells escaping with margin and refines until `g_n` is
//! nearly affine on each leaf, where a tensor Gauss rule takes over.

use num_traits::{One, Zero};
use rand::Rng as _;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::family::{FamilyError, FamilyKind, FamilySpec, ParameterDomain, Point};
use crate::measure::MeasureSample;
use crate::polyroots::{self, RootError};
use crate::scalar::{cx, is_finite, Cx, Real};
use crate::seed::rng_for;

/// Slopes closer than this are indistinguishable at double precision on
/// desk-scale ranges of `n`.
pub const RATE_RESOLUTION: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CriticalError {
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error("root solve failed: {0}")]
    RootSolve(String),
    #[error("AllSamplesEscaped: no critical orbit stayed in U up to n = {n}")]
    AllSamplesEscaped { n: usize },
    #[error("InsufficientPoints: growth fit needs at least 5 tail points, got {got}")]
    InsufficientPoints { got: usize },
    #[error("BranchCapExceeded: {count} branches above cap {cap}")]
    BranchCapExceeded { count: usize, cap: usize },
    #[error("ball does not meet the sampled Julia set")]
    DisjointFromJulia,
    #[error("n must be at least 1")]
    ZeroIterate,
}

impl<T: Real> From<RootError<T>> for CriticalError {
    fn from(e: RootError<T>) -> Self {
        CriticalError::RootSolve(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CriticalKind {
    /// `λ ↦ c(λ)`, a root of `∂_z p` (one-dimensional fibers).
    FiberPoint,
    /// `{∂_z p = 0} × ℂ_w`.
    ZCritCurve,
    /// `{∂_w q = 0}`.
    WCritCurve,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticalComponent<T: Real> {
    pub id: usize,
    pub kind: CriticalKind,
    pub multiplicity: usize,
    /// The critical value of `z` for `FiberPoint` and `ZCritCurve`; for a
    /// `WCritCurve`, the `w` root over `z = 0`.
    pub point: Cx<T>,
}

fn derivative<T: Real>(coeffs: &[Cx<T>]) -> Vec<Cx<T>> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, a)| *a * T::nat(k))
        .collect()
}

/// Critical points of `z ↦ p(λ, z)` with multiplicity, canonically ordered.
pub fn z_critical_points<T: Real>(spec: &FamilySpec<T>, lambda: Cx<T>) -> Result<Vec<(Cx<T>, usize)>, CriticalError> {
    let mut roots = polyroots::solve(&derivative(&spec.p_coeffs_at(lambda)))?;
    roots.canonicalize();
    Ok(roots.roots.iter().map(|r| (r.value, r.multiplicity)).collect())
}

/// Roots of `w ↦ ∂_w q(λ, z, w)` with multiplicity.
pub fn w_critical_points<T: Real>(
    spec: &FamilySpec<T>,
    lambda: Cx<T>,
    z: Cx<T>,
) -> Result<Vec<(Cx<T>, usize)>, CriticalError> {
    let d = derivative(&spec.q_coeffs_at(lambda, z));
    if d.len() <= 1 {
        return Ok(Vec::new());
    }
    let mut roots = polyroots::solve(&d)?;
    roots.canonicalize();
    Ok(roots.roots.iter().map(|r| (r.value, r.multiplicity)).collect())
}

pub fn critical_components<T: Real>(
    spec: &FamilySpec<T>,
    lambda: Cx<T>,
) -> Result<Vec<CriticalComponent<T>>, CriticalError> {
    let mut out = Vec::new();
    let zkind = match spec.kind {
        FamilyKind::Univariate => CriticalKind::FiberPoint,
        FamilyKind::SkewProduct => CriticalKind::ZCritCurve,
    };
    for (c, m) in z_critical_points(spec, lambda)? {
        out.push(CriticalComponent { id: out.len(), kind: zkind, multiplicity: m, point: c });
    }
    if spec.kind == FamilyKind::SkewProduct {
        for (w, m) in w_critical_points(spec, lambda, Cx::<T>::zero())? {
            out.push(CriticalComponent { id: out.len(), kind: CriticalKind::WCritCurve, multiplicity: m, point: w });
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct MassConfig<T: Real> {
    /// Gauss–Legendre points per axis on each leaf.
    pub gauss_order: usize,
    /// Refinement limit below the cells of the window grid.
    pub max_depth: usize,
    /// A leaf is accepted once `g_n` moves by less than this fraction of the
    /// radius of `U` across it.
    pub leaf_image: T,
    /// Margin factor on the linear image radius when discarding a cell.
    pub prune_safety: T,
    /// Cell budget per window cell; past it the remaining frontier is
    /// integrated as leaves with the midpoint rule.
    pub max_cells: usize,
    /// Strata for the two-dimensional Monte Carlo estimator.
    pub strata: usize,
    pub seed: u64,
}

impl<T: Real> Default for MassConfig<T> {
    fn default() -> Self {
        MassConfig {
            gauss_order: 4,
            max_depth: 20,
            leaf_image: T::c(0.5),
            prune_safety: T::c(4.0),
            max_cells: 20_000_000,
            strata: 10_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassEstimate<T: Real> {
    pub n: usize,
    pub log_mass: T,
    /// Quadrature nodes (or Monte Carlo samples) evaluated.
    pub evaluated: usize,
    /// Of those, dropped because the orbit left `U`.
    pub clipped: usize,
    /// Cell budget ran out before refinement finished.
    pub truncated: bool,
}

impl<T: Real> MassEstimate<T> {
    pub fn mass(&self) -> T {
        self.log_mass.exp()
    }
}

/// `log(1 + a²)` without overflow.
fn log1p_sq<T: Real>(a: T) -> T {
    if a > T::one() {
        T::c(2.0) * a.ln() + (a * a).recip().ln_1p()
    } else {
        (a * a).ln_1p()
    }
}

/// Streaming log-sum-exp.
#[derive(Clone, Copy, Debug)]
struct LogAcc<T: Real> {
    max: T,
    sum: T,
}

impl<T: Real> LogAcc<T> {
    fn new() -> Self {
        LogAcc { max: T::neg_infinity(), sum: T::zero() }
    }

    fn add(&mut self, x: T) {
        if x == T::neg_infinity() {
            return;
        }
        if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + T::one();
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    fn merge(&mut self, o: LogAcc<T>) {
        if o.max == T::neg_infinity() {
            return;
        }
        if o.max > self.max {
            self.sum = self.sum * (self.max - o.max).exp() + o.sum;
            self.max = o.max;
        } else {
            self.sum += o.sum * (o.max - self.max).exp();
        }
    }

    fn value(&self) -> T {
        if self.max == T::neg_infinity() {
            self.max
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(q: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(q);
    for k in 0..q {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=q {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = q as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// `(g_n, g_n')`, or `None` once the orbit leaves `V` or overflows.
fn critical_orbit<T: Real>(spec: &FamilySpec<T>, lambda: Cx<T>, c: Cx<T>, dc: Cx<T>, n: usize) -> Option<(Cx<T>, Cx<T>)> {
    let (mut g, mut dg) = (c, dc);
    for _ in 0..n {
        let pp = spec.p_partials(lambda, g);
        dg = pp.dl + pp.dz * dg;
        g = pp.v;
        if !is_finite(g) || !is_finite(dg) || g.norm() > spec.escape_radius {
            return None;
        }
    }
    Some((g, dg))
}

/// Critical points of `p(λ, ·)` with their velocities and multiplicities.
/// When `∂_z p` does not depend on `λ` they are solved once.
struct CritSource<T: Real> {
    fixed: Option<Vec<(Cx<T>, usize)>>,
}

impl<T: Real> CritSource<T> {
    fn new(spec: &FamilySpec<T>) -> Result<Self, CriticalError> {
        let constant = spec.p.iter().skip(1).all(|a| a.0.iter().skip(1).all(|c| c.norm() == T::zero()));
        let fixed = if constant { Some(z_critical_points(spec, Cx::<T>::zero())?) } else { None };
        Ok(CritSource { fixed })
    }

    fn at(&self, spec: &FamilySpec<T>, lambda: Cx<T>) -> Result<Vec<(Cx<T>, Cx<T>, usize)>, CriticalError> {
        Ok(match &self.fixed {
            Some(f) => f.iter().map(|&(c, m)| (c, Cx::<T>::zero(), m)).collect(),
            None => z_critical_points(spec, lambda)?
                .into_iter()
                .map(|(c, m)| (c, spec.critical_point_velocity(lambda, c), m))
                .collect(),
        })
    }
}

/// Sum over critical points of `mult·(1 + |g_n'|²)` restricted to `g_n ∈ U`,
/// in log-space, plus (evaluated, clipped) counts.
fn node_integrand<T: Real>(
    spec: &FamilySpec<T>,
    crit: &CritSource<T>,
    lambda: Cx<T>,
    n: usize,
    r_u: T,
) -> Result<(T, usize, usize), CriticalError> {
    let mut acc = LogAcc::new();
    let (mut evaluated, mut clipped) = (0, 0);
    for (c, dc, m) in crit.at(spec, lambda)? {
        evaluated += 1;
        match critical_orbit(spec, lambda, c, dc, n) {
            Some((g, dg)) if g.norm() <= r_u => {
                acc.add(T::nat(m).ln() + log1p_sq(dg.norm()));
            }
            _ => clipped += 1,
        }
    }
    Ok((acc.value(), evaluated, clipped))
}

#[derive(Clone, Copy)]
struct Cell<T: Real> {
    center: Cx<T>,
    half: T,
    depth: usize,
}

enum Verdict<T: Real> {
    Prune,
    Leaf,
    Split(Cell<T>),
}

fn classify_cell<T: Real>(
    spec: &FamilySpec<T>,
    crit: &CritSource<T>,
    cell: &Cell<T>,
    n: usize,
    r_u: T,
    cfg: &MassConfig<T>,
) -> Result<Verdict<T>, CriticalError> {
    let reach = cell.half * T::SQRT_2();
    let mut all_out = true;
    let mut all_settled = true;
    for (c, dc, _) in crit.at(spec, cell.center)? {
        let (mut g, mut dg) = (c, dc);
        // Once the whole image of the cell is outside U at some step, every
        // orbit started in the cell escapes.
        let mut out = false;
        let mut finite = true;
        for _ in 0..n {
            let pp = spec.p_partials(cell.center, g);
            dg = pp.dl + pp.dz * dg;
            g = pp.v;
            if !is_finite(g) || !is_finite(dg) {
                finite = false;
                break;
            }
            if g.norm() - cfg.prune_safety * reach * dg.norm() > r_u {
                out = true;
                break;
            }
            if g.norm() > spec.escape_radius {
                finite = false;
                break;
            }
        }
        if !out {
            all_out = false;
            if !(finite && g.norm() <= r_u + reach * dg.norm() && reach * dg.norm() <= cfg.leaf_image * r_u) {
                all_settled = false;
            }
        }
    }
    Ok(if all_out {
        Verdict::Prune
    } else if all_settled || cell.depth >= cfg.max_depth {
        Verdict::Leaf
    } else {
        Verdict::Split(*cell)
    })
}

fn integrate_leaf<T: Real>(
    spec: &FamilySpec<T>,
    crit: &CritSource<T>,
    cell: &Cell<T>,
    n: usize,
    r_u: T,
    rule: &[(f64, f64)],
) -> Result<(LogAcc<T>, usize, usize), CriticalError> {
    let mut acc = LogAcc::new();
    let (mut ev, mut cl) = (0, 0);
    let log_area = (cell.half * cell.half).ln();
    for &(xa, wa) in rule {
        for &(xb, wb) in rule {
            let lambda = cell.center + cx(cell.half * T::c(xa), cell.half * T::c(xb));
            let (v, e, c) = node_integrand(spec, crit, lambda, n, r_u)?;
            ev += e;
            cl += c;
            acc.add(v + T::c(wa * wb).ln() + log_area);
        }
    }
    Ok((acc, ev, cl))
}

/// `log ‖(f^n)_* C_f‖` over `window × U`.
pub fn pushforward_mass<T: Real>(
    spec: &FamilySpec<T>,
    window: &ParameterDomain<T>,
    n: usize,
    cfg: &MassConfig<T>,
) -> Result<MassEstimate<T>, CriticalError> {
    if n == 0 {
        return Err(CriticalError::ZeroIterate);
    }
    let r_u = spec.escape_bound(window.max_modulus())?;
    match spec.kind {
        FamilyKind::Univariate => quadtree_mass(spec, window, n, r_u, cfg),
        FamilyKind::SkewProduct => monte_carlo_mass(spec, window, n, r_u, cfg),
    }
}

fn quadtree_mass<T: Real>(
    spec: &FamilySpec<T>,
    window: &ParameterDomain<T>,
    n: usize,
    r_u: T,
    cfg: &MassConfig<T>,
) -> Result<MassEstimate<T>, CriticalError> {
    let crit = CritSource::new(spec)?;
    let half = window.h() / T::c(2.0);
    let roots: Vec<Cell<T>> = (0..window.ny)
        .flat_map(|j| (0..window.nx).map(move |i| (i, j)))
        .map(|(i, j)| Cell { center: window.node(i, j), half, depth: 0 })
        .collect();
    let parts: Vec<Subtree<T>> = roots
        .par_iter()
        .map(|root| subtree_mass(spec, &crit, *root, n, r_u, cfg, cfg.max_cells))
        .collect::<Result<_, _>>()?;
    let mut total = LogAcc::new();
    let (mut evaluated, mut clipped, mut truncated) = (0, 0, false);
    for p in parts {
        total.merge(p.acc);
        evaluated += p.evaluated;
        clipped += p.clipped;
        truncated |= p.truncated;
    }
    let log_mass = total.value();
    if log_mass == T::neg_infinity() {
        return Err(CriticalError::AllSamplesEscaped { n });
    }
    Ok(MassEstimate { n, log_mass, evaluated, clipped, truncated })
}

struct Subtree<T: Real> {
    acc: LogAcc<T>,
    evaluated: usize,
    clipped: usize,
    truncated: bool,
}

/// Breadth-first refinement of one window cell. Past `budget` visited cells
/// the remaining frontier is integrated with the midpoint rule.
fn subtree_mass<T: Real>(
    spec: &FamilySpec<T>,
    crit: &CritSource<T>,
    root: Cell<T>,
    n: usize,
    r_u: T,
    cfg: &MassConfig<T>,
    budget: usize,
) -> Result<Subtree<T>, CriticalError> {
    let rule = gauss_legendre(cfg.gauss_order);
    let midpoint = [(0.0, 2.0)];
    let mut out = Subtree { acc: LogAcc::new(), evaluated: 0, clipped: 0, truncated: false };
    let mut frontier = vec![root];
    let mut visited = 0usize;
    while !frontier.is_empty() {
        visited += frontier.len();
        let force_leaf = visited > budget;
        out.truncated |= force_leaf;
        let mut next = Vec::new();
        for cell in &frontier {
            let verdict = if force_leaf { Verdict::Leaf } else { classify_cell(spec, crit, cell, n, r_u, cfg)? };
            match verdict {
                Verdict::Prune => {}
                Verdict::Leaf => {
                    let r = if force_leaf { &midpoint[..] } else { &rule[..] };
                    let (acc, e, c) = integrate_leaf(spec, crit, cell, n, r_u, r)?;
                    out.acc.merge(acc);
                    out.evaluated += e;
                    out.clipped += c;
                }
                Verdict::Split(c) => {
                    let q = c.half / T::c(2.0);
                    next.extend([(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)].map(|(a, b)| Cell {
                        center: c.center + cx(q * T::c(a), q * T::c(b)),
                        half: q,
                        depth: c.depth + 1,
                    }));
                }
            }
        }
        frontier = next;
    }
    Ok(out)
}

/// Tangent propagation of `(λ, s) ↦ f_λ^n(x(λ, s))`. Returns the image and
/// the squared volume factor of the graph map `(λ, s) ↦ (λ, f^n)`.
fn skew_volume<T: Real>(
    spec: &FamilySpec<T>,
    lambda: Cx<T>,
    start: Point<T>,
    d_lambda: Point<T>,
    d_s: Point<T>,
    n: usize,
) -> Option<(Point<T>, T)> {
    let (mut x, mut tl, mut ts) = (start, d_lambda, d_s);
    for _ in 0..n {
        let pp = spec.p_partials(lambda, x.z);
        let qq = spec.q_partials(lambda, x.z, x.w);
        tl = Point::new(pp.dl + pp.dz * tl.z, qq.dl + qq.dz * tl.z + qq.dw * tl.w);
        ts = Point::new(pp.dz * ts.z, qq.dz * ts.z + qq.dw * ts.w);
        x = Point::new(pp.v, qq.v);
        if !x.is_finite() || x.norm() > spec.escape_radius {
            return None;
        }
    }
    // Cauchy–Binet: sum of squared 2×2 minors of the 3×2 Jacobian of
    // (λ, s) ↦ (λ, z_n, w_n).
    let det = tl.z * ts.w - tl.w * ts.z;
    let vol = det.norm_sqr() + ts.z.norm_sqr() + ts.w.norm_sqr();
    Some((x, vol))
}

fn nearest<T: Real>(roots: &[(Cx<T>, usize)], to: Cx<T>) -> Option<Cx<T>> {
    roots
        .iter()
        .map(|r| r.0)
        .min_by(|a, b| (*a - to).norm().partial_cmp(&(*b - to).norm()).unwrap_or(std::cmp::Ordering::Equal))
}

fn monte_carlo_mass<T: Real>(
    spec: &FamilySpec<T>,
    window: &ParameterDomain<T>,
    n: usize,
    r_u: T,
    cfg: &MassConfig<T>,
) -> Result<MassEstimate<T>, CriticalError> {
    let m = ((cfg.strata as f64).powf(0.25).round() as usize).max(1);
    let big_r = spec.escape_radius;
    let cell_log = (window.area() * T::PI() * big_r * big_r / T::nat(m.pow(4))).ln();
    let lo = cx(window.center.re - window.half_width, window.center.im - window.half_height);
    let parts: Vec<(LogAcc<T>, usize, usize)> = (0..m.pow(4))
        .into_par_iter()
        .map(|k| -> Result<_, CriticalError> {
            let mut rng = rng_for(cfg.seed, &[n as u64, k as u64]);
            let (a, b, c, d) = (k % m, (k / m) % m, (k / m / m) % m, k / m / m / m);
            let u = |i: usize, rng: &mut crate::seed::Rng| T::c((i as f64 + rng.gen::<f64>()) / m as f64);
            let lambda = lo + cx(T::c(2.0) * window.half_width * u(a, &mut rng), T::c(2.0) * window.half_height * u(b, &mut rng));
            let s = {
                let rad = big_r * u(c, &mut rng).sqrt();
                let th = T::TAU() * u(d, &mut rng);
                cx(rad * th.cos(), rad * th.sin())
            };
            let mut acc = LogAcc::new();
            let (mut ev, mut cl) = (0, 0);
            let mut add = |res: Option<(Point<T>, T)>, mult: usize| {
                ev += 1;
                match res {
                    Some((x, vol)) if x.norm() <= r_u && vol > T::zero() => {
                        acc.add(T::nat(mult).ln() + vol.ln() + cell_log)
                    }
                    _ => cl += 1,
                }
            };
            let zero = Cx::<T>::zero();
            let one = Cx::<T>::one();
            for (c0, mult) in z_critical_points(spec, lambda)? {
                let dc = spec.critical_point_velocity(lambda, c0);
                let res = skew_volume(spec, lambda, Point::new(c0, s), Point::new(dc, zero), Point::new(zero, one), n);
                add(res, mult);
            }
            let roots = w_critical_points(spec, lambda, s)?;
            let delta = T::tol(1e-6) * (T::one() + lambda.norm() + s.norm());
            let dl_p = w_critical_points(spec, lambda + re_(delta), s)?;
            let dl_m = w_critical_points(spec, lambda - re_(delta), s)?;
            let ds_p = w_critical_points(spec, lambda, s + re_(delta))?;
            let ds_m = w_critical_points(spec, lambda, s - re_(delta))?;
            for &(w0, mult) in &roots {
                if w0.norm() > big_r {
                    continue;
                }
                let diff = |p: &[(Cx<T>, usize)], q: &[(Cx<T>, usize)]| match (nearest(p, w0), nearest(q, w0)) {
                    (Some(a), Some(b)) => (a - b) / (delta * T::c(2.0)),
                    _ => Cx::<T>::zero(),
                };
                let (wl, ws) = (diff(&dl_p, &dl_m), diff(&ds_p, &ds_m));
                let res = skew_volume(spec, lambda, Point::new(s, w0), Point::new(zero, wl), Point::new(one, ws), n);
                add(res, mult);
            }
            Ok((acc, ev, cl))
        })
        .collect::<Result<_, _>>()?;
    let mut total = LogAcc::new();
    let (mut evaluated, mut clipped) = (0, 0);
    for (a, e, c) in parts {
        total.merge(a);
        evaluated += e;
        clipped += c;
    }
    let log_mass = total.value();
    if log_mass == T::neg_infinity() {
        return Err(CriticalError::AllSamplesEscaped { n });
    }
    Ok(MassEstimate { n, log_mass, evaluated, clipped, truncated: false })
}

fn re_<T: Real>(x: T) -> Cx<T> {
    cx(x, T::zero())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit<T: Real> {
    pub rate: T,
    /// Half-width of the 95% interval on the slope.
    pub ci: T,
    pub intercept: T,
    /// Number of points in the fitted tail.
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VolumeSeries<T: Real> {
    pub window: Option<ParameterDomain<T>>,
    pub ns: Vec<usize>,
    pub log_mass: Vec<T>,
    /// Iterates whose estimate hit the cell budget.
    pub truncated: Vec<usize>,
}

impl<T: Real> VolumeSeries<T> {
    pub fn from_log_masses(ns: Vec<usize>, log_mass: Vec<T>) -> Self {
        VolumeSeries { window: None, ns, log_mass, truncated: Vec::new() }
    }

    pub fn fit(&self) -> Result<RateFit<T>, CriticalError> {
        growth_rate(self)
    }
}

/// Masses for every `n` in `ns`.
pub fn volume_series<T: Real>(
    spec: &FamilySpec<T>,
    window: &ParameterDomain<T>,
    ns: impl IntoIterator<Item = usize>,
    cfg: &MassConfig<T>,
) -> Result<VolumeSeries<T>, CriticalError> {
    let mut series = VolumeSeries { window: Some(window.clone()), ns: Vec::new(), log_mass: Vec::new(), truncated: Vec::new() };
    for n in ns {
        let est = pushforward_mass(spec, window, n, cfg)?;
        if est.truncated {
            series.truncated.push(n);
        }
        series.ns.push(n);
        series.log_mass.push(est.log_mass);
    }
    Ok(series)
}

/// Least-squares slope of `log_mass` against `n` over the last half of the
/// series (from index `⌊(len − 1)/2⌋`).
pub fn growth_rate<T: Real>(series: &VolumeSeries<T>) -> Result<RateFit<T>, CriticalError> {
    let len = series.ns.len().min(series.log_mass.len());
    let start = len.saturating_sub(1) / 2;
    let m = len - start;
    if m < 5 {
        return Err(CriticalError::InsufficientPoints { got: m });
    }
    let xs: Vec<f64> = series.ns[start..len].iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = series.log_mass[start..len].iter().map(|y| y.as_f64()).collect();
    let mf = m as f64;
    let xm = xs.iter().sum::<f64>() / mf;
    let ym = ys.iter().sum::<f64>() / mf;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let se = (ssr / (mf - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, mf - 2.0).map(|d| d.inverse_cdf(0.975)).unwrap_or(f64::INFINITY);
    let ci = (t * se).max(RATE_RESOLUTION);
    Ok(RateFit { rate: T::c(slope), ci: T::c(ci), intercept: T::c(intercept), points: m })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Bifurcating,
    Inconclusive,
}

/// Compares the fitted rate with `log d_star_upper`.
pub fn classify_stability<T: Real>(fit: &RateFit<T>, d_star_upper: T, d_t: usize) -> Stability {
    if !(d_star_upper > T::zero()) || d_star_upper >= T::nat(d_t) {
        return Stability::Inconclusive;
    }
    let threshold = d_star_upper.ln();
    if fit.rate - fit.ci > threshold {
        Stability::Bifurcating
    } else if fit.rate + fit.ci < threshold {
        Stability::Stable
    } else {
        Stability::Inconclusive
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CensusConfig {
    pub boundary_samples: usize,
    /// Largest `d_t^n` enumerated.
    pub cap: usize,
}

impl CensusConfig {
    pub fn for_spec<T: Real>(spec: &FamilySpec<T>) -> Self {
        let cap = match spec.kind {
            FamilyKind::Univariate => 1 << 20,
            FamilyKind::SkewProduct => 4096,
        };
        CensusConfig { boundary_samples: 32, cap }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InverseBranchCensus<T: Real> {
    pub center: Point<T>,
    pub radius: T,
    pub rho: T,
    pub n: usize,
    pub count: usize,
    pub total: usize,
    pub ratio: T,
    /// Largest sampled Lipschitz constant among counted branches.
    pub max_lipschitz: T,
}

fn boundary_points<T: Real>(spec: &FamilySpec<T>, a0: Point<T>, radius: T, k: usize) -> Vec<Point<T>> {
    (0..k)
        .map(|j| {
            let th = T::TAU() * T::nat(j) / T::nat(k);
            let e = cx(th.cos(), th.sin()) * radius;
            match spec.kind {
                FamilyKind::Univariate => Point::new(a0.z + e, a0.w),
                FamilyKind::SkewProduct => {
                    // distinguished boundary of the bidisk
                    let ph = T::TAU() * T::nat((5 * j) % k) / T::nat(k);
                    Point::new(a0.z + e, a0.w + cx(ph.cos(), ph.sin()) * radius)
                }
            }
        })
        .collect()
}

/// Counts branches `h` of `f_λ^{-n}` with `h(Ā) ⊂ A` and sampled Lipschitz
/// constant at most `rho`, where `A` is the (poly)disk of `radius` at `a0`.
#[allow(clippy::too_many_arguments)]
pub fn inverse_branch_census<T: Real>(
    spec: &FamilySpec<T>,
    lambda: Cx<T>,
    a0: Point<T>,
    radius: T,
    rho: T,
    n: usize,
    julia: &MeasureSample<T>,
    cfg: &CensusConfig,
) -> Result<InverseBranchCensus<T>, CriticalError> {
    if julia.nearest_distance(&a0) >= radius {
        return Err(CriticalError::DisjointFromJulia);
    }
    let d = spec.d_t();
    let total = d.checked_pow(n as u32).filter(|&t| t <= cfg.cap).ok_or(CriticalError::BranchCapExceeded {
        count: d.saturating_pow(n as u32),
        cap: cfg.cap,
    })?;
    let boundary = boundary_points(spec, a0, radius, cfg.boundary_samples);
    let mut level: Vec<(Point<T>, Vec<Point<T>>)> = vec![(a0, boundary.clone())];
    for _ in 0..n {
        let next: Vec<Vec<(Point<T>, Vec<Point<T>>)>> = level
            .par_iter()
            .map(|(c, bs)| -> Result<_, CriticalError> {
                let centers = polyroots::solve_shifted(spec, lambda, *c)?.expanded();
                let pre_b: Vec<Vec<Point<T>>> = bs
                    .iter()
                    .map(|b| polyroots::solve_shifted(spec, lambda, *b).map(|p| p.expanded()))
                    .collect::<Result<_, _>>()?;
                Ok(centers
                    .into_iter()
                    .map(|hc| {
                        let hb = pre_b
                            .iter()
                            .map(|cands| {
                                *cands
                                    .iter()
                                    .min_by(|x, y| x.dist(&hc).partial_cmp(&y.dist(&hc)).unwrap_or(std::cmp::Ordering::Equal))
                                    .expect("d_t preimages")
                            })
                            .collect();
                        (hc, hb)
                    })
                    .collect())
            })
            .collect::<Result<_, _>>()?;
        level = next.into_iter().flatten().collect();
    }
    let mut count = 0;
    let mut max_lip = T::zero();
    for (hc, hb) in &level {
        if hc.dist(&a0) >= radius || hb.iter().any(|p| p.dist(&a0) >= radius) {
            continue;
        }
        let mut lip = T::zero();
        for i in 0..hb.len() {
            for j in i + 1..hb.len() {
                lip = lip.max(hb[i].dist(&hb[j]) / boundary[i].dist(&boundary[j]));
            }
        }
        if lip <= rho {
            count += 1;
            max_lip = max_lip.max(lip);
        }
    }
    Ok(InverseBranchCensus {
        center: a0,
        radius,
        rho,
        n,
        count,
        total,
        ratio: T::nat(count) / T::nat(total),
        max_lipschitz: max_lip,
    })
}
