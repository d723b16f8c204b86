//! Holomorphic continuation of repelling cycles and detection of parameters
//! where a critical orbit lands on a continued cycle.

use std::collections::VecDeque;
use std::ops::RangeInclusive;

use num_traits::{One, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::critical::{
    growth_rate, volume_series, z_critical_points, CriticalError, MassConfig, RateFit,
};
use crate::family::{FamilyError, FamilyKind, FamilySpec, ParameterDomain, Point};
use crate::lyapunov::BifField;
use crate::measure::{is_repelling, multipliers, period_residual, sample_equilibrium, SamplerConfig};
use crate::scalar::{cx, is_finite, Cx, Real};
use crate::seed::derive_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MisiurewiczError {
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error("BaseNotRepelling: multipliers {moduli:?} at the base parameter")]
    BaseNotRepelling { moduli: Vec<f64> },
    #[error("base point is not periodic of period {period} (residual {residual})")]
    BaseNotPeriodic { period: usize, residual: f64 },
    #[error("continuation from the base parameter into the grid failed")]
    ContinuationFailed,
    #[error(transparent)]
    Critical(#[from] CriticalError),
}

#[derive(Clone, Copy, Debug)]
pub struct ContinuationConfig<T: Real> {
    /// Validity threshold on `|f^n(z) − z|`.
    pub residual_tol: T,
    pub newton_iterations: usize,
    /// Multiplier moduli must exceed `1 + repelling_tol`.
    pub repelling_tol: T,
    /// Mark both cells of a pair whose values disagree under continuation.
    pub seam_check: bool,
}

impl<T: Real> Default for ContinuationConfig<T> {
    fn default() -> Self {
        ContinuationConfig {
            residual_tol: T::tol(1e-10),
            newton_iterations: 50,
            repelling_tol: T::tol(1e-9),
            seam_check: true,
        }
    }
}

/// Neighbor visiting order during the breadth-first sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepOrder {
    /// +x, −x, +y, −y.
    Standard,
    /// +y, −y, −x, +x.
    Transposed,
}

/// A periodic point continued over the nodes of a grid.
#[derive(Clone, Debug)]
pub struct CycleTrack<T: Real> {
    pub id: usize,
    pub period: usize,
    pub base_lambda: Cx<T>,
    pub base_point: Point<T>,
    pub dom: ParameterDomain<T>,
    /// Row-major; meaningful on valid cells only.
    pub points: Vec<Point<T>>,
    pub min_multiplier: Vec<T>,
    pub valid: Vec<bool>,
    /// Cells dropped because two continuation paths disagreed there.
    pub seam_cells: usize,
}

impl<T: Real> CycleTrack<T> {
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.dom.nx + i
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Value at the valid node nearest to `lambda`, if any.
    pub fn nearest_valid(&self, lambda: Cx<T>) -> Option<(usize, Point<T>)> {
        (0..self.points.len())
            .filter(|&k| self.valid[k])
            .map(|k| (k, (self.dom.node(k % self.dom.nx, k / self.dom.nx) - lambda).norm()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(k, _)| (k, self.points[k]))
    }

    /// The periodic point at an arbitrary parameter, by Newton from the
    /// nearest valid node.
    pub fn point_at(&self, spec: &FamilySpec<T>, lambda: Cx<T>, cfg: &ContinuationConfig<T>) -> Option<Point<T>> {
        let (k, p) = self.nearest_valid(lambda)?;
        let from = self.dom.node(k % self.dom.nx, k / self.dom.nx);
        walk(spec, from, lambda, p, self.period, self.dom.h(), cfg)
    }
}

/// Solves `(M − I) x = rhs` for the lower triangular `M`.
fn solve_shifted_tri<T: Real>(kind: FamilyKind, m: &[[Cx<T>; 2]; 2], rhs: Point<T>) -> Option<Point<T>> {
    let a = m[0][0] - Cx::<T>::one();
    let z = rhs.z / a;
    let w = match kind {
        FamilyKind::Univariate => Cx::<T>::zero(),
        FamilyKind::SkewProduct => (rhs.w - m[1][0] * z) / (m[1][1] - Cx::<T>::one()),
    };
    let out = Point::new(z, w);
    out.is_finite().then_some(out)
}

/// Newton on `f_λ^n(x) = x` from `x0`, each step capped at `max_step`.
pub fn cycle_newton<T: Real>(
    spec: &FamilySpec<T>,
    lambda: Cx<T>,
    x0: Point<T>,
    n: usize,
    max_step: T,
    cfg: &ContinuationConfig<T>,
) -> Option<Point<T>> {
    let mut x = x0;
    for _ in 0..cfg.newton_iterations {
        let (f, m) = period_residual(spec, lambda, n, x)?;
        let step = solve_shifted_tri(spec.kind, &m, f)?;
        let len = step.norm();
        let damp = if len > max_step { max_step / len } else { T::one() };
        x = Point::new(x.z - step.z * damp, x.w - step.w * damp);
        if len <= T::epsilon() * T::c(4.0) * (T::one() + x.norm()) {
            break;
        }
    }
    let (f, _) = period_residual(spec, lambda, n, x)?;
    (f.norm() < cfg.residual_tol).then_some(x)
}

/// `dx/dλ` along the cycle through `x` (implicit function theorem).
pub fn cycle_tangent<T: Real>(spec: &FamilySpec<T>, lambda: Cx<T>, x: Point<T>, n: usize) -> Option<Point<T>> {
    let (_, m) = period_residual(spec, lambda, n, x)?;
    let dl = spec.param_derivative(lambda, x, Point::new(Cx::<T>::zero(), Cx::<T>::zero()), n).ok()?.derivative;
    solve_shifted_tri(spec.kind, &m, Point::new(-dl.z, -dl.w))
}

/// Predictor-corrector walk from `(from, x)` to `to` in steps of at most `h/4`.
fn walk<T: Real>(
    spec: &FamilySpec<T>,
    from: Cx<T>,
    to: Cx<T>,
    x: Point<T>,
    n: usize,
    h: T,
    cfg: &ContinuationConfig<T>,
) -> Option<Point<T>> {
    let dist = (to - from).norm();
    let steps = (dist / (h / T::c(4.0))).ceil().to_usize().unwrap_or(1).max(1);
    let mut x = x;
    let mut l = from;
    let dl = (to - from) / T::nat(steps);
    for _ in 0..steps {
        let pred = match cycle_tangent(spec, l, x, n) {
            Some(t) => Point::new(x.z + t.z * dl, x.w + t.w * dl),
            None => x,
        };
        l = l + dl;
        let cap = T::c(0.25) * (T::one() + x.norm());
        let next = cycle_newton(spec, l, pred, n, cap, cfg)?;
        // a corrector that jumps far from the predictor has changed branch
        if next.dist(&pred) > T::c(0.1) * (T::one() + x.norm()) {
            return None;
        }
        x = next;
    }
    Some(x)
}

fn min_modulus<T: Real>(m: &[Cx<T>]) -> T {
    m.iter().map(|v| v.norm()).fold(T::infinity(), T::min)
}

/// Breadth-first continuation of the period-`n` point `base` from
/// `base_lambda` over every node of `dom`.
pub fn continue_cycle<T: Real>(
    spec: &FamilySpec<T>,
    dom: &ParameterDomain<T>,
    base_lambda: Cx<T>,
    base: Point<T>,
    period: usize,
    cfg: &ContinuationConfig<T>,
    order: SweepOrder,
) -> Result<CycleTrack<T>, MisiurewiczError> {
    let polished = cycle_newton(spec, base_lambda, base, period, T::c(0.1), cfg).ok_or_else(|| {
        let res = period_residual(spec, base_lambda, period, base).map(|(f, _)| f.norm().as_f64());
        MisiurewiczError::BaseNotPeriodic { period, residual: res.unwrap_or(f64::INFINITY) }
    })?;
    let mults = multipliers(spec, base_lambda, polished, period);
    if !is_repelling(&mults, cfg.repelling_tol) {
        return Err(MisiurewiczError::BaseNotRepelling { moduli: mults.iter().map(|m| m.norm().as_f64()).collect() });
    }
    let (nx, ny) = (dom.nx, dom.ny);
    let h = dom.h();
    let (si, sj) = nearest_node(dom, base_lambda);
    let start = walk(spec, base_lambda, dom.node(si, sj), polished, period, h, cfg)
        .ok_or(MisiurewiczError::ContinuationFailed)?;

    let mut points = vec![Point::new(Cx::<T>::zero(), Cx::<T>::zero()); nx * ny];
    let mut min_mult = vec![T::zero(); nx * ny];
    let mut valid = vec![false; nx * ny];
    let mut seen = vec![false; nx * ny];
    let accept = |lambda: Cx<T>, x: Point<T>| -> Option<T> {
        let m = min_modulus(&multipliers(spec, lambda, x, period));
        (m > T::one() + cfg.repelling_tol).then_some(m)
    };
    let s = sj * nx + si;
    seen[s] = true;
    if let Some(m) = accept(dom.node(si, sj), start) {
        points[s] = start;
        min_mult[s] = m;
        valid[s] = true;
    }
    let mut queue = VecDeque::new();
    if valid[s] {
        queue.push_back((si, sj));
    }
    let dirs: [(isize, isize); 4] = match order {
        SweepOrder::Standard => [(1, 0), (-1, 0), (0, 1), (0, -1)],
        SweepOrder::Transposed => [(0, 1), (0, -1), (-1, 0), (1, 0)],
    };
    while let Some((i, j)) = queue.pop_front() {
        let k = j * nx + i;
        for (di, dj) in dirs {
            let (a, b) = (i as isize + di, j as isize + dj);
            if a < 0 || b < 0 || a >= nx as isize || b >= ny as isize {
                continue;
            }
            let (a, b) = (a as usize, b as usize);
            let kk = b * nx + a;
            if seen[kk] {
                continue;
            }
            seen[kk] = true;
            let next = walk(spec, dom.node(i, j), dom.node(a, b), points[k], period, h, cfg);
            if let Some(x) = next {
                if let Some(m) = accept(dom.node(a, b), x) {
                    points[kk] = x;
                    min_mult[kk] = m;
                    valid[kk] = true;
                    queue.push_back((a, b));
                }
            }
        }
    }

    let mut seam_cells = 0;
    if cfg.seam_check {
        let mut bad = vec![false; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                if !valid[k] {
                    continue;
                }
                for (a, b) in [(i + 1, j), (i, j + 1)] {
                    if a >= nx || b >= ny || !valid[b * nx + a] {
                        continue;
                    }
                    let kk = b * nx + a;
                    let agree = walk(spec, dom.node(i, j), dom.node(a, b), points[k], period, h, cfg)
                        .is_some_and(|x| x.dist(&points[kk]) < T::tol(1e-7) * (T::one() + x.norm()));
                    if !agree {
                        bad[k] = true;
                        bad[kk] = true;
                    }
                }
            }
        }
        for k in 0..nx * ny {
            if bad[k] {
                valid[k] = false;
                seam_cells += 1;
            }
        }
    }

    Ok(CycleTrack {
        id: 0,
        period,
        base_lambda,
        base_point: polished,
        dom: dom.clone(),
        points,
        min_multiplier: min_mult,
        valid,
        seam_cells,
    })
}

fn nearest_node<T: Real>(dom: &ParameterDomain<T>, lambda: Cx<T>) -> (usize, usize) {
    let o = dom.origin();
    let h = dom.h();
    let clamp = |v: T, n: usize| v.round().max(T::zero()).min(T::nat(n - 1)).to_usize().unwrap_or(0);
    (clamp((lambda.re - o.re) / h, dom.nx), clamp((lambda.im - o.im) / h, dom.ny))
}

#[derive(Clone, Copy, Debug)]
pub struct ScanConfig<T: Real> {
    pub n0_max: usize,
    /// Converged residual bound.
    pub residual_tol: T,
    pub transversality_floor: T,
    pub newton_iterations: usize,
    /// Radius of the 9-point persistence probe, in cells.
    pub probe_cells: T,
    /// Largest distance from the cycle point to the sampled Julia set.
    pub julia_tolerance: T,
    pub julia_depth: usize,
    pub julia_count: usize,
    pub seed: u64,
}

impl<T: Real> Default for ScanConfig<T> {
    fn default() -> Self {
        ScanConfig {
            n0_max: 5,
            residual_tol: T::tol(1e-8),
            transversality_floor: T::tol(1e-6),
            newton_iterations: 100,
            probe_cells: T::c(2.0),
            julia_tolerance: T::c(0.05),
            julia_depth: 30,
            julia_count: 2000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MisiurewiczHit<T: Real> {
    pub lambda_star: Cx<T>,
    pub n0: usize,
    pub critical_id: usize,
    pub cycle_id: usize,
    /// Which point of the cycle (`f^m` of the tracked point) was hit.
    pub cycle_index: usize,
    pub residual: T,
    pub transversality: T,
    pub cycle_point: Point<T>,
    pub multiplier_modulus: T,
    /// Distance from the cycle point to the nearest sampled Julia point.
    pub julia_distance: T,
}

#[derive(Clone, Debug, Default)]
pub struct ScanReport<T: Real> {
    pub hits: Vec<MisiurewiczHit<T>>,
    /// Invalid cells per track, skipped by the scan.
    pub skipped_cells: Vec<usize>,
    pub candidates: usize,
    pub rejected_persistent: usize,
    pub rejected_transversality: usize,
    pub rejected_not_repelling: usize,
    pub rejected_julia: usize,
    pub rejected_unconverged: usize,
    /// Hits whose nearest track cell is invalid (punctured mask).
    pub punctured: usize,
    /// Critical curves that the scan does not handle.
    pub skipped_components: usize,
}

/// Residual function `r(λ) = f_λ^{n0}(c(λ)) − f_λ^m(σ(λ))` on the base
/// coordinate, with its analytic derivative.
struct Residual<'a, T: Real> {
    spec: &'a FamilySpec<T>,
    track: &'a CycleTrack<T>,
    crit: usize,
    n0: usize,
    m: usize,
    cont: ContinuationConfig<T>,
}

impl<T: Real> Residual<'_, T> {
    fn critical_point(&self, lambda: Cx<T>) -> Option<Cx<T>> {
        z_critical_points(self.spec, lambda).ok()?.get(self.crit).map(|c| c.0)
    }

    /// `(r, r')` given the cycle point at `lambda`.
    fn eval_with(&self, lambda: Cx<T>, sigma: Point<T>) -> Option<(Cx<T>, Cx<T>)> {
        let spec = self.spec;
        let c = self.critical_point(lambda)?;
        let dc = spec.critical_point_velocity(lambda, c);
        let zero = Cx::<T>::zero();
        let orbit = spec.param_derivative(lambda, Point::new(c, zero), Point::new(dc, zero), self.n0).ok()?;
        let ds = cycle_tangent(spec, lambda, sigma, self.track.period)?;
        let cyc = spec.param_derivative(lambda, sigma, ds, self.m).ok()?;
        let r = orbit.value.z - cyc.value.z;
        let dr = orbit.derivative.z - cyc.derivative.z;
        (is_finite(r) && is_finite(dr)).then_some((r, dr))
    }

    fn sigma(&self, lambda: Cx<T>) -> Option<Point<T>> {
        self.track.point_at(self.spec, lambda, &self.cont)
    }

    fn eval(&self, lambda: Cx<T>) -> Option<(Cx<T>, Cx<T>, Point<T>)> {
        let s = self.sigma(lambda)?;
        let (r, dr) = self.eval_with(lambda, s)?;
        Some((r, dr, s))
    }
}

/// Looks for parameters where a critical orbit lands on a tracked cycle.
pub fn misiurewicz_scan<T: Real>(
    spec: &FamilySpec<T>,
    dom: &ParameterDomain<T>,
    tracks: &[CycleTrack<T>],
    cfg: &ScanConfig<T>,
) -> Result<ScanReport<T>, MisiurewiczError> {
    let mut report = ScanReport { skipped_cells: tracks.iter().map(|t| t.valid.len() - t.valid_count()).collect(), ..Default::default() };
    if spec.kind == FamilyKind::SkewProduct {
        // only the {∂_z p = 0} curves reduce to a base-coordinate collision
        report.skipped_components = crate::critical::w_critical_points(spec, dom.center, Cx::<T>::zero())?.len();
    }
    let n_crit = z_critical_points(spec, dom.center)?.len();
    let cont = ContinuationConfig::default();

    struct Job {
        track: usize,
        crit: usize,
        n0: usize,
        m: usize,
    }
    let mut jobs = Vec::new();
    for (t, track) in tracks.iter().enumerate() {
        for crit in 0..n_crit {
            for n0 in 1..=cfg.n0_max {
                for m in 0..track.period {
                    jobs.push(Job { track: t, crit, n0, m });
                }
            }
        }
    }

    type Found<T> = (usize, Result<MisiurewiczHit<T>, &'static str>);
    let found: Vec<Vec<Found<T>>> = jobs
        .par_iter()
        .map(|job| {
            let track = &tracks[job.track];
            let res = Residual { spec, track, crit: job.crit, n0: job.n0, m: job.m, cont };
            let h = track.dom.h();
            let mut out = Vec::new();
            for k in 0..track.points.len() {
                if !track.valid[k] {
                    continue;
                }
                let l0 = track.dom.node(k % track.dom.nx, k / track.dom.nx);
                let Some((r, dr)) = res.eval_with(l0, track.points[k]) else { continue };
                if !((r / dr).norm() < T::c(2.0) * h) {
                    continue;
                }
                out.push((job.track, refine(&res, l0, h, dom, cfg)));
            }
            out
        })
        .collect();

    let mut hits: Vec<MisiurewiczHit<T>> = Vec::new();
    for (t, outcome) in found.into_iter().flatten() {
        report.candidates += 1;
        match outcome {
            Ok(mut hit) => {
                hit.cycle_id = tracks[t].id;
                let dup = hits.iter_mut().find(|h| (h.lambda_star - hit.lambda_star).norm() < T::tol(1e-8));
                match dup {
                    Some(h) => {
                        if (hit.n0, hit.critical_id, hit.cycle_id) < (h.n0, h.critical_id, h.cycle_id) {
                            *h = hit;
                        }
                    }
                    None => hits.push(hit),
                }
            }
            Err("persistent") => report.rejected_persistent += 1,
            Err("transversality") => report.rejected_transversality += 1,
            Err("repelling") => report.rejected_not_repelling += 1,
            Err(_) => report.rejected_unconverged += 1,
        }
    }

    // Condition 2: the cycle point must lie on the sampled Julia set.
    let checked: Vec<Option<MisiurewiczHit<T>>> = hits
        .par_iter()
        .map(|h| {
            let seed = derive_seed(cfg.seed, &[h.lambda_star.re.as_f64().to_bits(), h.lambda_star.im.as_f64().to_bits()]);
            let sample = sample_equilibrium(spec, h.lambda_star, &SamplerConfig::new(cfg.julia_depth, cfg.julia_count), seed).ok()?;
            let d = sample.nearest_distance(&h.cycle_point);
            (d < cfg.julia_tolerance).then_some(MisiurewiczHit { julia_distance: d, ..*h })
        })
        .collect();
    for c in checked {
        match c {
            Some(hit) => {
                let track = tracks.iter().find(|t| t.id == hit.cycle_id);
                if let Some(t) = track {
                    let (i, j) = nearest_node(&t.dom, hit.lambda_star);
                    if !t.valid[t.index(i, j)] {
                        report.punctured += 1;
                    }
                }
                report.hits.push(hit)
            }
            None => report.rejected_julia += 1,
        }
    }
    report.hits.sort_by(|a, b| {
        (a.lambda_star.re, a.lambda_star.im)
            .partial_cmp(&(b.lambda_star.re, b.lambda_star.im))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(report)
}

fn refine<T: Real>(
    res: &Residual<'_, T>,
    l0: Cx<T>,
    h: T,
    dom: &ParameterDomain<T>,
    cfg: &ScanConfig<T>,
) -> Result<MisiurewiczHit<T>, &'static str> {
    let mut l = l0;
    for _ in 0..cfg.newton_iterations {
        let (r, dr, _) = res.eval(l).ok_or("diverged")?;
        let step = r / dr;
        if !is_finite(step) {
            return Err("diverged");
        }
        let len = step.norm();
        let damp = if len > h { h / len } else { T::one() };
        l = l - step * damp;
        if len <= T::epsilon() * T::c(8.0) * (T::one() + l.norm()) {
            break;
        }
    }
    if !dom.contains(l) {
        return Err("outside");
    }
    let (r, _, sigma) = res.eval(l).ok_or("diverged")?;
    if !(r.norm() < cfg.residual_tol) {
        return Err("residual");
    }
    // non-persistence: r must not vanish identically around λ*
    let rad = cfg.probe_cells * h;
    let persistent = (0..9).all(|k| {
        let p = if k == 0 { l } else {
            let th = T::TAU() * T::nat(k - 1) / T::c(8.0);
            l + cx(th.cos(), th.sin()) * rad
        };
        res.eval(p).is_some_and(|(rp, _, _)| rp.norm() < cfg.residual_tol)
    });
    if persistent {
        return Err("persistent");
    }
    let delta = T::tol(1e-6) * h.max(T::tol(1e-3));
    let plus = res.eval(l + cx(delta, T::zero())).ok_or("diverged")?.0;
    let minus = res.eval(l - cx(delta, T::zero())).ok_or("diverged")?.0;
    let transversality = ((plus - minus) / (delta * T::c(2.0))).norm();
    if !(transversality > cfg.transversality_floor) {
        return Err("transversality");
    }
    let mult = min_modulus(&multipliers(res.spec, l, sigma, res.track.period));
    if !(mult > T::one() + res.cont.repelling_tol) {
        return Err("repelling");
    }
    let mut point = sigma;
    for _ in 0..res.m {
        point = res.spec.evaluate(l, point).map_err(|_| "diverged")?;
    }
    Ok(MisiurewiczHit {
        lambda_star: l,
        n0: res.n0,
        critical_id: res.crit,
        cycle_id: 0,
        cycle_index: res.m,
        residual: r.norm(),
        transversality,
        cycle_point: point,
        multiplier_modulus: mult,
        julia_distance: T::zero(),
    })
}

#[derive(Clone, Debug)]
pub struct HitVerification<T: Real> {
    pub lambda_star: Cx<T>,
    /// `dd^c L` mass of the 5×5 node neighborhood.
    pub neighborhood_mass: T,
    pub noise_floor: T,
    pub above_floor: bool,
    pub local_rate: Option<RateFit<T>>,
    /// Positive mass was expected and not found.
    pub contradiction: bool,
}

/// Checks a hit against the bifurcation current: positive mass near it and,
/// optionally, postcritical growth on the 5×5 window around it.
pub fn verify_hit<T: Real>(
    spec: &FamilySpec<T>,
    hit: &MisiurewiczHit<T>,
    bif: &BifField<T>,
    noise_floor: T,
    growth: Option<(&MassConfig<T>, RangeInclusive<usize>)>,
) -> Result<HitVerification<T>, MisiurewiczError> {
    let dom = &bif.dom;
    let (ci, cj) = nearest_node(dom, hit.lambda_star);
    let near = |i: usize, j: usize| i.abs_diff(ci) <= 2 && j.abs_diff(cj) <= 2;
    let mass = bif.mass_where(|i, j, _| near(i, j));
    let local_rate = match growth {
        Some((cfg, ns)) => {
            let h = dom.h();
            let window = ParameterDomain::square(dom.node(ci, cj), h * T::c(5.0), 5)?;
            let series = volume_series(spec, &window, ns, cfg)?;
            Some(growth_rate(&series)?)
        }
        None => None,
    };
    let above = mass > noise_floor;
    Ok(HitVerification {
        lambda_star: hit.lambda_star,
        neighborhood_mass: mass,
        noise_floor,
        above_floor: above,
        local_rate,
        contradiction: !above,
    })
}
