//! All-roots solver for univariate complex polynomials.
//!
//! Roots are found simultaneously with the Aberth–Ehrlich iteration, then
//! simple roots are Newton-polished and numerically coincident roots are
//! merged into one entry carrying a multiplicity. The iteration only needs
//! `P/P'` at a point, so [`PolyEval`] also admits polynomials that are never
//! expanded into coefficients (iterates of a map, for example).

use num_traits::{One, Zero};
use thiserror::Error;

use crate::family::{FamilyKind, FamilySpec, Point};
use crate::scalar::{cx, is_finite, Cx, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Root<T: Real> {
    pub value: Cx<T>,
    pub multiplicity: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RootSet<T: Real> {
    pub roots: Vec<Root<T>>,
    /// Max `|P(root)|` after polishing.
    pub residual_max: T,
    pub converged: bool,
}

impl<T: Real> RootSet<T> {
    /// Root count with multiplicity.
    pub fn degree(&self) -> usize {
        self.roots.iter().map(|r| r.multiplicity).sum()
    }

    /// Each root repeated according to its multiplicity.
    pub fn expanded(&self) -> Vec<Cx<T>> {
        self.roots
            .iter()
            .flat_map(|r| std::iter::repeat(r.value).take(r.multiplicity))
            .collect()
    }

    /// Orders roots by angle around their centroid. The order depends only
    /// on the root set, never on solver internals.
    pub fn canonicalize(&mut self) {
        let n = T::nat(self.degree().max(1));
        let centroid = self
            .roots
            .iter()
            .fold(Cx::<T>::zero(), |acc, r| acc + r.value * T::nat(r.multiplicity))
            / n;
        self.roots.sort_by(|a, b| {
            let ka = (a.value - centroid).arg();
            let kb = (b.value - centroid).arg();
            ka.partial_cmp(&kb)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.value.norm().partial_cmp(&b.value.norm()).unwrap_or(std::cmp::Ordering::Equal))
        });
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError<T: Real> {
    #[error("leading coefficient is degenerate")]
    DegenerateLeadingCoefficient,
    #[error("root finder did not converge (residual {})", partial.residual_max)]
    NonConvergence { partial: RootSet<T> },
}

#[derive(Clone, Copy, Debug)]
pub struct SolverConfig<T: Real> {
    pub max_iterations: usize,
    pub polish_iterations: usize,
    /// Residual tolerance, relative to `Σ|a_i||z|^i` (at least 1).
    pub polish_tol: T,
    /// Roots closer than this (relative to `max(1, |z|)`) are one root.
    pub cluster_eps: T,
    /// `|a_d| ≤ degeneracy · max|a_i|` is rejected.
    pub degeneracy: T,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 500,
            polish_iterations: 50,
            polish_tol: T::tol(1e-12),
            cluster_eps: T::tol(1e-9),
            degeneracy: T::tol(1e-14),
        }
    }
}

/// A polynomial that can be evaluated with its derivative.
pub trait PolyEval<T: Real>: Sync {
    fn degree(&self) -> usize;

    /// `(P(z), P'(z))`.
    fn eval(&self, z: Cx<T>) -> (Cx<T>, Cx<T>);

    /// Magnitude against which `|P(z)|` is judged, e.g. `Σ|a_i||z|^i`.
    fn scale(&self, z: Cx<T>) -> T;

    /// Newton correction `P(z)/P'(z)`.
    fn newton_ratio(&self, z: Cx<T>) -> Cx<T> {
        let (v, d) = self.eval(z);
        v / d
    }
}

/// Dense polynomial, ascending coefficients.
#[derive(Clone, Debug)]
pub struct Coeffs<'a, T: Real>(pub &'a [Cx<T>]);

impl<T: Real> PolyEval<T> for Coeffs<'_, T> {
    fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    fn eval(&self, z: Cx<T>) -> (Cx<T>, Cx<T>) {
        let mut v = Cx::<T>::zero();
        let mut d = Cx::<T>::zero();
        for &c in self.0.iter().rev() {
            d = d * z + v;
            v = v * z + c;
        }
        (v, d)
    }

    fn scale(&self, z: Cx<T>) -> T {
        let r = z.norm();
        self.0.iter().rev().fold(T::zero(), |acc, c| acc * r + c.norm())
    }
}

/// Solves a dense polynomial given by ascending coefficients.
pub fn solve<T: Real>(coeffs: &[Cx<T>]) -> Result<RootSet<T>, RootError<T>> {
    solve_with(coeffs, &SolverConfig::default())
}

pub fn solve_with<T: Real>(
    coeffs: &[Cx<T>],
    cfg: &SolverConfig<T>,
) -> Result<RootSet<T>, RootError<T>> {
    let max_c = coeffs.iter().map(|c| c.norm()).fold(T::zero(), T::max);
    let lead = match coeffs.last() {
        Some(l) => l.norm(),
        None => return Err(RootError::DegenerateLeadingCoefficient),
    };
    if coeffs.len() < 2 || !(lead > cfg.degeneracy * max_c) || !lead.is_finite() {
        return Err(RootError::DegenerateLeadingCoefficient);
    }

    // Exact zero roots are split off before iterating.
    let zeros = coeffs.iter().take_while(|c| c.is_zero()).count();
    let deflated = &coeffs[zeros..];
    let mut values: Vec<Cx<T>> = vec![Cx::<T>::zero(); zeros];
    let mut converged = true;
    match deflated.len() - 1 {
        0 => {}
        1 => values.push(-deflated[0] / deflated[1]),
        2 => {
            let (a, b) = quadratic(deflated[2], deflated[1], deflated[0]);
            values.push(a);
            values.push(b);
        }
        _ => {
            let poly = Coeffs(deflated);
            let init = newton_polygon_guesses(deflated);
            let (found, ok) = aberth(&poly, init, cfg);
            converged = ok;
            values.extend(found);
        }
    }
    let poly = Coeffs(coeffs);
    finish(&poly, values, converged, cfg)
}

/// Roots of `a z² + b z + c` without cancellation.
fn quadratic<T: Real>(a: Cx<T>, b: Cx<T>, c: Cx<T>) -> (Cx<T>, Cx<T>) {
    let disc = (b * b - a * c * T::c(4.0)).sqrt();
    let s = if (b.conj() * disc).re >= T::zero() { disc } else { -disc };
    let q = -(b + s) / T::c(2.0);
    if q.is_zero() {
        (Cx::<T>::zero(), Cx::<T>::zero())
    } else {
        (q / a, c / q)
    }
}

/// Polishes simple roots, merges clusters and builds the [`RootSet`].
pub fn finish<T: Real, P: PolyEval<T>>(
    poly: &P,
    values: Vec<Cx<T>>,
    aberth_converged: bool,
    cfg: &SolverConfig<T>,
) -> Result<RootSet<T>, RootError<T>> {
    let mut roots = cluster(&values, cfg.cluster_eps);
    for r in roots.iter_mut().filter(|r| r.multiplicity == 1) {
        r.value = polish(poly, r.value, cfg);
    }
    let mut residual_max = T::zero();
    let mut residual_ok = true;
    for r in &roots {
        let (v, _) = poly.eval(r.value);
        let res = v.norm();
        residual_max = residual_max.max(res);
        let allowed = cfg.polish_tol * poly.scale(r.value).max(T::one());
        // Multiple roots are only determined to about sqrt(eps).
        let allowed = if r.multiplicity > 1 { allowed.sqrt() } else { allowed };
        if !(res <= allowed) {
            residual_ok = false;
        }
    }
    let set = RootSet { roots, residual_max, converged: aberth_converged && residual_ok };
    if set.converged {
        Ok(set)
    } else {
        Err(RootError::NonConvergence { partial: set })
    }
}

fn polish<T: Real, P: PolyEval<T>>(poly: &P, z0: Cx<T>, cfg: &SolverConfig<T>) -> Cx<T> {
    let mut z = z0;
    let (v, _) = poly.eval(z);
    let mut res = v.norm();
    for _ in 0..cfg.polish_iterations {
        if res <= T::epsilon() * poly.scale(z) {
            break;
        }
        let step = poly.newton_ratio(z);
        if !is_finite(step) {
            break;
        }
        let cand = z - step;
        let (cv, _) = poly.eval(cand);
        let cres = cv.norm();
        if !(cres < res) {
            break;
        }
        z = cand;
        res = cres;
        if step.norm() <= T::epsilon() * z.norm() {
            break;
        }
    }
    z
}

/// Single-linkage clustering; each cluster becomes its mean with the
/// cluster size as multiplicity. Output order follows first appearance.
pub fn cluster<T: Real>(values: &[Cx<T>], eps: T) -> Vec<Root<T>> {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let tol = eps * values[i].norm().max(values[j].norm()).max(T::one());
            if (values[i] - values[j]).norm() < tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[b.max(a)] = a.min(b);
                }
            }
        }
    }
    let mut order: Vec<usize> = Vec::new();
    let mut sums: Vec<(Cx<T>, usize)> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = sums.len();
            sums.push((Cx::<T>::zero(), 0));
            order.push(r);
        }
        let s = &mut sums[slot[r]];
        s.0 = s.0 + values[i];
        s.1 += 1;
    }
    sums.into_iter()
        .map(|(s, m)| Root { value: s / T::nat(m), multiplicity: m })
        .collect()
}

/// Initial guesses on circles read off the upper convex hull of
/// `(i, log|a_i|)`.
pub fn newton_polygon_guesses<T: Real>(coeffs: &[Cx<T>]) -> Vec<Cx<T>> {
    let d = coeffs.len() - 1;
    let pts: Vec<(usize, f64)> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_zero())
        .map(|(i, c)| (i, c.norm().as_f64().ln()))
        .collect();
    let mut hull: Vec<(usize, f64)> = Vec::new();
    for &p in &pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 as f64 - a.0 as f64) * (p.1 - a.1) - (b.1 - a.1) * (p.0 as f64 - a.0 as f64);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let mut out = Vec::with_capacity(d);
    let sigma = 0.7;
    for seg in hull.windows(2) {
        let (k0, l0) = seg[0];
        let (k1, l1) = seg[1];
        let m = k1 - k0;
        let radius = ((l0 - l1) / m as f64).exp();
        for j in 0..m {
            let theta = 2.0 * std::f64::consts::PI * (j as f64) / (m as f64)
                + 2.0 * std::f64::consts::PI * (k0 as f64) / (d as f64)
                + sigma;
            out.push(cx(T::c(radius * theta.cos()), T::c(radius * theta.sin())));
        }
    }
    // Leading zeros of the coefficient list are handled by the caller; any
    // shortfall (should not happen) is filled on the unit circle.
    while out.len() < d {
        let theta = 2.0 * std::f64::consts::PI * out.len() as f64 / d as f64 + sigma;
        out.push(cx(T::c(theta.cos()), T::c(theta.sin())));
    }
    out
}

/// Aberth–Ehrlich iteration (Gauss–Seidel sweep) from the given guesses.
/// Returns the approximations and whether every root met the stopping test.
pub fn aberth<T: Real, P: PolyEval<T>>(
    poly: &P,
    mut z: Vec<Cx<T>>,
    cfg: &SolverConfig<T>,
) -> (Vec<Cx<T>>, bool) {
    let n = z.len();
    let kappa = T::c(8.0) * T::epsilon();
    let tiny = T::epsilon() * T::epsilon();
    // Separate exact coincidences, which would make the Aberth sum singular.
    for i in 0..n {
        for j in 0..i {
            if z[i] == z[j] {
                let bump = T::c(1e-3) * (T::one() + z[i].norm());
                let t = T::c(0.618 * (i as f64 + 1.0));
                z[i] = z[i] + cx(bump * t.cos(), bump * t.sin());
            }
        }
    }
    let mut done = vec![false; n];
    for _ in 0..cfg.max_iterations {
        let mut all = true;
        for i in 0..n {
            if done[i] {
                continue;
            }
            let (v, _) = poly.eval(z[i]);
            let scale = poly.scale(z[i]);
            if is_finite(v) && (v.norm() <= kappa * scale || v.norm() <= tiny) {
                done[i] = true;
                continue;
            }
            let ratio = poly.newton_ratio(z[i]);
            let mut sum = Cx::<T>::zero();
            for j in 0..n {
                if j != i {
                    let diff = z[i] - z[j];
                    if !diff.is_zero() {
                        sum = sum + Cx::<T>::one() / diff;
                    }
                }
            }
            let mut step = ratio / (Cx::<T>::one() - ratio * sum);
            if !is_finite(step) {
                // P' vanished: nudge off the critical point.
                let nudge = T::c(1e-6) * (T::one() + z[i].norm());
                step = cx(nudge, nudge);
            }
            z[i] = z[i] - step;
            if step.norm() <= kappa * z[i].norm() {
                done[i] = true;
            } else {
                all = false;
            }
        }
        if all {
            return (z, true);
        }
    }
    let ok = done.iter().all(|&d| d);
    (z, ok)
}

/// The fiberwise preimages of a point under `f_λ`. For a skew product the
/// base roots come first and each carries its own fiber root set.
#[derive(Clone, Debug)]
pub struct Preimages<T: Real> {
    pub base: RootSet<T>,
    /// Empty for univariate families; otherwise one entry per base root.
    pub fibers: Vec<RootSet<T>>,
}

impl<T: Real> Preimages<T> {
    /// Count with multiplicity.
    pub fn count(&self) -> usize {
        if self.fibers.is_empty() {
            self.base.degree()
        } else {
            self.base
                .roots
                .iter()
                .zip(&self.fibers)
                .map(|(r, f)| r.multiplicity * f.degree())
                .sum()
        }
    }

    /// Distinct preimage points with multiplicity.
    pub fn points(&self) -> Vec<(Point<T>, usize)> {
        if self.fibers.is_empty() {
            self.base
                .roots
                .iter()
                .map(|r| (Point::scalar(r.value), r.multiplicity))
                .collect()
        } else {
            self.base
                .roots
                .iter()
                .zip(&self.fibers)
                .flat_map(|(r, fib)| {
                    fib.roots
                        .iter()
                        .map(move |w| (Point::new(r.value, w.value), r.multiplicity * w.multiplicity))
                })
                .collect()
        }
    }

    /// Preimages listed with repetition, `d_t` entries in canonical order.
    pub fn expanded(&self) -> Vec<Point<T>> {
        self.points()
            .into_iter()
            .flat_map(|(p, m)| std::iter::repeat(p).take(m))
            .collect()
    }

    pub fn residual_max(&self) -> T {
        self.fibers
            .iter()
            .map(|f| f.residual_max)
            .fold(self.base.residual_max, T::max)
    }
}

fn shifted<T: Real>(mut coeffs: Vec<Cx<T>>, target: Cx<T>) -> Vec<Cx<T>> {
    coeffs[0] = coeffs[0] - target;
    coeffs
}

/// Preimages of `target` under `f_λ`, with multiplicity. Skew products are
/// solved as a cascade: base equation first, then one fiber per base root.
pub fn solve_shifted<T: Real>(
    spec: &FamilySpec<T>,
    lambda: Cx<T>,
    target: Point<T>,
) -> Result<Preimages<T>, RootError<T>> {
    let mut base = solve(&shifted(spec.p_coeffs_at(lambda), target.z))?;
    base.canonicalize();
    let fibers = match spec.kind {
        FamilyKind::Univariate => Vec::new(),
        FamilyKind::SkewProduct => base
            .roots
            .iter()
            .map(|r| {
                let mut f = solve(&shifted(spec.q_coeffs_at(lambda, r.value), target.w))?;
                f.canonicalize();
                Ok(f)
            })
            .collect::<Result<Vec<_>, _>>()?,
    };
    Ok(Preimages { base, fibers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::re;

    fn sorted_re(set: &RootSet<f64>) -> Vec<f64> {
        let mut v: Vec<f64> = set.expanded().iter().map(|z| z.re).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn quadratic_examples() {
        let s = solve(&[re(-1.0), re(0.0), re(1.0)]).unwrap();
        assert_eq!(s.roots.len(), 2);
        assert!(s.roots.iter().all(|r| r.multiplicity == 1));
        let v = sorted_re(&s);
        assert!((v[0] + 1.0).abs() < 1e-15 && (v[1] - 1.0).abs() < 1e-15);

        let s = solve(&[re(0.0), re(0.0), re(1.0)]).unwrap();
        assert_eq!(s.roots, vec![Root { value: re(0.0), multiplicity: 2 }]);
    }

    #[test]
    fn period_four_equation_of_z_squared() {
        // z^16 - z: 0 and the 15th roots of unity
        let mut c = vec![re(0.0); 17];
        c[1] = re(-1.0);
        c[16] = re(1.0);
        let s = solve(&c).unwrap();
        assert_eq!(s.degree(), 16);
        assert_eq!(s.roots.len(), 16);
        let mut unit = 0;
        for r in &s.roots {
            if r.value.norm() < 1e-12 {
                continue;
            }
            assert!((r.value.powu(15) - re(1.0)).norm() < 1e-12);
            unit += 1;
        }
        assert_eq!(unit, 15);
    }

    #[test]
    fn degenerate_leading_coefficient() {
        assert_eq!(
            solve(&[re(1.0), re(2.0), re(0.0)]),
            Err(RootError::DegenerateLeadingCoefficient)
        );
        assert_eq!(solve::<f64>(&[re(1.0)]), Err(RootError::DegenerateLeadingCoefficient));
    }

    #[test]
    fn triple_root_is_tagged() {
        // (z - 1)^3 (z + 2)
        let c = [re(-2.0), re(5.0), re(-3.0), re(-1.0), re(1.0)];
        let cfg = SolverConfig { cluster_eps: 1e-4, ..SolverConfig::default() };
        let s = solve_with(&c, &cfg).unwrap();
        assert_eq!(s.degree(), 4);
        let triple = s.roots.iter().find(|r| r.multiplicity == 3).expect("triple root");
        assert!((triple.value - re(1.0)).norm() < 1e-4);
    }

    #[test]
    fn preimage_examples() {
        let q = FamilySpec::<f64>::quadratic(10.0);
        let pre = solve_shifted(&q, re(0.0), Point::scalar(re(4.0))).unwrap();
        let mut v: Vec<f64> = pre.expanded().iter().map(|p| p.z.re).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((v[0] + 2.0).abs() < 1e-15 && (v[1] - 2.0).abs() < 1e-15);

        let pre = solve_shifted(&q, re(0.0), Point::scalar(re(0.0))).unwrap();
        assert_eq!(pre.points(), vec![(Point::scalar(re(0.0)), 2)]);
        assert_eq!(pre.count(), 2);

        // (z²+λ, w²+z) at λ=0, target (1,1): z = ±1, then w² = 1 - z
        let s = FamilySpec::<f64>::skew_quadratic(10.0);
        let pre = solve_shifted(&s, re(0.0), Point::new(re(1.0), re(1.0))).unwrap();
        assert_eq!(pre.count(), 4);
        let pts = pre.points();
        let at_one: Vec<_> = pts.iter().filter(|(p, _)| (p.z - re(1.0)).norm() < 1e-14).collect();
        assert_eq!(at_one.len(), 1);
        assert_eq!(at_one[0].1, 2); // w² = 0
        let at_minus: Vec<_> = pts.iter().filter(|(p, _)| (p.z + re(1.0)).norm() < 1e-14).collect();
        assert_eq!(at_minus.len(), 2);
        for (p, m) in at_minus {
            assert_eq!(*m, 1);
            assert!((p.w * p.w - re(2.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn canonical_order_is_independent_of_input_order() {
        let a = [re(1.0), cx(0.0, 1.0), re(-1.0)];
        let mut s1 = RootSet {
            roots: a.iter().map(|&v| Root { value: v, multiplicity: 1 }).collect(),
            residual_max: 0.0,
            converged: true,
        };
        let mut s2 = s1.clone();
        s2.roots.reverse();
        s1.canonicalize();
        s2.canonicalize();
        assert_eq!(s1, s2);
    }

    #[test]
    fn single_precision_roots() {
        let s = solve(&[cx(-4.0f32, 0.0), cx(0.0, 0.0), cx(1.0, 0.0)]).unwrap();
        let mut v: Vec<f32> = s.expanded().iter().map(|z| z.re).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((v[0] + 2.0).abs() < 1e-6 && (v[1] - 2.0).abs() < 1e-6);
    }
}
