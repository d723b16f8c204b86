//! Parameterized polynomial families `f_λ` on `ℂ` or skew products on `ℂ²`.
//!
//! A univariate family is `z ↦ p(λ, z)`. A skew product is
//! `(z, w) ↦ (p(λ, z), q(λ, z, w))`; its Jacobian is lower triangular so
//! preimages reduce to two univariate root solves.
//!
//! Restricting a polynomial map to the polydisk of radius `R` gives a
//! polynomial-like map `U → V` as soon as the preimage of that polydisk is
//! relatively compact in it. [`FamilySpec::validate_polynomial_like`]
//! certifies this from coefficient bounds.

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{cx, is_finite, Cx, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FamilyError {
    #[error("topological degree {0} is below 2")]
    DegreeTooSmall(usize),
    #[error("coefficient table is empty")]
    EmptyCoefficients,
    #[error("escape radius must be positive and finite")]
    BadEscapeRadius,
    #[error("d_star_upper ({d_star}) must be positive and below d_t ({d_t})")]
    DStarNotBelowDt { d_star: f64, d_t: usize },
    #[error("invalid parameter domain: {0}")]
    InvalidDomain(String),
    #[error("leading coefficient may vanish on the parameter domain")]
    LeadingCoefficientVanishes,
    #[error(
        "NoEscapeCertificate: coefficient bounds give escape radius r = {r} which is not below R = {escape_radius}; raise the escape radius"
    )]
    NoEscapeCertificate { r: f64, escape_radius: f64 },
    #[error("orbit escaped at step {step}")]
    Escaped { step: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyKind {
    Univariate,
    SkewProduct,
}

impl FamilyKind {
    /// Ambient dimension `k`.
    pub fn dim(self) -> usize {
        match self {
            FamilyKind::Univariate => 1,
            FamilyKind::SkewProduct => 2,
        }
    }
}

/// Polynomial in the parameter, ascending coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamPoly<T: Real>(pub Vec<Cx<T>>);

impl<T: Real> ParamPoly<T> {
    pub fn constant(c: Cx<T>) -> Self {
        ParamPoly(vec![c])
    }

    pub fn real(coeffs: &[f64]) -> Self {
        ParamPoly(coeffs.iter().map(|&c| cx(T::c(c), T::zero())).collect())
    }

    pub fn zero() -> Self {
        ParamPoly(Vec::new())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|c| c.is_zero())
    }

    pub fn eval(&self, lambda: Cx<T>) -> Cx<T> {
        self.0
            .iter()
            .rev()
            .fold(Cx::<T>::zero(), |acc, &c| acc * lambda + c)
    }

    /// Value, first and second derivative in `λ`.
    pub fn eval2(&self, lambda: Cx<T>) -> (Cx<T>, Cx<T>, Cx<T>) {
        let mut v = Cx::<T>::zero();
        let mut d1 = Cx::<T>::zero();
        let mut d2 = Cx::<T>::zero();
        for &c in self.0.iter().rev() {
            d2 = d2 * lambda + d1 * T::c(2.0);
            d1 = d1 * lambda + v;
            v = v * lambda + c;
        }
        (v, d1, d2)
    }

    /// Upper bound of `|a(λ)|` for `|λ| ≤ rho`.
    pub fn upper_bound(&self, rho: T) -> T {
        self.0
            .iter()
            .rev()
            .fold(T::zero(), |acc, c| acc * rho + c.norm())
    }

    /// Lower bound of `|a(λ)|` for `|λ| ≤ rho`; may be negative (no bound).
    pub fn lower_bound(&self, rho: T) -> T {
        match self.0.split_first() {
            None => T::zero(),
            Some((c0, rest)) => {
                let tail = ParamPoly(rest.to_vec()).upper_bound(rho) * rho;
                c0.norm() - tail
            }
        }
    }
}

/// A point of `ℂ^k`; `w` is unused (zero) for univariate families.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Point<T: Real> {
    pub z: Cx<T>,
    pub w: Cx<T>,
}

impl<T: Real> Point<T> {
    pub fn new(z: Cx<T>, w: Cx<T>) -> Self {
        Point { z, w }
    }

    pub fn scalar(z: Cx<T>) -> Self {
        Point { z, w: Cx::<T>::zero() }
    }

    /// Polydisk (max) norm.
    pub fn norm(&self) -> T {
        self.z.norm().max(self.w.norm())
    }

    pub fn dist(&self, other: &Point<T>) -> T {
        (self.z - other.z).norm().max((self.w - other.w).norm())
    }

    pub fn is_finite(&self) -> bool {
        is_finite(self.z) && is_finite(self.w)
    }
}

/// Partial derivatives of `p(λ, z)` at a point.
#[derive(Clone, Copy, Debug)]
pub struct PPartials<T: Real> {
    pub v: Cx<T>,
    pub dz: Cx<T>,
    pub dzz: Cx<T>,
    pub dl: Cx<T>,
    pub dlz: Cx<T>,
    pub dll: Cx<T>,
}

/// Partial derivatives of `q(λ, z, w)` at a point.
#[derive(Clone, Copy, Debug)]
pub struct QPartials<T: Real> {
    pub v: Cx<T>,
    pub dz: Cx<T>,
    pub dw: Cx<T>,
    pub dl: Cx<T>,
}

/// Value of `f_λ^n` along a parameter-dependent starting point, together with
/// its derivative in `λ`.
#[derive(Clone, Copy, Debug)]
pub struct ParamDerivative<T: Real> {
    pub value: Point<T>,
    pub derivative: Point<T>,
}

/// A rectangle in the parameter plane sampled on a cell-centered grid with
/// square cells of side `h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParameterDomain<T: Real> {
    pub center: Cx<T>,
    pub half_width: T,
    pub half_height: T,
    pub nx: usize,
    pub ny: usize,
}

impl<T: Real> ParameterDomain<T> {
    pub fn new(
        center: Cx<T>,
        half_width: T,
        half_height: T,
        nx: usize,
        ny: usize,
    ) -> Result<Self, FamilyError> {
        if nx == 0 || ny == 0 {
            return Err(FamilyError::InvalidDomain("grid must have at least one node per axis".into()));
        }
        if !(half_width > T::zero() && half_height > T::zero())
            || !half_width.is_finite()
            || !half_height.is_finite()
        {
            return Err(FamilyError::InvalidDomain("half sizes must be positive".into()));
        }
        let hx = T::c(2.0) * half_width / T::nat(nx);
        let hy = T::c(2.0) * half_height / T::nat(ny);
        if (hx - hy).abs() > T::tol(1e-9) * hx {
            return Err(FamilyError::InvalidDomain(format!(
                "cells must be square (h_x = {hx}, h_y = {hy})"
            )));
        }
        Ok(ParameterDomain { center, half_width, half_height, nx, ny })
    }

    /// Square window of the given side with `n × n` cells.
    pub fn square(center: Cx<T>, side: T, n: usize) -> Result<Self, FamilyError> {
        let half = side / T::c(2.0);
        Self::new(center, half, half, n, n)
    }

    /// Grid spacing.
    pub fn h(&self) -> T {
        T::c(2.0) * self.half_width / T::nat(self.nx)
    }

    /// Coordinates of node `(0, 0)`.
    pub fn origin(&self) -> Cx<T> {
        let h = self.h();
        cx(
            self.center.re - self.half_width + h / T::c(2.0),
            self.center.im - self.half_height + h / T::c(2.0),
        )
    }

    /// Parameter at column `i`, row `j`.
    pub fn node(&self, i: usize, j: usize) -> Cx<T> {
        let h = self.h();
        self.origin() + cx(h * T::nat(i), h * T::nat(j))
    }

    pub fn corners(&self) -> [Cx<T>; 4] {
        let (c, a, b) = (self.center, self.half_width, self.half_height);
        [c + cx(-a, -b), c + cx(a, -b), c + cx(a, b), c + cx(-a, b)]
    }

    /// Largest `|λ|` over the closed rectangle (attained at a corner).
    pub fn max_modulus(&self) -> T {
        self.corners().iter().map(|c| c.norm()).fold(T::zero(), T::max)
    }

    pub fn contains(&self, lambda: Cx<T>) -> bool {
        (lambda.re - self.center.re).abs() <= self.half_width
            && (lambda.im - self.center.im).abs() <= self.half_height
    }

    /// Nearest grid node to `λ`, if `λ` lies in the rectangle.
    pub fn nearest_node(&self, lambda: Cx<T>) -> Option<(usize, usize)> {
        if !self.contains(lambda) {
            return None;
        }
        let o = self.origin();
        let h = self.h();
        let fi = ((lambda.re - o.re) / h).round().max(T::zero());
        let fj = ((lambda.im - o.im) / h).round().max(T::zero());
        let i = fi.to_usize()?.min(self.nx - 1);
        let j = fj.to_usize()?.min(self.ny - 1);
        Some((i, j))
    }

    pub fn area(&self) -> T {
        T::c(4.0) * self.half_width * self.half_height
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Escape certificate at one parameter: `f_λ^{-1}(polydisk R) ⊂ polydisk r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FamilyGeometry<T: Real> {
    pub lambda: Cx<T>,
    pub v_radius: T,
    pub u_escape_bound: T,
}

/// A holomorphic family of polynomial maps restricted to a polydisk.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilySpec<T: Real> {
    pub kind: FamilyKind,
    /// `p(λ, z) = Σ_j p[j](λ) z^j`.
    pub p: Vec<ParamPoly<T>>,
    /// `q(λ, z, w) = Σ_j Σ_i q[j][i](λ) z^i w^j`; empty for univariate families.
    pub q: Vec<Vec<ParamPoly<T>>>,
    pub escape_radius: T,
    pub d_star_upper: T,
}

fn trim<T: Real>(mut v: Vec<ParamPoly<T>>) -> Vec<ParamPoly<T>> {
    while v.last().is_some_and(|c| c.is_zero()) {
        v.pop();
    }
    v
}

impl<T: Real> FamilySpec<T> {
    pub fn univariate(p: Vec<ParamPoly<T>>, escape_radius: T) -> Result<Self, FamilyError> {
        let p = trim(p);
        if p.is_empty() {
            return Err(FamilyError::EmptyCoefficients);
        }
        let spec = FamilySpec {
            kind: FamilyKind::Univariate,
            p,
            q: Vec::new(),
            escape_radius,
            d_star_upper: T::one(),
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn skew_product(
        p: Vec<ParamPoly<T>>,
        q: Vec<Vec<ParamPoly<T>>>,
        escape_radius: T,
    ) -> Result<Self, FamilyError> {
        let p = trim(p);
        let mut q: Vec<Vec<ParamPoly<T>>> = q.into_iter().map(trim).collect();
        while q.last().is_some_and(|row| row.is_empty()) {
            q.pop();
        }
        if p.is_empty() || q.is_empty() {
            return Err(FamilyError::EmptyCoefficients);
        }
        let d_star = T::nat(p.len() - 1);
        let spec = FamilySpec {
            kind: FamilyKind::SkewProduct,
            p,
            q,
            escape_radius,
            d_star_upper: d_star,
        };
        spec.check()?;
        Ok(spec)
    }

    /// Overrides the assumed bound on `d*_{k-1}`.
    pub fn with_d_star_upper(mut self, d_star: T) -> Result<Self, FamilyError> {
        self.d_star_upper = d_star;
        if !(d_star > T::zero()) || d_star >= T::nat(self.d_t()) {
            return Err(FamilyError::DStarNotBelowDt { d_star: d_star.as_f64(), d_t: self.d_t() });
        }
        Ok(self)
    }

    fn check(&self) -> Result<(), FamilyError> {
        if !(self.escape_radius > T::zero() && self.escape_radius.is_finite()) {
            return Err(FamilyError::BadEscapeRadius);
        }
        if self.d_t() < 2 {
            return Err(FamilyError::DegreeTooSmall(self.d_t()));
        }
        Ok(())
    }

    /// `z ↦ z² + λ`.
    pub fn quadratic(escape_radius: T) -> Self {
        let p = vec![ParamPoly::real(&[0.0, 1.0]), ParamPoly::zero(), ParamPoly::real(&[1.0])];
        Self::univariate(p, escape_radius).expect("valid family")
    }

    /// `z ↦ z^d` (constant family).
    pub fn monomial(d: usize, escape_radius: T) -> Self {
        let mut p = vec![ParamPoly::zero(); d + 1];
        p[d] = ParamPoly::real(&[1.0]);
        Self::univariate(p, escape_radius).expect("valid family")
    }

    /// `z ↦ z³ + λ z`.
    pub fn cubic(escape_radius: T) -> Self {
        let p = vec![
            ParamPoly::zero(),
            ParamPoly::real(&[0.0, 1.0]),
            ParamPoly::zero(),
            ParamPoly::real(&[1.0]),
        ];
        Self::univariate(p, escape_radius).expect("valid family")
    }

    /// `(z, w) ↦ (z² + λ, w² + z)`.
    pub fn skew_quadratic(escape_radius: T) -> Self {
        let p = vec![ParamPoly::real(&[0.0, 1.0]), ParamPoly::zero(), ParamPoly::real(&[1.0])];
        let q = vec![
            vec![ParamPoly::zero(), ParamPoly::real(&[1.0])],
            vec![],
            vec![ParamPoly::real(&[1.0])],
        ];
        Self::skew_product(p, q, escape_radius).expect("valid family")
    }

    /// `(z, w) ↦ (z², w²)`.
    pub fn product_squares(escape_radius: T) -> Self {
        let p = vec![ParamPoly::zero(), ParamPoly::zero(), ParamPoly::real(&[1.0])];
        let q = vec![vec![], vec![], vec![ParamPoly::real(&[1.0])]];
        Self::skew_product(p, q, escape_radius).expect("valid family")
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn deg_p(&self) -> usize {
        self.p.len() - 1
    }

    pub fn deg_q(&self) -> usize {
        match self.kind {
            FamilyKind::Univariate => 1,
            FamilyKind::SkewProduct => self.q.len() - 1,
        }
    }

    /// Topological degree.
    pub fn d_t(&self) -> usize {
        self.deg_p() * self.deg_q()
    }

    /// Coefficients of `z ↦ p(λ, z)`, ascending.
    pub fn p_coeffs_at(&self, lambda: Cx<T>) -> Vec<Cx<T>> {
        self.p.iter().map(|a| a.eval(lambda)).collect()
    }

    /// Coefficients of `w ↦ q(λ, z, w)`, ascending.
    pub fn q_coeffs_at(&self, lambda: Cx<T>, z: Cx<T>) -> Vec<Cx<T>> {
        self.q
            .iter()
            .map(|row| {
                row.iter()
                    .rev()
                    .fold(Cx::<T>::zero(), |acc, b| acc * z + b.eval(lambda))
            })
            .collect()
    }

    pub fn p_partials(&self, lambda: Cx<T>, z: Cx<T>) -> PPartials<T> {
        let zero = Cx::<T>::zero();
        let (mut v, mut dz, mut dzz, mut dl, mut dlz, mut dll) = (zero, zero, zero, zero, zero, zero);
        for a in self.p.iter().rev() {
            let (a0, a1, a2) = a.eval2(lambda);
            dzz = dzz * z + dz * T::c(2.0);
            dz = dz * z + v;
            v = v * z + a0;
            dlz = dlz * z + dl;
            dl = dl * z + a1;
            dll = dll * z + a2;
        }
        PPartials { v, dz, dzz, dl, dlz, dll }
    }

    pub fn q_partials(&self, lambda: Cx<T>, z: Cx<T>, w: Cx<T>) -> QPartials<T> {
        let zero = Cx::<T>::zero();
        let (mut v, mut dz, mut dw, mut dl) = (zero, zero, zero, zero);
        for row in self.q.iter().rev() {
            // b(λ, z) = Σ_i row[i](λ) z^i, with ∂_z and ∂_λ.
            let (mut b, mut bz, mut bl) = (zero, zero, zero);
            for c in row.iter().rev() {
                let (c0, c1, _) = c.eval2(lambda);
                bz = bz * z + b;
                b = b * z + c0;
                bl = bl * z + c1;
            }
            dw = dw * w + v;
            v = v * w + b;
            dz = dz * w + bz;
            dl = dl * w + bl;
        }
        QPartials { v, dz, dw, dl }
    }

    /// `f_λ(pt)`. Overflow is reported as [`FamilyError::Escaped`] at step 0.
    pub fn evaluate(&self, lambda: Cx<T>, pt: Point<T>) -> Result<Point<T>, FamilyError> {
        let z = self.p_partials(lambda, pt.z).v;
        let w = match self.kind {
            FamilyKind::Univariate => Cx::<T>::zero(),
            FamilyKind::SkewProduct => self.q_partials(lambda, pt.z, pt.w).v,
        };
        let out = Point::new(z, w);
        if out.is_finite() {
            Ok(out)
        } else {
            Err(FamilyError::Escaped { step: 0 })
        }
    }

    /// `f_λ^n(pt)`, stopping with the escape index once the orbit leaves the
    /// polydisk of radius `bound`.
    pub fn iterate(
        &self,
        lambda: Cx<T>,
        pt: Point<T>,
        n: usize,
        bound: T,
    ) -> Result<Point<T>, FamilyError> {
        let mut x = pt;
        for step in 1..=n {
            x = self.evaluate(lambda, x).map_err(|_| FamilyError::Escaped { step })?;
            if x.norm() > bound {
                return Err(FamilyError::Escaped { step });
            }
        }
        Ok(x)
    }

    /// Determinant of the complex Jacobian of `f_λ`.
    pub fn jacobian(&self, lambda: Cx<T>, pt: Point<T>) -> Cx<T> {
        let dp = self.p_partials(lambda, pt.z).dz;
        match self.kind {
            FamilyKind::Univariate => dp,
            FamilyKind::SkewProduct => dp * self.q_partials(lambda, pt.z, pt.w).dw,
        }
    }

    /// Full Jacobian matrix `[[∂_z p, 0], [∂_z q, ∂_w q]]` (row-major). For
    /// univariate families only the `[0][0]` entry is meaningful.
    pub fn jacobian_matrix(&self, lambda: Cx<T>, pt: Point<T>) -> [[Cx<T>; 2]; 2] {
        let dp = self.p_partials(lambda, pt.z).dz;
        match self.kind {
            FamilyKind::Univariate => [[dp, Cx::<T>::zero()], [Cx::<T>::zero(), Cx::<T>::one()]],
            FamilyKind::SkewProduct => {
                let q = self.q_partials(lambda, pt.z, pt.w);
                [[dp, Cx::<T>::zero()], [q.dz, q.dw]]
            }
        }
    }

    /// `∂_λ f_λ^n(x(λ))` propagated by the chain rule, where `x(λ)` starts at
    /// `start` with derivative `start_dl`. Escape (leaving the polydisk of
    /// radius `R`, or overflow) is reported with the step index.
    pub fn param_derivative(
        &self,
        lambda: Cx<T>,
        start: Point<T>,
        start_dl: Point<T>,
        n: usize,
    ) -> Result<ParamDerivative<T>, FamilyError> {
        let mut x = start;
        let mut dx = start_dl;
        for step in 1..=n {
            let pp = self.p_partials(lambda, x.z);
            let (nz, ndz) = (pp.v, pp.dl + pp.dz * dx.z);
            let (nw, ndw) = match self.kind {
                FamilyKind::Univariate => (Cx::<T>::zero(), Cx::<T>::zero()),
                FamilyKind::SkewProduct => {
                    let qq = self.q_partials(lambda, x.z, x.w);
                    (qq.v, qq.dl + qq.dz * dx.z + qq.dw * dx.w)
                }
            };
            x = Point::new(nz, nw);
            dx = Point::new(ndz, ndw);
            if !x.is_finite() || !dx.is_finite() || x.norm() > self.escape_radius {
                return Err(FamilyError::Escaped { step });
            }
        }
        Ok(ParamDerivative { value: x, derivative: dx })
    }

    /// `dc/dλ` for a simple critical point `c` of `p(λ, ·)` (implicit
    /// differentiation of `∂_z p(λ, c(λ)) = 0`). Zero when `c` is degenerate.
    pub fn critical_point_velocity(&self, lambda: Cx<T>, c: Cx<T>) -> Cx<T> {
        let pp = self.p_partials(lambda, c);
        if pp.dzz.norm() <= T::epsilon() {
            Cx::<T>::zero()
        } else {
            -pp.dlz / pp.dzz
        }
    }

    /// Certifies `U ⋐ V` over the whole parameter rectangle and reports the
    /// certificate at its four corners.
    pub fn validate_polynomial_like(
        &self,
        dom: &ParameterDomain<T>,
    ) -> Result<Vec<FamilyGeometry<T>>, FamilyError> {
        let r = self.escape_bound(dom.max_modulus())?;
        Ok(dom
            .corners()
            .iter()
            .map(|&lambda| FamilyGeometry {
                lambda,
                v_radius: self.escape_radius,
                u_escape_bound: r,
            })
            .collect())
    }

    /// Certificate radius `r` valid for every `|λ| ≤ rho`: points of
    /// `f_λ^{-1}(polydisk R)` lie in the polydisk of radius `r < R`.
    pub fn escape_bound(&self, rho: T) -> Result<T, FamilyError> {
        let big_r = self.escape_radius;
        let d = self.deg_p();
        let lead = self.p[d].lower_bound(rho);
        if !(lead > T::zero()) {
            return Err(FamilyError::LeadingCoefficientVanishes);
        }
        let lower: Vec<T> = self.p[..d].iter().map(|a| a.upper_bound(rho)).collect();
        let r_z = level_radius(lead, &lower, big_r);
        let r = match self.kind {
            FamilyKind::Univariate => r_z,
            FamilyKind::SkewProduct => {
                let dq = self.deg_q();
                let bound_row = |row: &Vec<ParamPoly<T>>| {
                    row.iter()
                        .rev()
                        .fold(T::zero(), |acc, c| acc * r_z + c.upper_bound(rho))
                };
                let lead_row = &self.q[dq];
                let lead_q = match lead_row.split_first() {
                    None => T::zero(),
                    Some((c0, rest)) => {
                        let tail: T = rest
                            .iter()
                            .enumerate()
                            .map(|(i, c)| c.upper_bound(rho) * r_z.powi(i as i32 + 1))
                            .sum();
                        c0.lower_bound(rho) - tail
                    }
                };
                if !(lead_q > T::zero()) {
                    return Err(FamilyError::LeadingCoefficientVanishes);
                }
                let lower_q: Vec<T> = self.q[..dq].iter().map(bound_row).collect();
                r_z.max(level_radius(lead_q, &lower_q, big_r))
            }
        };
        if r < big_r {
            Ok(r)
        } else {
            Err(FamilyError::NoEscapeCertificate { r: r.as_f64(), escape_radius: big_r.as_f64() })
        }
    }
}

/// Unique positive `t` with `lead·t^d − Σ_{j<d} lower[j]·t^j = level`.
/// The left side minus `level` has one sign change in its coefficients, so
/// it is positive exactly beyond this root.
fn level_radius<T: Real>(lead: T, lower: &[T], level: T) -> T {
    let d = lower.len();
    let phi = |t: T| {
        let tail = lower.iter().rev().fold(T::zero(), |acc, &m| acc * t + m);
        lead * t.powi(d as i32) - tail - level
    };
    let mut hi = T::one();
    while phi(hi) <= T::zero() {
        hi = hi * T::c(2.0);
        if !hi.is_finite() {
            return T::infinity();
        }
    }
    let mut lo = T::zero();
    for _ in 0..200 {
        let mid = (lo + hi) / T::c(2.0);
        if phi(mid) > T::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= T::epsilon() * hi {
            break;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::re;

    fn c(x: f64, y: f64) -> Cx<f64> {
        cx(x, y)
    }

    #[test]
    fn evaluate_examples() {
        let q = FamilySpec::<f64>::quadratic(10.0);
        let v = q.evaluate(re(0.0), Point::scalar(re(2.0))).unwrap();
        assert_eq!(v.z, re(4.0));
        let v = q.evaluate(re(-2.0), Point::scalar(re(0.0))).unwrap();
        assert_eq!(v.z, re(-2.0));
        let s = FamilySpec::<f64>::skew_quadratic(10.0);
        let v = s.evaluate(re(0.0), Point::new(re(1.0), re(1.0))).unwrap();
        assert_eq!((v.z, v.w), (re(1.0), re(2.0)));
    }

    #[test]
    fn overflow_is_flagged() {
        let q = FamilySpec::<f64>::quadratic(10.0);
        let err = q.evaluate(re(0.0), Point::scalar(re(1e200))).unwrap_err();
        assert_eq!(err, FamilyError::Escaped { step: 0 });
    }

    #[test]
    fn jacobian_examples() {
        let q = FamilySpec::<f64>::quadratic(10.0);
        assert_eq!(q.jacobian(c(0.3, -1.0), Point::scalar(re(1.0))), re(2.0));
        assert_eq!(q.jacobian(c(0.3, -1.0), Point::scalar(re(0.0))), re(0.0));
        let s = FamilySpec::<f64>::skew_quadratic(10.0);
        assert_eq!(s.jacobian(re(0.0), Point::new(re(1.0), re(1.0))), re(4.0));
    }

    #[test]
    fn param_derivative_examples() {
        let q = FamilySpec::<f64>::quadratic(10.0);
        let zero = Point::scalar(re(0.0));
        let d1 = q.param_derivative(re(0.5), zero, zero, 1).unwrap();
        assert_eq!(d1.derivative.z, re(1.0));
        let d2 = q.param_derivative(re(0.0), zero, zero, 2).unwrap();
        assert_eq!(d2.derivative.z, re(1.0));
        // g = (λ²+λ)²+λ, g' = 2(λ²+λ)(2λ+1)+1
        let oracle = |l: f64| 2.0 * (l * l + l) * (2.0 * l + 1.0) + 1.0;
        let d3 = q.param_derivative(re(-1.0), zero, zero, 3).unwrap();
        assert_eq!(d3.derivative.z, re(oracle(-1.0)));
        let d3 = q.param_derivative(re(0.3), zero, zero, 3).unwrap();
        assert!((d3.derivative.z - re(oracle(0.3))).norm() < 1e-14);
    }

    #[test]
    fn param_derivative_reports_escape_index() {
        let q = FamilySpec::<f64>::quadratic(10.0);
        let zero = Point::scalar(re(0.0));
        // 0 -> 2 -> 6 -> 38
        let err = q.param_derivative(re(2.0), zero, zero, 5).unwrap_err();
        assert_eq!(err, FamilyError::Escaped { step: 3 });
    }

    #[test]
    fn certificate_examples() {
        let q = FamilySpec::<f64>::quadratic(3.0);
        let dom = ParameterDomain::new(re(0.0), 0.5, 0.5, 4, 4).unwrap();
        // |λ| ≤ 1/√2 < 1 so r ≤ 2 ≤ 2.5
        let geo = q.validate_polynomial_like(&dom).unwrap();
        assert_eq!(geo.len(), 4);
        assert!(geo.iter().all(|g| g.u_escape_bound <= 2.5 && g.u_escape_bound < g.v_radius));
        assert!((q.escape_bound(1.0).unwrap() - 2.0).abs() < 1e-12);

        let m = FamilySpec::<f64>::monomial(2, 2.0);
        assert!((m.escape_bound(0.0).unwrap() - 2f64.sqrt()).abs() < 1e-12);

        let wide = ParameterDomain::new(re(0.0), 7.0, 7.0, 4, 4).unwrap();
        match q.validate_polynomial_like(&wide) {
            Err(FamilyError::NoEscapeCertificate { .. }) => {}
            other => panic!("expected NoEscapeCertificate, got {other:?}"),
        }
    }

    #[test]
    fn skew_certificate() {
        let s = FamilySpec::<f64>::skew_quadratic(3.0);
        let r = s.escape_bound(0.1).unwrap();
        let r_z = (3.1f64).sqrt();
        assert!((r - (3.0 + r_z).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn rejects_degree_one_and_bad_dstar() {
        let p = vec![ParamPoly::real(&[0.0, 1.0]), ParamPoly::real(&[1.0])];
        assert_eq!(FamilySpec::<f64>::univariate(p, 2.0), Err(FamilyError::DegreeTooSmall(1)));
        let q = FamilySpec::<f64>::quadratic(3.0);
        assert!(q.clone().with_d_star_upper(2.0).is_err());
        assert!(q.with_d_star_upper(1.5).is_ok());
    }

    #[test]
    fn domain_geometry() {
        let dom = ParameterDomain::square(c(-2.0, 0.0), 0.4, 64).unwrap();
        assert!((dom.h() - 0.00625).abs() < 1e-15);
        assert!((dom.node(0, 0) - c(-2.2 + 0.003125, -0.2 + 0.003125)).norm() < 1e-14);
        assert_eq!(dom.nearest_node(c(-2.0, 0.0)), Some((32, 32)));
        assert!(ParameterDomain::new(re(0.0), 1.0, 1.0, 4, 3).is_err());
    }

    #[test]
    fn single_precision_evaluation() {
        let q = FamilySpec::<f32>::quadratic(3.0);
        let v = q.evaluate(cx(0.0, 0.0), Point::scalar(cx(2.0, 0.0))).unwrap();
        assert_eq!(v.z, cx(4.0f32, 0.0));
    }
}
