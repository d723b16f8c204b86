//! Monte Carlo Lyapunov function `L(λ) = ⟨μ_λ, log|Jac f_λ|⟩`, parameter
//! sweeps and the discrete bifurcation current `dd^c L = (1/2π) Δ L`.

use rayon::prelude::*;
use thiserror::Error;

use crate::family::{FamilyError, FamilySpec, ParameterDomain};
use crate::measure::{sample_equilibrium, MeasureError, MeasureSample, SamplerConfig};
use crate::scalar::{Cx, Real};
use crate::seed::derive_seed;

/// Largest tolerated share of samples whose Jacobian falls below the floor.
pub const MAX_CLIPPED_FRACTION: f64 = 0.01;

/// `log` of the Jacobian floor; smaller values are clipped to it.
pub const LOG_JAC_FLOOR: f64 = -50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LyapunovError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error("ClippedFractionExcessive: {fraction} of samples hit the Jacobian floor")]
    ClippedFractionExcessive { fraction: f64 },
    #[error("grid is {nx}x{ny}, need at least 3x3")]
    GridTooSmall { nx: usize, ny: usize },
    #[error("grid has {got} values for {nx}x{ny} nodes")]
    ShapeMismatch { nx: usize, ny: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LyapunovEstimate<T: Real> {
    pub lambda: Cx<T>,
    /// In nats.
    pub value: T,
    pub std_error: T,
    pub sample_count: usize,
    pub depth: usize,
    pub clipped_fraction: T,
}

impl<T: Real> LyapunovEstimate<T> {
    /// `L ≥ ½ log d_t − 3σ`.
    pub fn satisfies_lower_bound(&self, d_t: usize) -> bool {
        self.value >= T::c(0.5) * T::nat(d_t).ln() - T::c(3.0) * self.std_error
    }
}

/// Mean and standard error of `log|Jac|` over a sample.
pub fn estimate_on_sample<T: Real>(
    spec: &FamilySpec<T>,
    sample: &MeasureSample<T>,
) -> Result<LyapunovEstimate<T>, LyapunovError> {
    let n = sample.len();
    if n == 0 {
        return Err(MeasureError::EmptySample.into());
    }
    let floor = T::c(LOG_JAC_FLOOR);
    let mut clipped = 0usize;
    let logs: Vec<T> = sample
        .points
        .iter()
        .map(|&p| {
            let v = spec.jacobian(sample.lambda, p).norm().ln();
            if v.is_nan() || v < floor {
                clipped += 1;
                floor
            } else {
                v
            }
        })
        .collect();
    let nt = T::nat(n);
    let mean = logs.iter().copied().sum::<T>() / nt;
    let var = if n > 1 {
        logs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / T::nat(n - 1)
    } else {
        T::zero()
    };
    let fraction = T::nat(clipped) / nt;
    if fraction.as_f64() > MAX_CLIPPED_FRACTION {
        return Err(LyapunovError::ClippedFractionExcessive { fraction: fraction.as_f64() });
    }
    Ok(LyapunovEstimate {
        lambda: sample.lambda,
        value: mean,
        std_error: (var / nt).sqrt(),
        sample_count: n,
        depth: sample.depth,
        clipped_fraction: fraction,
    })
}

#[allow(non_snake_case)]
pub fn estimate_L<T: Real>(
    spec: &FamilySpec<T>,
    lambda: Cx<T>,
    depth: usize,
    count: usize,
    seed: u64,
) -> Result<LyapunovEstimate<T>, LyapunovError> {
    estimate_with(spec, lambda, &SamplerConfig::new(depth, count), seed)
}

pub fn estimate_with<T: Real>(
    spec: &FamilySpec<T>,
    lambda: Cx<T>,
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<LyapunovEstimate<T>, LyapunovError> {
    let sample = sample_equilibrium(spec, lambda, cfg, seed)?;
    estimate_on_sample(spec, &sample)
}

/// `L` on every node of a domain. Failed cells keep their error.
#[derive(Clone, Debug)]
pub struct LyapunovGrid<T: Real> {
    pub dom: ParameterDomain<T>,
    /// Row-major, `j * nx + i`.
    pub cells: Vec<Result<LyapunovEstimate<T>, LyapunovError>>,
    pub depth: usize,
    pub count: usize,
    pub seed: u64,
}

impl<T: Real> LyapunovGrid<T> {
    /// Seed used for node `(i, j)`.
    pub fn cell_seed(&self, i: usize, j: usize) -> u64 {
        derive_seed(self.seed, &[i as u64, j as u64])
    }

    /// `L` values, NaN on failed cells.
    pub fn values(&self) -> Vec<T> {
        self.cells
            .iter()
            .map(|c| c.as_ref().map(|e| e.value).unwrap_or_else(|_| T::nan()))
            .collect()
    }

    pub fn errors(&self) -> Vec<(usize, usize, LyapunovError)> {
        let nx = self.dom.nx;
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(k, c)| c.as_ref().err().map(|e| (k % nx, k / nx, e.clone())))
            .collect()
    }

    pub fn get(&self, i: usize, j: usize) -> &Result<LyapunovEstimate<T>, LyapunovError> {
        &self.cells[j * self.dom.nx + i]
    }
}

/// Sweeps `estimate_L` over all nodes with per-node seeds.
pub fn sweep_grid<T: Real>(
    spec: &FamilySpec<T>,
    dom: &ParameterDomain<T>,
    depth: usize,
    count: usize,
    seed: u64,
) -> Result<LyapunovGrid<T>, LyapunovError> {
    spec.validate_polynomial_like(dom)?;
    let cfg = SamplerConfig::new(depth, count);
    let nx = dom.nx;
    let cells = (0..dom.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k % nx, k / nx);
            let s = derive_seed(seed, &[i as u64, j as u64]);
            estimate_with(spec, dom.node(i, j), &cfg, s)
        })
        .collect();
    Ok(LyapunovGrid { dom: dom.clone(), cells, depth, count, seed })
}

/// Discrete `dd^c L` on the interior nodes of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BifField<T: Real> {
    pub dom: ParameterDomain<T>,
    /// Source values, row-major over all nodes.
    pub values: Vec<T>,
    /// `Δ_h L` at interior nodes, row-major over `(nx-2) × (ny-2)`.
    pub laplacian: Vec<T>,
    pub cell_area: T,
}

impl<T: Real> BifField<T> {
    /// Builds the field from raw node values (row-major, `j * nx + i`).
    pub fn from_values(dom: &ParameterDomain<T>, values: Vec<T>) -> Result<Self, LyapunovError> {
        let (nx, ny) = (dom.nx, dom.ny);
        if nx < 3 || ny < 3 {
            return Err(LyapunovError::GridTooSmall { nx, ny });
        }
        if values.len() != nx * ny {
            return Err(LyapunovError::ShapeMismatch { nx, ny, got: values.len() });
        }
        let h = dom.h();
        let at = |i: usize, j: usize| values[j * nx + i];
        let mut laplacian = Vec::with_capacity((nx - 2) * (ny - 2));
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                let s = at(i + 1, j) + at(i - 1, j) + at(i, j + 1) + at(i, j - 1) - T::c(4.0) * at(i, j);
                laplacian.push(s / (h * h));
            }
        }
        Ok(BifField { dom: dom.clone(), values, laplacian, cell_area: h * h })
    }

    pub fn interior_dims(&self) -> (usize, usize) {
        (self.dom.nx - 2, self.dom.ny - 2)
    }

    /// `Δ_h L` at grid node `(i, j)`, which must be interior.
    pub fn laplacian_at(&self, i: usize, j: usize) -> T {
        let (ix, _) = self.interior_dims();
        self.laplacian[(j - 1) * ix + (i - 1)]
    }

    /// Cell value of the current, `(1/2π) Δ_h L h²`, on interior nodes.
    pub fn cell_mass(&self, i: usize, j: usize) -> T {
        self.laplacian_at(i, j) * self.cell_area / T::TAU()
    }

    /// Mass over the interior nodes accepted by `inside`.
    pub fn mass_where(&self, inside: impl Fn(usize, usize, Cx<T>) -> bool) -> T {
        let mut total = T::zero();
        for j in 1..self.dom.ny - 1 {
            for i in 1..self.dom.nx - 1 {
                if inside(i, j, self.dom.node(i, j)) {
                    total += self.laplacian_at(i, j);
                }
            }
        }
        total * self.cell_area / T::TAU()
    }

    /// Mass over interior nodes lying in the closed rectangle `region`.
    pub fn mass_over(&self, region: &ParameterDomain<T>) -> T {
        let (lo, hi) = (
            Cx::new(region.center.re - region.half_width, region.center.im - region.half_height),
            Cx::new(region.center.re + region.half_width, region.center.im + region.half_height),
        );
        self.mass_where(|_, _, l| l.re >= lo.re && l.re <= hi.re && l.im >= lo.im && l.im <= hi.im)
    }

    /// Mass over every interior node.
    pub fn total_mass(&self) -> T {
        self.mass_where(|_, _, _| true)
    }

    /// `(1/2π) Σ (L_outer − L_inner)` over edges leaving the interior. Equals
    /// [`Self::total_mass`] by summation by parts.
    pub fn boundary_flux(&self) -> T {
        let (nx, ny) = (self.dom.nx, self.dom.ny);
        let at = |i: usize, j: usize| self.values[j * nx + i];
        let interior = |i: usize, j: usize| i >= 1 && i + 1 < nx && j >= 1 && j + 1 < ny;
        let mut flux = T::zero();
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                for (a, b) in [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)] {
                    if !interior(a, b) {
                        flux += at(a, b) - at(i, j);
                    }
                }
            }
        }
        flux / T::TAU()
    }
}

pub fn ddc_field<T: Real>(grid: &LyapunovGrid<T>) -> Result<BifField<T>, LyapunovError> {
    BifField::from_values(&grid.dom, grid.values())
}

/// Threshold below which a mass counts as zero: three times the magnitude
/// of the mass on a reference stable window.
pub fn noise_floor<T: Real>(reference_mass: T) -> T {
    T::c(3.0) * reference_mass.abs()
}
