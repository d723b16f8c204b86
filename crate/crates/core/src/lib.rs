//! Numerical bifurcation theory for holomorphic families of polynomial-like
//! maps: Lyapunov sweeps, bifurcation currents, critical volume growth,
//! Misiurewicz parameters and a batch front end.
//!
//! Core routines are generic over [`scalar::Real`]; the aliases below fix
//! them to `f64`.

pub mod cli;
pub mod critical;
pub mod family;
pub mod lyapunov;
pub mod measure;
pub mod misiurewicz;
pub mod polyroots;
pub mod scalar;
pub mod seed;

pub type Complex64 = scalar::Cx<f64>;
pub type FamilySpec64 = family::FamilySpec<f64>;
pub type ParameterDomain64 = family::ParameterDomain<f64>;
pub type Point64 = family::Point<f64>;
pub type MeasureSample64 = measure::MeasureSample<f64>;
pub type CycleSet64 = measure::CycleSet<f64>;
pub type LyapunovEstimate64 = lyapunov::LyapunovEstimate<f64>;
pub type LyapunovGrid64 = lyapunov::LyapunovGrid<f64>;
pub type BifField64 = lyapunov::BifField<f64>;
pub type MassEstimate64 = critical::MassEstimate<f64>;
pub type RateFit64 = critical::RateFit<f64>;
pub type VolumeSeries64 = critical::VolumeSeries<f64>;
pub type CycleTrack64 = misiurewicz::CycleTrack<f64>;
pub type MisiurewiczHit64 = misiurewicz::MisiurewiczHit<f64>;
