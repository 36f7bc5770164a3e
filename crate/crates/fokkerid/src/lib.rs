//! Forward Fokker-Planck simulation and adjoint-based parameter identification
//! for large ensembles of magnetic nanoparticles undergoing Néel relaxation.
//!
//! The state is a probability density `u(m, t)` of magnetic-moment directions
//! `m` on the unit sphere, evolving under
//!
//! ```text
//! u' = div( λ ∇u + b(m, t; p) u ),    u(·, 0) = u0,
//! ```
//!
//! with the drift `b(m,t) = α₁ (m × H)×m + α₂ (m × φ(m,t))×m` built from an
//! applied field `H` and an anisotropy landscape `φ`. Three identification
//! problems are supported: the field waveform `H(t)`, the anisotropy landscape
//! `φ(m)`, and a time-dependent uniaxial easy axis `n(t)` with `φ = (mᵀn)n`.
//!
//! Module map:
//! - [`geometry`]: icosphere meshes, finite-volume operators, interpolation.
//! - [`model`]: physical constants, parameters, drift assembly, Γ′ and Γ′*.
//! - [`pde`]: forward, adjoint, and sensitivity time-steppers.
//! - [`observation`]: observation operator G (mean moment or identity) and G*.
//! - [`inversion`]: Riesz smoothers, Landweber iteration, step-length estimate.
//! - [`harness`]: synthetic scenarios, two-grid measurement generation, noise,
//!   error metrics.
//! - [`io`]: delimited-text formats, manifests, scenario files.

pub mod error;
pub mod geometry;
pub mod harness;
pub mod inversion;
pub mod io;
pub mod linalg;
pub mod model;
pub mod observation;
pub mod pde;

pub use error::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;

/// Uniform time grid on [0, t_end] with `n_steps` implicit-Euler steps.
///
/// Grid points are `t_k = k·dt` for `k = 0..=n_steps`. Time-dependent fields
/// carry one slice per grid point; the solvers use slices `1..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> crate::Result<Self> {
        if !(t_end > 0.0) || n_steps == 0 {
            return Err(Error::Config(format!(
                "time grid needs t_end > 0 and n_steps > 0, got t_end={t_end}, n_steps={n_steps}"
            )));
        }
        Ok(TimeGrid { t_end, n_steps })
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    /// Number of stored slices (grid points), `n_steps + 1`.
    #[inline]
    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_points()).map(|k| self.time(k)).collect()
    }

    /// Grids match when horizon and step count agree to round-off.
    pub fn matches(&self, other: &TimeGrid) -> bool {
        self.n_steps == other.n_steps
            && (self.t_end - other.t_end).abs() <= 1e-12 * self.t_end.abs().max(other.t_end.abs())
    }
}
