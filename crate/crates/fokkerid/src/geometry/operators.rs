//! Finite-volume operators on a sphere mesh.
//!
//! The semi-discrete forward equation is
//!
//! ```text
//! M du/dt = K u + D(b) u
//! ```
//!
//! with `M = diag(cell areas)`, `K` the two-point-flux diffusion stiffness
//! (symmetric, zero row sums, negative semidefinite) and `D(b)` the central
//! drift-divergence operator, bilinear in `(b, u)`. `K` and `D` act in
//! integrated form: row i holds the net boundary flux of cell i, so column
//! sums vanish and total mass is invariant under the dynamics.

use super::SphereMesh;
use crate::error::Error;
use crate::linalg::{Csr, Vec3};

/// Assembled operators for one mesh and diffusion constant.
#[derive(Debug, Clone)]
pub struct DiscreteOperators<'m> {
    pub mesh: &'m SphereMesh,
    pub lambda: f64,
    /// λ-scaled diffusion stiffness, integrated form: (K u)_i = λ Σ_j T_ij (u_j − u_i).
    pub stiffness: Csr,
    /// Diagonal mass matrix (cell areas).
    pub mass: Vec<f64>,
    /// Per-edge geometric drift weight: arc_length of the shared edge. The
    /// drift flux through edge e with adjacent cells (i, j) is
    /// `flux_assembly[e] · (b̄_e · ν_e) · (u_i + u_j)/2` from i to j.
    pub flux_assembly: Vec<f64>,
}

/// Builds stiffness, mass, and drift flux weights. `lambda` is the diffusion
/// constant of the model equation. Fails on degenerate triangles.
pub fn assemble_operators(mesh: &SphereMesh, lambda: f64) -> crate::Result<DiscreteOperators<'_>> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    for (i, &a) in mesh.cell_areas.iter().enumerate() {
        if a < 1e-14 {
            return Err(Error::MeshQuality(format!(
                "degenerate triangle {i} with area {a:.3e}"
            )));
        }
    }

    let n = mesh.n_cells();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(4); n];
    for i in 0..n {
        rows[i].push((i, 0.0));
    }
    for edge in &mesh.edges {
        let [i, j] = edge.cells;
        let t = lambda * edge.arc_length / edge.center_distance;
        rows[i].push((j, t));
        rows[i][0].1 -= t;
        rows[j].push((i, t));
        rows[j][0].1 -= t;
    }
    let stiffness = Csr::from_rows(&rows);

    Ok(DiscreteOperators {
        mesh,
        lambda,
        stiffness,
        mass: mesh.cell_areas.clone(),
        flux_assembly: mesh.edges.iter().map(|e| e.arc_length).collect(),
    })
}

impl DiscreteOperators<'_> {
    /// Integrated drift divergence: out[i] = Σ_edges ℓ_e (b̄_e·ν_e) (u_i+u_j)/2,
    /// signed outward from cell i. `b` holds one ambient vector per cell.
    pub fn apply_drift_divergence(&self, b: &[Vec3], u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(b.len(), self.mesh.n_cells());
        debug_assert_eq!(u.len(), self.mesh.n_cells());
        out.fill(0.0);
        for (e, edge) in self.mesh.edges.iter().enumerate() {
            let [i, j] = edge.cells;
            let b_edge = (b[i] + b[j]) * 0.5;
            let flux = self.flux_assembly[e] * b_edge.dot(edge.conormal) * 0.5 * (u[i] + u[j]);
            out[i] += flux;
            out[j] -= flux;
        }
    }

    /// Transpose of [`Self::apply_drift_divergence`] in the plain (unweighted)
    /// pairing: out = D(b)ᵀ ψ. This is the integrated-form adjoint drift
    /// operator used by the backward equation.
    pub fn apply_drift_divergence_transpose(&self, b: &[Vec3], psi: &[f64], out: &mut [f64]) {
        debug_assert_eq!(psi.len(), self.mesh.n_cells());
        out.fill(0.0);
        for (e, edge) in self.mesh.edges.iter().enumerate() {
            let [i, j] = edge.cells;
            let b_edge = (b[i] + b[j]) * 0.5;
            let w = self.flux_assembly[e] * b_edge.dot(edge.conormal) * 0.5 * (psi[i] - psi[j]);
            out[i] += w;
            out[j] += w;
        }
    }

    /// Builds the full integrated generator C(b) = K + D(b) as a CSR matrix
    /// (same sparsity pattern as the stiffness).
    pub fn generator_matrix(&self, b: &[Vec3]) -> Csr {
        let n = self.mesh.n_cells();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(4); n];
        for i in 0..n {
            rows[i].push((i, 0.0));
        }
        for edge in &self.mesh.edges {
            let [i, j] = edge.cells;
            let t = self.lambda * edge.arc_length / edge.center_distance;
            let d = edge.arc_length * ((b[i] + b[j]) * 0.5).dot(edge.conormal) * 0.5;
            // row i: + t (u_j − u_i) + d (u_i + u_j)          (flux i→j counted +)
            // row j: + t (u_i − u_j) − d (u_i + u_j)
            rows[i].push((j, t + d));
            rows[i][0].1 += -t + d;
            rows[j].push((i, t - d));
            rows[j][0].1 += -t - d;
        }
        Csr::from_rows(&rows)
    }

    /// Cell-average diffusion action M⁻¹ K u (the discrete λ·Laplace–Beltrami).
    pub fn apply_laplacian(&self, u: &[f64], out: &mut [f64]) {
        self.stiffness.mul_vec(u, out);
        for (o, a) in out.iter_mut().zip(&self.mass) {
            *o /= a;
        }
    }
}
