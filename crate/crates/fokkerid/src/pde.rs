//! Implicit-Euler time stepping for the forward Fokker-Planck equation and its
//! discrete adjoint and sensitivity (linearized) equations.
//!
//! Forward step k (k = 1..=N): `(M − Δt C(b_k)) u_k = M u_{k−1}` with
//! `C(b) = K + D(b)` the integrated generator. The backward equation uses the
//! exact transpose `C(b)ᵀ` so that the discrete adjoint identity
//!
//! ```text
//! ⟨G S'(b)h, z⟩_Y = Δt Σ_k ψ_kᵀ D(h_k) u_k = ⟨h, w⟩_B
//! ```
//!
//! holds to linear-solver tolerance; `w` is the edge-assembled cofield
//! returned by [`drift_cofield`], the finite-volume realization of `u ∇ψ`.

use crate::error::Error;
use crate::geometry::{DiscreteOperators, SphereMesh};
use crate::linalg::{bicgstab, Csr, Transposed, Vec3};
use crate::model::DriftField;
use crate::TimeGrid;

/// Iterative-solver settings for the per-step linear systems.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Relative residual target. Default 1e-12, well inside the 1e-10 contract,
    /// so mass drift over hundreds of steps stays far below the 1e-8 budget.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { rel_tol: 1e-12, max_iter: 4000 }
    }
}

/// Cell-averaged density over the time grid; values[k][i] at t_k, sr⁻¹.
#[derive(Debug, Clone)]
pub struct StateField {
    pub values: Vec<Vec<f64>>,
    pub time_grid: TimeGrid,
}

impl StateField {
    /// Area-weighted integral at each step.
    pub fn masses(&self, mesh: &SphereMesh) -> Vec<f64> {
        self.values.iter().map(|u| mesh.integrate(u)).collect()
    }

    /// Max relative deviation of the per-step mass from the initial mass.
    pub fn max_mass_drift(&self, mesh: &SphereMesh) -> f64 {
        let m0 = mesh.integrate(&self.values[0]);
        self.values
            .iter()
            .map(|u| (mesh.integrate(u) - m0).abs() / m0.abs().max(1e-300))
            .fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::MAX, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::MIN, f64::max)
    }
}

/// Adjoint state over the time grid; the slice at t_N = T is identically zero.
/// Slice k pairs with forward step k+1 in the discrete adjoint identity.
#[derive(Debug, Clone)]
pub struct AdjointField {
    pub values: Vec<Vec<f64>>,
    pub time_grid: TimeGrid,
}

/// System matrix M − Δt C(b) for one step.
fn system_matrix(ops: &DiscreteOperators, b_slice: &[Vec3], dt: f64) -> Csr {
    let mut gen = ops.generator_matrix(b_slice);
    gen.scale(-dt);
    // add mass on the diagonal
    let n = gen.n;
    for i in 0..n {
        for k in gen.row_ptr[i]..gen.row_ptr[i + 1] {
            if gen.col_idx[k] == i {
                gen.values[k] += ops.mass[i];
            }
        }
    }
    gen
}

fn step_solve(
    matrix: &Csr,
    transpose: bool,
    rhs: &[f64],
    guess: &[f64],
    opts: &SolverOptions,
    step: usize,
) -> crate::Result<Vec<f64>> {
    let inv_diag: Vec<f64> = matrix.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut x = guess.to_vec();
    let result = if transpose {
        bicgstab(&Transposed(matrix), rhs, &mut x, &inv_diag, opts.rel_tol, opts.max_iter)
    } else {
        bicgstab(matrix, rhs, &mut x, &inv_diag, opts.rel_tol, opts.max_iter)
    };
    match result {
        Ok(_) => Ok(x),
        Err(message) => Err(Error::Solver { step, message }),
    }
}

/// Integrates the forward equation from `u0` (cell averages at t = 0).
pub fn solve_forward(
    b: &DriftField,
    u0: &[f64],
    ops: &DiscreteOperators,
    time_grid: TimeGrid,
    opts: &SolverOptions,
) -> crate::Result<StateField> {
    let n = ops.mesh.n_cells();
    if u0.len() != n {
        return Err(Error::Shape(format!("u0 has {} cells, mesh has {n}", u0.len())));
    }
    if b.n_points() != time_grid.n_points() || b.n_cells() != n {
        return Err(Error::Shape(format!(
            "drift field is {}x{}, expected {}x{n}",
            b.n_points(),
            b.n_cells(),
            time_grid.n_points()
        )));
    }
    let dt = time_grid.dt();
    let mut values = Vec::with_capacity(time_grid.n_points());
    values.push(u0.to_vec());
    let mut rhs = vec![0.0; n];
    for k in 1..=time_grid.n_steps {
        let prev = &values[k - 1];
        for i in 0..n {
            rhs[i] = ops.mass[i] * prev[i];
        }
        let a = system_matrix(ops, &b.values[k], dt);
        let next = step_solve(&a, false, &rhs, prev, opts, k)?;
        values.push(next);
    }
    Ok(StateField { values, time_grid })
}

/// Integrates the adjoint equation backward with the transposed generator.
///
/// `source[k]` is the cell field G*z at grid point k (slice 0 is unused). The
/// returned field stores the Lagrange multiplier of forward step k+1 at index
/// k, so index N (time T) is identically zero.
pub fn solve_adjoint(
    b: &DriftField,
    source: &[Vec<f64>],
    ops: &DiscreteOperators,
    time_grid: TimeGrid,
    opts: &SolverOptions,
) -> crate::Result<AdjointField> {
    let n = ops.mesh.n_cells();
    if source.len() != time_grid.n_points() {
        return Err(Error::Shape(format!(
            "adjoint source has {} slices, grid has {}",
            source.len(),
            time_grid.n_points()
        )));
    }
    let dt = time_grid.dt();
    let mut values = vec![vec![0.0; n]; time_grid.n_points()];
    let mut rhs = vec![0.0; n];
    for k in (1..=time_grid.n_steps).rev() {
        // (M − Δt C(b_k))ᵀ ψ_k = M ψ_{k+1} + Δt M (G*z)_k
        let later = &values[k];
        for i in 0..n {
            rhs[i] = ops.mass[i] * (later[i] + dt * source[k][i]);
        }
        let a = system_matrix(ops, &b.values[k], dt);
        values[k - 1] = step_solve(&a, true, &rhs, later, opts, k)?;
    }
    Ok(AdjointField { values, time_grid })
}

/// Integrates the sensitivity equation: the exact linearization of
/// [`solve_forward`] around `(b, u)` in drift direction `h`, with v(0) = 0.
pub fn solve_sensitivity(
    b: &DriftField,
    h: &DriftField,
    u: &StateField,
    ops: &DiscreteOperators,
    time_grid: TimeGrid,
    opts: &SolverOptions,
) -> crate::Result<StateField> {
    let n = ops.mesh.n_cells();
    if h.n_points() != time_grid.n_points() || h.n_cells() != n {
        return Err(Error::Shape("drift increment shape mismatch".into()));
    }
    let dt = time_grid.dt();
    let mut values = Vec::with_capacity(time_grid.n_points());
    values.push(vec![0.0; n]);
    let mut rhs = vec![0.0; n];
    let mut src = vec![0.0; n];
    for k in 1..=time_grid.n_steps {
        // (M − Δt C(b_k)) v_k = M v_{k−1} + Δt D(h_k) u_k
        ops.apply_drift_divergence(&h.values[k], &u.values[k], &mut src);
        let prev = &values[k - 1];
        for i in 0..n {
            rhs[i] = ops.mass[i] * prev[i] + dt * src[i];
        }
        let a = system_matrix(ops, &b.values[k], dt);
        let next = step_solve(&a, false, &rhs, prev, opts, k)?;
        values.push(next);
    }
    Ok(StateField { values, time_grid })
}

/// Edge-assembled cofield pairing drift increments with the adjoint state:
/// `⟨h, w⟩_B = Δt Σ_k ψ_kᵀ D(h_k) u_k` exactly. Consistent with `u ∇ψ` up to
/// the usual O(h) of the two-point flux (see [`reconstruct_gradient`]).
pub fn drift_cofield(u: &StateField, psi: &AdjointField, ops: &DiscreteOperators) -> DriftField {
    let mesh = ops.mesh;
    let n_points = u.time_grid.n_points();
    let mut w = DriftField::zeros(n_points, mesh.n_cells());
    for k in 1..n_points {
        let uk = &u.values[k];
        let psik = &psi.values[k - 1];
        let wk = &mut w.values[k];
        for (e, edge) in mesh.edges.iter().enumerate() {
            let [i, j] = edge.cells;
            let coeff =
                0.5 * ops.flux_assembly[e] * 0.5 * (uk[i] + uk[j]) * (psik[i] - psik[j]);
            let contrib = edge.conormal * coeff;
            wk[i] += contrib;
            wk[j] += contrib;
        }
        for (wi, &a) in wk.iter_mut().zip(&mesh.cell_areas) {
            *wi = *wi * (1.0 / a);
        }
    }
    w
}

/// Per-cell least-squares tangent-plane gradient of a cell field from
/// neighboring cell differences. Diagnostic companion to [`drift_cofield`].
pub fn reconstruct_gradient(field: &[f64], mesh: &SphereMesh) -> Vec<Vec3> {
    let n = mesh.n_cells();
    let mut grad = vec![Vec3::ZERO; n];
    for i in 0..n {
        let ci = mesh.circumcenters[i];
        // orthonormal tangent basis at ci
        let helper = if ci.x.abs() < 0.9 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 1.0, 0.0) };
        let e1 = helper.tangential_at(ci).normalized();
        let e2 = ci.cross(e1);
        // normal equations of min Σـ((c_j−c_i)·g − (f_j−f_i))²
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &e in &mesh.cell_edges[i] {
            let edge = &mesh.edges[e];
            let j = if edge.cells[0] == i { edge.cells[1] } else { edge.cells[0] };
            let d = mesh.circumcenters[j] - ci;
            let (x1, x2) = (d.dot(e1), d.dot(e2));
            let df = field[j] - field[i];
            a11 += x1 * x1;
            a12 += x1 * x2;
            a22 += x2 * x2;
            b1 += x1 * df;
            b2 += x2 * df;
        }
        let det = a11 * a22 - a12 * a12;
        if det.abs() > 1e-300 {
            let g1 = (a22 * b1 - a12 * b2) / det;
            let g2 = (a11 * b2 - a12 * b1) / det;
            grad[i] = e1 * g1 + e2 * g2;
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{assemble_operators, build_icosphere};
    use crate::model::DriftField;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn uniform_density(mesh: &SphereMesh) -> Vec<f64> {
        vec![1.0 / (4.0 * PI); mesh.n_cells()]
    }

    fn random_tangent_drift(
        mesh: &SphereMesh,
        n_points: usize,
        scale: f64,
        rng: &mut impl Rng,
    ) -> DriftField {
        let mut d = DriftField::zeros(n_points, mesh.n_cells());
        for slice in &mut d.values {
            for (v, &c) in slice.iter_mut().zip(&mesh.circumcenters) {
                *v = Vec3::new(
                    rng.gen_range(-scale..scale),
                    rng.gen_range(-scale..scale),
                    rng.gen_range(-scale..scale),
                )
                .tangential_at(c);
            }
        }
        d
    }

    #[test]
    fn uniform_density_is_stationary_without_drift() {
        let mesh = build_icosphere(2).unwrap();
        let ops = assemble_operators(&mesh, 1.0).unwrap();
        let grid = TimeGrid::new(2.0, 20).unwrap();
        let b = DriftField::zeros(grid.n_points(), mesh.n_cells());
        let u0 = uniform_density(&mesh);
        let u = solve_forward(&b, &u0, &ops, grid, &SolverOptions::default()).unwrap();
        for slice in &u.values {
            for v in slice {
                assert!((v - 1.0 / (4.0 * PI)).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn mass_conserved_under_random_drift() {
        let mesh = build_icosphere(2).unwrap();
        let ops = assemble_operators(&mesh, 0.5).unwrap();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let b = random_tangent_drift(&mesh, grid.n_points(), 2.0, &mut rng);
        // non-uniform start
        let mut u0: Vec<f64> = mesh.circumcenters.iter().map(|c| 1.0 + 0.5 * c.z).collect();
        let mass = mesh.integrate(&u0);
        for v in &mut u0 {
            *v /= mass;
        }
        let u = solve_forward(&b, &u0, &ops, grid, &SolverOptions::default()).unwrap();
        assert!(u.max_mass_drift(&mesh) < 1e-8, "drift {:.3e}", u.max_mass_drift(&mesh));
        // near-nonnegativity
        assert!(u.min_value() >= -1e-10 * u.max_value());
    }

    #[test]
    fn localized_bump_relaxes_to_uniform() {
        // deviation bound exp(−2λT) from the first Laplace-Beltrami eigenvalue
        let mesh = build_icosphere(3).unwrap();
        let lambda = 1.0;
        let ops = assemble_operators(&mesh, lambda).unwrap();
        let grid = TimeGrid::new(6.0, 120).unwrap();
        let b = DriftField::zeros(grid.n_points(), mesh.n_cells());
        let mut u0 = vec![0.0; mesh.n_cells()];
        u0[7] = 1.0 / mesh.cell_areas[7];
        let u = solve_forward(&b, &u0, &ops, grid, &SolverOptions::default()).unwrap();
        let uniform = 1.0 / (4.0 * PI);
        let max_dev = u
            .values
            .last()
            .unwrap()
            .iter()
            .map(|v| (v - uniform).abs())
            .fold(0.0, f64::max);
        assert!(max_dev < 1e-3, "deviation {max_dev:.3e}");
    }

    #[test]
    fn adjoint_zero_source_is_zero() {
        let mesh = build_icosphere(1).unwrap();
        let ops = assemble_operators(&mesh, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let b = random_tangent_drift(&mesh, grid.n_points(), 1.0, &mut rng);
        let source = vec![vec![0.0; mesh.n_cells()]; grid.n_points()];
        let psi = solve_adjoint(&b, &source, &ops, grid, &SolverOptions::default()).unwrap();
        for slice in &psi.values {
            assert!(slice.iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn adjoint_constant_source_integrates_backward() {
        // spatially constant source, b = 0: ψ(t_m) = ∫_{t_m}^T s dτ exactly for
        // constant s under the rectangle rule
        let mesh = build_icosphere(1).unwrap();
        let ops = assemble_operators(&mesh, 1.0).unwrap();
        let grid = TimeGrid::new(2.0, 8).unwrap();
        let b = DriftField::zeros(grid.n_points(), mesh.n_cells());
        let s0 = 0.7;
        let source = vec![vec![s0; mesh.n_cells()]; grid.n_points()];
        let psi = solve_adjoint(&b, &source, &ops, grid, &SolverOptions::default()).unwrap();
        for (m, slice) in psi.values.iter().enumerate() {
            let expected = (grid.t_end - grid.time(m)) * s0;
            for v in slice {
                assert!((v - expected).abs() < 1e-10, "slice {m}: {v} vs {expected}");
            }
        }
        // terminal slice identically zero
        assert!(psi.values[grid.n_steps].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sensitivity_zero_direction_and_linearity() {
        let mesh = build_icosphere(1).unwrap();
        let ops = assemble_operators(&mesh, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(14);
        let b = random_tangent_drift(&mesh, grid.n_points(), 1.0, &mut rng);
        let u0 = uniform_density(&mesh);
        let u = solve_forward(&b, &u0, &ops, grid, &SolverOptions::default()).unwrap();

        let zero = DriftField::zeros(grid.n_points(), mesh.n_cells());
        let v0 = solve_sensitivity(&b, &zero, &u, &ops, grid, &SolverOptions::default()).unwrap();
        assert!(v0.values.iter().flatten().all(|v| v.abs() < 1e-14));

        let h = random_tangent_drift(&mesh, grid.n_points(), 0.5, &mut rng);
        let mut h2 = h.clone();
        for slice in &mut h2.values {
            for v in slice.iter_mut() {
                *v = *v * 2.0;
            }
        }
        let v1 = solve_sensitivity(&b, &h, &u, &ops, grid, &SolverOptions::default()).unwrap();
        let v2 = solve_sensitivity(&b, &h2, &u, &ops, grid, &SolverOptions::default()).unwrap();
        let mut max_rel: f64 = 0.0;
        let scale = v2.values.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
        for (s1, s2) in v1.values.iter().zip(&v2.values) {
            for (a, b) in s1.iter().zip(s2) {
                max_rel = max_rel.max((2.0 * a - b).abs() / scale.max(1e-300));
            }
        }
        assert!(max_rel < 1e-9, "linearity defect {max_rel:.3e}");
    }

    #[test]
    fn sensitivity_remainder_is_quadratic() {
        let mesh = build_icosphere(2).unwrap();
        let ops = assemble_operators(&mesh, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 15).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(15);
        let b = random_tangent_drift(&mesh, grid.n_points(), 1.0, &mut rng);
        let dir = random_tangent_drift(&mesh, grid.n_points(), 1.0, &mut rng);
        let mut u0: Vec<f64> = mesh.circumcenters.iter().map(|c| 1.0 + 0.3 * c.x).collect();
        let mass = mesh.integrate(&u0);
        for v in &mut u0 {
            *v /= mass;
        }
        let opts = SolverOptions::default();
        let u = solve_forward(&b, &u0, &ops, grid, &opts).unwrap();

        let remainder = |eps: f64| -> f64 {
            let mut h = dir.clone();
            for slice in &mut h.values {
                for v in slice.iter_mut() {
                    *v = *v * eps;
                }
            }
            let mut b_pert = b.clone();
            for (bp, hs) in b_pert.values.iter_mut().zip(&h.values) {
                for (x, y) in bp.iter_mut().zip(hs) {
                    *x += *y;
                }
            }
            let u_pert = solve_forward(&b_pert, &u0, &ops, grid, &opts).unwrap();
            let v = solve_sensitivity(&b, &h, &u, &ops, grid, &opts).unwrap();
            let mut acc = 0.0;
            for k in 0..grid.n_points() {
                for i in 0..mesh.n_cells() {
                    let r = u_pert.values[k][i] - u.values[k][i] - v.values[k][i];
                    acc += mesh.cell_areas[i] * r * r;
                }
            }
            acc.sqrt()
        };

        let r1 = remainder(1e-2);
        let r2 = remainder(1e-3);
        let ratio = r1 / r2.max(1e-300);
        assert!(
            (30.0..300.0).contains(&ratio),
            "remainder ratio {ratio:.1} (r1={r1:.3e}, r2={r2:.3e})"
        );
    }

    #[test]
    fn first_order_time_convergence() {
        // error against a Δt/8 reference halves when Δt halves, within 20%
        let mesh = build_icosphere(2).unwrap();
        let ops = assemble_operators(&mesh, 0.8).unwrap();
        let t_end = 0.5;
        let u0 = uniform_density(&mesh);
        let smooth_drift = |n_steps: usize| -> DriftField {
            let grid = TimeGrid::new(t_end, n_steps).unwrap();
            let mut d = DriftField::zeros(grid.n_points(), mesh.n_cells());
            for k in 0..grid.n_points() {
                let t = grid.time(k);
                let h = Vec3::new((2.0 * t).sin(), (3.0 * t).cos(), 0.4);
                for (v, &c) in d.values[k].iter_mut().zip(&mesh.circumcenters) {
                    *v = h.tangential_at(c) * 1.5;
                }
            }
            d
        };
        let opts = SolverOptions::default();
        let solve_n = |n_steps: usize| -> Vec<f64> {
            let grid = TimeGrid::new(t_end, n_steps).unwrap();
            let b = smooth_drift(n_steps);
            solve_forward(&b, &u0, &ops, grid, &opts)
                .unwrap()
                .values
                .last()
                .unwrap()
                .clone()
        };
        let coarse = solve_n(20);
        let mid = solve_n(40);
        let reference = solve_n(160);
        let err = |u: &[f64]| -> f64 {
            u.iter()
                .zip(&reference)
                .zip(&mesh.cell_areas)
                .map(|((a, b), w)| w * (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        let e1 = err(&coarse);
        let e2 = err(&mid);
        let rate = e1 / e2;
        assert!((1.6..=2.4).contains(&rate), "rate {rate:.3} (e1={e1:.3e}, e2={e2:.3e})");
    }

    #[test]
    fn cofield_pairs_exactly_with_drift_increments() {
        // ⟨h, w⟩_B = Δt Σ_k ψ_kᵀ D(h_k) u_k by construction
        let mesh = build_icosphere(2).unwrap();
        let ops = assemble_operators(&mesh, 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 6).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let b = random_tangent_drift(&mesh, grid.n_points(), 1.0, &mut rng);
        let u0 = uniform_density(&mesh);
        let opts = SolverOptions::default();
        let u = solve_forward(&b, &u0, &ops, grid, &opts).unwrap();
        let source: Vec<Vec<f64>> = (0..grid.n_points())
            .map(|_| (0..mesh.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let psi = solve_adjoint(&b, &source, &ops, grid, &opts).unwrap();
        let w = drift_cofield(&u, &psi, &ops);

        let h = random_tangent_drift(&mesh, grid.n_points(), 1.0, &mut rng);
        let dt = grid.dt();
        let mut direct = 0.0;
        let mut tmp = vec![0.0; mesh.n_cells()];
        for k in 1..=grid.n_steps {
            ops.apply_drift_divergence(&h.values[k], &u.values[k], &mut tmp);
            direct += dt * crate::linalg::dot(&tmp, &psi.values[k - 1]);
        }
        let consts = crate::model::PhysicalConstants {
            gamma: 1.0,
            alpha_hat: 1.0,
            mu0: 1.0,
            k_anis: 1.0,
            m_s: 1.0,
            lambda: 1.0,
        };
        let ctx = crate::model::DriftContext::new(&consts, &mesh, grid, None);
        let paired = crate::model::drift_inner(&h, &w, &ctx);
        assert!(
            (direct - paired).abs() <= 1e-12 * direct.abs().max(1.0),
            "{direct} vs {paired}"
        );
    }

    #[test]
    fn least_squares_gradient_is_consistent() {
        // f(m) = m_z has surface gradient e_z − (m·e_z)m
        let mesh = build_icosphere(4).unwrap();
        let field: Vec<f64> = mesh.circumcenters.iter().map(|c| c.z).collect();
        let grad = reconstruct_gradient(&field, &mesh);
        let ez = Vec3::new(0.0, 0.0, 1.0);
        let mut max_err: f64 = 0.0;
        for (g, &c) in grad.iter().zip(&mesh.circumcenters) {
            let exact = ez.tangential_at(c);
            max_err = max_err.max((*g - exact).norm());
        }
        let h = mesh.mean_diameter();
        assert!(max_err < 2.0 * h, "max error {max_err:.3e} vs h {h:.3e}");
    }
}
