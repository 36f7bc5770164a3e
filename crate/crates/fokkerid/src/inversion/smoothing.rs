//! Riesz-isomorphism smoothing of gradients.
//!
//! A gradient represented in the discrete L² products is mapped to its
//! Sobolev representer by solving auxiliary elliptic systems:
//!
//! - in time: `v − ε² v″ = f` with homogeneous Neumann conditions, realized by
//!   second-order central differences and ghost-point boundary closure, one
//!   tridiagonal solve per component;
//! - on the sphere: `u − ε² Δu + ε⁴ Δ²u = f` with the discrete
//!   Laplace-Beltrami of the mesh, via CG in the area-weighted product.
//!
//! ε scales the smoothing strength; ε = 0 degenerates to the identity.

use crate::error::Error;
use crate::geometry::DiscreteOperators;
use crate::linalg::{conjugate_gradient, solve_tridiagonal, LinearOp, Vec3};

/// Solves `v − ε² v″ = f` on the uniform grid with Neumann ends, componentwise.
pub fn riesz_smooth_time(f: &[Vec3], dt: f64, epsilon_time: f64) -> crate::Result<Vec<Vec3>> {
    if epsilon_time == 0.0 || f.len() < 2 {
        return Ok(f.to_vec());
    }
    let n = f.len();
    let c = epsilon_time * epsilon_time / (dt * dt);
    let mut lower = vec![-c; n];
    let mut upper = vec![-c; n];
    let diag = vec![1.0 + 2.0 * c; n];
    // ghost-point Neumann closure: v_{-1} = v_1 and v_{n} = v_{n-2}
    upper[0] = -2.0 * c;
    lower[n - 1] = -2.0 * c;

    let mut out = vec![Vec3::ZERO; n];
    for comp in 0..3 {
        let rhs: Vec<f64> = f
            .iter()
            .map(|v| match comp {
                0 => v.x,
                1 => v.y,
                _ => v.z,
            })
            .collect();
        let sol = solve_tridiagonal(&lower, &diag, &upper, &rhs).map_err(Error::Numerical)?;
        for (o, s) in out.iter_mut().zip(&sol) {
            match comp {
                0 => o.x = *s,
                1 => o.y = *s,
                _ => o.z = *s,
            }
        }
    }
    Ok(out)
}

/// Fourth-order spatial smoother `(I − ε²Δ + ε⁴Δ²) u = f` on cell fields.
struct SpaceSmootherOp<'a> {
    ops: &'a DiscreteOperators<'a>,
    eps2: f64,
    eps4: f64,
}

impl LinearOp for SpaceSmootherOp<'_> {
    fn size(&self) -> usize {
        self.ops.mesh.n_cells()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.size();
        let mut lx = vec![0.0; n];
        // geometric Laplace-Beltrami: strip the λ scaling off the stiffness
        self.ops.apply_laplacian(x, &mut lx);
        let inv_lambda = 1.0 / self.ops.lambda;
        for v in &mut lx {
            *v *= inv_lambda;
        }
        let mut llx = vec![0.0; n];
        self.ops.apply_laplacian(&lx, &mut llx);
        for v in &mut llx {
            *v *= inv_lambda;
        }
        for i in 0..n {
            y[i] = x[i] - self.eps2 * lx[i] + self.eps4 * llx[i];
        }
    }
}

/// Solves the fourth-order system for one scalar cell field.
pub fn riesz_smooth_space_scalar(
    f: &[f64],
    ops: &DiscreteOperators,
    epsilon_space: f64,
) -> crate::Result<Vec<f64>> {
    if epsilon_space == 0.0 {
        return Ok(f.to_vec());
    }
    let eps2 = epsilon_space * epsilon_space;
    let op = SpaceSmootherOp { ops, eps2, eps4: eps2 * eps2 };
    let mut x = f.to_vec();
    conjugate_gradient(&op, f, &mut x, Some(&ops.mesh.cell_areas), 1e-12, 10_000)
        .map_err(Error::Numerical)?;
    Ok(x)
}

/// Componentwise spatial smoothing of a per-cell vector field.
pub fn riesz_smooth_space(
    f: &[Vec3],
    ops: &DiscreteOperators,
    epsilon_space: f64,
) -> crate::Result<Vec<Vec3>> {
    if epsilon_space == 0.0 {
        return Ok(f.to_vec());
    }
    let n = f.len();
    let mut out = vec![Vec3::ZERO; n];
    for comp in 0..3 {
        let rhs: Vec<f64> = f
            .iter()
            .map(|v| match comp {
                0 => v.x,
                1 => v.y,
                _ => v.z,
            })
            .collect();
        let sol = riesz_smooth_space_scalar(&rhs, ops, epsilon_space)?;
        for (o, s) in out.iter_mut().zip(&sol) {
            match comp {
                0 => o.x = *s,
                1 => o.y = *s,
                _ => o.z = *s,
            }
        }
    }
    Ok(out)
}
