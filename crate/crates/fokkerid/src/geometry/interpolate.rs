//! Conservative nearest-aggregation interpolation between sphere meshes.
//!
//! Every source cell is assigned to the target cell whose circumcenter is
//! geodesically nearest to its own; each target value is the area-weighted
//! average over its assigned source cells, followed by a uniform correction
//! that preserves the area-weighted integral exactly.

use super::SphereMesh;
use crate::error::Error;

/// Precomputed source→target assignment for one mesh pair.
#[derive(Debug, Clone)]
pub struct InterpolationMap {
    /// For each source cell the index of the nearest target cell.
    pub assignment: Vec<usize>,
    /// Σ of source areas assigned to each target cell.
    pub target_weight: Vec<f64>,
    pub source_cells: usize,
    pub target_cells: usize,
    target_total_area: f64,
}

impl InterpolationMap {
    /// Builds the nearest-circumcenter assignment. Errors if some target cell
    /// attracts no source cell (cannot happen when the source mesh is finer).
    pub fn build(source: &SphereMesh, target: &SphereMesh) -> crate::Result<Self> {
        let mut assignment = Vec::with_capacity(source.n_cells());
        for &sc in &source.circumcenters {
            // geodesic nearest = maximal dot product on the unit sphere
            let mut best = 0usize;
            let mut best_dot = f64::MIN;
            for (t, &tc) in target.circumcenters.iter().enumerate() {
                let d = sc.dot(tc);
                if d > best_dot {
                    best_dot = d;
                    best = t;
                }
            }
            assignment.push(best);
        }
        let mut target_weight = vec![0.0; target.n_cells()];
        for (s, &t) in assignment.iter().enumerate() {
            target_weight[t] += source.cell_areas[s];
        }
        if let Some(empty) = target_weight.iter().position(|&w| w == 0.0) {
            return Err(Error::Interpolation(format!(
                "target cell {empty} attracted no source cell (source level {}, target level {})",
                source.refinement_level, target.refinement_level
            )));
        }
        Ok(InterpolationMap {
            assignment,
            target_weight,
            source_cells: source.n_cells(),
            target_cells: target.n_cells(),
            target_total_area: target.total_area(),
        })
    }

    /// Applies the map to one cell-field slice.
    pub fn apply(&self, source: &SphereMesh, field: &[f64], target: &SphereMesh) -> Vec<f64> {
        assert_eq!(field.len(), self.source_cells);
        assert_eq!(target.n_cells(), self.target_cells);
        let mut out = vec![0.0; self.target_cells];
        for (s, &t) in self.assignment.iter().enumerate() {
            out[t] += source.cell_areas[s] * field[s];
        }
        for (v, w) in out.iter_mut().zip(&self.target_weight) {
            *v /= w;
        }
        // uniform additive correction: exact integral preservation without the
        // 0/0 hazard a multiplicative rescale has for zero-mean fields
        let source_integral = source.integrate(field);
        let target_integral = target.integrate(&out);
        let shift = (source_integral - target_integral) / self.target_total_area;
        for v in &mut out {
            *v += shift;
        }
        out
    }
}

/// One-shot interpolation of a single slice; builds the assignment internally.
/// For time series, build an [`InterpolationMap`] once and reuse it.
pub fn interpolate(
    source_mesh: &SphereMesh,
    field: &[f64],
    target_mesh: &SphereMesh,
) -> crate::Result<Vec<f64>> {
    let map = InterpolationMap::build(source_mesh, target_mesh)?;
    Ok(map.apply(source_mesh, field, target_mesh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_icosphere;
    use std::f64::consts::PI;

    #[test]
    fn constants_are_preserved() {
        let fine = build_icosphere(3).unwrap();
        let coarse = build_icosphere(2).unwrap();
        let field = vec![0.25; fine.n_cells()];
        let out = interpolate(&fine, &field, &coarse).unwrap();
        for v in &out {
            assert!((v - 0.25).abs() < 1e-13);
        }
    }

    #[test]
    fn density_integral_is_preserved() {
        let fine = build_icosphere(3).unwrap();
        let coarse = build_icosphere(2).unwrap();
        // normalized non-uniform density
        let mut field: Vec<f64> = fine
            .circumcenters
            .iter()
            .map(|c| 1.0 + 0.8 * c.z + 0.3 * c.x * c.y)
            .collect();
        let mass = fine.integrate(&field);
        for v in &mut field {
            *v /= mass;
        }
        let out = interpolate(&fine, &field, &coarse).unwrap();
        assert!((coarse.integrate(&out) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn smooth_field_error_below_mesh_bound() {
        // f(m) = m_z against direct evaluation at coarse circumcenters
        let fine = build_icosphere(5).unwrap();
        let coarse = build_icosphere(4).unwrap();
        let field: Vec<f64> = fine.circumcenters.iter().map(|c| c.z).collect();
        let out = interpolate(&fine, &field, &coarse).unwrap();
        let h = coarse.mean_diameter();
        let mut max_err: f64 = 0.0;
        for (v, c) in out.iter().zip(&coarse.circumcenters) {
            max_err = max_err.max((v - c.z).abs());
        }
        assert!(max_err < 5.0 * h, "max error {max_err:.3e} vs bound {:.3e}", 5.0 * h);
    }

    #[test]
    fn zero_mean_field_does_not_blow_up() {
        let fine = build_icosphere(3).unwrap();
        let coarse = build_icosphere(2).unwrap();
        let field: Vec<f64> = fine.circumcenters.iter().map(|c| c.x).collect();
        let out = interpolate(&fine, &field, &coarse).unwrap();
        let integral = coarse.integrate(&out);
        assert!(integral.abs() < 1e-12);
        for v in &out {
            assert!(v.abs() <= 1.1);
        }
    }

    #[test]
    fn every_coarse_cell_attracted_fine_cells() {
        for (fine_l, coarse_l) in [(2u32, 1u32), (3, 2), (4, 3)] {
            let fine = build_icosphere(fine_l).unwrap();
            let coarse = build_icosphere(coarse_l).unwrap();
            let map = InterpolationMap::build(&fine, &coarse).unwrap();
            assert!(map.target_weight.iter().all(|&w| w > 0.0));
            let covered: f64 = map.target_weight.iter().sum();
            assert!((covered - 4.0 * PI).abs() < 1e-8);
        }
    }
}
