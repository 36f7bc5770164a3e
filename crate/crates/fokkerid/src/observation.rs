//! Observation operator G and its adjoint.
//!
//! Expectation mode realizes `Gu(t) = ∫ m u(m,t) dm` with the midpoint
//! (circumcenter) rule, matching the cell-average state representation.
//! Identity mode embeds the full state. Both satisfy
//! `⟨Gu, z⟩_Y = ⟨u, G*z⟩` exactly in the discrete inner products.

use crate::error::Error;
use crate::geometry::SphereMesh;
use crate::linalg::Vec3;
use crate::pde::StateField;
use crate::TimeGrid;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationMode {
    Expectation,
    Identity,
}

/// Time series of observations: mean moments in ℝ³ (expectation mode) or the
/// full cell state (identity mode).
#[derive(Debug, Clone, PartialEq)]
pub enum ObservationValues {
    Expectation(Vec<Vec3>),
    Identity(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    pub values: ObservationValues,
    pub time_grid: TimeGrid,
}

impl ObservationSeries {
    pub fn mode(&self) -> ObservationMode {
        match self.values {
            ObservationValues::Expectation(_) => ObservationMode::Expectation,
            ObservationValues::Identity(_) => ObservationMode::Identity,
        }
    }

    pub fn n_points(&self) -> usize {
        match &self.values {
            ObservationValues::Expectation(v) => v.len(),
            ObservationValues::Identity(v) => v.len(),
        }
    }

    /// a − b, same mode and grid.
    pub fn difference(&self, other: &ObservationSeries) -> crate::Result<ObservationSeries> {
        if !self.time_grid.matches(&other.time_grid) {
            return Err(Error::Shape("observation time grids do not match".into()));
        }
        let values = match (&self.values, &other.values) {
            (ObservationValues::Expectation(a), ObservationValues::Expectation(b))
                if a.len() == b.len() =>
            {
                ObservationValues::Expectation(a.iter().zip(b).map(|(x, y)| *x - *y).collect())
            }
            (ObservationValues::Identity(a), ObservationValues::Identity(b))
                if a.len() == b.len() =>
            {
                ObservationValues::Identity(
                    a.iter()
                        .zip(b)
                        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
                        .collect(),
                )
            }
            _ => return Err(Error::Shape("observation mode or length mismatch".into())),
        };
        Ok(ObservationSeries { values, time_grid: self.time_grid })
    }
}

/// Applies G to a state trajectory.
pub fn observe(u: &StateField, mode: ObservationMode, mesh: &SphereMesh) -> ObservationSeries {
    let values = match mode {
        ObservationMode::Expectation => ObservationValues::Expectation(
            u.values
                .iter()
                .map(|slice| {
                    let mut acc = Vec3::ZERO;
                    for ((&ui, &c), &a) in
                        slice.iter().zip(&mesh.circumcenters).zip(&mesh.cell_areas)
                    {
                        acc += c * (a * ui);
                    }
                    acc
                })
                .collect(),
        ),
        ObservationMode::Identity => ObservationValues::Identity(u.values.clone()),
    };
    ObservationSeries { values, time_grid: u.time_grid }
}

/// Applies G* to an observation series, yielding the per-step cell field that
/// sources the adjoint equation. Expectation: `(G*z)(m,t) = ⟨m, z(t)⟩` at
/// circumcenters; identity: copy.
pub fn observe_adjoint(z: &ObservationSeries, mesh: &SphereMesh) -> crate::Result<Vec<Vec<f64>>> {
    match &z.values {
        ObservationValues::Expectation(series) => Ok(series
            .iter()
            .map(|zk| mesh.circumcenters.iter().map(|c| c.dot(*zk)).collect())
            .collect()),
        ObservationValues::Identity(series) => {
            if series.iter().any(|s| s.len() != mesh.n_cells()) {
                return Err(Error::Shape("identity observation does not match mesh".into()));
            }
            Ok(series.clone())
        }
    }
}

/// Discrete L²(0,T) inner product on observation space (rectangle weights Δt
/// on grid points 1..=N; identity mode also weights cells by area).
pub fn y_inner(a: &ObservationSeries, b: &ObservationSeries, mesh: &SphereMesh) -> crate::Result<f64> {
    if !a.time_grid.matches(&b.time_grid) {
        return Err(Error::Shape("observation time grids do not match".into()));
    }
    let dt = a.time_grid.dt();
    match (&a.values, &b.values) {
        (ObservationValues::Expectation(x), ObservationValues::Expectation(y))
            if x.len() == y.len() =>
        {
            Ok(x.iter().zip(y).skip(1).map(|(p, q)| p.dot(*q)).sum::<f64>() * dt)
        }
        (ObservationValues::Identity(x), ObservationValues::Identity(y)) if x.len() == y.len() => {
            let mut acc = 0.0;
            for (xs, ys) in x.iter().zip(y).skip(1) {
                acc += mesh.inner(xs, ys);
            }
            Ok(acc * dt)
        }
        _ => Err(Error::Shape("observation mode or length mismatch".into())),
    }
}

pub fn y_norm(a: &ObservationSeries, mesh: &SphereMesh) -> f64 {
    y_inner(a, a, mesh).map(|v| v.max(0.0).sqrt()).unwrap_or(0.0)
}

/// Largest |y_i(t)| over steps and components (expectation mode), or the max
/// |u| (identity mode); the reference for relative noise levels.
pub fn sup_norm(a: &ObservationSeries) -> f64 {
    match &a.values {
        ObservationValues::Expectation(x) => x
            .iter()
            .flat_map(|v| [v.x.abs(), v.y.abs(), v.z.abs()])
            .fold(0.0, f64::max),
        ObservationValues::Identity(x) => {
            x.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max)
        }
    }
}
