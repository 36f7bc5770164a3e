//! Triangulated unit sphere with its finite-volume dual geometry.
//!
//! Meshes come from recursive midpoint refinement of an icosahedron, giving
//! `20·4^level` spherical triangles. Each triangle is one finite-volume cell
//! with its unknown collocated at the (spherical) circumcenter; adjacent
//! circumcenters lie on the perpendicular-bisector plane of the shared chord,
//! so the circumcenter arc crosses the shared edge orthogonally and a
//! two-point flux is consistent.
//!
//! The base icosahedron of level L is rotated by a fixed, level-dependent
//! angle before refinement. Without it, the circumcenters on the 20 face axes
//! coincide exactly between any two levels (midpoint refinement preserves the
//! face symmetry), which would break the two-grid protocol's requirement that
//! coarse and fine collocation points are pairwise distinct.

mod cache;
mod interpolate;
mod operators;

pub use cache::{load_mesh, store_mesh, MESH_FORMAT_HEADER};
pub use interpolate::{interpolate, InterpolationMap};
pub use operators::{assemble_operators, DiscreteOperators};

use crate::error::Error;
use crate::linalg::Vec3;
use std::collections::BTreeMap;

pub const MAX_LEVEL: u32 = 7;

/// One interior edge of the triangulation, shared by exactly two cells.
#[derive(Debug, Clone)]
pub struct Edge {
    /// Adjacent cell indices; the conormal points from `cells[0]` to `cells[1]`.
    pub cells: [usize; 2],
    /// Endpoint vertex indices of the shared edge.
    pub vertices: [usize; 2],
    /// Geodesic arc length of the shared edge.
    pub arc_length: f64,
    /// Geodesic distance between the two adjacent circumcenters.
    pub center_distance: f64,
    /// Unit conormal at the edge midpoint: tangent to the sphere, orthogonal
    /// to the edge, oriented from `cells[0]` toward `cells[1]`.
    pub conormal: Vec3,
    /// Unit tangent along the edge at its midpoint.
    pub tangent: Vec3,
}

/// Refined icosahedral triangulation of S² with finite-volume dual data.
#[derive(Debug, Clone)]
pub struct SphereMesh {
    pub refinement_level: u32,
    /// Unit vertex positions.
    pub vertices: Vec<Vec3>,
    /// Outward-oriented vertex index triples.
    pub triangles: Vec<[usize; 3]>,
    /// Spherical circumcenter of each triangle (unit vectors).
    pub circumcenters: Vec<Vec3>,
    /// Spherical (geodesic) area of each triangle, in steradians.
    pub cell_areas: Vec<f64>,
    /// Interior edges with dual geometry; every edge has exactly two cells.
    pub edges: Vec<Edge>,
    /// For each cell, indices into `edges` of its three edges.
    pub cell_edges: Vec<[usize; 3]>,
}

impl SphereMesh {
    #[inline]
    pub fn n_cells(&self) -> usize {
        self.triangles.len()
    }

    /// Total surface area, Σ cell_areas.
    pub fn total_area(&self) -> f64 {
        self.cell_areas.iter().sum()
    }

    /// Area-weighted integral of a cell field.
    pub fn integrate(&self, field: &[f64]) -> f64 {
        debug_assert_eq!(field.len(), self.n_cells());
        self.cell_areas.iter().zip(field).map(|(a, u)| a * u).sum()
    }

    /// Area-weighted inner product of two cell fields.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.cell_areas
            .iter()
            .zip(u)
            .zip(v)
            .map(|((a, x), y)| a * x * y)
            .sum()
    }

    /// Mean over cells of the longest triangle edge; a mesh-size measure.
    pub fn mean_diameter(&self) -> f64 {
        let mut total = 0.0;
        for tri in &self.triangles {
            let mut dmax: f64 = 0.0;
            for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                dmax = dmax.max(arc_distance(self.vertices[tri[i]], self.vertices[tri[j]]));
            }
            total += dmax;
        }
        total / self.n_cells() as f64
    }
}

/// Geodesic distance between unit vectors.
#[inline]
pub fn arc_distance(a: Vec3, b: Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Spherical circumcenter of the geodesic triangle (a, b, c): the unit vector
/// equidistant from all three vertices, on the same side as the triangle.
fn circumcenter(a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let n = (b - a).cross(c - a);
    let n = n.normalized();
    if n.dot(a + b + c) < 0.0 {
        -n
    } else {
        n
    }
}

/// Spherical excess area of the geodesic triangle (a, b, c).
fn spherical_area(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    // Oosterom & Strackee; robust for small triangles.
    let triple = a.dot(b.cross(c)).abs();
    let denom = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * triple.atan2(denom)
}

/// Unit icosahedron vertices and faces (outward-oriented).
fn icosahedron() -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let verts_raw = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ];
    let vertices: Vec<Vec3> = verts_raw
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalized())
        .collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (vertices, faces)
}

/// Rotation of `v` by `angle` around the unit axis (Rodrigues).
fn rotate(v: Vec3, axis: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    v * c + axis.cross(v) * s + axis * (axis.dot(v) * (1.0 - c))
}

/// Builds the level-`level` icosphere with all dual quantities.
///
/// Counts: `20·4^level` triangles, `10·4^level + 2` vertices. Levels above
/// [`MAX_LEVEL`] are rejected as a configuration error.
pub fn build_icosphere(level: u32) -> crate::Result<SphereMesh> {
    if level > MAX_LEVEL {
        return Err(Error::Config(format!(
            "refinement level {level} out of range 0..={MAX_LEVEL}"
        )));
    }

    let (mut vertices, mut triangles) = icosahedron();

    // Level-dependent base rotation keeps circumcenter sets of different
    // levels pairwise distinct (tilted axis avoids any mesh symmetry axis).
    let axis = Vec3::new(0.21, 0.43, 0.88).normalized();
    let angle = level as f64 * 0.4;
    for v in &mut vertices {
        *v = rotate(*v, axis, angle);
    }

    for _ in 0..level {
        let mut midpoint_of: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut new_triangles = Vec::with_capacity(triangles.len() * 4);
        for tri in &triangles {
            let mut mids = [0usize; 3];
            for (e, (i, j)) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])]
                .into_iter()
                .enumerate()
            {
                let key = (i.min(j), i.max(j));
                let idx = *midpoint_of.entry(key).or_insert_with(|| {
                    vertices.push((vertices[i] + vertices[j]).normalized());
                    vertices.len() - 1
                });
                mids[e] = idx;
            }
            let [a, b, c] = *tri;
            let [mab, mbc, mca] = mids;
            new_triangles.push([a, mab, mca]);
            new_triangles.push([mab, b, mbc]);
            new_triangles.push([mca, mbc, c]);
            new_triangles.push([mab, mbc, mca]);
        }
        triangles = new_triangles;
    }

    // Enforce outward orientation.
    for tri in &mut triangles {
        let [a, b, c] = *tri;
        let n = (vertices[b] - vertices[a]).cross(vertices[c] - vertices[a]);
        if n.dot(vertices[a] + vertices[b] + vertices[c]) < 0.0 {
            tri.swap(1, 2);
        }
    }

    finish_mesh(level, vertices, triangles)
}

/// Computes circumcenters, areas, and edge dual data, validating closure.
pub(crate) fn finish_mesh(
    level: u32,
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
) -> crate::Result<SphereMesh> {
    let circumcenters: Vec<Vec3> = triangles
        .iter()
        .map(|&[a, b, c]| circumcenter(vertices[a], vertices[b], vertices[c]))
        .collect();
    let cell_areas: Vec<f64> = triangles
        .iter()
        .map(|&[a, b, c]| spherical_area(vertices[a], vertices[b], vertices[c]))
        .collect();

    // Edge extraction: BTreeMap keyed by sorted vertex pair for determinism.
    let mut incident: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for (i, j) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
            incident.entry((i.min(j), i.max(j))).or_default().push(t);
        }
    }

    let mut edges = Vec::with_capacity(incident.len());
    for (&(vi, vj), cells) in &incident {
        if cells.len() != 2 {
            return Err(Error::MeshQuality(format!(
                "edge ({vi},{vj}) has {} incident triangles; mesh is not closed",
                cells.len()
            )));
        }
        let (ci, cj) = (cells[0], cells[1]);
        let p = vertices[vi];
        let q = vertices[vj];
        // q − p is orthogonal to the midpoint direction because |p| = |q| = 1.
        let tangent = (q - p).normalized();
        let midpoint = (p + q).normalized();
        let mut conormal = midpoint.cross(tangent);
        let span = circumcenters[cj] - circumcenters[ci];
        if conormal.dot(span) < 0.0 {
            conormal = -conormal;
        }
        edges.push(Edge {
            cells: [ci, cj],
            vertices: [vi, vj],
            arc_length: arc_distance(p, q),
            center_distance: arc_distance(circumcenters[ci], circumcenters[cj]),
            conormal,
            tangent,
        });
    }

    let mut cell_edges = vec![[usize::MAX; 3]; triangles.len()];
    let mut fill = vec![0usize; triangles.len()];
    for (e, edge) in edges.iter().enumerate() {
        for &c in &edge.cells {
            cell_edges[c][fill[c]] = e;
            fill[c] += 1;
        }
    }
    if fill.iter().any(|&f| f != 3) {
        return Err(Error::MeshQuality("some cell does not have exactly 3 edges".into()));
    }

    Ok(SphereMesh {
        refinement_level: level,
        vertices,
        triangles,
        circumcenters,
        cell_areas,
        edges,
        cell_edges,
    })
}
