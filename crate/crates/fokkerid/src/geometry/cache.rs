//! Mesh cache files.
//!
//! Structured text, versioned by a header line. Only vertices and triangles
//! are stored; circumcenters, areas, and edge data are recomputed on load so
//! the derived quantities can never go stale.

use super::{finish_mesh, SphereMesh};
use crate::error::Error;
use crate::linalg::Vec3;
use std::fmt::Write as _;
use std::path::Path;

pub const MESH_FORMAT_HEADER: &str = "FOKKERID-MESH-v1";

/// Serializes the mesh to the cache format.
pub fn mesh_to_string(mesh: &SphereMesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MESH_FORMAT_HEADER}");
    let _ = writeln!(s, "level {}", mesh.refinement_level);
    let _ = writeln!(s, "vertices {}", mesh.vertices.len());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
    }
    let _ = writeln!(s, "triangles {}", mesh.triangles.len());
    for t in &mesh.triangles {
        let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
    }
    s
}

pub fn store_mesh(mesh: &SphereMesh, path: &Path) -> crate::Result<()> {
    std::fs::write(path, mesh_to_string(mesh))?;
    Ok(())
}

pub fn load_mesh(path: &Path) -> crate::Result<SphereMesh> {
    let text = std::fs::read_to_string(path)?;
    mesh_from_str(&text)
}

pub fn mesh_from_str(text: &str) -> crate::Result<SphereMesh> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != MESH_FORMAT_HEADER {
        return Err(Error::Format(format!(
            "bad mesh header {header:?}, expected {MESH_FORMAT_HEADER:?}"
        )));
    }
    let level = parse_count(lines.next(), "level")? as u32;
    let n_verts = parse_count(lines.next(), "vertices")?;
    let mut vertices = Vec::with_capacity(n_verts);
    for _ in 0..n_verts {
        let line = lines
            .next()
            .ok_or_else(|| Error::Format("truncated vertex block".into()))?;
        let nums = parse_floats(line, 3)?;
        vertices.push(Vec3::new(nums[0], nums[1], nums[2]));
    }
    let n_tris = parse_count(lines.next(), "triangles")?;
    let mut triangles = Vec::with_capacity(n_tris);
    for _ in 0..n_tris {
        let line = lines
            .next()
            .ok_or_else(|| Error::Format("truncated triangle block".into()))?;
        let mut it = line.split_whitespace();
        let mut tri = [0usize; 3];
        for t in &mut tri {
            *t = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad triangle line {line:?}")))?;
        }
        triangles.push(tri);
    }
    finish_mesh(level, vertices, triangles)
}

fn parse_count(line: Option<&str>, key: &str) -> crate::Result<usize> {
    let line = line.ok_or_else(|| Error::Format(format!("missing {key} line")))?;
    let mut it = line.split_whitespace();
    if it.next() != Some(key) {
        return Err(Error::Format(format!("expected {key:?} line, got {line:?}")));
    }
    it.next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("bad {key} count in {line:?}")))
}

fn parse_floats(line: &str, n: usize) -> crate::Result<Vec<f64>> {
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|s| s.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format(format!("bad float in {line:?}: {e}")))?;
    if vals.len() != n {
        return Err(Error::Format(format!("expected {n} floats in {line:?}")));
    }
    Ok(vals)
}
