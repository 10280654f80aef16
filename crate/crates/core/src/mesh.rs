//! Trajectory visualization as sphere-chain triangle meshes.
//!
//! Each trajectory point becomes one icosphere, colored per electrode,
//! and the chain is written as ASCII PLY so artifacts stay diff-able.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

/// Subdivision depth of the spheres drawn at trajectory points.
pub const ICOSPHERE_SUBDIVISIONS: u32 = 2;

/// Indexed triangles with one color per vertex. `colors` runs parallel
/// to `vertices`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub colors: Vec<[u8; 3]>,
    pub faces: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn empty() -> Self {
        TriangleMesh::default()
    }

    /// Append another mesh, rebasing its face indices past ours.
    pub fn append(&mut self, other: TriangleMesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend(other.vertices);
        self.colors.extend(other.colors);
        self.faces
            .extend(other.faces.into_iter().map(|f| f.map(|i| i + base)));
    }

    /// Axis-aligned vertex bounds as (min, max); None when empty.
    pub fn bounding_box(&self) -> Option<([f64; 3], [f64; 3])> {
        let first = *self.vertices.first()?;
        let mut lo = first;
        let mut hi = first;
        for v in &self.vertices {
            for axis in 0..3 {
                lo[axis] = lo[axis].min(v[axis]);
                hi[axis] = hi[axis].max(v[axis]);
            }
        }
        Some((lo, hi))
    }
}

/// Icosahedron subdivided `subdivisions` times, scaled to `radius` about
/// `center`. Vertex count is 10*4^n + 2, face count 20*4^n. Subdivision
/// midpoints are shared between adjacent faces, and from the first
/// subdivision on the six axis poles are exact vertices, so the bounding
/// box equals center +- radius per axis.
pub fn icosphere(
    center: [f64; 3],
    radius: f64,
    subdivisions: u32,
) -> (Vec<[f64; 3]>, Vec<[u32; 3]>) {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut vertices: Vec<[f64; 3]> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .iter()
    .map(|&v| normalize(v))
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
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
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(&mut vertices, &mut midpoints, a, b);
            let bc = midpoint(&mut vertices, &mut midpoints, b, c);
            let ca = midpoint(&mut vertices, &mut midpoints, c, a);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    for v in &mut vertices {
        for axis in 0..3 {
            v[axis] = center[axis] + radius * v[axis];
        }
    }
    (vertices, faces)
}

/// Index of the unit-sphere midpoint of edge (a, b), inserting it once
/// per undirected edge.
fn midpoint(
    vertices: &mut Vec<[f64; 3]>,
    cache: &mut HashMap<(u32, u32), u32>,
    a: u32,
    b: u32,
) -> u32 {
    let key = (a.min(b), a.max(b));
    if let Some(&idx) = cache.get(&key) {
        return idx;
    }
    let (va, vb) = (vertices[a as usize], vertices[b as usize]);
    let mid = normalize([va[0] + vb[0], va[1] + vb[1], va[2] + vb[2]]);
    let idx = vertices.len() as u32;
    vertices.push(mid);
    cache.insert(key, idx);
    idx
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// One icosphere per trajectory point, all vertices in `color`.
pub fn trajectory_to_mesh(
    t: &Trajectory,
    sphere_radius: f64,
    color: [u8; 3],
) -> Result<TriangleMesh> {
    if !(sphere_radius.is_finite() && sphere_radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sphere radius must be finite and positive, got {sphere_radius}"
        )));
    }
    let mut mesh = TriangleMesh::empty();
    for &p in t.points() {
        let (vertices, faces) = icosphere(p, sphere_radius, ICOSPHERE_SUBDIVISIONS);
        mesh.append(TriangleMesh {
            colors: vec![color; vertices.len()],
            vertices,
            faces,
        });
    }
    Ok(mesh)
}

/// Write ASCII PLY 1.0 with per-vertex colors and triangular faces.
/// Output is deterministic for a given mesh.
pub fn write_ply(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    if mesh.colors.len() != mesh.vertices.len() {
        return Err(Error::InvalidParameter(format!(
            "mesh has {} vertices but {} colors",
            mesh.vertices.len(),
            mesh.colors.len()
        )));
    }
    if mesh.vertices.len() > i32::MAX as usize {
        return Err(Error::InvalidParameter(format!(
            "mesh has {} vertices; PLY int indices cap at {}",
            mesh.vertices.len(),
            i32::MAX
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "ply").map_err(io)?;
    writeln!(w, "format ascii 1.0").map_err(io)?;
    writeln!(w, "element vertex {}", mesh.vertices.len()).map_err(io)?;
    writeln!(w, "property float x").map_err(io)?;
    writeln!(w, "property float y").map_err(io)?;
    writeln!(w, "property float z").map_err(io)?;
    writeln!(w, "property uchar red").map_err(io)?;
    writeln!(w, "property uchar green").map_err(io)?;
    writeln!(w, "property uchar blue").map_err(io)?;
    writeln!(w, "element face {}", mesh.faces.len()).map_err(io)?;
    writeln!(w, "property list uchar int vertex_indices").map_err(io)?;
    writeln!(w, "end_header").map_err(io)?;
    for (v, c) in mesh.vertices.iter().zip(&mesh.colors) {
        // Coordinates are declared float; narrow before formatting so the
        // text matches what a reader will decode.
        writeln!(
            w,
            "{} {} {} {} {} {}",
            v[0] as f32, v[1] as f32, v[2] as f32, c[0], c[1], c[2]
        )
        .map_err(io)?;
    }
    for f in &mesh.faces {
        writeln!(w, "3 {} {} {}", f[0], f[1], f[2]).map_err(io)?;
    }
    w.flush().map_err(io)
}
