//! Triangle meshes with a single (optional) boundary loop, plus the discrete
//! differential operators the rest of the pipeline is built on.

mod differential;
mod double_cover;
mod io;
mod laplacian;

pub use differential::{conformal_factor, lumped_areas, mean_curvature};
pub use double_cover::{double_cover, split_boundary_chords};
pub(crate) use double_cover::double_cover_with_mirror;
pub(crate) use differential::lumped_areas_planar;
pub use io::{load_mesh, read_obj, read_ply, save_mesh, write_obj, write_ply};
pub use laplacian::{cotangent_laplacian, cotangent_laplacian_planar, SparseOperator};

use std::collections::HashMap;
use std::ops::{Deref, DerefMut};

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("mesh has no faces")]
    Empty,
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: usize, count: usize },
    #[error("face {0} is degenerate (repeated vertex index)")]
    DegenerateFace(usize),
    #[error("face {0} has zero area")]
    ZeroAreaFace(usize),
    #[error("non-manifold mesh: {0}")]
    NonManifold(String),
    #[error("vertex {0} is not referenced by any face")]
    UnreferencedVertex(usize),
    #[error("mesh is not connected ({0} components)")]
    Disconnected(usize),
    #[error("expected one boundary loop, found {0}")]
    BoundaryLoops(usize),
    #[error("mesh is already closed")]
    AlreadyClosed,
    #[error("vertex field has {found} values, mesh has {expected} vertices")]
    FieldLength { expected: usize, found: usize },
    #[error("conformal factor vanishes at interior vertex {0}")]
    VanishingConformalFactor(usize),
    #[error("zero parametric one-ring area at vertex {0}")]
    ZeroParametricArea(usize),
    #[error("color component out of [0,1] at vertex {0}")]
    ColorRange(usize),
}

/// Per-vertex values aligned with one mesh's vertex list.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexField<T>(Vec<T>);

impl<T> VertexField<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self(values)
    }

    /// Checks the length against a mesh before wrapping.
    pub fn for_mesh(mesh: &TriangleMesh, values: Vec<T>) -> Result<Self, MeshError> {
        if values.len() != mesh.vertex_count() {
            return Err(MeshError::FieldLength {
                expected: mesh.vertex_count(),
                found: values.len(),
            });
        }
        Ok(Self(values))
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for VertexField<T> {
    type Target = Vec<T>;
    fn deref(&self) -> &Vec<T> {
        &self.0
    }
}

impl<T> DerefMut for VertexField<T> {
    fn deref_mut(&mut self) -> &mut Vec<T> {
        &mut self.0
    }
}

impl<T> FromIterator<T> for VertexField<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// An oriented, connected, edge-manifold triangle mesh with at most one
/// boundary loop.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    positions: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
    colors: Option<Vec<Vector3<f64>>>,
    boundary: Vec<usize>,
    /// `adjacency[f][k]` is the face across edge `(f[k], f[k+1])`.
    adjacency: Vec<[Option<usize>; 3]>,
    vertex_faces: Vec<Vec<usize>>,
}

impl TriangleMesh {
    pub fn new(positions: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        Self::with_colors(positions, faces, None)
    }

    pub fn with_colors(
        positions: Vec<Vector3<f64>>,
        faces: Vec<[usize; 3]>,
        colors: Option<Vec<Vector3<f64>>>,
    ) -> Result<Self, MeshError> {
        let n = positions.len();
        if faces.is_empty() {
            return Err(MeshError::Empty);
        }
        if let Some(c) = &colors {
            if c.len() != n {
                return Err(MeshError::FieldLength { expected: n, found: c.len() });
            }
            if let Some(i) = c.iter().position(|c| c.iter().any(|x| !(0.0..=1.0).contains(x))) {
                return Err(MeshError::ColorRange(i));
            }
        }

        let mut vertex_faces = vec![Vec::new(); n];
        let mut half_edges: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3);
        for (fi, f) in faces.iter().enumerate() {
            for &i in f {
                if i >= n {
                    return Err(MeshError::IndexOutOfRange { face: fi, index: i, count: n });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::DegenerateFace(fi));
            }
            for k in 0..3 {
                let e = (f[k], f[(k + 1) % 3]);
                if let Some(other) = half_edges.insert(e, fi) {
                    return Err(MeshError::NonManifold(format!(
                        "directed edge ({}, {}) used by faces {} and {} (inconsistent orientation or more than two faces)",
                        e.0, e.1, other, fi
                    )));
                }
                vertex_faces[f[k]].push(fi);
            }
        }
        if let Some(v) = vertex_faces.iter().position(|fs| fs.is_empty()) {
            return Err(MeshError::UnreferencedVertex(v));
        }

        let adjacency: Vec<[Option<usize>; 3]> = faces
            .iter()
            .map(|f| {
                let mut adj = [None; 3];
                for k in 0..3 {
                    adj[k] = half_edges.get(&(f[(k + 1) % 3], f[k])).copied();
                }
                adj
            })
            .collect();

        let components = count_components(faces.len(), &adjacency);
        if components != 1 {
            return Err(MeshError::Disconnected(components));
        }

        // Every vertex must have a single fan of faces.
        for (v, fs) in vertex_faces.iter().enumerate() {
            if fan_size(v, fs[0], &faces, &adjacency) != fs.len() {
                return Err(MeshError::NonManifold(format!("vertex {v} has more than one face fan")));
            }
        }

        // Boundary half-edges: those with no opposite.
        let mut next_on_boundary: HashMap<usize, usize> = HashMap::new();
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                if adjacency[fi][k].is_none() {
                    let (a, b) = (f[k], f[(k + 1) % 3]);
                    if next_on_boundary.insert(a, b).is_some() {
                        return Err(MeshError::NonManifold(format!(
                            "vertex {a} has two outgoing boundary edges"
                        )));
                    }
                }
            }
        }
        let mut boundary = Vec::new();
        if !next_on_boundary.is_empty() {
            let start = *next_on_boundary.keys().min().expect("non-empty");
            let mut v = start;
            loop {
                boundary.push(v);
                v = next_on_boundary[&v];
                if v == start {
                    break;
                }
                if boundary.len() > next_on_boundary.len() {
                    return Err(MeshError::NonManifold("boundary walk does not close".into()));
                }
            }
            if boundary.len() != next_on_boundary.len() {
                // The remaining boundary half-edges form further loops.
                let mut seen: std::collections::HashSet<usize> = boundary.iter().copied().collect();
                let mut loops = 1;
                let mut keys: Vec<usize> = next_on_boundary.keys().copied().collect();
                keys.sort_unstable();
                for k in keys {
                    if seen.contains(&k) {
                        continue;
                    }
                    loops += 1;
                    let mut v = k;
                    while seen.insert(v) {
                        v = next_on_boundary[&v];
                    }
                }
                return Err(MeshError::BoundaryLoops(loops));
            }
        }

        Ok(Self { positions, faces, colors, boundary, adjacency, vertex_faces })
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn colors(&self) -> Option<&[Vector3<f64>]> {
        self.colors.as_deref()
    }

    /// Ordered boundary loop; empty for closed meshes.
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_closed(&self) -> bool {
        self.boundary.is_empty()
    }

    pub fn face_adjacency(&self) -> &[[Option<usize>; 3]] {
        &self.adjacency
    }

    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.vertex_count()];
        for &b in &self.boundary {
            mask[b] = true;
        }
        mask
    }

    /// Same connectivity, new vertex positions. Colors are kept.
    pub fn with_positions(&self, positions: Vec<Vector3<f64>>) -> Result<Self, MeshError> {
        if positions.len() != self.vertex_count() {
            return Err(MeshError::FieldLength { expected: self.vertex_count(), found: positions.len() });
        }
        Ok(Self { positions, ..self.clone() })
    }

    /// Same geometry and connectivity with per-vertex colors replaced.
    pub fn with_vertex_colors(&self, colors: Option<Vec<Vector3<f64>>>) -> Result<Self, MeshError> {
        if let Some(c) = &colors {
            if c.len() != self.vertex_count() {
                return Err(MeshError::FieldLength { expected: self.vertex_count(), found: c.len() });
            }
            if let Some(i) = c.iter().position(|c| c.iter().any(|x| !(0.0..=1.0).contains(x))) {
                return Err(MeshError::ColorRange(i));
            }
        }
        Ok(Self { colors, ..self.clone() })
    }

    /// Undirected edges as sorted pairs, in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| (0..3).map(move |k| (f[k].min(f[(k + 1) % 3]), f[k].max(f[(k + 1) % 3]))))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count() as i64 - self.edges().len() as i64 + self.face_count() as i64
    }

    /// One-ring neighbours of every vertex, sorted.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.vertex_count()];
        for (a, b) in self.edges() {
            nbrs[a].push(b);
            nbrs[b].push(a);
        }
        for n in &mut nbrs {
            n.sort_unstable();
        }
        nbrs
    }

    /// Un-normalized face normal; its length is twice the face area.
    pub fn face_normal_scaled(&self, f: usize) -> Vector3<f64> {
        face_cross(&self.positions, self.faces[f])
    }

    pub fn face_area(&self, f: usize) -> f64 {
        0.5 * self.face_normal_scaled(f).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.face_count()).map(|f| self.face_area(f)).sum()
    }

    /// Area-weighted unit vertex normals for the given positions (which must
    /// be aligned with this mesh's vertices).
    pub fn vertex_normals_for(&self, positions: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        let mut normals = vec![Vector3::zeros(); self.vertex_count()];
        for f in &self.faces {
            let n = face_cross(positions, *f);
            for &v in f {
                normals[v] += n;
            }
        }
        for n in &mut normals {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }
        normals
    }

    pub fn vertex_normals(&self) -> Vec<Vector3<f64>> {
        self.vertex_normals_for(&self.positions)
    }

    /// Diameter of the axis-aligned bounding box.
    pub fn bounding_diameter(&self) -> f64 {
        bounding_diameter(&self.positions)
    }

    pub fn mean_edge_length(&self) -> f64 {
        let edges = self.edges();
        edges.iter().map(|&(a, b)| (self.positions[a] - self.positions[b]).norm()).sum::<f64>()
            / edges.len() as f64
    }
}

pub(crate) fn face_cross(positions: &[Vector3<f64>], f: [usize; 3]) -> Vector3<f64> {
    let (a, b, c) = (positions[f[0]], positions[f[1]], positions[f[2]]);
    (b - a).cross(&(c - a))
}

/// Twice the signed area of a planar triangle.
pub(crate) fn signed_area2(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

pub(crate) fn bounding_diameter(points: &[Vector3<f64>]) -> f64 {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

fn count_components(face_count: usize, adjacency: &[[Option<usize>; 3]]) -> usize {
    let mut seen = vec![false; face_count];
    let mut components = 0;
    let mut stack = Vec::new();
    for start in 0..face_count {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(f) = stack.pop() {
            for g in adjacency[f].iter().flatten() {
                if !seen[*g] {
                    seen[*g] = true;
                    stack.push(*g);
                }
            }
        }
    }
    components
}

/// Number of faces reachable from `start` by rotating around `v` across
/// edges incident to `v`.
fn fan_size(v: usize, start: usize, faces: &[[usize; 3]], adjacency: &[[Option<usize>; 3]]) -> usize {
    let mut visited = vec![start];
    for dir in 0..2 {
        let mut f = start;
        loop {
            let k = faces[f].iter().position(|&x| x == v).expect("v in face");
            // dir 0 crosses the edge leaving v, dir 1 the edge entering v.
            let edge = if dir == 0 { k } else { (k + 2) % 3 };
            match adjacency[f][edge] {
                Some(g) if g == start => return visited.len(),
                Some(g) => {
                    if visited.contains(&g) {
                        break;
                    }
                    visited.push(g);
                    f = g;
                }
                None => break,
            }
        }
    }
    visited.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn single_triangle_has_boundary_of_three() {
        let m = TriangleMesh::new(vec![v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.)], vec![[0, 1, 2]]).unwrap();
        assert_eq!(m.boundary(), &[0, 1, 2]);
        assert_eq!(m.euler_characteristic(), 1);
    }

    #[test]
    fn octahedron_is_closed() {
        let m = crate::shapes::octahedron();
        assert!(m.is_closed());
        assert_eq!(m.euler_characteristic(), 2);
    }

    #[test]
    fn rejects_inconsistent_orientation() {
        let p = vec![v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.), v(1., 1., 0.)];
        let err = TriangleMesh::new(p, vec![[0, 1, 2], [1, 2, 3]]).unwrap_err();
        assert!(matches!(err, MeshError::NonManifold(_)));
    }

    #[test]
    fn rejects_two_boundary_loops() {
        // An annulus: square with a square hole.
        let mut p = Vec::new();
        for &(x, y) in &[(0., 0.), (3., 0.), (3., 3.), (0., 3.), (1., 1.), (2., 1.), (2., 2.), (1., 2.)] {
            p.push(v(x, y, 0.));
        }
        let f = vec![
            [0, 1, 5], [0, 5, 4], [1, 2, 6], [1, 6, 5], [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7],
        ];
        let err = TriangleMesh::new(p, f).unwrap_err();
        assert!(matches!(err, MeshError::BoundaryLoops(2)), "{err}");
    }

    #[test]
    fn rejects_bowtie_vertex() {
        let p = vec![v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.), v(-1., 0., 0.), v(0., -1., 0.)];
        let err = TriangleMesh::new(p, vec![[0, 1, 2], [0, 3, 4]]).unwrap_err();
        assert!(matches!(err, MeshError::Disconnected(_) | MeshError::NonManifold(_)));
    }

    #[test]
    fn rejects_unreferenced_and_degenerate() {
        let p = vec![v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.), v(5., 5., 5.)];
        assert!(matches!(
            TriangleMesh::new(p.clone(), vec![[0, 1, 2]]).unwrap_err(),
            MeshError::UnreferencedVertex(3)
        ));
        assert!(matches!(
            TriangleMesh::new(p, vec![[0, 1, 1]]).unwrap_err(),
            MeshError::DegenerateFace(0)
        ));
    }
}
