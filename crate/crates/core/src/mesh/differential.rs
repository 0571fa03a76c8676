use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Vector2, Vector3};

use super::laplacian::cotangent_laplacian_planar;
use super::{signed_area2, MeshError, TriangleMesh, VertexField};
use crate::conformal::DiskParameterization;

/// One third of the one-ring area at every vertex.
pub fn lumped_areas(faces: &[[usize; 3]], positions: &[Vector3<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; positions.len()];
    for &f in faces {
        let a = super::face_cross(positions, f).norm() / 6.0;
        for v in f {
            m[v] += a;
        }
    }
    m
}

pub(crate) fn lumped_areas_planar(faces: &[[usize; 3]], uv: &[Vector2<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; uv.len()];
    for &f in faces {
        let a = signed_area2(&uv[f[0]], &uv[f[1]], &uv[f[2]]).abs() / 6.0;
        for v in f {
            m[v] += a;
        }
    }
    m
}

/// λ = sqrt(A₃D / A₂D) over each vertex's one-ring.
pub fn conformal_factor(mesh: &TriangleMesh, uv: &[Vector2<f64>]) -> Result<VertexField<f64>, MeshError> {
    if uv.len() != mesh.vertex_count() {
        return Err(MeshError::FieldLength { expected: mesh.vertex_count(), found: uv.len() });
    }
    let a3 = lumped_areas(mesh.faces(), mesh.positions());
    let a2 = lumped_areas_planar(mesh.faces(), uv);
    let mut lambda = Vec::with_capacity(uv.len());
    for (v, (s, p)) in a3.iter().zip(&a2).enumerate() {
        if *p <= 0.0 {
            return Err(MeshError::ZeroParametricArea(v));
        }
        lambda.push((s / p).sqrt());
    }
    Ok(VertexField::new(lambda))
}

/// Mean curvature H from `K S = 2 H λ² M n`, with K and M the parametric
/// cotangent Laplacian and lumped mass. Positive for a sphere with outward
/// normals.
pub fn mean_curvature(mesh: &TriangleMesh, param: &DiskParameterization) -> Result<VertexField<f64>, MeshError> {
    let uv = param.uv();
    let lambda = param.lambda();
    let k = cotangent_laplacian_planar(mesh, uv)?;
    let mass = lumped_areas_planar(mesh.faces(), uv);
    let ks = k.apply_vec3(mesh.positions());
    let normals = mesh.vertex_normals();
    let is_boundary = mesh.boundary_mask();

    let mut h = vec![0.0; mesh.vertex_count()];
    for v in 0..mesh.vertex_count() {
        if is_boundary[v] {
            continue;
        }
        let l2 = lambda[v] * lambda[v];
        if !(l2 > 1e-300) {
            return Err(MeshError::VanishingConformalFactor(v));
        }
        if mass[v] <= 0.0 {
            return Err(MeshError::ZeroParametricArea(v));
        }
        h[v] = ks[v].dot(&normals[v]) / (2.0 * l2 * mass[v]);
    }
    copy_from_nearest_interior(mesh, &is_boundary, &mut h);
    Ok(VertexField::new(h))
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance, ties by vertex index for determinism.
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Gives each boundary vertex the value of its nearest interior vertex
/// (graph distance along 3D edges).
fn copy_from_nearest_interior(mesh: &TriangleMesh, is_boundary: &[bool], values: &mut [f64]) {
    let n = mesh.vertex_count();
    let nbrs = mesh.vertex_neighbors();
    let p = mesh.positions();
    let mut dist = vec![f64::INFINITY; n];
    let mut source = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    for v in 0..n {
        if !is_boundary[v] {
            dist[v] = 0.0;
            source[v] = v;
            heap.push(Item(0.0, v));
        }
    }
    if heap.is_empty() {
        values.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    while let Some(Item(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &w in &nbrs[v] {
            let nd = d + (p[v] - p[w]).norm();
            if nd < dist[w] || (nd == dist[w] && source[v] < source[w]) {
                dist[w] = nd;
                source[w] = source[v];
                heap.push(Item(nd, w));
            }
        }
    }
    for v in 0..n {
        if is_boundary[v] {
            values[v] = values[source[v]];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn identity_parameterization_of_plane_has_unit_factor() {
        let mesh = shapes::unit_disk(8);
        let uv: Vec<_> = mesh.positions().iter().map(|p| p.xy()).collect();
        let lambda = conformal_factor(&mesh, &uv).unwrap();
        assert!(lambda.iter().all(|l| (l - 1.0).abs() < 1e-12));
        let half: Vec<_> = uv.iter().map(|p| p * 0.5).collect();
        let lambda = conformal_factor(&mesh, &half).unwrap();
        assert!(lambda.iter().all(|l| (l - 2.0).abs() < 1e-12));
    }

    #[test]
    fn flat_disk_has_zero_mean_curvature() {
        let mesh = shapes::unit_disk(10);
        let uv: Vec<_> = mesh.positions().iter().map(|p| p.xy()).collect();
        let param = DiskParameterization::from_image(&mesh, uv).unwrap();
        let h = mean_curvature(&mesh, &param).unwrap();
        assert!(h.iter().all(|x| x.abs() < 1e-9));
    }
}
