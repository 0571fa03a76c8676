use nalgebra::{Vector2, Vector3};

use super::{face_cross, MeshError, TriangleMesh};

/// Symmetric sparse operator on vertex fields, stored row-wise.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    dim: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseOperator {
    /// Builds the operator from `(row, col, weight)` triples, summing repeats.
    pub fn from_triplets(dim: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_unstable_by_key(|e| (e.0, e.1));
        let mut row_start = vec![0; dim + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *vals.last_mut().expect("non-empty") += v;
                continue;
            }
            cols.push(c);
            vals.push(v);
            row_start[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..dim {
            row_start[i + 1] += row_start[i];
        }
        Self { dim, row_start, cols, vals }
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    /// `(column, weight)` pairs of one row, by ascending column.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_start[i]..self.row_start[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        (0..self.dim).flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v))).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_start[i]..self.row_start[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn apply_vec3(&self, x: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        (0..self.dim)
            .map(|i| self.row(i).fold(Vector3::zeros(), |acc, (j, v)| acc + x[j] * v))
            .collect()
    }

    /// Quadratic form `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.apply(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Largest |A_ij − A_ji| relative to the largest entry.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        self.entries()
            .iter()
            .map(|&(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
            / scale
    }

    /// Largest |row sum| relative to the largest entry.
    pub fn row_sum_defect(&self) -> f64 {
        let scale = self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        (0..self.dim)
            .map(|i| self.row(i).map(|(_, v)| v).sum::<f64>().abs())
            .fold(0.0, f64::max)
            / scale
    }
}

/// Cotangent Laplacian of the mesh's 3D embedding, positive semidefinite.
pub fn cotangent_laplacian(mesh: &TriangleMesh) -> Result<SparseOperator, MeshError> {
    cotangent_weights(mesh.faces(), mesh.positions())
}

/// Cotangent Laplacian of a planar embedding with the mesh's connectivity.
pub fn cotangent_laplacian_planar(mesh: &TriangleMesh, uv: &[Vector2<f64>]) -> Result<SparseOperator, MeshError> {
    if uv.len() != mesh.vertex_count() {
        return Err(MeshError::FieldLength { expected: mesh.vertex_count(), found: uv.len() });
    }
    let lifted: Vec<Vector3<f64>> = uv.iter().map(|p| Vector3::new(p.x, p.y, 0.0)).collect();
    cotangent_weights(mesh.faces(), &lifted)
}

pub(crate) fn is_zero_area(positions: &[Vector3<f64>], f: [usize; 3]) -> bool {
    let (a, b, c) = (positions[f[0]], positions[f[1]], positions[f[2]]);
    let longest = (b - a).norm_squared().max((c - b).norm_squared()).max((a - c).norm_squared());
    face_cross(positions, f).norm() <= 1e-14 * longest
}

fn cotangent_weights(faces: &[[usize; 3]], positions: &[Vector3<f64>]) -> Result<SparseOperator, MeshError> {
    let n = positions.len();
    let mut entries = Vec::with_capacity(faces.len() * 12);
    for (fi, &f) in faces.iter().enumerate() {
        if is_zero_area(positions, f) {
            return Err(MeshError::ZeroAreaFace(fi));
        }
        let double_area = face_cross(positions, f).norm();
        for k in 0..3 {
            // Corner k is opposite the edge (k+1, k+2).
            let o = positions[f[k]];
            let i = f[(k + 1) % 3];
            let j = f[(k + 2) % 3];
            let cot = (positions[i] - o).dot(&(positions[j] - o)) / double_area;
            let w = 0.5 * cot;
            entries.push((i, j, -w));
            entries.push((j, i, -w));
            entries.push((i, i, w));
            entries.push((j, j, w));
        }
    }
    Ok(SparseOperator::from_triplets(n, entries))
}
