use nalgebra::{Vector2, Vector3};

use super::DiskParameterization;
use crate::mesh::TriangleMesh;

/// Histogram of per-corner angle differences between the surface and its
/// parameterization, in degrees.
#[derive(Debug, Clone)]
pub struct AngleDistortion {
    /// Bin edges; bin `i` spans `[edges[i], edges[i + 1])`, the last bin is
    /// closed.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub p95: f64,
    pub max: f64,
}

fn corner_angles3(a: Vector3<f64>, b: Vector3<f64>, c: Vector3<f64>) -> [f64; 3] {
    let ang = |o: Vector3<f64>, p: Vector3<f64>, q: Vector3<f64>| (p - o).angle(&(q - o));
    [ang(a, b, c), ang(b, c, a), ang(c, a, b)]
}

fn corner_angles2(a: Vector2<f64>, b: Vector2<f64>, c: Vector2<f64>) -> [f64; 3] {
    let ang = |o: Vector2<f64>, p: Vector2<f64>, q: Vector2<f64>| (p - o).angle(&(q - o));
    [ang(a, b, c), ang(b, c, a), ang(c, a, b)]
}

/// Per-corner |angle₃D − angle₂D| statistics. Bins are one degree wide up to
/// 30°, followed by a single [30°, 180°] bin.
pub fn angle_distortion(mesh: &TriangleMesh, param: &DiskParameterization) -> AngleDistortion {
    let p = mesh.positions();
    let uv = param.uv();
    let mut values = Vec::with_capacity(3 * mesh.face_count());
    for f in mesh.faces() {
        let a3 = corner_angles3(p[f[0]], p[f[1]], p[f[2]]);
        let a2 = corner_angles2(uv[f[0]], uv[f[1]], uv[f[2]]);
        for k in 0..3 {
            values.push((a3[k] - a2[k]).abs().to_degrees());
        }
    }
    let mut edges: Vec<f64> = (0..=30).map(f64::from).collect();
    edges.push(180.0);
    let mut counts = vec![0usize; edges.len() - 1];
    for &v in &values {
        let bin = if v >= 30.0 { counts.len() - 1 } else { v.floor() as usize };
        counts[bin] += 1;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut sorted = values.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    let rank = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    AngleDistortion { edges, counts, mean, p95: sorted[rank - 1], max: *sorted.last().expect("non-empty") }
}
