#![allow(dead_code)]

use std::fs;
use std::path::Path;

use conformal_morph::conformal::DiskParameterization;
use conformal_morph::mesh::{save_mesh, TriangleMesh};
use conformal_morph::shapes;
use nalgebra::{DMatrix, DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

/// Flat disk with its identity parameterization.
pub fn flat_disk(rings: usize) -> (TriangleMesh, DiskParameterization) {
    let mesh = shapes::unit_disk(rings);
    let uv: Vec<Vector2<f64>> = mesh.positions().iter().map(|p| p.xy()).collect();
    let param = DiskParameterization::from_image(&mesh, uv).unwrap();
    (mesh, param)
}

/// Unit hemisphere with the analytic stereographic parameterization.
pub fn hemisphere(rings: usize) -> (TriangleMesh, DiskParameterization) {
    let mesh = shapes::hemisphere(rings);
    let uv = mesh.positions().iter().map(shapes::hemisphere_stereographic).collect();
    let param = DiskParameterization::from_image(&mesh, uv).unwrap();
    (mesh, param)
}

/// Dense LU solve, used as an independent oracle for the sparse and banded
/// solvers under test.
pub fn dense_solve(a: DMatrix<f64>, b: DVector<f64>) -> DVector<f64> {
    a.lu().solve(&b).expect("nonsingular oracle system")
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform point in the disk of radius `r`.
pub fn disk_point(rng: &mut impl Rng, r: f64) -> Vector2<f64> {
    loop {
        let p = Vector2::new(rng.gen_range(-r..r), rng.gen_range(-r..r));
        if p.norm() < r {
            return p;
        }
    }
}

/// Landmark CSV pairing vertex `v` of `a` with vertex `v` of `b` for every
/// listed vertex.
pub fn landmark_csv(a: &TriangleMesh, b: &TriangleMesh, vertices: &[usize]) -> String {
    let mut s = String::from("side,index,x,y,z\n");
    for (side, mesh) in [("a", a), ("b", b)] {
        for &v in vertices {
            let p = mesh.positions()[v];
            s += &format!("{side},{v},{},{},{}\n", p.x, p.y, p.z);
        }
    }
    s
}

/// Writes keyframes of `family` at `times` (plus reference surfaces at
/// `references`) into `dir` and returns the configuration JSON, with paths
/// relative to `dir`.
pub fn write_family_project(
    dir: &Path,
    family: &shapes::BumpFamily,
    rings: usize,
    times: &[f64],
    frames: &[f64],
    references: &[f64],
) -> String {
    let meshes: Vec<TriangleMesh> = times.iter().map(|&t| family.mesh(rings, t)).collect();
    let landmarks = shapes::ring_samples(rings, &shapes::FAMILY_LANDMARKS);
    let mut keyframes = Vec::new();
    let mut files = Vec::new();
    for (i, (m, t)) in meshes.iter().zip(times).enumerate() {
        save_mesh(m, &dir.join(format!("key_{i}.obj"))).unwrap();
        keyframes.push(json!({ "mesh": format!("key_{i}.obj"), "time": t }));
        if i + 1 < meshes.len() {
            fs::write(dir.join(format!("landmarks_{i}.csv")), landmark_csv(m, &meshes[i + 1], &landmarks)).unwrap();
            files.push(format!("landmarks_{i}.csv"));
        }
    }
    let refs: Vec<_> = references
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            save_mesh(&family.mesh(rings, t), &dir.join(format!("ref_{i}.obj"))).unwrap();
            json!({ "mesh": format!("ref_{i}.obj"), "time": t })
        })
        .collect();
    json!({
        "keyframes": keyframes,
        "landmarks": files,
        "output": "out",
        "frames": frames,
        "references": refs,
    })
    .to_string()
}

pub fn random_track(seed: u64, knots: usize, channels: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut rng = rng(seed);
    let mut t = 0.0;
    let times = (0..knots)
        .map(|_| {
            t += rng.gen_range(0.3..1.5);
            t
        })
        .collect();
    let values = (0..knots).map(|_| (0..channels).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    (times, values)
}

/// Second derivatives of the natural spline from a dense solve of the full
/// knot system (end rows pin M = 0).
pub fn oracle_second(times: &[f64], y: &[f64]) -> Vec<f64> {
    let k = times.len();
    let mut a = DMatrix::zeros(k, k);
    let mut r = DVector::zeros(k);
    a[(0, 0)] = 1.0;
    a[(k - 1, k - 1)] = 1.0;
    for i in 1..k - 1 {
        let (h0, h1) = (times[i] - times[i - 1], times[i + 1] - times[i]);
        a[(i, i - 1)] = h0 / 6.0;
        a[(i, i)] = (h0 + h1) / 3.0;
        a[(i, i + 1)] = h1 / 6.0;
        r[i] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
    }
    dense_solve(a, r).iter().copied().collect()
}

/// Natural spline evaluated in the classic second-derivative form on piece
/// `i`, valid beyond the piece ends as its polynomial extension.
pub fn oracle_eval(times: &[f64], y: &[f64], m: &[f64], i: usize, t: f64) -> f64 {
    let (t0, t1) = (times[i], times[i + 1]);
    let h = t1 - t0;
    m[i] * (t1 - t).powi(3) / (6.0 * h)
        + m[i + 1] * (t - t0).powi(3) / (6.0 * h)
        + (y[i] / h - m[i] * h / 6.0) * (t1 - t)
        + (y[i + 1] / h - m[i + 1] * h / 6.0) * (t - t0)
}

/// Dense thin-plate design matrix built from scratch:
/// `S_ij = w_j |p_i − c_j|² log |p_i − c_j|` over the `n × n` center grid.
pub fn plate_design(points: &[Vector2<f64>], n: usize, weights: &[f64]) -> DMatrix<f64> {
    let step = 2.0 / (n - 1) as f64;
    DMatrix::from_fn(points.len(), n * n, |i, j| {
        let c = Vector2::new(-1.0 + step * (j % n) as f64, -1.0 + step * (j / n) as f64);
        let r = (points[i] - c).norm();
        if r == 0.0 {
            0.0
        } else {
            weights[j] * r * r * r.ln()
        }
    })
}
