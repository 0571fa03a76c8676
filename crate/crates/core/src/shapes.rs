//! Procedural meshes with known geometry, used as fixtures and oracles.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Vector2, Vector3};

use crate::mesh::TriangleMesh;

pub fn single_triangle() -> TriangleMesh {
    TriangleMesh::new(
        vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)],
        vec![[0, 1, 2]],
    )
    .expect("valid triangle")
}

/// The unit square split along the (0,0)-(1,1) diagonal.
pub fn unit_square_two_triangles() -> TriangleMesh {
    TriangleMesh::new(
        vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(1.0, 1.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
    )
    .expect("valid square")
}

pub fn octahedron() -> TriangleMesh {
    let p = vec![
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(-1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(0.0, -1.0, 0.0),
        Vector3::new(0.0, 0.0, 1.0),
        Vector3::new(0.0, 0.0, -1.0),
    ];
    let f = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    TriangleMesh::new(p, f).expect("valid octahedron")
}

/// Unit sphere by repeated midpoint subdivision of an icosahedron.
/// `levels = 0` is the icosahedron itself (12 vertices).
pub fn icosphere(levels: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut p: Vec<Vector3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..levels {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut m = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                m[k] = *mid.entry(key).or_insert_with(|| {
                    p.push((p[a] + p[b]).normalize());
                    p.len() - 1
                });
            }
            next.push([f[0], m[0], m[2]]);
            next.push([f[1], m[1], m[0]]);
            next.push([f[2], m[2], m[1]]);
            next.push([m[0], m[1], m[2]]);
        }
        faces = next;
    }
    TriangleMesh::new(p, faces).expect("valid icosphere")
}

/// Axis-aligned ellipsoid with semi-axes `(a, b, c)`.
pub fn ellipsoid(a: f64, b: f64, c: f64, levels: usize) -> TriangleMesh {
    let s = icosphere(levels);
    let p = s.positions().iter().map(|p| Vector3::new(a * p.x, b * p.y, c * p.z)).collect();
    s.with_positions(p).expect("same vertex count")
}

/// Number of vertices of [`disk_rings`] with `rings` rings.
pub fn ring_vertex_count(rings: usize) -> usize {
    1 + 3 * rings * (rings + 1)
}

/// Concentric-ring triangulation of the unit disk: a center vertex plus ring
/// `k` of `6k` vertices at radius `k / rings`. Returns planar points and
/// counter-clockwise faces; the last ring is the boundary.
pub fn disk_rings(rings: usize) -> (Vec<Vector2<f64>>, Vec<[usize; 3]>) {
    assert!(rings >= 1);
    let mut pts = vec![Vector2::zeros()];
    let ring_start = |k: usize| if k == 0 { 0 } else { 1 + 3 * (k - 1) * k };
    for k in 1..=rings {
        let r = k as f64 / rings as f64;
        let count = 6 * k;
        for i in 0..count {
            let phi = 2.0 * PI * i as f64 / count as f64;
            pts.push(Vector2::new(r * phi.cos(), r * phi.sin()));
        }
    }
    let mut faces = Vec::new();
    for k in 1..=rings {
        let outer = |i: usize| ring_start(k) + i % (6 * k);
        let inner = |i: usize| if k == 1 { 0 } else { ring_start(k - 1) + i % (6 * (k - 1)) };
        for s in 0..6 {
            for j in 0..k {
                let a = outer(s * k + j);
                let b = outer(s * k + j + 1);
                let c = inner(s * (k - 1) + j);
                faces.push([c, a, b]);
                if j + 1 < k {
                    faces.push([c, b, inner(s * (k - 1) + j + 1)]);
                }
            }
        }
    }
    (pts, faces)
}

/// Flat unit disk in the z = 0 plane.
pub fn unit_disk(rings: usize) -> TriangleMesh {
    graph_surface(rings, |_| 0.0)
}

/// Graph surface `z = height(u, v)` over the unit disk.
pub fn graph_surface(rings: usize, height: impl Fn(Vector2<f64>) -> f64) -> TriangleMesh {
    let (pts, faces) = disk_rings(rings);
    let p = pts.iter().map(|q| Vector3::new(q.x, q.y, height(*q))).collect();
    TriangleMesh::new(p, faces).expect("valid disk")
}

/// A smooth face-like relief: a raised dome with a nose, brow ridge, cheeks
/// and eye sockets, all vanishing at the rim.
pub fn face_relief(q: Vector2<f64>) -> f64 {
    let g = |c: (f64, f64), s: f64| ((-(q.x - c.0).powi(2) - (q.y - c.1).powi(2)) / (2.0 * s * s)).exp();
    let rim = 1.0 - q.norm_squared();
    rim * (0.25 + 0.22 * g((0.0, -0.05), 0.12) + 0.06 * g((0.0, 0.35), 0.25) - 0.07 * g((-0.3, 0.2), 0.1)
        - 0.07 * g((0.3, 0.2), 0.1)
        + 0.05 * g((-0.4, -0.25), 0.18)
        + 0.05 * g((0.4, -0.25), 0.18))
}

pub fn face_like(rings: usize) -> TriangleMesh {
    graph_surface(rings, face_relief)
}

/// Unit upper hemisphere (z ≥ 0) with vertices on rings of equal polar-angle
/// spacing; the equator is the boundary and normals point outward.
pub fn hemisphere(rings: usize) -> TriangleMesh {
    let (pts, faces) = disk_rings(rings);
    let p = pts
        .iter()
        .map(|q| {
            let theta = FRAC_PI_2 * q.norm();
            let phi = q.y.atan2(q.x);
            Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
        })
        .collect();
    TriangleMesh::new(p, faces).expect("valid hemisphere")
}

/// Stereographic disk coordinates of points on the unit upper hemisphere,
/// projecting from the south pole: `(x, y) / (1 + z)`.
pub fn hemisphere_stereographic(p: &Vector3<f64>) -> Vector2<f64> {
    Vector2::new(p.x, p.y) / (1.0 + p.z)
}

/// Inverse of [`hemisphere_stereographic`]: `(2u, 2v, 1 − r²) / (1 + r²)`.
pub fn hemisphere_point(q: &Vector2<f64>) -> Vector3<f64> {
    let r2 = q.norm_squared();
    Vector3::new(2.0 * q.x, 2.0 * q.y, 1.0 - r2) / (1.0 + r2)
}

/// A smooth family of disk-like surfaces sharing the [`disk_rings`]
/// connectivity, where vertex `v` tracks the same material point for every
/// `t`: a shallow dome carries a bump whose center travels on a circle, and
/// material points slide along a swirl that fixes the rim pointwise.
#[derive(Debug, Clone, Copy)]
pub struct BumpFamily {
    /// Swirl angle per unit time at the disk center.
    pub swirl: f64,
    /// Angular speed of the bump center.
    pub speed: f64,
    pub amplitude: f64,
    /// Phase of the bump center at `t = 0`.
    pub phase: f64,
}

impl Default for BumpFamily {
    fn default() -> Self {
        Self { swirl: 0.25, speed: 0.8, amplitude: 0.3, phase: 0.0 }
    }
}

impl BumpFamily {
    pub fn height(&self, q: Vector2<f64>, t: f64) -> f64 {
        let a = self.phase + self.speed * t;
        let c = Vector2::new(0.3 * a.cos(), 0.3 * a.sin());
        let rim = 1.0 - q.norm_squared();
        rim * (0.15 + self.amplitude * (-(q - c).norm_squared() / (2.0 * 0.25 * 0.25)).exp())
    }

    /// Planar position at time `t` of the material point starting at `q`.
    pub fn material(&self, q: Vector2<f64>, t: f64) -> Vector2<f64> {
        let a = self.swirl * t * (1.0 - q.norm_squared());
        Vector2::new(a.cos() * q.x - a.sin() * q.y, a.sin() * q.x + a.cos() * q.y)
    }

    pub fn mesh(&self, rings: usize, t: f64) -> TriangleMesh {
        let (pts, faces) = disk_rings(rings);
        let p = pts
            .iter()
            .map(|q| {
                let x = self.material(*q, t);
                Vector3::new(x.x, x.y, self.height(x, t))
            })
            .collect();
        TriangleMesh::new(p, faces).expect("valid disk")
    }
}

/// Vertices of a [`disk_rings`] mesh spread evenly over a few rings: the
/// center, then `count` vertices on ring `quarter * rings / 4` for each
/// `(quarter, count)`. `count` must not exceed the ring size.
pub fn ring_samples(rings: usize, layout: &[(usize, usize)]) -> Vec<usize> {
    let start = |k: usize| 1 + 3 * (k - 1) * k;
    let mut out = vec![0];
    for &(quarter, count) in layout {
        let k = quarter * rings / 4;
        assert!(k >= 1 && count <= 6 * k, "ring {k} cannot hold {count} samples");
        out.extend((0..count).map(|i| start(k) + i * 6 * k / count));
    }
    out
}

/// Landmark layout used with [`BumpFamily`]: 48 vertices, half of them on
/// the rim so the boundary correspondence is well pinned.
pub const FAMILY_LANDMARKS: [(usize, usize); 4] = [(1, 5), (2, 8), (3, 10), (4, 24)];
