use nalgebra::Vector2;

use super::RegistrationError;
use crate::mesh::{signed_area2, TriangleMesh};

/// Containing triangle and normalized barycentric coordinates of a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarycentricLocation {
    pub face: usize,
    pub coords: [f64; 3],
}

impl BarycentricLocation {
    /// Coordinate-weighted combination of per-vertex values.
    pub fn interpolate<T>(&self, faces: &[[usize; 3]], values: &[T]) -> T
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        let f = faces[self.face];
        values[f[0]] * self.coords[0] + values[f[1]] * self.coords[1] + values[f[2]] * self.coords[2]
    }
}

/// Normalized barycentric coordinates of `x` in triangle `(a, b, c)`: each
/// coordinate is the doubled area of the opposite sub-triangle over the
/// doubled area of the whole.
pub fn barycentric(x: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>) -> [f64; 3] {
    let total = signed_area2(a, b, c);
    [signed_area2(x, b, c) / total, signed_area2(a, x, c) / total, signed_area2(a, b, x) / total]
}

/// Uniform-grid point locator over a planar triangulation.
#[derive(Debug, Clone)]
pub struct PointLocator {
    points: Vec<Vector2<f64>>,
    faces: Vec<[usize; 3]>,
    lo: Vector2<f64>,
    cell: f64,
    cols: usize,
    rows: usize,
    cells: Vec<Vec<usize>>,
    /// Faces with at least one boundary edge, searched when a point lies
    /// outside the triangulation.
    rim_faces: Vec<usize>,
}

const INSIDE_EPS: f64 = 1e-12;

impl PointLocator {
    pub fn new(mesh: &TriangleMesh, points: &[Vector2<f64>]) -> Self {
        Self::from_parts(points.to_vec(), mesh.faces().to_vec(), mesh.face_adjacency())
    }

    fn from_parts(points: Vec<Vector2<f64>>, faces: Vec<[usize; 3]>, adjacency: &[[Option<usize>; 3]]) -> Self {
        let mut lo = Vector2::repeat(f64::INFINITY);
        let mut hi = Vector2::repeat(f64::NEG_INFINITY);
        for p in &points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let side = ((faces.len() as f64).sqrt().ceil() as usize).max(1);
        let extent = (hi - lo).max().max(1e-12);
        let cell = extent / side as f64 * (1.0 + 1e-9);
        let cols = ((hi.x - lo.x) / cell).floor() as usize + 1;
        let rows = ((hi.y - lo.y) / cell).floor() as usize + 1;
        let mut cells = vec![Vec::new(); cols * rows];
        for (fi, f) in faces.iter().enumerate() {
            let mut flo = Vector2::repeat(f64::INFINITY);
            let mut fhi = Vector2::repeat(f64::NEG_INFINITY);
            for &v in f {
                flo = flo.inf(&points[v]);
                fhi = fhi.sup(&points[v]);
            }
            let (c0, r0) = Self::cell_of(lo, cell, cols, rows, &flo);
            let (c1, r1) = Self::cell_of(lo, cell, cols, rows, &fhi);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    cells[r * cols + c].push(fi);
                }
            }
        }
        let rim_faces = adjacency.iter().enumerate().filter(|(_, a)| a.iter().any(Option::is_none)).map(|(i, _)| i).collect();
        Self { points, faces, lo, cell, cols, rows, cells, rim_faces }
    }

    fn cell_of(lo: Vector2<f64>, cell: f64, cols: usize, rows: usize, x: &Vector2<f64>) -> (usize, usize) {
        let c = ((x.x - lo.x) / cell).floor().clamp(0.0, (cols - 1) as f64) as usize;
        let r = ((x.y - lo.y) / cell).floor().clamp(0.0, (rows - 1) as f64) as usize;
        (c, r)
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn points(&self) -> &[Vector2<f64>] {
        &self.points
    }

    fn bary(&self, face: usize, x: &Vector2<f64>) -> [f64; 3] {
        let f = self.faces[face];
        barycentric(x, &self.points[f[0]], &self.points[f[1]], &self.points[f[2]])
    }

    /// Triangle containing `x`; ties on shared edges go to the lowest face
    /// index. Returns `None` when no triangle contains the point.
    pub fn find(&self, x: &Vector2<f64>) -> Option<BarycentricLocation> {
        let (c, r) = Self::cell_of(self.lo, self.cell, self.cols, self.rows, x);
        let mut best: Option<BarycentricLocation> = None;
        for &fi in &self.cells[r * self.cols + c] {
            if best.is_some_and(|b| b.face < fi) {
                continue;
            }
            let coords = self.bary(fi, x);
            if coords.iter().all(|&a| a >= -INSIDE_EPS) {
                best = Some(BarycentricLocation { face: fi, coords: clamp_coords(coords) });
            }
        }
        best
    }

    /// Like [`find`](Self::find), but a point outside the triangulation and
    /// within `tol` of it is projected onto the nearest boundary edge.
    pub fn locate(&self, x: &Vector2<f64>, tol: f64) -> Result<BarycentricLocation, RegistrationError> {
        if let Some(loc) = self.find(x) {
            return Ok(loc);
        }
        let (loc, dist) = self.nearest_on_rim(x);
        if dist <= tol {
            Ok(loc)
        } else {
            Err(RegistrationError::OutsideDomain { x: x.x, y: x.y, distance: dist })
        }
    }

    /// Locates points of the closed unit disk over a triangulation of a
    /// polygon inscribed in the unit circle. Points in the gap between the
    /// polygon and the circle are projected onto the polygon; points farther
    /// than 1e-6 outside the circle are rejected.
    pub fn locate_in_disk(&self, x: &Vector2<f64>) -> Result<BarycentricLocation, RegistrationError> {
        if let Some(loc) = self.find(x) {
            return Ok(loc);
        }
        let (loc, dist) = self.nearest_on_rim(x);
        if x.norm() <= 1.0 + 1e-6 {
            Ok(loc)
        } else {
            Err(RegistrationError::OutsideDomain { x: x.x, y: x.y, distance: dist })
        }
    }

    fn nearest_on_rim(&self, x: &Vector2<f64>) -> (BarycentricLocation, f64) {
        let mut best: Option<(BarycentricLocation, f64)> = None;
        for &fi in &self.rim_faces {
            let f = self.faces[fi];
            for k in 0..3 {
                let (a, b) = (self.points[f[k]], self.points[f[(k + 1) % 3]]);
                let ab = b - a;
                let t = ((x - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
                let p = a + ab * t;
                let d = (x - p).norm();
                if best.as_ref().is_none_or(|(_, bd)| d < *bd) {
                    let mut coords = [0.0; 3];
                    coords[k] = 1.0 - t;
                    coords[(k + 1) % 3] = t;
                    best = Some((BarycentricLocation { face: fi, coords }, d));
                }
            }
        }
        best.expect("triangulation has boundary faces")
    }
}

fn clamp_coords(c: [f64; 3]) -> [f64; 3] {
    let c = c.map(|a| a.max(0.0));
    let s = c[0] + c[1] + c[2];
    c.map(|a| a / s)
}
