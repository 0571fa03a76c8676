use nalgebra::{Vector2, Vector3};

use super::GeodesicError;
use crate::conformal::DiskParameterization;
use crate::mesh::TriangleMesh;

/// A point on the surface: a face and barycentric coordinates in it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub face: usize,
    pub bary: [f64; 3],
}

impl SurfacePoint {
    pub fn at_vertex(mesh: &TriangleMesh, face: usize, vertex: usize) -> Self {
        let k = mesh.faces()[face].iter().position(|&v| v == vertex).expect("vertex of face");
        let mut bary = [0.0; 3];
        bary[k] = 1.0;
        Self { face, bary }
    }

    /// Point on edge `(u, w)` of `face` at `(1 − s) u + s w`.
    pub fn on_edge(mesh: &TriangleMesh, face: usize, u: usize, w: usize, s: f64) -> Self {
        let f = mesh.faces()[face];
        let mut bary = [0.0; 3];
        bary[f.iter().position(|&v| v == u).expect("u in face")] = 1.0 - s;
        bary[f.iter().position(|&v| v == w).expect("w in face")] = s;
        Self { face, bary }
    }

    pub fn position(&self, mesh: &TriangleMesh) -> Vector3<f64> {
        let f = mesh.faces()[self.face];
        let p = mesh.positions();
        p[f[0]] * self.bary[0] + p[f[1]] * self.bary[1] + p[f[2]] * self.bary[2]
    }

    pub fn disk_position(&self, mesh: &TriangleMesh, param: &DiskParameterization) -> Vector2<f64> {
        let f = mesh.faces()[self.face];
        let uv = param.uv();
        uv[f[0]] * self.bary[0] + uv[f[1]] * self.bary[1] + uv[f[2]] * self.bary[2]
    }

    /// The mesh vertex this point sits on, if any.
    pub fn vertex(&self, mesh: &TriangleMesh) -> Option<usize> {
        self.bary.iter().position(|&b| b == 1.0).map(|k| mesh.faces()[self.face][k])
    }
}

/// Polyline on the surface whose consecutive points share a face (each
/// piece is straight inside one triangle).
#[derive(Debug, Clone)]
pub struct SurfacePath {
    pub points: Vec<SurfacePoint>,
    pub length: f64,
}

impl SurfacePath {
    pub fn new(mesh: &TriangleMesh, points: Vec<SurfacePoint>) -> Self {
        let length = polyline_length(mesh, &points);
        Self { points, length }
    }

    pub fn positions(&self, mesh: &TriangleMesh) -> Vec<Vector3<f64>> {
        self.points.iter().map(|p| p.position(mesh)).collect()
    }

    pub fn disk_positions(&self, mesh: &TriangleMesh, param: &DiskParameterization) -> Vec<Vector2<f64>> {
        self.points.iter().map(|p| p.disk_position(mesh, param)).collect()
    }
}

pub(crate) fn polyline_length(mesh: &TriangleMesh, points: &[SurfacePoint]) -> f64 {
    points.windows(2).map(|w| (w[1].position(mesh) - w[0].position(mesh)).norm()).sum()
}

fn cross(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

enum WalkState {
    /// At a vertex; the previous piece (if any) lay in this face.
    Vertex(usize),
    /// Just crossed into `face` through the edge `(u, w)`.
    Edge { face: usize, u: usize, w: usize },
}

/// Lifts the straight disk segment between two vertices to the surface by
/// walking it through the parametric triangulation.
pub fn lift_segment(
    mesh: &TriangleMesh,
    param: &DiskParameterization,
    from: usize,
    to: usize,
) -> Result<SurfacePath, GeodesicError> {
    let uv = param.uv();
    let start = uv[from];
    let d = uv[to] - start;
    let scale = d.norm();
    if from == to || scale <= 1e-14 {
        return Err(GeodesicError::CoincidentFeatures(from, to));
    }
    let faces = mesh.faces();
    let eps = 1e-12 * scale;

    let mut points: Vec<SurfacePoint> = Vec::new();
    let mut state = WalkState::Vertex(from);
    let max_steps = 4 * mesh.face_count() + 8;
    for _ in 0..max_steps {
        match state {
            WalkState::Vertex(v) => {
                let mut chosen = None;
                for &fi in mesh.vertex_faces(v) {
                    let f = faces[fi];
                    let k = f.iter().position(|&x| x == v).expect("v in face");
                    let (p, q) = (f[(k + 1) % 3], f[(k + 2) % 3]);
                    let (ep, eq) = (uv[p] - uv[v], uv[q] - uv[v]);
                    let c1 = cross(ep, d) / ep.norm();
                    let c2 = cross(d, eq) / eq.norm();
                    if c1 >= -eps && c2 >= -eps {
                        let margin = c1.min(c2);
                        if chosen.as_ref().is_none_or(|c: &(usize, usize, usize, f64, f64, f64)| margin > c.5.min(c.4)) {
                            chosen = Some((fi, p, q, c1, c2, margin));
                        }
                    }
                }
                let Some((fi, p, q, c1, c2, _)) = chosen else {
                    return Err(GeodesicError::SegmentLeavesDomain { from, to });
                };
                if points.is_empty() {
                    points.push(SurfacePoint::at_vertex(mesh, fi, v));
                }
                // Along an edge straight to a neighbour.
                if c1.abs() <= eps && (uv[p] - uv[v]).dot(&d) > 0.0 {
                    points.push(SurfacePoint::at_vertex(mesh, fi, p));
                    if p == to {
                        break;
                    }
                    state = WalkState::Vertex(p);
                    continue;
                }
                if c2.abs() <= eps && (uv[q] - uv[v]).dot(&d) > 0.0 {
                    points.push(SurfacePoint::at_vertex(mesh, fi, q));
                    if q == to {
                        break;
                    }
                    state = WalkState::Vertex(q);
                    continue;
                }
                state = exit_through(mesh, uv, fi, p, q, start, d, &mut points, (from, to))?;
                if let WalkState::Vertex(x) = state {
                    if x == to {
                        break;
                    }
                }
            }
            WalkState::Edge { face, u, w } => {
                let f = faces[face];
                let c = f.iter().copied().find(|&x| x != u && x != w).expect("third vertex");
                let o = cross(d, uv[c] - start);
                let x = if o.abs() <= eps * (uv[c] - start).norm().max(1.0) {
                    points.push(SurfacePoint::at_vertex(mesh, face, c));
                    WalkState::Vertex(c)
                } else {
                    let (a, b) = exit_edge(u, w, c, uv, start, d);
                    exit_through(mesh, uv, face, a, b, start, d, &mut points, (from, to))?
                };
                if let WalkState::Vertex(v) = x {
                    if v == to {
                        break;
                    }
                }
                state = x;
            }
        }
        if points.len() > max_steps {
            break;
        }
    }
    match points.last().and_then(|p| p.vertex(mesh)) {
        Some(v) if v == to => Ok(SurfacePath::new(mesh, points)),
        _ => Err(GeodesicError::SegmentLeavesDomain { from, to }),
    }
}

/// Of the two edges `(c, u)` and `(c, w)` of a face entered through `(u, w)`,
/// returns the endpoints of the one the ray leaves through.
fn exit_edge(
    u: usize,
    w: usize,
    c: usize,
    uv: &[Vector2<f64>],
    start: Vector2<f64>,
    d: Vector2<f64>,
) -> (usize, usize) {
    // The ray separates u from w; c is on one side, so the exit edge joins c
    // with whichever of u, w lies on the other side.
    let side_c = cross(d, uv[c] - start);
    let side_u = cross(d, uv[u] - start);
    if side_u * side_c < 0.0 {
        (u, c)
    } else {
        (w, c)
    }
}

/// Crosses from `face` through its edge `(a, b)` along the ray, appending the
/// crossing point.
#[allow(clippy::too_many_arguments)]
fn exit_through(
    mesh: &TriangleMesh,
    uv: &[Vector2<f64>],
    face: usize,
    a: usize,
    b: usize,
    start: Vector2<f64>,
    d: Vector2<f64>,
    points: &mut Vec<SurfacePoint>,
    (from, to): (usize, usize),
) -> Result<WalkState, GeodesicError> {
    let e = uv[b] - uv[a];
    let denom = cross(d, e);
    if denom.abs() <= 1e-300 {
        return Err(GeodesicError::SegmentLeavesDomain { from, to });
    }
    // start + t d = a + s e
    let s = cross(uv[a] - start, d) / denom;
    let t = cross(uv[a] - start, e) / denom;
    let eps_s = 1e-12;
    if t > 1.0 + 1e-12 {
        // The target lies before this edge: it must be a vertex of the face.
        return Err(GeodesicError::SegmentLeavesDomain { from, to });
    }
    if s <= eps_s {
        points.push(SurfacePoint::at_vertex(mesh, face, a));
        return Ok(WalkState::Vertex(a));
    }
    if s >= 1.0 - eps_s {
        points.push(SurfacePoint::at_vertex(mesh, face, b));
        return Ok(WalkState::Vertex(b));
    }
    points.push(SurfacePoint::on_edge(mesh, face, a, b, s));
    let f = mesh.faces()[face];
    let k = (0..3)
        .find(|&k| {
            let (x, y) = (f[k], f[(k + 1) % 3]);
            (x == a && y == b) || (x == b && y == a)
        })
        .expect("edge of face");
    match mesh.face_adjacency()[face][k] {
        Some(g) => Ok(WalkState::Edge { face: g, u: a, w: b }),
        None => Err(GeodesicError::SegmentLeavesDomain { from, to }),
    }
}
