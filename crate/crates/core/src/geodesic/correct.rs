use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::path::{polyline_length, SurfacePath, SurfacePoint};
use super::GeodesicError;
use crate::mesh::TriangleMesh;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionConfig {
    /// Relative length decrease below which a sweep counts as converged.
    pub tol: f64,
    pub max_iter: usize,
    /// A vertex passage is rerouted when the angle on one side is below
    /// `π − angle_tol`.
    pub angle_tol: f64,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 30, angle_tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct CorrectionReport {
    pub iterations: usize,
    pub converged: bool,
    pub initial_length: f64,
    pub final_length: f64,
    /// Length after each sweep.
    pub lengths: Vec<f64>,
    /// The corrected path passes through a boundary vertex other than its
    /// endpoints.
    pub touches_boundary: bool,
}

fn cross(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Faces crossed between two consecutive vertex passages; consecutive faces
/// share an edge, the first contains the start and the last the end.
type Strip = Vec<usize>;

/// A path through the mesh as vertex passages joined by face strips, each
/// strip holding a path that is straight once the strip is unfolded.
#[derive(Debug, Clone)]
struct Route {
    waypoints: Vec<usize>,
    strips: Vec<Strip>,
}

/// Isometric planar layout of a strip.
struct Unfolding {
    /// Planar corner positions of each face, in face order.
    corners: Vec<[Vector2<f64>; 3]>,
    /// Shared edges as (left id, left point, right id, right point) with
    /// respect to the direction of travel.
    portals: Vec<(usize, Vector2<f64>, usize, Vector2<f64>)>,
    start: Vector2<f64>,
    end: Vector2<f64>,
}

fn corner_index(mesh: &TriangleMesh, face: usize, v: usize) -> Option<usize> {
    mesh.faces()[face].iter().position(|&x| x == v)
}

fn edge_length(mesh: &TriangleMesh, a: usize, b: usize) -> f64 {
    (mesh.positions()[a] - mesh.positions()[b]).norm()
}

/// Directed edge `(u, w)` of `f` whose reverse belongs to `g`.
fn shared_edge(mesh: &TriangleMesh, f: usize, g: usize) -> Option<(usize, usize)> {
    let ff = mesh.faces()[f];
    let gf = mesh.faces()[g];
    (0..3).map(|k| (ff[k], ff[(k + 1) % 3])).find(|&(u, w)| gf.contains(&u) && gf.contains(&w))
}

fn unfold(mesh: &TriangleMesh, strip: &[usize], start: usize, end: usize) -> Unfolding {
    let faces = mesh.faces();
    let mut corners = Vec::with_capacity(strip.len());
    let f0 = faces[strip[0]];
    let l01 = edge_length(mesh, f0[0], f0[1]);
    let p0 = Vector2::zeros();
    let p1 = Vector2::new(l01, 0.0);
    let p2 = apex_left(p0, p1, edge_length(mesh, f0[0], f0[2]), edge_length(mesh, f0[1], f0[2]));
    corners.push([p0, p1, p2]);
    let mut portals = Vec::with_capacity(strip.len().saturating_sub(1));
    for j in 1..strip.len() {
        let (prev, cur) = (strip[j - 1], strip[j]);
        let (u, w) = shared_edge(mesh, prev, cur).expect("consecutive strip faces share an edge");
        let pc = corners[j - 1];
        let pu = pc[corner_index(mesh, prev, u).unwrap()];
        let pw = pc[corner_index(mesh, prev, w).unwrap()];
        portals.push((w, pw, u, pu));
        // The next face runs w → u → r counterclockwise.
        let g = faces[cur];
        let r = g.iter().copied().find(|&x| x != u && x != w).expect("third vertex");
        let pr = apex_left(pw, pu, edge_length(mesh, w, r), edge_length(mesh, u, r));
        let mut c = [Vector2::zeros(); 3];
        for k in 0..3 {
            c[k] = if g[k] == u {
                pu
            } else if g[k] == w {
                pw
            } else {
                pr
            };
        }
        corners.push(c);
    }
    let start_pt = corners[0][corner_index(mesh, strip[0], start).expect("start on first face")];
    let last = strip.len() - 1;
    let end_pt = corners[last][corner_index(mesh, strip[last], end).expect("end on last face")];
    Unfolding { corners, portals, start: start_pt, end: end_pt }
}

/// Third corner of a counterclockwise triangle `(a, b, r)` with `|ar| = da`
/// and `|br| = db`.
fn apex_left(a: Vector2<f64>, b: Vector2<f64>, da: f64, db: f64) -> Vector2<f64> {
    let e = b - a;
    let l = e.norm();
    let t = e / l;
    let x = (da * da - db * db + l * l) / (2.0 * l);
    let h = (da * da - x * x).max(0.0).sqrt();
    a + t * x + Vector2::new(-t.y, t.x) * h
}

/// Shortest path through an unfolded strip. Returns the interior corner
/// points (portal endpoints) the path bends at, as (vertex id, portal index).
fn funnel(unf: &Unfolding) -> Vec<(usize, usize)> {
    const NONE: usize = usize::MAX;
    let mut ports: Vec<(usize, Vector2<f64>, usize, Vector2<f64>)> = Vec::with_capacity(unf.portals.len() + 2);
    ports.push((NONE, unf.start, NONE, unf.start));
    ports.extend_from_slice(&unf.portals);
    ports.push((NONE, unf.end, NONE, unf.end));

    let same = |a: Vector2<f64>, b: Vector2<f64>| (a - b).norm_squared() <= 1e-28;
    let mut bends = Vec::new();
    let mut apex = unf.start;
    let (mut left, mut right) = (unf.start, unf.start);
    let (mut left_i, mut right_i) = (0usize, 0usize);
    let mut i = 1;
    let mut guard = 0usize;
    while i < ports.len() {
        guard += 1;
        if guard > 16 * ports.len() * ports.len() + 64 {
            break;
        }
        let (_, l, _, r) = ports[i];
        // Tighten the right side.
        if cross(right - apex, r - apex) >= 0.0 {
            if same(apex, right) || cross(left - apex, r - apex) < 0.0 {
                right = r;
                right_i = i;
            } else {
                apex = left;
                if ports[left_i].0 != NONE {
                    bends.push((ports[left_i].0, left_i - 1));
                }
                let k = left_i;
                left = apex;
                right = apex;
                left_i = k;
                right_i = k;
                i = k + 1;
                continue;
            }
        }
        // Tighten the left side.
        if cross(left - apex, l - apex) <= 0.0 {
            if same(apex, left) || cross(right - apex, l - apex) > 0.0 {
                left = l;
                left_i = i;
            } else {
                apex = right;
                if ports[right_i].2 != NONE {
                    bends.push((ports[right_i].2, right_i - 1));
                }
                let k = right_i;
                left = apex;
                right = apex;
                left_i = k;
                right_i = k;
                i = k + 1;
                continue;
            }
        }
        i += 1;
    }
    bends
}

/// Drops leading faces while the next one also holds `start`, and trailing
/// faces while the previous one also holds `end`.
fn trim(mesh: &TriangleMesh, mut strip: Strip, start: usize, end: usize) -> Strip {
    let faces = mesh.faces();
    let mut cut = 0;
    while cut + 1 < strip.len() && faces[strip[cut + 1]].contains(&start) {
        cut += 1;
    }
    strip.drain(..cut);
    while strip.len() > 1 && faces[strip[strip.len() - 2]].contains(&end) {
        strip.pop();
    }
    strip
}

/// Straightens one strip, splitting it at the vertices the shortest path
/// bends around.
fn straighten(mesh: &TriangleMesh, start: usize, end: usize, strip: Strip) -> (Vec<usize>, Vec<Strip>) {
    let strip = trim(mesh, strip, start, end);
    let unf = unfold(mesh, &strip, start, end);
    let bends = funnel(&unf);
    let mut waypoints = Vec::with_capacity(bends.len());
    let mut strips = Vec::with_capacity(bends.len() + 1);
    let mut from_face = 0;
    let mut from_vertex = start;
    for &(v, portal) in &bends {
        if v == from_vertex || v == end {
            continue;
        }
        let piece = strip[from_face..=portal].to_vec();
        strips.push(trim(mesh, piece, from_vertex, v));
        waypoints.push(v);
        // Resume after the last consecutive portal touching v.
        let mut next = portal + 1;
        while next < unf.portals.len() && (unf.portals[next].0 == v || unf.portals[next].2 == v) {
            next += 1;
        }
        from_face = next;
        from_vertex = v;
    }
    let piece = strip[from_face.min(strip.len() - 1)..].to_vec();
    strips.push(trim(mesh, piece, from_vertex, end));
    (waypoints, strips)
}

impl Route {
    fn from_path(mesh: &TriangleMesh, path: &SurfacePath) -> Result<Self, GeodesicError> {
        let pts = &path.points;
        let first = pts.first().and_then(|p| p.vertex(mesh)).ok_or(GeodesicError::EndpointNotVertex)?;
        let last = pts.last().and_then(|p| p.vertex(mesh)).ok_or(GeodesicError::EndpointNotVertex)?;
        let mut waypoints = vec![first];
        let mut strips = Vec::new();
        let mut current: Strip = vec![pts[0].face];
        for p in &pts[1..] {
            let prev = *current.last().unwrap();
            if prev != p.face {
                if shared_edge(mesh, prev, p.face).is_some() {
                    current.push(p.face);
                } else {
                    // Right after a vertex passage the next piece may lie in
                    // a face meeting the previous one only at that vertex.
                    current = vec![p.face];
                }
            }
            if let Some(v) = p.vertex(mesh) {
                if v != *waypoints.last().unwrap() {
                    let s = std::mem::replace(&mut current, vec![p.face]);
                    strips.push(s);
                    waypoints.push(v);
                }
            }
        }
        if *waypoints.last().unwrap() != last || strips.is_empty() {
            return Err(GeodesicError::EndpointNotVertex);
        }
        // Every strip must hold its end vertices.
        for (i, s) in strips.iter_mut().enumerate() {
            let (a, b) = (waypoints[i], waypoints[i + 1]);
            let faces = mesh.faces();
            if !faces[s[0]].contains(&a) {
                let f = *mesh.vertex_faces(a).iter().find(|&&f| shared_edge(mesh, f, s[0]).is_some()).ok_or(GeodesicError::BrokenPath)?;
                s.insert(0, f);
            }
            if !faces[*s.last().unwrap()].contains(&b) {
                let l = *s.last().unwrap();
                let f = *mesh.vertex_faces(b).iter().find(|&&f| shared_edge(mesh, l, f).is_some()).ok_or(GeodesicError::BrokenPath)?;
                s.push(f);
            }
        }
        Ok(Self { waypoints, strips })
    }

    fn straighten_all(&mut self, mesh: &TriangleMesh) {
        let mut waypoints = vec![self.waypoints[0]];
        let mut strips = Vec::with_capacity(self.strips.len());
        for (i, s) in std::mem::take(&mut self.strips).into_iter().enumerate() {
            let (w, st) = straighten(mesh, self.waypoints[i], self.waypoints[i + 1], s);
            waypoints.extend(w);
            strips.extend(st);
            waypoints.push(self.waypoints[i + 1]);
        }
        self.waypoints = waypoints;
        self.strips = strips;
    }

    /// Path directions leaving each end of straight strip `i`, with the
    /// planar layouts of its first and last faces.
    fn end_directions(&self, mesh: &TriangleMesh, i: usize) -> (Vector2<f64>, [Vector2<f64>; 3], Vector2<f64>, [Vector2<f64>; 3]) {
        let (a, b) = (self.waypoints[i], self.waypoints[i + 1]);
        let unf = unfold(mesh, &self.strips[i], a, b);
        let last = unf.corners.len() - 1;
        (unf.end - unf.start, unf.corners[0], unf.start - unf.end, unf.corners[last])
    }

    fn points(&self, mesh: &TriangleMesh) -> Vec<SurfacePoint> {
        let mut out = Vec::new();
        for (i, strip) in self.strips.iter().enumerate() {
            let (a, b) = (self.waypoints[i], self.waypoints[i + 1]);
            let unf = unfold(mesh, strip, a, b);
            if i == 0 {
                out.push(SurfacePoint::at_vertex(mesh, strip[0], a));
            }
            let d = unf.end - unf.start;
            for (j, &(w, pw, u, pu)) in unf.portals.iter().enumerate() {
                let e = pw - pu;
                let denom = cross(d, e);
                let s = if denom.abs() > 0.0 { (cross(pu - unf.start, d) / denom).clamp(0.0, 1.0) } else { 0.5 };
                // Point (1 − s) u + s w on the portal, recorded in the face
                // being left.
                if s == 0.0 {
                    out.push(SurfacePoint::at_vertex(mesh, strip[j], u));
                } else if s == 1.0 {
                    out.push(SurfacePoint::at_vertex(mesh, strip[j], w));
                } else {
                    out.push(SurfacePoint::on_edge(mesh, strip[j], u, w, s));
                }
            }
            out.push(SurfacePoint::at_vertex(mesh, *strip.last().unwrap(), b));
        }
        out
    }

    fn length(&self, mesh: &TriangleMesh) -> f64 {
        (0..self.strips.len())
            .map(|i| {
                let unf = unfold(mesh, &self.strips[i], self.waypoints[i], self.waypoints[i + 1]);
                (unf.end - unf.start).norm()
            })
            .sum()
    }
}

/// Angle of direction `dir` inside the corner of `face` at `v`, measured
/// counterclockwise from the edge towards the next corner.
fn angle_in_corner(mesh: &TriangleMesh, face: usize, v: usize, corners: &[Vector2<f64>; 3], dir: Vector2<f64>) -> f64 {
    let k = corner_index(mesh, face, v).unwrap();
    let e1 = corners[(k + 1) % 3] - corners[k];
    let e2 = corners[(k + 2) % 3] - corners[k];
    let total = corner_angle(e1, e2);
    cross(e1, dir).atan2(e1.dot(&dir)).clamp(0.0, total)
}

fn corner_angle(e1: Vector2<f64>, e2: Vector2<f64>) -> f64 {
    cross(e1, e2).atan2(e1.dot(&e2)).abs()
}

fn face_corner_angle(mesh: &TriangleMesh, face: usize, v: usize) -> f64 {
    let f = mesh.faces()[face];
    let k = corner_index(mesh, face, v).unwrap();
    let p = mesh.positions();
    let e1 = p[f[(k + 1) % 3]] - p[v];
    let e2 = p[f[(k + 2) % 3]] - p[v];
    e1.cross(&e2).norm().atan2(e1.dot(&e2))
}

/// Walks around `v` from `from` to `to`, counterclockwise when `ccw`.
/// Returns the faces visited (both ends included), or `None` when the walk
/// hits the boundary first.
fn fan(mesh: &TriangleMesh, v: usize, from: usize, to: usize, ccw: bool) -> Option<Vec<usize>> {
    let mut out = vec![from];
    let mut cur = from;
    let limit = mesh.vertex_faces(v).len() + 1;
    while cur != to {
        let k = corner_index(mesh, cur, v).unwrap();
        let edge = if ccw { (k + 2) % 3 } else { k };
        cur = mesh.face_adjacency()[cur][edge]?;
        out.push(cur);
        if out.len() > limit {
            return None;
        }
    }
    Some(out)
}

/// Side angles of the path at waypoint `i` and the matching fans, as
/// (counterclockwise side, clockwise side). An open side is `None`.
fn side_angles(route: &Route, mesh: &TriangleMesh, i: usize) -> [Option<(f64, Vec<usize>)>; 2] {
    let v = route.waypoints[i];
    let (_, _, back, end_corners) = route.end_directions(mesh, i - 1);
    let (fwd, start_corners, _, _) = route.end_directions(mesh, i);
    let f_in = *route.strips[i - 1].last().unwrap();
    let f_out = route.strips[i][0];
    let phi_in = angle_in_corner(mesh, f_in, v, &end_corners, back);
    let phi_out = angle_in_corner(mesh, f_out, v, &start_corners, fwd);
    let c_in = face_corner_angle(mesh, f_in, v);
    let c_out = face_corner_angle(mesh, f_out, v);

    let mut result: [Option<(f64, Vec<usize>)>; 2] = [None, None];
    for (slot, ccw) in [(0, true), (1, false)] {
        if f_in == f_out {
            let direct = if ccw { phi_out - phi_in } else { phi_in - phi_out };
            if direct >= 0.0 {
                result[slot] = Some((direct, vec![f_in]));
                continue;
            }
            // Otherwise the side wraps all the way around the vertex.
            let Some(first) = step(mesh, v, f_in, ccw) else { continue };
            let Some(mut faces) = fan(mesh, v, first, f_out, ccw) else { continue };
            let inner: f64 = faces[..faces.len() - 1].iter().map(|&f| face_corner_angle(mesh, f, v)).sum();
            let angle = if ccw { (c_in - phi_in) + inner + phi_out } else { phi_in + inner + (c_out - phi_out) };
            faces.insert(0, f_in);
            result[slot] = Some((angle, faces));
            continue;
        }
        let Some(faces) = fan(mesh, v, f_in, f_out, ccw) else { continue };
        let inner: f64 = faces[1..faces.len() - 1].iter().map(|&f| face_corner_angle(mesh, f, v)).sum();
        let angle = if ccw { (c_in - phi_in) + inner + phi_out } else { phi_in + inner + (c_out - phi_out) };
        result[slot] = Some((angle, faces));
    }
    result
}

fn step(mesh: &TriangleMesh, v: usize, face: usize, ccw: bool) -> Option<usize> {
    let k = corner_index(mesh, face, v).unwrap();
    mesh.face_adjacency()[face][if ccw { (k + 2) % 3 } else { k }]
}

/// Shortens a surface path between two vertices towards a geodesic by
/// unfolding the faces it crosses and rerouting vertex passages through the
/// side whose angle is below π.
pub fn correct_path(
    mesh: &TriangleMesh,
    path: &SurfacePath,
    config: &CorrectionConfig,
) -> Result<(SurfacePath, CorrectionReport), GeodesicError> {
    let initial_length = path.length;
    let mut route = Route::from_path(mesh, path)?;
    let boundary = mesh.boundary_mask();
    let mut lengths = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut current = initial_length;

    for _ in 0..config.max_iter {
        route.straighten_all(mesh);
        let mut merges = 0usize;
        let mut i = 1;
        let budget = 8 * mesh.face_count() + 16;
        while i + 1 < route.waypoints.len() && merges < budget {
            let sides = side_angles(&route, mesh, i);
            let limit = std::f64::consts::PI - config.angle_tol;
            let pick = sides
                .into_iter()
                .flatten()
                .filter(|(a, _)| *a < limit)
                .min_by(|a, b| a.0.total_cmp(&b.0));
            let Some((_, fan_faces)) = pick else {
                i += 1;
                continue;
            };
            let mut merged = route.strips[i - 1].clone();
            merged.extend_from_slice(&fan_faces[1..]);
            merged.extend_from_slice(&route.strips[i][1..]);
            let (a, b) = (route.waypoints[i - 1], route.waypoints[i + 1]);
            let (w, st) = straighten(mesh, a, b, merged);
            route.waypoints.splice(i..=i, w);
            route.strips.splice(i - 1..=i, st);
            merges += 1;
        }
        let new_len = route.length(mesh);
        lengths.push(new_len);
        let decrease = current - new_len;
        let changed = merges > 0 || decrease > config.tol * current.max(f64::MIN_POSITIVE);
        if changed {
            iterations += 1;
        }
        current = new_len;
        if merges == 0 || decrease <= config.tol * current {
            converged = true;
            break;
        }
    }

    let points = route.points(mesh);
    let corrected = SurfacePath::new(mesh, points);
    let touches_boundary = route.waypoints[1..route.waypoints.len() - 1].iter().any(|&v| boundary[v]);
    if corrected.length > initial_length {
        // Only rounding can make the straightened path longer.
        let report = CorrectionReport {
            iterations: 0,
            converged,
            initial_length,
            final_length: initial_length,
            lengths,
            touches_boundary,
        };
        return Ok((path.clone(), report));
    }
    debug_assert!((polyline_length(mesh, &corrected.points) - corrected.length).abs() < 1e-12);
    let report = CorrectionReport {
        iterations,
        converged,
        initial_length,
        final_length: corrected.length,
        lengths,
        touches_boundary,
    };
    Ok((corrected, report))
}
