use nalgebra::{Matrix3, Rotation3, Unit, Vector2, Vector3};

use super::qiem::{spherical_conformal_qiem, QiemConfig, QiemReport};
use super::{stereographic_to_plane, ConformalError, DiskParameterization, SphereMap};
use crate::linalg::{Factorization, SparseMatrix};
use crate::mesh::{double_cover_with_mirror, signed_area2, split_boundary_chords, TriangleMesh};

#[derive(Debug, Clone)]
pub struct DiskMapReport {
    pub qiem: QiemReport,
    /// Largest distance of a boundary image from the equator plane before
    /// the cut, after alignment.
    pub equator_deviation: f64,
    /// Largest relative deviation of boundary radii from their mean after
    /// projection, before snapping onto the unit circle.
    pub circle_deviation: f64,
}

/// Tutte embedding of an open mesh: boundary on the unit circle spaced by 3D
/// arc length, interior vertices at the average of their neighbours.
pub fn tutte_disk_map(mesh: &TriangleMesh) -> Result<Vec<Vector2<f64>>, ConformalError> {
    let boundary = mesh.boundary();
    if boundary.is_empty() {
        return Err(ConformalError::InvalidParameter("mesh has no boundary".into()));
    }
    let p = mesh.positions();
    let nb = boundary.len();
    let mut arc = vec![0.0; nb + 1];
    for i in 0..nb {
        arc[i + 1] = arc[i] + (p[boundary[(i + 1) % nb]] - p[boundary[i]]).norm();
    }
    let mut uv = vec![Vector2::zeros(); mesh.vertex_count()];
    for (i, &b) in boundary.iter().enumerate() {
        let t = 2.0 * std::f64::consts::PI * arc[i] / arc[nb];
        uv[b] = Vector2::new(t.cos(), t.sin());
    }

    let is_boundary = mesh.boundary_mask();
    let mut index = vec![usize::MAX; mesh.vertex_count()];
    let interior: Vec<usize> = (0..mesh.vertex_count()).filter(|&v| !is_boundary[v]).collect();
    for (k, &v) in interior.iter().enumerate() {
        index[v] = k;
    }
    if interior.is_empty() {
        return Ok(uv);
    }
    let nbrs = mesh.vertex_neighbors();
    let mut m = SparseMatrix::new(interior.len());
    let mut rhs = vec![vec![0.0; interior.len()]; 2];
    for (k, &v) in interior.iter().enumerate() {
        m.push(k, k, nbrs[v].len() as f64);
        for &w in &nbrs[v] {
            if is_boundary[w] {
                rhs[0][k] += uv[w].x;
                rhs[1][k] += uv[w].y;
            } else {
                m.push(k, index[w], -1.0);
            }
        }
    }
    let sol = Factorization::symmetric(&m)?.solve_columns(&rhs)?;
    for (k, &v) in interior.iter().enumerate() {
        uv[v] = Vector2::new(sol[0][k], sol[1][k]);
    }
    Ok(uv)
}

/// Conformal map of a simply connected open mesh onto the unit disk.
///
/// The mesh is glued to a mirrored copy of itself, mapped conformally onto the
/// sphere, rotated so the boundary lies on the equator with the original copy
/// in the southern hemisphere, and projected stereographically.
pub fn riemann_disk_map(
    mesh: &TriangleMesh,
    config: &QiemConfig,
) -> Result<(DiskParameterization, DiskMapReport), ConformalError> {
    if mesh.is_closed() {
        return Err(ConformalError::Mesh(crate::mesh::MeshError::BoundaryLoops(0)));
    }
    let original_count = mesh.vertex_count();
    let work = split_boundary_chords(mesh)?;
    if work.boundary().len() == work.vertex_count() {
        // Nothing but boundary (a lone triangle): the double cover is flat,
        // and the boundary placement is the whole map.
        let param = DiskParameterization::from_image(mesh, tutte_disk_map(&work)?)?;
        let report = DiskMapReport { qiem: QiemReport::default(), equator_deviation: 0.0, circle_deviation: 0.0 };
        return Ok((param, report));
    }
    let (closed, mirror) = double_cover_with_mirror(&work)?;

    // Start from the Tutte disk lifted onto both hemispheres: the original
    // copy below the equator, the mirror copy above it.
    let tutte = tutte_disk_map(&work)?;
    let mut init = vec![Vector3::zeros(); closed.vertex_count()];
    for (v, q) in tutte.iter().enumerate() {
        let r2 = q.norm_squared();
        init[v] = Vector3::new(2.0 * q.x, 2.0 * q.y, r2 - 1.0) / (1.0 + r2);
        init[mirror[v]] = Vector3::new(2.0 * q.x, 2.0 * q.y, 1.0 - r2) / (1.0 + r2);
    }
    let (sphere, qiem) = spherical_conformal_qiem(&closed, &SphereMap::new(init)?, config)?;
    let image = sphere.image();

    // Plane through the origin best fitting the boundary images.
    let boundary = work.boundary();
    let cov = boundary.iter().fold(Matrix3::zeros(), |acc, &b| acc + image[b] * image[b].transpose());
    let eig = cov.symmetric_eigen();
    let (min_idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("three eigenvalues");
    let mut normal: Vector3<f64> = eig.eigenvectors.column(min_idx).into_owned();
    let original_mean = (0..work.vertex_count())
        .filter(|&v| mirror[v] != v)
        .fold(Vector3::zeros(), |acc, v| acc + image[v]);
    if normal.dot(&original_mean) > 0.0 {
        normal = -normal;
    }
    let rotation = Rotation3::rotation_between(&normal, &Vector3::z())
        .unwrap_or_else(|| Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::x()), std::f64::consts::PI));
    let rotated: Vec<Vector3<f64>> = image[..work.vertex_count()].iter().map(|p| rotation * p).collect();
    let equator_deviation = boundary.iter().map(|&b| rotated[b].z.abs()).fold(0.0, f64::max);
    if equator_deviation > 1e-3 {
        return Err(ConformalError::BoundaryNotSeparable { deviation: equator_deviation });
    }

    let mut uv = rotated.iter().map(stereographic_to_plane).collect::<Result<Vec<_>, _>>()?;
    let mean_radius = boundary.iter().map(|&b| uv[b].norm()).sum::<f64>() / boundary.len() as f64;
    uv.iter_mut().for_each(|q| *q /= mean_radius);
    let circle_deviation = boundary.iter().map(|&b| (uv[b].norm() - 1.0).abs()).fold(0.0, f64::max);
    if circle_deviation > 1e-3 {
        return Err(ConformalError::BoundaryNotSeparable { deviation: circle_deviation });
    }
    for &b in boundary {
        uv[b] = uv[b].normalize();
    }
    uv.truncate(original_count);

    let signed: f64 = mesh.faces().iter().map(|f| signed_area2(&uv[f[0]], &uv[f[1]], &uv[f[2]])).sum();
    if signed < 0.0 {
        uv.iter_mut().for_each(|q| q.y = -q.y);
    }
    // Interior points pushed onto the circle by roundoff stay strictly inside.
    let is_boundary = mesh.boundary_mask();
    for (v, q) in uv.iter_mut().enumerate() {
        if !is_boundary[v] && q.norm() >= 1.0 {
            *q *= (1.0 - 1e-12) / q.norm();
        }
    }
    let param = DiskParameterization::from_image(mesh, uv)?;
    Ok((param, DiskMapReport { qiem, equator_deviation, circle_deviation }))
}
