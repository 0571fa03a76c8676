//! Spherical conformal maps of closed genus-0 meshes and Riemann disk maps of
//! simply connected open meshes.

mod disk;
mod distortion;
mod qiem;

pub use disk::{riemann_disk_map, tutte_disk_map, DiskMapReport};
pub use distortion::{angle_distortion, AngleDistortion};
pub use qiem::{ball_mobius, spherical_conformal_qiem, QiemConfig, QiemReport};

use nalgebra::{Vector2, Vector3};
use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::SolveError;
use crate::mesh::{conformal_factor, signed_area2, MeshError, TriangleMesh};

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("linear solve failed: {0}")]
    Solve(#[from] SolveError),
    #[error("vertex {0} has a zero normal sum")]
    ZeroNormal(usize),
    #[error("point is at the north pole")]
    NorthPole,
    #[error("harmonic energy increased by {increase:e} (relative) at iteration {iteration} after exhausting step halvings")]
    EnergyIncrease { iteration: usize, increase: f64 },
    #[error("{count} folded triangles (first: face {first})")]
    FoldOver { count: usize, first: usize },
    #[error("boundary image is not separable onto the equator (max deviation {deviation:e})")]
    BoundaryNotSeparable { deviation: f64 },
    #[error("vertex {vertex} lies outside the unit disk (|z| = {radius})")]
    OutsideDisk { vertex: usize, radius: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Per-vertex images on the unit sphere, aligned with one closed mesh.
#[derive(Debug, Clone)]
pub struct SphereMap {
    image: Vec<Vector3<f64>>,
}

impl SphereMap {
    /// Projects the given points radially onto the sphere.
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self, ConformalError> {
        let mut image = Vec::with_capacity(points.len());
        for (i, p) in points.into_iter().enumerate() {
            let n = p.norm();
            if !(n > 0.0) || !n.is_finite() {
                return Err(ConformalError::ZeroNormal(i));
            }
            image.push(p / n);
        }
        Ok(Self { image })
    }

    pub fn image(&self) -> &[Vector3<f64>] {
        &self.image
    }

    pub fn into_image(self) -> Vec<Vector3<f64>> {
        self.image
    }

    /// Faces whose spherical orientation disagrees with the majority or that
    /// are degenerate (|det| ≤ 1e-14).
    pub fn folded_faces(&self, mesh: &TriangleMesh) -> Vec<usize> {
        let dets: Vec<f64> = mesh
            .faces()
            .iter()
            .map(|f| self.image[f[0]].dot(&self.image[f[1]].cross(&self.image[f[2]])))
            .collect();
        let sign = dets.iter().sum::<f64>().signum();
        dets.iter().enumerate().filter(|(_, d)| **d * sign <= 1e-14).map(|(i, _)| i).collect()
    }
}

/// Area-weighted vertex normals used as an initial sphere map.
pub fn gauss_map(mesh: &TriangleMesh) -> Result<SphereMap, ConformalError> {
    let mut sums = vec![Vector3::zeros(); mesh.vertex_count()];
    for (fi, f) in mesh.faces().iter().enumerate() {
        let n = mesh.face_normal_scaled(fi);
        for &v in f {
            sums[v] += n;
        }
    }
    let scale = mesh.bounding_diameter().powi(2).max(f64::MIN_POSITIVE);
    if let Some(v) = sums.iter().position(|s| s.norm() <= 1e-14 * scale) {
        return Err(ConformalError::ZeroNormal(v));
    }
    SphereMap::new(sums)
}

/// Stereographic projection from the north pole: `(x, y) / (1 − z)`.
pub fn stereographic_to_plane(p: &Vector3<f64>) -> Result<Vector2<f64>, ConformalError> {
    let d = 1.0 - p.z;
    if d.abs() <= 1e-15 {
        return Err(ConformalError::NorthPole);
    }
    Ok(Vector2::new(p.x / d, p.y / d))
}

/// Inverse of [`stereographic_to_plane`].
pub fn plane_to_sphere(q: &Vector2<f64>) -> Vector3<f64> {
    let r2 = q.norm_squared();
    Vector3::new(2.0 * q.x, 2.0 * q.y, r2 - 1.0) / (1.0 + r2)
}

/// Disk automorphism `z ↦ e^{iθ} (z − a) / (1 − ā z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobiusDisk {
    a: Complex64,
    theta: f64,
}

impl MobiusDisk {
    pub fn new(a: Complex64, theta: f64) -> Result<Self, ConformalError> {
        if !(a.norm() < 1.0) || !theta.is_finite() {
            return Err(ConformalError::InvalidParameter(format!("Möbius center must satisfy |a| < 1, got {a}")));
        }
        Ok(Self { a, theta })
    }

    pub fn identity() -> Self {
        Self { a: Complex64::new(0.0, 0.0), theta: 0.0 }
    }

    pub fn rotation(theta: f64) -> Self {
        Self { a: Complex64::new(0.0, 0.0), theta }
    }

    pub fn a(&self) -> Complex64 {
        self.a
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn apply_complex(&self, z: Complex64) -> Complex64 {
        Complex64::from_polar(1.0, self.theta) * (z - self.a) / (1.0 - self.a.conj() * z)
    }

    pub fn apply(&self, z: &Vector2<f64>) -> Vector2<f64> {
        let w = self.apply_complex(Complex64::new(z.x, z.y));
        Vector2::new(w.re, w.im)
    }

    pub fn inverse(&self) -> Self {
        Self { a: -self.a * Complex64::from_polar(1.0, self.theta), theta: -self.theta }
    }
}

pub(crate) fn to_complex(z: &Vector2<f64>) -> Complex64 {
    Complex64::new(z.x, z.y)
}

/// Planar coordinates in the closed unit disk and conformal factors for every
/// vertex of one mesh.
#[derive(Debug, Clone)]
pub struct DiskParameterization {
    uv: Vec<Vector2<f64>>,
    lambda: Vec<f64>,
}

impl DiskParameterization {
    /// Wraps planar coordinates, computing λ and rejecting fold-overs.
    pub fn from_image(mesh: &TriangleMesh, uv: Vec<Vector2<f64>>) -> Result<Self, ConformalError> {
        let lambda = conformal_factor(mesh, &uv)?.into_inner();
        let param = Self { uv, lambda };
        param.check_orientation(mesh)?;
        Ok(param)
    }

    pub fn uv(&self) -> &[Vector2<f64>] {
        &self.uv
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn len(&self) -> usize {
        self.uv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uv.is_empty()
    }

    /// All parametric triangles must be positively oriented.
    pub fn check_orientation(&self, mesh: &TriangleMesh) -> Result<(), ConformalError> {
        let folded: Vec<usize> = mesh
            .faces()
            .iter()
            .enumerate()
            .filter(|(_, f)| signed_area2(&self.uv[f[0]], &self.uv[f[1]], &self.uv[f[2]]) <= 0.0)
            .map(|(i, _)| i)
            .collect();
        if let Some(&first) = folded.first() {
            return Err(ConformalError::FoldOver { count: folded.len(), first });
        }
        Ok(())
    }

    /// Checks that boundary images lie on the unit circle within `tol` and
    /// interior images inside it.
    pub fn check_disk(&self, mesh: &TriangleMesh, tol: f64) -> Result<(), ConformalError> {
        let is_boundary = mesh.boundary_mask();
        for (v, p) in self.uv.iter().enumerate() {
            let r = p.norm();
            let bad = if is_boundary[v] { (r - 1.0).abs() > tol } else { r >= 1.0 };
            if bad {
                return Err(ConformalError::OutsideDisk { vertex: v, radius: r });
            }
        }
        Ok(())
    }

    /// Post-composes with a disk Möbius transformation, recomputing λ.
    pub fn compose_mobius(&self, mesh: &TriangleMesh, m: &MobiusDisk) -> Result<Self, ConformalError> {
        Self::from_image(mesh, self.uv.iter().map(|z| m.apply(z)).collect())
    }
}
