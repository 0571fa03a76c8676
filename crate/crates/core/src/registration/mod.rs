//! Piecewise-linear registration of one parameterized surface onto another
//! through a feature-constrained partition of the disk.

mod locate;

pub use locate::{barycentric, BarycentricLocation, PointLocator};

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use crate::conformal::{DiskParameterization, MobiusDisk};
use crate::geodesic::{GeodesicFrame, PartitionVertex};
use crate::matching::{DiskMatching, LandmarkSet, MatchingError};
use crate::mesh::{mean_curvature, signed_area2, MeshError, TriangleMesh};

#[derive(Debug, Error)]
pub enum RegistrationError {
    #[error("point ({x}, {y}) lies {distance} outside the parameterized domain")]
    OutsideDomain { x: f64, y: f64, distance: f64 },
    #[error("partition triangle {face} is folded by the matching")]
    FoldedTarget { face: usize },
    #[error("boundary landmarks are not in a consistent cyclic order")]
    BoundaryOrder,
    #[error("field has {found} values for {expected} vertices")]
    FieldLength { expected: usize, found: usize },
    #[error(transparent)]
    Matching(Box<MatchingError>),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

impl From<MatchingError> for RegistrationError {
    fn from(e: MatchingError) -> Self {
        Self::Matching(Box::new(e))
    }
}

fn angle_of(x: &Vector2<f64>) -> f64 {
    x.y.atan2(x.x).rem_euclid(std::f64::consts::TAU)
}

/// Map of the unit circle onto itself used for boundary vertices.
#[derive(Debug, Clone)]
pub enum BoundaryCorrespondence {
    /// Piecewise-linear in angle through matched boundary landmarks. Source
    /// angles are sorted in [0, 2π); target angles increase and span 2π.
    Landmarks { source: Vec<f64>, target: Vec<f64> },
    /// The restriction of a disk Möbius map.
    Mobius(MobiusDisk),
}

impl BoundaryCorrespondence {
    /// Interpolates between at least two landmark pairs on the circle;
    /// returns `None` for fewer.
    pub fn from_landmarks(source: &[Vector2<f64>], target: &[Vector2<f64>]) -> Result<Option<Self>, RegistrationError> {
        if source.len() < 2 {
            return Ok(None);
        }
        let mut pairs: Vec<(f64, f64)> = source.iter().zip(target).map(|(s, t)| (angle_of(s), angle_of(t))).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let tau = std::f64::consts::TAU;
        let src: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let mut tgt = vec![pairs[0].1];
        for p in &pairs[1..] {
            let prev = *tgt.last().unwrap();
            tgt.push(prev + (p.1 - prev).rem_euclid(tau));
        }
        // Closing the loop must add exactly one turn.
        let wrap = tgt[0] + tau - tgt[tgt.len() - 1];
        if !(wrap > 0.0 && wrap <= tau) || src.windows(2).any(|w| w[1] <= w[0]) {
            return Err(RegistrationError::BoundaryOrder);
        }
        Ok(Some(Self::Landmarks { source: src, target: tgt }))
    }

    /// Boundary landmarks of a landmark set (pairs of boundary vertices), or
    /// the Möbius map when fewer than two exist.
    pub fn for_landmarks(
        lm: &LandmarkSet,
        sa: &TriangleMesh,
        sb: &TriangleMesh,
        fallback: MobiusDisk,
    ) -> Result<Self, RegistrationError> {
        if let Some(pairs) = lm.vertex_pairs() {
            let (ma, mb) = (sa.boundary_mask(), sb.boundary_mask());
            let (mut s, mut t) = (Vec::new(), Vec::new());
            for (i, &(a, b)) in pairs.iter().enumerate() {
                if ma[a] && mb[b] {
                    s.push(lm.source_disk()[i]);
                    t.push(lm.target_disk()[i]);
                }
            }
            if let Some(c) = Self::from_landmarks(&s, &t)? {
                return Ok(c);
            }
        }
        Ok(Self::Mobius(fallback))
    }

    /// Image of a point on the unit circle (other points are projected
    /// radially first).
    pub fn apply(&self, x: &Vector2<f64>) -> Vector2<f64> {
        match self {
            Self::Mobius(m) => {
                let y = m.apply(&(x / x.norm()));
                y / y.norm()
            }
            Self::Landmarks { source, target } => {
                let tau = std::f64::consts::TAU;
                let a = angle_of(x);
                let n = source.len();
                // Interval [source[k], source[k + 1]) cyclically.
                let k = match source.iter().rposition(|&s| s <= a) {
                    Some(k) => k,
                    None => n - 1,
                };
                let (s0, t0) = (source[k], target[k]);
                let (s1, t1) = if k + 1 < n { (source[k + 1], target[k + 1]) } else { (source[0] + tau, target[0] + tau) };
                let a = if a < s0 { a + tau } else { a };
                let t = t0 + (a - s0) / (s1 - s0) * (t1 - t0);
                Vector2::new(t.cos(), t.sin())
            }
        }
    }
}

/// Piecewise-linear registration: the matching evaluated at the partition
/// vertices, with boundary vertices sent along the boundary correspondence,
/// and barycentric interpolation in between.
#[derive(Debug, Clone)]
pub struct RegistrationMap {
    partition: TriangleMesh,
    locator: PointLocator,
    targets: Vec<Vector2<f64>>,
    boundary: BoundaryCorrespondence,
}

impl RegistrationMap {
    pub fn partition(&self) -> &TriangleMesh {
        &self.partition
    }

    /// Images of the partition vertices.
    pub fn targets(&self) -> &[Vector2<f64>] {
        &self.targets
    }

    pub fn boundary(&self) -> &BoundaryCorrespondence {
        &self.boundary
    }

    /// Image of a point of the closed disk. Points on the unit circle follow
    /// the boundary correspondence.
    pub fn apply(&self, x: &Vector2<f64>) -> Result<Vector2<f64>, RegistrationError> {
        if x.norm() >= 1.0 - 1e-12 {
            if x.norm() > 1.0 + 1e-6 {
                return Err(RegistrationError::OutsideDomain { x: x.x, y: x.y, distance: x.norm() - 1.0 });
            }
            return Ok(self.boundary.apply(x));
        }
        let loc = self.locator.locate_in_disk(x)?;
        Ok(loc.interpolate(self.partition.faces(), &self.targets))
    }

    /// Images of every vertex of a parameterized mesh; boundary vertices take
    /// the boundary correspondence directly.
    pub fn map_vertices(&self, mesh: &TriangleMesh, uv: &[Vector2<f64>]) -> Result<Vec<Vector2<f64>>, RegistrationError> {
        let mask = mesh.boundary_mask();
        uv.iter()
            .zip(&mask)
            .map(|(x, &b)| if b { Ok(self.boundary.apply(x)) } else { self.apply(x) })
            .collect()
    }
}

/// Builds the registration of the frame's surface onto the target disk.
pub fn build_registration(
    frame: &GeodesicFrame,
    matching: &DiskMatching,
    boundary: BoundaryCorrespondence,
) -> Result<RegistrationMap, RegistrationError> {
    let uv = frame.partition_uv();
    let targets: Vec<Vector2<f64>> = uv
        .iter()
        .zip(&frame.kinds)
        .map(|(x, kind)| match kind {
            PartitionVertex::Boundary(_) => Ok(boundary.apply(x)),
            _ => matching.eval(x).map_err(RegistrationError::from),
        })
        .collect::<Result<_, _>>()?;
    for (fi, f) in frame.partition.faces().iter().enumerate() {
        if signed_area2(&targets[f[0]], &targets[f[1]], &targets[f[2]]) <= 0.0 {
            return Err(RegistrationError::FoldedTarget { face: fi });
        }
    }
    let locator = PointLocator::new(&frame.partition, &uv);
    Ok(RegistrationMap { partition: frame.partition.clone(), locator, targets, boundary })
}

/// Per-vertex quantities that determine a surface up to the boundary: mean
/// curvature, conformal factor and the boundary positions (in boundary-loop
/// order).
#[derive(Debug, Clone)]
pub struct SurfaceSignature {
    pub h: Vec<f64>,
    pub lambda: Vec<f64>,
    pub boundary: Vec<Vector3<f64>>,
}

impl SurfaceSignature {
    pub fn of_surface(mesh: &TriangleMesh, param: &DiskParameterization) -> Result<Self, RegistrationError> {
        let h = mean_curvature(mesh, param)?.into_inner();
        let lambda = param.lambda().to_vec();
        let boundary = mesh.boundary().iter().map(|&v| mesh.positions()[v]).collect();
        Ok(Self { h, lambda, boundary })
    }
}

/// Samples a per-vertex field of `mesh` at disk points through its
/// parameterization.
pub fn sample_field<T>(
    mesh: &TriangleMesh,
    param: &DiskParameterization,
    points: &[Vector2<f64>],
    values: &[T],
) -> Result<Vec<T>, RegistrationError>
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    if values.len() != mesh.vertex_count() {
        return Err(RegistrationError::FieldLength { expected: mesh.vertex_count(), found: values.len() });
    }
    let locator = PointLocator::new(mesh, param.uv());
    points.iter().map(|x| Ok(locator.locate_in_disk(x)?.interpolate(mesh.faces(), values))).collect()
}

/// Pulls the target signature back onto `unified` through the registered
/// disk images of its vertices.
pub fn transfer_signature(
    unified: &TriangleMesh,
    images: &[Vector2<f64>],
    target: &TriangleMesh,
    target_param: &DiskParameterization,
    target_signature: &SurfaceSignature,
) -> Result<SurfaceSignature, RegistrationError> {
    if images.len() != unified.vertex_count() {
        return Err(RegistrationError::FieldLength { expected: unified.vertex_count(), found: images.len() });
    }
    let h = sample_field(target, target_param, images, &target_signature.h)?;
    let lambda = sample_field(target, target_param, images, &target_signature.lambda)?;
    let rim: Vec<Vector2<f64>> = unified.boundary().iter().map(|&v| images[v]).collect();
    let boundary = sample_field(target, target_param, &rim, target.positions())?;
    Ok(SurfaceSignature { h, lambda, boundary })
}

/// Transfers vertex colors of the target onto `unified`, clamped to [0, 1].
pub fn transfer_attributes(
    images: &[Vector2<f64>],
    target: &TriangleMesh,
    target_param: &DiskParameterization,
) -> Result<Option<Vec<Vector3<f64>>>, RegistrationError> {
    let Some(colors) = target.colors() else {
        return Ok(None);
    };
    let c = sample_field(target, target_param, images, colors)?;
    Ok(Some(c.into_iter().map(|c| c.map(|x| x.clamp(0.0, 1.0))).collect()))
}
