//! Surface paths between feature points, their correction towards
//! geodesics, and the constrained triangulation of the disk they induce.

mod correct;
mod path;

pub use correct::{correct_path, CorrectionConfig, CorrectionReport};
pub use path::{lift_segment, SurfacePath, SurfacePoint};

use nalgebra::{Vector2, Vector3};
use spade::handles::FixedVertexHandle;
use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};
use thiserror::Error;

use crate::conformal::DiskParameterization;
use crate::mesh::{MeshError, TriangleMesh};

#[derive(Debug, Error)]
pub enum GeodesicError {
    #[error("features {0} and {1} coincide in the disk")]
    CoincidentFeatures(usize, usize),
    #[error("the disk segment from vertex {from} to vertex {to} leaves the parameterized domain")]
    SegmentLeavesDomain { from: usize, to: usize },
    #[error("path endpoints must be mesh vertices")]
    EndpointNotVertex,
    #[error("path points do not form a chain of neighbouring faces")]
    BrokenPath,
    #[error("feature index {index} out of range ({count} features)")]
    FeatureOutOfRange { index: usize, count: usize },
    #[error("feature vertex {vertex} out of range ({count} vertices)")]
    VertexOutOfRange { vertex: usize, count: usize },
    #[error("corrected paths {a} and {b} cross")]
    PathsCross { a: usize, b: usize },
    #[error("triangulation failed: {0}")]
    Triangulation(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Straight disk segments between paired features, lifted to the surface.
pub fn initial_paths(
    mesh: &TriangleMesh,
    param: &DiskParameterization,
    features: &[usize],
    pairs: &[(usize, usize)],
) -> Result<Vec<SurfacePath>, GeodesicError> {
    check_features(mesh, features, pairs)?;
    pairs.iter().map(|&(a, b)| lift_segment(mesh, param, features[a], features[b])).collect()
}

fn check_features(mesh: &TriangleMesh, features: &[usize], pairs: &[(usize, usize)]) -> Result<(), GeodesicError> {
    for &v in features {
        if v >= mesh.vertex_count() {
            return Err(GeodesicError::VertexOutOfRange { vertex: v, count: mesh.vertex_count() });
        }
    }
    for &(a, b) in pairs {
        for i in [a, b] {
            if i >= features.len() {
                return Err(GeodesicError::FeatureOutOfRange { index: i, count: features.len() });
            }
        }
    }
    Ok(())
}

/// Role of a vertex of the disk partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionVertex {
    /// Image of a boundary vertex of the surface mesh.
    Boundary(usize),
    /// Image of a feature (index into the feature list).
    Feature(usize),
    /// Interior sample of a corrected path: (path, point).
    PathPoint(usize, usize),
}

/// Corrected paths between features and the triangulation of the disk
/// constrained to their images and to the boundary polygon.
#[derive(Debug, Clone)]
pub struct GeodesicFrame {
    pub features: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
    pub paths: Vec<SurfacePath>,
    pub reports: Vec<CorrectionReport>,
    pub disk_paths: Vec<Vec<Vector2<f64>>>,
    /// Partition vertices traced by each path, in path order.
    pub path_vertices: Vec<Vec<usize>>,
    /// Planar triangulation (z = 0) of the boundary polygon.
    pub partition: TriangleMesh,
    pub kinds: Vec<PartitionVertex>,
}

impl GeodesicFrame {
    pub fn partition_uv(&self) -> Vec<Vector2<f64>> {
        self.partition.positions().iter().map(|p| p.xy()).collect()
    }

    /// The frame with no feature paths: a triangulation of the boundary
    /// polygon alone.
    pub fn empty(mesh: &TriangleMesh, param: &DiskParameterization) -> Result<Self, GeodesicError> {
        build_frame(mesh, param, &[], &[], &CorrectionConfig::default())
    }
}

/// Corrects the paths between paired features and triangulates the disk
/// with their images as constraints.
pub fn build_frame(
    mesh: &TriangleMesh,
    param: &DiskParameterization,
    features: &[usize],
    pairs: &[(usize, usize)],
    config: &CorrectionConfig,
) -> Result<GeodesicFrame, GeodesicError> {
    let initial = initial_paths(mesh, param, features, pairs)?;
    let mut paths = Vec::with_capacity(initial.len());
    let mut reports = Vec::with_capacity(initial.len());
    for p in &initial {
        let (q, r) = correct_path(mesh, p, config)?;
        if r.touches_boundary {
            log::warn!("corrected path of length {:.6} runs through boundary vertices", r.final_length);
        }
        if !r.converged {
            log::warn!("path correction stopped after {} sweeps without converging", r.iterations);
        }
        paths.push(q);
        reports.push(r);
    }
    let disk_paths: Vec<Vec<Vector2<f64>>> = paths.iter().map(|p| dedup(p.disk_positions(mesh, param))).collect();
    for a in 0..disk_paths.len() {
        for b in a + 1..disk_paths.len() {
            if polylines_cross(&disk_paths[a], &disk_paths[b]) {
                return Err(GeodesicError::PathsCross { a, b });
            }
        }
    }

    let uv = param.uv();
    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> = ConstrainedDelaunayTriangulation::new();
    let mut kinds: Vec<Option<PartitionVertex>> = Vec::new();
    let insert = |cdt: &mut ConstrainedDelaunayTriangulation<Point2<f64>>,
                      kinds: &mut Vec<Option<PartitionVertex>>,
                      p: Vector2<f64>,
                      kind: PartitionVertex|
     -> Result<FixedVertexHandle, GeodesicError> {
        let h = cdt.insert(Point2::new(p.x, p.y)).map_err(|e| GeodesicError::Triangulation(format!("{e:?}")))?;
        if kinds.len() <= h.index() {
            kinds.resize(h.index() + 1, None);
        }
        // Boundary and feature roles take precedence over path samples.
        let slot = &mut kinds[h.index()];
        match (*slot, kind) {
            (None, k) => *slot = Some(k),
            (Some(PartitionVertex::PathPoint(..)), k) => *slot = Some(k),
            (Some(PartitionVertex::Feature(_)), k @ PartitionVertex::Boundary(_)) => *slot = Some(k),
            _ => {}
        }
        Ok(h)
    };

    let boundary = mesh.boundary();
    let mut rim = Vec::with_capacity(boundary.len());
    for &v in boundary {
        rim.push(insert(&mut cdt, &mut kinds, uv[v], PartitionVertex::Boundary(v))?);
    }
    for k in 0..rim.len() {
        let (a, b) = (rim[k], rim[(k + 1) % rim.len()]);
        if a != b && cdt.can_add_constraint(a, b) {
            cdt.add_constraint(a, b);
        }
    }
    let mut path_vertices = Vec::with_capacity(paths.len());
    for (pi, (dp, &(fa, fb))) in disk_paths.iter().zip(pairs).enumerate() {
        let mut handles = Vec::with_capacity(dp.len());
        for (k, &p) in dp.iter().enumerate() {
            let kind = if k == 0 {
                PartitionVertex::Feature(fa)
            } else if k + 1 == dp.len() {
                PartitionVertex::Feature(fb)
            } else {
                PartitionVertex::PathPoint(pi, k)
            };
            handles.push(insert(&mut cdt, &mut kinds, p, kind)?);
        }
        for w in handles.windows(2) {
            if w[0] == w[1] {
                continue;
            }
            if !cdt.can_add_constraint(w[0], w[1]) {
                let other = (0..pi).find(|&o| polylines_cross(&disk_paths[o], dp)).unwrap_or(pi);
                return Err(GeodesicError::PathsCross { a: other, b: pi });
            }
            cdt.add_constraint(w[0], w[1]);
        }
        handles.dedup();
        path_vertices.push(handles.iter().map(|h| h.index()).collect());
    }
    // Features not joined by any path still become partition vertices.
    for (i, &v) in features.iter().enumerate() {
        insert(&mut cdt, &mut kinds, uv[v], PartitionVertex::Feature(i))?;
    }

    let positions: Vec<Vector3<f64>> = cdt.vertices().map(|v| Vector3::new(v.position().x, v.position().y, 0.0)).collect();
    let faces: Vec<[usize; 3]> = cdt.inner_faces().map(|f| f.vertices().map(|v| v.fix().index())).collect();
    let partition = TriangleMesh::new(positions, faces)?;
    let kinds = kinds.into_iter().map(|k| k.expect("every inserted vertex has a role")).collect();
    Ok(GeodesicFrame {
        features: features.to_vec(),
        pairs: pairs.to_vec(),
        paths,
        reports,
        disk_paths,
        path_vertices,
        partition,
        kinds,
    })
}

fn dedup(mut pts: Vec<Vector2<f64>>) -> Vec<Vector2<f64>> {
    pts.dedup_by(|a, b| (*a - *b).norm() <= 1e-14);
    pts
}

fn orient(a: Vector2<f64>, b: Vector2<f64>, c: Vector2<f64>) -> f64 {
    (b - a).perp(&(c - a))
}

/// True when two polylines cross at a point interior to segments of both.
/// Shared endpoints and touching are not crossings.
pub fn polylines_cross(p: &[Vector2<f64>], q: &[Vector2<f64>]) -> bool {
    for s in p.windows(2) {
        for t in q.windows(2) {
            let scale = (s[1] - s[0]).norm() * (t[1] - t[0]).norm();
            let eps = 1e-12 * scale;
            let o1 = orient(s[0], s[1], t[0]);
            let o2 = orient(s[0], s[1], t[1]);
            let o3 = orient(t[0], t[1], s[0]);
            let o4 = orient(t[0], t[1], s[1]);
            if ((o1 > eps && o2 < -eps) || (o1 < -eps && o2 > eps)) && ((o3 > eps && o4 < -eps) || (o3 < -eps && o4 > eps)) {
                return true;
            }
        }
    }
    false
}
