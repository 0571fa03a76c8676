//! Surfaces from their mean curvature and conformal factor: a fixed-point
//! iteration on `K S = 2 H λ² M n` with Dirichlet boundary data, and
//! pointwise surface differences over a shared parameter domain.

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Factorization, SolveError, SparseMatrix};
use crate::mesh::{bounding_diameter, cotangent_laplacian_planar, lumped_areas_planar, MeshError, TriangleMesh};
use crate::registration::SurfaceSignature;

#[derive(Debug, Error)]
pub enum ReconstructionError {
    #[error("signature has {found} values for {expected} vertices")]
    FieldLength { expected: usize, found: usize },
    #[error("expected {expected} boundary positions, found {found}")]
    BoundaryLength { expected: usize, found: usize },
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("mesh has no interior vertices")]
    NoInterior,
    #[error("interior system could not be solved: {0}")]
    Solve(#[from] SolveError),
    #[error("outer iteration diverged at iteration {iteration} (displacement {displacement})")]
    Diverged { iteration: usize, displacement: f64 },
    #[error("displacement increased at iteration {iteration}: {previous} -> {current}")]
    DisplacementIncrease { iteration: usize, previous: f64, current: f64 },
    #[error("meshes differ in connectivity")]
    ConnectivityMismatch,
    #[error("zero reference difference: improvement rate undefined")]
    ZeroDenominator,
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionConfig {
    /// Absolute stopping tolerance on the largest vertex displacement
    /// between outer iterates; defaults to 1e-7 times the boundary diameter.
    pub tol: Option<f64>,
    pub max_iter: usize,
    /// Fail instead of only reporting when the displacement grows after the
    /// second iteration.
    pub abort_on_increase: bool,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self { tol: None, max_iter: 100, abort_on_increase: false }
    }
}

/// Boundary-value problem over a parameterized disk mesh. Boundary positions
/// follow the mesh's boundary loop order.
#[derive(Debug, Clone)]
pub struct ReconstructionProblem<'a> {
    pub mesh: &'a TriangleMesh,
    pub uv: &'a [Vector2<f64>],
    pub signature: &'a SurfaceSignature,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub mesh: TriangleMesh,
    pub iterations: usize,
    pub displacement: f64,
    pub displacements: Vec<f64>,
    pub converged: bool,
    /// Iterations after the second whose displacement exceeded the previous.
    pub displacement_increases: usize,
    pub normals: Vec<Vector3<f64>>,
}

/// Precomputed interior system of a parametric mesh, reusable across
/// signatures on the same mesh.
pub struct ReconstructionSolver {
    n: usize,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    /// `K_ib` couplings as (interior slot, boundary vertex, weight).
    coupling: Vec<(usize, usize, f64)>,
    mass: Vec<f64>,
    factor: Factorization,
}

impl ReconstructionSolver {
    pub fn new(mesh: &TriangleMesh, uv: &[Vector2<f64>]) -> Result<Self, ReconstructionError> {
        let n = mesh.vertex_count();
        let k = cotangent_laplacian_planar(mesh, uv)?;
        let mass = lumped_areas_planar(mesh.faces(), uv);
        let is_boundary = mesh.boundary_mask();
        let mut slot = vec![None; n];
        let mut interior = Vec::new();
        for v in 0..n {
            if !is_boundary[v] {
                slot[v] = Some(interior.len());
                interior.push(v);
            }
        }
        if interior.is_empty() {
            return Err(ReconstructionError::NoInterior);
        }
        let mut matrix = SparseMatrix::new(interior.len());
        let mut coupling = Vec::new();
        for (i, &v) in interior.iter().enumerate() {
            for (w, weight) in k.row(v) {
                match slot[w] {
                    Some(j) => matrix.push(i, j, weight),
                    None => coupling.push((i, w, weight)),
                }
            }
        }
        let factor = Factorization::symmetric(&matrix)?;
        Ok(Self { n, interior, boundary: mesh.boundary().to_vec(), coupling, mass, factor })
    }

    /// Interior positions solving `K S = rhs` with the given boundary values.
    fn solve(&self, boundary_values: &[Vector3<f64>], rhs: &[Vector3<f64>]) -> Result<Vec<Vector3<f64>>, ReconstructionError> {
        let m = self.interior.len();
        let mut cols = vec![vec![0.0; m]; 3];
        for (i, &v) in self.interior.iter().enumerate() {
            for c in 0..3 {
                cols[c][i] = rhs[v][c];
            }
        }
        for &(i, w, weight) in &self.coupling {
            for c in 0..3 {
                cols[c][i] -= weight * boundary_values[w][c];
            }
        }
        let x = self.factor.solve_columns(&cols)?;
        let mut out = boundary_values.to_vec();
        for (i, &v) in self.interior.iter().enumerate() {
            out[v] = Vector3::new(x[0][i], x[1][i], x[2][i]);
        }
        Ok(out)
    }

    pub fn reconstruct(
        &self,
        mesh: &TriangleMesh,
        signature: &SurfaceSignature,
        init_normals: Option<&[Vector3<f64>]>,
        config: &ReconstructionConfig,
    ) -> Result<Reconstruction, ReconstructionError> {
        let n = self.n;
        for len in [signature.h.len(), signature.lambda.len()] {
            if len != n {
                return Err(ReconstructionError::FieldLength { expected: n, found: len });
            }
        }
        if signature.boundary.len() != self.boundary.len() {
            return Err(ReconstructionError::BoundaryLength { expected: self.boundary.len(), found: signature.boundary.len() });
        }
        if let Some(init) = init_normals {
            if init.len() != n {
                return Err(ReconstructionError::FieldLength { expected: n, found: init.len() });
            }
        }
        let tol = config.tol.unwrap_or_else(|| {
            let d = bounding_diameter(&signature.boundary);
            1e-7 * if d > 0.0 { d } else { 1.0 }
        });
        if !(tol > 0.0) {
            return Err(ReconstructionError::InvalidTolerance(tol));
        }

        let mut fixed = vec![Vector3::zeros(); n];
        for (&v, p) in self.boundary.iter().zip(&signature.boundary) {
            fixed[v] = *p;
        }
        let weight: Vec<f64> = (0..n).map(|v| 2.0 * signature.h[v] * signature.lambda[v].powi(2) * self.mass[v]).collect();
        // The harmonic extension of the boundary is the starting iterate.
        let mut current = self.solve(&fixed, &vec![Vector3::zeros(); n])?;
        let mut normals: Vec<Vector3<f64>> = match init_normals {
            Some(init) => init.iter().map(|v| v.try_normalize(0.0).unwrap_or(Vector3::z())).collect(),
            None => vec![Vector3::z(); n],
        };
        let scale = bounding_diameter(&signature.boundary).max(1.0);
        let mut displacements = Vec::new();
        let mut increases = 0;
        let mut converged = false;
        for iteration in 1..=config.max_iter {
            let rhs: Vec<Vector3<f64>> = (0..n).map(|v| normals[v] * weight[v]).collect();
            let next = self.solve(&fixed, &rhs)?;
            let d = next.par_iter().zip(&current).map(|(a, b)| (a - b).norm()).reduce(|| 0.0, f64::max);
            if !d.is_finite() || d > 1e6 * scale {
                return Err(ReconstructionError::Diverged { iteration, displacement: d });
            }
            if iteration >= 3 {
                let previous = displacements[displacements.len() - 1];
                if d > previous {
                    increases += 1;
                    log::debug!("reconstruction displacement rose at iteration {iteration}: {previous:e} -> {d:e}");
                    if config.abort_on_increase {
                        return Err(ReconstructionError::DisplacementIncrease { iteration, previous, current: d });
                    }
                }
            }
            displacements.push(d);
            current = next;
            normals = mesh.vertex_normals_for(&current);
            if d < tol {
                converged = true;
                break;
            }
        }
        if !converged {
            log::warn!("reconstruction stopped after {} iterations (displacement {:e})", displacements.len(), displacements.last().unwrap());
        }
        Ok(Reconstruction {
            mesh: mesh.with_positions(current)?,
            iterations: displacements.len(),
            displacement: *displacements.last().unwrap_or(&0.0),
            displacements,
            converged,
            displacement_increases: increases,
            normals,
        })
    }
}

/// One-shot reconstruction; see [`ReconstructionSolver`] to reuse the
/// factorization across signatures.
pub fn reconstruct(
    problem: &ReconstructionProblem,
    init_normals: Option<&[Vector3<f64>]>,
    config: &ReconstructionConfig,
) -> Result<Reconstruction, ReconstructionError> {
    let solver = ReconstructionSolver::new(problem.mesh, problem.uv)?;
    solver.reconstruct(problem.mesh, problem.signature, init_normals, config)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceDiff {
    pub l2: f64,
    pub linf: f64,
}

/// L² distance over the parameter domain (edge-midpoint quadrature, exact
/// for the piecewise-linear difference) and the largest vertex distance.
pub fn surface_diff(x: &TriangleMesh, y: &TriangleMesh, uv: &[Vector2<f64>]) -> Result<SurfaceDiff, ReconstructionError> {
    if x.faces() != y.faces() || x.vertex_count() != y.vertex_count() {
        return Err(ReconstructionError::ConnectivityMismatch);
    }
    if uv.len() != x.vertex_count() {
        return Err(ReconstructionError::FieldLength { expected: x.vertex_count(), found: uv.len() });
    }
    let d: Vec<Vector3<f64>> = x.positions().iter().zip(y.positions()).map(|(a, b)| a - b).collect();
    let mut integral = 0.0;
    for f in x.faces() {
        let (a, b, c) = (uv[f[0]], uv[f[1]], uv[f[2]]);
        let area = 0.5 * ((b - a).perp(&(c - a))).abs();
        let m = [(d[f[0]] + d[f[1]]) * 0.5, (d[f[1]] + d[f[2]]) * 0.5, (d[f[2]] + d[f[0]]) * 0.5];
        integral += area / 3.0 * m.iter().map(|v| v.norm_squared()).sum::<f64>();
    }
    let linf = d.iter().map(|v| v.norm()).fold(0.0, f64::max);
    Ok(SurfaceDiff { l2: integral.sqrt(), linf })
}

/// `(‖S_M − S‖ − ‖S_G − S‖) / ‖S_M − S‖` in the L² norm.
pub fn improvement_rate(
    s_m: &TriangleMesh,
    s_g: &TriangleMesh,
    reference: &TriangleMesh,
    uv: &[Vector2<f64>],
) -> Result<f64, ReconstructionError> {
    let dm = surface_diff(s_m, reference, uv)?.l2;
    let dg = surface_diff(s_g, reference, uv)?.l2;
    if dm == 0.0 {
        return Err(ReconstructionError::ZeroDenominator);
    }
    Ok((dm - dg) / dm)
}
