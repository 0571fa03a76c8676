use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{ConformalError, SphereMap};
use crate::linalg::{PatternSolver, SparseMatrix};
use crate::mesh::{cotangent_laplacian, lumped_areas, SparseOperator, TriangleMesh};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QiemConfig {
    /// Initial time step; `None` uses the mean squared edge length of the
    /// initial sphere image.
    pub dt: Option<f64>,
    /// Stop when the largest per-step vertex displacement falls below this.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for QiemConfig {
    fn default() -> Self {
        Self { dt: None, tol: 1e-7, max_iter: 500, max_halvings: 20 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct QiemReport {
    /// Harmonic energy of the initial map followed by every accepted step.
    pub energies: Vec<f64>,
    pub iterations: usize,
    pub final_displacement: f64,
    pub converged: bool,
    /// Set when no step size decreased the energy any further and the
    /// remaining increase was within the 1e-8 relative stagnation band.
    pub stagnated: bool,
}

/// Ball Möbius map sending `a` (|a| < 1) to the origin; it preserves the
/// unit sphere.
pub fn ball_mobius(a: &Vector3<f64>, x: &Vector3<f64>) -> Vector3<f64> {
    let a2 = a.norm_squared();
    let d = x - a;
    let num = (1.0 - a2) * d - d.norm_squared() * a;
    let den = 1.0 - 2.0 * a.dot(x) + a2 * x.norm_squared();
    num / den
}

fn harmonic_energy(k: &SparseOperator, phi: &[Vector3<f64>]) -> f64 {
    k.apply_vec3(phi).iter().zip(phi).map(|(a, b)| a.dot(b)).sum()
}

/// Moves the weighted centroid of the image to the origin by composing ball
/// Möbius maps.
fn center(phi: &mut [Vector3<f64>], weights: &[f64], tol: f64) {
    let total: f64 = weights.iter().sum();
    for _ in 0..100 {
        let c = phi.iter().zip(weights).fold(Vector3::zeros(), |acc, (p, w)| acc + p * *w) / total;
        if c.norm() < tol.min(1e-12) || c.norm() >= 1.0 {
            break;
        }
        for p in phi.iter_mut() {
            *p = ball_mobius(&c, p).normalize();
        }
    }
}

/// Harmonic-map heat flow onto the sphere, discretized by the quasi-implicit
/// Euler scheme `[I + dt (K − D)] φ⁺ = φ` with `D_ii = ⟨(Kφ)_i, φ_i⟩`.
pub fn spherical_conformal_qiem(
    mesh: &TriangleMesh,
    init: &SphereMap,
    config: &QiemConfig,
) -> Result<(SphereMap, QiemReport), ConformalError> {
    if !mesh.is_closed() {
        return Err(ConformalError::InvalidParameter("spherical map needs a closed mesh".into()));
    }
    if init.image().len() != mesh.vertex_count() {
        return Err(ConformalError::InvalidParameter("initial map does not match the mesh".into()));
    }
    if !(config.tol > 0.0) {
        return Err(ConformalError::InvalidParameter("tolerance must be positive".into()));
    }
    let n = mesh.vertex_count();
    let k = cotangent_laplacian(mesh)?;
    let weights = lumped_areas(mesh.faces(), mesh.positions());

    let mut phi = init.image().to_vec();
    center(&mut phi, &weights, config.tol);
    let mut energy = harmonic_energy(&k, &phi);
    let mut dt = match config.dt {
        Some(dt) if dt > 0.0 => dt,
        Some(dt) => return Err(ConformalError::InvalidParameter(format!("time step must be positive, got {dt}"))),
        None => {
            let edges = mesh.edges();
            edges.iter().map(|&(a, b)| (phi[a] - phi[b]).norm_squared()).sum::<f64>() / edges.len() as f64
        }
    };

    let entries = k.entries();
    let build = |dt: f64, d: &[f64]| {
        let mut m = SparseMatrix::new(n);
        for &(i, j, v) in &entries {
            m.push(i, j, dt * v);
        }
        for i in 0..n {
            m.push(i, i, 1.0 - dt * d[i]);
        }
        m
    };
    let mut pattern = PatternSolver::analyze(&build(dt, &vec![0.0; n]))?;

    let mut report = QiemReport { energies: vec![energy], ..Default::default() };
    for iteration in 1..=config.max_iter {
        let kphi = k.apply_vec3(&phi);
        let d: Vec<f64> = kphi.iter().zip(&phi).map(|(a, b)| a.dot(b)).collect();
        let max_d = d.iter().cloned().fold(0.0, f64::max);
        if max_d > 0.0 {
            dt = dt.min(0.5 / max_d);
        }
        let rhs: Vec<Vec<f64>> = (0..3).map(|c| phi.iter().map(|p| p[c]).collect()).collect();

        let mut accepted = None;
        let mut smallest_increase = f64::INFINITY;
        for _ in 0..=config.max_halvings {
            let factor = pattern.factor(&build(dt, &d))?;
            let sol = factor.solve_columns(&rhs)?;
            let mut next: Vec<Vector3<f64>> = (0..n)
                .map(|i| Vector3::new(sol[0][i], sol[1][i], sol[2][i]))
                .collect();
            if next.iter().all(|p| p.norm() > 0.0) {
                next.iter_mut().for_each(|p| *p = p.normalize());
                center(&mut next, &weights, config.tol);
                let e = harmonic_energy(&k, &next);
                if e <= energy {
                    accepted = Some((next, e));
                    break;
                }
                smallest_increase = smallest_increase.min((e - energy) / energy.abs().max(f64::MIN_POSITIVE));
            }
            dt *= 0.5;
        }

        let Some((next, e)) = accepted else {
            if smallest_increase <= 1e-8 {
                report.stagnated = true;
                report.converged = true;
                break;
            }
            return Err(ConformalError::EnergyIncrease { iteration, increase: smallest_increase });
        };
        let displacement = next.iter().zip(&phi).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        phi = next;
        energy = e;
        report.energies.push(e);
        report.iterations = iteration;
        report.final_displacement = displacement;
        log::debug!("qiem iteration {iteration}: energy {e:.12e}, dt {dt:.3e}, displacement {displacement:.3e}");
        if displacement < config.tol {
            report.converged = true;
            break;
        }
        dt *= 1.2;
    }

    let map = SphereMap { image: phi };
    let folded = map.folded_faces(mesh);
    if let Some(&first) = folded.first() {
        return Err(ConformalError::FoldOver { count: folded.len(), first });
    }
    Ok((map, report))
}
