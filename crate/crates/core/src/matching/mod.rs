//! Landmark-driven matching of two disk parameterizations: an optimal Möbius
//! transformation followed by a thin-plate correction.

mod mobius_fit;
mod plate;

pub use mobius_fit::{mobius_objective, optimal_mobius, optimal_mobius_points, MobiusFit};
pub use plate::{design_matrix, grid_centers, plate_kernel, ThinPlateField};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::{ConformalError, DiskParameterization, MobiusDisk};
use crate::mesh::{MeshError, TriangleMesh};
use crate::registration::{PointLocator, RegistrationError};

#[derive(Debug, Error)]
pub enum MatchingError {
    #[error("need at least {needed} landmarks, found {found}")]
    TooFewLandmarks { needed: usize, found: usize },
    #[error("landmark counts differ: {sources} source, {targets} target")]
    CountMismatch { sources: usize, targets: usize },
    #[error("landmark {index} lies outside the closed unit disk")]
    LandmarkOutsideDisk { index: usize },
    #[error("landmark {index} references vertex {vertex} outside the mesh")]
    LandmarkVertex { index: usize, vertex: usize },
    #[error("thin-plate system is rank deficient; use a positive epsilon")]
    RankDeficient,
    #[error("epsilon must be non-negative, got {0}")]
    NegativeEpsilon(f64),
    #[error("invalid thin-plate grid: {0}")]
    InvalidGrid(String),
    #[error("matched image ({x}, {y}) leaves the unit disk (radius {radius})")]
    ExitsDisk { x: f64, y: f64, radius: f64 },
    #[error(transparent)]
    Registration(#[from] RegistrationError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Paired landmarks on two surfaces together with their disk images.
#[derive(Debug, Clone)]
pub struct LandmarkSet {
    source_3d: Vec<Vector3<f64>>,
    target_3d: Vec<Vector3<f64>>,
    source_disk: Vec<Vector2<f64>>,
    target_disk: Vec<Vector2<f64>>,
    /// λ_b / λ_a at each landmark pair.
    ratio: Vec<f64>,
    vertices: Option<Vec<(usize, usize)>>,
}

impl LandmarkSet {
    /// Landmarks given directly; conformal-factor ratios default to 1.
    pub fn new(
        source_3d: Vec<Vector3<f64>>,
        target_3d: Vec<Vector3<f64>>,
        source_disk: Vec<Vector2<f64>>,
        target_disk: Vec<Vector2<f64>>,
    ) -> Result<Self, MatchingError> {
        let m = source_3d.len();
        for len in [target_3d.len(), source_disk.len(), target_disk.len()] {
            if len != m {
                return Err(MatchingError::CountMismatch { sources: m, targets: len });
            }
        }
        if m < 3 {
            return Err(MatchingError::TooFewLandmarks { needed: 3, found: m });
        }
        for (i, p) in source_disk.iter().chain(&target_disk).enumerate() {
            if p.norm() > 1.0 + 1e-9 {
                return Err(MatchingError::LandmarkOutsideDisk { index: i % m });
            }
        }
        Ok(Self { source_3d, target_3d, source_disk, target_disk, ratio: vec![1.0; m], vertices: None })
    }

    /// Landmarks as vertex pairs `(source vertex, target vertex)`.
    pub fn from_vertices(
        sa: &TriangleMesh,
        pa: &DiskParameterization,
        sb: &TriangleMesh,
        pb: &DiskParameterization,
        pairs: &[(usize, usize)],
    ) -> Result<Self, MatchingError> {
        for (i, &(a, b)) in pairs.iter().enumerate() {
            if a >= sa.vertex_count() {
                return Err(MatchingError::LandmarkVertex { index: i, vertex: a });
            }
            if b >= sb.vertex_count() {
                return Err(MatchingError::LandmarkVertex { index: i, vertex: b });
            }
        }
        let mut lm = Self::new(
            pairs.iter().map(|&(a, _)| sa.positions()[a]).collect(),
            pairs.iter().map(|&(_, b)| sb.positions()[b]).collect(),
            pairs.iter().map(|&(a, _)| pa.uv()[a]).collect(),
            pairs.iter().map(|&(_, b)| pb.uv()[b]).collect(),
        )?;
        lm.ratio = pairs.iter().map(|&(a, b)| pb.lambda()[b] / pa.lambda()[a]).collect();
        lm.vertices = Some(pairs.to_vec());
        Ok(lm)
    }

    pub fn with_ratios(mut self, ratio: Vec<f64>) -> Result<Self, MatchingError> {
        if ratio.len() != self.len() {
            return Err(MatchingError::CountMismatch { sources: self.len(), targets: ratio.len() });
        }
        self.ratio = ratio;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.source_3d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_3d.is_empty()
    }

    pub fn source_3d(&self) -> &[Vector3<f64>] {
        &self.source_3d
    }

    pub fn target_3d(&self) -> &[Vector3<f64>] {
        &self.target_3d
    }

    pub fn source_disk(&self) -> &[Vector2<f64>] {
        &self.source_disk
    }

    pub fn target_disk(&self) -> &[Vector2<f64>] {
        &self.target_disk
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratio
    }

    pub fn vertex_pairs(&self) -> Option<&[(usize, usize)]> {
        self.vertices.as_deref()
    }
}

/// Fits a thin-plate field taking the source disk landmarks to the target
/// disk landmarks.
pub fn thin_plate_fit(lm: &LandmarkSet, n: usize, epsilon: f64, weights: Vec<f64>) -> Result<ThinPlateField, MatchingError> {
    ThinPlateField::fit(lm.source_disk(), lm.target_disk(), n, epsilon, weights)
}

/// Order in which the two parts of a [`DiskMatching`] are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompositionOrder {
    /// `f_D(x) = m(x + g(x))`: the plate displacement first, then the Möbius map.
    PlateThenMobius,
}

/// Largest radial overshoot of a matching image that is still projected
/// back onto the unit circle.
pub const DISK_EXIT_TOLERANCE: f64 = 1e-2;

/// Disk-to-disk matching `f_D = m ∘ (id + g)`.
#[derive(Debug, Clone)]
pub struct DiskMatching {
    pub mobius: MobiusDisk,
    pub plate: ThinPlateField,
    pub order: CompositionOrder,
}

impl DiskMatching {
    pub fn new(mobius: MobiusDisk, plate: ThinPlateField) -> Self {
        Self { mobius, plate, order: CompositionOrder::PlateThenMobius }
    }

    /// Möbius-only matching (zero plate on an `n × n` grid).
    pub fn mobius_only(mobius: MobiusDisk, n: usize) -> Result<Self, MatchingError> {
        Ok(Self::new(mobius, ThinPlateField::zero(n, vec![1.0; n * n], 0.0)?))
    }

    pub fn identity() -> Self {
        Self::mobius_only(MobiusDisk::identity(), 2).expect("valid grid")
    }

    /// Image of a disk point. The plate is unconstrained at the rim, so images
    /// leaving the disk by at most [`DISK_EXIT_TOLERANCE`] are pulled back
    /// radially onto the circle; farther exits are errors.
    pub fn eval(&self, x: &Vector2<f64>) -> Result<Vector2<f64>, MatchingError> {
        let y = x + self.plate.eval(x);
        let z = self.mobius.apply(&y);
        let r = z.norm();
        if !r.is_finite() || r > 1.0 + DISK_EXIT_TOLERANCE {
            return Err(MatchingError::ExitsDisk { x: z.x, y: z.y, radius: r });
        }
        Ok(if r > 1.0 { z / r } else { z })
    }
}

/// Quadrature used for the global matching energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Quadrature {
    /// One point per triangle at its centroid.
    #[default]
    Midpoint,
    /// Three edge midpoints per triangle (exact for quadratics).
    ThreePoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchingEnergies {
    /// Σ (λ_b/λ_a) ‖f_D(p_D) − q_D‖² over landmarks.
    pub disk: f64,
    /// Σ ‖f(p) − q‖² over landmarks, in 3D.
    pub local: f64,
    /// ∫_D |f(S_a(x)) − S_b(x)|² dx over the source parametric triangles.
    pub global: f64,
}

impl MatchingEnergies {
    pub fn dominated_by(&self, other: &Self) -> bool {
        self.disk <= other.disk && self.local <= other.local && self.global <= other.global
    }
}

/// Precomputed data for evaluating matching energies of many candidate
/// matchings between one pair of surfaces.
pub struct EnergyEvaluator<'a> {
    sb: &'a TriangleMesh,
    lm: &'a LandmarkSet,
    locator_b: PointLocator,
    /// (disk point, quadrature weight, S_b at that point)
    samples: Vec<(Vector2<f64>, f64, Vector3<f64>)>,
}

impl<'a> EnergyEvaluator<'a> {
    pub fn new(
        sa: &'a TriangleMesh,
        sb: &'a TriangleMesh,
        pa: &'a DiskParameterization,
        pb: &'a DiskParameterization,
        lm: &'a LandmarkSet,
        quadrature: Quadrature,
    ) -> Result<Self, MatchingError> {
        let locator_b = PointLocator::new(sb, pb.uv());
        let uv = pa.uv();
        let mut samples = Vec::with_capacity(sa.face_count() * 3);
        for f in sa.faces() {
            let (a, b, c) = (uv[f[0]], uv[f[1]], uv[f[2]]);
            let area = 0.5 * crate::mesh::signed_area2(&a, &b, &c).abs();
            let points: Vec<(Vector2<f64>, f64)> = match quadrature {
                Quadrature::Midpoint => vec![((a + b + c) / 3.0, area)],
                Quadrature::ThreePoint => {
                    vec![((a + b) / 2.0, area / 3.0), ((b + c) / 2.0, area / 3.0), ((c + a) / 2.0, area / 3.0)]
                }
            };
            for (x, w) in points {
                let loc = locator_b.locate_in_disk(&x)?;
                samples.push((x, w, loc.interpolate(sb.faces(), sb.positions())));
            }
        }
        Ok(Self { sb, lm, locator_b, samples })
    }

    fn surface_b(&self, y: &Vector2<f64>) -> Result<Vector3<f64>, MatchingError> {
        Ok(self.locator_b.locate_in_disk(y)?.interpolate(self.sb.faces(), self.sb.positions()))
    }

    pub fn energies(&self, f: &DiskMatching) -> Result<MatchingEnergies, MatchingError> {
        let lm = self.lm;
        let mut disk = 0.0;
        let mut local = 0.0;
        for i in 0..lm.len() {
            let y = f.eval(&lm.source_disk[i])?;
            disk += lm.ratio[i] * (y - lm.target_disk[i]).norm_squared();
            local += (self.surface_b(&y)? - lm.target_3d[i]).norm_squared();
        }
        let mut global = 0.0;
        for (x, w, sb_x) in &self.samples {
            let y = f.eval(x)?;
            global += w * (self.surface_b(&y)? - sb_x).norm_squared();
        }
        Ok(MatchingEnergies { disk, local, global })
    }
}

pub fn matching_energies(
    f: &DiskMatching,
    sa: &TriangleMesh,
    sb: &TriangleMesh,
    pa: &DiskParameterization,
    pb: &DiskParameterization,
    lm: &LandmarkSet,
    quadrature: Quadrature,
) -> Result<MatchingEnergies, MatchingError> {
    EnergyEvaluator::new(sa, sb, pa, pb, lm, quadrature)?.energies(f)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    /// Thin-plate grid side.
    pub grid: usize,
    pub epsilon: f64,
    pub quadrature: Quadrature,
    /// Halve the plate until no energy exceeds the Möbius-only matching.
    pub enforce_energy_bound: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { grid: 5, epsilon: 1e-8, quadrature: Quadrature::Midpoint, enforce_energy_bound: true }
    }
}

/// Möbius-only and Möbius-plus-plate matchings of one surface pair, with
/// their energies.
#[derive(Debug, Clone)]
pub struct SurfaceMatch {
    pub omt: DiskMatching,
    pub omgmf: DiskMatching,
    pub omt_energies: MatchingEnergies,
    pub omgmf_energies: MatchingEnergies,
    pub mobius_objective: f64,
    /// Scale applied to the fitted plate (1 unless the energy bound forced
    /// it down).
    pub plate_strength: f64,
}

/// λ_b / λ_a at each grid center; centers outside either parametric
/// triangulation get weight 1.
pub fn center_weights(
    sa: &TriangleMesh,
    pa: &DiskParameterization,
    sb: &TriangleMesh,
    pb: &DiskParameterization,
    n: usize,
) -> Vec<f64> {
    let la = PointLocator::new(sa, pa.uv());
    let lb = PointLocator::new(sb, pb.uv());
    grid_centers(n)
        .iter()
        .map(|c| match (la.find(c), lb.find(c)) {
            (Some(a), Some(b)) => b.interpolate(sb.faces(), pb.lambda()) / a.interpolate(sa.faces(), pa.lambda()),
            _ => 1.0,
        })
        .collect()
}

pub fn match_surfaces(
    sa: &TriangleMesh,
    sb: &TriangleMesh,
    pa: &DiskParameterization,
    pb: &DiskParameterization,
    lm: &LandmarkSet,
    config: &MatchConfig,
) -> Result<SurfaceMatch, MatchingError> {
    let fit = optimal_mobius(lm)?;
    let inverse = fit.mobius.inverse();
    let displacements: Vec<Vector2<f64>> = lm
        .source_disk()
        .iter()
        .zip(lm.target_disk())
        .map(|(p, q)| inverse.apply(q) - p)
        .collect();
    let weights = center_weights(sa, pa, sb, pb, config.grid);
    let plate = ThinPlateField::fit(lm.source_disk(), &displacements, config.grid, config.epsilon, weights.clone())?;

    let evaluator = EnergyEvaluator::new(sa, sb, pa, pb, lm, config.quadrature)?;
    let omt = DiskMatching::new(fit.mobius, ThinPlateField::zero(config.grid, weights, config.epsilon)?);
    let omt_energies = evaluator.energies(&omt)?;

    let mut strength = 1.0;
    let mut chosen = None;
    for _ in 0..=10 {
        let candidate = DiskMatching::new(fit.mobius, plate.scaled(strength));
        match evaluator.energies(&candidate) {
            Ok(e) if !config.enforce_energy_bound || e.dominated_by(&omt_energies) => {
                chosen = Some((candidate, e));
                break;
            }
            Ok(e) => log::debug!("plate strength {strength}: energies {e:?} exceed Möbius-only {omt_energies:?}"),
            Err(err) if config.enforce_energy_bound => log::debug!("plate strength {strength}: {err}"),
            Err(err) => return Err(err),
        }
        strength *= 0.5;
    }
    let (omgmf, omgmf_energies) = chosen.unwrap_or_else(|| {
        strength = 0.0;
        (omt.clone(), omt_energies)
    });
    if strength < 1.0 {
        log::info!("thin-plate correction scaled to {strength} to keep energies within the Möbius-only bound");
    }
    Ok(SurfaceMatch { omt, omgmf, omt_energies, omgmf_energies, mobius_objective: fit.objective, plate_strength: strength })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    fn flat_pair() -> (TriangleMesh, DiskParameterization) {
        let mesh = shapes::unit_disk(8);
        let uv: Vec<_> = mesh.positions().iter().map(|p| p.xy()).collect();
        let param = DiskParameterization::from_image(&mesh, uv).unwrap();
        (mesh, param)
    }

    #[test]
    fn zero_plate_and_half_turn() {
        let x = Vector2::new(0.3, -0.4);
        assert_eq!(DiskMatching::identity().eval(&x).unwrap(), x);
        let m = DiskMatching::mobius_only(MobiusDisk::rotation(std::f64::consts::PI), 3).unwrap();
        assert!((m.eval(&x).unwrap() + x).norm() < 1e-15);
    }

    #[test]
    fn self_matching_has_zero_energies() {
        let (mesh, param) = flat_pair();
        let pairs: Vec<(usize, usize)> = (0..12).map(|k| (k * 13 + 1, k * 13 + 1)).collect();
        let lm = LandmarkSet::from_vertices(&mesh, &param, &mesh, &param, &pairs).unwrap();
        let r = match_surfaces(&mesh, &mesh, &param, &param, &lm, &MatchConfig::default()).unwrap();
        for e in [r.omt_energies, r.omgmf_energies] {
            assert!(e.disk < 1e-10 && e.local < 1e-10 && e.global < 1e-10, "{e:?}");
        }
    }

    #[test]
    fn single_displaced_landmark_energy() {
        let (mesh, param) = flat_pair();
        let p = vec![Vector2::new(0.1, 0.0), Vector2::new(-0.2, 0.3), Vector2::new(0.0, -0.4)];
        let delta = 0.05;
        let mut q = p.clone();
        q[1].x += delta;
        let lift = |v: &Vec<Vector2<f64>>| v.iter().map(|z| Vector3::new(z.x, z.y, 0.0)).collect::<Vec<_>>();
        let lm = LandmarkSet::new(lift(&p), lift(&q), p.clone(), q).unwrap();
        let e = matching_energies(&DiskMatching::identity(), &mesh, &mesh, &param, &param, &lm, Quadrature::Midpoint)
            .unwrap();
        assert!((e.disk - delta * delta).abs() < 1e-15);
    }
}
