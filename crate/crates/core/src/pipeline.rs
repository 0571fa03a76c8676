//! End-to-end batch workflow: configuration, the per-stage commands and the
//! files they emit.

use std::error::Error as StdError;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::{angle_distortion, riemann_disk_map, AngleDistortion, DiskParameterization, QiemConfig};
use crate::geodesic::{build_frame, CorrectionConfig, GeodesicFrame};
use crate::homotopy::{transfer_keyframes, Keyframe, SignatureHomotopy};
use crate::matching::{match_surfaces, DiskMatching, LandmarkSet, MatchConfig, MatchingEnergies, SurfaceMatch};
use crate::mesh::{load_mesh, write_obj, TriangleMesh};
use crate::reconstruction::{improvement_rate, surface_diff, ReconstructionConfig, ReconstructionSolver};
use crate::registration::{build_registration, sample_field, BoundaryCorrespondence, RegistrationMap};

type BoxError = Box<dyn StdError + Send + Sync>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cli::configuration failed: {0}")]
    Config(String),
    #[error("{module}::{operation} failed: {source}")]
    Stage { module: &'static str, operation: &'static str, source: BoxError },
}

trait StageExt<T> {
    fn stage(self, module: &'static str, operation: &'static str) -> Result<T, PipelineError>;
}

impl<T, E: StdError + Send + Sync + 'static> StageExt<T> for Result<T, E> {
    fn stage(self, module: &'static str, operation: &'static str) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError::Stage { module, operation, source: Box::new(e) })
    }
}

fn config_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyframeSpec {
    pub mesh: PathBuf,
    pub time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub mesh: PathBuf,
    pub time: f64,
}

/// Which disk matching drives the registrations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Möbius map only.
    Omt,
    /// Möbius map composed with the thin-plate correction.
    #[default]
    Omgmf,
}

/// Pipeline configuration, read from one JSON document. Relative paths are
/// resolved against the directory holding the document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub keyframes: Vec<KeyframeSpec>,
    /// One landmark CSV (`side,index,x,y,z` rows) per adjacent
    /// keyframe pair.
    #[serde(default)]
    pub landmarks: Vec<PathBuf>,
    /// Pairs of landmark indices joined by feature paths.
    #[serde(default)]
    pub topology: Vec<(usize, usize)>,
    #[serde(default)]
    pub matching: MatchConfig,
    #[serde(default)]
    pub qiem: QiemConfig,
    #[serde(default)]
    pub correction: CorrectionConfig,
    #[serde(default)]
    pub reconstruction: ReconstructionConfig,
    #[serde(default)]
    pub method: Method,
    pub output: PathBuf,
    #[serde(default)]
    pub frames: Vec<f64>,
    /// Ground-truth surfaces on the first keyframe's connectivity.
    #[serde(default)]
    pub references: Vec<ReferenceSpec>,
}

impl PipelineConfig {
    pub fn from_json(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut config: Self = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        config.resolve(base);
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base)
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for k in &mut self.keyframes {
            join(&mut k.mesh);
        }
        for r in &mut self.references {
            join(&mut r.mesh);
        }
        self.landmarks.iter_mut().for_each(join);
        join(&mut self.output);
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.keyframes.is_empty() {
            return Err(config_err("no keyframes"));
        }
        for (i, w) in self.keyframes.windows(2).enumerate() {
            if !(w[1].time > w[0].time) {
                return Err(config_err(format!("keyframe times must increase strictly (keyframe {})", i + 1)));
            }
        }
        if self.frames.iter().chain(self.references.iter().map(|r| &r.time)).any(|t| !t.is_finite()) {
            return Err(config_err("frame and reference times must be finite"));
        }
        if let Some(t) = self.reconstruction.tol {
            if !(t > 0.0) {
                return Err(config_err(format!("reconstruction tolerance must be positive, got {t}")));
            }
        }
        Ok(())
    }

    fn require_pairs(&self) -> Result<(), PipelineError> {
        if self.keyframes.len() < 2 {
            return Err(config_err("at least 2 keyframes are required"));
        }
        if self.landmarks.len() + 1 != self.keyframes.len() {
            return Err(config_err(format!(
                "{} keyframes need {} landmark files, found {}",
                self.keyframes.len(),
                self.keyframes.len() - 1,
                self.landmarks.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct LandmarkRow {
    side: String,
    index: usize,
    x: f64,
    y: f64,
    z: f64,
}

/// One landmark as written in a landmark file: a vertex index and the
/// position it is expected to have.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkVertex {
    pub index: usize,
    pub position: Vector3<f64>,
}

/// Reads a landmark CSV with a `side,index,x,y,z` header. Rows with side `a`
/// belong to the source keyframe and rows with side `b` to the target; the
/// k-th `a` row pairs with the k-th `b` row.
pub fn read_landmarks(path: &Path) -> Result<Vec<(LandmarkVertex, LandmarkVertex)>, PipelineError> {
    if !path.is_file() {
        return Err(config_err(format!("landmark file {} not found", path.display())));
    }
    let bad = |e: String| config_err(format!("{}: {e}", path.display()));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| bad(e.to_string()))?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for row in reader.deserialize::<LandmarkRow>() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let v = LandmarkVertex { index: row.index, position: Vector3::new(row.x, row.y, row.z) };
        match row.side.as_str() {
            "a" => a.push(v),
            "b" => b.push(v),
            other => return Err(bad(format!("landmark side must be a or b, found {other:?}"))),
        }
    }
    if a.len() != b.len() {
        return Err(bad(format!("{} source landmarks but {} target landmarks", a.len(), b.len())));
    }
    Ok(a.into_iter().zip(b).collect())
}

/// Vertex pairs of a landmark file, checked against both meshes.
fn landmark_pairs(
    path: &Path,
    records: &[(LandmarkVertex, LandmarkVertex)],
    a: &TriangleMesh,
    b: &TriangleMesh,
) -> Result<Vec<(usize, usize)>, PipelineError> {
    let check = |v: &LandmarkVertex, mesh: &TriangleMesh, side: &str| {
        let p = mesh.positions().get(v.index).ok_or_else(|| {
            config_err(format!("{}: side {side} vertex {} is out of range", path.display(), v.index))
        })?;
        let tol = 1e-4 * mesh.bounding_diameter().max(1.0);
        if (p - v.position).norm() > tol {
            return Err(config_err(format!(
                "{}: side {side} vertex {} is at {:?}, landmark file says {:?}",
                path.display(),
                v.index,
                p.as_slice(),
                v.position.as_slice()
            )));
        }
        Ok(v.index)
    };
    records.iter().map(|(va, vb)| Ok((check(va, a, "a")?, check(vb, b, "b")?))).collect()
}

/// Output files of one command. Files are written through a temporary name
/// and renamed into place; [`OutputSet::discard`] removes everything written
/// so far.
#[derive(Debug)]
pub struct OutputSet {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputSet {
    pub fn new(dir: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(dir).stage("cli", "create output directory")?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf, PipelineError> {
        let path = self.dir.join(name);
        write_atomic(&path, contents)?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn discard(&mut self) {
        for p in self.written.drain(..) {
            let _ = fs::remove_file(p);
        }
    }
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), PipelineError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).stage("cli", "write output")?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    }).stage("cli", "write output")
}

/// Keyframe file name for time `t`.
pub fn frame_file_name(t: f64) -> String {
    format!("frame_{t:09.4}.obj")
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

pub fn parameterization_csv(param: &DiskParameterization) -> String {
    csv_text(
        &["vertex", "u", "v", "lambda"],
        param.uv().iter().zip(param.lambda()).enumerate().map(|(i, (q, l))| vec![i.to_string(), q.x.to_string(), q.y.to_string(), l.to_string()]),
    )
}

pub fn distortion_csv(d: &AngleDistortion) -> String {
    csv_text(
        &["bin_start_deg", "bin_end_deg", "count"],
        d.counts.iter().enumerate().map(|(i, c)| vec![d.edges[i].to_string(), d.edges[i + 1].to_string(), c.to_string()]),
    )
}

/// Disk map of one mesh with its angle-distortion histogram.
pub fn parameterize(mesh: &TriangleMesh, qiem: &QiemConfig) -> Result<(DiskParameterization, AngleDistortion), PipelineError> {
    let (param, report) = riemann_disk_map(mesh, qiem).stage("conformal", "riemann_disk_map")?;
    if !report.qiem.converged {
        log::warn!("harmonic flow stopped after {} iterations without converging", report.qiem.iterations);
    }
    let distortion = angle_distortion(mesh, &param);
    log::info!("angle distortion: mean {:.4} deg, 95th percentile {:.4} deg", distortion.mean, distortion.p95);
    Ok((param, distortion))
}

/// Writes the parameterization CSV to `out` and the histogram next to it.
pub fn cmd_parameterize(mesh_path: &Path, out: &Path, qiem: &QiemConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let mesh = load_mesh(mesh_path).stage("mesh-core", "load_mesh")?;
    let (param, distortion) = parameterize(&mesh, qiem)?;
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("param");
    let hist = out.with_file_name(format!("{stem}_distortion.csv"));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).stage("cli", "create output directory")?;
    }
    write_atomic(out, parameterization_csv(&param).as_bytes())?;
    write_atomic(&hist, distortion_csv(&distortion).as_bytes())?;
    Ok(vec![out.to_path_buf(), hist])
}

/// Loaded and parameterized keyframes with their landmark pairs.
pub struct Session {
    pub config: PipelineConfig,
    pub keyframes: Vec<Keyframe>,
    pub landmarks: Vec<Vec<(usize, usize)>>,
}

impl Session {
    pub fn open(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.require_pairs()?;
        let records = config.landmarks.iter().map(|p| read_landmarks(p)).collect::<Result<Vec<_>, _>>()?;
        let meshes = config
            .keyframes
            .iter()
            .map(|k| load_mesh(&k.mesh).stage("mesh-core", "load_mesh"))
            .collect::<Result<Vec<_>, _>>()?;
        let landmarks = records
            .iter()
            .enumerate()
            .map(|(i, r)| landmark_pairs(&config.landmarks[i], r, &meshes[i], &meshes[i + 1]))
            .collect::<Result<Vec<_>, _>>()?;
        let keyframes = meshes
            .into_iter()
            .map(|mesh| {
                let (param, _) = parameterize(&mesh, &config.qiem)?;
                Ok(Keyframe { mesh, param })
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        Ok(Self { config, keyframes, landmarks })
    }

    pub fn times(&self) -> Vec<f64> {
        self.config.keyframes.iter().map(|k| k.time).collect()
    }

    fn landmark_set(&self, pair: usize) -> Result<LandmarkSet, PipelineError> {
        let (a, b) = (&self.keyframes[pair], &self.keyframes[pair + 1]);
        LandmarkSet::from_vertices(&a.mesh, &a.param, &b.mesh, &b.param, &self.landmarks[pair]).stage("matching", "landmarks")
    }

    /// Both matchings of every adjacent keyframe pair.
    pub fn matches(&self) -> Result<Vec<(LandmarkSet, SurfaceMatch)>, PipelineError> {
        (0..self.landmarks.len())
            .map(|i| {
                let lm = self.landmark_set(i)?;
                let (a, b) = (&self.keyframes[i], &self.keyframes[i + 1]);
                let m = match_surfaces(&a.mesh, &b.mesh, &a.param, &b.param, &lm, &self.config.matching)
                    .stage("matching", "match_surfaces")?;
                Ok((lm, m))
            })
            .collect()
    }

    /// Geodesic frame of every source keyframe, with the landmark source
    /// vertices as features.
    pub fn frames(&self) -> Result<Vec<GeodesicFrame>, PipelineError> {
        (0..self.landmarks.len())
            .map(|i| {
                let k = &self.keyframes[i];
                let features: Vec<usize> = self.landmarks[i].iter().map(|p| p.0).collect();
                build_frame(&k.mesh, &k.param, &features, &self.config.topology, &self.config.correction)
                    .stage("geodesic", "build_frame")
            })
            .collect()
    }

    fn registrations(
        &self,
        frames: &[GeodesicFrame],
        matches: &[(LandmarkSet, SurfaceMatch)],
        method: Method,
    ) -> Result<Vec<RegistrationMap>, PipelineError> {
        frames
            .iter()
            .zip(matches)
            .enumerate()
            .map(|(i, (frame, (lm, m)))| {
                let matching = match method {
                    Method::Omt => &m.omt,
                    Method::Omgmf => &m.omgmf,
                };
                let (a, b) = (&self.keyframes[i].mesh, &self.keyframes[i + 1].mesh);
                let boundary = BoundaryCorrespondence::for_landmarks(lm, a, b, matching.mobius).stage("registration", "boundary correspondence")?;
                build_registration(frame, matching, boundary).stage("registration", "build_registration")
            })
            .collect()
    }
}

#[derive(Serialize)]
struct MobiusRecord {
    a_re: f64,
    a_im: f64,
    theta: f64,
}

#[derive(Serialize)]
struct PlateRecord {
    grid: usize,
    epsilon: f64,
    centers: Vec<[f64; 2]>,
    alpha1: Vec<f64>,
    alpha2: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize)]
struct MatchRecord {
    pair: usize,
    mobius: MobiusRecord,
    mobius_objective: f64,
    plate: PlateRecord,
    plate_strength: f64,
    omt_energies: MatchingEnergies,
    omgmf_energies: MatchingEnergies,
}

fn match_record(pair: usize, m: &SurfaceMatch) -> MatchRecord {
    let DiskMatching { mobius, plate, .. } = &m.omgmf;
    MatchRecord {
        pair,
        mobius: MobiusRecord { a_re: mobius.a().re, a_im: mobius.a().im, theta: mobius.theta() },
        mobius_objective: m.mobius_objective,
        plate: PlateRecord {
            grid: plate.n(),
            epsilon: plate.epsilon(),
            centers: plate.centers().iter().map(|c| [c.x, c.y]).collect(),
            alpha1: plate.alpha1().to_vec(),
            alpha2: plate.alpha2().to_vec(),
            weights: plate.weights().to_vec(),
        },
        plate_strength: m.plate_strength,
        omt_energies: m.omt_energies,
        omgmf_energies: m.omgmf_energies,
    }
}

pub fn energies_csv(m: &SurfaceMatch) -> String {
    let row = |name: &str, e: &MatchingEnergies| vec![name.to_string(), e.disk.to_string(), e.local.to_string(), e.global.to_string()];
    csv_text(&["method", "E_D", "E_loc", "E"], [row("OMT", &m.omt_energies), row("OMGMF", &m.omgmf_energies)])
}

/// Writes `match_{i}.json` and `energies_{i}.csv` for every adjacent pair.
pub fn cmd_match(session: &Session, out: &mut OutputSet) -> Result<Vec<SurfaceMatch>, PipelineError> {
    let matches = session.matches()?;
    for (i, (_, m)) in matches.iter().enumerate() {
        let json = serde_json::to_string_pretty(&match_record(i, m)).stage("cli", "serialize matching")?;
        out.write(&format!("match_{i}.json"), json.as_bytes())?;
        out.write(&format!("energies_{i}.csv"), energies_csv(m).as_bytes())?;
    }
    Ok(matches.into_iter().map(|(_, m)| m).collect())
}

/// Writes the partition mesh, the corrected path samples and the correction
/// reports of every source keyframe.
pub fn cmd_frame(session: &Session, out: &mut OutputSet) -> Result<Vec<GeodesicFrame>, PipelineError> {
    let frames = session.frames()?;
    for (i, frame) in frames.iter().enumerate() {
        let mesh = &session.keyframes[i].mesh;
        out.write(&format!("partition_{i}.obj"), write_obj(&frame.partition).as_bytes())?;
        let mut rows = Vec::new();
        for (pi, (path, disk)) in frame.paths.iter().zip(&frame.disk_paths).enumerate() {
            let pos = path.positions(mesh);
            let disk_full = path.disk_positions(mesh, &session.keyframes[i].param);
            for (k, (p, q)) in pos.iter().zip(&disk_full).enumerate() {
                rows.push(vec![pi, k].into_iter().map(|x| x.to_string()).chain([q.x, q.y, p.x, p.y, p.z].map(|x| x.to_string())).collect());
            }
            log::debug!("path {pi}: {} disk samples", disk.len());
        }
        out.write(&format!("paths_{i}.csv"), csv_text(&["path", "point", "u", "v", "x", "y", "z"], rows).as_bytes())?;
        let reports = frame.reports.iter().enumerate().map(|(pi, r)| {
            vec![
                pi.to_string(),
                r.iterations.to_string(),
                r.converged.to_string(),
                r.initial_length.to_string(),
                r.final_length.to_string(),
                r.touches_boundary.to_string(),
            ]
        });
        out.write(
            &format!("correction_{i}.csv"),
            csv_text(&["path", "iterations", "converged", "initial_length", "final_length", "touches_boundary"], reports).as_bytes(),
        )?;
    }
    Ok(frames)
}

/// One reconstructed morph frame.
#[derive(Debug, Clone)]
pub struct FrameResult {
    pub t: f64,
    pub mesh: TriangleMesh,
    pub extrapolated: bool,
    pub iterations: usize,
    pub displacement: f64,
    pub converged: bool,
    pub displacement_increases: usize,
    pub lambda_clamped: usize,
    pub l2: Option<f64>,
    pub linf: Option<f64>,
    pub improvement_rate: Option<f64>,
}

/// A reconstructed morphing sequence over the first keyframe's mesh.
struct MorphRun {
    homotopy: SignatureHomotopy,
    /// Per keyframe, the unit normals of that keyframe sampled on the
    /// unified mesh.
    keyframe_normals: Vec<Vec<Vector3<f64>>>,
}

impl MorphRun {
    fn new(session: &Session, registrations: &[RegistrationMap]) -> Result<Self, PipelineError> {
        let (signatures, colors, images) = transfer_keyframes(&session.keyframes, registrations).stage("homotopy", "transfer_keyframes")?;
        let homotopy = SignatureHomotopy::fit(&session.times(), &signatures, colors.as_deref()).stage("homotopy", "fit")?;
        let keyframe_normals = session
            .keyframes
            .iter()
            .zip(&images)
            .map(|(k, img)| sample_field(&k.mesh, &k.param, img, &k.mesh.vertex_normals()).stage("registration", "sample_field"))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { homotopy, keyframe_normals })
    }

    /// Normals of the keyframe closest in time, as the starting guess.
    fn warm_start(&self, t: f64) -> &[Vector3<f64>] {
        let times = self.homotopy.times();
        let k = (0..times.len()).min_by(|&a, &b| (times[a] - t).abs().total_cmp(&(times[b] - t).abs())).unwrap_or(0);
        &self.keyframe_normals[k]
    }

    fn frame(
        &self,
        unified: &TriangleMesh,
        solver: &ReconstructionSolver,
        config: &ReconstructionConfig,
        t: f64,
    ) -> Result<FrameResult, PipelineError> {
        let s = self.homotopy.eval(t);
        let r = solver.reconstruct(unified, &s.signature, Some(self.warm_start(t)), config).stage("reconstruction", "reconstruct")?;
        let mesh = r.mesh.with_vertex_colors(s.colors).stage("mesh-core", "set vertex colors")?;
        Ok(FrameResult {
            t,
            mesh,
            extrapolated: s.extrapolated,
            iterations: r.iterations,
            displacement: r.displacement,
            converged: r.converged,
            displacement_increases: r.displacement_increases,
            lambda_clamped: s.lambda_clamped,
            l2: None,
            linf: None,
            improvement_rate: None,
        })
    }
}

fn reference_at<'a>(refs: &'a [(f64, TriangleMesh)], t: f64) -> Option<&'a TriangleMesh> {
    refs.iter().find(|(rt, _)| (rt - t).abs() <= 1e-12 * rt.abs().max(1.0)).map(|(_, m)| m)
}

fn load_references(session: &Session) -> Result<Vec<(f64, TriangleMesh)>, PipelineError> {
    let unified = &session.keyframes[0].mesh;
    session
        .config
        .references
        .iter()
        .map(|r| {
            let mesh = load_mesh(&r.mesh).stage("mesh-core", "load_mesh")?;
            if mesh.faces() != unified.faces() {
                return Err(config_err(format!("reference {} does not share the first keyframe's connectivity", r.mesh.display())));
            }
            Ok((r.time, mesh))
        })
        .collect()
}

/// Reconstructs every requested frame (in parallel on the current rayon
/// pool) and fills in the reference metrics.
pub fn morph_frames(session: &Session) -> Result<Vec<FrameResult>, PipelineError> {
    let config = &session.config;
    if config.frames.is_empty() {
        return Err(config_err("no frame times requested"));
    }
    let frames = session.frames()?;
    let matches = session.matches()?;
    let unified = &session.keyframes[0];
    let solver = ReconstructionSolver::new(&unified.mesh, unified.param.uv()).stage("reconstruction", "factor interior system")?;
    let run = MorphRun::new(session, &session.registrations(&frames, &matches, config.method)?)?;
    let mut results = config
        .frames
        .par_iter()
        .map(|&t| run.frame(&unified.mesh, &solver, &config.reconstruction, t))
        .collect::<Result<Vec<_>, _>>()?;

    let refs = load_references(session)?;
    if !refs.is_empty() {
        let other_method = match config.method {
            Method::Omt => Method::Omgmf,
            Method::Omgmf => Method::Omt,
        };
        let other = MorphRun::new(session, &session.registrations(&frames, &matches, other_method)?)?;
        let uv = unified.param.uv();
        let metrics = results
            .par_iter()
            .map(|f| {
                let Some(reference) = reference_at(&refs, f.t) else {
                    return Ok((None, None, None));
                };
                let d = surface_diff(&f.mesh, reference, uv).stage("reconstruction", "surface_diff")?;
                let g = other.frame(&unified.mesh, &solver, &config.reconstruction, f.t)?;
                let (s_m, s_g) = match config.method {
                    Method::Omt => (&f.mesh, &g.mesh),
                    Method::Omgmf => (&g.mesh, &f.mesh),
                };
                let rate = improvement_rate(s_m, s_g, reference, uv).stage("reconstruction", "improvement_rate")?;
                Ok((Some(d.l2), Some(d.linf), Some(rate)))
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        for (f, (l2, linf, rate)) in results.iter_mut().zip(metrics) {
            f.l2 = l2;
            f.linf = linf;
            f.improvement_rate = rate;
        }
    }
    Ok(results)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn diagnostics_csv(frames: &[FrameResult]) -> String {
    csv_text(
        &[
            "t",
            "extrapolated",
            "iterations",
            "displacement",
            "converged",
            "displacement_increases",
            "lambda_clamped",
            "l2",
            "linf",
            "improvement_rate",
        ],
        frames.iter().map(|f| {
            vec![
                f.t.to_string(),
                f.extrapolated.to_string(),
                f.iterations.to_string(),
                f.displacement.to_string(),
                f.converged.to_string(),
                f.displacement_increases.to_string(),
                f.lambda_clamped.to_string(),
                opt(f.l2),
                opt(f.linf),
                opt(f.improvement_rate),
            ]
        }),
    )
}

/// Writes one OBJ per requested time and `diagnostics.csv`.
pub fn cmd_morph(session: &Session, out: &mut OutputSet) -> Result<Vec<FrameResult>, PipelineError> {
    let results = morph_frames(session)?;
    for f in &results {
        out.write(&frame_file_name(f.t), write_obj(&f.mesh).as_bytes())?;
        if !f.converged {
            log::warn!("frame t = {} stopped before converging", f.t);
        }
    }
    out.write("diagnostics.csv", diagnostics_csv(&results).as_bytes())?;
    Ok(results)
}

/// Compares previously emitted frames with the reference surfaces and writes
/// `metrics.csv`.
pub fn cmd_metrics(session: &Session, out: &mut OutputSet) -> Result<Vec<(f64, f64, f64)>, PipelineError> {
    let refs = load_references(session)?;
    if refs.is_empty() {
        return Err(config_err("no reference meshes configured"));
    }
    let uv: Vec<Vector2<f64>> = session.keyframes[0].param.uv().to_vec();
    let mut rows = Vec::new();
    for (t, reference) in &refs {
        let path = session.config.output.join(frame_file_name(*t));
        if !path.is_file() {
            return Err(config_err(format!("no emitted frame for reference time {t} ({})", path.display())));
        }
        let frame = load_mesh(&path).stage("mesh-core", "load_mesh")?;
        let d = surface_diff(&frame, reference, &uv).stage("reconstruction", "surface_diff")?;
        rows.push((*t, d.l2, d.linf));
    }
    let mut text = String::from("t,l2,linf\n");
    for (t, l2, linf) in &rows {
        let _ = writeln!(text, "{t},{l2},{linf}");
    }
    out.write("metrics.csv", text.as_bytes())?;
    Ok(rows)
}
