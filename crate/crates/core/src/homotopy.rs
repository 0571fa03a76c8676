//! Natural cubic-spline tracks through keyframe fields, and the morphing
//! homotopy of surface signatures built from them.

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::conformal::DiskParameterization;
use crate::mesh::TriangleMesh;
use crate::registration::{transfer_attributes, transfer_signature, RegistrationError, RegistrationMap, SurfaceSignature};

/// Smallest conformal factor produced by signature interpolation.
pub const LAMBDA_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum HomotopyError {
    #[error("need at least 2 keyframes, found {0}")]
    TooFewKeyframes(usize),
    #[error("keyframe times must increase strictly (at index {0})")]
    NonIncreasingTimes(usize),
    #[error("keyframe {keyframe} has {found} values, expected {expected}")]
    FieldLength { keyframe: usize, expected: usize, found: usize },
    #[error("expected {expected} registrations for the keyframe chain, found {found}")]
    RegistrationCount { expected: usize, found: usize },
    #[error(transparent)]
    Registration(#[from] RegistrationError),
}

/// Per-channel natural cubic spline through values at strictly increasing
/// knot times. With two knots it is linear interpolation.
#[derive(Debug, Clone)]
pub struct KeyframeTrack {
    times: Vec<f64>,
    /// `values[k][c]`: channel `c` at knot `k`.
    values: Vec<Vec<f64>>,
    /// Second derivatives at the knots, same layout.
    second: Vec<Vec<f64>>,
}

/// Value of a track at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSample {
    pub values: Vec<f64>,
    /// `t` lies outside the knot range and the end pieces were extended.
    pub extrapolated: bool,
}

impl KeyframeTrack {
    pub fn fit(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, HomotopyError> {
        let k = times.len();
        if k < 2 {
            return Err(HomotopyError::TooFewKeyframes(k));
        }
        if values.len() != k {
            return Err(HomotopyError::FieldLength { keyframe: values.len().min(k), expected: k, found: values.len() });
        }
        for i in 1..k {
            if !(times[i] > times[i - 1]) {
                return Err(HomotopyError::NonIncreasingTimes(i));
            }
        }
        let channels = values[0].len();
        for (i, v) in values.iter().enumerate() {
            if v.len() != channels {
                return Err(HomotopyError::FieldLength { keyframe: i, expected: channels, found: v.len() });
            }
        }
        let second = natural_second_derivatives(&times, &values);
        Ok(Self { times, values, second })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn channels(&self) -> usize {
        self.values[0].len()
    }

    pub fn knot_values(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    /// Second derivatives of every channel at knot `k`.
    pub fn second_derivatives(&self, k: usize) -> &[f64] {
        &self.second[k]
    }

    /// Coefficients `[a, b, c, d]` of piece `i` of channel `ch`, for
    /// `a + b s + c s² + d s³` with `s = t − tᵢ`.
    pub fn coefficients(&self, piece: usize, ch: usize) -> [f64; 4] {
        let h = self.times[piece + 1] - self.times[piece];
        let (y0, y1) = (self.values[piece][ch], self.values[piece + 1][ch]);
        let (m0, m1) = (self.second[piece][ch], self.second[piece + 1][ch]);
        [y0, (y1 - y0) / h - h * (2.0 * m0 + m1) / 6.0, m0 / 2.0, (m1 - m0) / (6.0 * h)]
    }

    /// Index of the piece used at `t` (end pieces extend past the knots).
    pub fn piece_at(&self, t: f64) -> usize {
        let n = self.times.len() - 1;
        match self.times.partition_point(|&x| x <= t) {
            0 => 0,
            p if p > n => n - 1,
            p => p - 1,
        }
    }

    pub fn eval(&self, t: f64) -> TrackSample {
        let first = self.times[0];
        let last = *self.times.last().unwrap();
        let extrapolated = t < first || t > last;
        if let Some(k) = self.times.iter().position(|&x| x == t) {
            return TrackSample { values: self.values[k].clone(), extrapolated: false };
        }
        let i = self.piece_at(t);
        let s = t - self.times[i];
        let values = (0..self.channels())
            .into_par_iter()
            .map(|ch| {
                let [a, b, c, d] = self.coefficients(i, ch);
                a + s * (b + s * (c + s * d))
            })
            .collect();
        TrackSample { values, extrapolated }
    }
}

/// Solves the natural-spline tridiagonal system once per knot layout and
/// applies it to every channel.
fn natural_second_derivatives(times: &[f64], values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = times.len();
    let channels = values[0].len();
    let mut second = vec![vec![0.0; channels]; k];
    if k < 3 {
        return second;
    }
    let n = k - 2;
    let h: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    // Forward elimination of the interior system
    // h[i-1] M[i-1] + 2(h[i-1]+h[i]) M[i] + h[i] M[i+1] = r[i].
    let mut diag = vec![0.0; n];
    let mut factor = vec![0.0; n];
    for j in 0..n {
        let i = j + 1;
        diag[j] = 2.0 * (h[i - 1] + h[i]);
        if j > 0 {
            factor[j] = h[i - 1] / diag[j - 1];
            diag[j] -= factor[j] * h[i - 1];
        }
    }
    let columns: Vec<Vec<f64>> = (0..channels)
        .into_par_iter()
        .map(|ch| {
            let mut r: Vec<f64> = (0..n)
                .map(|j| {
                    let i = j + 1;
                    6.0 * ((values[i + 1][ch] - values[i][ch]) / h[i] - (values[i][ch] - values[i - 1][ch]) / h[i - 1])
                })
                .collect();
            for j in 1..n {
                r[j] -= factor[j] * r[j - 1];
            }
            let mut m = vec![0.0; n];
            m[n - 1] = r[n - 1] / diag[n - 1];
            for j in (0..n - 1).rev() {
                m[j] = (r[j] - h[j + 1] * m[j + 1]) / diag[j];
            }
            m
        })
        .collect();
    for (ch, m) in columns.into_iter().enumerate() {
        for j in 0..n {
            second[j + 1][ch] = m[j];
        }
    }
    second
}

fn flatten3(v: &[Vector3<f64>]) -> Vec<f64> {
    v.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

fn unflatten3(v: &[f64]) -> Vec<Vector3<f64>> {
    v.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect()
}

/// Signature of the morph at one time.
#[derive(Debug, Clone)]
pub struct MorphedSignature {
    pub signature: SurfaceSignature,
    pub colors: Option<Vec<Vector3<f64>>>,
    pub extrapolated: bool,
    /// Vertices whose interpolated λ was raised to the floor.
    pub lambda_clamped: usize,
}

/// Spline tracks of mean curvature, conformal factor, boundary positions
/// and (optionally) vertex colors over registered keyframes.
#[derive(Debug, Clone)]
pub struct SignatureHomotopy {
    h: KeyframeTrack,
    lambda: KeyframeTrack,
    boundary: KeyframeTrack,
    colors: Option<KeyframeTrack>,
}

impl SignatureHomotopy {
    /// Keyframe signatures must already live on one unified mesh.
    pub fn fit(
        times: &[f64],
        signatures: &[SurfaceSignature],
        colors: Option<&[Vec<Vector3<f64>>]>,
    ) -> Result<Self, HomotopyError> {
        if signatures.len() != times.len() {
            return Err(HomotopyError::FieldLength { keyframe: 0, expected: times.len(), found: signatures.len() });
        }
        let h = KeyframeTrack::fit(times.to_vec(), signatures.iter().map(|s| s.h.clone()).collect())?;
        let lambda = KeyframeTrack::fit(times.to_vec(), signatures.iter().map(|s| s.lambda.clone()).collect())?;
        let boundary = KeyframeTrack::fit(times.to_vec(), signatures.iter().map(|s| flatten3(&s.boundary)).collect())?;
        if lambda.channels() != h.channels() {
            return Err(HomotopyError::FieldLength { keyframe: 0, expected: h.channels(), found: lambda.channels() });
        }
        let colors = match colors {
            Some(c) => Some(KeyframeTrack::fit(times.to_vec(), c.iter().map(|c| flatten3(c)).collect())?),
            None => None,
        };
        Ok(Self { h, lambda, boundary, colors })
    }

    pub fn times(&self) -> &[f64] {
        self.h.times()
    }

    pub fn eval(&self, t: f64) -> MorphedSignature {
        let h = self.h.eval(t);
        let mut lambda = self.lambda.eval(t).values;
        let mut lambda_clamped = 0;
        for l in &mut lambda {
            if !(*l >= LAMBDA_FLOOR) {
                *l = LAMBDA_FLOOR;
                lambda_clamped += 1;
            }
        }
        if lambda_clamped > 0 {
            log::warn!("conformal factor floored at {LAMBDA_FLOOR} on {lambda_clamped} vertices at t = {t}");
        }
        let boundary = unflatten3(&self.boundary.eval(t).values);
        let colors = self
            .colors
            .as_ref()
            .map(|c| unflatten3(&c.eval(t).values).into_iter().map(|c| c.map(|x| x.clamp(0.0, 1.0))).collect());
        MorphedSignature {
            signature: SurfaceSignature { h: h.values, lambda, boundary },
            colors,
            extrapolated: h.extrapolated,
            lambda_clamped,
        }
    }
}

/// A parameterized keyframe surface.
#[derive(Debug, Clone)]
pub struct Keyframe {
    pub mesh: TriangleMesh,
    pub param: DiskParameterization,
}

/// Disk images of the unified mesh's vertices in every keyframe's disk,
/// through the composed registrations `Φᵢ ∘ ⋯ ∘ Φ₁`.
pub fn compose_images(
    unified: &TriangleMesh,
    unified_uv: &[Vector2<f64>],
    registrations: &[RegistrationMap],
) -> Result<Vec<Vec<Vector2<f64>>>, HomotopyError> {
    let mut images = vec![unified_uv.to_vec()];
    for (i, reg) in registrations.iter().enumerate() {
        let next = if i == 0 {
            reg.map_vertices(unified, unified_uv)?
        } else {
            images[i].par_iter().map(|x| reg.apply(x)).collect::<Result<Vec<_>, _>>()?
        };
        images.push(next);
    }
    Ok(images)
}

/// Keyframe signatures (and colors, when every keyframe has them) pulled
/// back onto the first keyframe's mesh, which serves as the unified mesh.
pub fn transfer_keyframes(
    keyframes: &[Keyframe],
    registrations: &[RegistrationMap],
) -> Result<(Vec<SurfaceSignature>, Option<Vec<Vec<Vector3<f64>>>>, Vec<Vec<Vector2<f64>>>), HomotopyError> {
    if keyframes.len() < 2 {
        return Err(HomotopyError::TooFewKeyframes(keyframes.len()));
    }
    if registrations.len() + 1 != keyframes.len() {
        return Err(HomotopyError::RegistrationCount { expected: keyframes.len() - 1, found: registrations.len() });
    }
    let unified = &keyframes[0];
    let images = compose_images(&unified.mesh, unified.param.uv(), registrations)?;
    let mut signatures = vec![SurfaceSignature::of_surface(&unified.mesh, &unified.param)?];
    for (k, img) in keyframes[1..].iter().zip(&images[1..]) {
        let own = SurfaceSignature::of_surface(&k.mesh, &k.param)?;
        signatures.push(transfer_signature(&unified.mesh, img, &k.mesh, &k.param, &own)?);
    }
    let colors = if keyframes.iter().all(|k| k.mesh.colors().is_some()) {
        let mut c = vec![unified.mesh.colors().unwrap().to_vec()];
        for (k, img) in keyframes[1..].iter().zip(&images[1..]) {
            c.push(transfer_attributes(img, &k.mesh, &k.param)?.expect("colors present"));
        }
        Some(c)
    } else {
        None
    };
    Ok((signatures, colors, images))
}

/// Signature of the morph at time `t`, with the first keyframe's mesh as
/// the unified mesh.
pub fn morph_signature(
    keyframes: &[Keyframe],
    registrations: &[RegistrationMap],
    times: &[f64],
    t: f64,
) -> Result<MorphedSignature, HomotopyError> {
    let (signatures, colors, _) = transfer_keyframes(keyframes, registrations)?;
    let homotopy = SignatureHomotopy::fit(times, &signatures, colors.as_deref())?;
    Ok(homotopy.eval(t))
}
