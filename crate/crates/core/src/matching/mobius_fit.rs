use nalgebra::{Matrix3, Vector2, Vector3};
use num_complex::Complex64;

use super::{LandmarkSet, MatchingError};
use crate::conformal::{to_complex, MobiusDisk};

#[derive(Debug, Clone, Copy)]
pub struct MobiusFit {
    pub mobius: MobiusDisk,
    /// Σᵢ ‖m(pᵢ) − qᵢ‖² at the returned optimum.
    pub objective: f64,
}

const MAX_CENTER: f64 = 0.999;

pub fn mobius_objective(m: &MobiusDisk, p: &[Vector2<f64>], q: &[Vector2<f64>]) -> f64 {
    p.iter().zip(q).map(|(p, q)| (m.apply(p) - q).norm_squared()).sum()
}

/// Disk Möbius transformation best matching the source landmarks to the
/// target landmarks in least squares.
pub fn optimal_mobius(lm: &LandmarkSet) -> Result<MobiusFit, MatchingError> {
    optimal_mobius_points(lm.source_disk(), lm.target_disk())
}

/// Multi-start Levenberg–Marquardt over (Re a, Im a, θ), started from a 5×5
/// grid of centers times 8 rotation angles.
pub fn optimal_mobius_points(p: &[Vector2<f64>], q: &[Vector2<f64>]) -> Result<MobiusFit, MatchingError> {
    if p.len() != q.len() {
        return Err(MatchingError::CountMismatch { sources: p.len(), targets: q.len() });
    }
    if p.len() < 2 {
        return Err(MatchingError::TooFewLandmarks { needed: 2, found: p.len() });
    }
    let zp: Vec<Complex64> = p.iter().map(to_complex).collect();
    let zq: Vec<Complex64> = q.iter().map(to_complex).collect();
    let grid = [-0.6, -0.3, 0.0, 0.3, 0.6];
    let mut best: Option<(Vector3<f64>, f64)> = None;
    for &ay in &grid {
        for &ax in &grid {
            for k in 0..8 {
                let start = Vector3::new(ax, ay, k as f64 * std::f64::consts::FRAC_PI_4);
                let (x, f) = refine(start, &zp, &zq);
                if best.is_none_or(|(_, bf)| f < bf) {
                    best = Some((x, f));
                }
            }
        }
    }
    let (x, objective) = best.expect("at least one start");
    let theta = normalize_angle(x.z);
    let mobius = MobiusDisk::new(Complex64::new(x.x, x.y), theta).expect("center kept inside the disk");
    Ok(MobiusFit { mobius, objective })
}

fn normalize_angle(t: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut r = t.rem_euclid(tau);
    if r > std::f64::consts::PI {
        r -= tau;
    }
    r
}

fn objective(x: &Vector3<f64>, p: &[Complex64], q: &[Complex64]) -> f64 {
    let (a, rot) = (Complex64::new(x.x, x.y), Complex64::from_polar(1.0, x.z));
    p.iter().zip(q).map(|(z, w)| (rot * (z - a) / (1.0 - a.conj() * z) - w).norm_sqr()).sum()
}

/// Gradient-based refinement from one start; never increases the objective.
fn refine(start: Vector3<f64>, p: &[Complex64], q: &[Complex64]) -> (Vector3<f64>, f64) {
    let mut x = start;
    let mut f = objective(&x, p, q);
    let mut mu = 1e-3;
    for _ in 0..200 {
        let a = Complex64::new(x.x, x.y);
        let rot = Complex64::from_polar(1.0, x.z);
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (z, w) in p.iter().zip(q) {
            let den = 1.0 - a.conj() * z;
            let m = rot * (z - a) / den;
            let r = m - w;
            let d_a = -rot / den;
            let d_abar = rot * (z - a) * z / (den * den);
            let d_x = d_a + d_abar;
            let d_y = Complex64::i() * (d_a - d_abar);
            let d_t = Complex64::i() * m;
            for row in [[d_x.re, d_y.re, d_t.re], [d_x.im, d_y.im, d_t.im]] {
                let j = Vector3::new(row[0], row[1], row[2]);
                jtj += j * j.transpose();
            }
            jtr += Vector3::new(d_x.re, d_y.re, d_t.re) * r.re + Vector3::new(d_x.im, d_y.im, d_t.im) * r.im;
        }
        if jtr.norm() < 1e-15 {
            break;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut lhs = jtj;
            for k in 0..3 {
                lhs[(k, k)] += mu * (1.0 + jtj[(k, k)]);
            }
            let Some(step) = lhs.lu().solve(&(-jtr)) else {
                mu *= 10.0;
                continue;
            };
            let trial = x + step;
            if trial.xy().norm() < MAX_CENTER {
                let ft = objective(&trial, p, q);
                if ft < f {
                    let small = step.norm() < 1e-14 * (1.0 + x.norm()) || f - ft <= 1e-16 * f;
                    x = trial;
                    f = ft;
                    mu = (mu * 0.3).max(1e-12);
                    improved = !small;
                    break;
                }
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (x, f)
}
