use nalgebra::{DMatrix, DVector, Vector2};

use super::MatchingError;

/// `r² log r`, continuously extended by 0 at r = 0.
pub fn plate_kernel(r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        r * r * r.ln()
    }
}

/// Uniform `n × n` grid on [−1, 1]², row-major with x varying fastest.
pub fn grid_centers(n: usize) -> Vec<Vector2<f64>> {
    let step = 2.0 / (n - 1) as f64;
    (0..n * n)
        .map(|j| Vector2::new(-1.0 + step * (j % n) as f64, -1.0 + step * (j / n) as f64))
        .collect()
}

/// Weighted sum of thin-plate kernels centered on a square grid:
/// `g(x) = Σ_j α_j w_j K(|x − c_j|)` per component.
#[derive(Debug, Clone)]
pub struct ThinPlateField {
    n: usize,
    centers: Vec<Vector2<f64>>,
    alpha1: Vec<f64>,
    alpha2: Vec<f64>,
    weights: Vec<f64>,
    epsilon: f64,
    residual: f64,
}

impl ThinPlateField {
    pub fn zero(n: usize, weights: Vec<f64>, epsilon: f64) -> Result<Self, MatchingError> {
        check_grid(n, &weights, epsilon)?;
        Ok(Self {
            n,
            centers: grid_centers(n),
            alpha1: vec![0.0; n * n],
            alpha2: vec![0.0; n * n],
            weights,
            epsilon,
            residual: 0.0,
        })
    }

    /// Builds a field from explicit coefficients.
    pub fn from_coefficients(
        n: usize,
        alpha1: Vec<f64>,
        alpha2: Vec<f64>,
        weights: Vec<f64>,
        epsilon: f64,
    ) -> Result<Self, MatchingError> {
        check_grid(n, &weights, epsilon)?;
        if alpha1.len() != n * n || alpha2.len() != n * n {
            return Err(MatchingError::InvalidGrid(format!("coefficient arrays must have length {}", n * n)));
        }
        Ok(Self { n, centers: grid_centers(n), alpha1, alpha2, weights, epsilon, residual: 0.0 })
    }

    /// Least-squares fit of `g(points[i]) ≈ values[i]`. Orthogonal
    /// factorization when there are at least as many points as centers,
    /// Tikhonov-regularized normal equations otherwise.
    pub fn fit(
        points: &[Vector2<f64>],
        values: &[Vector2<f64>],
        n: usize,
        epsilon: f64,
        weights: Vec<f64>,
    ) -> Result<Self, MatchingError> {
        check_grid(n, &weights, epsilon)?;
        if points.len() != values.len() {
            return Err(MatchingError::CountMismatch { sources: points.len(), targets: values.len() });
        }
        if points.is_empty() {
            return Err(MatchingError::TooFewLandmarks { needed: 1, found: 0 });
        }
        let centers = grid_centers(n);
        let s = design_matrix(points, &centers, &weights);
        let b1 = DVector::from_iterator(values.len(), values.iter().map(|v| v.x));
        let b2 = DVector::from_iterator(values.len(), values.iter().map(|v| v.y));
        let nc = n * n;
        let m = points.len();

        let mut solved = None;
        if nc <= m {
            let qr = s.clone().qr();
            let r = qr.r();
            let diag_max = (0..nc).map(|k| r[(k, k)].abs()).fold(0.0, f64::max);
            let rank_ok = (0..nc).all(|k| r[(k, k)].abs() > 1e-12 * diag_max.max(f64::MIN_POSITIVE));
            if rank_ok {
                let q = qr.q();
                let a1 = r.solve_upper_triangular(&(q.transpose() * &b1)).expect("nonsingular R");
                let a2 = r.solve_upper_triangular(&(q.transpose() * &b2)).expect("nonsingular R");
                solved = Some((a1, a2));
            } else if epsilon == 0.0 {
                return Err(MatchingError::RankDeficient);
            }
        }
        let (a1, a2) = match solved {
            Some(s) => s,
            None => {
                let normal = DMatrix::identity(nc, nc) * epsilon + s.transpose() * &s;
                let chol = normal.cholesky().ok_or(MatchingError::RankDeficient)?;
                (chol.solve(&(s.transpose() * &b1)), chol.solve(&(s.transpose() * &b2)))
            }
        };
        let residual = ((&s * &a1 - &b1).norm_squared() + (&s * &a2 - &b2).norm_squared()).sqrt();
        Ok(Self {
            n,
            centers,
            alpha1: a1.iter().copied().collect(),
            alpha2: a2.iter().copied().collect(),
            weights,
            epsilon,
            residual,
        })
    }

    pub fn eval(&self, x: &Vector2<f64>) -> Vector2<f64> {
        let mut out = Vector2::zeros();
        for j in 0..self.centers.len() {
            let k = self.weights[j] * plate_kernel((x - self.centers[j]).norm());
            out.x += self.alpha1[j] * k;
            out.y += self.alpha2[j] * k;
        }
        out
    }

    /// The same field with all coefficients multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            alpha1: self.alpha1.iter().map(|a| a * s).collect(),
            alpha2: self.alpha2.iter().map(|a| a * s).collect(),
            ..self.clone()
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn centers(&self) -> &[Vector2<f64>] {
        &self.centers
    }

    pub fn alpha1(&self) -> &[f64] {
        &self.alpha1
    }

    pub fn alpha2(&self) -> &[f64] {
        &self.alpha2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Landmark residual `‖S α − b‖` of the fit (zero for unfitted fields).
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn is_zero(&self) -> bool {
        self.alpha1.iter().chain(&self.alpha2).all(|a| *a == 0.0)
    }
}

/// The `m × n²` matrix `S_ij = w_j K(|p_i − c_j|)`.
pub fn design_matrix(points: &[Vector2<f64>], centers: &[Vector2<f64>], weights: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), centers.len(), |i, j| weights[j] * plate_kernel((points[i] - centers[j]).norm()))
}

fn check_grid(n: usize, weights: &[f64], epsilon: f64) -> Result<(), MatchingError> {
    if n < 2 {
        return Err(MatchingError::InvalidGrid(format!("grid side must be at least 2, got {n}")));
    }
    if weights.len() != n * n {
        return Err(MatchingError::InvalidGrid(format!("expected {} center weights, got {}", n * n, weights.len())));
    }
    if !(epsilon >= 0.0) {
        return Err(MatchingError::NegativeEpsilon(epsilon));
    }
    Ok(())
}
