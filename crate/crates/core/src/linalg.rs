//! Thin wrapper over faer's sparse direct solvers.
//!
//! Everything in this crate that factors a matrix goes through here so the
//! solver backend, the Cholesky-then-LU fallback and the symbolic reuse live
//! in one place.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("could not assemble sparse matrix: {0}")]
    Assembly(String),
    #[error("matrix is singular or not factorizable: {0}")]
    Singular(String),
}

/// Sparse square matrix in triplet form, assembled on demand.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    dim: usize,
    triplets: Vec<Triplet<usize, usize, f64>>,
}

impl SparseMatrix {
    pub fn new(dim: usize) -> Self {
        Self { dim, triplets: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Adds `value` at `(row, col)`; repeated entries are summed.
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.triplets.push(Triplet::new(row, col, value));
    }

    fn assemble(&self) -> Result<SparseColMat<usize, f64>, SolveError> {
        SparseColMat::try_new_from_triplets(self.dim, self.dim, &self.triplets)
            .map_err(|e| SolveError::Assembly(format!("{e:?}")))
    }
}

enum Factor {
    Cholesky(Llt<usize, f64>),
    Lu(Lu<usize, f64>),
}

/// A factored square matrix ready for repeated solves.
pub struct Factorization {
    dim: usize,
    factor: Factor,
}

impl Factorization {
    /// Factors a symmetric matrix by Cholesky, falling back to LU when the
    /// matrix turns out not to be positive definite.
    pub fn symmetric(matrix: &SparseMatrix) -> Result<Self, SolveError> {
        let mat = matrix.assemble()?;
        let factor = match mat.sp_cholesky(Side::Lower) {
            Ok(llt) => Factor::Cholesky(llt),
            Err(_) => Factor::Lu(mat.sp_lu().map_err(|e| SolveError::Singular(format!("{e:?}")))?),
        };
        Ok(Self { dim: matrix.dim, factor })
    }

    pub fn is_cholesky(&self) -> bool {
        matches!(self.factor, Factor::Cholesky(_))
    }

    /// Solves for every column of `rhs` (column-major, `dim` rows each).
    pub fn solve_columns(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SolveError> {
        let b = Mat::<f64>::from_fn(self.dim, rhs.len(), |i, j| rhs[j][i]);
        let x = match &self.factor {
            Factor::Cholesky(f) => f.solve(&b),
            Factor::Lu(f) => f.solve(&b),
        };
        let cols: Vec<Vec<f64>> = (0..rhs.len()).map(|j| (0..self.dim).map(|i| x[(i, j)]).collect()).collect();
        if cols.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SolveError::Singular("solution contains non-finite values".into()));
        }
        Ok(cols)
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
        Ok(self.solve_columns(std::slice::from_ref(&rhs.to_vec()))?.remove(0))
    }
}

/// Symbolic analysis of a fixed sparsity pattern, reused across numeric
/// refactorizations with changing values.
pub struct PatternSolver {
    llt: SymbolicLlt<usize>,
    lu: Option<SymbolicLu<usize>>,
}

impl PatternSolver {
    pub fn analyze(matrix: &SparseMatrix) -> Result<Self, SolveError> {
        let mat = matrix.assemble()?;
        let llt = SymbolicLlt::try_new(mat.symbolic(), Side::Lower).map_err(|e| SolveError::Assembly(format!("{e:?}")))?;
        Ok(Self { llt, lu: None })
    }

    /// Numeric factorization of a matrix with the analyzed pattern.
    pub fn factor(&mut self, matrix: &SparseMatrix) -> Result<Factorization, SolveError> {
        let mat = matrix.assemble()?;
        if let Ok(llt) = Llt::try_new_with_symbolic(self.llt.clone(), mat.as_ref(), Side::Lower) {
            return Ok(Factorization { dim: matrix.dim, factor: Factor::Cholesky(llt) });
        }
        if self.lu.is_none() {
            self.lu = Some(SymbolicLu::try_new(mat.symbolic()).map_err(|e| SolveError::Assembly(format!("{e:?}")))?);
        }
        let symbolic = self.lu.clone().expect("set above");
        let lu = Lu::try_new_with_symbolic(symbolic, mat.as_ref()).map_err(|e| SolveError::Singular(format!("{e:?}")))?;
        Ok(Factorization { dim: matrix.dim, factor: Factor::Lu(lu) })
    }
}

/// Pins faer to sequential execution so results do not depend on thread
/// scheduling.
pub fn use_sequential_solvers() {
    faer::set_global_parallelism(faer::Par::Seq);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize, shift: f64) -> SparseMatrix {
        let mut m = SparseMatrix::new(n);
        for i in 0..n {
            m.push(i, i, 2.0 + shift);
            if i + 1 < n {
                m.push(i, i + 1, -1.0);
                m.push(i + 1, i, -1.0);
            }
        }
        m
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let m = tridiag(5, 0.0);
        let f = Factorization::symmetric(&m).unwrap();
        assert!(f.is_cholesky());
        let x = f.solve(&[1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_falls_back_to_lu() {
        let m = tridiag(4, -3.0);
        let f = Factorization::symmetric(&m).unwrap();
        assert!(!f.is_cholesky());
        let b = [1.0, 2.0, 3.0, 4.0];
        let x = f.solve(&b).unwrap();
        // Residual check against the tridiagonal matrix.
        for i in 0..4 {
            let mut r = -1.0 * x[i];
            if i > 0 {
                r -= x[i - 1];
            }
            if i < 3 {
                r -= x[i + 1];
            }
            assert!((r - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn pattern_reuse_matches_fresh_factorization() {
        let mut p = PatternSolver::analyze(&tridiag(6, 0.0)).unwrap();
        let m = tridiag(6, 0.5);
        let a = p.factor(&m).unwrap().solve(&[1.0; 6]).unwrap();
        let b = Factorization::symmetric(&m).unwrap().solve(&[1.0; 6]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
