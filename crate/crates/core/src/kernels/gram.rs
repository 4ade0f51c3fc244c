use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Nugget escalation stops once the jitter would exceed this multiple of σ².
pub const MAX_NUGGET_RATIO: f64 = 1e-4;

/// A Cholesky pivot `d_j` with `d_j ≤ PIVOT_TOLERANCE · max_i K_ii` counts as a
/// failure, so that numerically singular Grams are reported rather than
/// factorized with garbage.
pub const PIVOT_TOLERANCE: f64 = 1e-14;

/// `K_n + nugget·I` with its lower Cholesky factor.
#[derive(Debug, Clone)]
pub struct GramFactorization {
    gram: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
    nugget: f64,
}

impl GramFactorization {
    /// Factorizes `k + nugget·I`. On failure the nugget is multiplied by 10 and
    /// retried while it stays at or below `max_nugget`. A zero nugget gets a
    /// single attempt.
    pub fn new(k: DMatrix<f64>, nugget: f64, max_nugget: f64) -> Result<Self> {
        let n = k.nrows();
        let mut current = nugget;
        loop {
            let mut gram = k.clone();
            for i in 0..n {
                gram[(i, i)] += current;
            }
            if let Some(chol) = cholesky(&gram) {
                let log_det = 2.0 * chol.diagonal().iter().map(|d| d.ln()).sum::<f64>();
                if current > nugget {
                    log::debug!("gram: nugget escalated from {nugget:e} to {current:e}");
                }
                return Ok(Self {
                    gram,
                    chol,
                    log_det,
                    nugget: current,
                });
            }
            let next = current * 10.0;
            if current == 0.0 || next > max_nugget * (1.0 + 1e-12) {
                return Err(Error::Cholesky { n, nugget: current });
            }
            current = next;
        }
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// The nugget actually used (after any escalation).
    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn len(&self) -> usize {
        self.gram.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.gram.nrows() == 0
    }

    /// `L⁻¹ b`
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// `(K_n + nugget·I)⁻¹ b`
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let z = self.solve_lower(b);
        self.chol
            .tr_solve_lower_triangular(&z)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// `(K_n + nugget·I)⁻¹ B`
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let z = self
            .chol
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal");
        self.chol
            .tr_solve_lower_triangular(&z)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let mut inv = self.solve_matrix(&DMatrix::identity(self.len(), self.len()));
        let n = self.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = v;
                inv[(j, i)] = v;
            }
        }
        inv
    }
}

/// Lower Cholesky factor, or `None` if a pivot is non-positive relative to the
/// largest diagonal entry.
fn cholesky(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let max_diag = a.diagonal().iter().fold(0.0f64, |m, &v| m.max(v));
    if !(max_diag.is_finite() && max_diag > 0.0) {
        return None;
    }
    let tol = PIVOT_TOLERANCE * max_diag;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > tol) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}
