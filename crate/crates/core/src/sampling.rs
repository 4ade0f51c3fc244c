//! Sample paths of functional-input GPs.
//!
//! Two routes are provided. Gram-Cholesky draws are exact for any finite set
//! of inputs and either kernel. Karhunen–Loève draws use a Nyström
//! eigendecomposition of the base kernel and apply to the linear kernel only.
//!
//! Random streams: path `p` of a family drawn with seed `s` uses
//! `ChaCha8Rng::seed_from_u64(s)` switched to stream `p`, and consumes standard
//! normals from it in input order. Paths are therefore independent of each
//! other and of how many paths are requested.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::domain::{common_grid, FunctionalInput, QuadratureGrid};
use crate::error::{Error, Result};
use crate::format::format_sig;
use crate::kernels::{node_covariance, KernelSpec, MaternParams};

/// Default number of retained eigenpairs.
pub fn default_truncation(n_nodes: usize) -> usize {
    n_nodes.min(100)
}

/// The generator for path (or cell) `stream` under `seed`.
pub fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` independent standard normals.
pub fn standard_normals(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

/// Leading Mercer eigenpairs of a base kernel, approximated on a grid.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    grid: Arc<QuadratureGrid>,
    eigenvalues: Vec<f64>,
    /// `n_q x m`, column `j` holds `φ_j` at the nodes.
    eigenfunctions: DMatrix<f64>,
    tail_mass: f64,
}

impl EigenSystem {
    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    /// `λ_1 ≥ … ≥ λ_m > 0`
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfunction_values(&self) -> &DMatrix<f64> {
        &self.eigenfunctions
    }

    pub fn truncation(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Σ_{j>m} λ_j` over the discarded (positive) eigenvalues.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// `φ_j` (zero-based) as a functional input.
    pub fn eigenfunction(&self, j: usize) -> Result<FunctionalInput> {
        if j >= self.truncation() {
            return Err(Error::InvalidParameter {
                name: "eigenfunction index",
                value: j as f64,
                reason: "exceeds the truncation",
            });
        }
        Ok(FunctionalInput::from_values(
            self.grid.clone(),
            self.eigenfunctions.column(j).into_owned(),
        )?
        .with_label(format!("phi{}", j + 1)))
    }

    /// `(⟨φ_j, g_i⟩)_{ij}` by quadrature.
    pub fn coefficients(&self, inputs: &[FunctionalInput]) -> Result<DMatrix<f64>> {
        let w = self.grid.weights();
        let mut out = DMatrix::zeros(inputs.len(), self.truncation());
        for (i, g) in inputs.iter().enumerate() {
            if !Arc::ptr_eq(g.grid(), &self.grid) && **g.grid() != *self.grid {
                return Err(Error::GridMismatch);
            }
            let wg = g.values().component_mul(w);
            for j in 0..self.truncation() {
                out[(i, j)] = self.eigenfunctions.column(j).dot(&wg);
            }
        }
        Ok(out)
    }
}

/// Nyström eigenpairs of `params` on `grid`: the symmetric eigenproblem of
/// `W^{1/2} Ψ W^{1/2}` mapped back by `W^{-1/2}`, truncated to the top `m`.
pub fn nystrom_eig(
    params: &MaternParams,
    grid: &Arc<QuadratureGrid>,
    m: usize,
) -> Result<EigenSystem> {
    params.validate()?;
    let nq = grid.len();
    if m == 0 || m > nq {
        return Err(Error::InvalidParameter {
            name: "truncation",
            value: m as f64,
            reason: "must be between 1 and the number of grid nodes",
        });
    }
    if params.lengthscales.len() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: params.lengthscales.len(),
        });
    }
    let sqrt_w = grid.weights().map(f64::sqrt);
    let mut a = node_covariance(grid, params);
    for j in 0..nq {
        for i in 0..nq {
            a[(i, j)] *= sqrt_w[i] * sqrt_w[j];
        }
    }
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..nq).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let kept: Vec<usize> = order
        .iter()
        .copied()
        .take(m)
        .take_while(|&i| eig.eigenvalues[i] > 0.0)
        .collect();
    if kept.is_empty() {
        return Err(Error::InvalidParameter {
            name: "truncation",
            value: 0.0,
            reason: "base kernel matrix has no positive eigenvalues",
        });
    }
    if kept.len() < m {
        log::warn!(
            "nystrom: only {} of the requested {m} eigenvalues are positive",
            kept.len()
        );
    }
    let tail_mass = order[kept.len()..]
        .iter()
        .map(|&i| eig.eigenvalues[i].max(0.0))
        .fold(0.0, |a, b| a + b);
    let mut phi = DMatrix::zeros(nq, kept.len());
    for (col, &i) in kept.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        // fix the sign so that the largest-magnitude entry is positive
        let pivot = v.iter().fold(0.0f64, |p, &x| if x.abs() > p.abs() { x } else { p });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for r in 0..nq {
            phi[(r, col)] = sign * v[r] / sqrt_w[r];
        }
    }
    Ok(EigenSystem {
        grid: grid.clone(),
        eigenvalues: kept.iter().map(|&i| eig.eigenvalues[i]).collect(),
        eigenfunctions: phi,
        tail_mass,
    })
}

/// Sample paths over an indexed family of inputs.
#[derive(Debug, Clone)]
pub struct PathFamily {
    pub index_values: Vec<f64>,
    pub inputs: Vec<FunctionalInput>,
    /// `n_paths x n_inputs`
    pub draws: DMatrix<f64>,
    pub seed: u64,
    /// `(name, value)` pairs written to the CSV header.
    pub parameters: Vec<(String, f64)>,
}

impl PathFamily {
    pub fn n_paths(&self) -> usize {
        self.draws.nrows()
    }

    pub fn with_index_values(mut self, index: Vec<f64>) -> Result<Self> {
        if index.len() != self.inputs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.inputs.len(),
                got: index.len(),
            });
        }
        self.index_values = index;
        Ok(self)
    }

    pub fn with_parameters(mut self, params: Vec<(String, f64)>) -> Self {
        self.parameters = params;
        self
    }

    /// Path `p` as a sequence over the index.
    pub fn path(&self, p: usize) -> Vec<f64> {
        self.draws.row(p).iter().copied().collect()
    }

    /// Empirical covariance of the draws across paths (zero mean assumed).
    pub fn empirical_covariance(&self) -> DMatrix<f64> {
        self.draws.tr_mul(&self.draws) / self.n_paths() as f64
    }

    /// CSV: a `#` line with the parameters and seed, a column header
    /// (`alpha,path1,…`), then one row per index value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("#");
        for (name, value) in &self.parameters {
            let _ = write!(out, " {name}={}", format_sig(*value, 6));
        }
        let _ = writeln!(out, " seed={}", self.seed);
        out.push_str("alpha");
        for p in 0..self.n_paths() {
            let _ = write!(out, ",path{}", p + 1);
        }
        out.push('\n');
        for (k, a) in self.index_values.iter().enumerate() {
            out.push_str(&format_sig(*a, 6));
            for p in 0..self.n_paths() {
                out.push(',');
                out.push_str(&format_sig(self.draws[(p, k)], 6));
            }
            out.push('\n');
        }
        out
    }
}

fn default_index(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64).collect()
}

fn check_paths(n_paths: usize) -> Result<()> {
    if n_paths == 0 {
        Err(Error::InvalidParameter {
            name: "n_paths",
            value: 0.0,
            reason: "must be at least 1",
        })
    } else {
        Ok(())
    }
}

/// Draws `L z` per path, with `L L^T = K_n + nugget·I`.
pub fn sample_paths_gram(
    inputs: &[FunctionalInput],
    spec: &KernelSpec,
    n_paths: usize,
    seed: u64,
) -> Result<PathFamily> {
    check_paths(n_paths)?;
    let chol = spec.gram(inputs)?.chol().clone();
    Ok(draw_rows(&chol, inputs, n_paths, seed))
}

fn draw_rows(
    factor: &DMatrix<f64>,
    inputs: &[FunctionalInput],
    n_paths: usize,
    seed: u64,
) -> PathFamily {
    let mut draws = DMatrix::zeros(n_paths, inputs.len());
    for p in 0..n_paths {
        let mut rng = path_rng(seed, p as u64);
        let z = standard_normals(&mut rng, factor.ncols());
        draws.set_row(p, &(factor * z).transpose());
    }
    PathFamily {
        index_values: default_index(inputs.len()),
        inputs: inputs.to_vec(),
        draws,
        seed,
        parameters: Vec::new(),
    }
}

/// Truncated Karhunen–Loève draws `f(g) = Σ_j √λ_j ⟨φ_j, g⟩ Z_j`.
pub fn sample_paths_kl(
    eigensystem: &EigenSystem,
    inputs: &[FunctionalInput],
    n_paths: usize,
    seed: u64,
) -> Result<PathFamily> {
    check_paths(n_paths)?;
    if !inputs.is_empty() {
        common_grid(inputs)?;
    }
    let mut c = eigensystem.coefficients(inputs)?;
    for (j, lambda) in eigensystem.eigenvalues().iter().enumerate() {
        c.column_mut(j).scale_mut(lambda.sqrt());
    }
    Ok(draw_rows(&c, inputs, n_paths, seed))
}

/// `g_α(x) = sin(α x)` on a one-dimensional grid, one input per `α`.
pub fn sine_family(alphas: &[f64], grid: &Arc<QuadratureGrid>) -> Result<Vec<FunctionalInput>> {
    if grid.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: grid.dim(),
        });
    }
    alphas
        .iter()
        .map(|&a| {
            Ok(FunctionalInput::from_fn(grid.clone(), |x| (a * x[0]).sin())?
                .with_label(format!("sin({}*x1)", format_sig(a, 6))))
        })
        .collect()
}

/// `n` equispaced values covering `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Number of sign changes of the first difference of `path` (its interior
/// local extrema).
pub fn turning_points(path: &[f64]) -> usize {
    let diffs: Vec<f64> = path.windows(2).map(|w| w[1] - w[0]).collect();
    diffs
        .windows(2)
        .filter(|w| w[0] * w[1] < 0.0)
        .count()
}
