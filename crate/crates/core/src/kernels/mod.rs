//! Kernels over functional inputs.
//!
//! * Linear: `K(g1, g2) = ∫∫ g1(x) g2(x') Ψ(x, x') dx dx'`, evaluated as
//!   `g1ᵀ W Ψ W g2` on the quadrature grid (optionally after a pointwise map `M`).
//! * Nonlinear: `K(g1, g2) = ψ(γ ‖g1 − g2‖_{L2})`.

mod gram;
mod matern;

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::domain::{common_grid, l2_distance, FunctionalInput, PointwiseMap, QuadratureGrid};
use crate::error::{Error, Result};

pub use gram::{GramFactorization, MAX_NUGGET_RATIO, PIVOT_TOLERANCE};
pub use matern::{
    bessel_k, matern_correlation, matern_correlation_bessel, matern_psi, matern_psi_printed,
    MaternParams, PsiForm,
};

/// Default diagonal jitter relative to σ².
pub const DEFAULT_NUGGET_RATIO: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Linear,
    Nonlinear,
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KernelFamily::Linear => "linear",
            KernelFamily::Nonlinear => "nonlinear",
        })
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "linear" => Ok(KernelFamily::Linear),
            "nonlinear" => Ok(KernelFamily::Nonlinear),
            other => Err(format!("unknown kernel family `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum KernelKind {
    Linear {
        base: MaternParams,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        premap: Option<PointwiseMap>,
    },
    Nonlinear {
        outer: MaternParams,
        gamma: f64,
    },
}

/// A functional kernel plus the absolute jitter added to Gram diagonals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub kind: KernelKind,
    pub nugget: f64,
}

impl KernelSpec {
    /// Linear kernel with the default nugget `1e-8·σ²`.
    pub fn linear(base: MaternParams) -> Self {
        let nugget = DEFAULT_NUGGET_RATIO * base.sigma2;
        Self {
            kind: KernelKind::Linear { base, premap: None },
            nugget,
        }
    }

    /// Nonlinear kernel with the default nugget `1e-8·σ²`.
    pub fn nonlinear(outer: MaternParams, gamma: f64) -> Self {
        let nugget = DEFAULT_NUGGET_RATIO * outer.sigma2;
        Self {
            kind: KernelKind::Nonlinear { outer, gamma },
            nugget,
        }
    }

    pub fn with_premap(mut self, map: PointwiseMap) -> Self {
        if let KernelKind::Linear { premap, .. } = &mut self.kind {
            *premap = Some(map);
        }
        self
    }

    pub fn with_nugget(mut self, nugget: f64) -> Self {
        self.nugget = nugget;
        self
    }

    pub fn family(&self) -> KernelFamily {
        match self.kind {
            KernelKind::Linear { .. } => KernelFamily::Linear,
            KernelKind::Nonlinear { .. } => KernelFamily::Nonlinear,
        }
    }

    pub fn params(&self) -> &MaternParams {
        match &self.kind {
            KernelKind::Linear { base, .. } => base,
            KernelKind::Nonlinear { outer, .. } => outer,
        }
    }

    fn params_mut(&mut self) -> &mut MaternParams {
        match &mut self.kind {
            KernelKind::Linear { base, .. } => base,
            KernelKind::Nonlinear { outer, .. } => outer,
        }
    }

    pub fn sigma2(&self) -> f64 {
        self.params().sigma2
    }

    /// Rescales σ² and the nugget together, keeping the nugget ratio.
    pub fn with_sigma2(mut self, sigma2: f64) -> Self {
        let ratio = self.nugget / self.sigma2();
        self.params_mut().sigma2 = sigma2;
        self.nugget = ratio * sigma2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        if let KernelKind::Nonlinear { gamma, .. } = self.kind {
            check_gamma(gamma)?;
        }
        if !(self.nugget.is_finite() && self.nugget >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "nugget",
                value: self.nugget,
                reason: "must be non-negative",
            });
        }
        Ok(())
    }

    /// `K(g1, g2)`
    pub fn eval(&self, g1: &FunctionalInput, g2: &FunctionalInput) -> Result<f64> {
        match &self.kind {
            KernelKind::Linear { base, premap } => linear_kernel(g1, g2, base, *premap),
            KernelKind::Nonlinear { outer, gamma } => nonlinear_kernel(g1, g2, outer, *gamma),
        }
    }

    /// `(K(a_i, b_j))_{ij}` without any nugget.
    pub fn cross_covariance(
        &self,
        a: &[FunctionalInput],
        b: &[FunctionalInput],
    ) -> Result<DMatrix<f64>> {
        self.validate()?;
        if a.is_empty() || b.is_empty() {
            return Ok(DMatrix::zeros(a.len(), b.len()));
        }
        let grid = common_grid(a)?;
        if !b[0].same_grid(&a[0]) {
            return Err(Error::GridMismatch);
        }
        common_grid(b)?;
        match &self.kind {
            KernelKind::Linear { base, premap } => {
                check_lengthscales(base, grid)?;
                let psi = node_covariance(grid, base);
                let wa = weighted_values(a, *premap);
                let wb = weighted_values(b, *premap);
                Ok(wa.transpose() * (psi * wb))
            }
            KernelKind::Nonlinear { outer, gamma } => {
                let mut out = DMatrix::zeros(a.len(), b.len());
                for (i, gi) in a.iter().enumerate() {
                    for (j, gj) in b.iter().enumerate() {
                        out[(i, j)] = outer.psi(gamma * l2_distance(gi, gj)?);
                    }
                }
                Ok(out)
            }
        }
    }

    /// Symmetric `K_n` (no nugget), assembled from the upper triangle.
    pub fn covariance(&self, inputs: &[FunctionalInput]) -> Result<DMatrix<f64>> {
        GramWorkspace::new(inputs, self.family(), self.premap())?.covariance(self)
    }

    /// `K_n + nugget·I`, factorized, with nugget escalation on failure.
    pub fn gram(&self, inputs: &[FunctionalInput]) -> Result<GramFactorization> {
        if inputs.is_empty() {
            return Err(Error::InsufficientData("gram of zero inputs".into()));
        }
        let k = self.covariance(inputs)?;
        GramFactorization::new(k, self.nugget, MAX_NUGGET_RATIO * self.sigma2())
    }

    /// `K(g, g)` for each input.
    pub fn variances(&self, inputs: &[FunctionalInput]) -> Result<Vec<f64>> {
        inputs.iter().map(|g| self.eval(g, g)).collect()
    }

    pub fn premap(&self) -> Option<PointwiseMap> {
        match &self.kind {
            KernelKind::Linear { premap, .. } => *premap,
            KernelKind::Nonlinear { .. } => None,
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "gamma",
            value: gamma,
            reason: "must be positive",
        })
    }
}

fn check_lengthscales(params: &MaternParams, grid: &QuadratureGrid) -> Result<()> {
    if params.lengthscales.len() != grid.dim() {
        Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: params.lengthscales.len(),
        })
    } else {
        Ok(())
    }
}

/// `Ψ(x, x') = ψ(‖Θ(x − x')‖₂)`, `Θ = diag(lengthscales)`.
pub fn base_kernel(x: &[f64], xp: &[f64], params: &MaternParams) -> Result<f64> {
    params.validate()?;
    let d = params.lengthscales.len();
    for p in [x, xp] {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.len(),
            });
        }
    }
    Ok(params.psi(scaled_distance(x, xp, &params.lengthscales)))
}

#[inline]
fn scaled_distance(x: &[f64], xp: &[f64], theta: &[f64]) -> f64 {
    x.iter()
        .zip(xp)
        .zip(theta)
        .map(|((a, b), t)| {
            let v = t * (a - b);
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

/// Base kernel evaluated between all pairs of grid nodes (`n_q x n_q`, symmetric).
pub fn node_covariance(grid: &QuadratureGrid, params: &MaternParams) -> DMatrix<f64> {
    let n = grid.len();
    let mut psi = DMatrix::zeros(n, n);
    for i in 0..n {
        let xi = grid.node(i);
        psi[(i, i)] = params.psi(0.0);
        for j in (i + 1)..n {
            let v = params.psi(scaled_distance(xi, grid.node(j), &params.lengthscales));
            psi[(i, j)] = v;
            psi[(j, i)] = v;
        }
    }
    psi
}

/// Columns `W·M(g_j)`.
fn weighted_values(inputs: &[FunctionalInput], premap: Option<PointwiseMap>) -> DMatrix<f64> {
    let grid = inputs[0].grid();
    let w = grid.weights();
    let mut out = DMatrix::zeros(grid.len(), inputs.len());
    for (j, g) in inputs.iter().enumerate() {
        for (i, &v) in g.values().iter().enumerate() {
            let v = premap.map_or(v, |m| m.apply(v));
            out[(i, j)] = w[i] * v;
        }
    }
    out
}

/// Linear functional kernel `Σ_i Σ_j w_i w_j M(g1)_i M(g2)_j Ψ(x_i, x_j)`.
pub fn linear_kernel(
    g1: &FunctionalInput,
    g2: &FunctionalInput,
    params: &MaternParams,
    premap: Option<PointwiseMap>,
) -> Result<f64> {
    if !g1.same_grid(g2) {
        return Err(Error::GridMismatch);
    }
    params.validate()?;
    let grid = g1.grid();
    check_lengthscales(params, grid)?;
    let w = grid.weights();
    let m = |v: f64| premap.map_or(v, |m| m.apply(v));
    let a: Vec<f64> = (0..grid.len()).map(|i| w[i] * m(g1.values()[i])).collect();
    let b: Vec<f64> = (0..grid.len()).map(|i| w[i] * m(g2.values()[i])).collect();
    let mut total = 0.0;
    for i in 0..grid.len() {
        if a[i] == 0.0 {
            continue;
        }
        let xi = grid.node(i);
        let mut row = 0.0;
        for (j, bj) in b.iter().enumerate() {
            row += bj * params.psi(scaled_distance(xi, grid.node(j), &params.lengthscales));
        }
        total += a[i] * row;
    }
    Ok(total)
}

/// Nonlinear functional kernel `ψ(γ ‖g1 − g2‖_{L2})`.
pub fn nonlinear_kernel(
    g1: &FunctionalInput,
    g2: &FunctionalInput,
    outer: &MaternParams,
    gamma: f64,
) -> Result<f64> {
    check_gamma(gamma)?;
    outer.validate()?;
    Ok(outer.psi(gamma * l2_distance(g1, g2)?))
}

/// Hyperparameter-independent data for assembling Grams of a fixed input set
/// many times (likelihood optimization).
#[derive(Debug, Clone)]
pub struct GramWorkspace {
    grid: Arc<QuadratureGrid>,
    n: usize,
    data: WorkspaceData,
}

#[derive(Debug, Clone)]
enum WorkspaceData {
    Linear {
        /// `W·M(g_j)` as columns
        weighted: DMatrix<f64>,
        /// per-dimension squared node differences, row-major upper triangle
        sq_diff: Vec<Vec<f64>>,
    },
    Nonlinear {
        distances: DMatrix<f64>,
    },
}

impl GramWorkspace {
    pub fn new(
        inputs: &[FunctionalInput],
        family: KernelFamily,
        premap: Option<PointwiseMap>,
    ) -> Result<Self> {
        let grid = common_grid(inputs)?.clone();
        let n = inputs.len();
        let data = match family {
            KernelFamily::Linear => {
                let weighted = weighted_values(inputs, premap);
                let nq = grid.len();
                let d = grid.dim();
                let mut sq_diff = vec![Vec::with_capacity(nq * (nq + 1) / 2); d];
                for i in 0..nq {
                    let xi = grid.node(i);
                    for j in i..nq {
                        let xj = grid.node(j);
                        for k in 0..d {
                            let v = xi[k] - xj[k];
                            sq_diff[k].push(v * v);
                        }
                    }
                }
                WorkspaceData::Linear { weighted, sq_diff }
            }
            KernelFamily::Nonlinear => {
                let mut distances = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in (i + 1)..n {
                        let v = l2_distance(&inputs[i], &inputs[j])?;
                        distances[(i, j)] = v;
                        distances[(j, i)] = v;
                    }
                }
                WorkspaceData::Nonlinear { distances }
            }
        };
        Ok(Self { grid, n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn family(&self) -> KernelFamily {
        match self.data {
            WorkspaceData::Linear { .. } => KernelFamily::Linear,
            WorkspaceData::Nonlinear { .. } => KernelFamily::Nonlinear,
        }
    }

    /// `K_n` for `spec` (no nugget). The upper triangle is computed and mirrored,
    /// so the result is exactly symmetric.
    pub fn covariance(&self, spec: &KernelSpec) -> Result<DMatrix<f64>> {
        spec.validate()?;
        if spec.family() != self.family() {
            return Err(Error::InvalidParameter {
                name: "family",
                value: f64::NAN,
                reason: "kernel family does not match the workspace",
            });
        }
        let mut k = match (&self.data, &spec.kind) {
            (WorkspaceData::Linear { weighted, sq_diff }, KernelKind::Linear { base, .. }) => {
                check_lengthscales(base, &self.grid)?;
                let nq = self.grid.len();
                let theta2: Vec<f64> = base.lengthscales.iter().map(|t| t * t).collect();
                let mut psi = DMatrix::zeros(nq, nq);
                let mut idx = 0;
                for i in 0..nq {
                    for j in i..nq {
                        let r2: f64 = theta2
                            .iter()
                            .zip(sq_diff)
                            .map(|(t2, sq)| t2 * sq[idx])
                            .sum();
                        let v = base.psi(r2.sqrt());
                        psi[(i, j)] = v;
                        psi[(j, i)] = v;
                        idx += 1;
                    }
                }
                weighted.transpose() * (psi * weighted)
            }
            (WorkspaceData::Nonlinear { distances }, KernelKind::Nonlinear { outer, gamma }) => {
                distances.map(|d| outer.psi(gamma * d))
            }
            _ => unreachable!("family checked above"),
        };
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                k[(j, i)] = k[(i, j)];
            }
        }
        Ok(k)
    }

    pub fn gram(&self, spec: &KernelSpec) -> Result<GramFactorization> {
        let k = self.covariance(spec)?;
        GramFactorization::new(k, spec.nugget, MAX_NUGGET_RATIO * spec.sigma2())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{sample_expression, Domain, QuadratureRule};
    use approx::assert_relative_eq;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_square(res: usize) -> Arc<QuadratureGrid> {
        Arc::new(
            QuadratureGrid::new(
                Domain::unit_cube(2).unwrap(),
                res,
                QuadratureRule::GaussLegendre,
            )
            .unwrap(),
        )
    }

    fn base() -> MaternParams {
        MaternParams::isotropic(2.5, 1.0, 1.0, 2).unwrap()
    }

    fn input(text: &str, grid: &Arc<QuadratureGrid>) -> FunctionalInput {
        sample_expression(text, grid).unwrap()
    }

    #[test]
    fn base_kernel_values() {
        let p = base();
        assert_eq!(base_kernel(&[0.3, 0.4], &[0.3, 0.4], &p).unwrap(), 1.0);
        let v = base_kernel(&[0.0, 0.0], &[1.0, 0.0], &p).unwrap();
        assert_relative_eq!(v, matern_psi(1.0, &p).unwrap(), max_relative = 1e-15);
        assert_relative_eq!(v, 0.31728, epsilon = 1e-5);
        assert!(base_kernel(&[0.0], &[1.0, 0.0], &p).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a = [rng.random::<f64>(), rng.random::<f64>()];
            let b = [rng.random::<f64>(), rng.random::<f64>()];
            assert_eq!(
                base_kernel(&a, &b, &p).unwrap(),
                base_kernel(&b, &a, &p).unwrap()
            );
        }
    }

    #[test]
    fn linear_kernel_of_zero_is_zero_and_scales() {
        let g = unit_square(12);
        let zero = input("0", &g);
        let h = input("1+x1*x2", &g);
        assert_eq!(linear_kernel(&zero, &h, &base(), None).unwrap(), 0.0);
        let g1 = input("sin(x1)", &g);
        let two = g1.scale(2.0).unwrap();
        let k1 = linear_kernel(&g1, &h, &base(), None).unwrap();
        let k2 = linear_kernel(&two, &h, &base(), None).unwrap();
        assert_relative_eq!(k2, 2.0 * k1, max_relative = 1e-12);
    }

    #[test]
    fn linear_kernel_of_constants_matches_refined_double_sum() {
        let coarse = unit_square(20);
        let one = input("1", &coarse);
        let value = linear_kernel(&one, &one, &base(), None).unwrap();

        // independent brute-force double sum on a refined 40x40 grid
        let fine = QuadratureGrid::new(
            Domain::unit_cube(2).unwrap(),
            40,
            QuadratureRule::GaussLegendre,
        )
        .unwrap();
        let p = base();
        let w = fine.weights();
        let mut oracle = 0.0;
        for i in 0..fine.len() {
            for j in 0..fine.len() {
                let (a, b) = (fine.node(i), fine.node(j));
                let r = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                oracle += w[i] * w[j] * matern_correlation(2.5, r) * p.sigma2;
            }
        }
        assert_relative_eq!(value, oracle, max_relative = 1e-6);
    }

    #[test]
    fn premap_is_applied_to_both_arguments() {
        let g = unit_square(10);
        let a = input("x1+x2", &g);
        let b = input("1+x1", &g);
        let direct = linear_kernel(&a, &b, &base(), Some(PointwiseMap::Square)).unwrap();
        let sa = input("(x1+x2)^2", &g);
        let sb = input("(1+x1)^2", &g);
        let mapped = linear_kernel(&sa, &sb, &base(), None).unwrap();
        assert_relative_eq!(direct, mapped, max_relative = 1e-13);
    }

    #[test]
    fn nonlinear_kernel_values() {
        let g = unit_square(20);
        let outer = MaternParams::radial(2.5, 1.0).unwrap();
        let one = input("1", &g);
        let zero = input("0", &g);
        assert_eq!(nonlinear_kernel(&one, &one, &outer, 1.0).unwrap(), 1.0);
        let v = nonlinear_kernel(&one, &zero, &outer, 1.0).unwrap();
        assert_relative_eq!(v, matern_psi(1.0, &outer).unwrap(), max_relative = 1e-12);
        assert!(nonlinear_kernel(&one, &zero, &outer, 0.0).is_err());
        assert!(nonlinear_kernel(&one, &zero, &outer, -1.0).is_err());
    }

    #[test]
    fn nonlinear_kernel_is_translation_invariant() {
        let g = unit_square(16);
        let outer = MaternParams::radial(2.5, 1.3).unwrap();
        let g1 = input("x1^2", &g);
        let g2 = input("cos(x1+x2)", &g);
        let h = input("exp(x2) - 3*x1", &g);
        let k = nonlinear_kernel(&g1, &g2, &outer, 0.8).unwrap();
        let shifted = nonlinear_kernel(
            &g1.linear_combination(1.0, &h, 1.0).unwrap(),
            &g2.linear_combination(1.0, &h, 1.0).unwrap(),
            &outer,
            0.8,
        )
        .unwrap();
        assert_relative_eq!(k, shifted, max_relative = 1e-12);
    }

    #[test]
    fn nonlinear_kernel_depends_only_on_distance() {
        let g = unit_square(16);
        let outer = MaternParams::radial(1.5, 1.0).unwrap();
        let zero = input("0", &g);
        // ‖c‖ = c on the unit square, and ‖√3·x1‖ = 1
        let c = input("1", &g);
        let lin = input("sqrt(3)*x1", &g);
        let k1 = nonlinear_kernel(&c, &zero, &outer, 0.7).unwrap();
        let k2 = nonlinear_kernel(&lin, &zero, &outer, 0.7).unwrap();
        assert_relative_eq!(k1, k2, max_relative = 1e-10);
        assert_relative_eq!(k1, outer.psi(0.7), max_relative = 1e-10);
    }

    #[test]
    fn gram_of_single_constant_input() {
        let g = unit_square(8);
        let spec = KernelSpec::nonlinear(MaternParams::radial(2.5, 2.0).unwrap(), 1.0);
        let f = spec.gram(&[input("1", &g)]).unwrap();
        assert_eq!(f.gram()[(0, 0)], 2.0 + spec.nugget);
    }

    fn table_inputs(grid: &Arc<QuadratureGrid>) -> Vec<FunctionalInput> {
        [
            "x1+x2",
            "x1^2",
            "x2^2",
            "1+x1",
            "1+x2",
            "1+x1*x2",
            "sin(x1)",
            "cos(x1+x2)",
        ]
        .iter()
        .map(|t| input(t, grid))
        .collect()
    }

    #[test]
    fn nonlinear_gram_of_table_inputs_is_positive_definite() {
        let g = unit_square(20);
        let spec = KernelSpec::nonlinear(MaternParams::radial(2.5, 1.0).unwrap(), 1.0)
            .with_nugget(0.0);
        let k = spec.covariance(&table_inputs(&g)).unwrap();
        let eig = SymmetricEigen::new(k).eigenvalues;
        assert!(eig.min() > 0.0, "{eig}");
    }

    #[test]
    fn linearly_dependent_inputs_fail_without_nugget() {
        let g = unit_square(10);
        let x1 = input("x1", &g);
        let x2 = x1.scale(2.0).unwrap();
        let spec = KernelSpec::linear(base()).with_nugget(0.0);
        assert!(matches!(spec.gram(&[x1, x2]), Err(Error::Cholesky { .. })));
    }

    #[test]
    fn nugget_escalation_rescues_dependent_inputs() {
        let g = unit_square(10);
        let x1 = input("x1", &g);
        let x2 = x1.scale(2.0).unwrap();
        let f = KernelSpec::linear(base()).gram(&[x1, x2]).unwrap();
        assert!(f.nugget() >= 1e-8 && f.nugget() <= 1e-4);
    }

    #[test]
    fn workspace_matches_direct_evaluation() {
        let g = unit_square(8);
        let inputs = table_inputs(&g);
        let lin = KernelSpec::linear(MaternParams::new(2.5, 1.7, vec![0.6, 2.0]).unwrap());
        let nl = KernelSpec::nonlinear(MaternParams::radial(1.5, 0.9).unwrap(), 0.4);
        for spec in [lin, nl] {
            let k = spec.covariance(&inputs).unwrap();
            let cross = spec.cross_covariance(&inputs, &inputs).unwrap();
            for i in 0..inputs.len() {
                for j in 0..inputs.len() {
                    let direct = spec.eval(&inputs[i], &inputs[j]).unwrap();
                    assert_relative_eq!(k[(i, j)], direct, max_relative = 1e-12);
                    assert_relative_eq!(cross[(i, j)], direct, max_relative = 1e-12);
                    assert_eq!(k[(i, j)], k[(j, i)]);
                }
            }
        }
    }

    fn random_poly(grid: &Arc<QuadratureGrid>, rng: &mut ChaCha8Rng) -> FunctionalInput {
        let c: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        FunctionalInput::from_fn(grid.clone(), |x| {
            c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[0] * x[1] + c[4] * x[0] * x[0]
                + c[5] * x[1] * x[1]
        })
        .unwrap()
    }

    #[test]
    fn random_grams_are_positive_definite() {
        let g = unit_square(10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let lin = KernelSpec::linear(base()).with_nugget(0.0);
        let nl = KernelSpec::nonlinear(MaternParams::radial(2.5, 1.0).unwrap(), 1.0)
            .with_nugget(0.0);
        for _ in 0..50 {
            let inputs: Vec<_> = (0..5).map(|_| random_poly(&g, &mut rng)).collect();
            for spec in [&lin, &nl] {
                let eig = SymmetricEigen::new(spec.covariance(&inputs).unwrap()).eigenvalues;
                assert!(eig.min() > 0.0, "{:?}: {eig}", spec.family());
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn linear_kernel_is_bilinear(
            c1 in prop::collection::vec(-2.0f64..2.0, 3),
            c2 in prop::collection::vec(-2.0f64..2.0, 3),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let g = unit_square(6);
            let g1 = FunctionalInput::from_fn(g.clone(), |x| c1[0] + c1[1] * x[0] + c1[2] * x[1] * x[1]).unwrap();
            let g2 = FunctionalInput::from_fn(g.clone(), |x| c2[0] * x[0] * x[1] + c2[1] + c2[2] * x[1]).unwrap();
            let h = input("1 + sin(x1) + x2", &g);
            let p = base();
            let lhs = linear_kernel(&g1.linear_combination(a, &g2, b).unwrap(), &h, &p, None).unwrap();
            let k1 = linear_kernel(&g1, &h, &p, None).unwrap();
            let k2 = linear_kernel(&g2, &h, &p, None).unwrap();
            let scale = (a * k1).abs() + (b * k2).abs();
            prop_assert!((lhs - (a * k1 + b * k2)).abs() <= 1e-12 * scale.max(1e-300));
        }
    }
}
