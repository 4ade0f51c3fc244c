//! Input-function designs and MSPE decay experiments.
//!
//! Two designs are built from a base kernel `Ψ`: its leading eigenfunctions,
//! and knot functions `g_j = Ψ(·, x_j)` on a quasi-uniform lattice. For a
//! kernel with known hyperparameters the MSPE of the BLUP at a test input is
//! the posterior variance, so decay curves are computed exactly; a Monte Carlo
//! route over jointly drawn truths is kept as a cross-check.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, FunctionalInput, QuadratureGrid, QuadratureRule};
use crate::error::{Error, Result};
use crate::format::format_sig;
use crate::gp::GPModel;
use crate::kernels::{base_kernel, KernelSpec, MaternParams};
use crate::sampling::{nystrom_eig, path_rng, standard_normals, EigenSystem};

/// Design points `x_1..x_n` in a rectangular domain.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotSet {
    domain: Domain,
    knots: Vec<Vec<f64>>,
    fill_distance: f64,
}

/// Evaluation points per dimension used for fill distances.
const FILL_RESOLUTION_1D: usize = 4001;
const FILL_RESOLUTION_2D: usize = 201;

impl KnotSet {
    pub fn new(domain: Domain, knots: Vec<Vec<f64>>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InsufficientData("knot set is empty".into()));
        }
        for k in &knots {
            if k.len() != domain.dim() {
                return Err(Error::DimensionMismatch {
                    expected: domain.dim(),
                    got: k.len(),
                });
            }
            if !domain.contains(k) {
                return Err(Error::InvalidDomain(format!("knot {k:?} lies outside the domain")));
            }
        }
        let fill_distance = fill_distance(&domain, &knots);
        Ok(Self {
            domain,
            knots,
            fill_distance,
        })
    }

    /// Regular lattice with `m = n^{1/d}` points per side, including the
    /// domain faces. For `d ≥ 2`, `n` must be a perfect `d`-th power.
    pub fn lattice(domain: Domain, n: usize) -> Result<Self> {
        let d = domain.dim();
        let m = (n as f64).powf(1.0 / d as f64).round() as usize;
        if n < 2 || m.pow(d as u32) != n || m < 2 {
            return Err(Error::InvalidParameter {
                name: "lattice size",
                value: n as f64,
                reason: "must be m^d with m >= 2",
            });
        }
        let axes: Vec<Vec<f64>> = domain
            .bounds()
            .iter()
            .map(|&(a, b)| (0..m).map(|i| a + (b - a) * i as f64 / (m - 1) as f64).collect())
            .collect();
        let knots = (0..n)
            .map(|flat| {
                let mut rem = flat;
                let mut x = vec![0.0; d];
                for k in (0..d).rev() {
                    x[k] = axes[k][rem % m];
                    rem /= m;
                }
                x
            })
            .collect();
        Self::new(domain, knots)
    }

    pub fn knots(&self) -> &[Vec<f64>] {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// `sup_x min_j ‖x − x_j‖`, evaluated on a dense grid.
    pub fn fill_distance(&self) -> f64 {
        self.fill_distance
    }

    /// `h · n^{1/d}`, bounded for quasi-uniform families.
    pub fn quasi_uniformity_constant(&self) -> f64 {
        self.fill_distance * (self.len() as f64).powf(1.0 / self.domain.dim() as f64)
    }
}

fn fill_distance(domain: &Domain, knots: &[Vec<f64>]) -> f64 {
    let d = domain.dim();
    let res = match d {
        1 => FILL_RESOLUTION_1D,
        2 => FILL_RESOLUTION_2D,
        _ => 21,
    };
    let total = res.pow(d as u32);
    let mut worst = 0.0f64;
    let mut x = vec![0.0; d];
    for flat in 0..total {
        let mut rem = flat;
        for (k, &(a, b)) in domain.bounds().iter().enumerate().rev() {
            x[k] = a + (b - a) * (rem % res) as f64 / (res - 1) as f64;
            rem /= res;
        }
        let nearest = knots
            .iter()
            .map(|k| {
                k.iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(nearest);
    }
    worst.sqrt()
}

/// `φ_1..φ_n` of the eigensystem.
pub fn eigenfunction_design(eigensystem: &EigenSystem, n: usize) -> Result<Vec<FunctionalInput>> {
    if n > eigensystem.truncation() {
        return Err(Error::InvalidParameter {
            name: "design size",
            value: n as f64,
            reason: "exceeds the number of available eigenfunctions",
        });
    }
    (0..n).map(|j| eigensystem.eigenfunction(j)).collect()
}

/// `g_j = Ψ(·, x_j)` sampled on `grid`.
pub fn knot_design(
    knots: &KnotSet,
    params: &MaternParams,
    grid: &Arc<QuadratureGrid>,
) -> Result<Vec<FunctionalInput>> {
    if knots.domain() != grid.domain() {
        for k in knots.knots() {
            if !grid.domain().contains(k) {
                return Err(Error::InvalidDomain(format!(
                    "knot {k:?} lies outside the grid domain"
                )));
            }
        }
    }
    for (i, a) in knots.knots().iter().enumerate() {
        if knots.knots()[..i].contains(a) {
            log::warn!("knot design: knot {a:?} is repeated; the Gram will rely on the nugget");
        }
    }
    knots
        .knots()
        .iter()
        .enumerate()
        .map(|(j, xj)| {
            base_kernel(xj, xj, params)?;
            let g = FunctionalInput::from_fn(grid.clone(), |x| {
                base_kernel(x, xj, params).unwrap_or(f64::NAN)
            })?;
            Ok(g.with_label(format!("knot{}", j + 1)))
        })
        .collect()
}

/// Random smooth functions `g = Σ_j λ_j z_j φ_j`, normalized to unit L2 norm.
/// They lie in the native space of `Ψ`.
pub fn rkhs_test_functions(
    eigensystem: &EigenSystem,
    count: usize,
    seed: u64,
) -> Result<Vec<FunctionalInput>> {
    let phi = eigensystem.eigenfunction_values();
    let lambda = DVector::from_column_slice(eigensystem.eigenvalues());
    (0..count)
        .map(|i| {
            let mut rng = path_rng(seed, i as u64);
            let z = standard_normals(&mut rng, lambda.len());
            let values = phi * z.component_mul(&lambda);
            let g = FunctionalInput::from_values(eigensystem.grid().clone(), values)?;
            let norm = crate::domain::l2_norm(&g);
            Ok(g.scale(1.0 / norm)?.with_label(format!("test{}", i + 1)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum MspeMethod {
    /// Posterior variance at each test input.
    Exact,
    /// Squared BLUP errors against truths drawn jointly with the design
    /// outputs. The truths carry the nugget as well, so the estimate targets
    /// the exact MSPE plus the nugget.
    MonteCarlo { replicates: usize },
}

/// MSPE against design size with a least-squares log-log slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub label: String,
    pub sizes: Vec<usize>,
    pub mspe: Vec<f64>,
    /// Standard error of each MSPE estimate (0 for the exact route).
    pub se: Vec<f64>,
    pub slope: f64,
    pub slope_se: f64,
    pub replicates: usize,
    pub theoretical_rate: Option<f64>,
}

impl DecayCurve {
    pub fn from_points(
        label: impl Into<String>,
        sizes: Vec<usize>,
        mspe: Vec<f64>,
        se: Vec<f64>,
        replicates: usize,
    ) -> Self {
        let x: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
        let y: Vec<f64> = mspe.iter().map(|m| m.ln()).collect();
        let (slope, slope_se) = log_log_slope(&x, &y);
        Self {
            label: label.into(),
            sizes,
            mspe,
            se,
            slope,
            slope_se,
            replicates,
            theoretical_rate: None,
        }
    }

    pub fn with_theoretical_rate(mut self, rate: f64) -> Self {
        self.theoretical_rate = Some(rate);
        self
    }

    /// `n,mspe,se` rows followed by a `#` summary line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,mspe,se\n");
        for ((n, m), s) in self.sizes.iter().zip(&self.mspe).zip(&self.se) {
            let _ = writeln!(out, "{n},{},{}", format_sig(*m, 6), format_sig(*s, 6));
        }
        let _ = writeln!(out, "{}", self.summary());
        out
    }

    pub fn summary(&self) -> String {
        let rate = self
            .theoretical_rate
            .map_or_else(|| "NA".to_string(), |r| format_sig(r, 6));
        format!(
            "# slope={} slope_se={} theoretical_rate={rate}",
            format_sig(self.slope, 6),
            format_sig(self.slope_se, 6)
        )
    }
}

/// Ordinary least squares slope and its standard error (0 with two points).
pub fn log_log_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    if x.len() <= 2 {
        return (slope, 0.0);
    }
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - my - slope * (a - mx)).powi(2))
        .sum();
    (slope, (ssr / (n - 2.0) / sxx).sqrt())
}

/// Average MSPE over `tests` for one design, with its standard error.
pub fn design_mspe(
    design: &[FunctionalInput],
    tests: &[FunctionalInput],
    spec: &KernelSpec,
    method: MspeMethod,
    seed: u64,
) -> Result<(f64, f64)> {
    if tests.is_empty() {
        return Err(Error::InsufficientData("no test functions".into()));
    }
    match method {
        MspeMethod::Exact => {
            let y = DVector::zeros(design.len());
            let model = GPModel::condition(spec.clone(), design.to_vec(), y, Some(0.0))?;
            let v: Vec<f64> = model
                .predict_many(tests)?
                .iter()
                .map(|p| p.variance)
                .collect();
            Ok((v.iter().sum::<f64>() / v.len() as f64, 0.0))
        }
        MspeMethod::MonteCarlo { replicates } => {
            if replicates < 2 {
                return Err(Error::InvalidParameter {
                    name: "replicates",
                    value: replicates as f64,
                    reason: "Monte Carlo needs at least 2 replicates",
                });
            }
            let n = design.len();
            let mut joint = design.to_vec();
            joint.extend_from_slice(tests);
            let chol = spec.gram(&joint)?.chol().clone();
            let factor = spec.gram(design)?;
            let k_star = spec.cross_covariance(design, tests)?;
            let weights = factor.solve_matrix(&k_star);
            let mut per_rep = Vec::with_capacity(replicates);
            for r in 0..replicates {
                let mut rng = path_rng(seed, r as u64);
                let draw = &chol * standard_normals(&mut rng, joint.len());
                let y = draw.rows(0, n);
                let truth = draw.rows(n, tests.len());
                let pred = weights.tr_mul(&y);
                per_rep.push((pred - truth).norm_squared() / tests.len() as f64);
            }
            let mean = per_rep.iter().sum::<f64>() / replicates as f64;
            let var = per_rep.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / (replicates - 1) as f64;
            Ok((mean, (var / replicates as f64).sqrt()))
        }
    }
}

/// MSPE decay over design sizes. `design_builder(n)` builds the size-`n`
/// design; the kernel is held fixed.
pub fn empirical_mspe(
    label: &str,
    mut design_builder: impl FnMut(usize) -> Result<Vec<FunctionalInput>>,
    sizes: &[usize],
    tests: &[FunctionalInput],
    spec: &KernelSpec,
    method: MspeMethod,
    seed: u64,
) -> Result<DecayCurve> {
    if sizes.len() < 2 || sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] < 2 {
        return Err(Error::InvalidParameter {
            name: "sizes",
            value: sizes.first().copied().unwrap_or(0) as f64,
            reason: "need at least two strictly increasing sizes, each >= 2",
        });
    }
    let mut mspe = Vec::with_capacity(sizes.len());
    let mut se = Vec::with_capacity(sizes.len());
    for (i, &n) in sizes.iter().enumerate() {
        let wrap = |e: Error| Error::Design {
            size: n,
            source: Box::new(e),
        };
        let design = design_builder(n).map_err(wrap)?;
        let cell_seed = seed.wrapping_add((i as u64) << 32);
        let (m, s) = design_mspe(&design, tests, spec, method, cell_seed).map_err(wrap)?;
        mspe.push(m);
        se.push(s);
    }
    let replicates = match method {
        MspeMethod::Exact => 0,
        MspeMethod::MonteCarlo { replicates } => replicates,
    };
    Ok(DecayCurve::from_points(
        label,
        sizes.to_vec(),
        mspe,
        se,
        replicates,
    ))
}

/// Knot versus eigenfunction designs on an interval with a fixed Matérn
/// linear kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecayExperiment {
    pub nu: f64,
    pub theta: f64,
    pub sigma2: f64,
    pub nugget_ratio: f64,
    pub resolution: usize,
    pub sizes: Vec<usize>,
    pub n_tests: usize,
    pub seed: u64,
}

impl Default for DecayExperiment {
    fn default() -> Self {
        Self {
            nu: 1.5,
            theta: 10.0,
            sigma2: 1.0,
            nugget_ratio: 1e-8,
            resolution: 200,
            sizes: vec![8, 16, 32, 64],
            n_tests: 20,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayComparison {
    pub knot: DecayCurve,
    pub eigenfunction: DecayCurve,
}

impl DecayExperiment {
    pub fn params(&self) -> Result<MaternParams> {
        MaternParams::isotropic(self.nu, self.sigma2, self.theta, 1)
    }

    pub fn grid(&self) -> Result<Arc<QuadratureGrid>> {
        Ok(Arc::new(QuadratureGrid::new(
            Domain::unit_cube(1)?,
            self.resolution,
            QuadratureRule::GaussLegendre,
        )?))
    }

    /// Exact-MSPE decay curves for both designs on shared test functions.
    pub fn run(&self) -> Result<DecayComparison> {
        let params = self.params()?;
        let grid = self.grid()?;
        let max_size = self.sizes.iter().copied().max().unwrap_or(0);
        let m = crate::sampling::default_truncation(grid.len()).max(max_size.min(grid.len()));
        let eig = nystrom_eig(&params, &grid, m)?;
        let tests = rkhs_test_functions(&eig, self.n_tests, self.seed)?;
        let spec = KernelSpec::linear(params.clone()).with_nugget(self.nugget_ratio * self.sigma2);
        let domain = grid.domain().clone();
        let knot = empirical_mspe(
            "knot",
            |n| knot_design(&KnotSet::lattice(domain.clone(), n)?, &params, &grid),
            &self.sizes,
            &tests,
            &spec,
            MspeMethod::Exact,
            self.seed,
        )?
        .with_theoretical_rate(-2.0 * self.nu);
        let eigenfunction = empirical_mspe(
            "eigenfunction",
            |n| eigenfunction_design(&eig, n),
            &self.sizes,
            &tests,
            &spec,
            MspeMethod::Exact,
            self.seed,
        )?
        .with_theoretical_rate(-4.0 * self.nu);
        Ok(DecayComparison {
            knot,
            eigenfunction,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::l2_inner;
    use approx::assert_relative_eq;

    fn unit_grid(res: usize) -> Arc<QuadratureGrid> {
        Arc::new(
            QuadratureGrid::new(Domain::unit_cube(1).unwrap(), res, QuadratureRule::GaussLegendre)
                .unwrap(),
        )
    }

    #[test]
    fn lattice_fill_distance_bound() {
        for n in [2, 5, 8, 16, 33] {
            let k = KnotSet::lattice(Domain::unit_cube(1).unwrap(), n).unwrap();
            let bound = 1.0 / (2.0 * (n as f64 - 1.0));
            assert!(k.fill_distance() <= bound + 1e-12, "n={n}");
            assert!(k.fill_distance() > 0.0);
        }
        let k = KnotSet::lattice(Domain::unit_cube(2).unwrap(), 16).unwrap();
        let h = 1.0 / 3.0;
        assert_relative_eq!(k.fill_distance(), (2.0f64).sqrt() * h / 2.0, max_relative = 1e-9);
        assert!(KnotSet::lattice(Domain::unit_cube(2).unwrap(), 10).is_err());
        assert!(KnotSet::new(Domain::unit_cube(1).unwrap(), vec![vec![1.5]]).is_err());
    }

    #[test]
    fn knot_function_peaks_at_its_knot() {
        let grid = unit_grid(65);
        let params = MaternParams::isotropic(2.5, 2.0, 3.0, 1).unwrap();
        let knots = KnotSet::new(Domain::unit_cube(1).unwrap(), vec![vec![0.5]]).unwrap();
        let g = &knot_design(&knots, &params, &grid).unwrap()[0];
        let (imax, vmax) = g
            .values()
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        // 65 GL nodes: the middle node is the center
        assert_eq!(imax, 32);
        assert_relative_eq!(grid.node(imax)[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(vmax, 2.0, max_relative = 1e-14);

        let twin = KnotSet::new(Domain::unit_cube(1).unwrap(), vec![vec![0.3], vec![0.3]]).unwrap();
        let d = knot_design(&twin, &params, &grid).unwrap();
        assert_eq!(d[0].values(), d[1].values());
    }

    #[test]
    fn eigenfunction_design_gram_is_diagonal() {
        let grid = unit_grid(80);
        let params = MaternParams::isotropic(2.5, 1.0, 2.0, 1).unwrap();
        let eig = nystrom_eig(&params, &grid, 20).unwrap();
        let design = eigenfunction_design(&eig, 6).unwrap();
        assert_relative_eq!(l2_inner(&design[0], &design[0]).unwrap(), 1.0, epsilon = 1e-6);
        let k = KernelSpec::linear(params).covariance(&design).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let expected = if i == j { eig.eigenvalues()[i] } else { 0.0 };
                assert!(
                    (k[(i, j)] - expected).abs() <= 1e-6 * eig.eigenvalues()[i],
                    "{i},{j}"
                );
            }
        }
        assert!(eigenfunction_design(&eig, 21).is_err());
    }

    #[test]
    fn test_input_in_design_has_nugget_level_mspe() {
        let grid = unit_grid(60);
        let params = MaternParams::isotropic(1.5, 1.0, 5.0, 1).unwrap();
        let spec = KernelSpec::linear(params.clone());
        let design = knot_design(
            &KnotSet::lattice(Domain::unit_cube(1).unwrap(), 6).unwrap(),
            &params,
            &grid,
        )
        .unwrap();
        let (m, _) =
            design_mspe(&design, &design[2..3], &spec, MspeMethod::Exact, 0).unwrap();
        assert!(m <= spec.nugget * (1.0 + 1e-6), "{m}");
    }

    #[test]
    fn exact_mspe_matches_monte_carlo() {
        let grid = unit_grid(60);
        let params = MaternParams::isotropic(1.5, 1.0, 10.0, 1).unwrap();
        let eig = nystrom_eig(&params, &grid, 40).unwrap();
        let tests = rkhs_test_functions(&eig, 5, 3).unwrap();
        let spec = KernelSpec::linear(params.clone());
        for n in [4, 8] {
            let design = knot_design(
                &KnotSet::lattice(Domain::unit_cube(1).unwrap(), n).unwrap(),
                &params,
                &grid,
            )
            .unwrap();
            let (exact, _) = design_mspe(&design, &tests, &spec, MspeMethod::Exact, 0).unwrap();
            let (mc, se) = design_mspe(
                &design,
                &tests,
                &spec,
                MspeMethod::MonteCarlo { replicates: 4000 },
                7,
            )
            .unwrap();
            let target = exact + spec.nugget;
            assert!((mc - target).abs() <= 3.0 * se, "n={n}: {mc} vs {target} ± {se}");
        }
    }

    #[test]
    fn slope_fit() {
        let x: Vec<f64> = [1.0f64, 2.0, 4.0, 8.0].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = [1.0f64, 2.0, 4.0, 8.0].iter().map(|v| v.powi(-3).ln()).collect();
        let (s, se) = log_log_slope(&x, &y);
        assert_relative_eq!(s, -3.0, max_relative = 1e-12);
        assert!(se < 1e-12);
    }

    #[test]
    fn decay_curve_csv() {
        let c = DecayCurve::from_points("knot", vec![8, 16], vec![1e-3, 1.25e-4], vec![0.0, 0.0], 0)
            .with_theoretical_rate(-3.0);
        assert_eq!(
            c.to_csv(),
            "n,mspe,se\n8,0.001,0\n16,0.000125,0\n# slope=-3 slope_se=0 theoretical_rate=-3\n"
        );
    }

    #[test]
    fn invalid_sizes_are_rejected() {
        let grid = unit_grid(20);
        let params = MaternParams::isotropic(1.5, 1.0, 1.0, 1).unwrap();
        let spec = KernelSpec::linear(params);
        let t = vec![FunctionalInput::constant(grid, 1.0).unwrap()];
        let r = empirical_mspe("x", |_| Ok(Vec::new()), &[8, 4], &t, &spec, MspeMethod::Exact, 0);
        assert!(r.is_err());
    }
}
