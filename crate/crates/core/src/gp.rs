//! Fitting and prediction for functional-input GPs.
//!
//! The prior is `f ~ GP(μ, K)` with constant `μ`. Both `μ` and the variance
//! `σ²` are profiled out of the likelihood, so the optimizer only searches
//! the correlation parameters (lengthscales for the linear kernel, `γ` for the
//! nonlinear one) in log space.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{common_grid, FunctionalInput, PointwiseMap};
use crate::error::{Error, Result};
use crate::kernels::{
    GramFactorization, GramWorkspace, KernelFamily, KernelSpec, MaternParams, PsiForm,
    DEFAULT_NUGGET_RATIO,
};
use crate::optimize::{latin_hypercube, nelder_mead, Bounds, NelderMeadOptions};

/// Negative predictive variances down to `-VARIANCE_CLAMP · σ̂²` are treated
/// as round-off and clamped to zero.
pub const VARIANCE_CLAMP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthscaleMode {
    /// One θ shared by all dimensions.
    #[default]
    Isotropic,
    /// One θ per dimension.
    Anisotropic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub nu: f64,
    pub psi_form: PsiForm,
    pub lengthscale_mode: LengthscaleMode,
    /// Search box for `log θ`.
    pub log_theta_bounds: (f64, f64),
    /// Search box for `log γ`.
    pub log_gamma_bounds: (f64, f64),
    pub multistarts: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Nugget as a fraction of σ².
    pub nugget_ratio: f64,
    pub premap: Option<PointwiseMap>,
    /// Fix `μ = 0` instead of estimating it.
    pub zero_mean: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            nu: 2.5,
            psi_form: PsiForm::Standard,
            lengthscale_mode: LengthscaleMode::Isotropic,
            log_theta_bounds: (-3.0, 3.0),
            log_gamma_bounds: (-5.0, 2.0),
            multistarts: 10,
            max_iters: 400,
            seed: 42,
            nugget_ratio: DEFAULT_NUGGET_RATIO,
            premap: None,
            zero_mean: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("log_theta_bounds", self.log_theta_bounds),
            ("log_gamma_bounds", self.log_gamma_bounds),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidParameter {
                    name,
                    value: lo,
                    reason: "bounds must be finite with lower <= upper",
                });
            }
        }
        if self.multistarts == 0 {
            return Err(Error::InvalidParameter {
                name: "multistarts",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        if !(self.nugget_ratio.is_finite() && self.nugget_ratio >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "nugget_ratio",
                value: self.nugget_ratio,
                reason: "must be non-negative",
            });
        }
        MaternParams::radial(self.nu, 1.0).map(|_| ())
    }

    /// Unit-variance kernel for the given log-parameters.
    fn correlation_spec(&self, family: KernelFamily, log_params: &[f64], d: usize) -> KernelSpec {
        let params = |lengthscales: Vec<f64>| MaternParams {
            nu: self.nu,
            sigma2: 1.0,
            lengthscales,
            form: self.psi_form,
        };
        let spec = match family {
            KernelFamily::Linear => {
                let theta: Vec<f64> = match self.lengthscale_mode {
                    LengthscaleMode::Isotropic => vec![log_params[0].exp(); d],
                    LengthscaleMode::Anisotropic => log_params.iter().map(|p| p.exp()).collect(),
                };
                let spec = KernelSpec::linear(params(theta));
                match self.premap {
                    Some(m) => spec.with_premap(m),
                    None => spec,
                }
            }
            KernelFamily::Nonlinear => KernelSpec::nonlinear(params(Vec::new()), log_params[0].exp()),
        };
        spec.with_nugget(self.nugget_ratio)
    }

    fn search_box(&self, family: KernelFamily, d: usize) -> Bounds {
        let ((lo, hi), k) = match (family, self.lengthscale_mode) {
            (KernelFamily::Linear, LengthscaleMode::Isotropic) => (self.log_theta_bounds, 1),
            (KernelFamily::Linear, LengthscaleMode::Anisotropic) => (self.log_theta_bounds, d),
            (KernelFamily::Nonlinear, _) => (self.log_gamma_bounds, 1),
        };
        Bounds::new(vec![lo; k], vec![hi; k])
    }
}

/// Profiled likelihood of `y` under correlation matrix `R` (nugget included).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfiledLikelihood {
    pub log_likelihood: f64,
    pub mu_hat: f64,
    pub sigma2_hat: f64,
}

fn sigma2_floor(y: &DVector<f64>) -> f64 {
    (1e-12 * y.amax().powi(2)).max(1e-300)
}

/// Profiles `μ` (unless `zero_mean`) and `σ²` out of the Gaussian likelihood
/// with covariance `σ² R`.
pub fn profile_likelihood(
    factor: &GramFactorization,
    y: &DVector<f64>,
    zero_mean: bool,
) -> ProfiledLikelihood {
    let n = y.len() as f64;
    let mu_hat = if zero_mean {
        0.0
    } else {
        let ones = DVector::from_element(y.len(), 1.0);
        let r_inv_one = factor.solve(&ones);
        r_inv_one.dot(y) / r_inv_one.sum()
    };
    let resid = y.add_scalar(-mu_hat);
    let z = factor.solve_lower(&resid);
    let sigma2_hat = (z.norm_squared() / n).max(sigma2_floor(y));
    let log_likelihood = -0.5 * n * (1.0 + sigma2_hat.ln() + (2.0 * std::f64::consts::PI).ln())
        - 0.5 * factor.log_det();
    ProfiledLikelihood {
        log_likelihood,
        mu_hat,
        sigma2_hat,
    }
}

/// Profiled log-likelihood for the correlation structure of `spec`: the
/// kernel is rescaled to unit variance, keeping its nugget-to-σ² ratio.
pub fn log_marginal_likelihood(
    spec: &KernelSpec,
    inputs: &[FunctionalInput],
    y: &DVector<f64>,
) -> Result<f64> {
    Ok(profiled(spec, inputs, y, false)?.log_likelihood)
}

fn profiled(
    spec: &KernelSpec,
    inputs: &[FunctionalInput],
    y: &DVector<f64>,
    zero_mean: bool,
) -> Result<ProfiledLikelihood> {
    check_data(inputs, y)?;
    let unit = spec.clone().with_sigma2(1.0);
    let factor = unit.gram(inputs)?;
    Ok(profile_likelihood(&factor, y, zero_mean))
}

fn check_data(inputs: &[FunctionalInput], y: &DVector<f64>) -> Result<()> {
    if inputs.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.len(),
            got: y.len(),
        });
    }
    if inputs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 training inputs, got {}",
            inputs.len()
        )));
    }
    if let Some((index, &value)) = y.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { index, value });
    }
    common_grid(inputs).map(|_| ())
}

/// Posterior mean and variance at one input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

/// A fitted GP: kernel with estimated hyperparameters, training data, `μ̂` and
/// the factorized Gram.
#[derive(Debug, Clone)]
pub struct GPModel {
    spec: KernelSpec,
    inputs: Vec<FunctionalInput>,
    y: DVector<f64>,
    mu_hat: f64,
    mean_fixed: bool,
    log_likelihood: f64,
    factorization: GramFactorization,
    alpha: DVector<f64>,
}

impl GPModel {
    /// Conditions the prior `spec` on data. `mu = None` estimates `μ` by
    /// generalized least squares; `Some(m)` fixes it.
    pub fn condition(
        spec: KernelSpec,
        inputs: Vec<FunctionalInput>,
        y: DVector<f64>,
        mu: Option<f64>,
    ) -> Result<Self> {
        check_data(&inputs, &y)?;
        spec.validate()?;
        let factorization = spec.gram(&inputs)?;
        let spec = spec.with_nugget(factorization.nugget());
        let mu_hat = match mu {
            Some(m) => m,
            None => {
                let ones = DVector::from_element(y.len(), 1.0);
                let k_inv_one = factorization.solve(&ones);
                k_inv_one.dot(&y) / k_inv_one.sum()
            }
        };
        let alpha = factorization.solve(&y.add_scalar(-mu_hat));
        let n = y.len() as f64;
        let log_likelihood = -0.5 * y.add_scalar(-mu_hat).dot(&alpha)
            - 0.5 * factorization.log_det()
            - 0.5 * n * (2.0 * std::f64::consts::PI).ln();
        Ok(Self {
            spec,
            inputs,
            y,
            mu_hat,
            mean_fixed: mu.is_some(),
            log_likelihood,
            factorization,
            alpha,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn family(&self) -> KernelFamily {
        self.spec.family()
    }

    pub fn inputs(&self) -> &[FunctionalInput] {
        &self.inputs
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn mu_hat(&self) -> f64 {
        self.mu_hat
    }

    pub fn sigma2_hat(&self) -> f64 {
        self.spec.sigma2()
    }

    /// Whether `μ` was fixed rather than estimated.
    pub fn mean_fixed(&self) -> bool {
        self.mean_fixed
    }

    /// Gaussian log-likelihood of `y` at the fitted parameters.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn factorization(&self) -> &GramFactorization {
        &self.factorization
    }

    /// `(K_n + nugget·I)⁻¹ (y − μ̂1)`
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Order-sensitive fingerprint of the Gram matrix, used to verify that a
    /// reloaded model reproduces the same `K_n`.
    pub fn gram_checksum(&self) -> f64 {
        gram_checksum(self.factorization.gram())
    }

    pub fn predict(&self, g: &FunctionalInput) -> Result<Prediction> {
        Ok(self.predict_many(std::slice::from_ref(g))?[0])
    }

    pub fn predict_many(&self, tests: &[FunctionalInput]) -> Result<Vec<Prediction>> {
        let (means, variances) = self.posterior(tests)?;
        Ok(means
            .iter()
            .zip(variances.iter())
            .map(|(&mean, &variance)| Prediction { mean, variance })
            .collect())
    }

    /// Posterior means and the full posterior covariance over `tests`.
    pub fn predict_joint(&self, tests: &[FunctionalInput]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if tests.is_empty() {
            return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
        }
        self.check_grid(tests)?;
        let k_star = self.spec.cross_covariance(&self.inputs, tests)?;
        let means = k_star.tr_mul(&self.alpha).add_scalar(self.mu_hat);
        let v = self
            .factorization
            .chol()
            .solve_lower_triangular(&k_star)
            .expect("positive Cholesky diagonal");
        let cov = self.spec.covariance(tests)? - v.tr_mul(&v);
        Ok((means, cov))
    }

    fn check_grid(&self, tests: &[FunctionalInput]) -> Result<()> {
        if tests.iter().any(|g| !g.same_grid(&self.inputs[0])) {
            Err(Error::GridMismatch)
        } else {
            Ok(())
        }
    }

    fn posterior(&self, tests: &[FunctionalInput]) -> Result<(DVector<f64>, DVector<f64>)> {
        if tests.is_empty() {
            return Ok((DVector::zeros(0), DVector::zeros(0)));
        }
        self.check_grid(tests)?;
        let k_star = self.spec.cross_covariance(&self.inputs, tests)?;
        let means = k_star.tr_mul(&self.alpha).add_scalar(self.mu_hat);
        let v = self
            .factorization
            .chol()
            .solve_lower_triangular(&k_star)
            .expect("positive Cholesky diagonal");
        let prior = self.spec.variances(tests)?;
        let threshold = VARIANCE_CLAMP * self.sigma2_hat();
        let mut variances = DVector::zeros(tests.len());
        for (j, kgg) in prior.into_iter().enumerate() {
            let var = kgg - v.column(j).norm_squared();
            variances[j] = clamp_variance(var, threshold)?;
        }
        Ok((means, variances))
    }
}

/// Clamps round-off negatives in `(−threshold, 0)` to zero.
pub fn clamp_variance(var: f64, threshold: f64) -> Result<f64> {
    if var >= 0.0 {
        Ok(var)
    } else if var >= -threshold {
        Ok(0.0)
    } else {
        Err(Error::NegativeVariance {
            variance: var,
            threshold,
        })
    }
}

/// `Σ_ij K_ij cos(i + 2j)`
pub fn gram_checksum(k: &DMatrix<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..k.ncols() {
        for i in 0..k.nrows() {
            s += k[(i, j)] * ((i + 2 * j) as f64).cos();
        }
    }
    s
}

/// Maximum-likelihood fit of one kernel family.
pub fn fit(
    inputs: &[FunctionalInput],
    y: &DVector<f64>,
    family: KernelFamily,
    config: &FitConfig,
) -> Result<GPModel> {
    check_data(inputs, y)?;
    config.validate()?;
    let d = inputs[0].grid().dim();
    let premap = match family {
        KernelFamily::Linear => config.premap,
        KernelFamily::Nonlinear => None,
    };
    let workspace = GramWorkspace::new(inputs, family, premap)?;
    let bounds = config.search_box(family, d);
    let objective = |p: &[f64]| {
        let spec = config.correlation_spec(family, p, d);
        let factor = workspace.gram(&spec).ok()?;
        Some(-profile_likelihood(&factor, y, config.zero_mean).log_likelihood)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let starts = latin_hypercube(config.multistarts, &bounds, &mut rng);
    let opts = NelderMeadOptions {
        max_iters: config.max_iters,
        ..Default::default()
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (i, start) in starts.iter().enumerate() {
        let m = nelder_mead(objective, start, &bounds, &opts);
        log::debug!(
            "fit {family} start {i}: -loglik {:.6e} at {:?} ({} iterations)",
            m.value,
            m.x,
            m.iterations
        );
        if m.value.is_finite() && best.as_ref().is_none_or(|(_, v)| m.value < *v) {
            best = Some((m.x, m.value));
        }
    }
    let (log_params, _) = best.ok_or_else(|| {
        Error::FitFailed(format!(
            "{family} kernel: Gram factorization failed at every one of {} starts",
            config.multistarts
        ))
    })?;

    let corr = config.correlation_spec(family, &log_params, d);
    let factor = workspace.gram(&corr)?;
    let prof = profile_likelihood(&factor, y, config.zero_mean);
    let spec = corr
        .with_nugget(factor.nugget())
        .with_sigma2(prof.sigma2_hat);
    let mu = config.zero_mean.then_some(0.0);
    GPModel::condition(spec, inputs.to_vec(), y.clone(), mu)
}

/// Leave-one-out residuals `y_j − ŷ_{−j}` from the closed form
/// `[K⁻¹(y − μ̂1)]_j / (K⁻¹)_jj`, with `μ̂` and hyperparameters frozen.
pub fn loo_residuals(model: &GPModel) -> DVector<f64> {
    let inv = model.factorization().inverse();
    DVector::from_iterator(
        model.len(),
        model
            .alpha()
            .iter()
            .enumerate()
            .map(|(j, a)| a / inv[(j, j)]),
    )
}

/// Mean squared leave-one-out residual.
pub fn loocv_error(model: &GPModel) -> f64 {
    loo_residuals(model).norm_squared() / model.len() as f64
}

/// One row of the kernel-selection report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub family: KernelFamily,
    pub loocv: Option<f64>,
    pub log_likelihood: Option<f64>,
    pub error: Option<String>,
}

/// Fits every family and keeps the one with the smallest LOOCV error. Ties go
/// to the linear kernel. A family whose fit fails is reported and skipped.
pub fn select_kernel(
    inputs: &[FunctionalInput],
    y: &DVector<f64>,
    families: &[KernelFamily],
    config: &FitConfig,
) -> Result<(GPModel, Vec<SelectionEntry>)> {
    if families.is_empty() {
        return Err(Error::InsufficientData("no kernel families to compare".into()));
    }
    let mut report = Vec::with_capacity(families.len());
    let mut best: Option<(GPModel, f64)> = None;
    let mut last_err = None;
    for &family in families {
        match fit(inputs, y, family, config) {
            Ok(model) => {
                let cv = loocv_error(&model);
                report.push(SelectionEntry {
                    family,
                    loocv: Some(cv),
                    log_likelihood: Some(model.log_likelihood()),
                    error: None,
                });
                let better = match &best {
                    None => true,
                    Some((m, b)) => cv < *b || (cv == *b && family < m.family()),
                };
                if better {
                    best = Some((model, cv));
                }
            }
            Err(e) => {
                log::warn!("{family} kernel excluded from selection: {e}");
                report.push(SelectionEntry {
                    family,
                    loocv: None,
                    log_likelihood: None,
                    error: Some(e.to_string()),
                });
                last_err = Some(e);
            }
        }
    }
    match best {
        Some((model, _)) => Ok((model, report)),
        None => Err(last_err.expect("at least one family was tried")),
    }
}
