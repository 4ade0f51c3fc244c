//! Matérn radial function
//!
//! ```text
//! ψ(r) = σ² (2√ν r)^ν K_ν(2√ν r) / (Γ(ν) 2^{ν−1})
//! ```
//!
//! with closed forms for ν ∈ {1/2, 3/2, 5/2} and a quadrature evaluation of the
//! modified Bessel function `K_ν` otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which radial formula `ψ` evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiForm {
    /// The Bessel form above (closed forms at half-integer ν).
    #[default]
    Standard,
    /// `(1 + √5 r + 5r²/3)·exp(−5r)` scaled by σ², kept for reproducing the
    /// published ν = 5/2 formula verbatim. Ignores ν.
    PrintedNu52,
}

/// Matérn hyperparameters: smoothness ν, variance σ² and the diagonal of the
/// scale matrix Θ. The outer function of the nonlinear kernel uses no
/// lengthscales (its scale is γ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub nu: f64,
    pub sigma2: f64,
    #[serde(default)]
    pub lengthscales: Vec<f64>,
    #[serde(default)]
    pub form: PsiForm,
}

impl MaternParams {
    pub fn new(nu: f64, sigma2: f64, lengthscales: Vec<f64>) -> Result<Self> {
        let p = Self {
            nu,
            sigma2,
            lengthscales,
            form: PsiForm::Standard,
        };
        p.validate()?;
        Ok(p)
    }

    /// Same scale `theta` in each of `d` dimensions.
    pub fn isotropic(nu: f64, sigma2: f64, theta: f64, d: usize) -> Result<Self> {
        Self::new(nu, sigma2, vec![theta; d])
    }

    /// Radial-only parameters (no Θ), as used by the nonlinear kernel.
    pub fn radial(nu: f64, sigma2: f64) -> Result<Self> {
        Self::new(nu, sigma2, Vec::new())
    }

    pub fn with_form(mut self, form: PsiForm) -> Self {
        self.form = form;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(Error::InvalidParameter {
                name: "nu",
                value: self.nu,
                reason: "must be positive",
            });
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(Error::InvalidParameter {
                name: "sigma2",
                value: self.sigma2,
                reason: "must be positive",
            });
        }
        if let Some(&bad) = self
            .lengthscales
            .iter()
            .find(|&&t| !(t.is_finite() && t > 0.0))
        {
            return Err(Error::InvalidParameter {
                name: "lengthscale",
                value: bad,
                reason: "must be positive",
            });
        }
        Ok(())
    }

    /// `ψ(r)` without argument checks; `r` must be non-negative.
    #[inline]
    pub fn psi(&self, r: f64) -> f64 {
        match self.form {
            PsiForm::Standard => self.sigma2 * matern_correlation(self.nu, r),
            PsiForm::PrintedNu52 => self.sigma2 * printed_nu52(r),
        }
    }
}

/// `ψ(r)` for validated parameters and `r ≥ 0`.
pub fn matern_psi(r: f64, params: &MaternParams) -> Result<f64> {
    params.validate()?;
    check_distance(r)?;
    Ok(params.psi(r))
}

/// The published ν = 5/2 closed form `(1 + √5 r + 5r²/3)·exp(−5r)`, verbatim.
pub fn matern_psi_printed(r: f64) -> Result<f64> {
    check_distance(r)?;
    Ok(printed_nu52(r))
}

fn check_distance(r: f64) -> Result<()> {
    if r.is_nan() || r < 0.0 {
        Err(Error::InvalidParameter {
            name: "r",
            value: r,
            reason: "distance must be non-negative",
        })
    } else {
        Ok(())
    }
}

#[inline]
fn printed_nu52(r: f64) -> f64 {
    (1.0 + 5f64.sqrt() * r + 5.0 / 3.0 * r * r) * (-5.0 * r).exp()
}

/// Unit-variance Matérn correlation `ψ(r)/σ²`.
#[inline]
pub fn matern_correlation(nu: f64, r: f64) -> f64 {
    if nu == 0.5 {
        (-std::f64::consts::SQRT_2 * r).exp()
    } else if nu == 1.5 {
        let z = 6f64.sqrt() * r;
        (1.0 + z) * (-z).exp()
    } else if nu == 2.5 {
        let z = 10f64.sqrt() * r;
        (1.0 + z + z * z / 3.0) * (-z).exp()
    } else {
        matern_correlation_bessel(nu, r)
    }
}

/// Matérn correlation through the Bessel-function definition, for any ν > 0.
pub fn matern_correlation_bessel(nu: f64, r: f64) -> f64 {
    let z = 2.0 * nu.sqrt() * r;
    if z < 1e-12 {
        return 1.0;
    }
    let log_norm = nu * z.ln() - libm::lgamma(nu) - (nu - 1.0) * std::f64::consts::LN_2;
    scaled_bessel_k_integral(nu, z, log_norm).min(1.0)
}

/// Modified Bessel function of the second kind `K_ν(x)`, `x > 0`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k requires x > 0");
    scaled_bessel_k_integral(nu.abs(), x, 0.0)
}

/// `exp(log_scale) · ∫_0^∞ exp(−x cosh t) cosh(νt) dt`.
///
/// The integrand is even in `t` and analytic, so the trapezoid rule converges
/// geometrically; terms are formed in log space to avoid overflow of
/// `cosh(νt)` and underflow of `exp(−x cosh t)`.
fn scaled_bessel_k_integral(nu: f64, x: f64, log_scale: f64) -> f64 {
    let t_peak = (nu / x).asinh();
    let width = (x * x + nu * nu).powf(-0.25);
    let h = (0.1 * width).min(0.05);
    let exponent = |t: f64| {
        let a = -x * t.cosh() + log_scale;
        // cosh(νt) = (e^{νt} + e^{−νt}) / 2
        let hi = a + nu * t;
        let lo = a - nu * t;
        hi.max(lo) + (1.0 + (-(hi - lo).abs()).exp()).ln() - std::f64::consts::LN_2
    };
    let peak = exponent(t_peak);
    let mut sum = 0.5 * exponent(0.0).exp();
    let mut k = 1usize;
    loop {
        let t = k as f64 * h;
        let e = exponent(t);
        sum += e.exp();
        if t > t_peak && e < peak - 40.0 {
            break;
        }
        k += 1;
        if k > 2_000_000 {
            break;
        }
    }
    sum * h
}
