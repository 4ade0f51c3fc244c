//! Functional-input Gaussian processes.
//!
//! Inputs are functions `g: Ω → ℝ` sampled on a tensor-product quadrature grid.
//! Two kernel families act on them: a linear kernel built from a double
//! integral against a Matérn base kernel, and a nonlinear kernel that applies a
//! Matérn radial function to the L2 distance between inputs.

pub mod designs;
pub mod domain;
pub mod emulator;
pub mod error;
pub mod expr;
pub mod format;
pub mod gp;
pub mod kernels;
pub mod optimize;
pub mod sampling;
pub mod synthetic;

pub use nalgebra;

pub use domain::{
    apply_pointwise_map, l2_distance, l2_inner, l2_norm, sample_expression, sample_function,
    Domain, FunctionalInput, PointwiseMap, QuadratureGrid, QuadratureRule,
};
pub use error::{Error, Result};
pub use expr::{parse_expression, Expr};
pub use gp::{fit, loocv_error, select_kernel, FitConfig, GPModel, LengthscaleMode, Prediction};
pub use kernels::{
    base_kernel, linear_kernel, matern_psi, matern_psi_printed, nonlinear_kernel,
    GramFactorization, KernelFamily, KernelKind, KernelSpec, MaternParams, PsiForm,
};
pub use sampling::{nystrom_eig, sample_paths_gram, sample_paths_kl, EigenSystem, PathFamily};
pub use designs::{eigenfunction_design, empirical_mspe, knot_design, DecayCurve, KnotSet};
pub use emulator::{field_mape, fit_emulator, pca_reduce, FieldDataset, PCAEmulator};
