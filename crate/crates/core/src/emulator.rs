//! Multi-output emulation through principal components.
//!
//! Training fields are centered and reduced by SVD. Each retained score is
//! modeled by its own functional-input GP, and predictions are mapped back to
//! pixel space:
//!
//! ```text
//! mean(g)     = mean_field + Σ_l m_l(g) u_l
//! variance(g) = Σ_l v_l(g) u_l²          (elementwise square)
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::{common_grid, FunctionalInput};
use crate::error::{Error, Result};
use crate::gp::{fit, select_kernel, FitConfig, GPModel, SelectionEntry};
use crate::kernels::KernelFamily;

/// Training inputs with their flattened output fields (one row per run).
#[derive(Debug, Clone)]
pub struct FieldDataset {
    inputs: Vec<FunctionalInput>,
    fields: DMatrix<f64>,
    field_shape: Vec<usize>,
}

impl FieldDataset {
    pub fn new(
        inputs: Vec<FunctionalInput>,
        fields: DMatrix<f64>,
        field_shape: Vec<usize>,
    ) -> Result<Self> {
        if inputs.len() != fields.nrows() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                got: fields.nrows(),
            });
        }
        let p: usize = field_shape.iter().product();
        if p != fields.ncols() {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: fields.ncols(),
            });
        }
        if let Some((index, &value)) = fields.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        if !inputs.is_empty() {
            common_grid(&inputs)?;
        }
        Ok(Self {
            inputs,
            fields,
            field_shape,
        })
    }

    pub fn inputs(&self) -> &[FunctionalInput] {
        &self.inputs
    }

    /// `n x p`
    pub fn fields(&self) -> &DMatrix<f64> {
        &self.fields
    }

    pub fn field_shape(&self) -> &[usize] {
        &self.field_shape
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.fields.ncols()
    }
}

/// Result of [`pca_reduce`].
#[derive(Debug, Clone, PartialEq)]
pub struct PcaReduction {
    pub mean_field: DVector<f64>,
    /// `p x k`, orthonormal columns.
    pub components: DMatrix<f64>,
    /// `n x k`
    pub scores: DMatrix<f64>,
    /// Share of total variance per retained component.
    pub explained_variance_ratio: Vec<f64>,
}

/// Centers the fields and keeps the fewest leading components whose
/// cumulative explained variance reaches `threshold`.
pub fn pca_reduce(dataset: &FieldDataset, threshold: f64) -> Result<PcaReduction> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "threshold",
            value: threshold,
            reason: "must lie in (0, 1]",
        });
    }
    let n = dataset.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "PCA needs at least 2 fields, got {n}"
        )));
    }
    let x = dataset.fields();
    let mean_field = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.mean()));
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean_field.transpose();
    }

    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let s = &svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let total: f64 = s.iter().map(|v| v * v).sum();
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if total <= (1e-14 * scale).powi(2) * (n * x.ncols()) as f64 || total == 0.0 {
        return Err(Error::RankZero);
    }

    let mut ratios = Vec::new();
    let mut cumulative = 0.0;
    for &i in &order {
        let r = s[i] * s[i] / total;
        if r <= 1e-15 {
            break;
        }
        ratios.push(r);
        cumulative += r;
        if cumulative >= threshold - 1e-12 {
            break;
        }
    }
    let k = ratios.len();
    let mut components = DMatrix::zeros(x.ncols(), k);
    for (col, &i) in order.iter().take(k).enumerate() {
        let mut u = v_t.row(i).transpose();
        let pivot = u
            .iter()
            .fold(0.0f64, |p, &v| if v.abs() > p.abs() { v } else { p });
        if pivot < 0.0 {
            u.neg_mut();
        }
        components.set_column(col, &u);
    }
    let scores = &centered * &components;
    Ok(PcaReduction {
        mean_field,
        components,
        scores,
        explained_variance_ratio: ratios,
    })
}

/// Kernel choice for a score model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyChoice {
    Linear,
    Nonlinear,
    /// Pick by LOOCV.
    Auto,
}

impl From<KernelFamily> for FamilyChoice {
    fn from(f: KernelFamily) -> Self {
        match f {
            KernelFamily::Linear => FamilyChoice::Linear,
            KernelFamily::Nonlinear => FamilyChoice::Nonlinear,
        }
    }
}

/// Mean field, retained components and one GP per score.
#[derive(Debug, Clone)]
pub struct PCAEmulator {
    mean_field: DVector<f64>,
    components: DMatrix<f64>,
    explained_variance_ratio: Vec<f64>,
    score_models: Vec<GPModel>,
    selection: Vec<Vec<SelectionEntry>>,
    field_shape: Vec<usize>,
}

/// Predicted field with per-pixel variance.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPrediction {
    pub mean: DVector<f64>,
    pub variance: DVector<f64>,
    /// Predictive variance of each score.
    pub score_variances: Vec<f64>,
}

impl PCAEmulator {
    /// Assembles an emulator from parts (used when reloading).
    pub fn from_parts(
        mean_field: DVector<f64>,
        components: DMatrix<f64>,
        explained_variance_ratio: Vec<f64>,
        score_models: Vec<GPModel>,
        field_shape: Vec<usize>,
    ) -> Result<Self> {
        let k = components.ncols();
        if k == 0 || score_models.len() != k || explained_variance_ratio.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: score_models.len(),
            });
        }
        if mean_field.len() != components.nrows() {
            return Err(Error::DimensionMismatch {
                expected: components.nrows(),
                got: mean_field.len(),
            });
        }
        Ok(Self {
            mean_field,
            components,
            explained_variance_ratio,
            selection: vec![Vec::new(); k],
            score_models,
            field_shape,
        })
    }

    pub fn mean_field(&self) -> &DVector<f64> {
        &self.mean_field
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn n_components(&self) -> usize {
        self.components.ncols()
    }

    pub fn explained_variance_ratio(&self) -> &[f64] {
        &self.explained_variance_ratio
    }

    pub fn score_models(&self) -> &[GPModel] {
        &self.score_models
    }

    /// Per-component kernel selection reports (empty for fixed families).
    pub fn selection(&self) -> &[Vec<SelectionEntry>] {
        &self.selection
    }

    pub fn field_shape(&self) -> &[usize] {
        &self.field_shape
    }

    /// The emulator restricted to component `l` (zero-based).
    pub fn component(&self, l: usize) -> Result<PCAEmulator> {
        if l >= self.n_components() {
            return Err(Error::InvalidParameter {
                name: "component",
                value: l as f64,
                reason: "exceeds the number of retained components",
            });
        }
        Ok(PCAEmulator {
            mean_field: self.mean_field.clone(),
            components: self.components.columns(l, 1).into_owned(),
            explained_variance_ratio: vec![self.explained_variance_ratio[l]],
            score_models: vec![self.score_models[l].clone()],
            selection: vec![self.selection[l].clone()],
            field_shape: self.field_shape.clone(),
        })
    }

    pub fn predict_field(&self, g: &FunctionalInput) -> Result<FieldPrediction> {
        Ok(self
            .predict_fields(std::slice::from_ref(g))?
            .pop()
            .expect("one prediction per input"))
    }

    pub fn predict_fields(&self, tests: &[FunctionalInput]) -> Result<Vec<FieldPrediction>> {
        let per_component: Vec<_> = self
            .score_models
            .iter()
            .enumerate()
            .map(|(l, m)| {
                m.predict_many(tests).map_err(|e| Error::Component {
                    component: l + 1,
                    source: Box::new(e),
                })
            })
            .collect::<Result<_>>()?;
        Ok((0..tests.len())
            .map(|t| {
                let mut mean = self.mean_field.clone();
                let mut variance = DVector::zeros(self.mean_field.len());
                let mut score_variances = Vec::with_capacity(self.n_components());
                for (l, preds) in per_component.iter().enumerate() {
                    let u = self.components.column(l);
                    mean.axpy(preds[t].mean, &u, 1.0);
                    variance.axpy(preds[t].variance, &u.component_mul(&u), 1.0);
                    score_variances.push(preds[t].variance);
                }
                FieldPrediction {
                    mean,
                    variance,
                    score_variances,
                }
            })
            .collect())
    }

    /// Factor `F = U·diag(√v)` (`p x k`) of the full rank-`k` predictive
    /// covariance `F Fᵀ` at `g`, including cross-pixel terms.
    pub fn covariance_factor(&self, prediction: &FieldPrediction) -> DMatrix<f64> {
        let mut f = self.components.clone();
        for (l, v) in prediction.score_variances.iter().enumerate() {
            f.column_mut(l).scale_mut(v.sqrt());
        }
        f
    }
}

/// Reduces the dataset and fits a GP per retained score. `families` holds a
/// single choice applied to every score, or one choice per score.
pub fn fit_emulator(
    dataset: &FieldDataset,
    threshold: f64,
    families: &[FamilyChoice],
    config: &FitConfig,
) -> Result<PCAEmulator> {
    let pca = pca_reduce(dataset, threshold)?;
    let k = pca.components.ncols();
    if families.is_empty() || (families.len() != 1 && families.len() < k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: families.len(),
        });
    }
    let mut score_models = Vec::with_capacity(k);
    let mut selection = Vec::with_capacity(k);
    for l in 0..k {
        let choice = families[if families.len() == 1 { 0 } else { l }];
        let y = pca.scores.column(l).into_owned();
        let wrap = |e: Error| Error::Component {
            component: l + 1,
            source: Box::new(e),
        };
        let (model, report) = match choice {
            FamilyChoice::Linear => (
                fit(dataset.inputs(), &y, KernelFamily::Linear, config).map_err(wrap)?,
                Vec::new(),
            ),
            FamilyChoice::Nonlinear => (
                fit(dataset.inputs(), &y, KernelFamily::Nonlinear, config).map_err(wrap)?,
                Vec::new(),
            ),
            FamilyChoice::Auto => select_kernel(
                dataset.inputs(),
                &y,
                &[KernelFamily::Linear, KernelFamily::Nonlinear],
                config,
            )
            .map_err(wrap)?,
        };
        score_models.push(model);
        selection.push(report);
    }
    Ok(PCAEmulator {
        mean_field: pca.mean_field,
        components: pca.components,
        explained_variance_ratio: pca.explained_variance_ratio,
        score_models,
        selection,
        field_shape: dataset.field_shape().to_vec(),
    })
}

/// Mean absolute percentage error with the count of excluded entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mape {
    pub percent: f64,
    /// Entries with `|truth| < 1e-8 · max|truth|`, left out of the mean.
    pub excluded: usize,
}

/// `mean |truth − pred| / |truth| × 100` over entries not near zero.
pub fn field_mape(predicted: &[f64], truth: &[f64]) -> Result<Mape> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    let max = truth.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let eps = 1e-8 * max;
    let mut sum = 0.0;
    let mut used = 0usize;
    for (p, t) in predicted.iter().zip(truth) {
        if t.abs() < eps || *t == 0.0 {
            continue;
        }
        sum += ((t - p) / t).abs();
        used += 1;
    }
    if used == 0 {
        return Err(Error::InsufficientData(
            "every truth entry is zero; MAPE is undefined".into(),
        ));
    }
    Ok(Mape {
        percent: 100.0 * sum / used as f64,
        excluded: truth.len() - used,
    })
}
