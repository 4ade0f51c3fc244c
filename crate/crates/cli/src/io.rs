//! File formats: training sets, functional inputs, saved models and field
//! datasets. Every file is written atomically.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use figp::domain::default_resolution;
use figp::emulator::FieldDataset;
use figp::gp::loocv_error;
use figp::nalgebra::{DMatrix, DVector};
use figp::{
    sample_expression, Domain, FunctionalInput, GPModel, KernelSpec, PCAEmulator, QuadratureGrid,
    QuadratureRule,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, Stage};

pub const MODEL_FORMAT: &str = "figp-model";
pub const EMULATOR_FORMAT: &str = "figp-emulator";
pub const FORMAT_VERSION: u32 = 1;

/// Quadrature settings. A missing resolution means the per-dimension default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub resolution: Option<usize>,
    pub rule: QuadratureRule,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            resolution: None,
            rule: QuadratureRule::GaussLegendre,
        }
    }
}

impl GridSpec {
    pub fn build(&self, bounds: &[(f64, f64)], resolution: Option<usize>) -> figp::Result<Arc<QuadratureGrid>> {
        let domain = Domain::new(bounds.to_vec())?;
        let res = resolution
            .or(self.resolution)
            .unwrap_or_else(|| default_resolution(domain.dim()));
        Ok(Arc::new(QuadratureGrid::new(domain, res, self.rule)?))
    }

    pub fn of(grid: &QuadratureGrid) -> Self {
        Self {
            resolution: Some(grid.resolution()),
            rule: grid.rule(),
        }
    }
}

/// A functional input as it appears in a file: an expression, a CSV of node
/// values, or the node values inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputRef {
    Expr(String),
    Csv {
        csv: PathBuf,
    },
    Values {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        values: Vec<f64>,
    },
}

impl InputRef {
    /// Relative CSV paths resolve against `base`.
    pub fn load(&self, grid: &Arc<QuadratureGrid>, base: &Path) -> CliResult<FunctionalInput> {
        match self {
            InputRef::Expr(text) => {
                sample_expression(text, grid).stage(&format!("input `{text}`"))
            }
            InputRef::Csv { csv } => read_input_csv(&base.join(csv), grid),
            InputRef::Values { label, values } => {
                let g = FunctionalInput::from_values(grid.clone(), DVector::from_column_slice(values))
                    .stage("inline input")?;
                Ok(match label {
                    Some(l) => g.with_label(l.clone()),
                    None => g,
                })
            }
        }
    }

    /// Self-contained form: expressions stay text, anything else is inlined.
    pub fn embedded(&self, g: &FunctionalInput) -> InputRef {
        match self {
            InputRef::Expr(_) | InputRef::Values { .. } => self.clone(),
            InputRef::Csv { csv } => InputRef::Values {
                label: Some(csv.display().to_string()),
                values: g.values().iter().copied().collect(),
            },
        }
    }

    /// `*.csv` names a file, anything else is an expression.
    pub fn parse_cell(text: &str) -> InputRef {
        let t = text.trim();
        if t.to_ascii_lowercase().ends_with(".csv") {
            InputRef::Csv { csv: PathBuf::from(t) }
        } else {
            InputRef::Expr(t.to_string())
        }
    }

    pub fn display(&self) -> String {
        match self {
            InputRef::Expr(t) => t.clone(),
            InputRef::Csv { csv } => csv.display().to_string(),
            InputRef::Values { label, .. } => label.clone().unwrap_or_else(|| "<values>".into()),
        }
    }
}

/// Reads `d` coordinate columns plus a value column, one row per grid node in
/// order. A non-numeric first row is taken as a header.
pub fn read_input_csv(path: &Path, grid: &Arc<QuadratureGrid>) -> CliResult<FunctionalInput> {
    let stage = format!("read {}", path.display());
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .stage(&stage)?;
    let d = grid.dim();
    let mut values = Vec::with_capacity(grid.len());
    for (row, record) in reader.records().enumerate() {
        let record = record.stage(&stage)?;
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let fields = match parsed {
            Ok(f) => f,
            Err(_) if row == 0 => continue,
            Err(e) => return Err(CliError::new(&stage, format!("row {}: {e}", row + 1))),
        };
        if fields.len() != d + 1 {
            return Err(CliError::new(
                &stage,
                format!("row {}: expected {} columns, found {}", row + 1, d + 1, fields.len()),
            ));
        }
        let k = values.len();
        if k >= grid.len() {
            return Err(CliError::new(&stage, format!("more rows than the {} grid nodes", grid.len())));
        }
        let node = grid.node(k);
        for (c, (&x, &n)) in fields[..d].iter().zip(node).enumerate() {
            if (x - n).abs() > 1e-9 * (1.0 + n.abs()) {
                return Err(CliError::new(
                    &stage,
                    format!("row {}: x{} = {x} does not match grid node {n}", row + 1, c + 1),
                ));
            }
        }
        values.push(fields[d]);
    }
    if values.len() != grid.len() {
        return Err(CliError::new(
            &stage,
            format!("{} rows for {} grid nodes", values.len(), grid.len()),
        ));
    }
    FunctionalInput::from_values(grid.clone(), DVector::from_vec(values))
        .map(|g| g.with_label(path.display().to_string()))
        .stage(&stage)
}

/// Node coordinates and values of `g`, at full precision.
pub fn input_csv(g: &FunctionalInput) -> String {
    let d = g.grid().dim();
    let mut out = String::new();
    for c in 1..=d {
        out.push_str(&format!("x{c},"));
    }
    out.push_str("value\n");
    for (node, v) in g.grid().nodes().zip(g.values().iter()) {
        for x in node {
            out.push_str(&format!("{x:?},"));
        }
        out.push_str(&format!("{v:?}\n"));
    }
    out
}

/// `{domain, grid, inputs, y}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingFile {
    pub domain: Vec<(f64, f64)>,
    #[serde(default)]
    pub grid: GridSpec,
    pub inputs: Vec<InputRef>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainingData {
    pub inputs: Vec<FunctionalInput>,
    pub refs: Vec<InputRef>,
    pub y: DVector<f64>,
}

impl TrainingFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        read_json(path, "load training data")
    }

    /// Samples every input; `resolution` overrides the file's grid setting.
    pub fn resolve(&self, base: &Path, resolution: Option<usize>) -> CliResult<TrainingData> {
        let stage = "load training data";
        if self.inputs.len() != self.y.len() {
            return Err(CliError::new(
                stage,
                format!("{} inputs but {} responses", self.inputs.len(), self.y.len()),
            ));
        }
        let grid = self.grid.build(&self.domain, resolution).stage(stage)?;
        let inputs = self
            .inputs
            .iter()
            .map(|r| r.load(&grid, base))
            .collect::<CliResult<Vec<_>>>()?;
        let refs = self.inputs.iter().zip(&inputs).map(|(r, g)| r.embedded(g)).collect();
        Ok(TrainingData {
            inputs,
            refs,
            y: DVector::from_vec(self.y.clone()),
        })
    }
}

pub fn load_training(path: &Path, resolution: Option<usize>) -> CliResult<TrainingData> {
    TrainingFile::load(path)?.resolve(&parent_dir(path), resolution)
}

/// A saved GP: kernel with fitted hyperparameters plus the training data
/// needed to rebuild the factorized Gram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub kernel: KernelSpec,
    pub mu_hat: f64,
    pub zero_mean: bool,
    pub domain: Vec<(f64, f64)>,
    pub grid: GridSpec,
    pub inputs: Vec<InputRef>,
    pub y: Vec<f64>,
    pub log_likelihood: f64,
    pub loocv: f64,
    pub gram_checksum: f64,
}

impl ModelFile {
    pub fn from_model(model: &GPModel, refs: &[InputRef]) -> Self {
        let grid = model.inputs()[0].grid();
        Self {
            format: MODEL_FORMAT.into(),
            version: FORMAT_VERSION,
            kernel: model.spec().clone(),
            mu_hat: model.mu_hat(),
            zero_mean: model.mean_fixed(),
            domain: grid.domain().bounds().to_vec(),
            grid: GridSpec::of(grid),
            inputs: refs.to_vec(),
            y: model.y().iter().copied().collect(),
            log_likelihood: model.log_likelihood(),
            loocv: loocv_error(model),
            gram_checksum: model.gram_checksum(),
        }
    }

    pub fn load(path: &Path) -> CliResult<(Self, GPModel)> {
        let file: ModelFile = read_json(path, "load model")?;
        check_format(&file.format, file.version, MODEL_FORMAT, "load model")?;
        let grid = file.grid.build(&file.domain, None).stage("load model")?;
        let model = restore_model(
            &file.kernel,
            &file.inputs,
            &file.y,
            file.mu_hat,
            file.gram_checksum,
            &grid,
            &parent_dir(path),
        )?;
        Ok((file, model))
    }

    pub fn refs(&self) -> &[InputRef] {
        &self.inputs
    }
}

fn check_format(found: &str, version: u32, expected: &str, stage: &str) -> CliResult<()> {
    if found != expected {
        return Err(CliError::new(stage, format!("expected a `{expected}` file, found `{found}`")));
    }
    if version != FORMAT_VERSION {
        return Err(CliError::new(stage, format!("unsupported format version {version}")));
    }
    Ok(())
}

fn restore_model(
    kernel: &KernelSpec,
    refs: &[InputRef],
    y: &[f64],
    mu_hat: f64,
    checksum: f64,
    grid: &Arc<QuadratureGrid>,
    base: &Path,
) -> CliResult<GPModel> {
    let stage = "load model";
    let inputs = refs
        .iter()
        .map(|r| r.load(grid, base))
        .collect::<CliResult<Vec<_>>>()?;
    let model = GPModel::condition(kernel.clone(), inputs, DVector::from_column_slice(y), Some(mu_hat))
        .stage(stage)?;
    let scale: f64 = model.factorization().gram().iter().map(|v| v.abs()).sum();
    let recomputed = model.gram_checksum();
    if !((recomputed - checksum).abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE)) {
        return Err(CliError::new(
            stage,
            format!("Gram checksum mismatch: stored {checksum:e}, recomputed {recomputed:e}"),
        ));
    }
    Ok(model)
}

/// One score GP inside a saved emulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub kernel: KernelSpec,
    pub mu_hat: f64,
    pub y: Vec<f64>,
    pub gram_checksum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulatorFile {
    pub format: String,
    pub version: u32,
    pub field_shape: Vec<usize>,
    pub domain: Vec<(f64, f64)>,
    pub grid: GridSpec,
    pub inputs: Vec<InputRef>,
    pub mean_field: Vec<f64>,
    /// One entry per retained component.
    pub components: Vec<Vec<f64>>,
    pub explained_variance_ratio: Vec<f64>,
    pub scores: Vec<ScoreModel>,
}

impl EmulatorFile {
    pub fn from_emulator(em: &PCAEmulator, refs: &[InputRef]) -> Self {
        let grid = em.score_models()[0].inputs()[0].grid();
        Self {
            format: EMULATOR_FORMAT.into(),
            version: FORMAT_VERSION,
            field_shape: em.field_shape().to_vec(),
            domain: grid.domain().bounds().to_vec(),
            grid: GridSpec::of(grid),
            inputs: refs.to_vec(),
            mean_field: em.mean_field().iter().copied().collect(),
            components: em
                .components()
                .column_iter()
                .map(|c| c.iter().copied().collect())
                .collect(),
            explained_variance_ratio: em.explained_variance_ratio().to_vec(),
            scores: em
                .score_models()
                .iter()
                .map(|m| ScoreModel {
                    kernel: m.spec().clone(),
                    mu_hat: m.mu_hat(),
                    y: m.y().iter().copied().collect(),
                    gram_checksum: m.gram_checksum(),
                })
                .collect(),
        }
    }

    pub fn load(path: &Path) -> CliResult<PCAEmulator> {
        let stage = "load emulator";
        let file: EmulatorFile = read_json(path, stage)?;
        check_format(&file.format, file.version, EMULATOR_FORMAT, stage)?;
        let grid = file.grid.build(&file.domain, None).stage(stage)?;
        let base = parent_dir(path);
        let models = file
            .scores
            .iter()
            .map(|s| restore_model(&s.kernel, &file.inputs, &s.y, s.mu_hat, s.gram_checksum, &grid, &base))
            .collect::<CliResult<Vec<_>>>()?;
        let p = file.mean_field.len();
        let k = file.components.len();
        if file.components.iter().any(|c| c.len() != p) {
            return Err(CliError::new(stage, "component length differs from the mean field"));
        }
        let components = DMatrix::from_fn(p, k, |i, l| file.components[l][i]);
        PCAEmulator::from_parts(
            DVector::from_vec(file.mean_field),
            components,
            file.explained_variance_ratio,
            models,
            file.field_shape,
        )
        .stage(stage)
    }
}

/// Sidecar describing a field dataset: the grid for its inputs, the field
/// shape and the CSV holding one `input,v1,…,vp` row per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub domain: Vec<(f64, f64)>,
    #[serde(default)]
    pub grid: GridSpec,
    pub field_shape: Vec<usize>,
    pub fields: PathBuf,
}

pub fn load_dataset(manifest_path: &Path, resolution: Option<usize>) -> CliResult<(FieldDataset, Vec<InputRef>)> {
    let stage = "load dataset";
    let manifest: DatasetManifest = read_json(manifest_path, stage)?;
    let base = parent_dir(manifest_path);
    let grid = manifest.grid.build(&manifest.domain, resolution).stage(stage)?;
    let fields_path = base.join(&manifest.fields);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(&fields_path)
        .stage(stage)?;
    let mut inputs = Vec::new();
    let mut refs = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.stage(stage)?;
        let cell = record
            .get(0)
            .ok_or_else(|| CliError::new(stage, format!("row {} is empty", i + 1)))?;
        let r = InputRef::parse_cell(cell);
        let g = r.load(&grid, &base)?;
        let values = record
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| CliError::new(stage, format!("row {}: `{v}`: {e}", i + 1)))
            })
            .collect::<CliResult<Vec<_>>>()?;
        refs.push(r.embedded(&g));
        inputs.push(g);
        rows.push(values);
    }
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(CliError::new(stage, "rows have differing numbers of field values"));
    }
    let fields = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let ds = FieldDataset::new(inputs, fields, manifest.field_shape).stage(stage)?;
    Ok((ds, refs))
}

/// Dataset CSV at full precision.
pub fn dataset_csv(labels: &[String], fields: &DMatrix<f64>) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["input".to_string()];
    header.extend((1..=fields.ncols()).map(|j| format!("v{j}")));
    w.write_record(&header).stage("write dataset")?;
    for (i, label) in labels.iter().enumerate() {
        let mut row = vec![label.clone()];
        row.extend(fields.row(i).iter().map(|v| format!("{v:?}")));
        w.write_record(&row).stage("write dataset")?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::new("write dataset", e.to_string()))?;
    String::from_utf8(bytes).stage("write dataset")
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path, stage: &str) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::new(stage, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::new(stage, format!("{}: {e}", path.display())))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let stage = format!("write {}", path.display());
    let dir = parent_dir(path);
    fs::create_dir_all(&dir).stage(&stage)?;
    let mut builder = tempfile::Builder::new();
    builder.prefix(".figp-tmp");
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        builder.permissions(fs::Permissions::from_mode(0o644));
    }
    let mut tmp = builder.tempfile_in(&dir).stage(&stage)?;
    tmp.write_all(contents).stage(&stage)?;
    tmp.as_file().sync_all().stage(&stage)?;
    tmp.persist(path).map_err(|e| CliError::new(&stage, e.error.to_string()))?;
    Ok(())
}
