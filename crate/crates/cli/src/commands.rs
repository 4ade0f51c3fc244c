use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use figp::designs::DecayExperiment;
use figp::emulator::{fit_emulator, FamilyChoice};
use figp::format::format_sig;
use figp::gp::loo_residuals;
use figp::sampling::{default_truncation, linspace, sine_family};
use figp::synthetic::{emulator_training_inputs, SyntheticFieldMap, EMULATOR_INPUTS};
use figp::{
    fit, loocv_error, nystrom_eig, sample_paths_gram, sample_paths_kl, select_kernel, Domain, FitConfig,
    FunctionalInput, GPModel, KernelFamily, KernelSpec, MaternParams, QuadratureGrid, QuadratureRule,
};
use serde_json::{json, Value};

use crate::args::*;
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult, Stage};
use crate::io::{
    dataset_csv, load_dataset, load_training, to_json, write_atomic, DatasetManifest, EmulatorFile, GridSpec,
    InputRef, ModelFile,
};
use crate::reproduce::{curve_line, run_target};

/// Resolved global settings shared by every command.
#[derive(Debug, Clone)]
pub struct Context {
    pub seed: u64,
    /// `--grid-res`, which overrides every configured resolution.
    pub grid_res: Option<usize>,
    pub out: Option<PathBuf>,
    pub config: ExperimentConfig,
}

impl Context {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            grid_res: None,
            out: None,
            config: ExperimentConfig::default(),
        }
    }

    pub fn from_cli(cli: &Cli, config: ExperimentConfig) -> Self {
        Self {
            seed: cli.seed.or(config.seed).unwrap_or(42),
            grid_res: cli.grid_res,
            out: cli.out.clone().or_else(|| config.out.clone()),
            config,
        }
    }

    /// Flag, then the top-level config setting, then `fallback`.
    pub fn resolution(&self, fallback: Option<usize>) -> Option<usize> {
        self.grid_res.or(self.config.grid_resolution).or(fallback)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            seed: self.seed,
            ..self.config.fit.clone()
        }
    }

    pub fn decay_experiment(&self) -> DecayExperiment {
        let mut e = self.config.mspe_decay.clone();
        e.seed = self.seed;
        if let Some(r) = self.grid_res {
            e.resolution = r;
        }
        e
    }
}

/// What a command prints: a text rendering and a JSON report.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub text: String,
    pub json: Value,
}

pub fn execute(command: &Command, ctx: &Context) -> CliResult<Outcome> {
    match command {
        Command::Fit(a) => cmd_fit(a, ctx),
        Command::Predict(a) => cmd_predict(a, ctx),
        Command::Loocv(a) => cmd_loocv(a),
        Command::SelectKernel(a) => cmd_select(a, ctx),
        Command::SamplePaths(a) => cmd_sample_paths(a, ctx),
        Command::MspeDecay(a) => cmd_mspe_decay(a, ctx),
        Command::Emulate(EmulateCommand::Fit(a)) => cmd_emulate_fit(a, ctx),
        Command::Emulate(EmulateCommand::Predict(a)) => cmd_emulate_predict(a, ctx),
        Command::Emulate(EmulateCommand::Synthetic(a)) => cmd_emulate_synthetic(a, ctx),
        Command::Reproduce(a) => cmd_reproduce(a, ctx),
    }
}

fn kernel_summary(spec: &KernelSpec) -> String {
    let p = spec.params();
    let mut s = format!("nu={} sigma2={}", format_sig(p.nu, 6), format_sig(p.sigma2, 6));
    match spec.family() {
        KernelFamily::Linear => {
            let theta: Vec<String> = p.lengthscales.iter().map(|t| format_sig(*t, 6)).collect();
            let _ = write!(s, " theta=[{}]", theta.join(", "));
        }
        KernelFamily::Nonlinear => {
            if let figp::KernelKind::Nonlinear { gamma, .. } = &spec.kind {
                let _ = write!(s, " gamma={}", format_sig(*gamma, 6));
            }
        }
    }
    let _ = write!(s, " nugget={}", format_sig(spec.nugget, 6));
    s
}

fn model_report(model: &GPModel, path: Option<&Path>) -> Value {
    json!({
        "family": model.family(),
        "kernel": model.spec(),
        "n": model.len(),
        "mu_hat": model.mu_hat(),
        "sigma2_hat": model.sigma2_hat(),
        "log_likelihood": model.log_likelihood(),
        "loocv": loocv_error(model),
        "model": path.map(|p| p.display().to_string()),
    })
}

fn save_model(model: &GPModel, refs: &[InputRef], path: &Path) -> CliResult<()> {
    write_atomic(path, to_json(&ModelFile::from_model(model, refs)).as_bytes())
}

fn cmd_fit(a: &FitArgs, ctx: &Context) -> CliResult<Outcome> {
    let data = load_training(&a.train, ctx.resolution(None))?;
    let model = fit(&data.inputs, &data.y, a.kernel, &ctx.fit_config()).stage(&format!("fit {}", a.kernel))?;
    let path = a.model.clone().unwrap_or_else(|| ctx.out_dir().join("model.json"));
    save_model(&model, &data.refs, &path)?;
    let text = format!(
        "{} kernel: {}\nmu_hat={} log_likelihood={} loocv={}\nsaved {}\n",
        model.family(),
        kernel_summary(model.spec()),
        format_sig(model.mu_hat(), 6),
        format_sig(model.log_likelihood(), 6),
        format_sig(loocv_error(&model), 6),
        path.display()
    );
    Ok(Outcome {
        text,
        json: model_report(&model, Some(&path)),
    })
}

fn load_tests(texts: &[String], grid: &Arc<QuadratureGrid>) -> CliResult<Vec<FunctionalInput>> {
    texts
        .iter()
        .map(|t| InputRef::parse_cell(t).load(grid, Path::new(".")))
        .collect()
}

fn cmd_predict(a: &PredictArgs, ctx: &Context) -> CliResult<Outcome> {
    let (_, model) = ModelFile::load(&a.model)?;
    let tests = load_tests(&a.inputs, model.inputs()[0].grid())?;
    let preds = model.predict_many(&tests).stage("predict")?;
    let mut csv = String::from("input,mean,variance\n");
    let mut rows = Vec::new();
    for (text, p) in a.inputs.iter().zip(&preds) {
        let _ = writeln!(csv, "{},{},{}", csv_cell(text), format_sig(p.mean, 6), format_sig(p.variance, 6));
        rows.push(json!({ "input": text, "mean": p.mean, "variance": p.variance }));
    }
    if let Some(dir) = &ctx.out {
        write_atomic(&dir.join("predictions.csv"), csv.as_bytes())?;
    }
    Ok(Outcome {
        text: csv,
        json: json!({ "predictions": rows }),
    })
}

fn csv_cell(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

fn cmd_loocv(a: &LoocvArgs) -> CliResult<Outcome> {
    let (file, model) = ModelFile::load(&a.model)?;
    let residuals: Vec<f64> = loo_residuals(&model).iter().copied().collect();
    let cv = loocv_error(&model);
    let mut text = format!("loocv={}\n", format_sig(cv, 6));
    for (r, res) in file.refs().iter().zip(&residuals) {
        let _ = writeln!(text, "  {}: {}", r.display(), format_sig(*res, 6));
    }
    Ok(Outcome {
        text,
        json: json!({ "loocv": cv, "residuals": residuals }),
    })
}

fn cmd_select(a: &SelectArgs, ctx: &Context) -> CliResult<Outcome> {
    let data = load_training(&a.train, ctx.resolution(None))?;
    let (model, entries) =
        select_kernel(&data.inputs, &data.y, &a.families, &ctx.fit_config()).stage("select kernel")?;
    if let Some(path) = &a.model {
        save_model(&model, &data.refs, path)?;
    }
    let mut text = String::new();
    for e in &entries {
        match (e.loocv, &e.error) {
            (Some(cv), _) => {
                let _ = writeln!(text, "{:<10} loocv={}", e.family.to_string(), format_sig(cv, 6));
            }
            (None, Some(err)) => {
                let _ = writeln!(text, "{:<10} failed: {err}", e.family.to_string());
            }
            _ => {}
        }
    }
    let _ = writeln!(text, "selected {}: {}", model.family(), kernel_summary(model.spec()));
    Ok(Outcome {
        text,
        json: json!({
            "selected": model.family(),
            "entries": entries,
            "model": model_report(&model, a.model.as_deref()),
        }),
    })
}

fn cmd_sample_paths(a: &SamplePathsArgs, ctx: &Context) -> CliResult<Outcome> {
    let stage = "sample paths";
    let fig = &ctx.config.figures;
    let res = ctx.grid_res.unwrap_or(fig.resolution);
    let grid = Arc::new(
        QuadratureGrid::new(Domain::periodic_interval(), res, QuadratureRule::GaussLegendre).stage(stage)?,
    );
    let n_paths = a.paths.unwrap_or(fig.paths);
    let alphas = linspace(0.0, a.alpha_max.unwrap_or(fig.alpha_max), a.alpha_points.unwrap_or(fig.alpha_points));
    let inputs = sine_family(&alphas, &grid).stage(stage)?;
    let (spec, scale_name, scale) = match a.kernel {
        KernelFamily::Linear => (
            KernelSpec::linear(MaternParams::isotropic(a.nu, a.sigma2, a.theta, 1).stage(stage)?),
            "theta",
            a.theta,
        ),
        KernelFamily::Nonlinear => (
            KernelSpec::nonlinear(MaternParams::radial(a.nu, a.sigma2).stage(stage)?, a.gamma),
            "gamma",
            a.gamma,
        ),
    };
    let family = match a.method {
        SamplingMethod::Gram => sample_paths_gram(&inputs, &spec, n_paths, ctx.seed).stage(stage)?,
        SamplingMethod::Kl => {
            if a.kernel != KernelFamily::Linear {
                return Err(CliError::new(stage, "the KL route needs the linear kernel"));
            }
            let m = a.truncation.unwrap_or_else(|| default_truncation(grid.len()));
            let eig = nystrom_eig(spec.params(), &grid, m).stage(stage)?;
            sample_paths_kl(&eig, &inputs, n_paths, ctx.seed).stage(stage)?
        }
    };
    let family = family
        .with_index_values(alphas.clone())
        .stage(stage)?
        .with_parameters(vec![
            ("nu".into(), a.nu),
            (scale_name.into(), scale),
            ("sigma2".into(), a.sigma2),
        ]);
    let path = ctx.out_dir().join(&a.name);
    write_atomic(&path, family.to_csv().as_bytes())?;
    Ok(Outcome {
        text: format!("{n_paths} paths over {} values of alpha written to {}\n", alphas.len(), path.display()),
        json: json!({
            "file": path.display().to_string(),
            "kernel": spec,
            "paths": n_paths,
            "seed": ctx.seed,
            "alpha": alphas,
        }),
    })
}

fn cmd_mspe_decay(a: &MspeDecayArgs, ctx: &Context) -> CliResult<Outcome> {
    let mut e = ctx.decay_experiment();
    if let Some(nu) = a.nu {
        e.nu = nu;
    }
    if let Some(theta) = a.theta {
        e.theta = theta;
    }
    if let Some(sizes) = &a.sizes {
        e.sizes = sizes.clone();
    }
    if let Some(t) = a.tests {
        e.n_tests = t;
    }
    let result = e.run().stage("mspe decay")?;
    let dir = ctx.out_dir();
    write_atomic(&dir.join("mspe_knot.csv"), result.knot.to_csv().as_bytes())?;
    write_atomic(&dir.join("mspe_eigenfunction.csv"), result.eigenfunction.to_csv().as_bytes())?;
    Ok(Outcome {
        text: format!("{}{}", curve_line(&result.knot), curve_line(&result.eigenfunction)),
        json: json!({ "experiment": e, "knot": result.knot, "eigenfunction": result.eigenfunction }),
    })
}

fn cmd_emulate_fit(a: &EmulateFitArgs, ctx: &Context) -> CliResult<Outcome> {
    let (ds, refs) = load_dataset(&a.dataset, ctx.resolution(None))?;
    let threshold = a.threshold.unwrap_or(ctx.config.emulator.threshold);
    let kernels: Vec<FamilyChoice> = a.kernel.clone().unwrap_or_else(|| ctx.config.emulator.kernel.clone());
    let em = fit_emulator(&ds, threshold, &kernels, &ctx.fit_config()).stage("emulate fit")?;
    let path = a.model.clone().unwrap_or_else(|| ctx.out_dir().join("emulator.json"));
    write_atomic(&path, to_json(&EmulatorFile::from_emulator(&em, &refs)).as_bytes())?;
    let mut text = format!("{} components retained\n", em.n_components());
    let mut comps = Vec::new();
    for (l, (m, ratio)) in em.score_models().iter().zip(em.explained_variance_ratio()).enumerate() {
        let cv = loocv_error(m);
        let _ = writeln!(
            text,
            "  component {}: variance ratio {}, {} kernel, loocv {}",
            l + 1,
            format_sig(*ratio, 6),
            m.family(),
            format_sig(cv, 6)
        );
        comps.push(json!({
            "explained_variance_ratio": ratio,
            "family": m.family(),
            "kernel": m.spec(),
            "loocv": cv,
            "selection": em.selection()[l],
        }));
    }
    let _ = writeln!(text, "saved {}", path.display());
    Ok(Outcome {
        text,
        json: json!({ "components": comps, "model": path.display().to_string() }),
    })
}

fn cmd_emulate_predict(a: &EmulatePredictArgs, ctx: &Context) -> CliResult<Outcome> {
    let em = EmulatorFile::load(&a.model)?;
    let grid = em.score_models()[0].inputs()[0].grid().clone();
    let tests = load_tests(&a.inputs, &grid)?;
    let preds = em.predict_fields(&tests).stage("emulate predict")?;
    let dir = ctx.out_dir();
    let mut text = String::new();
    let mut files = Vec::new();
    for (i, p) in preds.iter().enumerate() {
        let mut csv = String::from("pixel,mean,variance\n");
        for (k, (m, v)) in p.mean.iter().zip(p.variance.iter()).enumerate() {
            let _ = writeln!(csv, "{k},{},{}", format_sig(*m, 6), format_sig(*v, 6));
        }
        let path = dir.join(format!("field{}.csv", i + 1));
        write_atomic(&path, csv.as_bytes())?;
        let _ = writeln!(text, "{} -> {}", a.inputs[i], path.display());
        files.push(json!({
            "input": a.inputs[i],
            "file": path.display().to_string(),
            "score_variances": p.score_variances,
        }));
    }
    Ok(Outcome {
        text,
        json: json!({ "field_shape": em.field_shape(), "predictions": files }),
    })
}

fn cmd_emulate_synthetic(a: &EmulateSyntheticArgs, ctx: &Context) -> CliResult<Outcome> {
    let stage = "emulate synthetic";
    let map = SyntheticFieldMap {
        side: a.side,
        ..Default::default()
    };
    let grid = GridSpec::default()
        .build(&[(0.0, 1.0), (0.0, 1.0)], ctx.resolution(None))
        .stage(stage)?;
    let inputs = emulator_training_inputs(&grid).stage(stage)?;
    let ds = map.dataset(&inputs).stage(stage)?;
    let labels: Vec<String> = EMULATOR_INPUTS.iter().map(|s| s.to_string()).collect();
    let dir = ctx.out_dir();
    write_atomic(&dir.join("fields.csv"), dataset_csv(&labels, ds.fields())?.as_bytes())?;
    let manifest = DatasetManifest {
        domain: vec![(0.0, 1.0), (0.0, 1.0)],
        grid: GridSpec::of(&grid),
        field_shape: map.shape(),
        fields: PathBuf::from("fields.csv"),
    };
    let manifest_path = dir.join("manifest.json");
    write_atomic(&manifest_path, to_json(&manifest).as_bytes())?;
    Ok(Outcome {
        text: format!("{} fields of {} pixels; manifest {}\n", ds.len(), ds.pixels(), manifest_path.display()),
        json: json!({ "runs": ds.len(), "field_shape": map.shape(), "manifest": manifest_path.display().to_string() }),
    })
}

fn cmd_reproduce(a: &ReproduceArgs, ctx: &Context) -> CliResult<Outcome> {
    let dir = ctx.out_dir();
    let mut text = String::new();
    let mut reports = serde_json::Map::new();
    for r in run_target(a.target, ctx)? {
        for art in &r.artifacts {
            write_atomic(&dir.join(&art.name), art.contents.as_bytes())
                .map_err(|e| CliError::new(format!("{}: {}", r.target.name(), e.stage), e.message))?;
        }
        let _ = writeln!(text, "[{}]", r.target.name());
        text.push_str(&r.summary);
        let files: Vec<&str> = r.artifacts.iter().map(|a| a.name.as_str()).collect();
        let _ = writeln!(text, "wrote {} to {}", files.join(", "), dir.display());
        reports.insert(r.target.name().into(), r.report);
    }
    Ok(Outcome {
        text,
        json: Value::Object(reports),
    })
}
