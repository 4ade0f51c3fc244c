//! Reproduction targets. Each target returns its files as in-memory
//! artifacts so callers decide where (and whether) to write them.

use std::fmt::Write as _;

use clap::ValueEnum;
use figp::designs::DecayCurve;
use figp::domain::Domain;
use figp::format::format_sig;
use figp::gp::loocv_error;
use figp::sampling::{linspace, path_rng, sine_family};
use figp::synthetic::{table1_inputs, Functional, TestDraw, TABLE1_INPUTS};
use figp::{fit, sample_paths_gram, KernelFamily, KernelSpec, MaternParams, QuadratureGrid, QuadratureRule};
use serde::Serialize;
use serde_json::Value;

use crate::commands::Context;
use crate::error::{CliResult, Stage};
use crate::io::{to_json, GridSpec, InputRef, TrainingFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Table1,
    Table2,
    Figure2,
    Figure3,
    #[value(name = "mspe_decay", alias = "mspe-decay")]
    MspeDecay,
    /// Every target above.
    All,
}

impl Target {
    pub const EACH: [Target; 5] = [
        Target::Table1,
        Target::Table2,
        Target::Figure2,
        Target::Figure3,
        Target::MspeDecay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Target::Table1 => "table1",
            Target::Table2 => "table2",
            Target::Figure2 => "figure2",
            Target::Figure3 => "figure3",
            Target::MspeDecay => "mspe_decay",
            Target::All => "all",
        }
    }
}

/// A file produced by a target, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone)]
pub struct Reproduction {
    pub target: Target,
    pub artifacts: Vec<Artifact>,
    pub report: Value,
    pub summary: String,
}

pub fn run_target(target: Target, ctx: &Context) -> CliResult<Vec<Reproduction>> {
    let targets: Vec<Target> = match target {
        Target::All => Target::EACH.to_vec(),
        t => vec![t],
    };
    targets
        .into_iter()
        .map(|t| match t {
            Target::Table1 => table1(ctx),
            Target::Table2 => table2(ctx),
            Target::Figure2 => figure(ctx, Target::Figure2),
            Target::Figure3 => figure(ctx, Target::Figure3),
            Target::MspeDecay => mspe_decay(ctx),
            Target::All => unreachable!("expanded above"),
        })
        .collect()
}

fn unit_square_grid(ctx: &Context, stage: &str) -> CliResult<std::sync::Arc<QuadratureGrid>> {
    GridSpec::default()
        .build(&[(0.0, 1.0), (0.0, 1.0)], ctx.resolution(None))
        .stage(stage)
}

fn csv_line(cells: &[String]) -> String {
    let mut line = cells.join(",");
    line.push('\n');
    line
}

#[derive(Debug, Clone, Serialize)]
pub struct Table1Row {
    pub input: String,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
}

pub fn table1_rows(ctx: &Context) -> CliResult<Vec<Table1Row>> {
    let stage = "table1: quadrature";
    let grid = unit_square_grid(ctx, stage)?;
    let inputs = table1_inputs(&grid).stage(stage)?;
    inputs
        .iter()
        .zip(TABLE1_INPUTS)
        .map(|(g, text)| {
            Ok(Table1Row {
                input: text.to_string(),
                f1: Functional::F1.eval(g).stage(stage)?,
                f2: Functional::F2.eval(g).stage(stage)?,
                f3: Functional::F3.eval(g).stage(stage)?,
            })
        })
        .collect()
}

/// `table1.csv`, the report, and one training file per functional.
pub fn table1(ctx: &Context) -> CliResult<Reproduction> {
    let rows = table1_rows(ctx)?;
    let mut csv = String::from("input,f1,f2,f3\n");
    for r in &rows {
        csv.push_str(&csv_line(&[
            r.input.clone(),
            format_sig(r.f1, 6),
            format_sig(r.f2, 6),
            format_sig(r.f3, 6),
        ]));
    }
    let resolution = unit_square_grid(ctx, "table1: quadrature")?.resolution();
    let mut artifacts = vec![Artifact {
        name: "table1.csv".into(),
        contents: csv,
    }];
    for f in Functional::ALL {
        let y = rows
            .iter()
            .map(|r| match f {
                Functional::F1 => r.f1,
                Functional::F2 => r.f2,
                Functional::F3 => r.f3,
            })
            .collect();
        let train = TrainingFile {
            domain: vec![(0.0, 1.0), (0.0, 1.0)],
            grid: GridSpec {
                resolution: Some(resolution),
                rule: QuadratureRule::GaussLegendre,
            },
            inputs: TABLE1_INPUTS.iter().map(|t| InputRef::Expr(t.to_string())).collect(),
            y,
        };
        artifacts.push(Artifact {
            name: format!("train_{}.json", f.name()),
            contents: to_json(&train),
        });
    }
    let report = serde_json::json!({ "grid_resolution": resolution, "rows": rows });
    artifacts.push(Artifact {
        name: "table1.json".into(),
        contents: to_json(&report),
    });
    let mut summary = String::from("input            f1       f2       f3\n");
    for r in &rows {
        let line = format!(
            "{:<16} {:<8} {:<8} {}",
            r.input,
            format_sig(r.f1, 4),
            format_sig(r.f2, 4),
            format_sig(r.f3, 4)
        );
        let _ = writeln!(summary, "{line}");
    }
    Ok(Reproduction {
        target: Target::Table1,
        artifacts,
        report,
        summary,
    })
}

/// Fit, LOOCV and test error of one kernel family on one functional.
#[derive(Debug, Clone, Serialize)]
pub struct Table2Cell {
    pub loocv: f64,
    /// Mean over the three test families within each draw, then over draws.
    pub mape_draw_major: f64,
    /// Mean over draws for each test family, then over families.
    pub mape_family_major: f64,
    /// Per test family, averaged over draws.
    pub mape_by_test_family: [f64; 3],
    pub log_likelihood: f64,
    pub mu_hat: f64,
    pub kernel: KernelSpec,
}

#[derive(Debug, Clone, Serialize)]
pub struct Table2Row {
    pub functional: String,
    /// Smallest LOOCV, ties to linear.
    pub selected: KernelFamily,
    /// Smallest MAPE (draw-major).
    pub best_mape: KernelFamily,
    pub linear: Table2Cell,
    pub nonlinear: Table2Cell,
}

#[derive(Debug, Clone, Serialize)]
pub struct Table2Report {
    pub seed: u64,
    pub draws: usize,
    pub grid_resolution: usize,
    pub test_families: [&'static str; 3],
    pub rows: Vec<Table2Row>,
}

pub fn table2_report(ctx: &Context) -> CliResult<Table2Report> {
    let grid = unit_square_grid(ctx, "table2: grid")?;
    let train = table1_inputs(&grid).stage("table2: training inputs")?;
    let draws = ctx.config.table2.draws;
    if draws == 0 {
        return Err(crate::error::CliError::new("table2: draws", "need at least one draw"));
    }
    let mut rng = path_rng(ctx.seed, 0);
    let mut tests = Vec::with_capacity(3 * draws);
    for _ in 0..draws {
        tests.extend(TestDraw::sample(&mut rng).inputs(&grid).stage("table2: test inputs")?);
    }
    let config = ctx.fit_config();
    let mut rows = Vec::new();
    for f in Functional::ALL {
        let y = f.eval_all(&train).stage("table2: responses")?;
        let truth = f.eval_all(&tests).stage("table2: test responses")?;
        let mut cells = Vec::new();
        for family in [KernelFamily::Linear, KernelFamily::Nonlinear] {
            let stage = format!("table2: fit {family}/{}", f.name());
            let model = fit(&train, &y, family, &config).stage(&stage)?;
            let preds = model.predict_many(&tests).stage(&format!("table2: predict {family}/{}", f.name()))?;
            let mut per_draw = vec![0.0; draws];
            let mut per_family = [0.0; 3];
            for (i, p) in preds.iter().enumerate() {
                let e = 100.0 * (truth[i] - p.mean).abs() / truth[i].abs();
                per_draw[i / 3] += e / 3.0;
                per_family[i % 3] += e / draws as f64;
            }
            cells.push(Table2Cell {
                loocv: loocv_error(&model),
                mape_draw_major: per_draw.iter().sum::<f64>() / draws as f64,
                mape_family_major: per_family.iter().sum::<f64>() / 3.0,
                mape_by_test_family: per_family,
                log_likelihood: model.log_likelihood(),
                mu_hat: model.mu_hat(),
                kernel: model.spec().clone(),
            });
        }
        let nonlinear = cells.pop().expect("two cells");
        let linear = cells.pop().expect("two cells");
        let pick = |a: f64, b: f64| {
            if b < a {
                KernelFamily::Nonlinear
            } else {
                KernelFamily::Linear
            }
        };
        rows.push(Table2Row {
            functional: f.name().into(),
            selected: pick(linear.loocv, nonlinear.loocv),
            best_mape: pick(linear.mape_draw_major, nonlinear.mape_draw_major),
            linear,
            nonlinear,
        });
    }
    Ok(Table2Report {
        seed: ctx.seed,
        draws,
        grid_resolution: grid.resolution(),
        test_families: ["1+sin(a1*x1+a2*x2)", "b+x1^2+x2^3", "exp(-k*x1*x2)"],
        rows,
    })
}

/// `table2.csv`: one row per (measure, functional) with both kernels and the
/// argmin; `table2.json`: the full report.
pub fn table2(ctx: &Context) -> CliResult<Reproduction> {
    let report = table2_report(ctx)?;
    let mut csv = String::from("measure,functional,linear,nonlinear,best\n");
    for measure in ["loocv", "mape"] {
        for r in &report.rows {
            let (a, b, best) = match measure {
                "loocv" => (r.linear.loocv, r.nonlinear.loocv, r.selected),
                _ => (r.linear.mape_draw_major, r.nonlinear.mape_draw_major, r.best_mape),
            };
            csv.push_str(&csv_line(&[
                measure.into(),
                r.functional.clone(),
                format_sig(a, 6),
                format_sig(b, 6),
                best.to_string(),
            ]));
        }
    }
    let mut summary = String::from("functional  loocv(lin)  loocv(nonlin)  mape%(lin)  mape%(nonlin)  selected\n");
    for r in &report.rows {
        let _ = writeln!(
            summary,
            "{:<11} {:<11} {:<14} {:<11} {:<14} {}",
            r.functional,
            format_sig(r.linear.loocv, 3),
            format_sig(r.nonlinear.loocv, 3),
            format_sig(r.linear.mape_draw_major, 3),
            format_sig(r.nonlinear.mape_draw_major, 3),
            r.selected
        );
    }
    let value = serde_json::to_value(&report).expect("report serializes");
    Ok(Reproduction {
        target: Target::Table2,
        artifacts: vec![
            Artifact {
                name: "table2.csv".into(),
                contents: csv,
            },
            Artifact {
                name: "table2.json".into(),
                contents: to_json(&value),
            },
        ],
        report: value,
        summary,
    })
}

/// `label: mspe at each n, fitted slope and the theoretical rate`
pub fn curve_line(c: &DecayCurve) -> String {
    let points: Vec<String> = c
        .sizes
        .iter()
        .zip(&c.mspe)
        .map(|(n, m)| format!("{n}:{}", format_sig(*m, 3)))
        .collect();
    let rate = c.theoretical_rate.map_or_else(|| "NA".into(), |r| format_sig(r, 3));
    format!(
        "{:<14} {}  slope {} (se {}, theory {rate})\n",
        c.label,
        points.join(" "),
        format_sig(c.slope, 3),
        format_sig(c.slope_se, 3)
    )
}

/// One panel of a sample-path sweep.
#[derive(Debug, Clone, Serialize)]
pub struct Panel {
    pub file: String,
    pub varied: &'static str,
    pub nu: f64,
    pub scale: f64,
    pub sigma2: f64,
}

/// Linear panels vary ν (θ = σ² = 1), then θ and σ² at ν = 2.5; nonlinear
/// panels do the same with γ in place of θ and a baseline γ = 0.01.
pub fn panels(target: Target) -> Vec<Panel> {
    let (prefix, scale_name, base_scale, scales) = match target {
        Target::Figure2 => ("figure2", "theta", 1.0, [0.1, 1.0, 10.0]),
        _ => ("figure3", "gamma", 0.01, [0.01, 0.1, 1.0]),
    };
    let mut out = Vec::new();
    let mut push = |varied: &'static str, value: f64, nu: f64, scale: f64, sigma2: f64| {
        out.push(Panel {
            file: format!("{prefix}_{varied}_{}.csv", format_sig(value, 6)),
            varied,
            nu,
            scale,
            sigma2,
        })
    };
    for nu in [0.5, 1.5, 2.5] {
        push("nu", nu, nu, base_scale, 1.0);
    }
    for s in scales {
        push(scale_name, s, 2.5, s, 1.0);
    }
    for sigma2 in [0.1, 1.0, 10.0] {
        push("sigma2", sigma2, 2.5, base_scale, sigma2);
    }
    out
}

pub fn figure(ctx: &Context, target: Target) -> CliResult<Reproduction> {
    let name = target.name();
    let fig = &ctx.config.figures;
    let res = ctx.grid_res.unwrap_or(fig.resolution);
    let grid = QuadratureGrid::new(Domain::periodic_interval(), res, QuadratureRule::GaussLegendre)
        .map(std::sync::Arc::new)
        .stage(&format!("{name}: grid"))?;
    let alphas = linspace(0.0, fig.alpha_max, fig.alpha_points);
    let inputs = sine_family(&alphas, &grid).stage(&format!("{name}: inputs"))?;
    let family = if target == Target::Figure2 {
        KernelFamily::Linear
    } else {
        KernelFamily::Nonlinear
    };
    let mut artifacts = Vec::new();
    let mut summary = String::new();
    let panels = panels(target);
    for p in &panels {
        let stage = format!("{name}: {}", p.file);
        let (spec, scale_name) = match family {
            KernelFamily::Linear => (
                KernelSpec::linear(MaternParams::isotropic(p.nu, p.sigma2, p.scale, 1).stage(&stage)?),
                "theta",
            ),
            KernelFamily::Nonlinear => (
                KernelSpec::nonlinear(MaternParams::radial(p.nu, p.sigma2).stage(&stage)?, p.scale),
                "gamma",
            ),
        };
        let paths = sample_paths_gram(&inputs, &spec, fig.paths, ctx.seed)
            .and_then(|pf| pf.with_index_values(alphas.clone()))
            .stage(&stage)?
            .with_parameters(vec![
                ("nu".into(), p.nu),
                (scale_name.into(), p.scale),
                ("sigma2".into(), p.sigma2),
            ]);
        let _ = writeln!(summary, "{}: {} paths over {} values of alpha", p.file, fig.paths, alphas.len());
        artifacts.push(Artifact {
            name: p.file.clone(),
            contents: paths.to_csv(),
        });
    }
    let report = serde_json::json!({
        "kernel": family,
        "seed": ctx.seed,
        "paths": fig.paths,
        "alpha_points": fig.alpha_points,
        "alpha_max": fig.alpha_max,
        "grid_resolution": res,
        "panels": panels,
    });
    artifacts.push(Artifact {
        name: format!("{name}.json"),
        contents: to_json(&report),
    });
    Ok(Reproduction {
        target,
        artifacts,
        report,
        summary,
    })
}

pub fn mspe_decay(ctx: &Context) -> CliResult<Reproduction> {
    let experiment = ctx.decay_experiment();
    let result = experiment.run().stage("mspe_decay: run")?;
    let report = serde_json::json!({ "experiment": experiment, "knot": result.knot, "eigenfunction": result.eigenfunction });
    let summary = format!("{}{}", curve_line(&result.knot), curve_line(&result.eigenfunction));
    Ok(Reproduction {
        target: Target::MspeDecay,
        artifacts: vec![
            Artifact {
                name: "mspe_knot.csv".into(),
                contents: result.knot.to_csv(),
            },
            Artifact {
                name: "mspe_eigenfunction.csv".into(),
                contents: result.eigenfunction.to_csv(),
            },
            Artifact {
                name: "mspe_decay.json".into(),
                contents: to_json(&report),
            },
        ],
        report,
        summary,
    })
}
