//! Evaluation subcommands: sec-eval, sweep, plot, attack.

use std::fs;
use std::path::{Path, PathBuf};

use dnr_core::archive::{load, load_dnr, Artifact};
use dnr_core::attack::{attack_undefended, pgd_attack, AttackResult};
use dnr_core::data::Dataset;
use dnr_core::dnr::DnrModel;
use dnr_core::eval::{
    emit_csv, emit_sweep_csv, parse_curve_csv, run_security_eval, summarize_curves,
    svg_security_plot, threshold_sweep, CurvePoint, CurveRow, EvalConfig, EvalModel,
    SecurityCurve,
};

use crate::config::LoadedConfig;
use crate::fail::Failure;
use crate::pipeline::{require_archive, run_data};
use crate::rundir::RunDir;

fn eval_config(loaded: &LoadedConfig) -> EvalConfig {
    let cfg = &loaded.config;
    let mut out = EvalConfig::new(cfg.eval.eps_grid.clone(), cfg.attack_config(0.0));
    out.attack_subsample = cfg.eval.attack_subsample;
    out.subsample_seed = cfg.eval.subsample_seed;
    out.anchor_restarts = cfg.eval.anchor_restarts;
    out
}

fn load_rejecting(path: &Path, name: &str) -> Result<DnrModel, Failure> {
    require_archive(path)?;
    let model = load_dnr(path).map_err(Failure::from)?;
    if model.theta().is_none() {
        return Err(Failure::data(
            format!("{name} model {} has no reject threshold", path.display()),
            "run `dnr calibrate` on it first",
        ));
    }
    Ok(model)
}

/// Which classifiers a sec-eval covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSelection {
    pub dnr: bool,
    pub nr: bool,
    pub dnn: bool,
}

impl ModelSelection {
    pub fn parse(spec: &str) -> Result<Self, Failure> {
        let mut sel = ModelSelection {
            dnr: false,
            nr: false,
            dnn: false,
        };
        for part in spec.split(',') {
            match part.trim() {
                "dnr" => sel.dnr = true,
                "nr" => sel.nr = true,
                "dnn" => sel.dnn = true,
                other => {
                    return Err(Failure::usage(
                        format!("unknown classifier {other:?} in --models"),
                        "valid names: dnr, nr, dnn (comma separated)",
                    ))
                }
            }
        }
        Ok(sel)
    }
}

pub fn sec_eval(loaded: &LoadedConfig, selection: ModelSelection) -> Result<(), Failure> {
    let cfg = &loaded.config;
    let dir = RunDir::prepare(loaded)?;
    let pool = cfg.load_pool()?;
    let eval_cfg = eval_config(loaded);
    let n_runs = cfg.splits.len();

    // Load every artifact up front so a missing file fails before any
    // attack work starts.
    let mut jobs: Vec<(String, Vec<EvalModel>)> = Vec::new();
    if selection.dnr {
        let models = (0..n_runs)
            .map(|r| {
                load_rejecting(&dir.model_path("dnr", r), "dnr").map(|m| EvalModel::Rejecting {
                    name: "dnr".into(),
                    model: m,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        jobs.push(("dnr".into(), models));
    }
    if selection.nr {
        let models = (0..n_runs)
            .map(|r| {
                load_rejecting(&dir.model_path("nr", r), "nr").map(|m| EvalModel::Rejecting {
                    name: "nr".into(),
                    model: m,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        jobs.push(("nr".into(), models));
    }
    if selection.dnn {
        let path = dir.network_path();
        require_archive(&path)?;
        let net = dnr_core::archive::load_network(&path).map_err(Failure::from)?;
        let models = (0..n_runs)
            .map(|_| EvalModel::Undefended {
                name: "dnn".into(),
                network: net.clone(),
            })
            .collect();
        jobs.push(("dnn".into(), models));
    }
    if jobs.is_empty() {
        return Err(Failure::usage("--models selected nothing", ""));
    }

    let mut curves: Vec<SecurityCurve> = Vec::new();
    for (name, models) in jobs {
        let mut runs = Vec::with_capacity(n_runs);
        for (r, model) in models.iter().enumerate() {
            let data = run_data(loaded, &pool, r)?;
            let rec = run_security_eval(model, &data.test, &eval_cfg, r).map_err(Failure::from)?;
            let failures: usize = rec.points.iter().map(|p| p.attack_failures).sum();
            if failures > 0 {
                println!("{name} run {r}: {failures} attack fallbacks to the clean decision");
            }
            runs.push(rec);
        }
        let curve = summarize_curves(&name, runs).map_err(Failure::from)?;
        for p in &curve.summary {
            println!(
                "{name} eps {}: accuracy {:.4} rejection {:.4}",
                p.epsilon, p.mean_accuracy, p.mean_rejection
            );
        }
        curves.push(curve);
    }

    let csv = emit_csv(&curves).map_err(Failure::from)?;
    let path = dir.curves("security.csv");
    fs::write(&path, csv).map_err(|e| Failure::io(&path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn sweep(loaded: &LoadedConfig, model_path: Option<PathBuf>, run: usize) -> Result<(), Failure> {
    let cfg = &loaded.config;
    let dir = RunDir::prepare(loaded)?;
    let path = model_path.unwrap_or_else(|| dir.model_path("dnr", run));
    let model = load_rejecting(&path, "sweep")?;
    let pool = cfg.load_pool()?;
    let data = run_data(loaded, &pool, run)?;
    let eval_cfg = eval_config(loaded);

    let grid = if cfg.eval.theta_grid.is_empty() {
        default_theta_grid(&model, &data.test)?
    } else {
        cfg.eval.theta_grid.clone()
    };
    let rows = threshold_sweep(&model, &data.test, &eval_cfg, &grid).map_err(Failure::from)?;
    for r in rows.iter().filter(|r| r.operating_point && r.epsilon == 0.0) {
        println!(
            "operating point: theta {} clean rejection {:.4}",
            r.theta, r.clean_false_rejection
        );
    }
    let out = dir.curves(&format!("sweep_run{run}.csv"));
    fs::write(&out, emit_sweep_csv(&rows)).map_err(|e| Failure::io(&out, e))?;
    println!("wrote {}", out.display());
    Ok(())
}

/// Deciles of the clean top scores, as a data-driven default grid.
fn default_theta_grid(model: &DnrModel, test: &Dataset) -> Result<Vec<f64>, Failure> {
    let scores =
        dnr_core::dnr::combined_score_matrix(model, test.features(), test.sample_shape())
            .map_err(Failure::from)?;
    let mut top: Vec<f64> = scores
        .rows()
        .into_iter()
        .map(|r| r.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    top.sort_by(f64::total_cmp);
    let n = top.len();
    let mut grid: Vec<f64> = (0..10).map(|d| top[n * d / 10]).collect();
    grid.dedup();
    Ok(grid)
}

pub fn plot(loaded: &LoadedConfig) -> Result<(), Failure> {
    let dir = RunDir::prepare(loaded)?;
    let path = dir.curves("security.csv");
    if !path.is_file() {
        return Err(Failure::data(
            format!("missing curves {}", path.display()),
            "run `dnr sec-eval` first",
        ));
    }
    let text = fs::read_to_string(&path).map_err(|e| Failure::io(&path, e))?;
    let rows = parse_curve_csv(&text).map_err(Failure::from)?;
    let curves = summaries_from_rows(&rows)?;
    let svg = svg_security_plot(&curves, "security evaluation").map_err(Failure::from)?;
    let out = dir.plots("security.svg");
    fs::write(&out, svg).map_err(|e| Failure::io(&out, e))?;
    println!("wrote {}", out.display());
    Ok(())
}

/// Rebuilds per-classifier mean/σ summaries from emitted CSV rows, with
/// the harness's conventions (sample σ, present only with ≥ 2 runs).
fn summaries_from_rows(rows: &[CurveRow]) -> Result<Vec<SecurityCurve>, Failure> {
    let mut curves: Vec<SecurityCurve> = Vec::new();
    for row in rows {
        if !curves.iter().any(|c| c.classifier == row.classifier) {
            curves.push(SecurityCurve {
                classifier: row.classifier.clone(),
                runs: Vec::new(),
                summary: Vec::new(),
            });
        }
    }
    for curve in &mut curves {
        let mine: Vec<&CurveRow> = rows
            .iter()
            .filter(|r| r.classifier == curve.classifier)
            .collect();
        let mut eps: Vec<f64> = mine.iter().map(|r| r.epsilon).collect();
        eps.sort_by(f64::total_cmp);
        eps.dedup();
        for e in eps {
            let at: Vec<&&CurveRow> = mine.iter().filter(|r| r.epsilon == e).collect();
            let n = at.len();
            let mean = |f: fn(&CurveRow) -> f64| at.iter().map(|r| f(r)).sum::<f64>() / n as f64;
            let std = |f: fn(&CurveRow) -> f64, m: f64| {
                (n >= 2).then(|| {
                    (at.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
                })
            };
            let (ma, mr) = (mean(|r| r.accuracy), mean(|r| r.rejection_rate));
            curve.summary.push(CurvePoint {
                epsilon: e,
                mean_accuracy: ma,
                accuracy_std: std(|r| r.accuracy, ma),
                mean_rejection: mr,
                rejection_std: std(|r| r.rejection_rate, mr),
                runs: n,
            });
        }
    }
    Ok(curves)
}

pub struct AttackArgs {
    pub model: PathBuf,
    pub run: usize,
    pub index: usize,
    pub epsilon: f64,
    pub trace: Option<PathBuf>,
}

pub fn attack(loaded: &LoadedConfig, args: &AttackArgs) -> Result<(), Failure> {
    let cfg = &loaded.config;
    RunDir::prepare(loaded)?;
    require_archive(&args.model)?;
    let artifact = load(&args.model).map_err(Failure::from)?;
    let pool = cfg.load_pool()?;
    let data = run_data(loaded, &pool, args.run)?;
    if args.index >= data.test.len() {
        return Err(Failure::data(
            format!(
                "sample {} out of range (test split holds {})",
                args.index,
                data.test.len()
            ),
            "",
        ));
    }
    let x0 = data.test.tensor(args.index);
    let y = data.test.label(args.index);
    let attack_cfg = cfg.attack_config(args.epsilon);

    let result: AttackResult = match &artifact {
        Artifact::Network(net) => {
            attack_undefended(net, &x0, y, &attack_cfg, None).map_err(Failure::from)?
        }
        Artifact::Dnr(model) => {
            if model.theta().is_none() {
                return Err(Failure::data(
                    format!("model {} has no reject threshold", args.model.display()),
                    "run `dnr calibrate` on it first",
                ));
            }
            pgd_attack(model, &x0, y, &attack_cfg, None).map_err(Failure::from)?
        }
        Artifact::Svm(_) => {
            return Err(Failure::data(
                format!("{} holds a bare svm", args.model.display()),
                "attack targets are network or dnr archives",
            ))
        }
    };

    let delta: Vec<f64> = result
        .adversarial
        .data()
        .iter()
        .zip(x0.data())
        .map(|(a, b)| a - b)
        .collect();
    println!(
        "sample {} (label {y}): omega {:.6} -> {:.6} in {} iterations",
        args.index, result.initial_omega, result.final_omega, result.iterations
    );
    println!(
        "decision {} perturbation {}-norm {:.6}",
        result.prediction,
        match attack_cfg.norm {
            dnr_core::attack::AttackNorm::L1 => "l1",
            dnr_core::attack::AttackNorm::L2 => "l2",
            dnr_core::attack::AttackNorm::LInf => "linf",
        },
        attack_cfg.norm.norm(&delta)
    );

    if let Some(trace_path) = &args.trace {
        let mut text = String::from("iteration,omega\n");
        for (i, omega) in result.omega_trace.iter().enumerate() {
            text.push_str(&format!("{i},{omega}\n"));
        }
        fs::write(trace_path, text).map_err(|e| Failure::io(trace_path, e))?;
        println!("wrote {}", trace_path.display());
    }
    Ok(())
}
