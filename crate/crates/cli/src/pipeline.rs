//! Artifact-producing subcommands: train-net, fit-dnr, calibrate.
//!
//! Stages communicate only through archives plus the shared config, so
//! later stages never re-train earlier ones. Splits are re-drawn from
//! seeds on demand; the calibration holdout is the trailing span of each
//! train split and the SVM rows are the leading span, so the two never
//! overlap.

use std::path::{Path, PathBuf};

use dnr_core::archive::{load_network, save_dnr, save_network};
use dnr_core::data::{split, Dataset};
use dnr_core::dnr::{calibrate_threshold, fit_dnr, DnrModel, LayerTap};
use dnr_core::nn::{train_sgd, Network};

use crate::config::LoadedConfig;
use crate::fail::Failure;
use crate::rundir::RunDir;

fn chosen_accuracy(outcome: &dnr_core::svm::GridSearchOutcome) -> f64 {
    outcome
        .grid
        .iter()
        .zip(&outcome.mean_accuracy)
        .find(|(p, _)| **p == outcome.best)
        .map(|(_, a)| *a)
        .unwrap_or(f64::NAN)
}

/// Train/test split of one run, with the train side subdivided into the
/// SVM rows and the calibration holdout.
pub struct RunData {
    pub fit: Dataset,
    pub calibration: Dataset,
    pub test: Dataset,
}

pub fn run_data(loaded: &LoadedConfig, pool: &Dataset, run: usize) -> Result<RunData, Failure> {
    let cfg = &loaded.config;
    let split_pool = cfg.split_pool(pool)?;
    let spec = cfg.split_spec(run)?;
    let (train, test) = split(&split_pool, &spec, run).map_err(Failure::from)?;
    let holdout = cfg.calibration.holdout;
    let cal_start = train.len() - holdout;
    let fit_end = cfg.svm.fit_rows.unwrap_or(cal_start).min(cal_start);
    let fit = train
        .subset(&(0..fit_end).collect::<Vec<_>>())
        .map_err(Failure::from)?;
    let calibration = train
        .subset(&(cal_start..train.len()).collect::<Vec<_>>())
        .map_err(Failure::from)?;
    Ok(RunData {
        fit,
        calibration,
        test,
    })
}

pub fn require_archive(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::data(
            format!("missing model {}", path.display()),
            "run the producing subcommand first (train-net, fit-dnr, calibrate)",
        ))
    }
}

pub fn train_net(loaded: &LoadedConfig) -> Result<(), Failure> {
    let cfg = &loaded.config;
    let dir = RunDir::prepare(loaded)?;
    let pool = cfg.load_pool()?;
    let pretrain = cfg.pretrain_slice(&pool)?;
    let net = cfg.network(pool.sample_shape())?;
    let (net, report) = train_sgd(&net, &pretrain, &cfg.train_config()).map_err(Failure::from)?;
    let losses: Vec<String> = report.epoch_losses.iter().map(|l| format!("{l:.4}")).collect();
    println!(
        "trained {} epochs on {} samples; loss {}",
        report.epoch_losses.len(),
        pretrain.len(),
        losses.join(" ")
    );

    let data = run_data(loaded, &pool, 0)?;
    let correct = (0..data.test.len())
        .filter(|&i| net.predict(&data.test.tensor(i)).unwrap_or(0) == data.test.label(i))
        .count();
    println!(
        "clean accuracy on run-0 test split: {:.4}",
        correct as f64 / data.test.len() as f64
    );

    let path = dir.network_path();
    save_network(&path, &net).map_err(Failure::from)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn taps_for(loaded: &LoadedConfig, net: &Network, nr: bool) -> Result<LayerTap, Failure> {
    if nr {
        return LayerTap::new(vec![net.logits_index()], net).map_err(Failure::from);
    }
    let taps = &loaded.config.taps;
    if !taps.layers.is_empty() {
        LayerTap::new(taps.layers.clone(), net).map_err(Failure::from)
    } else {
        let count = taps.count.unwrap_or(3);
        LayerTap::new(net.suggested_taps(count), net).map_err(Failure::from)
    }
}

pub fn fit(loaded: &LoadedConfig, run: Option<usize>, nr: bool) -> Result<(), Failure> {
    let cfg = &loaded.config;
    let dir = RunDir::prepare(loaded)?;
    let net_path = dir.network_path();
    require_archive(&net_path)?;
    let net = load_network(&net_path).map_err(Failure::from)?;
    let taps = taps_for(loaded, &net, nr)?;
    let kind = if nr { "nr" } else { "dnr" };
    let pool = cfg.load_pool()?;

    let runs: Vec<usize> = match run {
        Some(r) => vec![r],
        None => (0..cfg.splits.len()).collect(),
    };
    for r in runs {
        let data = run_data(loaded, &pool, r)?;
        let (model, report) =
            fit_dnr(&net, &data.fit, &taps, &cfg.fit_config()).map_err(Failure::from)?;
        for (t, search) in report.tap_searches.iter().enumerate() {
            println!(
                "run {r}: tap {} C {} gamma {:.6} (cv accuracy {:.4})",
                taps.indices()[t],
                search.best.c,
                search.best.gamma,
                chosen_accuracy(search)
            );
        }
        println!(
            "run {r}: combiner C {} gamma {:.6} (cv accuracy {:.4})",
            report.combiner_search.best.c,
            report.combiner_search.best.gamma,
            chosen_accuracy(&report.combiner_search)
        );
        let path = dir.model_path(kind, r);
        save_dnr(&path, &model).map_err(Failure::from)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn calibrate(loaded: &LoadedConfig, model_path: Option<PathBuf>, run: usize) -> Result<(), Failure> {
    let cfg = &loaded.config;
    let dir = RunDir::prepare(loaded)?;
    let path = model_path.unwrap_or_else(|| dir.model_path("dnr", run));
    require_archive(&path)?;
    let mut model = dnr_core::archive::load_dnr(&path).map_err(Failure::from)?;

    let pool = cfg.load_pool()?;
    let data = run_data(loaded, &pool, run)?;
    let theta =
        calibrate_threshold(&model, &data.calibration, cfg.calibration.rho).map_err(Failure::from)?;
    model.set_theta(Some(theta)).map_err(Failure::from)?;

    let rejected = holdout_rejection(&model, &data.calibration)?;
    println!(
        "run {run}: theta {theta} (holdout rejection {:.4}, target {})",
        rejected, cfg.calibration.rho
    );
    save_dnr(&path, &model).map_err(Failure::from)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn holdout_rejection(model: &DnrModel, holdout: &Dataset) -> Result<f64, Failure> {
    let preds = dnr_core::dnr::predict_with_reject_batch(
        model,
        holdout.features(),
        holdout.sample_shape(),
    )
    .map_err(Failure::from)?;
    Ok(preds.iter().filter(|&&p| p == 0).count() as f64 / preds.len() as f64)
}
