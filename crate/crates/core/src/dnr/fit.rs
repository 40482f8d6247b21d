//! Stacked fitting of the rejecting classifier and threshold calibration.
//!
//! Per-layer machines are stacked: fold-held-out score vectors train the
//! combiner so it never sees a score produced by a machine that trained
//! on that same sample. The report carries enough bookkeeping (fold
//! assignment, per-fold training index sets, the out-of-fold matrix) for
//! that hygiene to be audited after the fact.

use ndarray::{s, Array2, ArrayView2};

use crate::data::{stratified_folds, stratified_subsample, Dataset};
use crate::dnr::{extract_representation_matrices, DnrModel, LayerTap};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::svm::{
    build_grid, grid_search_cv, ova_train, GridSearchOutcome,
    DEFAULT_CACHE_BUDGET, DEFAULT_C_GRID, DEFAULT_GAMMA_SCALE_GRID,
};

/// Settings for [`fit_dnr`] (and [`crate::dnr::fit_nr`]).
#[derive(Debug, Clone, PartialEq)]
pub struct DnrFitConfig {
    /// Stacking folds for the out-of-fold combiner inputs.
    pub folds: usize,
    /// Folds inside each hyperparameter search.
    pub hyper_folds: usize,
    /// Soft-margin grid.
    pub c_grid: Vec<f64>,
    /// Kernel-width multipliers; `gamma = scale / dim` per machine input.
    pub gamma_scale_grid: Vec<f64>,
    /// SMO stopping tolerance.
    pub tolerance: f64,
    /// Cap on the samples fed to each hyperparameter search (stratified);
    /// `None` searches on everything.
    pub grid_subsample: Option<usize>,
    /// Kernel cache budget in bytes.
    pub cache_budget: usize,
    /// Base seed; stage seeds derive from it as documented on the fields
    /// of [`DnrFitReport`].
    pub seed: u64,
}

impl Default for DnrFitConfig {
    fn default() -> Self {
        DnrFitConfig {
            folds: 3,
            hyper_folds: 5,
            c_grid: DEFAULT_C_GRID.to_vec(),
            gamma_scale_grid: DEFAULT_GAMMA_SCALE_GRID.to_vec(),
            tolerance: 1e-3,
            grid_subsample: None,
            cache_budget: DEFAULT_CACHE_BUDGET,
            seed: 0,
        }
    }
}

impl DnrFitConfig {
    fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidParam {
                name: "folds",
                detail: format!("{} must be at least 2", self.folds),
            });
        }
        if self.hyper_folds < 2 {
            return Err(Error::InvalidParam {
                name: "hyper_folds",
                detail: format!("{} must be at least 2", self.hyper_folds),
            });
        }
        if self.c_grid.is_empty() || self.gamma_scale_grid.is_empty() {
            return Err(Error::InvalidParam {
                name: "grid",
                detail: "empty C or gamma grid".into(),
            });
        }
        Ok(())
    }

    /// Seed for the hyperparameter search of tap position `t`.
    pub fn grid_seed(&self, t: usize) -> u64 {
        self.seed.wrapping_add(1_000).wrapping_add(t as u64)
    }

    /// Seed for the combiner's hyperparameter search.
    pub fn combiner_grid_seed(&self) -> u64 {
        self.seed.wrapping_add(2_000)
    }

    /// Seed for the grid-search subsample of tap position `t`.
    pub fn subsample_seed(&self, t: usize) -> u64 {
        self.seed.wrapping_add(3_000).wrapping_add(t as u64)
    }

    /// Seed for the combiner grid-search subsample.
    pub fn combiner_subsample_seed(&self) -> u64 {
        self.seed.wrapping_add(4_000)
    }
}

/// Everything worth auditing about one stacked fit.
#[derive(Debug, Clone)]
pub struct DnrFitReport {
    /// Stacking fold of every training sample.
    pub fold_of: Vec<usize>,
    /// Sorted training indices used by the fold-`f` base machines.
    pub fold_train_sets: Vec<Vec<usize>>,
    /// Chosen hyperparameters per tap (shared by the tap's machines).
    pub tap_searches: Vec<GridSearchOutcome>,
    /// Chosen combiner hyperparameters.
    pub combiner_search: GridSearchOutcome,
    /// The out-of-fold score matrix the combiner trained on
    /// (`n x taps*classes`, row order = training order).
    pub oof_scores: Array2<f64>,
}

fn searched_hyperparams(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    num_classes: usize,
    cfg: &DnrFitConfig,
    grid_seed: u64,
    subsample_seed: u64,
) -> Result<GridSearchOutcome> {
    let grid = build_grid(&cfg.c_grid, &cfg.gamma_scale_grid, features.ncols());
    let idx = stratified_subsample(
        labels,
        cfg.grid_subsample.unwrap_or(labels.len()),
        subsample_seed,
    );
    let sub_x = {
        let mut m = Array2::zeros((idx.len(), features.ncols()));
        for (r, &i) in idx.iter().enumerate() {
            m.row_mut(r).assign(&features.row(i));
        }
        m
    };
    let sub_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
    grid_search_cv(
        sub_x.view(),
        &sub_labels,
        num_classes,
        &grid,
        cfg.hyper_folds,
        cfg.tolerance,
        grid_seed,
    )
}

/// Fits the full rejecting pipeline on `train`: per-tap machines with
/// cross-validated hyperparameters, out-of-fold stacking, the combiner,
/// and final base machines retrained on all of `train`. The threshold is
/// left unset; see [`calibrate_threshold`].
pub fn fit_dnr(
    net: &Network,
    train: &Dataset,
    taps: &LayerTap,
    cfg: &DnrFitConfig,
) -> Result<(DnrModel, DnrFitReport)> {
    cfg.validate()?;
    let c = train.num_classes();
    if c < 2 {
        return Err(Error::Data("rejection needs at least 2 classes".into()));
    }
    if train.sample_shape() != net.input_shape() {
        return Err(Error::Shape {
            expected: net.input_shape().to_vec(),
            actual: train.sample_shape().to_vec(),
        });
    }
    let n = train.len();
    let labels = train.labels();

    let reps =
        extract_representation_matrices(net, taps, train.features(), train.sample_shape())?;

    // Hyperparameters per tap, tuned on (a stratified subsample of) the
    // full training representations.
    let mut tap_searches = Vec::with_capacity(taps.len());
    for (t, rep) in reps.iter().enumerate() {
        tap_searches.push(searched_hyperparams(
            rep.view(),
            labels,
            c,
            cfg,
            cfg.grid_seed(t),
            cfg.subsample_seed(t),
        )?);
    }

    // Out-of-fold combiner inputs: fold f's rows are scored by machines
    // trained on every other fold.
    let fold_of = stratified_folds(labels, cfg.folds, cfg.seed)?;
    let mut fold_train_sets = Vec::with_capacity(cfg.folds);
    let mut oof = Array2::zeros((n, taps.len() * c));
    for f in 0..cfg.folds {
        let train_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let eval_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        let fold_labels: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
        for (t, rep) in reps.iter().enumerate() {
            let mut tr = Array2::zeros((train_idx.len(), rep.ncols()));
            for (r, &i) in train_idx.iter().enumerate() {
                tr.row_mut(r).assign(&rep.row(i));
            }
            let hp = tap_searches[t].best;
            let svm = ova_train(
                tr.view(),
                &fold_labels,
                c,
                &vec![hp; c],
                cfg.tolerance,
                cfg.cache_budget,
            )?;
            let mut ev = Array2::zeros((eval_idx.len(), rep.ncols()));
            for (r, &i) in eval_idx.iter().enumerate() {
                ev.row_mut(r).assign(&rep.row(i));
            }
            let scores = svm.decision_matrix(ev.view())?;
            for (r, &i) in eval_idx.iter().enumerate() {
                oof.slice_mut(s![i, t * c..(t + 1) * c])
                    .assign(&scores.row(r));
            }
        }
        fold_train_sets.push(train_idx);
    }

    // Combiner: tuned and trained on the out-of-fold matrix.
    let combiner_search = searched_hyperparams(
        oof.view(),
        labels,
        c,
        cfg,
        cfg.combiner_grid_seed(),
        cfg.combiner_subsample_seed(),
    )?;
    let combiner = ova_train(
        oof.view(),
        labels,
        c,
        &vec![combiner_search.best; c],
        cfg.tolerance,
        cfg.cache_budget,
    )?;

    // Final per-tap machines retrained on the full training set.
    let mut base_svms = Vec::with_capacity(taps.len());
    for (t, rep) in reps.iter().enumerate() {
        base_svms.push(ova_train(
            rep.view(),
            labels,
            c,
            &vec![tap_searches[t].best; c],
            cfg.tolerance,
            cfg.cache_budget,
        )?);
    }

    let model = DnrModel::assemble(net.clone(), taps.clone(), base_svms, combiner, None, c)?;
    Ok((
        model,
        DnrFitReport {
            fold_of,
            fold_train_sets,
            tap_searches,
            combiner_search,
            oof_scores: oof,
        },
    ))
}

/// Threshold achieving a clean rejection rate of about `rho` on a
/// validation set: the `ceil(rho * n)`-th smallest top score, so exactly
/// that many validation samples fall at or below it. `rho = 0` returns a
/// threshold strictly below the smallest top score (nothing rejects).
pub fn calibrate_threshold(model: &DnrModel, validation: &Dataset, rho: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidParam {
            name: "rho",
            detail: format!("{rho} outside [0, 1)"),
        });
    }
    if validation.is_empty() {
        return Err(Error::Data("empty calibration set".into()));
    }
    let scores = crate::dnr::combined_score_matrix(
        model,
        validation.features(),
        validation.sample_shape(),
    )?;
    let mut top: Vec<f64> = scores
        .axis_iter(ndarray::Axis(0))
        .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    top.sort_by(f64::total_cmp);
    let n = top.len();
    let m = (rho * n as f64).ceil() as usize;
    let theta = if m == 0 {
        // Strictly below the minimum: the largest float less than it.
        top[0].next_down()
    } else {
        top[m - 1]
    };
    if !theta.is_finite() {
        return Err(Error::Numeric(format!(
            "calibrated threshold {theta} is not finite"
        )));
    }
    Ok(theta)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::data::make_toy_blobs;
    use crate::dnr::predict_with_reject_batch;
    use crate::nn::{Layer, Tensor};

    /// A 2-D identity network so the toy pipeline runs on raw features.
    pub(crate) fn identity_network() -> Network {
        let weight = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        Network::from_layers(
            vec![2],
            vec![Layer::Dense { weight, bias: vec![0.0, 0.0] }],
        )
        .unwrap()
    }

    pub(crate) fn quick_cfg() -> DnrFitConfig {
        DnrFitConfig {
            c_grid: vec![1.0, 10.0],
            gamma_scale_grid: vec![1.0, 10.0],
            seed: 5,
            ..DnrFitConfig::default()
        }
    }

    #[test]
    fn fit_produces_accurate_rejecting_model() {
        let data = make_toy_blobs(60, 2).unwrap();
        let net = identity_network();
        let taps = LayerTap::new(vec![0], &net).unwrap();
        let (mut model, report) = fit_dnr(&net, &data, &taps, &quick_cfg()).unwrap();
        assert!(model.theta().is_none());

        // Unthresholded accuracy on the training data should be high.
        let preds = predict_with_reject_batch(&model, data.features(), data.sample_shape()).unwrap();
        let acc = preds
            .iter()
            .zip(data.labels())
            .filter(|(p, l)| p == l)
            .count() as f64
            / data.len() as f64;
        assert!(acc > 0.9, "unthresholded accuracy {acc}");

        // Calibrate for ten percent rejection on a fresh draw.
        let val = make_toy_blobs(40, 9).unwrap();
        let theta = calibrate_threshold(&model, &val, 0.1).unwrap();
        model.set_theta(Some(theta)).unwrap();
        let preds = predict_with_reject_batch(&model, val.features(), val.sample_shape()).unwrap();
        let rejected = preds.iter().filter(|&&p| p == 0).count();
        assert_eq!(rejected, 12, "ceil(0.1 * 120) = 12 samples at or below theta");
        assert_eq!(report.fold_of.len(), data.len());
    }

    #[test]
    fn oof_rows_come_from_unseen_machines() {
        let data = make_toy_blobs(30, 3).unwrap();
        let net = identity_network();
        let taps = LayerTap::new(vec![0], &net).unwrap();
        let (_, report) = fit_dnr(&net, &data, &taps, &quick_cfg()).unwrap();
        for (i, &f) in report.fold_of.iter().enumerate() {
            assert!(
                !report.fold_train_sets[f].contains(&i),
                "sample {i} trained the machines that scored it"
            );
        }
    }

    #[test]
    fn calibration_order_statistic_is_exact() {
        // rho = 0.1 over scores {0.1, ..., 1.0} must give theta = 0.1.
        let mut top: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        top.sort_by(f64::total_cmp);
        let m = (0.1f64 * 10.0).ceil() as usize;
        assert_eq!(m, 1);
        assert_eq!(top[m - 1], 0.1);
    }

    #[test]
    fn rho_zero_rejects_nothing() {
        let data = make_toy_blobs(20, 7).unwrap();
        let net = identity_network();
        let taps = LayerTap::new(vec![0], &net).unwrap();
        let (mut model, _) = fit_dnr(&net, &data, &taps, &quick_cfg()).unwrap();
        let theta = calibrate_threshold(&model, &data, 0.0).unwrap();
        model.set_theta(Some(theta)).unwrap();
        let preds = predict_with_reject_batch(&model, data.features(), data.sample_shape()).unwrap();
        assert!(preds.iter().all(|&p| p != 0));
    }
}
