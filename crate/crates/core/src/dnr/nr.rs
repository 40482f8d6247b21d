//! Plain neural rejection: the single-representation baseline.
//!
//! One RBF SVM bank over one tapped layer (by default the logits) with a
//! combiner and a reject threshold. This is written as its own pipeline
//! rather than delegating to the multi-tap fit; with the same
//! configuration and the tap list `[tap]`, [`crate::dnr::fit_dnr`] and
//! [`fit_nr`] must produce machines and decisions that match, which the
//! test suite enforces.

use ndarray::{s, Array2};

use crate::data::{stratified_folds, stratified_subsample, Dataset};
use crate::dnr::fit::DnrFitConfig;
use crate::dnr::ScoreVector;
use crate::error::{Error, Result};
use crate::nn::{Network, Tensor};
use crate::svm::{build_grid, grid_search_cv, ova_train, GridSearchOutcome, MulticlassSvm};

/// The single-tap rejecting classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct NrModel {
    network: Network,
    tap: usize,
    base: MulticlassSvm,
    combiner: MulticlassSvm,
    theta: Option<f64>,
    num_classes: usize,
}

/// Audit record of one NR fit.
#[derive(Debug, Clone)]
pub struct NrFitReport {
    pub fold_of: Vec<usize>,
    pub base_search: GridSearchOutcome,
    pub combiner_search: GridSearchOutcome,
}

impl NrModel {
    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn tap(&self) -> usize {
        self.tap
    }

    pub fn base(&self) -> &MulticlassSvm {
        &self.base
    }

    pub fn combiner(&self) -> &MulticlassSvm {
        &self.combiner
    }

    pub fn theta(&self) -> Option<f64> {
        self.theta
    }

    pub fn set_theta(&mut self, theta: Option<f64>) -> Result<()> {
        if let Some(t) = theta {
            if !t.is_finite() {
                return Err(Error::InvalidParam {
                    name: "theta",
                    detail: format!("{t} is not finite"),
                });
            }
        }
        self.theta = theta;
        Ok(())
    }

    fn representation(&self, x: &Tensor) -> Result<Vec<f64>> {
        let acts = self.network.forward_all(x)?;
        Ok(acts[self.tap].data().to_vec())
    }

    /// Combined class scores for one input.
    pub fn scores(&self, x: &Tensor) -> Result<ScoreVector> {
        let rep = self.representation(x)?;
        let base_scores = self.base.decision_scores(&rep)?;
        let scores = self.combiner.decision_scores(&base_scores)?;
        Ok(ScoreVector {
            scores,
            theta: self.theta,
        })
    }

    /// Decision in `0..=c`; 0 rejects.
    pub fn predict(&self, x: &Tensor) -> Result<usize> {
        Ok(self.scores(x)?.decision())
    }

    /// Threshold giving a clean rejection rate of about `rho` on a
    /// validation set (same order-statistic rule as the stacked model).
    pub fn calibrate(&self, validation: &Dataset, rho: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidParam {
                name: "rho",
                detail: format!("{rho} outside [0, 1)"),
            });
        }
        if validation.is_empty() {
            return Err(Error::Data("empty calibration set".into()));
        }
        let mut top = Vec::with_capacity(validation.len());
        for i in 0..validation.len() {
            let sv = self.scores(&validation.tensor(i))?;
            top.push(sv.max_score());
        }
        top.sort_by(f64::total_cmp);
        let m = (rho * top.len() as f64).ceil() as usize;
        Ok(if m == 0 { top[0].next_down() } else { top[m - 1] })
    }
}

/// Fits the single-tap baseline on `train`, tapping layer `tap`.
pub fn fit_nr(
    net: &Network,
    train: &Dataset,
    tap: usize,
    cfg: &DnrFitConfig,
) -> Result<(NrModel, NrFitReport)> {
    if tap >= net.num_layers() {
        return Err(Error::Index {
            what: "layer",
            index: tap,
            len: net.num_layers(),
        });
    }
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
    let dim: usize = net.layer_shape(tap)?.iter().product();

    // Representations of the single tapped layer.
    let mut rep = Array2::zeros((n, dim));
    for i in 0..n {
        let acts = net.forward_all(&train.tensor(i))?;
        rep.row_mut(i)
            .assign(&ndarray::ArrayView1::from(acts[tap].data()));
    }

    // Hyperparameters for the base bank (tap position 0 in seed terms).
    let base_search = search(rep.view(), labels, c, cfg, cfg.grid_seed(0), cfg.subsample_seed(0))?;

    // Out-of-fold base scores feed the combiner.
    let fold_of = stratified_folds(labels, cfg.folds, cfg.seed)?;
    let mut oof = Array2::zeros((n, c));
    for f in 0..cfg.folds {
        let train_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let eval_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        let fold_labels: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
        let mut tr = Array2::zeros((train_idx.len(), dim));
        for (r, &i) in train_idx.iter().enumerate() {
            tr.row_mut(r).assign(&rep.row(i));
        }
        let svm = ova_train(
            tr.view(),
            &fold_labels,
            c,
            &vec![base_search.best; c],
            cfg.tolerance,
            cfg.cache_budget,
        )?;
        let mut ev = Array2::zeros((eval_idx.len(), dim));
        for (r, &i) in eval_idx.iter().enumerate() {
            ev.row_mut(r).assign(&rep.row(i));
        }
        let scores = svm.decision_matrix(ev.view())?;
        for (r, &i) in eval_idx.iter().enumerate() {
            oof.slice_mut(s![i, ..]).assign(&scores.row(r));
        }
    }

    let combiner_search = search(
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
    let base = ova_train(
        rep.view(),
        labels,
        c,
        &vec![base_search.best; c],
        cfg.tolerance,
        cfg.cache_budget,
    )?;

    Ok((
        NrModel {
            network: net.clone(),
            tap,
            base,
            combiner,
            theta: None,
            num_classes: c,
        },
        NrFitReport {
            fold_of,
            base_search,
            combiner_search,
        },
    ))
}

fn search(
    x: ndarray::ArrayView2<'_, f64>,
    labels: &[usize],
    c: usize,
    cfg: &DnrFitConfig,
    grid_seed: u64,
    subsample_seed: u64,
) -> Result<GridSearchOutcome> {
    let grid = build_grid(&cfg.c_grid, &cfg.gamma_scale_grid, x.ncols());
    let idx = stratified_subsample(labels, cfg.grid_subsample.unwrap_or(labels.len()), subsample_seed);
    let mut sub = Array2::zeros((idx.len(), x.ncols()));
    for (r, &i) in idx.iter().enumerate() {
        sub.row_mut(r).assign(&x.row(i));
    }
    let sub_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
    grid_search_cv(
        sub.view(),
        &sub_labels,
        c,
        &grid,
        cfg.hyper_folds,
        cfg.tolerance,
        grid_seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_toy_blobs;
    use crate::dnr::fit::tests::{identity_network, quick_cfg};
    use crate::dnr::{combined_scores, fit_dnr, LayerTap};

    #[test]
    fn reduction_matches_single_tap_pipeline_exactly() {
        let data = make_toy_blobs(40, 6).unwrap();
        let net = identity_network();
        let cfg = quick_cfg();
        let taps = LayerTap::new(vec![0], &net).unwrap();
        let (dnr, _) = fit_dnr(&net, &data, &taps, &cfg).unwrap();
        let (nr, _) = fit_nr(&net, &data, 0, &cfg).unwrap();

        // The trained machines themselves must be identical.
        assert_eq!(dnr.base_svms()[0], *nr.base());
        assert_eq!(dnr.combiner(), nr.combiner());

        // And so must every per-sample score vector.
        let probe = make_toy_blobs(25, 31).unwrap();
        for i in 0..probe.len() {
            let x = probe.tensor(i);
            let a = combined_scores(&dnr, &x).unwrap();
            let b = nr.scores(&x).unwrap();
            assert_eq!(a.scores, b.scores, "sample {i}");
        }
    }

    #[test]
    fn nr_calibration_hits_requested_rate() {
        let data = make_toy_blobs(50, 12).unwrap();
        let net = identity_network();
        let (mut nr, _) = fit_nr(&net, &data, 0, &quick_cfg()).unwrap();
        let val = make_toy_blobs(40, 77).unwrap();
        let theta = nr.calibrate(&val, 0.1).unwrap();
        nr.set_theta(Some(theta)).unwrap();
        let rejected = (0..val.len())
            .filter(|&i| nr.predict(&val.tensor(i)).unwrap() == 0)
            .count();
        assert_eq!(rejected, 12);
    }
}
