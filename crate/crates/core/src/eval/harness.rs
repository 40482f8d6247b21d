//! Security-evaluation protocol: clean accuracy plus attacked accuracy
//! across an ascending budget grid, with paired sampling so curves for
//! different classifiers are comparable point for point.

use ndarray::Array2;
use rayon::prelude::*;

use crate::attack::{pgd_attack, AttackConfig, AttackSurface, UndefendedNetwork};
use crate::data::{stratified_subsample, Dataset};
use crate::dnr::{combined_score_matrix, predict_with_reject_batch, DnrModel};
use crate::error::{Error, Result};
use crate::eval::accuracy::{accuracy_with_rejection, EvalPoint};
use crate::nn::{Network, Tensor};

/// A classifier under evaluation.
pub enum EvalModel {
    /// Plain network scored by its logits; never rejects.
    Undefended { name: String, network: Network },
    /// Rejecting pipeline (single- or multi-tap).
    Rejecting { name: String, model: DnrModel },
}

impl EvalModel {
    pub fn name(&self) -> &str {
        match self {
            Self::Undefended { name, .. } | Self::Rejecting { name, .. } => name,
        }
    }

    /// Clean decisions for a whole dataset (`0` = reject where the model
    /// has a threshold).
    pub fn predict_batch(&self, data: &Dataset) -> Result<Vec<usize>> {
        match self {
            Self::Undefended { network, .. } => (0..data.len())
                .into_par_iter()
                .map(|i| network.predict(&data.tensor(i)))
                .collect(),
            Self::Rejecting { model, .. } => {
                predict_with_reject_batch(model, data.features(), data.sample_shape())
            }
        }
    }
}

/// Evaluation settings shared by every classifier in a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Budgets in ascending order; the first must be exactly 0 (the
    /// clean point, evaluated on the whole test set).
    pub eps_grid: Vec<f64>,
    /// Attack settings for every nonzero budget; `epsilon` is replaced
    /// per grid point.
    pub attack: AttackConfig,
    /// Cap on attacked samples per run, drawn stratified from the test
    /// set. `None` attacks every test sample.
    pub attack_subsample: Option<usize>,
    /// Seed of the subsample draw. Evaluating two classifiers with the
    /// same config and run index attacks the same samples.
    pub subsample_seed: u64,
    /// Extra descents per attacked sample, seeded at the nearest test
    /// exemplar of each of the top-k competitor classes (ranked by the
    /// model's clean scores). Plain gradient descent from the clean
    /// point stalls on the flat far field of saturated RBF machines and
    /// can certify a model as robust while feasible evading points
    /// exist; seeding inside competitor clusters removes that artifact.
    /// 0 runs only the plain descent. Seeds are shared across models
    /// (they depend only on the test split), so curves stay paired.
    pub anchor_restarts: usize,
}

impl EvalConfig {
    pub fn new(eps_grid: Vec<f64>, attack: AttackConfig) -> Self {
        EvalConfig {
            eps_grid,
            attack,
            attack_subsample: None,
            subsample_seed: 0,
            anchor_restarts: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_grid.is_empty() || self.eps_grid[0] != 0.0 {
            return Err(Error::InvalidParam {
                name: "eps_grid",
                detail: "must be non-empty and start at 0".into(),
            });
        }
        for w in self.eps_grid.windows(2) {
            if !(w[1] > w[0] && w[1].is_finite()) {
                return Err(Error::InvalidParam {
                    name: "eps_grid",
                    detail: format!("must ascend strictly, got {} then {}", w[0], w[1]),
                });
            }
        }
        if let Some(0) = self.attack_subsample {
            return Err(Error::InvalidParam {
                name: "attack_subsample",
                detail: "must be positive when set".into(),
            });
        }
        Ok(())
    }
}

/// One evaluated budget with everything needed to re-derive its numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPointRecord {
    pub epsilon: f64,
    /// Decision per evaluated sample (0 = reject).
    pub predictions: Vec<usize>,
    /// True label per evaluated sample, aligned with `predictions`.
    pub labels: Vec<usize>,
    /// Samples whose attack failed numerically and fell back to the
    /// clean decision.
    pub attack_failures: usize,
    pub point: EvalPoint,
}

/// One run (one train/test split) of the protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRunRecord {
    pub run: usize,
    pub points: Vec<EvalPointRecord>,
}

/// Mean curve across runs at one budget.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub epsilon: f64,
    pub mean_accuracy: f64,
    /// Sample standard deviation; absent with fewer than two runs.
    pub accuracy_std: Option<f64>,
    pub mean_rejection: f64,
    pub rejection_std: Option<f64>,
    pub runs: usize,
}

/// A classifier's full security curve: per-run records plus the summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SecurityCurve {
    pub classifier: String,
    pub runs: Vec<EvalRunRecord>,
    pub summary: Vec<CurvePoint>,
}

/// Evaluates one classifier over the budget grid for one run.
///
/// The clean point uses the full test set through the batched forward
/// paths. Attacked points share one stratified subsample; each sample is
/// attacked at every budget in ascending order, warm starting each
/// attack from the previous budget's adversarial point. With
/// `anchor_restarts > 0` each budget additionally descends from seeds
/// planted at competitor exemplars and keeps the lowest-objective
/// endpoint. An attack that fails numerically records the clean
/// decision for that sample and is counted in `attack_failures`.
pub fn run_security_eval(
    model: &EvalModel,
    test: &Dataset,
    cfg: &EvalConfig,
    run: usize,
) -> Result<EvalRunRecord> {
    cfg.validate()?;

    let clean_preds = model.predict_batch(test)?;
    let (acc, rej) = accuracy_with_rejection(&clean_preds, test.labels(), 0.0)?;
    let mut points = vec![EvalPointRecord {
        epsilon: 0.0,
        point: EvalPoint {
            epsilon: 0.0,
            accuracy: acc,
            rejection_rate: rej,
            n: test.len(),
        },
        predictions: clean_preds,
        labels: test.labels().to_vec(),
        attack_failures: 0,
    }];

    let attacked_eps = &cfg.eps_grid[1..];
    if !attacked_eps.is_empty() {
        let indices = attack_indices(test, cfg, run);
        let labels: Vec<usize> = indices.iter().map(|&i| test.label(i)).collect();
        let bank = anchor_bank(test, &indices, cfg.anchor_restarts);

        let per_sample: Vec<Vec<(usize, bool)>> = match model {
            EvalModel::Undefended { network, .. } => {
                let surface = UndefendedNetwork(network);
                indices
                    .par_iter()
                    .zip(bank.par_iter())
                    .map(|(&i, anchors)| {
                        attack_sample(
                            &surface,
                            &test.tensor(i),
                            test.label(i),
                            attacked_eps,
                            &cfg.attack,
                            anchors,
                            cfg.anchor_restarts,
                        )
                    })
                    .collect::<Result<_>>()?
            }
            EvalModel::Rejecting { model, .. } => indices
                .par_iter()
                .zip(bank.par_iter())
                .map(|(&i, anchors)| {
                    attack_sample(
                        model,
                        &test.tensor(i),
                        test.label(i),
                        attacked_eps,
                        &cfg.attack,
                        anchors,
                        cfg.anchor_restarts,
                    )
                })
                .collect::<Result<_>>()?,
        };

        for (k, &eps) in attacked_eps.iter().enumerate() {
            let predictions: Vec<usize> = per_sample.iter().map(|row| row[k].0).collect();
            let attack_failures = per_sample.iter().filter(|row| row[k].1).count();
            let (acc, rej) = accuracy_with_rejection(&predictions, &labels, eps)?;
            points.push(EvalPointRecord {
                epsilon: eps,
                point: EvalPoint {
                    epsilon: eps,
                    accuracy: acc,
                    rejection_rate: rej,
                    n: indices.len(),
                },
                predictions,
                labels: labels.clone(),
                attack_failures,
            });
        }
    }

    Ok(EvalRunRecord { run, points })
}

/// The attacked indices for a run: identical for every classifier
/// evaluated with the same config and run index.
pub fn attack_indices(test: &Dataset, cfg: &EvalConfig, run: usize) -> Vec<usize> {
    match cfg.attack_subsample {
        Some(m) if m < test.len() => {
            stratified_subsample(test.labels(), m, cfg.subsample_seed.wrapping_add(run as u64))
        }
        _ => (0..test.len()).collect(),
    }
}

/// Per attacked sample, the nearest test exemplar of every class other
/// than the sample's own label, keyed by class. Distances are plain
/// pixel distances, so the bank depends only on the test split and the
/// attacked indices — every classifier evaluated against the same run
/// is seeded identically.
fn anchor_bank(test: &Dataset, indices: &[usize], restarts: usize) -> Vec<Vec<(usize, Tensor)>> {
    if restarts == 0 {
        return vec![Vec::new(); indices.len()];
    }
    indices
        .par_iter()
        .map(|&i| nearest_exemplars(test, i))
        .collect()
}

fn nearest_exemplars(test: &Dataset, i: usize) -> Vec<(usize, Tensor)> {
    let y = test.label(i);
    let features = test.features();
    let x = features.row(i);
    let mut best: std::collections::BTreeMap<usize, (f64, usize)> = std::collections::BTreeMap::new();
    for j in 0..test.len() {
        let c = test.label(j);
        if j == i || c == y {
            continue;
        }
        let d: f64 = x
            .iter()
            .zip(features.row(j).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let slot = best.entry(c).or_insert((f64::INFINITY, j));
        if d < slot.0 {
            *slot = (d, j);
        }
    }
    best.into_iter().map(|(c, (_, j))| (c, test.tensor(j))).collect()
}

/// The anchor seeds a sample actually uses: the exemplars of the top
/// `restarts` competitor classes under the surface's clean scores
/// (highest first, lower class index on ties).
fn ranked_anchors<S: AttackSurface>(
    surface: &S,
    x0: &Tensor,
    bank: &[(usize, Tensor)],
    restarts: usize,
) -> Result<Vec<Tensor>> {
    if restarts == 0 || bank.is_empty() {
        return Ok(Vec::new());
    }
    let scores = surface.scores(x0)?;
    let mut order: Vec<usize> = (0..bank.len()).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (bank[a].0, bank[b].0);
        scores[cb - 1].total_cmp(&scores[ca - 1]).then(ca.cmp(&cb))
    });
    Ok(order
        .into_iter()
        .take(restarts)
        .map(|k| bank[k].1.clone())
        .collect())
}

fn evades(prediction: usize, y: usize) -> bool {
    prediction != 0 && prediction != y
}

/// Attacks one sample at every budget, warm starting across budgets.
/// Returns `(decision, failed)` per budget.
///
/// Per budget: one descent chained from the previous budget's endpoint,
/// then — while the sample still resists — one descent per anchor seed.
/// The lowest-objective endpoint wins, ties going to the earlier
/// descent, and carries into the next budget. A failed chained descent
/// falls back to the clean decision; a failed anchor descent just drops
/// that candidate.
fn attack_sample<S: AttackSurface>(
    surface: &S,
    x0: &Tensor,
    y: usize,
    eps: &[f64],
    template: &AttackConfig,
    anchors: &[(usize, Tensor)],
    restarts: usize,
) -> Result<Vec<(usize, bool)>> {
    let seeds = ranked_anchors(surface, x0, anchors, restarts)?;
    let mut out = Vec::with_capacity(eps.len());
    let mut warm: Option<Tensor> = None;
    let mut clean_decision: Option<usize> = None;
    for &e in eps {
        let mut cfg = template.clone();
        cfg.epsilon = e;
        match pgd_attack(surface, x0, y, &cfg, warm.as_ref()) {
            Ok(mut best) => {
                for seed in &seeds {
                    if evades(best.prediction, y) {
                        break;
                    }
                    match pgd_attack(surface, x0, y, &cfg, Some(seed)) {
                        Ok(res) if res.final_omega < best.final_omega => best = res,
                        Ok(_) => {}
                        Err(Error::Numeric(_)) | Err(Error::Convergence { .. }) => {}
                        Err(err) => return Err(err),
                    }
                }
                out.push((best.prediction, false));
                warm = Some(best.adversarial);
            }
            Err(Error::Numeric(_)) | Err(Error::Convergence { .. }) => {
                let d = match clean_decision {
                    Some(d) => d,
                    None => {
                        let d = surface.decide(x0)?;
                        clean_decision = Some(d);
                        d
                    }
                };
                out.push((d, true));
            }
            Err(err) => return Err(err),
        }
    }
    Ok(out)
}

/// Folds per-run records into a named curve with mean and sample-std
/// summaries. All runs must share the same budget grid.
pub fn summarize_curves(classifier: &str, runs: Vec<EvalRunRecord>) -> Result<SecurityCurve> {
    if runs.is_empty() {
        return Err(Error::Data("no runs to summarize".into()));
    }
    let grid: Vec<f64> = runs[0].points.iter().map(|p| p.epsilon).collect();
    for r in &runs[1..] {
        let other: Vec<f64> = r.points.iter().map(|p| p.epsilon).collect();
        if other != grid {
            return Err(Error::Data(format!(
                "run {} evaluated a different budget grid",
                r.run
            )));
        }
    }

    let summary = grid
        .iter()
        .enumerate()
        .map(|(k, &eps)| {
            let accs: Vec<f64> = runs.iter().map(|r| r.points[k].point.accuracy).collect();
            let rejs: Vec<f64> = runs.iter().map(|r| r.points[k].point.rejection_rate).collect();
            CurvePoint {
                epsilon: eps,
                mean_accuracy: mean(&accs),
                accuracy_std: sample_std(&accs),
                mean_rejection: mean(&rejs),
                rejection_std: sample_std(&rejs),
                runs: runs.len(),
            }
        })
        .collect();

    Ok(SecurityCurve {
        classifier: classifier.to_string(),
        runs,
        summary,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    Some(var.sqrt())
}

/// One row of a threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub theta: f64,
    pub epsilon: f64,
    /// Fraction of the clean test set rejected at this threshold.
    pub clean_false_rejection: f64,
    pub accuracy: f64,
    /// True on the threshold solved for 10% clean rejection rather than
    /// taken from the input grid.
    pub operating_point: bool,
}

/// Sweeps the reject threshold over a grid without re-running attacks.
///
/// The attack objective compares class scores only, so adversarial
/// points are valid for every threshold; the sweep attacks each sampled
/// point once per budget, keeps the winning class and top score, and
/// re-decides them under each threshold. A threshold hitting 10% clean
/// rejection is added to the grid and flagged as the operating point.
pub fn threshold_sweep(
    model: &DnrModel,
    test: &Dataset,
    cfg: &EvalConfig,
    theta_grid: &[f64],
) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    if theta_grid.is_empty() || theta_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParam {
            name: "theta_grid",
            detail: "need at least one finite threshold".into(),
        });
    }

    let clean_scores = combined_score_matrix(model, test.features(), test.sample_shape())?;
    let clean_top = top_of_rows(&clean_scores);

    // The theta rejecting exactly ceil(0.1 n) clean samples (up to score
    // ties), flagged as the 10% operating point.
    let mut sorted_max: Vec<f64> = clean_top.iter().map(|&(_, s)| s).collect();
    sorted_max.sort_by(f64::total_cmp);
    let m = (0.1 * test.len() as f64).ceil() as usize;
    let theta_op = sorted_max[m.max(1) - 1];

    let mut thetas: Vec<(f64, bool)> = theta_grid.iter().map(|&t| (t, false)).collect();
    if let Some(hit) = thetas.iter_mut().find(|(t, _)| *t == theta_op) {
        hit.1 = true;
    } else {
        thetas.push((theta_op, true));
    }
    thetas.sort_by(|a, b| a.0.total_cmp(&b.0));
    thetas.dedup_by(|a, b| {
        if a.0 == b.0 {
            b.1 |= a.1;
            true
        } else {
            false
        }
    });

    // Attack each sampled point once per budget; decisions come later.
    let attacked_eps = &cfg.eps_grid[1..];
    let indices = attack_indices(test, cfg, 0);
    let labels_sub: Vec<usize> = indices.iter().map(|&i| test.label(i)).collect();
    let attacked_top: Vec<Vec<(usize, f64)>> = if attacked_eps.is_empty() {
        Vec::new()
    } else {
        let bank = anchor_bank(test, &indices, cfg.anchor_restarts);
        indices
            .par_iter()
            .zip(bank.par_iter())
            .map(|(&i, anchors)| {
                sweep_attack_sample(
                    model,
                    &test.tensor(i),
                    test.label(i),
                    clean_top[i],
                    attacked_eps,
                    &cfg.attack,
                    anchors,
                    cfg.anchor_restarts,
                )
            })
            .collect::<Result<_>>()?
    };

    let mut rows = Vec::with_capacity(thetas.len() * cfg.eps_grid.len());
    for &(theta, operating_point) in &thetas {
        let clean_preds: Vec<usize> = clean_top.iter().map(|&t| decide_top(t, theta)).collect();
        let clean_rej = clean_preds.iter().filter(|&&p| p == 0).count() as f64 / test.len() as f64;
        let (clean_acc, _) = accuracy_with_rejection(&clean_preds, test.labels(), 0.0)?;
        rows.push(SweepPoint {
            theta,
            epsilon: 0.0,
            clean_false_rejection: clean_rej,
            accuracy: clean_acc,
            operating_point,
        });
        for (k, &eps) in attacked_eps.iter().enumerate() {
            let preds: Vec<usize> = attacked_top
                .iter()
                .map(|row| decide_top(row[k], theta))
                .collect();
            let (acc, _) = accuracy_with_rejection(&preds, &labels_sub, eps)?;
            rows.push(SweepPoint {
                theta,
                epsilon: eps,
                clean_false_rejection: clean_rej,
                accuracy: acc,
                operating_point,
            });
        }
    }
    Ok(rows)
}

/// Winning class (1-based, first index on ties) and top score per row.
fn top_of_rows(scores: &Array2<f64>) -> Vec<(usize, f64)> {
    scores
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &s) in row.iter().enumerate() {
                if s > row[best] {
                    best = k;
                }
            }
            (best + 1, row[best])
        })
        .collect()
}

fn decide_top((class, score): (usize, f64), theta: f64) -> usize {
    if score <= theta {
        0
    } else {
        class
    }
}

/// Sweep sampling keeps the lowest-objective endpoint of the chained
/// descent and every anchor descent: decisions here depend on thresholds
/// applied later, so there is no fixed notion of "already evaded" to
/// stop on.
#[allow(clippy::too_many_arguments)]
fn sweep_attack_sample(
    model: &DnrModel,
    x0: &Tensor,
    y: usize,
    clean_top: (usize, f64),
    eps: &[f64],
    template: &AttackConfig,
    anchors: &[(usize, Tensor)],
    restarts: usize,
) -> Result<Vec<(usize, f64)>> {
    let seeds = ranked_anchors(model, x0, anchors, restarts)?;
    let mut out = Vec::with_capacity(eps.len());
    let mut warm: Option<Tensor> = None;
    for &e in eps {
        let mut cfg = template.clone();
        cfg.epsilon = e;
        match pgd_attack(model, x0, y, &cfg, warm.as_ref()) {
            Ok(mut best) => {
                for seed in &seeds {
                    match pgd_attack(model, x0, y, &cfg, Some(seed)) {
                        Ok(res) if res.final_omega < best.final_omega => best = res,
                        Ok(_) => {}
                        Err(Error::Numeric(_)) | Err(Error::Convergence { .. }) => {}
                        Err(err) => return Err(err),
                    }
                }
                let scores = model.forward_detail(&best.adversarial)?.scores;
                let mut top = 0;
                for (k, &s) in scores.iter().enumerate() {
                    if s > scores[top] {
                        top = k;
                    }
                }
                out.push((top + 1, scores[top]));
                warm = Some(best.adversarial);
            }
            Err(Error::Numeric(_)) | Err(Error::Convergence { .. }) => out.push(clean_top),
            Err(err) => return Err(err),
        }
    }
    Ok(out)
}
