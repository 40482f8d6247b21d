//! Full desk-scale rehearsal, run by hand while freezing the fixture
//! constants. Prints stage timings and the headline checks without
//! asserting, so one run yields the complete picture.

use std::time::Instant;

use dnr_core::attack::{AttackConfig, AttackNorm};
use dnr_core::data::{make_synthetic_digits, split, SplitSpec};
use dnr_core::dnr::{calibrate_threshold, fit_dnr, DnrFitConfig, LayerTap};
use dnr_core::eval::{run_security_eval, summarize_curves, EvalConfig, EvalModel, EvalRunRecord};
use dnr_core::nn::{mnist_desk_network, train_sgd, TrainConfig};

#[test]
#[ignore]
fn desk_rehearsal() {
    let pool = make_synthetic_digits(20_000, 42).unwrap();
    let pretrain = pool.subset(&(0..8_000).collect::<Vec<_>>()).unwrap();
    let svm_pool = pool.subset(&(8_000..20_000).collect::<Vec<_>>()).unwrap();

    let t = Instant::now();
    let net = mnist_desk_network(0.5, 7).unwrap();
    let train_cfg = TrainConfig {
        learning_rate: 0.01,
        momentum: 0.9,
        dropout: 0.5,
        batch_size: 128,
        epochs: 8,
        seed: 7,
    };
    let (net, history) = train_sgd(&net, &pretrain, &train_cfg).unwrap();
    let pretrain_secs = t.elapsed().as_secs_f64();
    println!(
        "pretrain: {pretrain_secs:.1}s (final loss {:.4})",
        history.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );

    let taps = LayerTap::suggested(&net).unwrap();
    let nr_tap = LayerTap::new(vec![net.logits_index()], &net).unwrap();
    let fit_cfg = DnrFitConfig {
        grid_subsample: Some(1_000),
        seed: 11,
        ..DnrFitConfig::default()
    };
    let split_spec = SplitSpec {
        train: 10_000,
        test: 1_000,
        seed: 3,
    };

    let mut attack = AttackConfig::new(0.0, AttackNorm::L2);
    attack.max_iters = 25;
    let mut eval_cfg = EvalConfig::new(vec![0.0, 0.5, 1.0, 2.0, 5.0], attack);
    eval_cfg.attack_subsample = Some(32);
    eval_cfg.subsample_seed = 5;
    eval_cfg.anchor_restarts = 3;

    let mut curves: Vec<(&str, Vec<EvalRunRecord>)> =
        vec![("dnr", Vec::new()), ("nr", Vec::new()), ("dnn", Vec::new())];

    for run in 0..2 {
        let t_run = Instant::now();
        let (train, test) = split(&svm_pool, &split_spec, run).unwrap();
        let fit_set = train.subset(&(0..3_000).collect::<Vec<_>>()).unwrap();
        let cal_set = train.subset(&(3_000..7_000).collect::<Vec<_>>()).unwrap();

        let mut models = Vec::new();
        for (name, tap) in [("dnr", &taps), ("nr", &nr_tap)] {
            let t = Instant::now();
            let (mut model, _) = fit_dnr(&net, &fit_set, tap, &fit_cfg).unwrap();
            let theta = calibrate_threshold(&model, &cal_set, 0.1).unwrap();
            model.set_theta(Some(theta)).unwrap();
            println!(
                "run {run} {name}: fit+cal {:.1}s theta {theta:.4}",
                t.elapsed().as_secs_f64()
            );
            models.push(EvalModel::Rejecting {
                name: name.into(),
                model,
            });
        }
        models.push(EvalModel::Undefended {
            name: "dnn".into(),
            network: net.clone(),
        });

        for model in &models {
            let t = Instant::now();
            let rec = run_security_eval(&model, &test, &eval_cfg, run).unwrap();
            print!(
                "run {run} {} eval {:.1}s:",
                model.name(),
                t.elapsed().as_secs_f64()
            );
            for p in &rec.points {
                print!(
                    " eps {} acc {:.3} rej {:.3} fail {};",
                    p.epsilon, p.point.accuracy, p.point.rejection_rate, p.attack_failures
                );
            }
            println!();
            curves
                .iter_mut()
                .find(|(n, _)| *n == model.name())
                .unwrap()
                .1
                .push(rec);
        }
        let run_secs = t_run.elapsed().as_secs_f64();
        println!(
            "run {run} wall {run_secs:.1}s; with pretrain {:.1}s (budget 600)",
            run_secs + pretrain_secs
        );
    }

    let summaries: Vec<_> = curves
        .into_iter()
        .map(|(name, runs)| summarize_curves(name, runs).unwrap())
        .collect();
    for c in &summaries {
        print!("{} mean:", c.classifier);
        for p in &c.summary {
            print!(" eps {} acc {:.3} rej {:.3};", p.epsilon, p.mean_accuracy, p.mean_rejection);
        }
        println!();
    }

    let at = |name: &str, eps: f64| {
        summaries
            .iter()
            .find(|c| c.classifier == name)
            .unwrap()
            .summary
            .iter()
            .find(|p| p.epsilon == eps)
            .unwrap()
            .mean_accuracy
    };
    for eps in [0.5, 1.0, 2.0] {
        let (d, n, u) = (at("dnr", eps), at("nr", eps), at("dnn", eps));
        println!(
            "ordering at eps {eps}: dnr {d:.3} nr {n:.3} dnn {u:.3} -> {}",
            if d >= n && n >= u { "OK" } else { "VIOLATED" }
        );
    }
    let gap = [0.5, 1.0, 2.0]
        .iter()
        .map(|&e| at("dnr", e) - at("dnn", e))
        .fold(f64::NEG_INFINITY, f64::max);
    println!("max dnr-dnn gap on mid-grid: {gap:.3} (need >= 0.10)");
    println!("dnn at eps 5: {:.3} (need < 0.05)", at("dnn", 5.0));
    for c in &summaries {
        if c.classifier != "dnn" {
            let rej: Vec<f64> = c.runs.iter().map(|r| r.points[0].point.rejection_rate).collect();
            println!("{} clean rejection per run: {rej:?} (need 0.08..=0.12)", c.classifier);
        }
    }
}
