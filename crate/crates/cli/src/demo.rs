//! Self-contained 2-D walkthrough on Gaussian blobs.
//!
//! Fits a rejecting model whose single tap is the identity (the raw 2-D
//! point), so the decision regions and the attack objective live in a
//! plane we can raster directly. The attack endpoint is checked against
//! the model: it must land outside the reject region.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dnr_core::attack::{pgd_attack, AttackConfig, AttackNorm, AttackSurface};
use dnr_core::data::{make_toy_blobs, split, SplitSpec};
use dnr_core::dnr::{
    calibrate_threshold, combined_scores, fit_dnr, DnrFitConfig, DnrModel, LayerTap,
};
use dnr_core::nn::{Layer, Network, Tensor};

use crate::fail::Failure;

const GRID: usize = 160;

pub fn demo_toy(out: &Path, seed: u64, epsilon: f64) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;

    let data = make_toy_blobs(70, seed).map_err(Failure::from)?;
    let spec = SplitSpec {
        train: 150,
        test: 60,
        seed,
    };
    let (train, test) = split(&data, &spec, 0).map_err(Failure::from)?;

    let identity = Network::from_layers(
        vec![2],
        vec![Layer::Dense {
            weight: Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).map_err(Failure::from)?,
            bias: vec![0.0, 0.0],
        }],
    )
    .map_err(Failure::from)?;
    let taps = LayerTap::new(vec![0], &identity).map_err(Failure::from)?;

    let fit_cfg = DnrFitConfig {
        folds: 3,
        hyper_folds: 3,
        seed,
        ..DnrFitConfig::default()
    };
    let (mut model, _) = fit_dnr(&identity, &train, &taps, &fit_cfg).map_err(Failure::from)?;
    let theta = calibrate_threshold(&model, &train, 0.1).map_err(Failure::from)?;
    model.set_theta(Some(theta)).map_err(Failure::from)?;

    let frame = Frame::around(&train);

    // Attack the first correctly classified, non-rejected test point.
    let target = (0..test.len())
        .find(|&i| {
            let x = test.tensor(i);
            dnr_core::dnr::predict_with_reject(&model, &x)
                .map(|d| d == test.label(i))
                .unwrap_or(false)
        })
        .ok_or_else(|| {
            Failure::data(
                "no clean test point to attack",
                "every test sample was rejected or misclassified",
            )
        })?;
    let x0 = test.tensor(target);
    let y = test.label(target);

    let mut attack_cfg = AttackConfig::new(epsilon, AttackNorm::L2);
    attack_cfg.max_iters = 200;
    let result = pgd_attack(&model, &x0, y, &attack_cfg, None).map_err(Failure::from)?;
    let endpoint = model.decide(&result.adversarial).map_err(Failure::from)?;
    println!(
        "attacked test sample {target} (label {y}): omega {:.4} -> {:.4}, decision {endpoint}",
        result.initial_omega, result.final_omega
    );

    let regions = out.join("decision-regions.svg");
    let surface = out.join("omega-surface.svg");
    fs::write(&regions, region_svg(&model, &train, &frame, &x0, &result.adversarial, epsilon))
        .map_err(|e| Failure::io(&regions, e))?;
    fs::write(&surface, omega_svg(&model, y, &frame, &x0, &result.adversarial))
        .map_err(|e| Failure::io(&surface, e))?;
    println!("wrote {}", regions.display());
    println!("wrote {}", surface.display());

    if endpoint == 0 {
        return Err(Failure::numeric(
            "attack endpoint is inside the reject region",
            format!(
                "final objective {:.4}, threshold {theta:.4}",
                result.final_omega
            ),
        ));
    }
    Ok(())
}

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
}

impl Frame {
    fn around(data: &dnr_core::data::Dataset) -> Frame {
        let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..data.len() {
            let row = data.features().row(i).to_vec();
            xmin = xmin.min(row[0]);
            xmax = xmax.max(row[0]);
            ymin = ymin.min(row[1]);
            ymax = ymax.max(row[1]);
        }
        let pad_x = 0.25 * (xmax - xmin);
        let pad_y = 0.25 * (ymax - ymin);
        Frame {
            x0: xmin - pad_x,
            y0: ymin - pad_y,
            w: (xmax - xmin) + 2.0 * pad_x,
            h: (ymax - ymin) + 2.0 * pad_y,
        }
    }

    fn point(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.x0 + (col as f64 + 0.5) / GRID as f64 * self.w,
            self.y0 + (row as f64 + 0.5) / GRID as f64 * self.h,
        )
    }

    /// Data coordinates to a 640x640 viewport (y up).
    fn pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.x0) / self.w * 640.0,
            640.0 - (y - self.y0) / self.h * 640.0,
        )
    }
}

const CLASS_FILL: [&str; 3] = ["#7fb3d5", "#f5b041", "#82e0aa"];
const CLASS_DOT: [&str; 3] = ["#1a5276", "#9c640c", "#1d8348"];
const REJECT_FILL: &str = "#d7dbdd";

fn cell_rect(buf: &mut String, col: usize, row: usize, fill: &str) {
    let side = 640.0 / GRID as f64;
    // The raster walks rows bottom-up so the svg y axis needs a flip.
    let px = col as f64 * side;
    let py = 640.0 - (row as f64 + 1.0) * side;
    let _ = write!(
        buf,
        r##"<rect x="{px:.2}" y="{py:.2}" width="{side:.2}" height="{side:.2}" fill="{fill}"/>"##
    );
}

fn svg_header(title: &str) -> String {
    format!(
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="640" height="660" viewBox="0 0 640 660">
<title>{title}</title>
<g>"##
    )
}

fn overlay(buf: &mut String, frame: &Frame, x0: &Tensor, adv: &Tensor, epsilon: Option<f64>) {
    let (sx, sy) = frame.pixel(x0.data()[0], x0.data()[1]);
    let (ax, ay) = frame.pixel(adv.data()[0], adv.data()[1]);
    if let Some(eps) = epsilon {
        let r = eps / frame.w * 640.0;
        let _ = write!(
            buf,
            r##"<circle cx="{sx:.2}" cy="{sy:.2}" r="{r:.2}" fill="none" stroke="#34495e" stroke-dasharray="6 4" stroke-width="1.5"/>"##
        );
    }
    let _ = write!(
        buf,
        r##"<line x1="{sx:.2}" y1="{sy:.2}" x2="{ax:.2}" y2="{ay:.2}" stroke="#17202a" stroke-width="1.5"/>
<circle cx="{sx:.2}" cy="{sy:.2}" r="5" fill="#17202a"/>
<circle cx="{ax:.2}" cy="{ay:.2}" r="5" fill="#c0392b" stroke="#17202a"/>"##
    );
}

fn region_svg(
    model: &DnrModel,
    train: &dnr_core::data::Dataset,
    frame: &Frame,
    x0: &Tensor,
    adv: &Tensor,
    epsilon: f64,
) -> String {
    let mut buf = svg_header("decision regions (grey = reject)");
    for row in 0..GRID {
        for col in 0..GRID {
            let (x, y) = frame.point(col, row);
            let t = Tensor::new(vec![2], vec![x, y]).expect("2-d point");
            let d = dnr_core::dnr::predict_with_reject(model, &t).unwrap_or(0);
            let fill = if d == 0 {
                REJECT_FILL
            } else {
                CLASS_FILL[(d - 1) % CLASS_FILL.len()]
            };
            cell_rect(&mut buf, col, row, fill);
        }
    }
    for i in 0..train.len() {
        let row = train.features().row(i).to_vec();
        let (px, py) = frame.pixel(row[0], row[1]);
        let dot = CLASS_DOT[(train.label(i) - 1) % CLASS_DOT.len()];
        let _ = write!(
            buf,
            r##"<circle cx="{px:.2}" cy="{py:.2}" r="2.5" fill="{dot}"/>"##
        );
    }
    overlay(&mut buf, frame, x0, adv, Some(epsilon));
    buf.push_str(
        r##"</g>
<text x="10" y="652" font-family="monospace" font-size="13">decision regions; grey = reject, line = attack path endpoints</text>
</svg>
"##,
    );
    buf
}

fn omega_svg(model: &DnrModel, y: usize, frame: &Frame, x0: &Tensor, adv: &Tensor) -> String {
    // Raster the objective, then map to a two-ended color scale around 0.
    let mut values = vec![0.0f64; GRID * GRID];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for row in 0..GRID {
        for col in 0..GRID {
            let (x, yy) = frame.point(col, row);
            let t = Tensor::new(vec![2], vec![x, yy]).expect("2-d point");
            let scores = combined_scores(model, &t).map(|s| s.scores).unwrap_or_default();
            let v = dnr_core::attack::omega(&scores, y).unwrap_or(0.0);
            values[row * GRID + col] = v;
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let span = (hi - lo).max(1e-12);
    let mut buf = svg_header("attack objective");
    for row in 0..GRID {
        for col in 0..GRID {
            let v = (values[row * GRID + col] - lo) / span;
            // Dark where the objective is low (attack target), light high.
            let shade = (255.0 * v) as u8;
            let fill = format!("#{shade:02x}{shade:02x}{:02x}", 255 - shade / 3);
            cell_rect(&mut buf, col, row, &fill);
        }
    }
    overlay(&mut buf, frame, x0, adv, None);
    buf.push_str(
        r##"</g>
<text x="10" y="652" font-family="monospace" font-size="13">attack objective for the attacked sample; dark = low</text>
</svg>
"##,
    );
    buf
}
