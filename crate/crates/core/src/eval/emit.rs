//! Plain-text outputs: curve CSVs, sweep CSVs, manifests, and a small
//! self-contained SVG plotter.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::harness::{SecurityCurve, SweepPoint};

pub const CURVE_CSV_HEADER: &str = "classifier,run,epsilon,accuracy,rejection_rate,n";
pub const SWEEP_CSV_HEADER: &str = "theta,epsilon,clean_false_rejection,accuracy,operating_point";

/// One parsed curve-CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub classifier: String,
    pub run: usize,
    pub epsilon: f64,
    pub accuracy: f64,
    pub rejection_rate: f64,
    pub n: usize,
}

/// Renders security curves as CSV, one row per (classifier, run, budget).
pub fn emit_csv(curves: &[SecurityCurve]) -> Result<String> {
    let mut out = String::from(CURVE_CSV_HEADER);
    out.push('\n');
    for curve in curves {
        if curve.classifier.contains(',') || curve.classifier.contains('\n') {
            return Err(Error::InvalidParam {
                name: "classifier",
                detail: format!("name {:?} cannot contain commas or newlines", curve.classifier),
            });
        }
        for run in &curve.runs {
            for p in &run.points {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    curve.classifier,
                    run.run,
                    p.point.epsilon,
                    p.point.accuracy,
                    p.point.rejection_rate,
                    p.point.n
                ));
            }
        }
    }
    Ok(out)
}

/// Parses text produced by [`emit_csv`]. Floats round-trip exactly.
pub fn parse_curve_csv(text: &str) -> Result<Vec<CurveRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CURVE_CSV_HEADER => {}
        other => {
            return Err(Error::format(
                "curve csv",
                format!("bad header {:?}", other.unwrap_or("")),
            ))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::format(
                "curve csv",
                format!("row {} has {} fields, want 6", i + 2, fields.len()),
            ));
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| {
                Error::format("curve csv", format!("row {}: bad {what} {s:?}", i + 2))
            })
        };
        let parse_u = |s: &str, what: &str| -> Result<usize> {
            s.parse().map_err(|_| {
                Error::format("curve csv", format!("row {}: bad {what} {s:?}", i + 2))
            })
        };
        rows.push(CurveRow {
            classifier: fields[0].to_string(),
            run: parse_u(fields[1], "run")?,
            epsilon: parse_f(fields[2], "epsilon")?,
            accuracy: parse_f(fields[3], "accuracy")?,
            rejection_rate: parse_f(fields[4], "rejection_rate")?,
            n: parse_u(fields[5], "n")?,
        });
    }
    Ok(rows)
}

/// Renders a threshold sweep as CSV.
pub fn emit_sweep_csv(rows: &[SweepPoint]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.theta, r.epsilon, r.clean_false_rejection, r.accuracy, r.operating_point
        ));
    }
    out
}

/// `key: value` lines for run manifests.
pub fn format_manifest(entries: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in entries {
        out.push_str(k);
        out.push_str(": ");
        out.push_str(v);
        out.push('\n');
    }
    out
}

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 52.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Renders mean security curves (accuracy vs budget) as a standalone
/// SVG: one polyline per classifier with a +/-1 sigma band when the
/// summary carries deviations, plus axes, ticks, and a legend.
pub fn svg_security_plot(curves: &[SecurityCurve], title: &str) -> Result<String> {
    if curves.is_empty() || curves.iter().any(|c| c.summary.is_empty()) {
        return Err(Error::Data("nothing to plot".into()));
    }
    let eps_max = curves
        .iter()
        .flat_map(|c| c.summary.iter().map(|p| p.epsilon))
        .fold(0.0_f64, f64::max)
        .max(1e-9);

    let x = |eps: f64| MARGIN_L + (eps / eps_max) * (PLOT_W - MARGIN_L - MARGIN_R);
    let y = |acc: f64| PLOT_H - MARGIN_B - acc.clamp(0.0, 1.0) * (PLOT_H - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" viewBox=\"0 0 {PLOT_W} {PLOT_H}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{PLOT_W}\" height=\"{PLOT_H}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        PLOT_W / 2.0,
        xml_escape(title)
    ));

    // Sigma bands first so lines draw on top of them.
    for (ci, curve) in curves.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        if curve.summary.iter().all(|p| p.accuracy_std.is_some()) && curve.summary.len() > 1 {
            let mut pts = String::new();
            for p in &curve.summary {
                let s = p.accuracy_std.unwrap();
                pts.push_str(&format!("{:.2},{:.2} ", x(p.epsilon), y(p.mean_accuracy + s)));
            }
            for p in curve.summary.iter().rev() {
                let s = p.accuracy_std.unwrap();
                pts.push_str(&format!("{:.2},{:.2} ", x(p.epsilon), y(p.mean_accuracy - s)));
            }
            svg.push_str(&format!(
                "<polygon points=\"{}\" fill=\"{color}\" opacity=\"0.15\"/>\n",
                pts.trim_end()
            ));
        }
    }

    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"black\"/>\n",
        l = MARGIN_L,
        r = PLOT_W - MARGIN_R,
        t = MARGIN_T,
        b = PLOT_H - MARGIN_B
    ));
    for k in 0..=4 {
        let acc = k as f64 / 4.0;
        svg.push_str(&format!(
            "<line x1=\"{x1}\" y1=\"{yy:.2}\" x2=\"{x2}\" y2=\"{yy:.2}\" stroke=\"black\"/>\n",
            x1 = MARGIN_L - 5.0,
            x2 = MARGIN_L,
            yy = y(acc)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{acc}</text>\n",
            MARGIN_L - 9.0,
            y(acc) + 4.0
        ));
    }
    let mut ticks: Vec<f64> = curves[0].summary.iter().map(|p| p.epsilon).collect();
    ticks.dedup();
    for eps in ticks {
        svg.push_str(&format!(
            "<line x1=\"{0:.2}\" y1=\"{1}\" x2=\"{0:.2}\" y2=\"{2}\" stroke=\"black\"/>\n",
            x(eps),
            PLOT_H - MARGIN_B,
            PLOT_H - MARGIN_B + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{eps}</text>\n",
            x(eps),
            PLOT_H - MARGIN_B + 18.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">perturbation budget</text>\n",
        (MARGIN_L + PLOT_W - MARGIN_R) / 2.0,
        PLOT_H - 14.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">accuracy</text>\n",
        (MARGIN_T + PLOT_H - MARGIN_B) / 2.0
    ));

    // Curves and legend.
    for (ci, curve) in curves.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        let pts: Vec<String> = curve
            .summary
            .iter()
            .map(|p| format!("{:.2},{:.2}", x(p.epsilon), y(p.mean_accuracy)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            pts.join(" ")
        ));
        for p in &curve.summary {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                x(p.epsilon),
                y(p.mean_accuracy)
            ));
        }
        let ly = MARGIN_T + 8.0 + 18.0 * ci as f64;
        let lx = PLOT_W - MARGIN_R - 150.0;
        svg.push_str(&format!(
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            lx + 26.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            lx + 32.0,
            ly + 4.0,
            xml_escape(&curve.classifier)
        ));
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
