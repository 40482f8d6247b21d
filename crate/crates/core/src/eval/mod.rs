//! Security-evaluation protocol and reporting.

mod accuracy;
mod emit;
mod harness;

pub use accuracy::{accuracy_with_rejection, EvalPoint};
pub use emit::{
    emit_csv, emit_sweep_csv, format_manifest, parse_curve_csv, sha256_hex, svg_security_plot,
    CurveRow, CURVE_CSV_HEADER, SWEEP_CSV_HEADER,
};
pub use harness::{
    attack_indices, run_security_eval, summarize_curves, threshold_sweep, CurvePoint, EvalConfig,
    EvalModel, EvalPointRecord, EvalRunRecord, SecurityCurve, SweepPoint,
};
