//! Deterministic report serialization.
//!
//! JSON output has sorted keys, two-space indentation and every
//! floating-point number printed with six significant digits. Integers are
//! printed as integers.

use std::fmt::Write as _;

use serde_json::Value;

use super::StudyReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Text,
}

/// Formats `x` with `digits` significant digits. Plain notation is used for
/// decimal exponents in [-5, 6), scientific notation otherwise.
pub fn format_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return "null".to_string();
    }
    let digits = digits.max(1);
    let x = if x == 0.0 { 0.0 } else { x };
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let rounded: f64 = sci.parse().expect("valid float");
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        format!("{rounded:.decimals$}")
    } else {
        format!("{mantissa}e{exp}")
    }
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_u64() || n.is_i64() {
                out.push_str(&n.to_string());
            } else {
                out.push_str(&format_sig(n.as_f64().unwrap_or(f64::NAN), 6));
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(out, indent + 1);
                write_value(out, item, indent + 1);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            pad(out, indent);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(out, indent + 1);
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_value(out, &map[*k], indent + 1);
                if i + 1 < keys.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            pad(out, indent);
            out.push('}');
        }
    }
}

fn pad(out: &mut String, indent: usize) {
    for _ in 0..indent {
        out.push_str("  ");
    }
}

pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v, 0);
    out.push('\n');
    out
}

pub fn emit_report(report: &StudyReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            canonical_json(&serde_json::to_value(report).expect("report serializes"))
        }
        ReportFormat::Text => text(report),
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format_sig(v, 6)).unwrap_or_else(|| "n/a".into())
}

fn text(r: &StudyReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "ablation study report ({})", r.provenance);
    let _ = writeln!(
        s,
        "policy {}  seed {}  budget {}  lambda {}",
        r.policy,
        r.seed,
        r.budget,
        format_sig(r.lambda, 6)
    );
    let _ = writeln!(
        s,
        "baseline {} = {} ({})",
        r.primary_metric,
        format_sig(r.baseline_score, 6),
        r.baseline_source
    );
    let _ = writeln!(
        s,
        "criticality: s_i >= {} ({} x |f(C)| on {})",
        format_sig(r.criticality.threshold, 6),
        format_sig(r.criticality.tau_crit, 6),
        r.criticality.metric
    );
    let _ = writeln!(s, "  {}", r.criticality.note);
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<4} {:<32} {:>12} {:>12} {:>12} {:>5} {:>8}",
        "rank", "component", "delta", "importance", "max |delta|", "n", "critical"
    );
    for (i, e) in r.importance.iter().enumerate() {
        let _ = writeln!(
            s,
            "{:<4} {:<32} {:>12} {:>12} {:>12} {:>5} {:>8}",
            i + 1,
            e.component_id.as_str(),
            format_sig(e.signed_effect, 6),
            format_sig(e.importance, 6),
            format_sig(e.max_abs_effect, 6),
            e.n_observations,
            if e.critical { "yes" } else { "no" }
        );
    }
    let _ = writeln!(s);
    let pred: Vec<&str> = r.top_k_pred.iter().map(|c| c.as_str()).collect();
    let _ = writeln!(s, "top-{} predicted: {}", r.k, pred.join(", "));
    if let Some(gt) = &r.ground_truth {
        let truth: Vec<&str> = gt.top_k.iter().map(|c| c.as_str()).collect();
        let _ = writeln!(s, "top-{} ground truth: {}", r.k, truth.join(", "));
        let _ = writeln!(s, "acc@{}: {}", r.k, opt(gt.acc_at_k));
        let _ = writeln!(s, "simple regret: {}", opt(gt.simple_regret));
    }
    let st = &r.statistics;
    let _ = writeln!(
        s,
        "executed {} ({} ok), exec rate {}, end-to-end tsr {}",
        st.attempts,
        st.successes,
        opt(st.exec_rate),
        opt(st.tsr.end_to_end)
    );
    for (cat, n) in &st.failures {
        let _ = writeln!(s, "  failures {cat:?}: {n}");
    }
    let _ = writeln!(
        s,
        "rounds {}, trials {}, dropped {}, cost {} GPU-h, stop: {}",
        r.rounds_completed,
        r.total_trials,
        r.dropped_candidates,
        format_sig(r.total_cost_gpu_hours, 6),
        r.stop_reason
    );
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<32} {:>8} {:>6} {:>12} {:>12} {:>26}",
        "arm", "weight", "pulls", "mean", "std", "95% ci"
    );
    for a in &r.arms {
        let ci = a
            .ci95
            .map(|[lo, hi]| format!("[{}, {}]", format_sig(lo, 6), format_sig(hi, 6)))
            .unwrap_or_else(|| "n/a".into());
        let _ = writeln!(
            s,
            "{:<32} {:>8} {:>6} {:>12} {:>12} {:>26}",
            a.arm_id.as_str(),
            format_sig(a.prior_weight, 3),
            a.pulls,
            opt(a.mean_reward),
            opt(a.std_reward),
            ci
        );
    }
    s
}
