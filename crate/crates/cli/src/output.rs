//! CSV and JSON report rendering.
//!
//! CSV files open with `#` comment lines carrying the seed and the resolved
//! config as one-line JSON, then a header row. Floats use Rust's shortest
//! round-trip formatting, so identical runs give identical bytes.

use std::fmt::Write;

use latent_bo_core::{
    analysis::{Generalization, Histograms, RecoveryTrace, SeparationReport, Summary},
    boloop::{RegretCurve, TraceRecord},
};
use serde_json::{json, Value};

pub const TRACE_HEADER: &str = "step,epoch,inner,acquired_f,incumbent_f,ei_value,regret_term,cum_regret";
pub const SUMMARY_HEADER: &str = "step,incumbent_mean,incumbent_sd,cum_regret_mean,cum_regret_sd";
pub const HISTOGRAM_HEADER: &str = "bin_left,bin_right,count";
pub const PROBE_HEADER: &str = "epoch,probability,flagged,candidates_tried";
pub const REGRET_HEADER: &str = "step,regret_term,std_error,cum_regret,average_regret";

/// Comment preamble shared by every CSV.
fn preamble(kind: &str, seed: Option<u64>, config: &Value, extra: &[(&str, String)]) -> String {
    let mut s = format!("# latent-bo {kind}\n");
    if let Some(seed) = seed {
        let _ = writeln!(s, "# seed: {seed}");
    }
    for (k, v) in extra {
        let _ = writeln!(s, "# {k}: {v}");
    }
    let _ = writeln!(s, "# config: {}", serde_json::to_string(config).expect("json"));
    s
}

pub fn trace_csv(trace: &[TraceRecord], seed: u64, baseline: &str, config: &Value) -> String {
    let mut s = preamble("trace", Some(seed), config, &[("baseline", baseline.to_owned())]);
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for r in trace {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.step, r.epoch, r.inner, r.acquired_f, r.incumbent_f, r.ei_value, r.regret_term, r.cum_regret
        );
    }
    s
}

pub fn summary_csv(summary: &Summary, seeds: &[u64], baseline: &str, config: &Value) -> String {
    let seeds = seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" ");
    let mut extra = vec![("baseline", baseline.to_owned()), ("seeds", seeds)];
    if summary.truncated {
        extra.push(("note", "traces had different lengths and were truncated to the shortest".to_owned()));
    }
    let mut s = preamble("summary", None, config, &extra);
    s.push_str(SUMMARY_HEADER);
    s.push('\n');
    for r in &summary.rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.step, r.incumbent_mean, r.incumbent_sd, r.cum_regret_mean, r.cum_regret_sd);
    }
    s
}

/// One `(bin_left, bin_right, count)` table per distance population.
pub fn histogram_csv(h: &Histograms, counts: &[usize], group: &str, model: &str, seed: u64, config: &Value) -> String {
    let mut s = preamble("histogram", Some(seed), config, &[("model", model.to_owned()), ("group", group.to_owned())]);
    s.push_str(HISTOGRAM_HEADER);
    s.push('\n');
    for (i, c) in counts.iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", h.edges[i], h.edges[i + 1], c);
    }
    s
}

pub fn histogram_groups(h: &Histograms) -> [(&'static str, &[usize]); 3] {
    [("high_high", &h.high_high), ("low_low", &h.low_low), ("high_low", &h.high_low)]
}

pub fn probe_csv(trace: &RecoveryTrace, seed: u64, baseline: &str, config: &Value) -> String {
    let extra = [("baseline", baseline.to_owned()), ("alpha", trace.alpha.to_string()), ("samples", trace.samples.to_string())];
    let mut s = preamble("probe", Some(seed), config, &extra);
    let d = trace.steps.first().map_or(0, |t| t.z.len());
    s.push_str(PROBE_HEADER);
    for k in 0..d {
        let _ = write!(s, ",z_{k}");
    }
    s.push('\n');
    for t in &trace.steps {
        let _ = write!(s, "{},{},{},{}", t.epoch, t.probability, t.flagged, t.candidates_tried);
        for v in &t.z {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn regret_csv(curve: &RegretCurve, seed: u64, baseline: &str, schedule: &str, config: &Value) -> String {
    let extra = [("baseline", baseline.to_owned()), ("schedule", schedule.to_owned())];
    let mut s = preamble("regret", Some(seed), config, &extra);
    s.push_str(REGRET_HEADER);
    s.push('\n');
    for (i, ((t, se), c)) in curve.terms.iter().zip(&curve.std_errors).zip(&curve.cumulative).enumerate() {
        let _ = writeln!(s, "{},{},{},{},{}", i, t, se, c, c / (i + 1) as f64);
    }
    s
}

/// Separation report without the raw distance samples (the histograms
/// carry their distribution).
pub fn separation_json(r: &SeparationReport, model: &str, seed: u64, config: &Value) -> Value {
    json!({
        "kind": "separation",
        "model": model,
        "seed": seed,
        "pairs": { "high_high": r.high_high.len(), "low_low": r.low_low.len(), "high_low": r.high_low.len() },
        "mean_high_high": r.mean_high_high,
        "mean_low_low": r.mean_low_low,
        "mean_high_low": r.mean_high_low,
        "inter_intra_ratio": r.inter_intra_ratio(),
        "degenerate": r.degenerate,
        "histogram_edges": r.histograms.edges,
        "config": config,
    })
}

pub fn generalization_json(g: &Generalization, model: &str, seed: u64, config: &Value) -> Value {
    json!({
        "kind": "gp_generalization",
        "model": model,
        "seed": seed,
        "per_split": g.per_split,
        "mean": g.mean,
        "sd": g.sd,
        "config": config,
    })
}

pub fn pretty(v: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("json");
    out.push(b'\n');
    out
}
