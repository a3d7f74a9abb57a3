use std::fmt::Write;

use super::commands::{CorrRow, LooTable};
use crate::forest::EvalReport;

pub fn render_report(report: &EvalReport) -> String {
    let c = &report.confusion;
    let mut out = String::new();
    let _ = writeln!(out, "features  {}", report.feature_set.join(","));
    let _ = writeln!(out, "n_test    {}", report.n_test);
    let _ = writeln!(out, "accuracy  {:.4}", report.accuracy);
    let _ = writeln!(out, "confusion tp={} fp={} fn={} tn={}", c.tp, c.fp, c.fn_, c.tn);
    out
}

pub fn render_corr(rows: &[CorrRow]) -> String {
    let mut out = String::from("metric,pearson_r\n");
    for row in rows {
        match row.r {
            Some(r) => {
                let _ = writeln!(out, "{},{r}", row.metric);
            }
            None => {
                let _ = writeln!(out, "{},degenerate", row.metric);
            }
        }
    }
    out
}

/// One row per held-out family, one accuracy column per detector.
pub fn render_loo(table: &LooTable) -> String {
    let mut out = String::from("attack,n_test");
    for l in &table.labels {
        let _ = write!(out, ",{l}");
    }
    out.push('\n');
    for family in table.families() {
        let n = table.reports[0].per_attack[&family].n_test;
        let _ = write!(out, "{family},{n}");
        for report in &table.reports {
            let _ = write!(out, ",{:.4}", report.per_attack[&family].accuracy);
        }
        out.push('\n');
    }
    out
}

pub fn render_importance(ranked: &[(String, f64)]) -> String {
    let mut out = String::from("feature,importance\n");
    for (name, v) in ranked {
        let _ = writeln!(out, "{name},{v}");
    }
    out
}
