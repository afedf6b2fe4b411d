//! Report serialization. JSON is canonical; CSV and Markdown are views
//! computed from the same [`PdcqReport`] values.
//!
//! Markdown mirrors the usual benchmark tables: PDC-Q / PQ / RMSE per
//! horizon, PDC-Q per depth threshold with the threshold average, the
//! things/stuff PQ breakdown, and the depth metric suite. Scores use two
//! decimals, RMSE three.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::Result;
use crate::ingest::MissingPrediction;
use crate::pdcq::{Breakdown, PdcqReport};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Coverage {
    pub expected: usize,
    pub evaluated: usize,
    pub missing: Vec<MissingPrediction>,
}

impl Coverage {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }
}

/// Top-level document written by `pdcq evaluate`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvaluationOutput {
    pub method: String,
    pub coverage: Coverage,
    pub report: Option<PdcqReport>,
}

pub fn to_json(output: &EvaluationOutput) -> String {
    let mut json = serde_json::to_string_pretty(output).expect("report serializes");
    json.push('\n');
    json
}

fn lambda_label(lambda: f64) -> String {
    format!("{lambda}")
}

fn breakdown_rows(
    rows: &mut Vec<[String; 5]>,
    delta: &str,
    lambda: &str,
    b: &Breakdown,
) {
    let mut push = |scope: String, metric: &str, value: f64| {
        rows.push([delta.into(), lambda.into(), scope, metric.into(), value.to_string()]);
    };
    for (scope, s) in [("all", &b.all), ("things", &b.things), ("stuff", &b.stuff)] {
        push(scope.into(), "pq", s.pq);
        push(scope.into(), "sq", s.sq);
        push(scope.into(), "rq", s.rq);
        push(scope.into(), "classes", s.classes as f64);
    }
    for c in &b.per_class {
        let scope = format!("class:{}", c.class_id);
        push(scope.clone(), "pq", c.pq);
        push(scope.clone(), "sq", c.sq);
        push(scope.clone(), "rq", c.rq);
        push(scope.clone(), "tp", c.tp as f64);
        push(scope.clone(), "fp", c.fp as f64);
        push(scope, "fn", c.fn_ as f64);
    }
}

/// Long-format CSV: `delta,lambda,scope,metric,value`. Depth-blind PQ rows
/// have an empty `lambda`; cross-horizon rows have `delta = overall`.
pub fn to_csv(report: &PdcqReport) -> Result<String> {
    let mut rows: Vec<[String; 5]> = Vec::new();
    for h in &report.horizons {
        let delta = h.delta.to_string();
        breakdown_rows(&mut rows, &delta, "", &h.pq);
        for cell in &h.pdcq {
            let lambda = lambda_label(cell.lambda);
            rows.push([delta.clone(), lambda.clone(), "all".into(), "pdcq".into(), cell.pdcq.to_string()]);
            breakdown_rows(&mut rows, &delta, &lambda, &cell.breakdown);
        }
        rows.push([delta.clone(), "avg".into(), "all".into(), "pdcq".into(), h.pdcq_avg.to_string()]);
        let d = &h.depth;
        for (metric, value) in [
            ("abs_rel", d.abs_rel),
            ("rmse", d.rmse),
            ("delta1", d.delta1),
            ("delta2", d.delta2),
            ("delta3", d.delta3),
            ("valid_pixels", d.valid_pixel_count as f64),
            ("frames", h.frames as f64),
        ] {
            rows.push([delta.clone(), String::new(), "depth".into(), metric.into(), value.to_string()]);
        }
    }
    for o in &report.overall {
        rows.push(["overall".into(), lambda_label(o.lambda), "all".into(), "pdcq".into(), o.pdcq.to_string()]);
    }
    rows.push(["overall".into(), "avg".into(), "all".into(), "pdcq".into(), report.overall_avg.to_string()]);

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["delta", "lambda", "scope", "metric", "value"])
        .expect("in-memory write");
    for row in rows {
        writer.write_record(&row).expect("in-memory write");
    }
    let bytes = writer.into_inner().expect("in-memory flush");
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

fn score(v: f64) -> String {
    format!("{v:.2}")
}

fn meters(v: f64) -> String {
    format!("{v:.3}")
}

fn table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for row in rows {
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }
    out.push('\n');
}

/// Renders one or more methods side by side. Methods must share horizons
/// and thresholds for the columns to line up; the first report defines them.
pub fn to_markdown(methods: &[(&str, &PdcqReport)]) -> String {
    let mut out = String::new();
    let Some((_, first)) = methods.first() else {
        return out;
    };
    let deltas: Vec<u32> = first.horizons.iter().map(|h| h.delta).collect();

    out.push_str("## Panoptic-depth forecasting\n\n");
    let mut header = vec!["Method".to_string()];
    for d in &deltas {
        header.extend([format!("PDC-Q t+{d}"), format!("PQ t+{d}"), format!("RMSE t+{d}")]);
    }
    let rows: Vec<Vec<String>> = methods
        .iter()
        .map(|(name, r)| {
            let mut row = vec![name.to_string()];
            for d in &deltas {
                match r.horizon(*d) {
                    Some(h) => row.extend([score(h.pdcq_avg), score(h.pq.all.pq), meters(h.depth.rmse)]),
                    None => row.extend(["-".into(), "-".into(), "-".into()]),
                }
            }
            row
        })
        .collect();
    table(&mut out, &header, &rows);

    out.push_str("## PDC-Q by depth threshold\n\n");
    let mut header = vec!["Method".to_string()];
    for d in &deltas {
        header.push(format!("t+{d} avg"));
        for l in &first.lambdas {
            header.push(format!("t+{d} {l}"));
        }
    }
    let rows: Vec<Vec<String>> = methods
        .iter()
        .map(|(name, r)| {
            let mut row = vec![name.to_string()];
            for d in &deltas {
                let h = r.horizon(*d);
                row.push(h.map_or("-".into(), |h| score(h.pdcq_avg)));
                for l in &first.lambdas {
                    row.push(r.pdcq(*l, *d).map_or("-".into(), score));
                }
            }
            row
        })
        .collect();
    table(&mut out, &header, &rows);

    out.push_str("## Overall PDC-Q\n\n");
    let mut header = vec!["Method".to_string()];
    header.extend(first.lambdas.iter().map(|l| format!("λ={l}")));
    header.push("avg".into());
    let rows: Vec<Vec<String>> = methods
        .iter()
        .map(|(name, r)| {
            let mut row = vec![name.to_string()];
            row.extend(r.overall.iter().map(|o| score(o.pdcq)));
            row.push(score(r.overall_avg));
            row
        })
        .collect();
    table(&mut out, &header, &rows);

    out.push_str("## Panoptic quality (depth-blind)\n\n");
    let header: Vec<String> = [
        "Method", "Δ", "PQ", "SQ", "RQ", "PQ th", "SQ th", "RQ th", "PQ st", "SQ st", "RQ st",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut rows = Vec::new();
    for (name, r) in methods {
        for h in &r.horizons {
            let b = &h.pq;
            let mut row = vec![name.to_string(), h.delta.to_string()];
            for s in [&b.all, &b.things, &b.stuff] {
                row.extend([score(s.pq), score(s.sq), score(s.rq)]);
            }
            rows.push(row);
        }
    }
    table(&mut out, &header, &rows);

    out.push_str("## Depth\n\n");
    let header: Vec<String> = ["Method", "Δ", "Abs Rel", "RMSE", "δ<1.25", "δ<1.25²", "δ<1.25³"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut rows = Vec::new();
    for (name, r) in methods {
        for h in &r.horizons {
            let d = &h.depth;
            rows.push(vec![
                name.to_string(),
                h.delta.to_string(),
                format!("{:.3}", d.abs_rel),
                meters(d.rmse),
                format!("{:.3}", d.delta1),
                format!("{:.3}", d.delta2),
                format!("{:.3}", d.delta3),
            ]);
        }
    }
    table(&mut out, &header, &rows);
    out
}
