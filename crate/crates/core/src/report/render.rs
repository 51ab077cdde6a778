use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use super::pareto::{frontier_indices, ParetoPoint};
use super::ReportError;
use crate::format::sig6;
use crate::metric::{rank, SamParams};
use crate::store::RunRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    TableText,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table-text" | "table" | "text" => Ok(ReportFormat::TableText),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown format `{other}` (expected table-text|csv|json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryDoc {
    pub rank: usize,
    pub run_id: String,
    pub model: String,
    pub hardware: String,
    pub accuracy: f64,
    pub train_energy_kwh: f64,
    pub log10_kwh: f64,
    pub sam: f64,
    pub pareto: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupDoc {
    pub task: String,
    pub dataset: String,
    pub batch_sizes: Vec<u32>,
    pub flagged: bool,
    pub warnings: Vec<String>,
    pub entries: Vec<EntryDoc>,
    /// (accuracy, log10 kWh) points in ranking order, for plotting.
    pub series: Vec<ParetoPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDoc {
    pub alpha: f64,
    pub beta: f64,
    pub groups: Vec<GroupDoc>,
}

/// Scores, ranks and marks Pareto membership per comparability group.
/// Fails as a whole if any run cannot be ranked.
pub fn build_report(runs: &[RunRecord], params: SamParams, force: bool) -> Result<ReportDoc, ReportError> {
    let groups = rank(runs, params, force)?
        .into_iter()
        .map(|g| {
            let points: Vec<(f64, f64)> = g
                .entries
                .iter()
                .map(|e| (e.record.accuracy, e.record.train_energy_kwh))
                .collect();
            let mut on_frontier = vec![false; points.len()];
            for i in frontier_indices(&points) {
                on_frontier[i] = true;
            }
            let entries = g
                .entries
                .iter()
                .enumerate()
                .map(|(i, e)| EntryDoc {
                    rank: i + 1,
                    run_id: e.record.run_id.clone(),
                    model: e.record.model.clone(),
                    hardware: e.record.hardware.clone(),
                    accuracy: e.record.accuracy,
                    train_energy_kwh: e.record.train_energy_kwh,
                    log10_kwh: e.record.train_energy_kwh.log10(),
                    sam: e.score.value,
                    pareto: on_frontier[i],
                })
                .collect();
            let series = g.entries.iter().map(|e| ParetoPoint::of(&e.record)).collect();
            GroupDoc {
                task: g.task,
                dataset: g.dataset,
                batch_sizes: g.batch_sizes,
                flagged: g.flagged,
                warnings: g.warnings,
                entries,
                series,
            }
        })
        .collect();
    Ok(ReportDoc {
        alpha: params.alpha,
        beta: params.beta,
        groups,
    })
}

pub fn render_report(
    runs: &[RunRecord],
    params: SamParams,
    format: ReportFormat,
    force: bool,
) -> Result<String, ReportError> {
    let doc = build_report(runs, params, force)?;
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&doc)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => render_csv(&doc),
        ReportFormat::TableText => Ok(render_text(&doc)),
    }
}

fn batch_label(sizes: &[u32]) -> String {
    sizes.iter().map(u32::to_string).collect::<Vec<_>>().join(";")
}

fn render_csv(doc: &ReportDoc) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "task",
        "dataset",
        "batch_size",
        "flagged",
        "rank",
        "run_id",
        "model",
        "accuracy",
        "train_energy_kwh",
        "log10_kwh",
        "sam",
        "pareto",
    ])?;
    for g in &doc.groups {
        for e in &g.entries {
            w.write_record([
                g.task.clone(),
                g.dataset.clone(),
                batch_label(&g.batch_sizes),
                g.flagged.to_string(),
                e.rank.to_string(),
                e.run_id.clone(),
                e.model.clone(),
                e.accuracy.to_string(),
                e.train_energy_kwh.to_string(),
                e.log10_kwh.to_string(),
                e.sam.to_string(),
                e.pareto.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Left-aligned text columns sized to their widest cell.
pub(crate) fn text_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells
            .zip(&widths)
            .map(|(c, &w)| format!("{c:<w$}"))
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(&mut header.iter().copied());
    for row in rows {
        line(&mut row.iter().map(String::as_str));
    }
    out
}

fn render_text(doc: &ReportDoc) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "SAM leaderboard (alpha = {}, beta = {})", sig6(doc.alpha), sig6(doc.beta));
    if doc.groups.is_empty() {
        out.push_str("no runs\n");
    }
    for g in &doc.groups {
        let _ = writeln!(
            out,
            "\n== {} / {} (batch size {}){}",
            g.task,
            g.dataset,
            batch_label(&g.batch_sizes),
            if g.flagged { " [FORCED: not comparable]" } else { "" }
        );
        for w in &g.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        let rows: Vec<Vec<String>> = g
            .entries
            .iter()
            .map(|e| {
                vec![
                    e.rank.to_string(),
                    e.run_id.clone(),
                    e.model.clone(),
                    sig6(e.accuracy),
                    sig6(e.train_energy_kwh),
                    sig6(e.sam),
                    if e.pareto { "*" } else { "" }.to_string(),
                ]
            })
            .collect();
        out.push_str(&text_table(
            &["rank", "run_id", "model", "accuracy", "train_kwh", "sam", "pareto"],
            &rows,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::testing::record;

    fn run(id: &str, acc: f64, kwh: f64, batch: u32) -> RunRecord {
        let mut r = record(id);
        r.accuracy = acc;
        r.train_energy_kwh = kwh;
        r.batch_size = batch;
        r
    }

    #[test]
    fn empty_report_is_valid() {
        let json = render_report(&[], SamParams::default(), ReportFormat::Json, false).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["groups"].as_array().unwrap().len(), 0);
        let csv = render_report(&[], SamParams::default(), ReportFormat::Csv, false).unwrap();
        assert_eq!(csv.lines().count(), 1);
        let text = render_report(&[], SamParams::default(), ReportFormat::TableText, false).unwrap();
        assert!(text.contains("no runs"));
    }

    #[test]
    fn mixed_batches_fail_without_output() {
        let runs = [run("a", 0.8, 20.0, 8), run("b", 0.7, 30.0, 32)];
        assert!(render_report(&runs, SamParams::default(), ReportFormat::Json, false).is_err());
        let forced = render_report(&runs, SamParams::default(), ReportFormat::TableText, true).unwrap();
        assert!(forced.contains("FORCED"));
    }

    #[test]
    fn pareto_flags_and_determinism() {
        let runs = [run("a", 0.9, 100.0, 8), run("b", 0.8, 10.0, 8), run("c", 0.7, 50.0, 8)];
        let doc = build_report(&runs, SamParams::default(), false).unwrap();
        let flags: Vec<(&str, bool)> = doc.groups[0]
            .entries
            .iter()
            .map(|e| (e.run_id.as_str(), e.pareto))
            .collect();
        assert!(flags.contains(&("c", false)));
        assert!(flags.contains(&("a", true)));
        assert!(flags.contains(&("b", true)));
        for fmt in [ReportFormat::Json, ReportFormat::Csv, ReportFormat::TableText] {
            let a = render_report(&runs, SamParams::default(), fmt, false).unwrap();
            let b = render_report(&runs, SamParams::default(), fmt, false).unwrap();
            assert_eq!(a, b);
        }
    }
}
