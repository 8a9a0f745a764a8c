use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::network::Head;

use super::catalog::{catalog, counterparts, e_series, Series};
use super::runner::TrialResult;
use super::stats::{summarize, AccuracyStats, ComparisonReport};
use super::{ExperimentError, Result};

pub const RESULTS_NAME: &str = "results.csv";
pub const SUMMARY_NAME: &str = "summary.csv";
pub const TABLES_NAME: &str = "tables.md";

#[derive(Debug, Serialize, Deserialize)]
struct ResultLine {
    spec_id: String,
    model: String,
    trial: usize,
    seed: u64,
    accuracy: String,
    wall_time_s: String,
}

fn parse_head(s: &str) -> Result<Head> {
    Head::BOTH
        .into_iter()
        .find(|h| h.model_name() == s)
        .ok_or_else(|| ExperimentError::Results(format!("unknown model '{s}'")))
}

/// Sorts by catalog position, then model, then trial.
pub fn sort_results(results: &mut [TrialResult]) {
    let order: Vec<String> = catalog().into_iter().map(|s| s.id).collect();
    let pos = |id: &str| order.iter().position(|o| o == id).unwrap_or(usize::MAX);
    results.sort_by(|a, b| {
        (pos(&a.spec_id), &a.spec_id, a.model, a.trial).cmp(&(pos(&b.spec_id), &b.spec_id, b.model, b.trial))
    });
}

pub fn write_results(results: &[TrialResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in results {
        w.serialize(ResultLine {
            spec_id: r.spec_id.clone(),
            model: r.model.model_name().to_string(),
            trial: r.trial,
            seed: r.seed,
            accuracy: format!("{:.6}", r.accuracy),
            wall_time_s: format!("{:.6}", r.wall_time_s),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<TrialResult>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for line in rdr.deserialize() {
        let l: ResultLine = line?;
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| ExperimentError::Results(format!("bad number '{s}'")))
        };
        out.push(TrialResult {
            model: parse_head(&l.model)?,
            accuracy: num(&l.accuracy)?,
            wall_time_s: num(&l.wall_time_s)?,
            spec_id: l.spec_id,
            trial: l.trial,
            seed: l.seed,
        });
    }
    Ok(out)
}

/// Accuracies per `(spec, model)`, trials in order.
fn grouped(results: &[TrialResult]) -> BTreeMap<(String, Head), Vec<f64>> {
    let mut sorted = results.to_vec();
    sort_results(&mut sorted);
    let mut map: BTreeMap<(String, Head), Vec<f64>> = BTreeMap::new();
    for r in sorted {
        map.entry((r.spec_id, r.model)).or_default().push(r.accuracy);
    }
    map
}

/// One line of `summary.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub spec_id: String,
    pub model: Head,
    pub stats: AccuracyStats,
    /// Welch p-value against the other model on the same spec.
    pub p_value: Option<f64>,
    pub degenerate: bool,
}

/// M1 versus M2 for every spec with results, in catalog order.
pub fn model_comparisons(results: &[TrialResult]) -> Result<Vec<(String, ComparisonReport)>> {
    let map = grouped(results);
    let mut ids: Vec<String> = Vec::new();
    let mut sorted = results.to_vec();
    sort_results(&mut sorted);
    for r in &sorted {
        if !ids.contains(&r.spec_id) {
            ids.push(r.spec_id.clone());
        }
    }
    let mut out = Vec::new();
    for id in ids {
        let m1 = map.get(&(id.clone(), Head::FullyConnected));
        let m2 = map.get(&(id.clone(), Head::Hvc));
        if let (Some(a), Some(b)) = (m1, m2) {
            out.push((id, summarize(a, b)?));
        }
    }
    Ok(out)
}

pub fn summary_rows(results: &[TrialResult]) -> Result<Vec<SummaryRow>> {
    let map = grouped(results);
    let mut rows = Vec::new();
    let mut sorted = results.to_vec();
    sort_results(&mut sorted);
    let mut seen: Vec<(String, Head)> = Vec::new();
    for r in &sorted {
        let key = (r.spec_id.clone(), r.model);
        if !seen.contains(&key) {
            seen.push(key);
        }
    }
    let comparisons: BTreeMap<String, ComparisonReport> =
        model_comparisons(results)?.into_iter().collect();
    for (id, model) in seen {
        let stats = AccuracyStats::of(&map[&(id.clone(), model)])?;
        let welch = comparisons.get(&id).and_then(|c| c.welch);
        rows.push(SummaryRow {
            spec_id: id,
            model,
            stats,
            p_value: welch.map(|w| w.p_value),
            degenerate: welch.is_some_and(|w| w.degenerate),
        });
    }
    Ok(rows)
}

fn fmt_p(p: Option<f64>) -> String {
    p.map(|p| format!("{p:.6e}")).unwrap_or_default()
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["spec_id", "model", "mean", "max", "sd", "p_value_vs_other_model"])?;
    for r in rows {
        w.write_record([
            r.spec_id.clone(),
            r.model.model_name().to_string(),
            format!("{:.6}", r.stats.mean),
            format!("{:.6}", r.stats.max),
            format!("{:.6}", r.stats.sd),
            fmt_p(r.p_value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

fn model_table(out: &mut String, title: &str, rows: &[(String, ComparisonReport)]) {
    if rows.is_empty() {
        return;
    }
    let _ = writeln!(out, "## {title}\n");
    out.push_str("| Experiment | M1 Mean | M1 Max | M1 SD | M2 Mean | M2 Max | M2 SD | p-value |\n");
    out.push_str("|---|---|---|---|---|---|---|---|\n");
    for (id, c) in rows {
        let flag = if c.welch.is_some_and(|w| w.degenerate) { " (zero variance)" } else { "" };
        let _ = writeln!(
            out,
            "| {id} | {} | {} | {:.5} | {} | {} | {:.5} | {}{flag} |",
            pct(c.first.mean),
            pct(c.first.max),
            c.first.sd,
            pct(c.second.mean),
            pct(c.second.max),
            c.second.sd,
            fmt_p(c.p_value()),
        );
    }
    out.push('\n');
}

/// E-series rows paired with each A counterpart trained on the same subset,
/// per model: `(e_id, a_id, model, report with E first)`.
pub fn e_vs_a(results: &[TrialResult]) -> Result<Vec<(String, String, Head, ComparisonReport)>> {
    let map = grouped(results);
    let mut out = Vec::new();
    for e in e_series() {
        for a in counterparts(&e.id) {
            for model in Head::BOTH {
                let ek = (e.id.clone(), model);
                let ak = (a.id.clone(), model);
                if let (Some(ev), Some(av)) = (map.get(&ek), map.get(&ak)) {
                    out.push((e.id.clone(), a.id.clone(), model, summarize(ev, av)?));
                }
            }
        }
    }
    Ok(out)
}

/// Markdown with the E table, A table, E-versus-A table and ALL table.
pub fn render_tables(results: &[TrialResult]) -> Result<String> {
    let comps = model_comparisons(results)?;
    let series_of = |id: &str| {
        catalog()
            .into_iter()
            .find(|s| s.id == id)
            .map(|s| s.series())
    };
    let pick = |s: Series| -> Vec<(String, ComparisonReport)> {
        comps
            .iter()
            .filter(|(id, _)| series_of(id) == Some(s))
            .cloned()
            .collect()
    };
    let mut out = String::from("# Experiment results\n\n");
    model_table(&mut out, "Exclusion experiments", &pick(Series::E));
    model_table(&mut out, "Augmented experiments", &pick(Series::A));

    let pairs = e_vs_a(results)?;
    if !pairs.is_empty() {
        out.push_str("## Exclusion versus augmented\n\n");
        out.push_str("| Model | E | E Mean | A | A Mean | p-value |\n|---|---|---|---|---|---|\n");
        for (e, a, model, c) in &pairs {
            let _ = writeln!(
                out,
                "| {} | {e} | {} | {a} | {} | {} |",
                model.model_name(),
                pct(c.first.mean),
                pct(c.second.mean),
                fmt_p(c.p_value()),
            );
        }
        out.push('\n');
    }
    model_table(&mut out, "No exclusions", &pick(Series::All));
    Ok(out)
}

/// Writes `results.csv`, `summary.csv` and `tables.md` into `dir`.
pub fn emit_table(results: &[TrialResult], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut sorted = results.to_vec();
    sort_results(&mut sorted);
    write_results(&sorted, &dir.join(RESULTS_NAME))?;
    write_summary(&summary_rows(&sorted)?, &dir.join(SUMMARY_NAME))?;
    fs::write(dir.join(TABLES_NAME), render_tables(&sorted)?)?;
    Ok(())
}
