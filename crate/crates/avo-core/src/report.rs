//! Trajectory exports and comparison reporting.
//!
//! Exports emit one row per committed version with per-configuration
//! scores, the geomean, and the running-best envelope (nondecreasing by
//! construction). CSV and JSON carry the same values; timestamps can be
//! normalized to zero so exports from identically-seeded runs compare
//! byte-for-byte.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::lineage::{geomean, Lineage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(format!("unknown export format `{other}`")),
        }
    }
}

/// Export the lineage trajectory. Columns: version, parent, timestamp, one
/// `f_<config_id>` column per configuration in task order, geomean, and
/// running_best_geomean.
pub fn export_trajectory(lineage: &Lineage, format: ExportFormat, normalize_time: bool) -> String {
    match format {
        ExportFormat::Csv => export_csv(lineage, normalize_time),
        ExportFormat::Json => export_json(lineage, normalize_time),
    }
}

fn config_ids(lineage: &Lineage) -> Vec<String> {
    lineage
        .seed()
        .scores
        .entries
        .iter()
        .map(|e| e.config_id.clone())
        .collect()
}

fn export_csv(lineage: &Lineage, normalize_time: bool) -> String {
    let ids = config_ids(lineage);
    let mut out = String::from("version,parent,timestamp");
    for id in &ids {
        let _ = write!(out, ",f_{id}");
    }
    out.push_str(",geomean,running_best_geomean\n");
    let running = lineage.running_best();
    for (entry, (_, best)) in lineage.entries().iter().zip(running) {
        let parent = entry
            .solution
            .parent
            .map(|p| p.to_string())
            .unwrap_or_default();
        let timestamp = if normalize_time { 0 } else { entry.solution.created_at };
        let _ = write!(out, "{},{},{}", entry.solution.version, parent, timestamp);
        for id in &ids {
            let _ = write!(out, ",{}", entry.scores.get(id).unwrap_or(0.0));
        }
        let g = geomean(&entry.scores).unwrap_or(0.0);
        let _ = writeln!(out, ",{g},{best}");
    }
    out
}

fn export_json(lineage: &Lineage, normalize_time: bool) -> String {
    let ids = config_ids(lineage);
    let running = lineage.running_best();
    let rows: Vec<serde_json::Value> = lineage
        .entries()
        .iter()
        .zip(running)
        .map(|(entry, (_, best))| {
            let mut row = serde_json::Map::new();
            row.insert("version".into(), entry.solution.version.into());
            row.insert(
                "parent".into(),
                entry
                    .solution
                    .parent
                    .map(serde_json::Value::from)
                    .unwrap_or(serde_json::Value::Null),
            );
            let timestamp = if normalize_time { 0 } else { entry.solution.created_at };
            row.insert("timestamp".into(), timestamp.into());
            for id in &ids {
                row.insert(format!("f_{id}"), entry.scores.get(id).unwrap_or(0.0).into());
            }
            row.insert(
                "geomean".into(),
                geomean(&entry.scores).unwrap_or(0.0).into(),
            );
            row.insert("running_best_geomean".into(), best.into());
            serde_json::Value::Object(row)
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&rows).expect("rows serialize");
    text.push('\n');
    text
}

/// One external baseline measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub name: String,
    pub config_id: String,
    pub value: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("baseline line {line}: expected `name,config_id,value`")]
    BadBaselineRow { line: usize },
    #[error("failed to read baseline file: {0}")]
    Io(#[from] std::io::Error),
}

/// Parse a baseline table: CSV rows `name,config_id,value`, with an
/// optional header line.
pub fn parse_baselines(text: &str) -> Result<Vec<BaselineRow>, ReportError> {
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if idx == 0 && line.eq_ignore_ascii_case("name,config_id,value") {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || ReportError::BadBaselineRow { line: idx + 1 };
        if parts.len() != 3 {
            return Err(bad());
        }
        rows.push(BaselineRow {
            name: parts[0].to_string(),
            config_id: parts[1].to_string(),
            value: parts[2].parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}

/// Relative gain of the best committed value over one baseline entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainEntry {
    pub baseline: String,
    pub config_id: String,
    pub baseline_value: f64,
    pub best_value: f64,
    /// `None` flags an undefined gain (zero baseline).
    pub gain_percent: Option<f64>,
}

impl GainEntry {
    pub fn formatted(&self) -> String {
        match self.gain_percent {
            Some(p) => format_percent(p),
            None => "undefined".to_string(),
        }
    }
}

/// Comparison of the lineage's per-configuration bests against a baseline
/// table. Baseline rows whose config id does not match any lineage
/// configuration are reported, not fatal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub entries: Vec<GainEntry>,
    pub unmatched: Vec<BaselineRow>,
}

impl CompareReport {
    pub fn render(&self) -> String {
        let mut out = String::from("baseline,config_id,baseline_value,best_value,gain\n");
        for entry in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                entry.baseline,
                entry.config_id,
                entry.baseline_value,
                entry.best_value,
                entry.formatted()
            );
        }
        for row in &self.unmatched {
            let _ = writeln!(out, "{},{},{},,unmatched-config", row.name, row.config_id, row.value);
        }
        out
    }
}

/// Per (baseline, config): `gain% = (best / baseline - 1) * 100`, rounded
/// to one decimal. `best` is the highest committed score for that
/// configuration.
pub fn compare_report(lineage: &Lineage, baselines: &[BaselineRow]) -> CompareReport {
    let ids = config_ids(lineage);
    let best_for = |id: &str| -> f64 {
        lineage
            .entries()
            .iter()
            .filter_map(|e| e.scores.get(id))
            .fold(0.0, f64::max)
    };
    let mut entries = Vec::new();
    let mut unmatched = Vec::new();
    for row in baselines {
        if !ids.iter().any(|id| *id == row.config_id) {
            unmatched.push(row.clone());
            continue;
        }
        let best = best_for(&row.config_id);
        let gain = (row.value != 0.0).then(|| round1((best / row.value - 1.0) * 100.0));
        entries.push(GainEntry {
            baseline: row.name.clone(),
            config_id: row.config_id.clone(),
            baseline_value: row.value,
            best_value: best,
            gain_percent: gain,
        });
    }
    CompareReport { entries, unmatched }
}

/// Geomean improvement of one version over its predecessor, as a
/// one-decimal percentage. `None` flags an undefined delta (non-positive
/// predecessor).
pub fn ablation_delta(geomean_prev: f64, geomean_next: f64) -> Option<f64> {
    (geomean_prev > 0.0).then(|| round1((geomean_next / geomean_prev - 1.0) * 100.0))
}

fn round1(value: f64) -> f64 {
    (value * 10.0).round() / 10.0
}

/// Signed one-decimal percent: `+8.1%`, `-10.0%`, `+0.0%`.
pub fn format_percent(value: f64) -> String {
    let rounded = round1(value);
    if rounded >= 0.0 {
        format!("+{rounded:.1}%")
    } else {
        format!("-{:.1}%", rounded.abs())
    }
}
