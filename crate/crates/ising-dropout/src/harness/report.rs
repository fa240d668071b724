//! Run reports: JSON serialization plus the combined CSV and text table.

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

/// Everything measured about one experiment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub model: String,
    pub arch: Vec<usize>,
    /// Time-averaged percentage of dropped units per maskable layer.
    pub per_layer_drop_pct: Vec<f64>,
    /// Headline accounting (outgoing weights + bias per dropped unit).
    pub total_drop_pct: f64,
    /// Either-endpoint accounting.
    pub strict_total_drop_pct: f64,
    pub param_count: usize,
    /// Test accuracy under the configured inference masking.
    pub accuracy: f64,
    /// Test accuracy with every unit kept, always reported.
    pub accuracy_unmasked: f64,
    pub epochs_run: usize,
    pub steps_run: usize,
    pub early_stopped: bool,
    pub wall_clock_secs: f64,
    pub loss_trajectory: Vec<f64>,
    pub config: ExperimentConfig,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn arch_string(arch: &[usize]) -> String {
    let parts: Vec<String> = arch.iter().map(|s| s.to_string()).collect();
    format!("({})", parts.join(","))
}

/// Fixed-order CSV over a set of completed reports:
/// `model,arch,h0..h{max},total_pct,strict_total_pct,params,acc_pct`.
/// Layers a row does not have stay empty.
pub fn render_csv(reports: &[&MetricsReport]) -> String {
    let max_layers = reports
        .iter()
        .map(|r| r.per_layer_drop_pct.len())
        .max()
        .unwrap_or(0);
    let mut out = String::from("model,arch");
    for l in 0..max_layers {
        out.push_str(&format!(",h{l}_drop_pct"));
    }
    out.push_str(",total_drop_pct,strict_total_drop_pct,params,accuracy_pct\n");
    for r in reports {
        out.push_str(&r.model.replace(',', ";"));
        out.push(',');
        out.push_str(&arch_string(&r.arch).replace(',', "-"));
        for l in 0..max_layers {
            out.push(',');
            if let Some(pct) = r.per_layer_drop_pct.get(l) {
                out.push_str(&format!("{pct:.2}"));
            }
        }
        out.push_str(&format!(
            ",{:.2},{:.2},{},{:.2}\n",
            r.total_drop_pct,
            r.strict_total_drop_pct,
            r.param_count,
            100.0 * r.accuracy
        ));
    }
    out
}

/// Human-readable table mirroring the CSV, one row per report, with
/// failures appended at the bottom.
pub fn render_table(rows: &[(String, std::result::Result<MetricsReport, String>)]) -> String {
    let completed: Vec<&MetricsReport> = rows
        .iter()
        .filter_map(|(_, r)| r.as_ref().ok())
        .collect();
    let max_layers = completed
        .iter()
        .map(|r| r.per_layer_drop_pct.len())
        .max()
        .unwrap_or(0);

    let mut header = vec!["model".to_string(), "arch".to_string()];
    for l in 0..max_layers {
        header.push(format!("h{l}%"));
    }
    header.extend(["total%".into(), "strict%".into(), "P".into(), "acc%".into()]);

    let mut body: Vec<Vec<String>> = Vec::new();
    for r in &completed {
        let mut row = vec![r.model.clone(), arch_string(&r.arch)];
        for l in 0..max_layers {
            row.push(
                r.per_layer_drop_pct
                    .get(l)
                    .map_or(String::new(), |p| format!("{p:.2}")),
            );
        }
        row.push(format!("{:.2}", r.total_drop_pct));
        row.push(format!("{:.2}", r.strict_total_drop_pct));
        row.push(r.param_count.to_string());
        row.push(format!("{:.2}", 100.0 * r.accuracy));
        body.push(row);
    }

    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &body {
        for (c, cell) in row.iter().enumerate() {
            widths[c] = widths[c].max(cell.len());
        }
    }

    let fmt_row = |cells: &[String]| -> String {
        let padded: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(c, cell)| format!("{:width$}", cell, width = widths[c]))
            .collect();
        padded.join("  ")
    };

    let mut out = fmt_row(&header);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (cols - 1)));
    out.push('\n');
    for row in &body {
        out.push_str(&fmt_row(row));
        out.push('\n');
    }
    for (name, result) in rows {
        if let Err(err) = result {
            out.push_str(&format!("FAILED {name}: {err}\n"));
        }
    }
    out
}
