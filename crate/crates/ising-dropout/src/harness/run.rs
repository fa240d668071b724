//! Experiment execution: single runs, grids, and masked-input emission.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::accounting::{param_count, total_dropout_rate};
use super::config::{resolve_out_dir, ExperimentConfig, GridConfig};
use super::report::{render_csv, render_table, MetricsReport};
use crate::checkpoint::save_checkpoint;
use crate::data::{load_idx, subsample, DataSet, Split};
use crate::error::{Error, Result};
use crate::mlp::{evaluate, train, BankChoice, DropoutMode};

/// Variable count above which dedicated annealing hardware would refuse
/// the instance; we only warn, since the software annealer has no cap.
const HARDWARE_VARIABLE_LIMIT: usize = 1024;

/// Artifacts of one completed run.
pub struct RunArtifacts {
    pub report: MetricsReport,
    pub report_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

/// Trains one configuration end to end, evaluates masked and unmasked,
/// and writes the JSON report plus a checkpoint into the output
/// directory. Deterministic for a fixed config and seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let spec = config.network_spec()?;
    let train_config = config.train_config()?;

    let mut train_set = load_idx(&config.data.train_images, &config.data.train_labels, Split::Train)?;
    let test_set = load_idx(&config.data.test_images, &config.data.test_labels, Split::Test)?;
    if let Some(n) = config.subsample {
        train_set = subsample(&train_set, n, config.seed, config.subsample_stratified)?;
    }

    if matches!(spec.dropout, DropoutMode::Ising) {
        let units: usize = spec.layer_sizes[..spec.layer_sizes.len() - 1].iter().sum();
        if units > HARDWARE_VARIABLE_LIMIT {
            eprintln!(
                "warning: {units} state variables exceed the {HARDWARE_VARIABLE_LIMIT}-variable \
                 budget of annealing hardware; results may not carry over"
            );
        }
    }

    let outcome = train(&spec, &train_set, &train_config)?;
    let accuracy_masked = evaluate(
        &outcome.bank,
        BankChoice::Merged,
        Some(&outcome.final_mask),
        &test_set,
    )?;
    let accuracy_unmasked = evaluate(&outcome.bank, BankChoice::Merged, None, &test_set)?;
    let accuracy = if spec.inference_masking {
        accuracy_masked
    } else {
        accuracy_unmasked
    };

    let dropped_counts: Vec<f64> = outcome
        .metrics
        .per_layer_drop_pct
        .iter()
        .enumerate()
        .map(|(l, pct)| pct / 100.0 * spec.layer_sizes[l] as f64)
        .collect();
    let accounting = total_dropout_rate(&spec.layer_sizes, &dropped_counts)?;

    let report = MetricsReport {
        model: config.name.clone(),
        arch: spec.layer_sizes.clone(),
        per_layer_drop_pct: outcome.metrics.per_layer_drop_pct.clone(),
        total_drop_pct: accounting.total_pct,
        strict_total_drop_pct: accounting.strict_total_pct,
        param_count: param_count(&spec.layer_sizes),
        accuracy,
        accuracy_unmasked,
        epochs_run: outcome.metrics.epochs_run,
        steps_run: outcome.metrics.steps_run,
        early_stopped: outcome.metrics.early_stopped,
        wall_clock_secs: outcome.metrics.wall_clock_secs,
        loss_trajectory: outcome.metrics.loss_trajectory.clone(),
        config: config.clone(),
    };

    let out_dir = resolve_out_dir(&config.out_dir);
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let slug = config.slug();
    let report_path = out_dir.join(format!("{slug}-report.json"));
    std::fs::write(&report_path, report.to_json()?).map_err(|e| Error::io(&report_path, e))?;
    let checkpoint_path = out_dir.join(format!("{slug}.ckpt"));
    save_checkpoint(
        &checkpoint_path,
        &spec,
        &outcome.bank,
        &outcome.final_mask,
        config.seed,
    )?;

    Ok(RunArtifacts {
        report,
        report_path,
        checkpoint_path,
    })
}

/// Outcome of a grid: per-row results in input order plus the rendered
/// artifacts.
pub struct GridOutcome {
    pub rows: Vec<(String, std::result::Result<MetricsReport, String>)>,
    pub csv: String,
    pub table: String,
    pub csv_path: PathBuf,
    pub table_path: PathBuf,
}

impl GridOutcome {
    pub fn all_succeeded(&self) -> bool {
        self.rows.iter().all(|(_, r)| r.is_ok())
    }
}

/// Runs every experiment of the grid (rows are independent and run in
/// parallel), then writes one combined CSV and one text report. A failing
/// row is recorded and does not stop the others.
pub fn run_grid(grid: &GridConfig) -> Result<GridOutcome> {
    let rows: Vec<(String, std::result::Result<MetricsReport, String>)> = grid
        .experiments
        .par_iter()
        .map(|config| {
            let name = config.name.clone();
            let result = run_experiment(config)
                .map(|artifacts| artifacts.report)
                .map_err(|e| e.to_string());
            (name, result)
        })
        .collect();

    let completed: Vec<&MetricsReport> = rows.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
    let csv = render_csv(&completed);
    let table = render_table(&rows);

    let out_dir = resolve_out_dir(&grid.out_dir);
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let csv_path = out_dir.join("grid.csv");
    std::fs::write(&csv_path, &csv).map_err(|e| Error::io(&csv_path, e))?;
    let table_path = out_dir.join("grid-report.txt");
    std::fs::write(&table_path, &table).map_err(|e| Error::io(&table_path, e))?;

    Ok(GridOutcome {
        rows,
        csv,
        table,
        csv_path,
        table_path,
    })
}

/// Writes `count` original/masked image pairs as binary PGM files.
///
/// `input_keep` is the input layer's keep mask; masked pixels go to 0.
/// Returns the written paths in order.
pub fn emit_masked_inputs(
    data: &DataSet,
    input_keep: &[f64],
    count: usize,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if count == 0 {
        return Err(Error::Input("image count must be at least 1".into()));
    }
    if count > data.len() {
        return Err(Error::Input(format!(
            "asked for {count} samples but the set has {}",
            data.len()
        )));
    }
    if input_keep.len() != data.dim() {
        return Err(Error::Dimension(format!(
            "mask of length {} for images of {} pixels",
            input_keep.len(),
            data.dim()
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (rows, cols) = data.image_shape();
    let mut paths = Vec::with_capacity(2 * count);
    for k in 0..count {
        let image = data.image(k);
        let original: Vec<u8> = image.iter().map(|&p| (p * 255.0).round() as u8).collect();
        let masked: Vec<u8> = image
            .iter()
            .zip(input_keep)
            .map(|(&p, &keep)| ((p * keep) * 255.0).round() as u8)
            .collect();
        for (tag, pixels) in [("original", &original), ("masked", &masked)] {
            let path = out_dir.join(format!("sample-{k:03}-{tag}.pgm"));
            let mut bytes = format!("P5\n{cols} {rows}\n255\n").into_bytes();
            bytes.extend_from_slice(pixels);
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            paths.push(path);
        }
    }
    Ok(paths)
}
