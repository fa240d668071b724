//! Thin command-line front end over the experiment harness.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use ising_dropout::checkpoint::load_checkpoint;
use ising_dropout::data::{load_idx, Split};
use ising_dropout::harness::{
    emit_masked_inputs, render_table, resolve_out_dir, run_experiment, run_grid, ExperimentConfig,
    GridConfig, MetricsReport,
};

#[derive(Parser)]
#[command(name = "ising-dropout", about = "Adaptive-dropout training runs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every experiment of a grid config and emit the combined table.
    Grid {
        #[arg(long)]
        config: PathBuf,
    },
    /// Render a table from previously written report JSON files.
    Report {
        /// Report files; with --dir, every *-report.json inside it.
        files: Vec<PathBuf>,
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Write original/masked input image pairs from a checkpoint.
    EmitImages {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Image and label file of the split to visualize.
        #[arg(long, num_args = 2, value_names = ["IMAGES", "LABELS"])]
        data: Vec<PathBuf>,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value = "images")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config, seed, out } => {
            let mut config = ExperimentConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(out) = out {
                config.out_dir = out;
            }
            let artifacts = run_experiment(&config)?;
            let r = &artifacts.report;
            println!(
                "{}: accuracy {:.2}% (unmasked {:.2}%), total dropout {:.2}% over {} parameters",
                r.model,
                100.0 * r.accuracy,
                100.0 * r.accuracy_unmasked,
                r.total_drop_pct,
                r.param_count
            );
            println!("report:     {}", artifacts.report_path.display());
            println!("checkpoint: {}", artifacts.checkpoint_path.display());
            Ok(())
        }
        Command::Grid { config } => {
            let grid = GridConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let outcome = run_grid(&grid)?;
            print!("{}", outcome.table);
            println!("csv:   {}", outcome.csv_path.display());
            println!("table: {}", outcome.table_path.display());
            if !outcome.all_succeeded() {
                bail!("one or more grid rows failed");
            }
            Ok(())
        }
        Command::Report { mut files, dir } => {
            if let Some(dir) = dir {
                let mut found: Vec<PathBuf> = std::fs::read_dir(&dir)
                    .with_context(|| format!("reading {}", dir.display()))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| {
                        p.file_name()
                            .and_then(|n| n.to_str())
                            .is_some_and(|n| n.ends_with("-report.json"))
                    })
                    .collect();
                found.sort();
                files.extend(found);
            }
            if files.is_empty() {
                bail!("no report files given; pass paths or --dir");
            }
            let mut rows = Vec::new();
            for path in files {
                let name = path.display().to_string();
                let row = MetricsReport::load(&path)
                    .map_err(|e| e.to_string())
                    .map(|r| r);
                rows.push((name, row));
            }
            print!("{}", render_table(&rows));
            if rows.iter().any(|(_, r)| r.is_err()) {
                bail!("one or more reports failed to parse");
            }
            Ok(())
        }
        Command::EmitImages {
            checkpoint,
            data,
            count,
            out,
        } => {
            let [images, labels] = data.as_slice() else {
                bail!("--data needs exactly two paths: images then labels");
            };
            let ckpt = load_checkpoint(&checkpoint)?;
            if !ckpt.spec.input_dropout {
                bail!("checkpoint was trained without input-layer dropout; nothing to visualize");
            }
            let dataset = load_idx(images, labels, Split::Test)?;
            let input_keep = ckpt.mask.keep(0).to_vec();
            let out = resolve_out_dir(&out);
            let paths = emit_masked_inputs(&dataset, &input_keep, count, &out)?;
            println!("wrote {} files under {}", paths.len(), out.display());
            Ok(())
        }
    }
}
