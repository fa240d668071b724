//! A desk-scale adaptive-dropout run on MNIST-format data.
//!
//! Expects the four IDX files (gzip or raw) under a data directory:
//!
//! ```bash
//! cargo run --example train_mnist -- data/mnist [subsample] [epochs]
//! ```
//!
//! Defaults to a stratified 10,000-sample cut and 8 epochs so the run
//! finishes in a few minutes; pass `60000 32` for the full setting.

use std::path::PathBuf;

use ising_dropout::harness::{run_experiment, DataPaths, ExperimentConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "data/mnist".into()));
    let subsample: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10_000);
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(8);

    let data = DataPaths {
        train_images: dir.join("train-images-idx3-ubyte.gz"),
        train_labels: dir.join("train-labels-idx1-ubyte.gz"),
        test_images: dir.join("t10k-images-idx3-ubyte.gz"),
        test_labels: dir.join("t10k-labels-idx1-ubyte.gz"),
    };

    let mut config = ExperimentConfig::defaults("mnist-ising", vec![784, 100, 100, 10], data);
    config.mode = "ising".into();
    config.inference_masking = true;
    config.epoch_cap = epochs;
    config.subsample = (subsample < 60_000).then_some(subsample);
    config.mask_refresh_every = 5;
    config.anneal.sweeps = 200;
    config.anneal.restarts = 2;
    config.seed = 7;
    config.out_dir = "runs".into();

    let artifacts = run_experiment(&config)?;
    let r = &artifacts.report;
    println!(
        "{}: accuracy {:.2}% masked / {:.2}% unmasked",
        r.model,
        100.0 * r.accuracy,
        100.0 * r.accuracy_unmasked
    );
    for (l, pct) in r.per_layer_drop_pct.iter().enumerate() {
        println!("  h{l}: {pct:.2}% dropped (time-averaged)");
    }
    println!(
        "  total dropout {:.2}% (strict {:.2}%) of {} parameters",
        r.total_drop_pct, r.strict_total_drop_pct, r.param_count
    );
    println!("  report written to {}", artifacts.report_path.display());
    Ok(())
}
