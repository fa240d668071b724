//! A small comparison grid: no dropout, random dropout, and adaptive
//! dropout on the same synthetic dataset, rendered as one table.
//!
//! ```bash
//! cargo run --example grid_table
//! ```

use ising_dropout::data::{synthetic::gaussian_blobs, write_idx};
use ising_dropout::harness::{run_grid, DataPaths, ExperimentConfig, GridConfig};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let train = gaussian_blobs(600, 16, 4, 0.25, 31);
    let test = gaussian_blobs(300, 16, 4, 0.25, 32);
    let data = DataPaths {
        train_images: dir.path().join("train-images.idx"),
        train_labels: dir.path().join("train-labels.idx"),
        test_images: dir.path().join("test-images.idx"),
        test_labels: dir.path().join("test-labels.idx"),
    };
    write_idx(&train, &data.train_images, &data.train_labels)?;
    write_idx(&test, &data.test_images, &data.test_labels)?;

    let mut experiments = Vec::new();
    for (name, mode, inference_masking) in [
        ("no-dropout", "none", false),
        ("random-p05", "random", false),
        ("ising-train", "ising", false),
        ("ising-train-inference", "ising", true),
    ] {
        let mut e = ExperimentConfig::defaults(name, vec![16, 12, 12, 4], data.clone());
        e.mode = mode.into();
        e.inference_masking = inference_masking;
        e.epoch_cap = 6;
        e.seed = 9;
        e.anneal.sweeps = 150;
        e.anneal.restarts = 2;
        e.out_dir = dir.path().join("runs");
        experiments.push(e);
    }
    let grid = GridConfig {
        out_dir: dir.path().join("runs"),
        experiments,
    };

    let outcome = run_grid(&grid)?;
    print!("{}", outcome.table);
    println!();
    println!("csv written to {}", outcome.csv_path.display());
    Ok(())
}
