//! Input-layer dropout visualized: train with input units as candidates,
//! then write original/masked image pairs as PGM files.
//!
//! ```bash
//! cargo run --example masked_images -- data/mnist images-out
//! ```

use std::path::PathBuf;

use ising_dropout::data::{load_idx, subsample, Split};
use ising_dropout::harness::emit_masked_inputs;
use ising_dropout::ising::AnnealSchedule;
use ising_dropout::mlp::{train, DropoutMode, NetworkSpec, TrainConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "data/mnist".into()));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "images-out".into()));

    let full = load_idx(
        &dir.join("train-images-idx3-ubyte.gz"),
        &dir.join("train-labels-idx1-ubyte.gz"),
        Split::Train,
    )?;
    let train_set = subsample(&full, 2_000, 5, true)?;

    let spec = NetworkSpec::new(vec![784, 100, 100, 10], DropoutMode::Ising, true, true)?;
    let config = TrainConfig {
        epoch_cap: 2,
        mask_refresh_every: 5,
        seed: 5,
        anneal: AnnealSchedule {
            sweeps: 150,
            restarts: 2,
            ..Default::default()
        },
        ..Default::default()
    };
    let outcome = train(&spec, &train_set, &config)?;

    let input_keep = outcome.final_mask.keep(0);
    let dropped = input_keep.iter().filter(|&&k| k == 0.0).count();
    println!(
        "final input mask drops {dropped}/784 pixels ({:.1}%)",
        100.0 * dropped as f64 / 784.0
    );
    let paths = emit_masked_inputs(&train_set, input_keep, 6, &out)?;
    println!("wrote {} PGM files under {}", paths.len(), out.display());
    Ok(())
}
