//! Saving a trained network and reloading it for masked inference.
//!
//! ```bash
//! cargo run --example checkpoint_roundtrip
//! ```

use ising_dropout::checkpoint::{load_checkpoint, save_checkpoint};
use ising_dropout::data::synthetic::gaussian_blobs;
use ising_dropout::ising::AnnealSchedule;
use ising_dropout::mlp::{evaluate, train, BankChoice, DropoutMode, NetworkSpec, TrainConfig};

fn main() -> anyhow::Result<()> {
    let spec = NetworkSpec::new(vec![16, 8, 8, 2], DropoutMode::Ising, true, true)?;
    let train_set = gaussian_blobs(384, 16, 2, 0.2, 51);
    let test_set = gaussian_blobs(128, 16, 2, 0.2, 52);
    let config = TrainConfig {
        epoch_cap: 4,
        seed: 13,
        anneal: AnnealSchedule {
            sweeps: 150,
            restarts: 2,
            ..Default::default()
        },
        ..Default::default()
    };
    let outcome = train(&spec, &train_set, &config)?;
    let before = evaluate(
        &outcome.bank,
        BankChoice::Merged,
        Some(&outcome.final_mask),
        &test_set,
    )?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("toy.ckpt");
    save_checkpoint(&path, &spec, &outcome.bank, &outcome.final_mask, config.seed)?;
    println!(
        "checkpoint: {} ({} bytes)",
        path.display(),
        std::fs::metadata(&path)?.len()
    );

    let restored = load_checkpoint(&path)?;
    let after = evaluate(
        &restored.bank,
        BankChoice::Merged,
        Some(&restored.mask),
        &test_set,
    )?;
    println!("masked accuracy before save: {:.2}%", 100.0 * before);
    println!("masked accuracy after load:  {:.2}%", 100.0 * after);
    assert_eq!(before, after, "round trip must not change inference");
    println!("round trip exact");
    Ok(())
}
