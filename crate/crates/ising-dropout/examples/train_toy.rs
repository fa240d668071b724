//! Adaptive-dropout training on a small synthetic problem, end to end:
//! train, inspect drop rates, evaluate masked and unmasked.
//!
//! ```bash
//! cargo run --example train_toy
//! ```

use ising_dropout::data::synthetic::gaussian_blobs;
use ising_dropout::ising::AnnealSchedule;
use ising_dropout::mlp::{evaluate, train, BankChoice, DropoutMode, NetworkSpec, TrainConfig};

fn main() -> anyhow::Result<()> {
    let spec = NetworkSpec::new(vec![16, 8, 8, 2], DropoutMode::Ising, false, true)?;
    let train_set = gaussian_blobs(512, 16, 2, 0.2, 11);
    let test_set = gaussian_blobs(256, 16, 2, 0.2, 12);

    let config = TrainConfig {
        epoch_cap: 8,
        seed: 1,
        anneal: AnnealSchedule {
            sweeps: 300,
            restarts: 4,
            ..Default::default()
        },
        ..Default::default()
    };
    let outcome = train(&spec, &train_set, &config)?;

    println!(
        "trained {} epochs ({} steps), final loss {:.4}",
        outcome.metrics.epochs_run,
        outcome.metrics.steps_run,
        outcome.metrics.loss_trajectory.last().unwrap()
    );
    for (l, pct) in outcome.metrics.per_layer_drop_pct.iter().enumerate() {
        println!("layer h{l}: {pct:.2}% of units dropped on average");
    }

    let masked = evaluate(
        &outcome.bank,
        BankChoice::Merged,
        Some(&outcome.final_mask),
        &test_set,
    )?;
    let unmasked = evaluate(&outcome.bank, BankChoice::Merged, None, &test_set)?;
    println!("test accuracy, final mask applied:   {:.2}%", 100.0 * masked);
    println!("test accuracy, every unit kept:      {:.2}%", 100.0 * unmasked);
    Ok(())
}
