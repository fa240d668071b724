//! The classic random-dropout baseline next to no dropout at all, on the
//! same data and seed.
//!
//! ```bash
//! cargo run --example random_baseline
//! ```

use ising_dropout::data::synthetic::gaussian_blobs;
use ising_dropout::mlp::{evaluate, train, BankChoice, DropoutMode, NetworkSpec, TrainConfig};

fn main() -> anyhow::Result<()> {
    let train_set = gaussian_blobs(512, 16, 4, 0.25, 21);
    let test_set = gaussian_blobs(256, 16, 4, 0.25, 22);
    let config = TrainConfig {
        epoch_cap: 10,
        seed: 3,
        ..Default::default()
    };

    for (label, mode) in [
        ("no dropout", DropoutMode::None),
        ("random p=0.5", DropoutMode::Random { p: 0.5 }),
    ] {
        let spec = NetworkSpec::new(vec![16, 12, 12, 4], mode, false, false)?;
        let outcome = train(&spec, &train_set, &config)?;
        let acc = evaluate(&outcome.bank, BankChoice::Merged, None, &test_set)?;
        let rates: Vec<String> = outcome
            .metrics
            .per_layer_drop_pct
            .iter()
            .map(|p| format!("{p:.1}%"))
            .collect();
        println!(
            "{label:<14} accuracy {:.2}%  mean drop rates [{}]",
            100.0 * acc,
            rates.join(", ")
        );
    }
    Ok(())
}
