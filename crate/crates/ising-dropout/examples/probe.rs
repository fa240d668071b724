//! Scratch tuning probe (not part of the example tour).

use std::path::PathBuf;
use std::time::Instant;

use ising_dropout::data::{load_idx, subsample, Split};
use ising_dropout::ising::{build_instance, AnnealSchedule, IsingConfig, UnitIndexMap};
use ising_dropout::mlp::{evaluate, train, BankChoice, DropoutMode, NetworkSpec, TrainConfig};

fn instance_stats() -> anyhow::Result<()> {
    let epochs: usize = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(4);
    let dataset: String = std::env::args().nth(3).unwrap_or_else(|| "mnist".into());
    let dir = PathBuf::from(format!("data/{dataset}"));
    let full = load_idx(
        &dir.join("train-images-idx3-ubyte.gz"),
        &dir.join("train-labels-idx1-ubyte.gz"),
        Split::Train,
    )?;
    let train_set = subsample(&full, 10_000, 7, true)?;
    let spec = NetworkSpec::new(vec![784, 100, 100, 10], DropoutMode::None, false, false)?;
    let config = TrainConfig {
        epoch_cap: epochs.max(1),
        seed: 7,
        ..Default::default()
    };
    let out = train(&spec, &train_set, &config)?;

    let view = train_set.identity_view();
    let batch = view.batches(32).next().unwrap();
    let map = UnitIndexMap::new(vec![784, 100, 100], false)?;
    let instance = build_instance(&out.bank, &batch, &map, &IsingConfig::default())?;

    // Incident coupling sum per unit, split by layer.
    let mut incident = vec![0.0f64; map.unit_count()];
    for &(u, v, g) in instance.edges() {
        incident[u as usize] += g;
        incident[v as usize] += g;
    }
    for (l, range) in [(0usize, 0..784), (1, 784..884), (2, 884..984)] {
        let mut vals: Vec<f64> = range.map(|u| incident[u]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| vals[((vals.len() - 1) as f64 * p) as usize];
        println!(
            "epoch {epochs} layer {l}: incident min {:.2} p25 {:.2} median {:.2} p75 {:.2} max {:.2}",
            vals[0],
            q(0.25),
            q(0.5),
            q(0.75),
            vals[vals.len() - 1]
        );
    }
    for l in 0..2 {
        let mut vals: Vec<f64> = out.bank.merged_biases(l).iter().map(|b| b.abs()).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| vals[((vals.len() - 1) as f64 * p) as usize];
        println!(
            "epoch {epochs} hidden layer {}: |bias| min {:.3} p25 {:.3} median {:.3} p75 {:.3} max {:.3}",
            l + 1,
            vals[0],
            q(0.25),
            q(0.5),
            q(0.75),
            vals[vals.len() - 1]
        );
    }
    Ok(())
}

fn anneal_debug() -> anyhow::Result<()> {
    let lambda: f64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(100.0);
    let t0: f64 = std::env::args().nth(3).map(|s| s.parse().unwrap()).unwrap_or(110.0);
    let tf: f64 = std::env::args().nth(4).map(|s| s.parse().unwrap()).unwrap_or(90.0);
    let sweeps: usize = std::env::args().nth(5).map(|s| s.parse().unwrap()).unwrap_or(40);
    let dir = PathBuf::from("data/fashion-mnist");
    let full = load_idx(
        &dir.join("train-images-idx3-ubyte.gz"),
        &dir.join("train-labels-idx1-ubyte.gz"),
        Split::Train,
    )?;
    let train_set = subsample(&full, 10_000, 7, true)?;
    let spec = NetworkSpec::new(vec![784, 100, 100, 10], DropoutMode::None, false, false)?;
    let config = TrainConfig {
        epoch_cap: 32,
        seed: 7,
        ..Default::default()
    };
    let out = train(&spec, &train_set, &config)?;
    let view = train_set.identity_view();
    let batch = view.batches(32).next().unwrap();
    let map = UnitIndexMap::new(vec![784, 100, 100], true)?;
    let mut icfg = IsingConfig::default();
    icfg.lambda = lambda;
    let instance = build_instance(&out.bank, &batch, &map, &icfg)?;
    let schedule = AnnealSchedule {
        initial_temp: t0,
        final_temp: tf,
        sweeps,
        restarts: 1,
        seed: 3,
    };
    let state = ising_dropout::ising::anneal(&instance, &schedule)?;
    let mut per_layer = [0usize; 3];
    for u in 0..state.len() {
        if !state.is_kept(u) {
            let l = if u < 784 { 0 } else if u < 884 { 1 } else { 2 };
            per_layer[l] += 1;
        }
    }
    println!(
        "lambda={lambda} T={t0}->{tf} sweeps={sweeps}: dropped per layer {:?}, energy {:.2}",
        per_layer,
        instance.energy(&state)?
    );
    Ok(())
}

fn main() -> anyhow::Result<()> {
    if std::env::args().nth(1).as_deref() == Some("stats") {
        return instance_stats();
    }
    if std::env::args().nth(1).as_deref() == Some("anneal-debug") {
        return anneal_debug();
    }
    let mut args = std::env::args().skip(1);
    let dataset: String = args.next().unwrap_or_else(|| "mnist".into());
    let lambda: f64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(4.0);
    let epochs: usize = args.next().map(|s| s.parse().unwrap()).unwrap_or(8);
    let n: usize = args.next().map(|s| s.parse().unwrap()).unwrap_or(10_000);
    let seed: u64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(7);
    let input_dropout: bool = args.next().map(|s| s.parse().unwrap()).unwrap_or(false);
    let mode_s: String = args.next().unwrap_or_else(|| "ising".into());
    let final_temp: f64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(0.01);
    let sweeps: usize = args.next().map(|s| s.parse().unwrap()).unwrap_or(200);
    let initial_temp: f64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(2.0);
    let restarts: usize = args.next().map(|s| s.parse().unwrap()).unwrap_or(2);
    let use_network_bias: bool = args.next().map(|s| s.parse().unwrap()).unwrap_or(false);
    let refresh: usize = args.next().map(|s| s.parse().unwrap()).unwrap_or(5);

    let dir = PathBuf::from(format!("data/{dataset}"));
    let full = load_idx(
        &dir.join("train-images-idx3-ubyte.gz"),
        &dir.join("train-labels-idx1-ubyte.gz"),
        Split::Train,
    )?;
    let test = load_idx(
        &dir.join("t10k-images-idx3-ubyte.gz"),
        &dir.join("t10k-labels-idx1-ubyte.gz"),
        Split::Test,
    )?;
    let train_set = if n < full.len() {
        subsample(&full, n, seed, true)?
    } else {
        full
    };

    let mode = match mode_s.as_str() {
        "none" => DropoutMode::None,
        "random" => DropoutMode::Random { p: 0.5 },
        _ => DropoutMode::Ising,
    };
    let spec = NetworkSpec::new(vec![784, 100, 100, 10], mode, input_dropout, true)?;
    let mut config = TrainConfig {
        epoch_cap: epochs,
        mask_refresh_every: refresh,
        seed,
        anneal: AnnealSchedule {
            sweeps,
            restarts,
            final_temp,
            initial_temp,
            ..Default::default()
        },
        ..Default::default()
    };
    config.ising.lambda = lambda;
    if use_network_bias {
        config.ising.field_mode = ising_dropout::ising::FieldMode::NetworkBias;
    }

    let t0 = Instant::now();
    let out = train(&spec, &train_set, &config)?;
    let train_secs = t0.elapsed().as_secs_f64();
    let masked = evaluate(&out.bank, BankChoice::Merged, Some(&out.final_mask), &test)?;
    let unmasked = evaluate(&out.bank, BankChoice::Merged, None, &test)?;

    println!(
        "dataset={dataset} mode={mode_s} lambda={lambda} epochs={epochs} n={n} seed={seed} input={input_dropout}"
    );
    println!(
        "rates={:?} final_dropped={:?}",
        out.metrics
            .per_layer_drop_pct
            .iter()
            .map(|p| format!("{p:.1}"))
            .collect::<Vec<_>>(),
        out.metrics.final_mask_dropped
    );
    println!(
        "masked={:.2}% unmasked={:.2}% train_secs={train_secs:.1} epochs_run={} early={}",
        100.0 * masked,
        100.0 * unmasked,
        out.metrics.epochs_run,
        out.metrics.early_stopped
    );
    Ok(())
}
