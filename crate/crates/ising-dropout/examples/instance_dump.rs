//! Building an Ising instance from a toy network's activation statistics
//! and dumping it as text.
//!
//! ```bash
//! cargo run --example instance_dump
//! ```

use ising_dropout::data::synthetic::gaussian_blobs;
use ising_dropout::ising::{build_instance, IsingConfig, UnitIndexMap};
use ising_dropout::mlp::{init_weights, DropoutMode, NetworkSpec};

fn main() -> anyhow::Result<()> {
    let spec = NetworkSpec::new(vec![4, 3, 2], DropoutMode::Ising, true, false)?;
    let bank = init_weights(&spec, 7);
    let data = gaussian_blobs(32, 4, 2, 0.15, 3);
    let view = data.identity_view();
    let batch = view.batches(32).next().expect("non-empty");

    let map = UnitIndexMap::from_network(&spec);
    let instance = build_instance(&bank, &batch, &map, &IsingConfig::default())?;

    let mut out = Vec::new();
    instance.dump_text(&mut out)?;
    print!("{}", String::from_utf8(out)?);
    Ok(())
}
