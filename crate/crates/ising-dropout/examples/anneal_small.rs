//! Annealing a small hand-built instance and checking it against the
//! exhaustive oracle.
//!
//! ```bash
//! cargo run --example anneal_small
//! ```

use ising_dropout::ising::{
    anneal, brute_force_min, AnnealSchedule, IsingInstance, SignConvention, UnitIndexMap,
};

fn main() -> anyhow::Result<()> {
    // A 3-4-3 unit graph (input layer included as candidates) with a few
    // strong couplings that should be worth dropping.
    let map = UnitIndexMap::new(vec![3, 4, 3], true)?;
    let mut edges = Vec::new();
    for i in 0..3u32 {
        for j in 0..4u32 {
            let gamma = if (i + j) % 3 == 0 { 0.9 } else { 0.05 };
            edges.push((i, 3 + j, gamma));
        }
    }
    for j in 0..4u32 {
        for k in 0..3u32 {
            let gamma = if j == k { 0.8 } else { 0.1 };
            edges.push((3 + j, 7 + k, gamma));
        }
    }
    let fields = vec![1.0; map.unit_count()];
    let instance = IsingInstance::new(map, edges, fields, SignConvention::PenalizeCouplings, 0.2)?;

    let schedule = AnnealSchedule {
        restarts: 16,
        seed: 42,
        ..Default::default()
    };
    let annealed = anneal(&instance, &schedule)?;
    let annealed_energy = instance.energy(&annealed)?;
    let (optimal, optimal_energy) = brute_force_min(&instance)?;

    println!("annealed state: {:?}", annealed.bits());
    println!("annealed energy: {annealed_energy:.6}");
    println!("exhaustive optimum: {:?}", optimal.bits());
    println!("exhaustive energy: {optimal_energy:.6}");
    println!(
        "annealer {} the global optimum ({} of {} units dropped)",
        if (annealed_energy - optimal_energy).abs() <= 1e-9 {
            "reached"
        } else {
            "missed"
        },
        annealed.dropped_count(),
        annealed.len()
    );
    Ok(())
}
