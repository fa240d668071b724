//! The Gaussian cost map: how a connection's mean activation turns into
//! an energy coupling.
//!
//! ```bash
//! cargo run --example cost_map
//! ```

use ising_dropout::ising::{gaussian_cost, CostMapParams};

fn main() {
    let params = CostMapParams::default();
    println!("cost map with mu = {}, sigma^2 = {}", params.mu, params.sigma2);
    println!("{:>10}  {:>10}", "activation", "cost");
    for k in 0..=20 {
        let h = k as f64 / 20.0;
        let bar = "#".repeat((gaussian_cost(h, &params) * 40.0).round() as usize);
        println!("{h:>10.2}  {:>10.6}  {bar}", gaussian_cost(h, &params));
    }
    println!();
    println!("anchors:");
    println!("  cost(0.5) = {} (center of the non-saturated band)", gaussian_cost(0.5, &params));
    println!("  cost(0.0) = {:.8} (fully saturated low)", gaussian_cost(0.0, &params));
    println!("  cost(1.0) = {:.8} (fully saturated high)", gaussian_cost(1.0, &params));
}
