//! Ising-energy formulation of adaptive dropout.
//!
//! Mini-batch activation statistics are mapped through a Gaussian cost
//! (high cost for saturated sigmoid activations) onto couplings between
//! connected units of the input and hidden layers. Minimizing the
//! resulting binary energy picks the units to drop; a single-flip
//! Metropolis annealer stands in for dedicated annealing hardware, and an
//! exhaustive enumerator serves as the optimality oracle for small
//! instances.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::math::{matmul, sigmoid, DenseMatrix};
use crate::mlp::{NetworkSpec, WeightBank};

/// Parameters of the Gaussian cost map: the center of the non-saturated
/// band and its variance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct CostMapParams {
    pub mu: f64,
    pub sigma2: f64,
}

impl Default for CostMapParams {
    fn default() -> Self {
        CostMapParams {
            mu: 0.5,
            sigma2: 0.01,
        }
    }
}

impl CostMapParams {
    pub fn validate(&self) -> Result<()> {
        if self.sigma2 <= 0.0 {
            return Err(Error::Input(format!(
                "cost map variance must be positive, got {}",
                self.sigma2
            )));
        }
        Ok(())
    }
}

/// Cost of one connection's mean activation: `1 - exp(-(h-mu)^2 / (2 sigma2))`.
///
/// Zero at `h = mu`, approaching 1 in the saturated regions near 0 and 1.
pub fn gaussian_cost(h_hat: f64, params: &CostMapParams) -> f64 {
    let d = h_hat - params.mu;
    1.0 - (-(d * d) / (2.0 * params.sigma2)).exp()
}

/// Mean-then-sigmoid statistic of one connection over a mini-batch:
/// `sigmoid(mean(prev_activations) * weight)`.
pub fn batch_mean_activation(prev_activations: &[f64], weight: f64) -> Result<f64> {
    if prev_activations.is_empty() {
        return Err(Error::Input("empty mini-batch".into()));
    }
    let mean = prev_activations.iter().sum::<f64>() / prev_activations.len() as f64;
    Ok(sigmoid(mean * weight))
}

/// One dense sigmoid layer: `sigmoid(prev * weights + biases)` elementwise.
///
/// `weights` is oriented source-by-destination, matching the network's
/// forward pass bit for bit.
pub fn layer_activation(prev: &[f64], weights: &DenseMatrix, biases: &[f64]) -> Result<Vec<f64>> {
    if prev.len() != weights.rows() || biases.len() != weights.cols() {
        return Err(Error::Dimension(format!(
            "layer_activation: input {} x weights {}x{} x biases {}",
            prev.len(),
            weights.rows(),
            weights.cols(),
            biases.len()
        )));
    }
    let x = DenseMatrix::from_vec(1, prev.len(), prev.to_vec())?;
    let z = matmul(&x, weights)?;
    Ok(z.row(0)
        .iter()
        .zip(biases)
        .map(|(&a, &b)| sigmoid(a + b))
        .collect())
}

/// Bijective map between global unit indices and `(layer, in-layer index)`
/// positions over the input and hidden layers. Output units are not part
/// of the index space and therefore can never be dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitIndexMap {
    layer_sizes: Vec<usize>,
    offsets: Vec<usize>,
    input_candidates: bool,
}

impl UnitIndexMap {
    /// `layer_sizes` lists the input layer followed by every hidden layer.
    pub fn new(layer_sizes: Vec<usize>, input_candidates: bool) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Input(
                "unit index map needs an input layer and at least one hidden layer".into(),
            ));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Input("zero-sized layer".into()));
        }
        let mut offsets = Vec::with_capacity(layer_sizes.len() + 1);
        let mut acc = 0;
        for &s in &layer_sizes {
            offsets.push(acc);
            acc += s;
        }
        offsets.push(acc);
        Ok(UnitIndexMap {
            layer_sizes,
            offsets,
            input_candidates,
        })
    }

    /// Index map for a network: input plus hidden layers, candidacy of the
    /// input layer taken from the spec's input-dropout flag.
    pub fn from_network(spec: &NetworkSpec) -> Self {
        let mut sizes = vec![spec.input_size()];
        sizes.extend_from_slice(spec.hidden_sizes());
        UnitIndexMap::new(sizes, spec.input_dropout).expect("validated network spec")
    }

    pub fn unit_count(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Number of unit layers covered (input + hidden).
    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layer_size(&self, layer: usize) -> usize {
        self.layer_sizes[layer]
    }

    pub fn input_candidates(&self) -> bool {
        self.input_candidates
    }

    /// Global index of unit `i` of `layer`.
    pub fn global(&self, layer: usize, i: usize) -> usize {
        debug_assert!(i < self.layer_sizes[layer]);
        self.offsets[layer] + i
    }

    /// Inverse of [`global`](Self::global): `(layer, in-layer index)`.
    pub fn locate(&self, unit: usize) -> (usize, usize) {
        debug_assert!(unit < self.unit_count());
        let layer = match self.offsets.binary_search(&unit) {
            Ok(l) if l < self.layer_sizes.len() => l,
            Ok(l) => l - 1,
            Err(l) => l - 1,
        };
        (layer, unit - self.offsets[layer])
    }

    /// Whether the unit may be dropped: hidden units always, input units
    /// only when input-layer dropout is enabled.
    pub fn is_candidate(&self, unit: usize) -> bool {
        if self.input_candidates {
            true
        } else {
            unit >= self.offsets[1]
        }
    }

    pub fn candidates(&self) -> Vec<usize> {
        (0..self.unit_count()).filter(|&u| self.is_candidate(u)).collect()
    }
}

/// Orientation of the pairwise term in the energy.
///
/// * `PenalizeCouplings` (default): `E(s) = +sum gamma s_u s_v - lambda * sum b_u s_u`.
///   High-cost (saturated) connections raise the energy of kept pairs, so
///   the minimizer drops them; the lambda-weighted field is a keep-reward
///   that prevents the all-zeros solution.
/// * `RewardCouplings`: `E(s) = -sum gamma s_u s_v - sum b_u s_u` (lambda
///   unused). With nonnegative gamma this is minimized by keeping every
///   unit; it is kept available for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    #[default]
    PenalizeCouplings,
    RewardCouplings,
}

/// Source of the per-unit linear field `b_u`.
///
/// * `UniformKeepReward` (default): `b_u = 1` for every candidate unit.
/// * `NetworkBias`: `b_u = |bias|` of the unit in the trained network.
///   Input units carry no bias of their own and use the mean bias
///   magnitude of the first hidden layer, keeping their reward on the
///   same scale as the rest of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FieldMode {
    #[default]
    UniformKeepReward,
    NetworkBias,
}

/// Everything needed to turn activation statistics into an energy.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IsingConfig {
    pub convention: SignConvention,
    pub lambda: f64,
    pub field_mode: FieldMode,
    pub cost_map: CostMapParams,
}

impl Default for IsingConfig {
    fn default() -> Self {
        IsingConfig {
            convention: SignConvention::default(),
            lambda: 0.1,
            field_mode: FieldMode::default(),
            cost_map: CostMapParams::default(),
        }
    }
}

/// Binary drop decisions, one per unit; 1 means kept, 0 means dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateVector {
    bits: Vec<u8>,
}

impl StateVector {
    /// The initial state: every unit kept.
    pub fn all_ones(unit_count: usize) -> Self {
        StateVector {
            bits: vec![1; unit_count],
        }
    }

    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Input("state bits must be 0 or 1".into()));
        }
        Ok(StateVector { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn is_kept(&self, unit: usize) -> bool {
        self.bits[unit] == 1
    }

    pub fn set(&mut self, unit: usize, kept: bool) {
        self.bits[unit] = kept as u8;
    }

    pub fn kept_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    pub fn dropped_count(&self) -> usize {
        self.len() - self.kept_count()
    }
}

/// A sparse pairwise energy over the unit graph.
///
/// Couplings exist only between connected units of consecutive layers;
/// every other pair is implicitly zero.
#[derive(Debug, Clone)]
pub struct IsingInstance {
    index_map: UnitIndexMap,
    /// One entry per connection, `(u, v, gamma)` with `u` in the earlier layer.
    edges: Vec<(u32, u32, f64)>,
    /// Adjacency mirror of `edges` for O(degree) flip deltas.
    neighbors: Vec<Vec<(u32, f64)>>,
    fields: Vec<f64>,
    convention: SignConvention,
    lambda: f64,
}

impl IsingInstance {
    /// Builds an instance from explicit parts. Every edge must connect
    /// consecutive layers and carry a coupling in `[0,1]`.
    pub fn new(
        index_map: UnitIndexMap,
        edges: Vec<(u32, u32, f64)>,
        fields: Vec<f64>,
        convention: SignConvention,
        lambda: f64,
    ) -> Result<Self> {
        let n = index_map.unit_count();
        if fields.len() != n {
            return Err(Error::Dimension(format!(
                "{} fields for {} units",
                fields.len(),
                n
            )));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(u, v, gamma) in &edges {
            let (u, v) = (u as usize, v as usize);
            if u >= n || v >= n {
                return Err(Error::Input(format!("edge ({u},{v}) out of range")));
            }
            let (lu, _) = index_map.locate(u);
            let (lv, _) = index_map.locate(v);
            if lv != lu + 1 {
                return Err(Error::Input(format!(
                    "edge ({u},{v}) does not connect consecutive layers ({lu} -> {lv})"
                )));
            }
            if !(0.0..=1.0).contains(&gamma) {
                return Err(Error::Input(format!("coupling {gamma} outside [0,1]")));
            }
            neighbors[u].push((v as u32, gamma));
            neighbors[v].push((u as u32, gamma));
        }
        Ok(IsingInstance {
            index_map,
            edges,
            neighbors,
            fields,
            convention,
            lambda,
        })
    }

    pub fn unit_count(&self) -> usize {
        self.index_map.unit_count()
    }

    pub fn index_map(&self) -> &UnitIndexMap {
        &self.index_map
    }

    pub fn edges(&self) -> &[(u32, u32, f64)] {
        &self.edges
    }

    pub fn field(&self, unit: usize) -> f64 {
        self.fields[unit]
    }

    pub fn convention(&self) -> SignConvention {
        self.convention
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Energy of a state under the configured sign convention.
    pub fn energy(&self, s: &StateVector) -> Result<f64> {
        if s.len() != self.unit_count() {
            return Err(Error::Input(format!(
                "state of length {} for {} units",
                s.len(),
                self.unit_count()
            )));
        }
        let bits = s.bits();
        let mut coupling = 0.0;
        for &(u, v, gamma) in &self.edges {
            if bits[u as usize] == 1 && bits[v as usize] == 1 {
                coupling += gamma;
            }
        }
        let mut field = 0.0;
        for (b, &bit) in self.fields.iter().zip(bits) {
            if bit == 1 {
                field += b;
            }
        }
        Ok(match self.convention {
            SignConvention::PenalizeCouplings => coupling - self.lambda * field,
            SignConvention::RewardCouplings => -coupling - field,
        })
    }

    /// Energy change of flipping one unit, given the current state.
    fn flip_delta(&self, bits: &[u8], unit: usize) -> f64 {
        let delta = if bits[unit] == 1 { -1.0 } else { 1.0 };
        let mut coupled = 0.0;
        for &(v, gamma) in &self.neighbors[unit] {
            if bits[v as usize] == 1 {
                coupled += gamma;
            }
        }
        match self.convention {
            SignConvention::PenalizeCouplings => {
                delta * (coupled - self.lambda * self.fields[unit])
            }
            SignConvention::RewardCouplings => -delta * (coupled + self.fields[unit]),
        }
    }

    /// Writes the instance as plain text for offline inspection:
    /// a header, then one `field` line per nonzero field and one
    /// `coupling` line per connection.
    pub fn dump_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "ising-instance v1")?;
        writeln!(w, "units {}", self.unit_count())?;
        let sizes: Vec<String> = self
            .index_map
            .layer_sizes
            .iter()
            .map(|s| s.to_string())
            .collect();
        writeln!(w, "layers {}", sizes.join(" "))?;
        writeln!(
            w,
            "convention {} lambda {}",
            match self.convention {
                SignConvention::PenalizeCouplings => "penalize_couplings",
                SignConvention::RewardCouplings => "reward_couplings",
            },
            self.lambda
        )?;
        for (u, b) in self.fields.iter().enumerate() {
            if *b != 0.0 {
                writeln!(w, "field {u} {b}")?;
            }
        }
        for &(u, v, gamma) in &self.edges {
            writeln!(w, "coupling {u} {v} {gamma}")?;
        }
        Ok(())
    }
}

/// Builds the Ising instance for the current network from the merged
/// weight bank and one mini-batch.
///
/// Activations are computed with the merged weights and no mask; the mean
/// activation of each source unit over the batch feeds the per-connection
/// statistic, which the Gaussian cost turns into the coupling.
pub fn build_instance(
    bank: &WeightBank,
    batch: &Batch<'_>,
    map: &UnitIndexMap,
    config: &IsingConfig,
) -> Result<IsingInstance> {
    if batch.is_empty() {
        return Err(Error::Input("empty mini-batch".into()));
    }
    config.cost_map.validate()?;
    let unit_layers = map.num_layers();
    if bank.layer_sizes()[..unit_layers] != *map.layer_sizes() {
        return Err(Error::Dimension(
            "weight bank layers do not match the unit index map".into(),
        ));
    }
    if batch.images.iter().any(|x| x.len() != map.layer_size(0)) {
        return Err(Error::Dimension("batch width != input layer size".into()));
    }

    // Unmasked forward through the merged weights, batched; then the
    // per-unit batch means of every source layer.
    let q = batch.len();
    let mut flat = Vec::with_capacity(q * map.layer_size(0));
    for img in &batch.images {
        flat.extend_from_slice(img);
    }
    let mut acts = DenseMatrix::from_vec(q, map.layer_size(0), flat)?;
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(unit_layers);
    means.push(column_means(&acts));
    for l in 0..unit_layers - 1 {
        let z = matmul(&acts, bank.merged_weights(l))?;
        let biases = bank.merged_biases(l);
        let mut next = z;
        for r in 0..next.rows() {
            let row = next.row_mut(r);
            for (a, &b) in row.iter_mut().zip(biases) {
                *a = sigmoid(*a + b);
            }
        }
        acts = next;
        means.push(column_means(&acts));
    }

    let mut edges = Vec::new();
    for l in 0..unit_layers - 1 {
        let w = bank.merged_weights(l);
        let src_means = &means[l];
        for i in 0..map.layer_size(l) {
            let u = map.global(l, i) as u32;
            let m = src_means[i];
            for j in 0..map.layer_size(l + 1) {
                let v = map.global(l + 1, j) as u32;
                let h_hat = sigmoid(m * w.get(i, j));
                edges.push((u, v, gaussian_cost(h_hat, &config.cost_map)));
            }
        }
    }

    let input_field = match config.field_mode {
        FieldMode::UniformKeepReward => 1.0,
        FieldMode::NetworkBias => {
            let first = bank.merged_biases(0);
            first.iter().map(|b| b.abs()).sum::<f64>() / first.len() as f64
        }
    };
    let mut fields = vec![0.0; map.unit_count()];
    for u in 0..map.unit_count() {
        if !map.is_candidate(u) {
            continue;
        }
        fields[u] = match config.field_mode {
            FieldMode::UniformKeepReward => 1.0,
            FieldMode::NetworkBias => {
                let (layer, i) = map.locate(u);
                if layer == 0 {
                    input_field
                } else {
                    bank.merged_biases(layer - 1)[i].abs()
                }
            }
        };
    }

    IsingInstance::new(map.clone(), edges, fields, config.convention, config.lambda)
}

fn column_means(m: &DenseMatrix) -> Vec<f64> {
    let mut sums = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (s, &v) in sums.iter_mut().zip(m.row(r)) {
            *s += v;
        }
    }
    let q = m.rows() as f64;
    sums.iter_mut().for_each(|s| *s /= q);
    sums
}

/// Annealer settings: geometric temperature decay from `initial_temp`
/// to `final_temp` over `sweeps` sweeps, repeated `restarts` times with
/// independent generators derived from `(seed, restart index)`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AnnealSchedule {
    pub initial_temp: f64,
    pub final_temp: f64,
    pub sweeps: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            initial_temp: 2.0,
            final_temp: 0.01,
            sweeps: 1000,
            restarts: 8,
            seed: 0,
        }
    }
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_temp > self.final_temp && self.final_temp > 0.0) {
            return Err(Error::Input(format!(
                "temperatures must satisfy initial > final > 0, got {} / {}",
                self.initial_temp, self.final_temp
            )));
        }
        if self.sweeps < 1 || self.restarts < 1 {
            return Err(Error::Input("sweeps and restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Minimizes the instance energy by single-flip Metropolis over the
/// candidate bits.
///
/// Non-candidate bits stay fixed at 1. Every restart starts from the
/// all-ones state and runs its own generator, so the result is identical
/// regardless of how restarts are scheduled across threads. Returns the
/// lowest-energy state seen; with no strict improvement anywhere the
/// all-ones start wins ties.
pub fn anneal(instance: &IsingInstance, schedule: &AnnealSchedule) -> Result<StateVector> {
    schedule.validate()?;
    let candidates = instance.index_map.candidates();
    let start = StateVector::all_ones(instance.unit_count());
    if candidates.is_empty() {
        return Ok(start);
    }
    let start_energy = instance.energy(&start)?;

    let run_restart = |restart: usize| -> (f64, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
        rng.set_stream(restart as u64 + 1);
        let mut bits = start.bits().to_vec();
        let mut best_bits = bits.clone();
        let mut current = start_energy;
        let mut best = start_energy;
        let ratio = schedule.final_temp / schedule.initial_temp;
        for sweep in 0..schedule.sweeps {
            let temp = schedule.initial_temp
                * ratio.powf(sweep as f64 / schedule.sweeps as f64);
            for _ in 0..candidates.len() {
                let unit = candidates[rng.gen_range(0..candidates.len())];
                let delta = instance.flip_delta(&bits, unit);
                let accept = delta <= 0.0 || rng.gen::<f64>() < (-delta / temp).exp();
                if accept {
                    bits[unit] ^= 1;
                    current += delta;
                    if current < best {
                        best = current;
                        best_bits.copy_from_slice(&bits);
                    }
                }
            }
        }
        // The running energy accumulates rounding; rescore the recorded
        // best and the final state exactly before comparing restarts.
        let best_state = StateVector { bits: best_bits };
        let final_state = StateVector { bits };
        let e_best = instance.energy(&best_state).expect("validated length");
        let e_final = instance.energy(&final_state).expect("validated length");
        if e_final < e_best {
            (e_final, final_state.bits)
        } else {
            (e_best, best_state.bits)
        }
    };

    let results: Vec<(f64, Vec<u8>)> = (0..schedule.restarts)
        .into_par_iter()
        .map(run_restart)
        .collect();

    let mut winner = (start_energy, start.bits().to_vec());
    for r in results {
        if r.0 < winner.0 {
            winner = r;
        }
    }
    Ok(StateVector { bits: winner.1 })
}

/// Hard cap on exhaustive enumeration.
pub const BRUTE_FORCE_MAX_BITS: usize = 24;

/// Exhaustive minimum over all assignments of the candidate bits.
///
/// Ties go to the state keeping more units, then to the lexicographically
/// smallest bit vector. Usable as an oracle up to
/// [`BRUTE_FORCE_MAX_BITS`] candidates.
pub fn brute_force_min(instance: &IsingInstance) -> Result<(StateVector, f64)> {
    let candidates = instance.index_map.candidates();
    if candidates.len() > BRUTE_FORCE_MAX_BITS {
        return Err(Error::Capacity(format!(
            "{} candidate bits exceed the exhaustive limit of {BRUTE_FORCE_MAX_BITS}",
            candidates.len()
        )));
    }
    let mut best: Option<(f64, StateVector)> = None;
    for assignment in 0u64..(1u64 << candidates.len()) {
        let mut state = StateVector::all_ones(instance.unit_count());
        for (bit, &unit) in candidates.iter().enumerate() {
            state.set(unit, (assignment >> bit) & 1 == 1);
        }
        let energy = instance.energy(&state)?;
        let better = match &best {
            None => true,
            Some((e, s)) => {
                energy < *e
                    || (energy == *e
                        && (state.kept_count() > s.kept_count()
                            || (state.kept_count() == s.kept_count()
                                && state.bits() < s.bits())))
            }
        };
        if better {
            best = Some((energy, state));
        }
    }
    let (energy, state) = best.expect("at least one assignment");
    Ok((state, energy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny_map(sizes: &[usize], input_candidates: bool) -> UnitIndexMap {
        UnitIndexMap::new(sizes.to_vec(), input_candidates).unwrap()
    }

    #[test]
    fn gaussian_cost_anchors() {
        let p = CostMapParams::default();
        assert_eq!(gaussian_cost(0.5, &p), 0.0);
        let expected = 1.0 - (-12.5f64).exp();
        assert!((gaussian_cost(0.0, &p) - expected).abs() < 1e-12);
        assert!(gaussian_cost(0.0, &p) > 0.9999);
        assert_eq!(gaussian_cost(0.4, &p), gaussian_cost(0.6, &p));
    }

    #[test]
    fn gaussian_cost_monotone_in_distance() {
        let p = CostMapParams::default();
        let mut last = 0.0;
        for k in 0..=50 {
            let d = k as f64 / 100.0;
            let c = gaussian_cost(0.5 + d, &p);
            assert!(c >= last);
            assert!((0.0..1.0).contains(&c));
            last = c;
        }
    }

    proptest! {
        #[test]
        fn gaussian_cost_symmetric(d in 0.0f64..0.5) {
            let p = CostMapParams::default();
            let a = gaussian_cost(0.5 + d, &p);
            let b = gaussian_cost(0.5 - d, &p);
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_mean_activation_cases() {
        assert_eq!(batch_mean_activation(&[0.3, 0.9, 0.1], 0.0).unwrap(), 0.5);
        let v = batch_mean_activation(&[1.0], 2.0).unwrap();
        assert!((v - sigmoid(2.0)).abs() < 1e-15);
        assert!((v - 0.880797).abs() < 1e-6);
        // Scaling activations by c and the weight by 1/c leaves the
        // product statistic unchanged.
        let a = batch_mean_activation(&[0.2, 0.4, 0.8], 1.7).unwrap();
        let scaled: Vec<f64> = [0.2, 0.4, 0.8].iter().map(|h| h * 4.0).collect();
        let b = batch_mean_activation(&scaled, 1.7 / 4.0).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(matches!(
            batch_mean_activation(&[], 1.0),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn layer_activation_cases() {
        let w = DenseMatrix::zeros(3, 2);
        let out = layer_activation(&[0.1, 0.2, 0.3], &w, &[0.0, 0.0]).unwrap();
        assert_eq!(out, vec![0.5, 0.5]);

        let w = DenseMatrix::from_rows(&[vec![1.0]]).unwrap();
        let out = layer_activation(&[1.0], &w, &[-1.0]).unwrap();
        assert_eq!(out, vec![0.5]);

        let w = DenseMatrix::zeros(3, 2);
        assert!(layer_activation(&[0.1, 0.2], &w, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn index_map_round_trips() {
        let map = tiny_map(&[5, 3, 2], true);
        assert_eq!(map.unit_count(), 10);
        for u in 0..map.unit_count() {
            let (l, i) = map.locate(u);
            assert_eq!(map.global(l, i), u);
        }
        assert_eq!(map.locate(0), (0, 0));
        assert_eq!(map.locate(4), (0, 4));
        assert_eq!(map.locate(5), (1, 0));
        assert_eq!(map.locate(9), (2, 1));
    }

    #[test]
    fn candidacy_respects_input_flag() {
        let with_input = tiny_map(&[4, 2], true);
        assert_eq!(with_input.candidates().len(), 6);
        let hidden_only = tiny_map(&[4, 2], false);
        assert_eq!(hidden_only.candidates(), vec![4, 5]);
        assert!(!hidden_only.is_candidate(0));
    }

    fn instance_from(
        sizes: &[usize],
        input_candidates: bool,
        edges: Vec<(u32, u32, f64)>,
        field: f64,
        convention: SignConvention,
        lambda: f64,
    ) -> IsingInstance {
        let map = tiny_map(sizes, input_candidates);
        let fields = (0..map.unit_count())
            .map(|u| if map.is_candidate(u) { field } else { 0.0 })
            .collect();
        IsingInstance::new(map, edges, fields, convention, lambda).unwrap()
    }

    #[test]
    fn energy_empty_and_single_term() {
        let inst = instance_from(
            &[1, 1],
            true,
            vec![(0, 1, 0.8)],
            0.0,
            SignConvention::PenalizeCouplings,
            0.0,
        );
        let zeros = StateVector::from_bits(vec![0, 0]).unwrap();
        assert_eq!(inst.energy(&zeros).unwrap(), 0.0);
        let ones = StateVector::all_ones(2);
        assert_eq!(inst.energy(&ones).unwrap(), 0.8);
        let short = StateVector::from_bits(vec![1]).unwrap();
        assert!(inst.energy(&short).is_err());
    }

    #[test]
    fn energy_matches_independent_brute_evaluator() {
        // Independent oracle: dense gamma matrix plus field vector, energy
        // written out directly from the definition.
        let edges = vec![(0, 2, 0.7), (0, 3, 0.2), (1, 2, 0.9), (1, 3, 0.4)];
        let lambda = 0.25;
        for convention in [
            SignConvention::PenalizeCouplings,
            SignConvention::RewardCouplings,
        ] {
            let inst = instance_from(&[2, 2], true, edges.clone(), 1.0, convention, lambda);
            let mut dense = [[0.0f64; 4]; 4];
            for &(u, v, g) in &edges {
                dense[u as usize][v as usize] = g;
            }
            for assignment in 0u8..16 {
                let bits: Vec<u8> = (0..4).map(|b| (assignment >> b) & 1).collect();
                let mut coupling = 0.0;
                for u in 0..4 {
                    for v in 0..4 {
                        coupling += dense[u][v] * bits[u] as f64 * bits[v] as f64;
                    }
                }
                let field: f64 = bits.iter().map(|&b| b as f64).sum();
                let expected = match convention {
                    SignConvention::PenalizeCouplings => coupling - lambda * field,
                    SignConvention::RewardCouplings => -coupling - field,
                };
                let state = StateVector::from_bits(bits).unwrap();
                assert!((inst.energy(&state).unwrap() - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn instance_rejects_bad_edges() {
        let map = tiny_map(&[2, 2, 2], true);
        let fields = vec![0.0; 6];
        // Non-consecutive layers.
        assert!(IsingInstance::new(
            map.clone(),
            vec![(0, 4, 0.5)],
            fields.clone(),
            SignConvention::PenalizeCouplings,
            0.1,
        )
        .is_err());
        // Coupling out of range.
        assert!(IsingInstance::new(
            map,
            vec![(0, 2, 1.5)],
            fields,
            SignConvention::PenalizeCouplings,
            0.1,
        )
        .is_err());
    }

    #[test]
    fn sign_convention_contrast() {
        // With lambda = 0 and all-positive couplings, the default
        // convention reaches the all-zeros energy of 0 (the tie-break
        // then keeps whatever units it can for free); the reward form
        // uniquely keeps every unit.
        let edges = vec![(0, 1, 0.9), (0, 2, 0.3)];
        let inst = instance_from(
            &[1, 2],
            true,
            edges.clone(),
            1.0,
            SignConvention::PenalizeCouplings,
            0.0,
        );
        let (state, energy) = brute_force_min(&inst).unwrap();
        let all_zeros = StateVector::from_bits(vec![0, 0, 0]).unwrap();
        assert_eq!(energy, inst.energy(&all_zeros).unwrap());
        assert_eq!(energy, 0.0);
        // Dropping the shared endpoint clears both edges at zero cost.
        assert_eq!(state.bits(), &[0, 1, 1]);

        let inst = instance_from(
            &[1, 2],
            true,
            edges,
            1.0,
            SignConvention::RewardCouplings,
            0.0,
        );
        let (state, _) = brute_force_min(&inst).unwrap();
        assert_eq!(state.kept_count(), 3, "reward form keeps every unit");
    }

    #[test]
    fn brute_force_tie_breaks() {
        // No couplings, no fields: all states tie at zero; keep wins.
        let inst = instance_from(
            &[1, 1],
            false,
            vec![],
            0.0,
            SignConvention::PenalizeCouplings,
            0.0,
        );
        let (state, energy) = brute_force_min(&inst).unwrap();
        assert_eq!(energy, 0.0);
        assert_eq!(state.bits(), &[1, 1]);

        // A strong coupling with a small keep-reward: drop at least one.
        let inst = instance_from(
            &[1, 1],
            true,
            vec![(0, 1, 0.9)],
            1.0,
            SignConvention::PenalizeCouplings,
            0.1,
        );
        let (state, _) = brute_force_min(&inst).unwrap();
        assert!(state.dropped_count() >= 1);
    }

    #[test]
    fn brute_force_capacity_error() {
        let inst = instance_from(
            &[20, 20],
            true,
            vec![],
            0.0,
            SignConvention::PenalizeCouplings,
            0.0,
        );
        assert!(matches!(
            brute_force_min(&inst),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn anneal_flat_landscape_returns_all_ones() {
        let inst = instance_from(
            &[2, 2],
            true,
            vec![],
            0.0,
            SignConvention::PenalizeCouplings,
            0.0,
        );
        let schedule = AnnealSchedule {
            sweeps: 50,
            restarts: 2,
            ..Default::default()
        };
        let state = anneal(&inst, &schedule).unwrap();
        assert_eq!(state.bits(), &[1, 1, 1, 1]);
        assert_eq!(inst.energy(&state).unwrap(), 0.0);
    }

    #[test]
    fn anneal_is_deterministic_and_fixes_non_candidates() {
        let inst = random_instance(99, &[3, 4, 2], false, 0.1);
        let schedule = AnnealSchedule {
            sweeps: 200,
            restarts: 4,
            seed: 5,
            ..Default::default()
        };
        let a = anneal(&inst, &schedule).unwrap();
        let b = anneal(&inst, &schedule).unwrap();
        assert_eq!(a, b);
        for u in 0..3 {
            assert!(a.is_kept(u), "input unit {u} must stay kept");
        }
    }

    fn random_instance(
        seed: u64,
        sizes: &[usize],
        input_candidates: bool,
        lambda: f64,
    ) -> IsingInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = tiny_map(sizes, input_candidates);
        let mut edges = Vec::new();
        for l in 0..map.num_layers() - 1 {
            for i in 0..map.layer_size(l) {
                for j in 0..map.layer_size(l + 1) {
                    if rng.gen::<f64>() < 0.7 {
                        edges.push((
                            map.global(l, i) as u32,
                            map.global(l + 1, j) as u32,
                            rng.gen::<f64>(),
                        ));
                    }
                }
            }
        }
        let fields = (0..map.unit_count())
            .map(|u| if map.is_candidate(u) { 1.0 } else { 0.0 })
            .collect();
        IsingInstance::new(map, edges, fields, SignConvention::PenalizeCouplings, lambda).unwrap()
    }

    #[test]
    fn anneal_matches_brute_force_on_small_instances() {
        let mut hits = 0;
        let trials = 30;
        for t in 0..trials {
            let lambda = [0.0, 0.1, 0.5][t % 3];
            let inst = random_instance(1000 + t as u64, &[5, 6, 5], true, lambda);
            let schedule = AnnealSchedule {
                sweeps: 500,
                restarts: 8,
                seed: t as u64,
                ..Default::default()
            };
            let state = anneal(&inst, &schedule).unwrap();
            let e = inst.energy(&state).unwrap();
            let (_, best) = brute_force_min(&inst).unwrap();
            assert!(e >= best - 1e-9, "annealer beat the exhaustive oracle");
            if (e - best).abs() <= 1e-9 {
                hits += 1;
            }
        }
        assert!(
            hits * 100 >= trials * 95,
            "only {hits}/{trials} reached the optimum"
        );
    }

    #[test]
    fn anneal_never_worse_than_start() {
        for t in 0..10 {
            let inst = random_instance(7 + t, &[4, 4], true, 0.3);
            let schedule = AnnealSchedule {
                sweeps: 30,
                restarts: 1,
                seed: t,
                ..Default::default()
            };
            let state = anneal(&inst, &schedule).unwrap();
            let all_ones = StateVector::all_ones(inst.unit_count());
            assert!(
                inst.energy(&state).unwrap() <= inst.energy(&all_ones).unwrap() + 1e-12
            );
        }
    }

    #[test]
    fn dump_text_format() {
        let inst = instance_from(
            &[1, 1],
            true,
            vec![(0, 1, 0.25)],
            1.0,
            SignConvention::PenalizeCouplings,
            0.1,
        );
        let mut buf = Vec::new();
        inst.dump_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("ising-instance v1\nunits 2\nlayers 1 1\n"));
        assert!(text.contains("coupling 0 1 0.25"));
        assert!(text.contains("field 0 1"));
    }
}
