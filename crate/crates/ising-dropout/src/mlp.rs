//! The MLP network: masked forward/backward passes and the training
//! driver with mask-merged weight banks.
//!
//! Two weight sets travel together through training: the working copy `W`
//! that backpropagation updates under the current mask, and the persistent
//! merged copy `W*` that after every step holds the latest trained value
//! of every weight (`W* = W x M + W* x NOT(M)`). Mask decisions come from
//! the configured dropout mode; the adaptive mode minimizes an Ising
//! energy built from the merged weights after each mini-batch.

use std::time::Instant;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{shuffle_epoch, Batch, DataSet};
use crate::error::{Error, Result};
use crate::ising::{anneal, build_instance, AnnealSchedule, IsingConfig, StateVector, UnitIndexMap};
use crate::math::{matmul, sigmoid, softmax_cross_entropy, AdamState, DenseMatrix};

/// How unit masks are chosen during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DropoutMode {
    /// No masking at all.
    None,
    /// Classic dropout: units dropped independently with probability `p`,
    /// resampled per mini-batch.
    Random { p: f64 },
    /// Adaptive: units dropped by minimizing the Ising energy of the
    /// merged network.
    Ising,
}

/// Architecture plus masking behavior of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    /// `[input, hidden..., output]`; at least one hidden layer.
    pub layer_sizes: Vec<usize>,
    pub dropout: DropoutMode,
    /// Whether input units are dropout candidates.
    pub input_dropout: bool,
    /// Whether the final mask is applied at test time.
    pub inference_masking: bool,
}

impl NetworkSpec {
    pub fn new(
        layer_sizes: Vec<usize>,
        dropout: DropoutMode,
        input_dropout: bool,
        inference_masking: bool,
    ) -> Result<Self> {
        if layer_sizes.len() < 3 {
            return Err(Error::Input(
                "network needs at least one hidden layer".into(),
            ));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Input("zero-sized layer".into()));
        }
        if *layer_sizes.last().unwrap() < 2 {
            return Err(Error::Input("output layer needs at least 2 classes".into()));
        }
        if let DropoutMode::Random { p } = dropout {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Input(format!("dropout probability {p} not in [0,1)")));
            }
        }
        Ok(NetworkSpec {
            layer_sizes,
            dropout,
            input_dropout,
            inference_masking,
        })
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.layer_sizes[1..self.layer_sizes.len() - 1]
    }

    pub fn num_hidden(&self) -> usize {
        self.layer_sizes.len() - 2
    }

    /// Number of weight layers, which equals the number of maskable unit
    /// layers (input plus hidden).
    pub fn num_weight_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }
}

/// Which weight set to run a forward pass on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BankChoice {
    /// The working copy `W`.
    Working,
    /// The persistent merged copy `W*`.
    Merged,
}

/// Working and merged weights, shape-identical throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBank {
    layer_sizes: Vec<usize>,
    weights: Vec<DenseMatrix>,
    biases: Vec<Vec<f64>>,
    merged_weights: Vec<DenseMatrix>,
    merged_biases: Vec<Vec<f64>>,
}

impl WeightBank {
    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn num_weight_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self, layer: usize) -> &DenseMatrix {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    /// Mutable access to the working weights, for direct editing in
    /// experiments and gradient probes.
    pub fn weights_mut(&mut self, layer: usize) -> &mut DenseMatrix {
        &mut self.weights[layer]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut Vec<f64> {
        &mut self.biases[layer]
    }

    pub fn merged_weights(&self, layer: usize) -> &DenseMatrix {
        &self.merged_weights[layer]
    }

    pub fn merged_biases(&self, layer: usize) -> &[f64] {
        &self.merged_biases[layer]
    }

    fn select(&self, choice: BankChoice, layer: usize) -> (&DenseMatrix, &[f64]) {
        match choice {
            BankChoice::Working => (&self.weights[layer], &self.biases[layer]),
            BankChoice::Merged => (&self.merged_weights[layer], &self.merged_biases[layer]),
        }
    }

    /// Overwrites the merged copy with the working copy (`W* = W`).
    pub fn snapshot_merged(&mut self) {
        self.merged_weights = self.weights.clone();
        self.merged_biases = self.biases.clone();
    }

    /// Builds a bank directly from matrices; used by the checkpoint
    /// loader and tests. Working and merged start identical.
    pub fn from_merged(
        layer_sizes: Vec<usize>,
        weights: Vec<DenseMatrix>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if weights.len() + 1 != layer_sizes.len() || biases.len() != weights.len() {
            return Err(Error::Dimension("bank layer count mismatch".into()));
        }
        for (l, w) in weights.iter().enumerate() {
            if w.rows() != layer_sizes[l]
                || w.cols() != layer_sizes[l + 1]
                || biases[l].len() != layer_sizes[l + 1]
            {
                return Err(Error::Dimension(format!("layer {l} shape mismatch")));
            }
        }
        Ok(WeightBank {
            layer_sizes,
            merged_weights: weights.clone(),
            merged_biases: biases.clone(),
            weights,
            biases,
        })
    }
}

/// Per-unit keep flags for every maskable layer, with the per-weight
/// masks derived from them on demand.
///
/// A weight is masked iff its source or destination unit is dropped; a
/// bias is masked iff its unit is dropped. Output units are never masked.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    /// `unit_keep[l][i]` is 1.0 (kept) or 0.0 (dropped) for unit `i` of
    /// unit layer `l` (layer 0 is the input).
    unit_keep: Vec<Vec<f64>>,
}

impl MaskSet {
    pub fn all_ones(spec: &NetworkSpec) -> Self {
        let unit_keep = spec.layer_sizes[..spec.layer_sizes.len() - 1]
            .iter()
            .map(|&s| vec![1.0; s])
            .collect();
        MaskSet { unit_keep }
    }

    /// Bernoulli unit masks: every candidate unit is dropped with
    /// probability `p`; non-candidate layers stay all ones.
    pub fn random<R: rand::Rng>(spec: &NetworkSpec, p: f64, rng: &mut R) -> Self {
        let mut mask = MaskSet::all_ones(spec);
        for (l, layer) in mask.unit_keep.iter_mut().enumerate() {
            if l == 0 && !spec.input_dropout {
                continue;
            }
            for keep in layer.iter_mut() {
                *keep = if rng.gen::<f64>() < p { 0.0 } else { 1.0 };
            }
        }
        mask
    }

    /// Decodes an annealed state vector into unit masks.
    pub fn from_state(state: &StateVector, map: &UnitIndexMap) -> Result<Self> {
        if state.len() != map.unit_count() {
            return Err(Error::Input(format!(
                "state of length {} for {} units",
                state.len(),
                map.unit_count()
            )));
        }
        let unit_keep = (0..map.num_layers())
            .map(|l| {
                (0..map.layer_size(l))
                    .map(|i| if state.is_kept(map.global(l, i)) { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        Ok(MaskSet { unit_keep })
    }

    /// Inverse of [`from_state`](Self::from_state).
    pub fn to_state(&self, map: &UnitIndexMap) -> Result<StateVector> {
        if self.unit_keep.len() != map.num_layers()
            || self
                .unit_keep
                .iter()
                .enumerate()
                .any(|(l, layer)| layer.len() != map.layer_size(l))
        {
            return Err(Error::Dimension("mask does not fit the index map".into()));
        }
        let mut state = StateVector::all_ones(map.unit_count());
        for (l, layer) in self.unit_keep.iter().enumerate() {
            for (i, &keep) in layer.iter().enumerate() {
                state.set(map.global(l, i), keep != 0.0);
            }
        }
        Ok(state)
    }

    pub fn num_layers(&self) -> usize {
        self.unit_keep.len()
    }

    pub fn keep(&self, layer: usize) -> &[f64] {
        &self.unit_keep[layer]
    }

    pub fn is_all_ones(&self) -> bool {
        self.unit_keep
            .iter()
            .all(|layer| layer.iter().all(|&k| k == 1.0))
    }

    /// Dropped-unit count per unit layer.
    pub fn dropped_counts(&self) -> Vec<usize> {
        self.unit_keep
            .iter()
            .map(|layer| layer.iter().filter(|&&k| k == 0.0).count())
            .collect()
    }

    /// Materialized per-weight mask of one weight layer. The destination
    /// side of the final layer (output units) is never masked.
    pub fn weight_mask(&self, layer: usize, dst_size: usize) -> DenseMatrix {
        let src = &self.unit_keep[layer];
        let dst = self.unit_keep.get(layer + 1);
        let mut m = DenseMatrix::zeros(src.len(), dst_size);
        for (i, &s) in src.iter().enumerate() {
            let row = m.row_mut(i);
            match dst {
                Some(dst) => {
                    for (j, out) in row.iter_mut().enumerate() {
                        *out = s * dst[j];
                    }
                }
                None => row.fill(s),
            }
        }
        m
    }

    /// Per-bias mask of one weight layer, if that layer's destination is
    /// maskable (the output layer is not).
    pub fn bias_mask(&self, layer: usize) -> Option<&[f64]> {
        self.unit_keep.get(layer + 1).map(|v| v.as_slice())
    }

    /// Flips one unit's keep flag directly.
    pub fn set_unit(&mut self, layer: usize, i: usize, kept: bool) {
        self.unit_keep[layer][i] = if kept { 1.0 } else { 0.0 };
    }
}

/// Glorot-uniform weights, zero biases, merged copy equal to working.
pub fn init_weights(spec: &NetworkSpec, seed: u64) -> WeightBank {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(spec.num_weight_layers());
    let mut biases = Vec::with_capacity(spec.num_weight_layers());
    for l in 0..spec.num_weight_layers() {
        let fan_in = spec.layer_sizes[l];
        let fan_out = spec.layer_sizes[l + 1];
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new(-limit, limit);
        let data: Vec<f64> = (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect();
        weights.push(DenseMatrix::from_vec(fan_in, fan_out, data).expect("sized buffer"));
        biases.push(vec![0.0; fan_out]);
    }
    WeightBank {
        layer_sizes: spec.layer_sizes.clone(),
        merged_weights: weights.clone(),
        merged_biases: biases.clone(),
        weights,
        biases,
    }
}

/// Activations of every maskable layer plus the output logits.
pub struct ForwardPass {
    /// `activations[0]` is the masked input; dropped units are exactly 0.
    pub activations: Vec<DenseMatrix>,
    pub logits: DenseMatrix,
}

struct ForwardDetail {
    pass: ForwardPass,
    /// Masked effective weights per layer, kept for the backward pass.
    effective: Vec<DenseMatrix>,
}

fn forward_detail(
    bank: &WeightBank,
    choice: BankChoice,
    mask: &MaskSet,
    x: &DenseMatrix,
) -> Result<ForwardDetail> {
    let layers = bank.num_weight_layers();
    if x.cols() != bank.layer_sizes[0] {
        return Err(Error::Dimension(format!(
            "input width {} != {}",
            x.cols(),
            bank.layer_sizes[0]
        )));
    }
    if mask.num_layers() != layers {
        return Err(Error::Dimension("mask layer count mismatch".into()));
    }

    let mut activations = Vec::with_capacity(layers);
    let mut effective = Vec::with_capacity(layers);

    let mut a = x.clone();
    let input_keep = mask.keep(0);
    for r in 0..a.rows() {
        for (v, &k) in a.row_mut(r).iter_mut().zip(input_keep) {
            *v *= k;
        }
    }

    for l in 0..layers {
        let (w, b) = bank.select(choice, l);
        let w_eff = {
            let m = mask.weight_mask(l, w.cols());
            w.hadamard(&m)?
        };
        let mut z = matmul(&a, &w_eff)?;
        let last = l == layers - 1;
        if last {
            for r in 0..z.rows() {
                for (v, &bias) in z.row_mut(r).iter_mut().zip(b) {
                    *v += bias;
                }
            }
            activations.push(a);
            effective.push(w_eff);
            return Ok(ForwardDetail {
                pass: ForwardPass {
                    activations,
                    logits: z,
                },
                effective,
            });
        }
        let keep = mask.keep(l + 1);
        for r in 0..z.rows() {
            for ((v, &bias), &k) in z.row_mut(r).iter_mut().zip(b).zip(keep) {
                *v = sigmoid(*v + bias) * k;
            }
        }
        activations.push(a);
        effective.push(w_eff);
        a = z;
    }
    unreachable!("loop returns on the output layer")
}

/// Masked forward pass over a batch (one sample per row).
pub fn forward_batch(
    bank: &WeightBank,
    choice: BankChoice,
    mask: &MaskSet,
    x: &DenseMatrix,
) -> Result<ForwardPass> {
    forward_detail(bank, choice, mask, x).map(|d| d.pass)
}

/// Masked forward pass of a single sample: per-layer activations and logits.
pub fn forward(
    bank: &WeightBank,
    choice: BankChoice,
    mask: &MaskSet,
    x: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let m = DenseMatrix::from_vec(1, x.len(), x.to_vec())?;
    let pass = forward_batch(bank, choice, mask, &m)?;
    let acts = pass.activations.iter().map(|a| a.row(0).to_vec()).collect();
    Ok((acts, pass.logits.row(0).to_vec()))
}

/// Adam state for every weight matrix and bias vector of a network.
#[derive(Debug, Clone)]
pub struct AdamOptimizer {
    weight_states: Vec<AdamState>,
    bias_states: Vec<AdamState>,
}

impl AdamOptimizer {
    pub fn new(spec: &NetworkSpec, learning_rate: f64) -> Self {
        let mut weight_states = Vec::new();
        let mut bias_states = Vec::new();
        for l in 0..spec.num_weight_layers() {
            weight_states.push(AdamState::new(
                spec.layer_sizes[l] * spec.layer_sizes[l + 1],
                learning_rate,
            ));
            bias_states.push(AdamState::new(spec.layer_sizes[l + 1], learning_rate));
        }
        AdamOptimizer {
            weight_states,
            bias_states,
        }
    }
}

fn batch_matrix(batch: &Batch<'_>, input_size: usize) -> Result<DenseMatrix> {
    if batch.is_empty() {
        return Err(Error::Input("empty mini-batch".into()));
    }
    let mut flat = Vec::with_capacity(batch.len() * input_size);
    for img in &batch.images {
        if img.len() != input_size {
            return Err(Error::Dimension(format!(
                "sample width {} != input size {input_size}",
                img.len()
            )));
        }
        flat.extend_from_slice(img);
    }
    DenseMatrix::from_vec(batch.len(), input_size, flat)
}

/// Mean cross-entropy of a batch under a mask, without touching weights.
pub fn batch_loss(
    bank: &WeightBank,
    choice: BankChoice,
    mask: &MaskSet,
    batch: &Batch<'_>,
) -> Result<f64> {
    let x = batch_matrix(batch, bank.layer_sizes[0])?;
    let pass = forward_batch(bank, choice, mask, &x)?;
    let mut total = 0.0;
    for (r, &label) in batch.labels.iter().enumerate() {
        let (loss, _) = softmax_cross_entropy(pass.logits.row(r), label as usize)?;
        total += loss;
    }
    Ok(total / batch.len() as f64)
}

/// Gradients of one batch's mean loss with respect to the working
/// weights, under a mask. Masked positions are exactly zero.
pub struct LossGradients {
    pub mean_loss: f64,
    pub weight_grads: Vec<DenseMatrix>,
    pub bias_grads: Vec<Vec<f64>>,
}

/// Computes the masked analytic gradients without touching the bank.
pub fn loss_gradients(
    bank: &WeightBank,
    mask: &MaskSet,
    batch: &Batch<'_>,
) -> Result<LossGradients> {
    let layers = bank.num_weight_layers();
    let x = batch_matrix(batch, bank.layer_sizes[0])?;
    let q = batch.len();
    let ForwardDetail { pass, effective } = forward_detail(bank, BankChoice::Working, mask, &x)?;

    // Loss and logit gradient, averaged over the batch.
    let k = bank.layer_sizes[layers];
    let mut delta = DenseMatrix::zeros(q, k);
    let mut total_loss = 0.0;
    for (r, &label) in batch.labels.iter().enumerate() {
        let (loss, grad) = softmax_cross_entropy(pass.logits.row(r), label as usize)?;
        total_loss += loss;
        for (d, g) in delta.row_mut(r).iter_mut().zip(grad) {
            *d = g / q as f64;
        }
    }

    let mut weight_grads = vec![DenseMatrix::zeros(0, 0); layers];
    let mut bias_grads = vec![Vec::new(); layers];
    for l in (0..layers).rev() {
        let a = &pass.activations[l];
        let w_mask = mask.weight_mask(l, bank.layer_sizes[l + 1]);
        // Gradient wrt the stored weights: (A^T delta) masked to exact zeros.
        weight_grads[l] = matmul(&a.transpose(), &delta)?.hadamard(&w_mask)?;
        let mut grad_b = vec![0.0; bank.layer_sizes[l + 1]];
        for r in 0..q {
            for (g, &d) in grad_b.iter_mut().zip(delta.row(r)) {
                *g += d;
            }
        }
        bias_grads[l] = grad_b;

        if l > 0 {
            let upstream = matmul(&delta, &effective[l].transpose())?;
            let keep = mask.keep(l);
            let mut d = upstream;
            for r in 0..q {
                let a_row = a.row(r);
                for ((v, &act), &kp) in d.row_mut(r).iter_mut().zip(a_row).zip(keep) {
                    *v *= kp * act * (1.0 - act);
                }
            }
            delta = d;
        }
    }
    Ok(LossGradients {
        mean_loss: total_loss / q as f64,
        weight_grads,
        bias_grads,
    })
}

/// One masked backpropagation step with Adam.
///
/// Gradients of masked-out weights are exactly zero and the masked
/// weights themselves are left bitwise unchanged; their Adam moments
/// still decay. Returns the mean loss of the batch.
pub fn backprop_step(
    bank: &mut WeightBank,
    mask: &MaskSet,
    batch: &Batch<'_>,
    opt: &mut AdamOptimizer,
) -> Result<f64> {
    let grads = loss_gradients(bank, mask, batch)?;
    for l in 0..bank.num_weight_layers() {
        let w_mask = mask.weight_mask(l, bank.layer_sizes[l + 1]);
        opt.weight_states[l].apply_masked(
            bank.weights[l].data_mut(),
            grads.weight_grads[l].data(),
            Some(w_mask.data()),
        )?;
        opt.bias_states[l].apply_masked(
            &mut bank.biases[l],
            &grads.bias_grads[l],
            mask.bias_mask(l),
        )?;
    }
    Ok(grads.mean_loss)
}

/// Merges the working copy into the persistent copy under the mask:
/// masked positions keep their previous merged value.
pub fn merge_weights(bank: &mut WeightBank, mask: &MaskSet) -> Result<()> {
    if mask.num_layers() != bank.num_weight_layers() {
        return Err(Error::Dimension("mask layer count mismatch".into()));
    }
    for l in 0..bank.num_weight_layers() {
        let w_mask = mask.weight_mask(l, bank.layer_sizes[l + 1]);
        let src = bank.weights[l].data();
        let dst = bank.merged_weights[l].data_mut();
        for ((d, &s), &m) in dst.iter_mut().zip(src).zip(w_mask.data()) {
            if m != 0.0 {
                *d = s;
            }
        }
        let keep = mask.bias_mask(l);
        let src = &bank.biases[l];
        let dst = &mut bank.merged_biases[l];
        for (j, (d, &s)) in dst.iter_mut().zip(src).enumerate() {
            if keep.map_or(1.0, |k| k[j]) != 0.0 {
                *d = s;
            }
        }
    }
    Ok(())
}

/// Knobs of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Cap on full passes over the training set.
    pub epoch_cap: usize,
    /// Cap on the outer iteration loop; the effective number of epochs is
    /// the smaller of the two caps.
    pub iteration_cap: usize,
    pub learning_rate: f64,
    pub early_stop_patience: usize,
    pub early_stop_min_delta: f64,
    /// Refresh the mask every this many mini-batches (1 = every batch).
    pub mask_refresh_every: usize,
    pub seed: u64,
    pub ising: IsingConfig,
    pub anneal: AnnealSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epoch_cap: 32,
            iteration_cap: 200,
            learning_rate: 0.01,
            early_stop_patience: 10,
            early_stop_min_delta: 1e-4,
            mask_refresh_every: 1,
            seed: 0,
            ising: IsingConfig::default(),
            anneal: AnnealSchedule::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.epoch_cap == 0 || self.iteration_cap == 0 {
            return Err(Error::Config("epoch and iteration caps must be positive".into()));
        }
        if self.mask_refresh_every == 0 {
            return Err(Error::Config("mask refresh cadence must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        self.anneal.validate()?;
        self.ising.cost_map.validate()
    }
}

/// Training-side measurements of one run.
#[derive(Debug, Clone)]
pub struct TrainMetrics {
    /// One recorded loss per mini-batch, in order.
    pub loss_trajectory: Vec<f64>,
    /// Time-averaged percentage of dropped units per unit layer
    /// (input first), over the masks used for every training batch.
    pub per_layer_drop_pct: Vec<f64>,
    /// Dropped-unit count per layer in the final mask.
    pub final_mask_dropped: Vec<usize>,
    pub epochs_run: usize,
    pub steps_run: usize,
    pub early_stopped: bool,
    pub wall_clock_secs: f64,
}

/// Result of [`train`]: the trained bank, the mask in effect at exit, and
/// the per-run metrics.
pub struct TrainOutcome {
    pub bank: WeightBank,
    pub final_mask: MaskSet,
    pub metrics: TrainMetrics,
}

/// Runs the mask-merged training loop.
///
/// The first mini-batch of the first epoch trains with the all-ones mask
/// and snapshots `W* = W`. Every later batch trains under the current
/// mask, merges into `W*`, and records the masked inference loss of the
/// batch. The mask is then refreshed according to the dropout mode:
/// annealing an instance built from `W*`, resampling Bernoulli masks, or
/// keeping all-ones. Epochs reshuffle deterministically; early stopping
/// watches the epoch-mean recorded loss.
pub fn train(spec: &NetworkSpec, data: &DataSet, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    if data.dim() != spec.input_size() {
        return Err(Error::Dimension(format!(
            "data dimension {} != input size {}",
            data.dim(),
            spec.input_size()
        )));
    }

    let started = Instant::now();
    let mut bank = init_weights(spec, config.seed);
    let mut opt = AdamOptimizer::new(spec, config.learning_rate);
    let mut mask = MaskSet::all_ones(spec);
    let map = UnitIndexMap::from_network(spec);
    let mut mask_rng = ChaCha8Rng::seed_from_u64(config.seed);
    mask_rng.set_stream(u64::from_le_bytes(*b"unitmask"));

    let unit_layers = spec.num_weight_layers();
    let mut loss_trajectory = Vec::new();
    let mut drop_fraction_sums = vec![0.0f64; unit_layers];
    let mut masks_counted = 0usize;
    let mut best_monitor = f64::INFINITY;
    let mut stale = 0usize;
    let mut early_stopped = false;
    let mut step = 0usize;
    let mut epochs_run = 0usize;

    let epochs = config.epoch_cap.min(config.iteration_cap);
    'outer: for epoch in 0..epochs {
        epochs_run = epoch + 1;
        let view = shuffle_epoch(data, config.seed, epoch as u64);
        let mut epoch_loss = 0.0;
        let mut epoch_batches = 0usize;
        for batch in view.batches(config.batch_size) {
            for (l, sum) in drop_fraction_sums.iter_mut().enumerate() {
                let keep = mask.keep(l);
                let dropped = keep.iter().filter(|&&k| k == 0.0).count();
                *sum += dropped as f64 / keep.len() as f64;
            }
            masks_counted += 1;

            let loss = if step == 0 {
                let loss = backprop_step(&mut bank, &mask, &batch, &mut opt)?;
                bank.snapshot_merged();
                loss
            } else {
                backprop_step(&mut bank, &mask, &batch, &mut opt)?;
                merge_weights(&mut bank, &mask)?;
                batch_loss(&bank, BankChoice::Merged, &mask, &batch)?
            };
            loss_trajectory.push(loss);
            epoch_loss += loss;
            epoch_batches += 1;

            if step % config.mask_refresh_every == 0 {
                match spec.dropout {
                    DropoutMode::None => {}
                    DropoutMode::Random { p } => {
                        mask = MaskSet::random(spec, p, &mut mask_rng);
                    }
                    DropoutMode::Ising => {
                        let instance = build_instance(&bank, &batch, &map, &config.ising)?;
                        let mut schedule = config.anneal.clone();
                        schedule.seed = config.anneal.seed.wrapping_add(step as u64);
                        let state = anneal(&instance, &schedule)?;
                        mask = MaskSet::from_state(&state, &map)?;
                    }
                }
            }
            step += 1;
        }

        let monitor = epoch_loss / epoch_batches as f64;
        if best_monitor - monitor > config.early_stop_min_delta {
            best_monitor = monitor;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.early_stop_patience {
                early_stopped = true;
                break 'outer;
            }
        }
    }

    let per_layer_drop_pct = drop_fraction_sums
        .iter()
        .map(|s| 100.0 * s / masks_counted as f64)
        .collect();
    let metrics = TrainMetrics {
        loss_trajectory,
        per_layer_drop_pct,
        final_mask_dropped: mask.dropped_counts(),
        epochs_run,
        steps_run: step,
        early_stopped,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        bank,
        final_mask: mask,
        metrics,
    })
}

/// Argmax-of-logits accuracy over a dataset. `mask = None` evaluates with
/// every unit kept.
pub fn evaluate(
    bank: &WeightBank,
    choice: BankChoice,
    mask: Option<&MaskSet>,
    data: &DataSet,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Input("empty evaluation set".into()));
    }
    let all_ones_layers: Vec<Vec<f64>>;
    let mask = match mask {
        Some(m) => m.clone(),
        None => {
            all_ones_layers = bank.layer_sizes[..bank.layer_sizes.len() - 1]
                .iter()
                .map(|&s| vec![1.0; s])
                .collect();
            MaskSet {
                unit_keep: all_ones_layers,
            }
        }
    };
    let mut correct = 0usize;
    let view = data.identity_view();
    for batch in view.batches(512) {
        let x = batch_matrix(&batch, bank.layer_sizes[0])?;
        let pass = forward_batch(bank, choice, &mask, &x)?;
        for (r, &label) in batch.labels.iter().enumerate() {
            let row = pass.logits.row(r);
            let mut arg = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[arg] {
                    arg = j;
                }
            }
            if arg == label as usize {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
