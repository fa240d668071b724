//! Minimal dense linear algebra, activations, loss, and the Adam update rule.
//!
//! Everything is `f64` and row-major. The routines here are deliberately
//! plain: fixed summation order so that repeated runs (and parallel runs)
//! are bit-identical.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from a flat row-major buffer.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "buffer of length {} cannot fill a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Rows must all have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::Dimension("ragged rows".into()));
            }
            data.extend_from_slice(row);
        }
        Ok(DenseMatrix { rows: r, cols: c, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Elementwise product. Shapes must match.
    pub fn hadamard(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension(format!(
                "hadamard {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .collect();
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// True iff every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Threshold (in multiply-adds) above which `matmul` parallelizes over
/// output rows. Each output row is still summed sequentially over `k`,
/// so results do not depend on the thread count.
const PAR_FLOP_THRESHOLD: usize = 200_000;

/// Standard matrix product `a * b`.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(Error::Dimension(format!(
            "matmul ({}x{}) x ({}x{})",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = DenseMatrix::zeros(a.rows, b.cols);
    let work = a.rows * a.cols * b.cols;

    let row_product = |i: usize, out_row: &mut [f64]| {
        // ikj order: accumulate into the output row while walking b's rows
        // contiguously. Summation over k is in ascending order.
        let a_row = a.row(i);
        for (k, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = b.row(k);
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    };

    if work >= PAR_FLOP_THRESHOLD {
        out.data
            .par_chunks_mut(b.cols)
            .enumerate()
            .for_each(|(i, out_row)| row_product(i, out_row));
    } else {
        for i in 0..a.rows {
            row_product(i, out.row_mut(i));
        }
    }
    Ok(out)
}

/// Logistic function `1 / (1 + e^(-x))`. Saturates gracefully at both ends.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Cross-entropy of `softmax(logits)` against an integer class label.
///
/// Returns `(loss, gradient)` where the gradient is with respect to the
/// logits: `softmax(logits) - one_hot(label)`. Stabilized by subtracting
/// the max logit before exponentiation.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::Input(format!(
            "label {} out of range for {} classes",
            label,
            logits.len()
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut grad: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = grad.iter().sum();
    let loss = -(logits[label] - max - sum.ln());
    for g in grad.iter_mut() {
        *g /= sum;
    }
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Adam optimizer state for one parameter tensor.
///
/// Holds the first/second moment accumulators, a step counter, and the
/// hyperparameters. One `AdamState` tracks exactly one tensor; the shapes
/// must agree on every call.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl AdamState {
    /// New state with zeroed accumulators and the usual defaults
    /// (beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8).
    pub fn new(param_len: usize, learning_rate: f64) -> Self {
        AdamState {
            m: vec![0.0; param_len],
            v: vec![0.0; param_len],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update applied in place.
    pub fn apply(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        self.apply_masked(params, grads, None)
    }

    /// Adam update that leaves masked-out parameters bitwise untouched.
    ///
    /// `mask[i] == 0.0` freezes parameter `i` for this step. The moment
    /// accumulators still advance for frozen entries (with whatever
    /// gradient was passed, normally zero), so moments decay naturally
    /// while a parameter sits masked.
    pub fn apply_masked(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        mask: Option<&[f64]>,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "adam state tracks {} parameters, got params {} / grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(mask) = mask {
            if mask.len() != self.m.len() {
                return Err(Error::Dimension("adam mask length mismatch".into()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let keep = mask.map_or(1.0, |m| m[i]);
            if keep != 0.0 {
                let m_hat = self.m[i] / bc1;
                let v_hat = self.v[i] / bc2;
                params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// One Adam step on a matrix-valued parameter.
pub fn adam_step(
    params: &mut DenseMatrix,
    grads: &DenseMatrix,
    state: &mut AdamState,
) -> Result<()> {
    if params.rows != grads.rows || params.cols != grads.cols {
        return Err(Error::Dimension(format!(
            "adam_step params {}x{} vs grads {}x{}",
            params.rows, params.cols, grads.rows, grads.cols
        )));
    }
    state.apply(&mut params.data, &grads.data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        DenseMatrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_matrix(&mut rng, 3, 3);
        let mut eye = DenseMatrix::zeros(3, 3);
        for i in 0..3 {
            eye.set(i, i, 1.0);
        }
        assert_eq!(matmul(&eye, &m).unwrap(), m);
    }

    #[test]
    fn matmul_hand_example() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = DenseMatrix::zeros(2, 3);
        let b = DenseMatrix::zeros(4, 2);
        assert!(matches!(matmul(&a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn matmul_associative_on_small_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let a = random_matrix(&mut rng, 3, 3);
            let b = random_matrix(&mut rng, 3, 3);
            let c = random_matrix(&mut rng, 3, 3);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            for (l, r) in left.data().iter().zip(right.data()) {
                assert!((l - r).abs() < 1e-10, "{l} vs {r}");
            }
        }
    }

    #[test]
    fn matmul_parallel_path_matches_serial() {
        // Force the rayon path and compare against a naive product.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_matrix(&mut rng, 64, 80);
        let b = random_matrix(&mut rng, 80, 64);
        let fast = matmul(&a, &b).unwrap();
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a.get(i, k) * b.get(k, j);
                }
                assert!((acc - fast.get(i, j)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sigmoid_anchors() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(40.0) - 1.0).abs() < 1e-15);
        for &x in &[-3.0, -0.7, 0.2, 5.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let logits = vec![0.25; 10];
        let (loss, grad) = softmax_cross_entropy(&logits, 3).unwrap();
        assert!((loss - 10.0_f64.ln()).abs() < 1e-12);
        let grad_sum: f64 = grad.iter().sum();
        assert!(grad_sum.abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_confident_correct() {
        let mut logits = vec![0.0; 10];
        logits[4] = 60.0;
        let (loss, _) = softmax_cross_entropy(&logits, 4).unwrap();
        assert!(loss < 1e-12);
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        let logits = vec![0.0; 4];
        assert!(matches!(
            softmax_cross_entropy(&logits, 4),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-5;
        for _ in 0..20 {
            let logits: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let label = rng.gen_range(0..6);
            let (_, grad) = softmax_cross_entropy(&logits, label).unwrap();
            for i in 0..logits.len() {
                let mut plus = logits.clone();
                plus[i] += h;
                let mut minus = logits.clone();
                minus[i] -= h;
                let (lp, _) = softmax_cross_entropy(&plus, label).unwrap();
                let (lm, _) = softmax_cross_entropy(&minus, label).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                let denom = fd.abs().max(grad[i].abs()).max(1e-8);
                assert!(
                    ((grad[i] - fd) / denom).abs() < 1e-4,
                    "analytic {} vs fd {}",
                    grad[i],
                    fd
                );
            }
        }
    }

    #[test]
    fn sigmoid_gradient_matches_finite_differences() {
        let h = 1e-5;
        for &x in &[-4.0, -1.0, 0.0, 0.3, 2.5] {
            let analytic = sigmoid(x) * (1.0 - sigmoid(x));
            let fd = (sigmoid(x + h) - sigmoid(x - h)) / (2.0 * h);
            assert!(((analytic - fd) / fd.abs().max(1e-8)).abs() < 1e-4);
        }
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let mut params = DenseMatrix::from_rows(&[vec![0.3, -1.2], vec![4.5, 0.0]]).unwrap();
        let before = params.clone();
        let grads = DenseMatrix::zeros(2, 2);
        let mut state = AdamState::new(4, 0.01);
        for _ in 0..25 {
            adam_step(&mut params, &grads, &mut state).unwrap();
        }
        assert_eq!(params, before);
        assert_eq!(state.step_count(), 25);
    }

    #[test]
    fn adam_first_step_displacement() {
        // Hand evaluation at t=1 with g=1: m_hat=1, v_hat=1, so the step is
        // lr * 1 / (1 + eps) ~= lr.
        let mut params = DenseMatrix::from_vec(1, 1, vec![0.0]).unwrap();
        let grads = DenseMatrix::from_vec(1, 1, vec![1.0]).unwrap();
        let mut state = AdamState::new(1, 0.01);
        adam_step(&mut params, &grads, &mut state).unwrap();
        assert!((params.get(0, 0) + 0.01).abs() < 1e-9);
    }

    #[test]
    fn adam_deterministic_trajectories() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut params = random_matrix(&mut rng, 4, 4);
            let mut state = AdamState::new(16, 0.01);
            for _ in 0..50 {
                let grads = random_matrix(&mut rng, 4, 4);
                adam_step(&mut params, &grads, &mut state).unwrap();
            }
            params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn adam_shape_mismatch() {
        let mut params = DenseMatrix::zeros(2, 2);
        let grads = DenseMatrix::zeros(2, 3);
        let mut state = AdamState::new(4, 0.01);
        assert!(matches!(
            adam_step(&mut params, &grads, &mut state),
            Err(Error::Dimension(_))
        ));
    }
}
