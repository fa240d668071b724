//! Parameter counting and dropout-rate accounting.

use crate::error::{Error, Result};

/// Total number of parameters of an MLP with layers
/// `[x, h1, ..., hN, y]`:
///
/// `P = |x|*|h1| + sum_{i=1..N-1} |hi|*(|h_{i+1}|+1) + |hN|*(|y|+1) + |y|`
///
/// The grouping folds each layer's bias count into the preceding term;
/// the result equals an exhaustive count of every weight and bias.
pub fn param_count(layer_sizes: &[usize]) -> usize {
    assert!(layer_sizes.len() >= 3, "need at least one hidden layer");
    let n = layer_sizes.len() - 2;
    let x = layer_sizes[0];
    let y = layer_sizes[n + 1];
    let hidden = &layer_sizes[1..=n];
    let mut p = x * hidden[0];
    for i in 0..n - 1 {
        p += hidden[i] * (hidden[i + 1] + 1);
    }
    p += hidden[n - 1] * (y + 1);
    p + y
}

/// Two views of how many parameters a set of dropped units removes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropAccounting {
    /// Headline accounting: each dropped unit removes its outgoing
    /// weights plus its own bias (input units have no bias).
    pub total_pct: f64,
    /// Strict accounting: every weight with either endpoint dropped is
    /// removed, plus dropped biases. For fractional (time-averaged) unit
    /// counts this is the expectation under independent drops.
    pub strict_total_pct: f64,
}

/// Percentage of the network's parameters removed by dropping
/// `dropped[l]` units from each maskable layer (`l = 0` is the input;
/// the output layer never drops). Fractional counts are allowed so that
/// time-averaged rates can be fed straight in.
pub fn total_dropout_rate(layer_sizes: &[usize], dropped: &[f64]) -> Result<DropAccounting> {
    let unit_layers = layer_sizes.len() - 1;
    if dropped.len() != unit_layers {
        return Err(Error::Dimension(format!(
            "{} dropped-unit counts for {} maskable layers",
            dropped.len(),
            unit_layers
        )));
    }
    for (l, &d) in dropped.iter().enumerate() {
        if d < 0.0 || d > layer_sizes[l] as f64 {
            return Err(Error::Input(format!(
                "dropped count {d} out of range for layer {l} of size {}",
                layer_sizes[l]
            )));
        }
    }
    let p = param_count(layer_sizes) as f64;

    let mut outgoing = 0.0;
    for l in 0..unit_layers {
        outgoing += dropped[l] * layer_sizes[l + 1] as f64;
        if l >= 1 {
            outgoing += dropped[l]; // the unit's bias
        }
    }

    let mut strict = 0.0;
    for l in 0..unit_layers {
        let src = layer_sizes[l] as f64;
        let dst = layer_sizes[l + 1] as f64;
        let d_src = dropped[l];
        let d_dst = if l + 1 < unit_layers { dropped[l + 1] } else { 0.0 };
        strict += src * dst - (src - d_src) * (dst - d_dst);
        if l >= 1 {
            strict += dropped[l];
        }
    }

    Ok(DropAccounting {
        total_pct: 100.0 * outgoing / p,
        strict_total_pct: 100.0 * strict / p,
    })
}
