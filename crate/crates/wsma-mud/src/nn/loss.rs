//! Cross-entropy losses in base-2 logarithms, with the probability clamp
//! and the matching output-side gradients.

use super::Head;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside the
/// losses so a hard 0 or 1 cannot produce an infinite log.
pub const PROB_CLAMP: f64 = 1e-12;

const LN_2: f64 = std::f64::consts::LN_2;

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Categorical cross entropy for one-hot labels:
/// mean over the batch of `-sum_m theta_m log2(theta_tilde_m)`.
pub fn categorical_cross_entropy(
    labels: &[u8],
    outputs: &[f64],
    batch: usize,
    n_label: usize,
) -> f64 {
    debug_assert_eq!(labels.len(), batch * n_label);
    debug_assert_eq!(outputs.len(), batch * n_label);
    let mut total = 0.0;
    for (theta, p) in labels.iter().zip(outputs) {
        if *theta != 0 {
            total -= clamp(*p).log2();
        }
    }
    total / batch as f64
}

/// Binary cross entropy for bit labels: mean over the batch of
/// `-sum_m [theta_m log2(theta_tilde_m) + (1-theta_m) log2(1-theta_tilde_m)]`.
pub fn binary_cross_entropy(labels: &[u8], outputs: &[f64], batch: usize, n_label: usize) -> f64 {
    debug_assert_eq!(labels.len(), batch * n_label);
    debug_assert_eq!(outputs.len(), batch * n_label);
    let mut total = 0.0;
    for (theta, p) in labels.iter().zip(outputs) {
        let p = clamp(*p);
        total -= if *theta != 0 { p.log2() } else { (1.0 - p).log2() };
    }
    total / batch as f64
}

/// The loss paired with a head: categorical cross entropy for softmax,
/// binary cross entropy for sigmoid.
pub fn loss_for_head(head: Head, labels: &[u8], outputs: &[f64], batch: usize, n_label: usize) -> f64 {
    match head {
        Head::Softmax => categorical_cross_entropy(labels, outputs, batch, n_label),
        Head::Sigmoid => binary_cross_entropy(labels, outputs, batch, n_label),
    }
}

/// `dL/d theta_tilde` of the batch-mean loss, respecting the clamp: where
/// an output sits outside the clamp interval the loss is locally constant
/// and the gradient is zero.
pub(crate) fn output_gradient(
    head: Head,
    labels: &[u8],
    outputs: &[f64],
    batch: usize,
) -> Vec<f64> {
    let scale = 1.0 / (batch as f64 * LN_2);
    labels
        .iter()
        .zip(outputs)
        .map(|(theta, &p)| {
            if p <= PROB_CLAMP || p >= 1.0 - PROB_CLAMP {
                return 0.0;
            }
            match head {
                Head::Softmax => {
                    if *theta != 0 {
                        -scale / p
                    } else {
                        0.0
                    }
                }
                Head::Sigmoid => {
                    if *theta != 0 {
                        -scale / p
                    } else {
                        scale / (1.0 - p)
                    }
                }
            }
        })
        .collect()
}
