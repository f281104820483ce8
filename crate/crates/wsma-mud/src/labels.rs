//! Bijective mappings between joint transmit symbols and classifier
//! labels, plus the hard-decision rules for both head types.
//!
//! Two label layouts exist:
//!
//! * multi-class (softmax): one-hot vectors of length `M^K`; grid entry 0
//!   maps to the one-hot with its 1 in the *last* position, entry 1 to the
//!   next-to-last, and so on,
//! * multi-label (sigmoid): length `K * log2(M)` bit vectors; each user
//!   contributes the big-endian binary code of its alphabet index, first
//!   user first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::argmax_with_tie_break;

/// Which classifier head the labels feed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    MulticlassSoftmax,
    MultilabelSigmoid,
}

impl std::fmt::Display for LabelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabelMode::MulticlassSoftmax => write!(f, "softmax"),
            LabelMode::MultilabelSigmoid => write!(f, "sigmoid"),
        }
    }
}

/// Bijective codebook between grid indices `0..M^K` and label vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCodebook {
    mode: LabelMode,
    order: usize,
    users: usize,
    n_label: usize,
    labels: Vec<Vec<u8>>,
}

impl LabelCodebook {
    pub fn new(mode: LabelMode, order: usize, users: usize) -> Result<Self> {
        if order < 2 || !order.is_power_of_two() {
            return Err(Error::UnsupportedModulation { order });
        }
        if users == 0 {
            return Err(Error::UnsupportedUserCount {
                users,
                context: "label codebook",
            });
        }
        let bits_per_user = order.trailing_zeros() as usize;
        let total = order.checked_pow(users as u32).ok_or(
            Error::UnsupportedUserCount {
                users,
                context: "label codebook (M^K overflow)",
            },
        )?;
        let n_label = match mode {
            LabelMode::MulticlassSoftmax => total,
            LabelMode::MultilabelSigmoid => users * bits_per_user,
        };
        let labels = (0..total)
            .map(|n| match mode {
                LabelMode::MulticlassSoftmax => {
                    let mut v = vec![0u8; n_label];
                    v[n_label - 1 - n] = 1;
                    v
                }
                LabelMode::MultilabelSigmoid => {
                    let mut v = Vec::with_capacity(n_label);
                    let mut rem = n;
                    let mut digits = vec![0usize; users];
                    for slot in digits.iter_mut().rev() {
                        *slot = rem % order;
                        rem /= order;
                    }
                    for d in digits {
                        for b in (0..bits_per_user).rev() {
                            v.push(((d >> b) & 1) as u8);
                        }
                    }
                    v
                }
            })
            .collect();
        Ok(Self {
            mode,
            order,
            users,
            n_label,
            labels,
        })
    }

    pub fn mode(&self) -> LabelMode {
        self.mode
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn users(&self) -> usize {
        self.users
    }

    /// Label vector length: `M^K` for softmax, `K * log2(M)` for sigmoid.
    pub fn n_label(&self) -> usize {
        self.n_label
    }

    /// Number of encodable grid indices, `M^K`.
    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    /// The label of grid entry `n`.
    pub fn encode(&self, n: usize) -> Result<&[u8]> {
        self.labels
            .get(n)
            .map(|v| v.as_slice())
            .ok_or(Error::IndexOutOfRange {
                index: n,
                limit: self.labels.len(),
            })
    }

    /// Hard decision on a network output: arg-max one-hot for softmax
    /// (smallest index wins ties), element-wise threshold for sigmoid with
    /// the boundary value 0.5 mapping to 0.
    pub fn hard_decide(&self, theta_tilde: &[f64]) -> Result<Vec<u8>> {
        if theta_tilde.len() != self.n_label {
            return Err(Error::LabelLength {
                expected: self.n_label,
                got: theta_tilde.len(),
            });
        }
        match self.mode {
            LabelMode::MulticlassSoftmax => {
                let hot = argmax_with_tie_break(theta_tilde)?;
                let mut v = vec![0u8; self.n_label];
                v[hot] = 1;
                Ok(v)
            }
            LabelMode::MultilabelSigmoid => Ok(theta_tilde
                .iter()
                .map(|&t| if t <= 0.5 { 0 } else { 1 })
                .collect()),
        }
    }

    /// Grid index of a (valid) hard label; the inverse of
    /// [`LabelCodebook::encode`].
    pub fn decode(&self, theta_hat: &[u8]) -> Result<usize> {
        if theta_hat.len() != self.n_label {
            return Err(Error::LabelLength {
                expected: self.n_label,
                got: theta_hat.len(),
            });
        }
        match self.mode {
            LabelMode::MulticlassSoftmax => {
                let ones: Vec<usize> = theta_hat
                    .iter()
                    .enumerate()
                    .filter(|(_, &b)| b != 0)
                    .map(|(i, _)| i)
                    .collect();
                if ones.len() != 1 {
                    return Err(Error::InvalidLabel(format!(
                        "softmax label must have exactly one 1, found {}",
                        ones.len()
                    )));
                }
                Ok(self.n_label - 1 - ones[0])
            }
            LabelMode::MultilabelSigmoid => {
                let bits_per_user = self.order.trailing_zeros() as usize;
                let mut index = 0usize;
                for k in 0..self.users {
                    let mut digit = 0usize;
                    for b in 0..bits_per_user {
                        let bit = theta_hat[k * bits_per_user + b];
                        if bit > 1 {
                            return Err(Error::InvalidLabel(format!(
                                "label entries must be bits, found {bit}"
                            )));
                        }
                        digit = (digit << 1) | bit as usize;
                    }
                    index = index * self.order + digit;
                }
                Ok(index)
            }
        }
    }
}
