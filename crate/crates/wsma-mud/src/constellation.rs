//! Normalized square-QAM alphabets and the joint transmit-symbol set.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square M-QAM alphabet normalized so the mean symbol energy equals
/// `log2(M)`.
///
/// The symbol order is fixed: real levels descend first, then imaginary
/// levels descend within each real level. For M = 4 that is
/// `1+j, 1-j, -1+j, -1-j` (unit-magnitude components, so no scaling is
/// applied).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QamAlphabet {
    order: usize,
    symbols: Vec<Complex64>,
    per_symbol_energy: f64,
}

impl QamAlphabet {
    /// Build the alphabet for `order` in {4, 16, 64}.
    pub fn new(order: usize) -> Result<Self> {
        if !matches!(order, 4 | 16 | 64) {
            return Err(Error::UnsupportedModulation { order });
        }
        let side = (order as f64).sqrt() as usize;
        // Descending amplitude levels: side-1, side-3, ..., -(side-1).
        let levels: Vec<f64> = (0..side).map(|i| (side - 1) as f64 - 2.0 * i as f64).collect();
        let raw_mean_energy =
            2.0 * levels.iter().map(|l| l * l).sum::<f64>() / side as f64;
        let target = (order as f64).log2();
        let scale = (target / raw_mean_energy).sqrt();

        let mut symbols = Vec::with_capacity(order);
        for &re in &levels {
            for &im in &levels {
                symbols.push(Complex64::new(scale * re, scale * im));
            }
        }
        Ok(Self {
            order,
            symbols,
            per_symbol_energy: target,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }

    pub fn symbol(&self, index: usize) -> Complex64 {
        self.symbols[index]
    }

    /// Target mean symbol energy, `log2(M)`.
    pub fn per_symbol_energy(&self) -> f64 {
        self.per_symbol_energy
    }

    /// Realized mean symbol energy `(1/M) sum |q_m|^2`.
    pub fn mean_energy(&self) -> f64 {
        self.symbols.iter().map(|q| q.norm_sqr()).sum::<f64>() / self.order as f64
    }

    /// Smallest distance between two distinct symbols.
    pub fn min_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.symbols.iter().enumerate() {
            for b in &self.symbols[i + 1..] {
                best = best.min((a - b).norm());
            }
        }
        best
    }

    /// Index of the symbol nearest to `value`, smallest index on ties.
    pub fn slice_to_nearest(&self, value: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = (value - self.symbols[0]).norm_sqr();
        for (i, q) in self.symbols.iter().enumerate().skip(1) {
            let d = (value - q).norm_sqr();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

/// The ordered set of all M^K joint transmit vectors.
///
/// Entry `n` is obtained by writing `n` in base M with the first user as
/// the slowest-varying digit, i.e. entry 0 = `[q1, ..., q1]`, entry 1 =
/// `[q1, ..., q2]` and so on.
#[derive(Debug, Clone)]
pub struct SymbolGrid {
    users: usize,
    order: usize,
    entries: Vec<Vec<Complex64>>,
}

impl SymbolGrid {
    pub fn enumerate(users: usize, alphabet: &QamAlphabet) -> Result<Self> {
        if users == 0 {
            return Err(Error::UnsupportedUserCount {
                users,
                context: "symbol grid enumeration",
            });
        }
        let order = alphabet.order();
        let len = order
            .checked_pow(users as u32)
            .ok_or(Error::UnsupportedUserCount {
                users,
                context: "symbol grid enumeration (M^K overflow)",
            })?;
        let mut entries = Vec::with_capacity(len);
        for n in 0..len {
            let digits = digits_of(n, order, users);
            entries.push(digits.iter().map(|&d| alphabet.symbol(d)).collect());
        }
        Ok(Self {
            users,
            order,
            entries,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, n: usize) -> &[Complex64] {
        &self.entries[n]
    }

    pub fn entries(&self) -> &[Vec<Complex64>] {
        &self.entries
    }

    /// Per-user alphabet indices of entry `n` (first user first).
    pub fn digits(&self, n: usize) -> Vec<usize> {
        digits_of(n, self.order, self.users)
    }

    /// Inverse of [`SymbolGrid::digits`].
    pub fn index_from_digits(&self, digits: &[usize]) -> usize {
        debug_assert_eq!(digits.len(), self.users);
        digits.iter().fold(0, |acc, &d| acc * self.order + d)
    }
}

fn digits_of(mut n: usize, base: usize, width: usize) -> Vec<usize> {
    let mut digits = vec![0; width];
    for slot in digits.iter_mut().rev() {
        *slot = n % base;
        n /= base;
    }
    digits
}
