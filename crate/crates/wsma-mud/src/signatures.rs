//! Signature-sequence design: Welch-bound-equality sets by total-squared-
//! correlation minimization and equiangular Grassmann line packings by
//! worst-case-coherence minimization.
//!
//! Both generators run alternating projections between the set of
//! unit-norm-column matrices and a target set (tight frames for WBE,
//! clipped Gram matrices for Grassmann), with random restarts drawn from a
//! caller-provided [`RandomStream`].

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{hermitian_eigen, inner, norm_sq, ComplexMatrix, RandomStream};

/// Default iteration budget shared by both generators.
pub const DEFAULT_ITERATION_BUDGET: usize = 10_000;
/// Default TSC tolerance for WBE generation.
pub const DEFAULT_WBE_TOL: f64 = 1e-6;
/// Default coherence tolerance for Grassmann generation.
pub const DEFAULT_GRASSMANN_TOL: f64 = 1e-3;

/// An L x K spread matrix with unit-norm columns and its correlation
/// metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureMatrix {
    spreading_length: usize,
    columns: Vec<Vec<Complex64>>,
    tsc: f64,
    coherence: f64,
    coherence_defined: bool,
}

impl SignatureMatrix {
    /// Wrap explicit columns. Columns must be non-empty, equal-length and
    /// unit-norm (to 1e-6; generation normalizes far tighter).
    pub fn from_columns(columns: Vec<Vec<Complex64>>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::EmptyInput("signature matrix columns"));
        }
        let spreading_length = columns[0].len();
        if spreading_length == 0 {
            return Err(Error::EmptyInput("signature column"));
        }
        for (k, col) in columns.iter().enumerate() {
            if col.len() != spreading_length {
                return Err(Error::DimensionMismatch {
                    context: "signature matrix",
                    expected: format!("column length {spreading_length}"),
                    got: format!("column {k} has length {}", col.len()),
                });
            }
            let norm = norm_sq(col).sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::DimensionMismatch {
                    context: "signature matrix",
                    expected: "unit-norm columns".into(),
                    got: format!("column {k} has norm {norm}"),
                });
            }
        }
        let tsc = tsc_of(&columns);
        let (coherence, coherence_defined) = match coherence_of(&columns) {
            Some(mu) => (mu, true),
            None => (0.0, false),
        };
        Ok(Self {
            spreading_length,
            columns,
            tsc,
            coherence,
            coherence_defined,
        })
    }

    /// Number of sequences K.
    pub fn num_sequences(&self) -> usize {
        self.columns.len()
    }

    /// Spreading length L.
    pub fn spreading_length(&self) -> usize {
        self.spreading_length
    }

    /// Overloading factor K / L.
    pub fn overloading_factor(&self) -> f64 {
        self.num_sequences() as f64 / self.spreading_length as f64
    }

    pub fn column(&self, k: usize) -> &[Complex64] {
        &self.columns[k]
    }

    pub fn columns(&self) -> &[Vec<Complex64>] {
        &self.columns
    }

    /// Total squared correlation, `sum_{k,j} |s_k^H s_j|^2` over all pairs
    /// including k = j.
    pub fn tsc(&self) -> f64 {
        self.tsc
    }

    /// Worst-case coherence `max_{k != j} |s_k^H s_j|`. Needs at least two
    /// sequences.
    pub fn coherence(&self) -> Result<f64> {
        if self.coherence_defined {
            Ok(self.coherence)
        } else {
            Err(Error::EmptyInput("coherence needs at least two sequences"))
        }
    }

    /// Coherence, or 0 for a single-sequence set (flagged by
    /// [`SignatureMatrix::coherence_defined`]).
    pub fn coherence_or_zero(&self) -> f64 {
        self.coherence
    }

    pub fn coherence_defined(&self) -> bool {
        self.coherence_defined
    }

    /// Spread (max - min) of the off-diagonal correlation magnitudes; zero
    /// means the set is equiangular. Returns 0 for fewer than two pairs.
    pub fn correlation_spread(&self) -> f64 {
        let k = self.num_sequences();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in 0..k {
            for b in a + 1..k {
                let rho = inner(&self.columns[a], &self.columns[b]).norm();
                lo = lo.min(rho);
                hi = hi.max(rho);
            }
        }
        if hi.is_finite() {
            hi - lo
        } else {
            0.0
        }
    }

    /// Keep the first `k_used` sequences, recomputing all metrics.
    pub fn select(&self, k_used: usize) -> Result<Self> {
        if k_used == 0 || k_used > self.num_sequences() {
            return Err(Error::SequenceSelection {
                requested: k_used,
                available: self.num_sequences(),
            });
        }
        Self::from_columns(self.columns[..k_used].to_vec())
    }

    /// The L x K matrix form.
    pub fn as_matrix(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.spreading_length, self.num_sequences(), |i, j| {
            self.columns[j][i]
        })
    }

    /// Versioned text export. One header block, then one `s` line per
    /// sequence holding L `re,im` pairs printed with 17 significant digits
    /// so the round-trip is bit-exact.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("wsma-signatures v1\n");
        let _ = writeln!(out, "L {}", self.spreading_length);
        let _ = writeln!(out, "K {}", self.num_sequences());
        let _ = writeln!(out, "tsc {:.16e}", self.tsc);
        let _ = writeln!(out, "coherence {:.16e}", self.coherence);
        for col in &self.columns {
            out.push('s');
            for z in col {
                let _ = write!(out, " {:.16e},{:.16e}", z.re, z.im);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::SequenceFormat("empty file".into()))?;
        if header.trim() != "wsma-signatures v1" {
            return Err(Error::SequenceFormat(format!(
                "unexpected header {header:?}"
            )));
        }
        let mut l = None;
        let mut k = None;
        let mut columns = Vec::new();
        for line in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("L") => l = Some(parse_count(parts.next(), "L")?),
                Some("K") => k = Some(parse_count(parts.next(), "K")?),
                // Header metrics are informational; they are recomputed
                // from the parsed columns.
                Some("tsc") | Some("coherence") => {}
                Some("s") => {
                    let mut col = Vec::new();
                    for pair in parts {
                        let (re, im) = pair.split_once(',').ok_or_else(|| {
                            Error::SequenceFormat(format!("bad entry {pair:?}"))
                        })?;
                        let re: f64 = re.parse().map_err(|_| {
                            Error::SequenceFormat(format!("bad real part {re:?}"))
                        })?;
                        let im: f64 = im.parse().map_err(|_| {
                            Error::SequenceFormat(format!("bad imaginary part {im:?}"))
                        })?;
                        col.push(Complex64::new(re, im));
                    }
                    columns.push(col);
                }
                other => {
                    return Err(Error::SequenceFormat(format!(
                        "unexpected line starting with {other:?}"
                    )))
                }
            }
        }
        let (l, k) = match (l, k) {
            (Some(l), Some(k)) => (l, k),
            _ => return Err(Error::SequenceFormat("missing L or K header".into())),
        };
        if columns.len() != k {
            return Err(Error::SequenceFormat(format!(
                "expected {k} sequences, found {}",
                columns.len()
            )));
        }
        if columns.iter().any(|c| c.len() != l) {
            return Err(Error::SequenceFormat(format!(
                "sequence length does not match L = {l}"
            )));
        }
        Self::from_columns(columns)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }
}

fn parse_count(token: Option<&str>, what: &str) -> Result<usize> {
    token
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::SequenceFormat(format!("bad {what} header")))
}

fn tsc_of(columns: &[Vec<Complex64>]) -> f64 {
    let k = columns.len();
    let mut total = 0.0;
    for a in 0..k {
        for b in 0..k {
            total += inner(&columns[a], &columns[b]).norm_sqr();
        }
    }
    total
}

fn coherence_of(columns: &[Vec<Complex64>]) -> Option<f64> {
    let k = columns.len();
    if k < 2 {
        return None;
    }
    let mut mu = 0.0f64;
    for a in 0..k {
        for b in a + 1..k {
            mu = mu.max(inner(&columns[a], &columns[b]).norm());
        }
    }
    Some(mu)
}

/// Lower bound `K^2 / L` on the total squared correlation of K unit-norm
/// sequences of length L. Requires the overloaded regime K >= L >= 1.
pub fn welch_bound(sequences: usize, length: usize) -> Result<f64> {
    if length < 1 || sequences < length {
        return Err(Error::SpreadingRegime {
            sequences,
            length,
            min_length: 1,
        });
    }
    Ok((sequences * sequences) as f64 / length as f64)
}

/// Lower bound on the worst-case coherence of K > L unit-norm sequences;
/// zero when K = L (an orthonormal set exists).
pub fn coherence_bound(sequences: usize, length: usize) -> Result<f64> {
    if length < 1 || sequences < length {
        return Err(Error::SpreadingRegime {
            sequences,
            length,
            min_length: 1,
        });
    }
    if sequences == length {
        return Ok(0.0);
    }
    Ok((((sequences - length) as f64) / ((length * (sequences - 1)) as f64)).sqrt())
}

fn random_unit_columns(
    sequences: usize,
    length: usize,
    stream: &mut RandomStream,
) -> Vec<Vec<Complex64>> {
    (0..sequences)
        .map(|_| {
            let mut col = stream.sample_complex_gaussian(length, 1.0);
            normalize(&mut col);
            col
        })
        .collect()
}

fn normalize(col: &mut [Complex64]) {
    let n = norm_sq(col).sqrt();
    if n > 0.0 {
        for z in col.iter_mut() {
            *z /= n;
        }
    } else {
        col[0] = Complex64::ONE;
    }
}

/// `A^{-1/2}` for Hermitian positive-definite `A`. Returns `None` when an
/// eigenvalue is numerically non-positive (degenerate start).
fn inverse_sqrt(a: &ComplexMatrix) -> Option<ComplexMatrix> {
    let n = a.rows();
    let (values, vectors) = hermitian_eigen(a).ok()?;
    if values.iter().any(|&v| v <= 1e-12) {
        return None;
    }
    let mut out = ComplexMatrix::zeros(n, n);
    for (idx, &lambda) in values.iter().enumerate() {
        let w = 1.0 / lambda.sqrt();
        let col = vectors.col(idx);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += col[i] * col[j].conj() * w;
            }
        }
    }
    Some(out)
}

/// Generate a Welch-bound-equality set: K unit-norm length-L sequences
/// whose TSC is within `tol` of the bound `K^2 / L`.
///
/// Alternates between projecting onto tight frames (through the polar-type
/// update `S <- (S S^H)^{-1/2} S`) and renormalizing columns. The result is
/// not unique; different seeds give different matrices with the same TSC.
pub fn generate_wbe(
    sequences: usize,
    length: usize,
    stream: &mut RandomStream,
    tol: f64,
) -> Result<SignatureMatrix> {
    if length < 2 || sequences < length {
        return Err(Error::SpreadingRegime {
            sequences,
            length,
            min_length: 2,
        });
    }
    let bound = welch_bound(sequences, length)?;
    let mut best = f64::INFINITY;

    let restarts = 8;
    let iters_per_restart = DEFAULT_ITERATION_BUDGET / restarts;
    for restart in 0..restarts {
        let mut sub = stream.child(restart as u64);
        let mut columns = random_unit_columns(sequences, length, &mut sub);
        for _ in 0..iters_per_restart {
            let tsc = tsc_of(&columns);
            best = best.min(tsc);
            if tsc <= bound + tol {
                return SignatureMatrix::from_columns(columns);
            }
            // Frame operator S S^H.
            let mut frame = ComplexMatrix::zeros(length, length);
            for col in &columns {
                for i in 0..length {
                    for j in 0..length {
                        frame[(i, j)] += col[i] * col[j].conj();
                    }
                }
            }
            let Some(isq) = inverse_sqrt(&frame) else {
                break; // degenerate start; try the next restart
            };
            for col in columns.iter_mut() {
                let mapped = isq.mul_vec(col);
                col.copy_from_slice(&mapped);
                normalize(col);
            }
        }
        let tsc = tsc_of(&columns);
        best = best.min(tsc);
        if tsc <= bound + tol {
            return SignatureMatrix::from_columns(columns);
        }
    }
    Err(Error::OptimizationFailed {
        goal: "welch-bound-equality TSC",
        best,
        tolerance: tol,
    })
}

/// Generate a Grassmann line packing: K unit-norm length-L sequences whose
/// worst-case coherence is within `tol` of the coherence lower bound. For
/// K = 4, L = 2 the optimum is an equiangular set with common correlation
/// `1/sqrt(3) = 0.577`.
///
/// Alternates between clipping the Gram matrix (unit diagonal, off-diagonal
/// magnitudes at most the bound) and projecting back to a rank-L positive
/// semidefinite Gram, restarting from fresh random sets as needed.
pub fn generate_grassmann(
    sequences: usize,
    length: usize,
    stream: &mut RandomStream,
    tol: f64,
) -> Result<SignatureMatrix> {
    if length < 2 || sequences < length {
        return Err(Error::SpreadingRegime {
            sequences,
            length,
            min_length: 2,
        });
    }
    let target = coherence_bound(sequences, length)?;
    let mut best_mu = f64::INFINITY;
    let mut best_columns: Option<Vec<Vec<Complex64>>> = None;

    let restarts = 8;
    let iters_per_restart = DEFAULT_ITERATION_BUDGET / restarts;
    'restarts: for restart in 0..restarts {
        let mut sub = stream.child(restart as u64);
        let mut columns = random_unit_columns(sequences, length, &mut sub);
        for _ in 0..iters_per_restart {
            // Gram matrix with clipped off-diagonal magnitudes.
            let mut gram = ComplexMatrix::zeros(sequences, sequences);
            for a in 0..sequences {
                for b in 0..sequences {
                    gram[(a, b)] = inner(&columns[a], &columns[b]);
                }
            }
            for a in 0..sequences {
                for b in 0..sequences {
                    if a == b {
                        gram[(a, b)] = Complex64::ONE;
                    } else {
                        let mag = gram[(a, b)].norm();
                        if mag > target {
                            gram[(a, b)] *= target / mag;
                        }
                    }
                }
            }
            // Nearest rank-L factorization: keep the top L eigenpairs.
            let Ok((values, vectors)) = hermitian_eigen(&gram) else {
                continue 'restarts;
            };
            for (k, col) in columns.iter_mut().enumerate() {
                for (i, slot) in col.iter_mut().enumerate() {
                    let lambda = values[i].max(0.0);
                    *slot = lambda.sqrt() * vectors[(k, i)].conj();
                }
                normalize(col);
            }

            if let Some(mu) = coherence_of(&columns) {
                if mu < best_mu {
                    best_mu = mu;
                    best_columns = Some(columns.clone());
                }
                // Keep polishing past the caller's tolerance; stop a
                // restart only once essentially converged to the bound.
                if mu <= target + 1e-9 {
                    break 'restarts;
                }
            }
        }
    }

    if let Some(columns) = best_columns {
        if best_mu <= target + tol {
            return SignatureMatrix::from_columns(columns);
        }
    }
    Err(Error::OptimizationFailed {
        goal: "grassmann coherence",
        best: best_mu,
        tolerance: tol,
    })
}
