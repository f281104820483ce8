//! Complex linear-algebra kernels and the seeded random source shared by
//! every other module.
//!
//! Everything here is deterministic: the same [`RandomStream`] seed yields
//! the same sample sequence on every run of the same build, and child
//! streams derived from `(seed, index)` are independent by construction.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the generator scheme, recorded in checkpoints and result logs so
/// experiments can be replayed.
pub const RNG_ALGORITHM: &str = "chacha8+splitmix64-children";

/// Seeded random source.
///
/// Wraps a ChaCha8 generator. Child streams are derived by mixing the
/// parent seed with a child index through a SplitMix64 finalizer, so a
/// parallel consumer can grab stream `i` without observing any other
/// stream's draws.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Seed this stream was created with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive the `index`-th child stream. Uses only `(seed, index)`, not
    /// the current position, so the parent is left untouched.
    pub fn child(&self, index: u64) -> Self {
        Self::new(mix_seed(self.seed, index))
    }

    /// One standard normal draw.
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// `n` i.i.d. circularly-symmetric complex Gaussian samples with total
    /// variance `total_variance` (i.e. variance `total_variance / 2` in each
    /// of the real and imaginary parts). Zero variance is allowed and yields
    /// exact zeros.
    pub fn sample_complex_gaussian(&mut self, n: usize, total_variance: f64) -> Vec<Complex64> {
        assert!(
            total_variance >= 0.0,
            "total_variance must be non-negative"
        );
        let std = (total_variance / 2.0).sqrt();
        (0..n)
            .map(|_| Complex64::new(std * self.standard_normal(), std * self.standard_normal()))
            .collect()
    }

    /// Uniform index in `0..n`.
    pub fn uniform_index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        slice.shuffle(&mut self.rng);
    }
}

/// SplitMix64 finalizer over the (seed, index) pair.
fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Dense complex matrix with row-major storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row `i` as a contiguous slice.
    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Column `j`, copied out.
    pub fn col(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    /// `self * other`.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == Complex64::ZERO {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    /// `self * v`.
    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .map(|(a, x)| a * x)
                    .sum::<Complex64>()
            })
            .collect()
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

/// `sum_i conj(a_i) * b_i`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Squared l2 norm.
pub fn norm_sq(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// Solve `A x = b` for Hermitian positive-definite `A` via a Cholesky
/// factorization. Only the lower triangle of `A` is read. A non-positive
/// pivot aborts with [`Error::NotPositiveDefinite`].
pub fn solve_hermitian_system(a: &ComplexMatrix, b: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::DimensionMismatch {
            context: "solve_hermitian_system",
            expected: format!("square A with matching b (n={n})"),
            got: format!("A {}x{}, b len {}", a.rows(), a.cols(), b.len()),
        });
    }

    // Lower-triangular factor L with A = L L^H.
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        let ljj = d.sqrt();
        l[(j, j)] = Complex64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }

    // Forward substitution: L y = b.
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let t = l[(i, k)] * y[k];
            y[i] -= t;
        }
        y[i] /= l[(i, i)].re;
    }
    // Back substitution: L^H x = y.
    let mut x = y;
    for i in (0..n).rev() {
        for k in i + 1..n {
            let t = l[(k, i)].conj() * x[k];
            x[i] -= t;
        }
        x[i] /= l[(i, i)].re;
    }
    Ok(x)
}

/// Index of the largest entry, smallest index winning ties. NaN entries
/// never win.
pub fn argmax_with_tie_break(v: &[f64]) -> Result<usize> {
    if v.is_empty() {
        return Err(Error::EmptyInput("argmax_with_tie_break"));
    }
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Eigendecomposition of a Hermitian matrix by the cyclic Jacobi method.
///
/// Returns `(values, vectors)` with eigenvalues sorted descending and the
/// matching eigenvectors as columns. Only intended for the small matrices
/// used in sequence design (n <= 16 or so).
pub fn hermitian_eigen(a: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch {
            context: "hermitian_eigen",
            expected: "square matrix".into(),
            got: format!("{}x{}", a.rows(), a.cols()),
        });
    }
    let mut m = a.clone();
    let mut v = ComplexMatrix::identity(n);
    let scale = (0..n)
        .map(|i| m.row(i).iter().map(|x| x.norm_sqr()).sum::<f64>())
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.norm() <= 1e-300 {
                    continue;
                }
                // Phase that makes the (p,q) block real, then a real Jacobi
                // rotation that zeroes it.
                let phase = apq / apq.norm();
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let tau = (aqq - app) / (2.0 * apq.norm());
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // Unitary acting on columns p and q:
                //   [ c        s ]
                //   [-s*ph^*   c*ph^* ]  with ph = phase, applied as G below.
                let g_pp = Complex64::new(c, 0.0);
                let g_pq = Complex64::new(s, 0.0);
                let g_qp = -s * phase.conj();
                let g_qq = c * phase.conj();

                // m <- G^H m G ; update columns then rows.
                for i in 0..n {
                    let mip = m[(i, p)];
                    let miq = m[(i, q)];
                    m[(i, p)] = mip * g_pp + miq * g_qp;
                    m[(i, q)] = mip * g_pq + miq * g_qq;
                }
                for j in 0..n {
                    let mpj = m[(p, j)];
                    let mqj = m[(q, j)];
                    m[(p, j)] = g_pp.conj() * mpj + g_qp.conj() * mqj;
                    m[(q, j)] = g_pq.conj() * mpj + g_qq.conj() * mqj;
                }
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = vip * g_pp + viq * g_qp;
                    v[(i, q)] = vip * g_pq + viq * g_qq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let values: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    order.sort_by(|&i, &j| values[j].partial_cmp(&values[i]).unwrap());
    let sorted_values: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let sorted_vectors = ComplexMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok((sorted_values, sorted_vectors))
}
