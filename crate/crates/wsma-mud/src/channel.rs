//! Spread MU-SIMO uplink channel: i.i.d. Rayleigh fading per user and
//! antenna, effective channels formed with the signature sequences, and
//! noisy received frames.
//!
//! With K users, N_r receive antennas and spreading length L, the received
//! vector at antenna r is `y_r = sum_k (h_kr ⊙ s_k) x_k + z_r`; stacking
//! the antenna blocks (antenna 0 first) gives `y = H_eff x + z` with the
//! effective channel column `h_k,eff = stack_r(h_kr ⊙ s_k)`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, RandomStream};
use crate::signatures::SignatureMatrix;

/// One draw of the propagation channels `h_kr` for every user and antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    users: usize,
    antennas: usize,
    spreading_length: usize,
    /// Flattened `[user][antenna][re]` gains, user-major.
    gains: Vec<Complex64>,
    variance: f64,
}

impl ChannelRealization {
    /// Sample `users * antennas * spreading_length` i.i.d. CN(0, sigma2_h)
    /// entries. The draw order is fixed (user-major, then antenna, then
    /// resource element) so a seed pins the realization.
    pub fn sample(
        users: usize,
        antennas: usize,
        spreading_length: usize,
        sigma2_h: f64,
        stream: &mut RandomStream,
    ) -> Self {
        let gains =
            stream.sample_complex_gaussian(users * antennas * spreading_length, sigma2_h);
        Self {
            users,
            antennas,
            spreading_length,
            gains,
            variance: sigma2_h,
        }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn spreading_length(&self) -> usize {
        self.spreading_length
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// The length-L channel from user `k` to antenna `r`.
    pub fn gain(&self, k: usize, r: usize) -> &[Complex64] {
        let l = self.spreading_length;
        let start = (k * self.antennas + r) * l;
        &self.gains[start..start + l]
    }

    /// User `k`'s propagation channel stacked over antennas
    /// (length `L * N_r`, antenna 0 first).
    pub fn stacked_user_channel(&self, k: usize) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.spreading_length * self.antennas);
        for r in 0..self.antennas {
            out.extend_from_slice(self.gain(k, r));
        }
        out
    }
}

/// The `(L * N_r) x K` effective channel `H_eff`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    matrix: ComplexMatrix,
    users: usize,
    antennas: usize,
    spreading_length: usize,
}

impl EffectiveChannel {
    /// Wrap an explicit `(L * N_r) x K` matrix, e.g. a hand-built channel.
    pub fn from_matrix(
        matrix: ComplexMatrix,
        antennas: usize,
        spreading_length: usize,
    ) -> Result<Self> {
        if matrix.rows() != antennas * spreading_length || matrix.cols() == 0 {
            return Err(Error::DimensionMismatch {
                context: "EffectiveChannel::from_matrix",
                expected: format!("{} rows and at least one column", antennas * spreading_length),
                got: format!("{}x{}", matrix.rows(), matrix.cols()),
            });
        }
        Ok(Self {
            users: matrix.cols(),
            antennas,
            spreading_length,
            matrix,
        })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn observation_len(&self) -> usize {
        self.spreading_length * self.antennas
    }

    /// Column `k`, i.e. `h_k,eff`.
    pub fn column(&self, k: usize) -> Vec<Complex64> {
        self.matrix.col(k)
    }
}

/// Form `H_eff` from a channel realization and the signature set: block `r`
/// of column `k` is the element-wise product `h_kr ⊙ s_k`.
pub fn effective_channel(
    ch: &ChannelRealization,
    signatures: &SignatureMatrix,
) -> Result<EffectiveChannel> {
    if ch.spreading_length() != signatures.spreading_length()
        || ch.users() != signatures.num_sequences()
    {
        return Err(Error::DimensionMismatch {
            context: "effective_channel",
            expected: format!(
                "channel (K={}, L={})",
                signatures.num_sequences(),
                signatures.spreading_length()
            ),
            got: format!("channel (K={}, L={})", ch.users(), ch.spreading_length()),
        });
    }
    let l = ch.spreading_length();
    let rows = l * ch.antennas();
    let mut matrix = ComplexMatrix::zeros(rows, ch.users());
    for k in 0..ch.users() {
        let s = signatures.column(k);
        for r in 0..ch.antennas() {
            let h = ch.gain(k, r);
            for i in 0..l {
                matrix[(r * l + i, k)] = h[i] * s[i];
            }
        }
    }
    Ok(EffectiveChannel {
        matrix,
        users: ch.users(),
        antennas: ch.antennas(),
        spreading_length: l,
    })
}

/// A received frame together with the ground truth that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub observation: Vec<Complex64>,
    pub true_symbols: Vec<Complex64>,
    pub noise_variance: f64,
}

/// `y = H_eff x + z` with fresh noise `z ~ CN(0, sigma2_z I)`.
pub fn transmit(
    symbols: &[Complex64],
    heff: &EffectiveChannel,
    sigma2_z: f64,
    stream: &mut RandomStream,
) -> ReceivedFrame {
    assert_eq!(symbols.len(), heff.users(), "one symbol per user");
    let mut observation = heff.matrix().mul_vec(symbols);
    let noise = stream.sample_complex_gaussian(observation.len(), sigma2_z);
    for (y, z) in observation.iter_mut().zip(&noise) {
        *y += z;
    }
    ReceivedFrame {
        observation,
        true_symbols: symbols.to_vec(),
        noise_variance: sigma2_z,
    }
}

/// Noise variance from the plotted SNR axis: the average per-user SNR per
/// resource element and receive antenna is `1 / sigma2_z`, so
/// `sigma2_z = 10^(-snr_db / 10)`.
pub fn snr_to_noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// The channel variance `1 / (L * N_r)` that normalizes the average per-user
/// received signal energy.
pub fn normalized_channel_variance(spreading_length: usize, antennas: usize) -> f64 {
    1.0 / (spreading_length * antennas) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::QamAlphabet;
    use crate::signatures::generate_grassmann;

    fn test_signatures(users: usize) -> SignatureMatrix {
        let mut stream = RandomStream::new(99);
        generate_grassmann(4, 2, &mut stream, 1e-3)
            .unwrap()
            .select(users)
            .unwrap()
    }

    #[test]
    fn zero_variance_channels_are_zero() {
        let mut stream = RandomStream::new(0);
        let ch = ChannelRealization::sample(2, 3, 2, 0.0, &mut stream);
        assert!(ch.gains.iter().all(|g| *g == Complex64::ZERO));
    }

    #[test]
    fn same_seed_same_realization() {
        let a = ChannelRealization::sample(2, 3, 2, 0.5, &mut RandomStream::new(8));
        let b = ChannelRealization::sample(2, 3, 2, 0.5, &mut RandomStream::new(8));
        assert_eq!(a, b);
    }

    #[test]
    fn per_user_channel_energy_is_unit() {
        // sigma2_h = 1/(L*Nr) makes the summed per-user channel energy 1.
        let (users, antennas, l) = (4, 3, 2);
        let sigma2_h = normalized_channel_variance(l, antennas);
        let mut stream = RandomStream::new(12);
        let trials = 20_000;
        let mut acc = vec![0.0f64; users];
        for _ in 0..trials {
            let ch = ChannelRealization::sample(users, antennas, l, sigma2_h, &mut stream);
            for (k, slot) in acc.iter_mut().enumerate() {
                *slot += crate::numerics::norm_sq(&ch.stacked_user_channel(k));
            }
        }
        for (k, total) in acc.iter().enumerate() {
            let mean = total / trials as f64;
            assert!((mean - 1.0).abs() < 0.02, "user {k}: mean energy {mean}");
        }
    }

    #[test]
    fn effective_channel_with_constant_signature() {
        // s_k = all-ones / sqrt(L) scales every entry by 1/sqrt(L).
        let l = 2;
        let inv = 1.0 / (l as f64).sqrt();
        let sigs = SignatureMatrix::from_columns(vec![
            vec![Complex64::new(inv, 0.0); l],
            vec![Complex64::new(inv, 0.0); l],
        ])
        .unwrap();
        let ch = ChannelRealization::sample(2, 3, l, 1.0, &mut RandomStream::new(21));
        let heff = effective_channel(&ch, &sigs).unwrap();
        for k in 0..2 {
            let col = heff.column(k);
            let want = ch.stacked_user_channel(k);
            for (got, h) in col.iter().zip(&want) {
                assert!((got - h * inv).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn effective_channel_matches_scalar_recomputation() {
        let sigs = test_signatures(2);
        let ch = ChannelRealization::sample(2, 3, 2, 0.5, &mut RandomStream::new(22));
        let heff = effective_channel(&ch, &sigs).unwrap();
        for k in 0..2 {
            for r in 0..3 {
                for i in 0..2 {
                    let want = ch.gain(k, r)[i] * sigs.column(k)[i];
                    assert_eq!(heff.matrix()[(r * 2 + i, k)], want);
                }
            }
        }
    }

    #[test]
    fn effective_channel_rejects_mismatch() {
        let sigs = test_signatures(2);
        let ch = ChannelRealization::sample(3, 3, 2, 0.5, &mut RandomStream::new(23));
        assert!(effective_channel(&ch, &sigs).is_err());
    }

    #[test]
    fn noiseless_transmit_is_exact_product() {
        let sigs = test_signatures(2);
        let ch = ChannelRealization::sample(2, 3, 2, 0.5, &mut RandomStream::new(24));
        let heff = effective_channel(&ch, &sigs).unwrap();
        let q = QamAlphabet::new(4).unwrap();
        let x = vec![q.symbol(1), q.symbol(2)];
        let frame = transmit(&x, &heff, 0.0, &mut RandomStream::new(25));
        assert_eq!(frame.observation, heff.matrix().mul_vec(&x));
        assert_eq!(frame.true_symbols, x);
    }

    #[test]
    fn antenna_sum_form_matches_stacked_form() {
        // Recompute y antenna by antenna from the elementwise products and
        // compare against the matrix form, noise included.
        let sigs = test_signatures(2);
        let ch = ChannelRealization::sample(2, 3, 2, 0.5, &mut RandomStream::new(26));
        let heff = effective_channel(&ch, &sigs).unwrap();
        let q = QamAlphabet::new(4).unwrap();
        let x = vec![q.symbol(0), q.symbol(3)];

        let frame = transmit(&x, &heff, 0.2, &mut RandomStream::new(27));
        let noise = RandomStream::new(27).sample_complex_gaussian(6, 0.2);

        for r in 0..3 {
            for i in 0..2 {
                let mut want = noise[r * 2 + i];
                for k in 0..2 {
                    want += ch.gain(k, r)[i] * sigs.column(k)[i] * x[k];
                }
                let got = frame.observation[r * 2 + i];
                assert!((got - want).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn transmit_is_linear_in_symbols() {
        let sigs = test_signatures(2);
        let ch = ChannelRealization::sample(2, 3, 2, 0.5, &mut RandomStream::new(28));
        let heff = effective_channel(&ch, &sigs).unwrap();
        let a = vec![Complex64::new(1.0, 1.0), Complex64::new(-1.0, 1.0)];
        let b = vec![Complex64::new(0.5, -0.25), Complex64::new(0.0, 2.0)];
        let sum: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let fa = transmit(&a, &heff, 0.0, &mut RandomStream::new(0));
        let fb = transmit(&b, &heff, 0.0, &mut RandomStream::new(0));
        let fsum = transmit(&sum, &heff, 0.0, &mut RandomStream::new(0));
        for i in 0..6 {
            let lin = fa.observation[i] + fb.observation[i];
            assert!((fsum.observation[i] - lin).norm() < 1e-12);
        }
    }

    #[test]
    fn received_energy_bookkeeping() {
        // Per-user received signal energy E||h_eff x||^2 is unit for the
        // normalized setup (sigma2_h = 1/(L*Nr), 4-QAM at log2(M) energy).
        let sigs = test_signatures(1);
        let sigma2_h = normalized_channel_variance(2, 3);
        let q = QamAlphabet::new(4).unwrap();
        let mut stream = RandomStream::new(31);
        let trials = 20_000;
        let mut acc = 0.0;
        for t in 0..trials {
            let ch = ChannelRealization::sample(1, 3, 2, sigma2_h, &mut stream);
            let heff = effective_channel(&ch, &sigs).unwrap();
            let x = vec![q.symbol(t % 4)];
            let frame = transmit(&x, &heff, 0.0, &mut RandomStream::new(0));
            acc += crate::numerics::norm_sq(&frame.observation);
        }
        let mean = acc / trials as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean received energy {mean}");
    }

    #[test]
    fn snr_conversion() {
        assert!((snr_to_noise_variance(0.0) - 1.0).abs() < 1e-15);
        assert!((snr_to_noise_variance(20.0) - 0.01).abs() < 1e-15);
        // The training point -18 dB reads as a small variance (high SNR).
        let v = snr_to_noise_variance(-18.0);
        assert!((v - 63.095734448019364).abs() < 1e-9);
        let train = 10f64.powf(-1.8);
        assert!((train - 0.015848931924611134).abs() < 1e-15);
    }
}
