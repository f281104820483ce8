//! Classical multiuser detectors: exhaustive maximum likelihood, per-user
//! matched filter, iterative parallel interference cancellation on top of
//! the matched filter, and joint MMSE equalization.
//!
//! All detectors are deterministic functions of the observation, the
//! effective channel and (for MMSE) the noise variance.

use num_complex::Complex64;

use crate::channel::EffectiveChannel;
use crate::constellation::{QamAlphabet, SymbolGrid};
use crate::error::{Error, Result};
use crate::numerics::{inner, norm_sq, solve_hermitian_system, ComplexMatrix};

/// Joint decision for all users.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// Per-user alphabet indices, first user first.
    pub symbol_indices: Vec<usize>,
    /// Index into the joint symbol grid, consistent with `symbol_indices`.
    pub joint_index: usize,
    /// Detector-specific score. For the detectors in this module it is the
    /// squared residual `||y - H_eff x_hat||^2` of the decision.
    pub metric: f64,
}

impl DetectionResult {
    pub(crate) fn new(symbol_indices: Vec<usize>, order: usize, metric: f64) -> Self {
        let joint_index = symbol_indices.iter().fold(0, |acc, &d| acc * order + d);
        Self {
            symbol_indices,
            joint_index,
            metric,
        }
    }
}

fn residual_sq(y: &[Complex64], heff: &ComplexMatrix, x: &[Complex64]) -> f64 {
    let hx = heff.mul_vec(x);
    y.iter()
        .zip(&hx)
        .map(|(yi, hi)| (yi - hi).norm_sqr())
        .sum()
}

/// Exhaustive maximum-likelihood detection: minimize
/// `||y - H_eff x_n||^2` over every candidate in the joint symbol grid,
/// smallest grid index winning ties.
pub fn detect_ml(y: &[Complex64], heff: &EffectiveChannel, grid: &SymbolGrid) -> DetectionResult {
    let h = heff.matrix();
    let mut best_n = 0;
    let mut best_metric = f64::INFINITY;
    for n in 0..grid.len() {
        let metric = residual_sq(y, h, grid.entry(n));
        if metric < best_metric {
            best_metric = metric;
            best_n = n;
        }
    }
    DetectionResult::new(grid.digits(best_n), grid.order(), best_metric)
}

fn matched_filter_statistics(
    y: &[Complex64],
    heff: &EffectiveChannel,
) -> Result<Vec<Complex64>> {
    (0..heff.users())
        .map(|k| {
            let hk = heff.column(k);
            let energy = norm_sq(&hk);
            if energy == 0.0 {
                return Err(Error::DimensionMismatch {
                    context: "matched filter",
                    expected: "non-zero effective channel".into(),
                    got: format!("user {k} has zero channel energy"),
                });
            }
            Ok(inner(&hk, y) / energy)
        })
        .collect()
}

fn slice_all(stats: &[Complex64], alphabet: &QamAlphabet) -> Vec<usize> {
    stats
        .iter()
        .map(|&v| alphabet.slice_to_nearest(v))
        .collect()
}

/// Per-user matched filtering: correlate with each user's effective
/// channel, normalize by its energy and slice, ignoring the interferers.
pub fn detect_mf(
    y: &[Complex64],
    heff: &EffectiveChannel,
    alphabet: &QamAlphabet,
) -> Result<DetectionResult> {
    let stats = matched_filter_statistics(y, heff)?;
    let indices = slice_all(&stats, alphabet);
    let decided: Vec<Complex64> = indices.iter().map(|&i| alphabet.symbol(i)).collect();
    let metric = residual_sq(y, heff.matrix(), &decided);
    Ok(DetectionResult::new(indices, alphabet.order(), metric))
}

/// Matched filter followed by `iterations` rounds of parallel interference
/// cancellation: every round rebuilds each user's interference from the
/// previous hard decisions, subtracts it and re-slices.
pub fn detect_mf_pic(
    y: &[Complex64],
    heff: &EffectiveChannel,
    alphabet: &QamAlphabet,
    iterations: usize,
) -> Result<DetectionResult> {
    assert!(iterations >= 1, "at least one cancellation round");
    let users = heff.users();
    let columns: Vec<Vec<Complex64>> = (0..users).map(|k| heff.column(k)).collect();
    let energies: Vec<f64> = columns.iter().map(|c| norm_sq(c)).collect();
    if energies.iter().any(|&e| e == 0.0) {
        return Err(Error::DimensionMismatch {
            context: "matched filter",
            expected: "non-zero effective channel".into(),
            got: "a user has zero channel energy".into(),
        });
    }

    // Round 0: plain matched filter.
    let mut decisions = slice_all(&matched_filter_statistics(y, heff)?, alphabet);

    let mut cleaned = vec![Complex64::ZERO; y.len()];
    for _ in 0..iterations {
        let previous = decisions.clone();
        for k in 0..users {
            // y minus the reconstructed interference of everyone else.
            cleaned.copy_from_slice(y);
            for (j, col) in columns.iter().enumerate() {
                if j == k {
                    continue;
                }
                let xj = alphabet.symbol(previous[j]);
                for (c, h) in cleaned.iter_mut().zip(col) {
                    *c -= h * xj;
                }
            }
            let stat = inner(&columns[k], &cleaned) / energies[k];
            decisions[k] = alphabet.slice_to_nearest(stat);
        }
    }

    let decided: Vec<Complex64> = decisions.iter().map(|&i| alphabet.symbol(i)).collect();
    let metric = residual_sq(y, heff.matrix(), &decided);
    Ok(DetectionResult::new(decisions, alphabet.order(), metric))
}

/// Joint MMSE equalization
/// `x_tilde = (H^H H + (sigma2_z / E_s) I)^{-1} H^H y` with `E_s = log2 M`,
/// followed by per-user slicing.
pub fn detect_mmse(
    y: &[Complex64],
    heff: &EffectiveChannel,
    sigma2_z: f64,
    alphabet: &QamAlphabet,
) -> Result<DetectionResult> {
    let h = heff.matrix();
    let hh = h.conj_transpose();
    let mut gram = hh.mul(h);
    let load = sigma2_z / alphabet.per_symbol_energy();
    for k in 0..heff.users() {
        gram[(k, k)] += load;
    }
    let rhs = hh.mul_vec(y);
    let estimate = solve_hermitian_system(&gram, &rhs)?;
    let indices = slice_all(&estimate, alphabet);
    let decided: Vec<Complex64> = indices.iter().map(|&i| alphabet.symbol(i)).collect();
    let metric = residual_sq(y, h, &decided);
    Ok(DetectionResult::new(indices, alphabet.order(), metric))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{effective_channel, transmit, ChannelRealization};
    use crate::numerics::RandomStream;
    use crate::signatures::{generate_grassmann, SignatureMatrix};

    fn setup(
        users: usize,
        seed: u64,
    ) -> (QamAlphabet, SymbolGrid, SignatureMatrix) {
        let alphabet = QamAlphabet::new(4).unwrap();
        let grid = SymbolGrid::enumerate(users, &alphabet).unwrap();
        let sigs = generate_grassmann(4, 2, &mut RandomStream::new(seed), 1e-3)
            .unwrap()
            .select(users)
            .unwrap();
        (alphabet, grid, sigs)
    }

    #[test]
    fn ml_recovers_every_noiseless_symbol() {
        let (_, grid, sigs) = setup(2, 40);
        let ch = ChannelRealization::sample(2, 3, 2, 1.0 / 6.0, &mut RandomStream::new(41));
        let heff = effective_channel(&ch, &sigs).unwrap();
        for n in 0..grid.len() {
            let y = heff.matrix().mul_vec(grid.entry(n));
            let got = detect_ml(&y, &heff, &grid);
            assert_eq!(got.joint_index, n);
            assert_eq!(got.symbol_indices, grid.digits(n));
            assert!(got.metric < 1e-20);
        }
    }

    #[test]
    fn ml_metric_is_reported_residual() {
        let (_, grid, sigs) = setup(2, 42);
        let ch = ChannelRealization::sample(2, 3, 2, 1.0 / 6.0, &mut RandomStream::new(43));
        let heff = effective_channel(&ch, &sigs).unwrap();
        let frame = transmit(grid.entry(7), &heff, 0.1, &mut RandomStream::new(44));
        let got = detect_ml(&frame.observation, &heff, &grid);
        let recomputed = residual_sq(
            &frame.observation,
            heff.matrix(),
            grid.entry(got.joint_index),
        );
        assert_eq!(got.metric, recomputed);
    }

    #[test]
    fn ml_matches_naive_oracle_on_noisy_instances() {
        // Independently coded exhaustive search (plain loops, no shared
        // helpers) must agree on every random instance.
        let (_, grid, sigs) = setup(2, 45);
        let mut stream = RandomStream::new(46);
        for trial in 0..200 {
            let t = stream.child(trial);
            let ch = ChannelRealization::sample(2, 3, 2, 1.0 / 6.0, &mut t.child(0));
            let heff = effective_channel(&ch, &sigs).unwrap();
            let n = t.child(1).uniform_index(grid.len());
            let frame = transmit(grid.entry(n), &heff, 0.05, &mut t.child(2));

            let mut best = (f64::INFINITY, 0usize);
            for cand in 0..grid.len() {
                let mut acc = 0.0;
                for row in 0..frame.observation.len() {
                    let mut hx = Complex64::ZERO;
                    for (k, x) in grid.entry(cand).iter().enumerate() {
                        hx += heff.matrix()[(row, k)] * x;
                    }
                    acc += (frame.observation[row] - hx).norm_sqr();
                }
                if acc < best.0 {
                    best = (acc, cand);
                }
            }
            let got = detect_ml(&frame.observation, &heff, &grid);
            assert_eq!(got.joint_index, best.1, "trial {trial}");
        }
    }

    #[test]
    fn single_user_ml_equals_sliced_matched_filter() {
        let alphabet = QamAlphabet::new(4).unwrap();
        let grid = SymbolGrid::enumerate(1, &alphabet).unwrap();
        let sigs = SignatureMatrix::from_columns(vec![vec![Complex64::ONE]]).unwrap();
        let mut stream = RandomStream::new(47);
        for trial in 0..50 {
            let t = stream.child(trial);
            let ch = ChannelRealization::sample(1, 1, 1, 1.0, &mut t.child(0));
            let heff = effective_channel(&ch, &sigs).unwrap();
            let n = t.child(1).uniform_index(4);
            let frame = transmit(grid.entry(n), &heff, 0.3, &mut t.child(2));
            let ml = detect_ml(&frame.observation, &heff, &grid);
            let mf = detect_mf(&frame.observation, &heff, &alphabet).unwrap();
            assert_eq!(ml.symbol_indices, mf.symbol_indices);
        }
    }

    #[test]
    fn mf_exact_for_single_user_noiseless() {
        let (alphabet, grid, _) = setup(2, 48);
        let sigs = generate_grassmann(4, 2, &mut RandomStream::new(48), 1e-3)
            .unwrap()
            .select(1)
            .unwrap();
        let single_grid = SymbolGrid::enumerate(1, &alphabet).unwrap();
        let ch = ChannelRealization::sample(1, 3, 2, 1.0 / 6.0, &mut RandomStream::new(49));
        let heff = effective_channel(&ch, &sigs).unwrap();
        for n in 0..single_grid.len() {
            let y = heff.matrix().mul_vec(single_grid.entry(n));
            let got = detect_mf(&y, &heff, &alphabet).unwrap();
            assert_eq!(got.symbol_indices, single_grid.digits(n));
        }
        let _ = grid;
    }

    #[test]
    fn mf_exact_for_orthogonal_channels() {
        // Hand-built orthogonal effective channels leak no interference.
        let alphabet = QamAlphabet::new(4).unwrap();
        let mut m = ComplexMatrix::zeros(4, 2);
        m[(0, 0)] = Complex64::new(0.8, 0.1);
        m[(1, 0)] = Complex64::new(-0.2, 0.4);
        m[(2, 1)] = Complex64::new(0.5, -0.3);
        m[(3, 1)] = Complex64::new(0.1, 0.9);
        let heff = EffectiveChannel::from_matrix(m, 2, 2).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let x = vec![alphabet.symbol(a), alphabet.symbol(b)];
                let y = heff.matrix().mul_vec(&x);
                let got = detect_mf(&y, &heff, &alphabet).unwrap();
                assert_eq!(got.symbol_indices, vec![a, b]);
                let pic = detect_mf_pic(&y, &heff, &alphabet, 3).unwrap();
                assert_eq!(pic.symbol_indices, vec![a, b]);
            }
        }
    }

    #[test]
    fn mf_rejects_zero_channel() {
        let alphabet = QamAlphabet::new(4).unwrap();
        let heff = EffectiveChannel::from_matrix(ComplexMatrix::zeros(4, 2), 2, 2).unwrap();
        let y = vec![Complex64::ONE; 4];
        assert!(detect_mf(&y, &heff, &alphabet).is_err());
        assert!(detect_mf_pic(&y, &heff, &alphabet, 3).is_err());
    }

    #[test]
    fn pic_perfect_cancellation_is_fixed_point() {
        // Noiseless and started from correct decisions, one more round
        // reproduces them.
        let (alphabet, grid, sigs) = setup(2, 50);
        let mut stream = RandomStream::new(51);
        let mut checked = 0;
        for trial in 0..200 {
            let t = stream.child(trial);
            let ch = ChannelRealization::sample(2, 3, 2, 1.0 / 6.0, &mut t.child(0));
            let heff = effective_channel(&ch, &sigs).unwrap();
            let n = t.child(1).uniform_index(grid.len());
            let y = heff.matrix().mul_vec(grid.entry(n));
            let mf = detect_mf(&y, &heff, &alphabet).unwrap();
            if mf.symbol_indices == grid.digits(n) {
                // MF already correct: every PIC depth must stay correct.
                for iters in 1..=3 {
                    let pic = detect_mf_pic(&y, &heff, &alphabet, iters).unwrap();
                    assert_eq!(pic.joint_index, n);
                }
                checked += 1;
            }
        }
        assert!(checked > 50, "only {checked} noiseless MF successes");
    }

    #[test]
    fn mmse_zero_forcing_limit_recovers_noiseless() {
        let (alphabet, grid, sigs) = setup(2, 52);
        let ch = ChannelRealization::sample(2, 3, 2, 1.0 / 6.0, &mut RandomStream::new(53));
        let heff = effective_channel(&ch, &sigs).unwrap();
        for n in 0..grid.len() {
            let y = heff.matrix().mul_vec(grid.entry(n));
            let got = detect_mmse(&y, &heff, 1e-12, &alphabet).unwrap();
            assert_eq!(got.symbol_indices, grid.digits(n));
        }
    }

    #[test]
    fn mmse_matches_mf_for_single_user_4qam() {
        // One user: the MMSE statistic is a positive rescaling of the MF
        // statistic and 4-QAM slicing is quadrant-based, so decisions agree.
        let alphabet = QamAlphabet::new(4).unwrap();
        let sigs = generate_grassmann(4, 2, &mut RandomStream::new(54), 1e-3)
            .unwrap()
            .select(1)
            .unwrap();
        let grid = SymbolGrid::enumerate(1, &alphabet).unwrap();
        let mut stream = RandomStream::new(55);
        for trial in 0..100 {
            let t = stream.child(trial);
            let ch = ChannelRealization::sample(1, 3, 2, 1.0 / 6.0, &mut t.child(0));
            let heff = effective_channel(&ch, &sigs).unwrap();
            let n = t.child(1).uniform_index(4);
            let frame = transmit(grid.entry(n), &heff, 0.5, &mut t.child(2));
            let mf = detect_mf(&frame.observation, &heff, &alphabet).unwrap();
            let mmse = detect_mmse(&frame.observation, &heff, 0.5, &alphabet).unwrap();
            assert_eq!(mf.symbol_indices, mmse.symbol_indices);
        }
    }

    #[test]
    fn detector_error_ordering_at_moderate_snr() {
        // Monte-Carlo sanity at 12 dB: ML <= MMSE <= MF error counts, and
        // PIC sits between ML and MF (small-sample slack on each).
        let (alphabet, grid, sigs) = setup(2, 56);
        let sigma2_z = crate::channel::snr_to_noise_variance(12.0);
        let sigma2_h = crate::channel::normalized_channel_variance(2, 3);
        let trials = 4_000u64;
        let mut stream = RandomStream::new(57);
        let (mut e_ml, mut e_mf, mut e_pic, mut e_mmse) = (0u64, 0u64, 0u64, 0u64);
        for trial in 0..trials {
            let t = stream.child(trial);
            let ch = ChannelRealization::sample(2, 3, 2, sigma2_h, &mut t.child(0));
            let heff = effective_channel(&ch, &sigs).unwrap();
            let n = t.child(1).uniform_index(grid.len());
            let frame = transmit(grid.entry(n), &heff, sigma2_z, &mut t.child(2));
            let truth = grid.digits(n);
            let count = |r: &DetectionResult| {
                r.symbol_indices
                    .iter()
                    .zip(&truth)
                    .filter(|(a, b)| a != b)
                    .count() as u64
            };
            e_ml += count(&detect_ml(&frame.observation, &heff, &grid));
            e_mf += count(&detect_mf(&frame.observation, &heff, &alphabet).unwrap());
            e_pic += count(&detect_mf_pic(&frame.observation, &heff, &alphabet, 3).unwrap());
            e_mmse += count(&detect_mmse(&frame.observation, &heff, sigma2_z, &alphabet).unwrap());
        }
        // Slack: 3 binomial sigma at these counts is comfortably below 60.
        assert!(e_ml <= e_pic + 60, "ml={e_ml} pic={e_pic}");
        assert!(e_pic <= e_mf + 60, "pic={e_pic} mf={e_mf}");
        assert!(e_ml <= e_mmse + 60, "ml={e_ml} mmse={e_mmse}");
        assert!(e_mmse <= e_mf + 60, "mmse={e_mmse} mf={e_mf}");
    }
}
