//! Multi-user precoders (zero forcing, SLNR), rank adaptation and the
//! Monte Carlo effective sum capacity of ZF under pilot overhead.

use num_complex::Complex;
use rand::Rng;
use thiserror::Error;

use crate::linalg::{hermitian_eigen, CMat, LinalgError};
use crate::rng::{complex_normal, stream, Stream};
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrecodingError {
    #[error("no users to precode")]
    NoUsers,
    #[error("channel rows have length {got}, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("pilot overhead must lie in [0, 1), got {0}")]
    Overhead(f64),
    #[error("noise power must be positive")]
    Noise,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Zero-forcing precoder and the users it serves.
#[derive(Debug, Clone, PartialEq)]
pub struct ZfPrecoder<T> {
    /// `N_T × K` precoder, one column per served user.
    pub w: CMat<T>,
    /// Indices of the served rows of the input channel.
    pub served: Vec<usize>,
}

/// Ratio below which the user Gram matrix is treated as rank deficient.
const RANK_TOL: f64 = 1e-12;

/// `W = Hᴴ(HHᴴ)⁻¹` with unit-norm columns scaled to `√(P/K)`.
///
/// When the rows are (numerically) linearly dependent, or there are more
/// users than antennas, the weakest user is dropped until the remaining
/// set is full rank.
pub fn zf_precoder<T: Real>(channel_rows: &CMat<T>, power: T) -> Result<ZfPrecoder<T>, PrecodingError> {
    let mut served: Vec<usize> = (0..channel_rows.rows()).collect();
    let norms = channel_rows.row_norms_sq();
    let n_t = channel_rows.cols();
    loop {
        if served.is_empty() {
            return Err(PrecodingError::NoUsers);
        }
        let h = CMat::from_rows(&served.iter().map(|&i| channel_rows.row(i).to_vec()).collect::<Vec<_>>());
        let full_rank = served.len() <= n_t && {
            let gram = h.matmul(&h.adjoint())?;
            let (eig, _) = hermitian_eigen(&gram)?;
            let max = eig[0];
            max > T::zero() && eig[eig.len() - 1] > max * T::lit(RANK_TOL)
        };
        if full_rank {
            let gram = h.matmul(&h.adjoint())?;
            let w = h.adjoint().matmul(&gram.inverse()?)?;
            let k = served.len();
            let per_user = (power / T::lit(k as f64)).sqrt();
            let col_norms = w.column_norms_sq();
            let w = CMat::from_fn(n_t, k, |i, j| w[(i, j)] * (per_user / col_norms[j].sqrt()));
            return Ok(ZfPrecoder { w, served });
        }
        // drop the weakest remaining user (highest index on ties)
        let (pos, _) = served
            .iter()
            .enumerate()
            .fold((0, T::infinity()), |acc, (p, &i)| if norms[i] <= acc.1 { (p, norms[i]) } else { acc });
        served.remove(pos);
    }
}

/// Per-user SLNR precoder.
#[derive(Debug, Clone, PartialEq)]
pub struct SlnrPrecoder<T> {
    /// `N_T × Σ r_k` precoder; columns of user `k` are contiguous.
    pub w: CMat<T>,
    /// User owning each column.
    pub layer_user: Vec<usize>,
    /// Generalized eigenvalues (SLNR) of each column.
    pub slnr: Vec<T>,
}

/// SLNR precoding: the layers of user `k` are the dominant generalized
/// eigenvectors of `(σ²I + Σ_{j≠k} H_jᴴH_j)⁻¹ H_kᴴH_k`.
///
/// `channels[k]` is the `n_rx,k × N_T` channel of user `k`, `ranks[k]` its
/// layer count. Columns are normalized to unit norm and scaled so the total
/// transmit power is `power`, split equally over layers.
pub fn slnr_precoder<T: Real>(
    channels: &[CMat<T>],
    ranks: &[usize],
    noise_power: T,
    power: T,
) -> Result<SlnrPrecoder<T>, PrecodingError> {
    if channels.is_empty() || channels.len() != ranks.len() {
        return Err(PrecodingError::NoUsers);
    }
    if !(noise_power > T::zero()) {
        return Err(PrecodingError::Noise);
    }
    let n_t = channels[0].cols();
    if let Some(bad) = channels.iter().find(|h| h.cols() != n_t) {
        return Err(PrecodingError::Length {
            expected: n_t,
            got: bad.cols(),
        });
    }
    let total_layers: usize = ranks.iter().sum();
    if total_layers == 0 {
        return Err(PrecodingError::NoUsers);
    }
    let per_layer = (power / T::lit(total_layers as f64)).sqrt();
    let mut w = CMat::zeros(n_t, total_layers);
    let mut layer_user = Vec::with_capacity(total_layers);
    let mut slnr = Vec::with_capacity(total_layers);
    let mut col = 0;
    for (k, hk) in channels.iter().enumerate() {
        let r = ranks[k].min(hk.rows());
        if r == 0 {
            continue;
        }
        let interferers: Vec<Vec<Complex<T>>> = channels
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .flat_map(|(_, h)| (0..h.rows()).map(move |i| h.row(i).to_vec()))
            .collect();
        let y = leakage_inverse_times(&interferers, &hk.adjoint(), noise_power)?;
        // reduced eigenproblem H_k A⁻¹ H_kᴴ (n_rx × n_rx)
        let m = hk.matmul(&y)?;
        let (eig, vecs) = hermitian_eigen(&m)?;
        let cols = y.matmul(&vecs)?;
        for l in 0..r {
            let c = cols.column(l);
            let n = c.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
            for (i, z) in c.iter().enumerate() {
                w[(i, col)] = if n > T::zero() { *z * (per_layer / n) } else { Complex::new(T::zero(), T::zero()) };
            }
            layer_user.push(k);
            slnr.push(eig[l]);
            col += 1;
        }
    }
    if col < total_layers {
        let keep: Vec<Vec<Complex<T>>> = (0..col).map(|j| w.column(j)).collect();
        w = CMat::from_columns(&keep);
    }
    Ok(SlnrPrecoder { w, layer_user, slnr })
}

/// `(σ²I + GᴴG)⁻¹ B` via the Woodbury identity, `G` given by its rows.
pub fn leakage_inverse_times<T: Real>(
    g_rows: &[Vec<Complex<T>>],
    b: &CMat<T>,
    noise_power: T,
) -> Result<CMat<T>, PrecodingError> {
    let inv_s = T::one() / noise_power;
    if g_rows.is_empty() {
        return Ok(b.scale_real(inv_s));
    }
    let g = CMat::from_rows(g_rows);
    let inner = g
        .matmul(&g.adjoint())?
        .add(&CMat::identity(g.rows()).scale_real(noise_power))?;
    let gb = g.matmul(b)?;
    let correction = g.adjoint().matmul(&inner.solve(&gb)?)?;
    Ok(b.sub(&correction)?.scale_real(inv_s))
}

/// `‖H_k w‖² / (σ² + Σ_{j≠k} ‖H_j w‖²)` of a single column `w` for user `k`.
pub fn slnr_value<T: Real>(channels: &[CMat<T>], k: usize, w: &[Complex<T>], noise_power: T) -> T {
    let power = |h: &CMat<T>| -> T {
        (0..h.rows())
            .map(|i| {
                h.row(i)
                    .iter()
                    .zip(w)
                    .map(|(a, b)| *a * *b)
                    .sum::<Complex<T>>()
                    .norm_sqr()
            })
            .sum()
    };
    let w_norm: T = w.iter().map(|z| z.norm_sqr()).sum();
    let signal = power(&channels[k]);
    let leak: T = channels
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .map(|(_, h)| power(h))
        .sum();
    signal / (noise_power * w_norm + leak)
}

/// Spectral efficiencies of the two rank hypotheses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankCandidates {
    pub rank1_efficiency: f64,
    pub rank2_efficiency: f64,
}

/// Picks the rank with the larger estimated efficiency; rank 1 on ties and
/// whenever the UE has a single receive antenna.
pub fn rank_adapt(candidates: &RankCandidates, n_rx: usize) -> usize {
    if n_rx >= 2 && candidates.rank2_efficiency > candidates.rank1_efficiency {
        2
    } else {
        1
    }
}

/// Rank candidates from the channel singular values with eigen-beamforming:
/// rank 1 puts all power on the strongest mode, rank 2 splits it equally.
pub fn rank_candidates_from_channel<T: Real>(h: &CMat<T>, snr_linear: f64, cap: f64) -> Result<RankCandidates, PrecodingError> {
    let gram = h.matmul(&h.adjoint())?;
    let (eig, _) = hermitian_eigen(&gram)?;
    let e = |x: f64| crate::feedback::cqi_efficiency_linear(x, cap);
    let l1 = eig[0].as_f64().max(0.0);
    let l2 = eig.get(1).map_or(0.0, |v| v.as_f64().max(0.0));
    Ok(RankCandidates {
        rank1_efficiency: e(snr_linear * l1),
        rank2_efficiency: e(snr_linear * l1 / 2.0) + e(snr_linear * l2 / 2.0),
    })
}

/// ZF sum rate `Σ_k log2(1 + SNR/K · |h_k w_k|²)` of one i.i.d. Rayleigh draw.
pub fn zf_sum_rate<R: Rng + ?Sized>(n_t: usize, n_users: usize, snr: f64, rng: &mut R) -> Result<f64, PrecodingError> {
    let h = CMat::from_fn(n_users, n_t, |_, _| complex_normal(rng));
    let zf = zf_precoder(&h, 1.0)?;
    let mut rate = 0.0;
    for (j, &u) in zf.served.iter().enumerate() {
        let g: Complex<f64> = h.row(u).iter().enumerate().map(|(i, z)| *z * zf.w[(i, j)]).sum();
        // w carries √(1/K); SNR is the total-power SNR per receive antenna
        let sinr = snr * g.norm_sqr();
        rate += (1.0 + sinr).log2();
    }
    Ok(rate)
}

/// Monte Carlo effective sum capacity `(1 − ρ)·E[Σ_k log2(1 + SINR_k)]` of
/// ZF with equal power over i.i.d. Rayleigh channels.
pub fn effective_sum_capacity(
    n_t: usize,
    n_users: usize,
    snr_db: f64,
    pilot_overhead_fraction: f64,
    draws: usize,
    seed: u64,
) -> Result<f64, PrecodingError> {
    if !(0.0..1.0).contains(&pilot_overhead_fraction) {
        return Err(PrecodingError::Overhead(pilot_overhead_fraction));
    }
    if n_users == 0 || n_t == 0 || draws == 0 {
        return Err(PrecodingError::NoUsers);
    }
    let snr = 10f64.powf(snr_db / 10.0);
    let mut rng = stream(seed, Stream::MonteCarlo, &[n_t as u64, n_users as u64]);
    let mut total = 0.0;
    for _ in 0..draws {
        total += zf_sum_rate(n_t, n_users, snr, &mut rng)?;
    }
    Ok((1.0 - pilot_overhead_fraction) * total / draws as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot_h, norm_sq};
    use num_complex::Complex64;

    fn random(rows: usize, cols: usize, seed: u64) -> CMat<f64> {
        let mut rng = stream(seed, Stream::Test, &[rows as u64, cols as u64]);
        CMat::from_fn(rows, cols, |_, _| complex_normal(&mut rng))
    }

    fn off_diagonal_ratio(h: &CMat<f64>, w: &CMat<f64>) -> f64 {
        let hw = h.matmul(w).unwrap();
        let mut off = 0.0f64;
        for i in 0..hw.rows() {
            for j in 0..hw.cols() {
                if i != j {
                    off = off.max(hw[(i, j)].norm());
                }
            }
        }
        off / hw.frobenius_sq().sqrt()
    }

    #[test]
    fn zf_single_user_is_matched_filter() {
        let h = random(1, 8, 1);
        let zf = zf_precoder(&h, 2.0).unwrap();
        let w = zf.w.column(0);
        let mf: Vec<Complex64> = h.row(0).iter().map(|z| z.conj()).collect();
        let c = dot_h(&mf, &w).norm() / (norm_sq(&mf) * norm_sq(&w)).sqrt();
        assert!((c - 1.0).abs() < 1e-12);
        assert!((zf.w.frobenius_sq() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zf_orthonormal_rows() {
        let mut h = CMat::<f64>::zeros(2, 4);
        h[(0, 0)] = Complex64::new(0.0, 1.0);
        h[(1, 2)] = Complex64::new(1.0, 0.0);
        let zf = zf_precoder(&h, 2.0).unwrap();
        for k in 0..2 {
            let expected: Vec<Complex64> = h.row(k).iter().map(|z| z.conj()).collect();
            for (a, b) in zf.w.column(k).iter().zip(&expected) {
                assert!((a - b).norm() < 1e-12);
            }
        }
        assert_eq!(off_diagonal_ratio(&h, &zf.w), 0.0);
    }

    #[test]
    fn zf_random_four_users() {
        for seed in 0..20 {
            let h = random(4, 8, seed);
            let zf = zf_precoder(&h, 1.0).unwrap();
            assert_eq!(zf.served, vec![0, 1, 2, 3]);
            assert!(off_diagonal_ratio(&h, &zf.w) < 1e-10);
            assert!((zf.w.frobenius_sq() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zf_drops_dependent_user() {
        let mut h = random(3, 4, 5);
        let scaled: Vec<Complex64> = h.row(0).iter().map(|z| z * 0.5).collect();
        h.row_mut(2).copy_from_slice(&scaled);
        let zf = zf_precoder(&h, 1.0).unwrap();
        assert_eq!(zf.served, vec![0, 1]);
        let too_many = random(6, 4, 6);
        assert_eq!(zf_precoder(&too_many, 1.0).unwrap().served.len(), 4);
    }

    #[test]
    fn slnr_without_interferers_is_matched_filter() {
        let h = random(1, 6, 7);
        let p = slnr_precoder(&[h.clone()], &[1], 0.1, 1.0).unwrap();
        let mf: Vec<Complex64> = h.row(0).iter().map(|z| z.conj()).collect();
        let c = dot_h(&mf, &p.w.column(0)).norm() / norm_sq(&mf).sqrt();
        assert!((c - 1.0).abs() < 1e-10);
    }

    #[test]
    fn slnr_approaches_zf_at_low_noise() {
        let h = random(3, 8, 8);
        let users: Vec<CMat<f64>> = (0..3).map(|k| CMat::row_vector(h.row(k))).collect();
        let p = slnr_precoder(&users, &[1, 1, 1], 1e-9, 1.0).unwrap();
        assert!(off_diagonal_ratio(&h, &p.w) < 1e-4);
    }

    #[test]
    fn slnr_symmetric_users() {
        let h = random(1, 4, 9);
        let p = slnr_precoder(&[h.clone(), h.clone()], &[1, 1], 0.5, 1.0).unwrap();
        assert!((p.slnr[0] - p.slnr[1]).abs() < 1e-9 * p.slnr[0]);
    }

    #[test]
    fn slnr_dominates_matched_filter_and_matches_eigenvalue() {
        for seed in 0..10 {
            let users: Vec<CMat<f64>> = (0..3).map(|k| random(2, 8, 100 + seed * 3 + k)).collect();
            let p = slnr_precoder(&users, &[2, 1, 1], 0.3, 1.0).unwrap();
            assert_eq!(p.layer_user, vec![0, 0, 1, 2]);
            assert!((p.w.frobenius_sq() - 1.0).abs() < 1e-9);
            for (col, &k) in p.layer_user.iter().enumerate().filter(|(c, _)| *c != 1) {
                let w = p.w.column(col);
                let value = slnr_value(&users, k, &w, 0.3);
                assert!((value - p.slnr[col]).abs() < 1e-8 * value);
                // matched filter on the strongest receive antenna
                let mf: Vec<Complex64> = users[k].row(0).iter().map(|z| z.conj()).collect();
                assert!(value >= slnr_value(&users, k, &mf, 0.3) * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn woodbury_matches_direct_inverse() {
        let g = random(3, 5, 10);
        let b = random(5, 2, 11);
        let rows: Vec<_> = (0..3).map(|i| g.row(i).to_vec()).collect();
        let y = leakage_inverse_times(&rows, &b, 0.7).unwrap();
        let a = g.adjoint().matmul(&g).unwrap().add(&CMat::identity(5).scale_real(0.7)).unwrap();
        let direct = a.solve(&b).unwrap();
        assert!(y.max_abs_diff(&direct) < 1e-10);
    }

    #[test]
    fn rank_adaptation() {
        let c = RankCandidates {
            rank1_efficiency: 3.0,
            rank2_efficiency: 3.0,
        };
        assert_eq!(rank_adapt(&c, 2), 1);
        let c = RankCandidates {
            rank1_efficiency: 3.0,
            rank2_efficiency: 5.0,
        };
        assert_eq!(rank_adapt(&c, 2), 2);
        assert_eq!(rank_adapt(&c, 1), 1);
        let well = CMat::<f64>::identity(2);
        let cand = rank_candidates_from_channel(&well, 1000.0, 6.0).unwrap();
        assert_eq!(rank_adapt(&cand, 2), 2);
        let mut ill = CMat::<f64>::zeros(2, 2);
        ill[(0, 0)] = Complex64::new(1.0, 0.0);
        ill[(1, 0)] = Complex64::new(1.0, 0.0);
        let cand = rank_candidates_from_channel(&ill, 10.0, 6.0).unwrap();
        assert_eq!(rank_adapt(&cand, 2), 1);
    }

    #[test]
    fn capacity_overhead_scaling() {
        let c0 = effective_sum_capacity(16, 4, 10.0, 0.0, 200, 1).unwrap();
        let c5 = effective_sum_capacity(16, 4, 10.0, 0.5, 200, 1).unwrap();
        assert!((c5 - c0 / 2.0).abs() < 1e-12);
        assert!(effective_sum_capacity(16, 4, 10.0, 1.0, 10, 1).is_err());
    }

    #[test]
    fn f32_zf() {
        let h = random(2, 4, 12);
        let h32 = CMat::<f32>::from_fn(2, 4, |i, j| Complex::new(h[(i, j)].re as f32, h[(i, j)].im as f32));
        let zf = zf_precoder(&h32, 1.0f32).unwrap();
        let hw = h32.matmul(&zf.w).unwrap();
        assert!(hw[(0, 1)].norm() < 1e-4 * hw[(0, 0)].norm());
    }
}
