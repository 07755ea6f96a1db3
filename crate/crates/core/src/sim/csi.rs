//! UE-side CSI reports and the small-matrix algebra shared with link
//! adaptation.
//!
//! Port channels are normalized so that the noise-plus-interference power
//! per receive antenna is one. A vertical candidate `a` (a vertical codeword
//! or a vertical beam) collapses the `n_rx × (n_v·n_h)` port channel to an
//! `n_rx × n_h` matrix; horizontal codewords are searched on that matrix, so
//! the composite precoder is `a ⊗ b`.

use num_complex::Complex64;

use crate::feedback::{ceil_log2, cqi_efficiency_linear, cqi_index, Codebook, CQI_BITS, CQI_EFFICIENCY, RI_BITS};
use crate::linalg::CMat;

/// Hermitian covariance of at most two receive antennas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cov2 {
    pub n: usize,
    pub a: f64,
    pub b: Complex64,
    pub d: f64,
}

impl Cov2 {
    pub fn scaled_identity(n: usize, s: f64) -> Self {
        debug_assert!((1..=2).contains(&n));
        Cov2 {
            n,
            a: s,
            b: Complex64::new(0.0, 0.0),
            d: if n == 2 { s } else { 0.0 },
        }
    }

    /// Adds `w·x·xᴴ`.
    #[inline]
    pub fn add_outer(&mut self, x: &[Complex64], w: f64) {
        self.a += w * x[0].norm_sqr();
        if self.n == 2 {
            self.b += x[0] * x[1].conj() * w;
            self.d += w * x[1].norm_sqr();
        }
    }

    pub fn add_identity(&mut self, s: f64) {
        self.a += s;
        if self.n == 2 {
            self.d += s;
        }
    }

    pub fn trace(&self) -> f64 {
        self.a + if self.n == 2 { self.d } else { 0.0 }
    }

    /// `xᴴ R⁻¹ x`.
    #[inline]
    pub fn quad_inv(&self, x: &[Complex64]) -> f64 {
        if self.n == 1 {
            return x[0].norm_sqr() / self.a;
        }
        let det = self.a * self.d - self.b.norm_sqr();
        let cross = (self.b * x[0].conj() * x[1]).re;
        ((self.d * x[0].norm_sqr() + self.a * x[1].norm_sqr() - 2.0 * cross) / det).max(0.0)
    }
}

/// Columns of `H·W` as vectors (one per layer).
pub fn effective_columns(h: &CMat<f64>, w: &CMat<f64>) -> Vec<Vec<Complex64>> {
    (0..w.cols())
        .map(|j| {
            (0..h.rows())
                .map(|r| h.row(r).iter().enumerate().map(|(i, z)| *z * w[(i, j)]).sum())
                .collect()
        })
        .collect()
}

/// Per-layer MMSE SINR with unit white noise: `g_lᴴ(I + Σ_{m≠l} g_m g_mᴴ)⁻¹ g_l`
/// for the layers listed in `own`.
pub fn mmse_sinrs(g: &[Vec<Complex64>], own: &[usize]) -> Vec<f64> {
    let n = g.first().map_or(1, |c| c.len());
    own.iter()
        .map(|&l| {
            let mut cov = Cov2::scaled_identity(n, 1.0);
            for (m, gm) in g.iter().enumerate() {
                if m != l {
                    cov.add_outer(gm, 1.0);
                }
            }
            cov.quad_inv(&g[l])
        })
        .collect()
}

/// `Y_a[r][j] = Σ_t X[r][t·n_h + j]·a[t]` for every vertical candidate `a`.
pub fn vertical_project(x: &CMat<f64>, vertical: &[Vec<Complex64>], n_h: usize) -> Vec<CMat<f64>> {
    vertical
        .iter()
        .map(|a| {
            let mut y = CMat::zeros(x.rows(), n_h);
            for r in 0..x.rows() {
                let row = x.row(r);
                let out = y.row_mut(r);
                for (t, at) in a.iter().enumerate() {
                    for (j, o) in out.iter_mut().enumerate() {
                        *o += row[t * n_h + j] * at;
                    }
                }
            }
            y
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub vertical: usize,
    pub horizontal: usize,
    pub sinr: Vec<f64>,
    /// Unquantized `Σ_l log2(1 + SINR_l)`.
    pub rate: f64,
}

/// Best `(vertical, horizontal)` pair over the listed vertical candidates,
/// maximizing the unquantized sum rate; lowest composite index wins ties.
pub fn best_codeword(ys: &[CMat<f64>], verticals: &[usize], horizontal: &Codebook<f64>) -> Choice {
    let rank = horizontal.rank();
    let own: Vec<usize> = (0..rank).collect();
    let mut best: Option<Choice> = None;
    for &v in verticals {
        let y = &ys[v];
        for (hi, b) in horizontal.codewords.iter().enumerate() {
            let g = effective_columns(y, b);
            let sinr = mmse_sinrs(&g, &own);
            let rate: f64 = sinr.iter().map(|s| s.ln_1p()).sum::<f64>() / std::f64::consts::LN_2;
            if best.as_ref().is_none_or(|c| rate > c.rate) {
                best = Some(Choice {
                    vertical: v,
                    horizontal: hi,
                    sinr,
                    rate,
                });
            }
        }
    }
    best.expect("nonempty candidate set")
}

/// SINR the eNB associates with a CQI index (zero for out-of-range).
pub fn cqi_sinr(index: u8) -> f64 {
    if index == 0 {
        0.0
    } else {
        CQI_EFFICIENCY[index as usize].exp2() - 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubbandCsi {
    pub vertical: usize,
    pub horizontal: usize,
    /// Reported precoder in the port domain (`D × rank`, unit Frobenius norm).
    pub w: CMat<f64>,
    pub cqi: Vec<u8>,
}

impl SubbandCsi {
    pub fn sinr(&self) -> Vec<f64> {
        self.cqi.iter().map(|&c| cqi_sinr(c)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsiReport {
    pub rank: usize,
    /// Wideband beam index (beamformed pilots only).
    pub beam: Option<usize>,
    pub subbands: Vec<SubbandCsi>,
    pub bits: u32,
}

/// Builds a report from per-subband projected channels `ys[sb][v]`.
///
/// With `wideband_vertical` the vertical candidate is one beam chosen on the
/// power summed over subbands, ports and receive antennas; otherwise the
/// vertical codeword is chosen jointly with the horizontal one per subband.
/// `horizontal[r − 1]` is the rank-`r` horizontal codebook.
///
/// Indices are selected on the measured `ys`. When `truth` is given, the
/// rank decision and CQI use the SINR of the selected precoders on those
/// channels, modelling a UE whose quality estimate is free of noise bias.
pub fn build_report(
    ys: &[Vec<CMat<f64>>],
    truth: Option<&[Vec<CMat<f64>>]>,
    vertical: &[Vec<Complex64>],
    horizontal: &[Codebook<f64>],
    wideband_vertical: bool,
    max_rank: usize,
    cap: f64,
) -> CsiReport {
    let n_v = vertical.len();
    let (beam, verticals): (Option<usize>, Vec<usize>) = if wideband_vertical {
        let power = |v: usize| ys.iter().map(|sb| sb[v].frobenius_sq()).sum::<f64>();
        let mut best = 0;
        for v in 1..n_v {
            if power(v) > power(best) {
                best = v;
            }
        }
        (Some(best), vec![best])
    } else {
        (None, (0..n_v).collect())
    };
    let ranks = max_rank.min(horizontal.len()).max(1);
    let mut per_rank: Vec<(f64, Vec<Choice>)> = Vec::with_capacity(ranks);
    for cb in &horizontal[..ranks] {
        let mut choices: Vec<Choice> = ys.iter().map(|sb| best_codeword(sb, &verticals, cb)).collect();
        if let Some(truth) = truth {
            let own: Vec<usize> = (0..cb.rank()).collect();
            for (c, sb) in choices.iter_mut().zip(truth) {
                let g = effective_columns(&sb[c.vertical], &cb.codewords[c.horizontal]);
                c.sinr = mmse_sinrs(&g, &own);
            }
        }
        let eff: f64 = choices
            .iter()
            .flat_map(|c| c.sinr.iter().map(|&s| cqi_efficiency_linear(s, cap)))
            .sum();
        per_rank.push((eff, choices));
    }
    let mut r = 0;
    for k in 1..per_rank.len() {
        if per_rank[k].0 > per_rank[r].0 {
            r = k;
        }
    }
    let (_, choices) = per_rank.swap_remove(r);
    let cb = &horizontal[r];
    let rank = r + 1;
    let subbands: Vec<SubbandCsi> = choices
        .into_iter()
        .map(|c| SubbandCsi {
            vertical: c.vertical,
            horizontal: c.horizontal,
            w: CMat::column_vector(&vertical[c.vertical]).kron(&cb.codewords[c.horizontal]),
            cqi: c.sinr.iter().map(|&s| cqi_index(cqi_efficiency_linear(s, cap))).collect(),
        })
        .collect();
    let v_bits = ceil_log2(n_v);
    let h_bits = ceil_log2(cb.len());
    let n_sb = subbands.len() as u32;
    let direction = if wideband_vertical {
        v_bits + n_sb * h_bits
    } else {
        n_sb * (v_bits + h_bits)
    };
    CsiReport {
        rank,
        beam,
        bits: RI_BITS + direction + CQI_BITS * n_sb * rank as u32,
        subbands,
    }
}
