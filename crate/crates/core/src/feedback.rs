//! CSI acquisition: codebooks, PMI / beam-index / co-phase selection, CQI
//! quantization and feedback / pilot overhead accounting.
//!
//! Channel directions follow the column convention: for a channel row `h`
//! the direction is `h̄ = conj(h)ᵀ`, so the matched precoder is `h̄` itself and
//! the selection metric `‖h̄ᴴ W‖²` equals the received power `‖h W‖²`.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot_h, norm_sq, normalized, CMat};
use crate::txru::vertical_beam;
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeedbackError {
    #[error("codebook is empty")]
    EmptyCodebook,
    #[error("codebook needs at least one port and oversampling factor")]
    BadDimensions,
    #[error("channel has zero energy")]
    ZeroChannel,
    #[error("channel length {got} does not match codeword length {expected}")]
    Length { expected: usize, got: usize },
    #[error("rank {0} is not supported")]
    Rank(usize),
    #[error("co-phase alphabet of {0} entries is not supported")]
    CoPhases(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CodebookStructure {
    Flat,
    /// Codeword `i` is `vertical[i / horizontal] ⊗ horizontal[i % horizontal]`.
    Kronecker { vertical: usize, horizontal: usize },
}

/// Set of unit-Frobenius-norm precoders of shape `n_ports × rank`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T> {
    pub codewords: Vec<CMat<T>>,
    pub structure: CodebookStructure,
}

impl<T: Real> Codebook<T> {
    pub fn flat(codewords: Vec<CMat<T>>) -> Self {
        Codebook {
            codewords,
            structure: CodebookStructure::Flat,
        }
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn n_ports(&self) -> usize {
        self.codewords.first().map_or(0, |w| w.rows())
    }

    pub fn rank(&self) -> usize {
        self.codewords.first().map_or(0, |w| w.cols())
    }

    pub fn bits(&self) -> u32 {
        ceil_log2(self.codewords.len())
    }

    /// Splits a composite index into `(vertical, horizontal)` indices.
    pub fn split_index(&self, i: usize) -> (usize, usize) {
        match self.structure {
            CodebookStructure::Flat => (0, i),
            CodebookStructure::Kronecker { horizontal, .. } => (i / horizontal, i % horizontal),
        }
    }
}

pub fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// Oversampled DFT grid: codeword `k` has entries `exp(−j2π·m·k/(n·o))/√n`.
pub fn build_dft_codebook<T: Real>(n_ports: usize, oversampling: usize) -> Result<Codebook<T>, FeedbackError> {
    Ok(Codebook::flat(
        dft_vectors(n_ports, oversampling)?
            .into_iter()
            .map(|v| CMat::column_vector(&v))
            .collect(),
    ))
}

fn dft_vectors<T: Real>(n: usize, o: usize) -> Result<Vec<Vec<Complex<T>>>, FeedbackError> {
    if n == 0 || o == 0 {
        return Err(FeedbackError::BadDimensions);
    }
    let scale = T::one() / T::lit(n as f64).sqrt();
    let total = n * o;
    Ok((0..total)
        .map(|k| {
            (0..n)
                .map(|m| {
                    // reduce the phase index first to keep f32 phases accurate
                    let idx = (m * k) % total;
                    let ph = -T::lit(2.0) * T::PI() * T::lit(idx as f64) / T::lit(total as f64);
                    Complex::from_polar(scale, ph)
                })
                .collect()
        })
        .collect())
}

pub fn kronecker_codebook<T: Real>(vertical: &Codebook<T>, horizontal: &Codebook<T>) -> Codebook<T> {
    let mut codewords = Vec::with_capacity(vertical.len() * horizontal.len());
    for a in &vertical.codewords {
        for b in &horizontal.codewords {
            codewords.push(a.kron(b));
        }
    }
    Codebook {
        codewords,
        structure: CodebookStructure::Kronecker {
            vertical: vertical.len(),
            horizontal: horizontal.len(),
        },
    }
}

/// QPSK co-phase between the two polarizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CoPhase {
    One,
    J,
    MinusOne,
    MinusJ,
}

impl CoPhase {
    pub const ALL: [CoPhase; 4] = [CoPhase::One, CoPhase::J, CoPhase::MinusOne, CoPhase::MinusJ];

    pub fn value<T: Real>(self) -> Complex<T> {
        let (re, im) = match self {
            CoPhase::One => (1.0, 0.0),
            CoPhase::J => (0.0, 1.0),
            CoPhase::MinusOne => (-1.0, 0.0),
            CoPhase::MinusJ => (0.0, -1.0),
        };
        Complex::new(T::lit(re), T::lit(im))
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            CoPhase::One => "1",
            CoPhase::J => "j",
            CoPhase::MinusOne => "-1",
            CoPhase::MinusJ => "-j",
        }
    }
}

/// Dual-polarized extension of a single-polarization codebook.
///
/// Rank 1: `[u; c·u]/√2` for the four QPSK co-phases.
/// Rank 2: `[u u; c·u −c·u]/2` for `c ∈ {1, j}`.
pub fn dual_pol_codebook<T: Real>(base: &Codebook<T>, rank: usize) -> Result<Codebook<T>, FeedbackError> {
    dual_pol_codebook_with(base, rank, 4)
}

/// Dual-polarized codebook with a co-phase alphabet of `co_phases` (2 or 4)
/// entries for rank 1; rank 2 always pairs `{1, j}` with the sign flip.
pub fn dual_pol_codebook_with<T: Real>(
    base: &Codebook<T>,
    rank: usize,
    co_phases: usize,
) -> Result<Codebook<T>, FeedbackError> {
    if base.is_empty() {
        return Err(FeedbackError::EmptyCodebook);
    }
    let n = base.n_ports();
    let phases: &[CoPhase] = match (rank, co_phases) {
        (1, 4) => &CoPhase::ALL,
        (1, 2) => &[CoPhase::One, CoPhase::MinusOne],
        (1, _) => return Err(FeedbackError::CoPhases(co_phases)),
        (2, _) => &[CoPhase::One, CoPhase::J],
        (r, _) => return Err(FeedbackError::Rank(r)),
    };
    let mut codewords = Vec::with_capacity(base.len() * phases.len());
    for w in &base.codewords {
        let u = w.column(0);
        for &c in phases {
            let c = c.value::<T>();
            let cw = if rank == 1 {
                let s = T::one() / T::lit(2.0).sqrt();
                CMat::from_fn(2 * n, 1, |i, _| if i < n { u[i] * s } else { c * u[i - n] * s })
            } else {
                let s = T::lit(0.5);
                CMat::from_fn(2 * n, 2, |i, j| {
                    let sign = if j == 0 { T::one() } else { -T::one() };
                    if i < n {
                        u[i] * s
                    } else {
                        c * u[i - n] * (s * sign)
                    }
                })
            };
            codewords.push(cw);
        }
    }
    Ok(Codebook::flat(codewords))
}

/// Keeps `keep` evenly strided codewords, starting with the first.
pub fn thin_codebook<T: Real>(cb: &Codebook<T>, keep: usize) -> Result<Codebook<T>, FeedbackError> {
    if keep == 0 || cb.is_empty() {
        return Err(FeedbackError::EmptyCodebook);
    }
    let keep = keep.min(cb.len());
    let stride = cb.len() / keep;
    Ok(Codebook::flat((0..keep).map(|i| cb.codewords[i * stride].clone()).collect()))
}

/// Horizontal codebook for `n_h` ports over `n_pol` polarizations.
pub fn horizontal_codebook<T: Real>(
    n_h: usize,
    n_pol: usize,
    oversampling: usize,
    rank: usize,
) -> Result<Codebook<T>, FeedbackError> {
    horizontal_codebook_with(n_h, n_pol, oversampling, rank, None, 4)
}

/// [`horizontal_codebook`] restricted to `beams` DFT beams and a co-phase
/// alphabet of `co_phases` entries.
pub fn horizontal_codebook_with<T: Real>(
    n_h: usize,
    n_pol: usize,
    oversampling: usize,
    rank: usize,
    beams: Option<usize>,
    co_phases: usize,
) -> Result<Codebook<T>, FeedbackError> {
    let thin = |cb: Codebook<T>| match beams {
        Some(b) => thin_codebook(&cb, b),
        None => Ok(cb),
    };
    if n_pol == 2 {
        if n_h % 2 != 0 {
            return Err(FeedbackError::BadDimensions);
        }
        dual_pol_codebook_with(&thin(build_dft_codebook(n_h / 2, oversampling)?)?, rank, co_phases)
    } else if rank == 1 {
        thin(build_dft_codebook(n_h, oversampling)?)
    } else {
        Err(FeedbackError::Rank(rank))
    }
}

fn argmax_lowest<T: Real>(metrics: impl Iterator<Item = T>) -> Option<(usize, T)> {
    let mut best: Option<(usize, T)> = None;
    for (i, m) in metrics.enumerate() {
        match best {
            Some((_, b)) if !(m > b) => {}
            _ => best = Some((i, m)),
        }
    }
    best
}

fn direction<T: Real>(h: &[Complex<T>]) -> Result<Vec<Complex<T>>, FeedbackError> {
    normalized(h).ok_or(FeedbackError::ZeroChannel)
}

/// `‖h̄ᴴ W‖²` summed over the codeword columns.
pub fn codeword_gain<T: Real>(h: &[Complex<T>], w: &CMat<T>) -> T {
    let mut g = T::zero();
    for j in 0..w.cols() {
        let mut acc = Complex::new(T::zero(), T::zero());
        for (i, hi) in h.iter().enumerate() {
            acc += hi.conj() * w[(i, j)];
        }
        g += acc.norm_sqr();
    }
    g
}

/// Preferred codebook index: `argmax_i ‖h̄ᴴ W_i‖²` on the normalized channel,
/// lowest index on ties.
pub fn select_pmi<T: Real>(h: &[Complex<T>], codebook: &Codebook<T>) -> Result<(usize, T), FeedbackError> {
    if codebook.is_empty() {
        return Err(FeedbackError::EmptyCodebook);
    }
    if h.len() != codebook.n_ports() {
        return Err(FeedbackError::Length {
            expected: codebook.n_ports(),
            got: h.len(),
        });
    }
    let d = direction(h)?;
    Ok(argmax_lowest(codebook.codewords.iter().map(|w| codeword_gain(&d, w))).expect("nonempty"))
}

/// Beams `v_j` (columns of `W_T` in a beamformed-pilot architecture).
#[derive(Debug, Clone, PartialEq)]
pub struct BeamSet<T> {
    pub beams: Vec<Vec<Complex<T>>>,
}

impl<T: Real> BeamSet<T> {
    /// Normalizes every beam to unit norm.
    pub fn new(beams: Vec<Vec<Complex<T>>>) -> Result<Self, FeedbackError> {
        if beams.is_empty() {
            return Err(FeedbackError::EmptyCodebook);
        }
        let beams = beams
            .iter()
            .map(|b| normalized(b).ok_or(FeedbackError::ZeroChannel))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BeamSet { beams })
    }

    pub fn n_b(&self) -> usize {
        self.beams.len()
    }

    pub fn bits(&self) -> u32 {
        ceil_log2(self.beams.len())
    }
}

/// Best beam index `argmax_j |h̄ᴴ v_j|²`, lowest index on ties.
pub fn select_beam<T: Real>(h: &[Complex<T>], beams: &BeamSet<T>) -> Result<(usize, T), FeedbackError> {
    let n = beams.beams[0].len();
    if h.len() != n {
        return Err(FeedbackError::Length { expected: n, got: h.len() });
    }
    let d = direction(h)?;
    Ok(argmax_lowest(beams.beams.iter().map(|v| dot_h(&d, v).norm_sqr())).expect("nonempty"))
}

/// Beam maximizing the power summed over several observations (ports,
/// receive antennas, subbands or time samples).
pub fn select_beam_accumulated<T: Real>(
    observations: &[Vec<Complex<T>>],
    beams: &BeamSet<T>,
) -> Result<(usize, T), FeedbackError> {
    let total: T = observations.iter().map(|h| norm_sq(h)).sum();
    if !(total > T::zero()) {
        return Err(FeedbackError::ZeroChannel);
    }
    let metric = |v: &Vec<Complex<T>>| observations.iter().map(|h| dot_h(h, v).norm_sqr()).sum::<T>() / total;
    Ok(argmax_lowest(beams.beams.iter().map(metric)).expect("nonempty"))
}

/// QPSK phase maximizing `|h̄₁ᴴv + c·h̄₂ᴴv|²`, where `h̄₁`, `h̄₂` are the two
/// polarization blocks of the channel direction.
pub fn select_co_phase<T: Real>(
    h_pol1: &[Complex<T>],
    h_pol2: &[Complex<T>],
    v: &[Complex<T>],
) -> Result<CoPhase, FeedbackError> {
    if h_pol1.len() != v.len() || h_pol2.len() != v.len() {
        return Err(FeedbackError::Length {
            expected: v.len(),
            got: h_pol1.len().max(h_pol2.len()),
        });
    }
    if !(norm_sq(h_pol1) + norm_sq(h_pol2) > T::zero()) {
        return Err(FeedbackError::ZeroChannel);
    }
    let a = dot_h(h_pol1, v);
    let b = dot_h(h_pol2, v);
    let (i, _) = argmax_lowest(CoPhase::ALL.iter().map(|c| (a + c.value::<T>() * b).norm_sqr())).expect("nonempty");
    Ok(CoPhase::ALL[i])
}

/// Spectral efficiencies (b/s/Hz) of the 4-bit LTE CQI table; index 0 is out of range.
pub const CQI_EFFICIENCY: [f64; 16] = [
    0.0, 0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141, 2.4063, 2.7305, 3.3223, 3.9023, 4.5234,
    5.1152, 5.5547,
];

pub const DEFAULT_EFFICIENCY_CAP: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cqi {
    pub index: u8,
    /// `min(log2(1 + SINR), cap)` before quantization.
    pub efficiency: f64,
}

impl Cqi {
    pub fn quantized_efficiency(&self) -> f64 {
        CQI_EFFICIENCY[self.index as usize]
    }
}

pub fn compute_cqi(sinr_db: f64) -> Cqi {
    compute_cqi_capped(sinr_db, DEFAULT_EFFICIENCY_CAP)
}

/// Highest table entry not exceeding the capped Shannon efficiency.
pub fn compute_cqi_capped(sinr_db: f64, cap: f64) -> Cqi {
    let sinr = 10f64.powf(sinr_db / 10.0);
    let efficiency = cqi_efficiency_linear(sinr, cap);
    Cqi {
        index: cqi_index(efficiency),
        efficiency,
    }
}

#[inline]
pub fn cqi_efficiency_linear(sinr: f64, cap: f64) -> f64 {
    if sinr.is_nan() || sinr <= 0.0 {
        0.0
    } else {
        sinr.ln_1p().min(cap * std::f64::consts::LN_2) / std::f64::consts::LN_2
    }
}

#[inline]
pub fn cqi_index(efficiency: f64) -> u8 {
    CQI_EFFICIENCY.iter().rposition(|&e| e <= efficiency).unwrap_or(0) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeedbackClass {
    /// Non-precoded CSI-RS with a composite codebook.
    A,
    /// Beamformed CSI-RS with beam-index feedback.
    B,
}

/// Uplink bits to report the channel direction.
///
/// Class A follows the limited-feedback scaling law `⌈(N_T − 1)·SNR_dB/3⌉`;
/// class B needs `⌈log2 N_B⌉` bits plus 2 co-phase bits at rank 2.
pub fn feedback_bits(class: FeedbackClass, n_t: usize, n_b: usize, snr_db: f64, rank: usize) -> u32 {
    match class {
        FeedbackClass::A => {
            let bits = (n_t.saturating_sub(1) as f64) * snr_db.max(0.0) / 3.0;
            // guard against 49.99999 style rounding of exact products
            (bits - 1e-9).ceil().max(0.0) as u32
        }
        FeedbackClass::B => ceil_log2(n_b.max(1)) + if rank >= 2 { 2 } else { 0 },
    }
}

/// Resource elements per RB per subframe.
pub const RE_PER_RB: f64 = 168.0;
/// Two-port CRS resource elements per RB per subframe.
pub const CRS_RE: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PilotScheme {
    NonPrecoded,
    Beamformed,
}

/// `(n + 16)/168`, clamped to `[0, 1)`.
pub fn pilot_overhead_fraction(_scheme: PilotScheme, n_resources: usize) -> f64 {
    ((n_resources as f64 + CRS_RE) / RE_PER_RB).clamp(0.0, 1.0 - f64::EPSILON)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotBudget {
    pub scheme: PilotScheme,
    pub resources: usize,
    pub per_pilot_power: f64,
    pub overhead_fraction: f64,
}

impl PilotBudget {
    pub fn new(scheme: PilotScheme, n_t: usize, n_b: usize, total_power: f64) -> Self {
        let resources = match scheme {
            PilotScheme::NonPrecoded => n_t,
            PilotScheme::Beamformed => n_b,
        }
        .max(1);
        PilotBudget {
            scheme,
            resources,
            per_pilot_power: total_power / resources as f64,
            overhead_fraction: pilot_overhead_fraction(scheme, resources),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DirectionReport {
    Pmi(usize),
    Beam(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackReport {
    pub rank: usize,
    pub direction: DirectionReport,
    /// Bits spent on the direction index.
    pub direction_bits: u32,
    pub co_phase: Option<CoPhase>,
    /// Per-subband CQI indices.
    pub cqi: Vec<u8>,
    pub bit_cost: u32,
    /// Subframes since the measurement.
    pub age: u32,
}

pub const RI_BITS: u32 = 1;
pub const CQI_BITS: u32 = 4;
pub const CO_PHASE_BITS: u32 = 2;

impl FeedbackReport {
    pub fn new(rank: usize, direction: DirectionReport, direction_bits: u32, co_phase: Option<CoPhase>, cqi: Vec<u8>) -> Self {
        let bit_cost = RI_BITS
            + direction_bits
            + if co_phase.is_some() { CO_PHASE_BITS } else { 0 }
            + CQI_BITS * cqi.len() as u32;
        FeedbackReport {
            rank,
            direction,
            direction_bits,
            co_phase,
            cqi,
            bit_cost,
            age: 0,
        }
    }
}

/// Vertical beam grid of beamformed CSI-RS (elevations in degrees).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerticalGrid {
    pub elevations_deg: Vec<f64>,
    /// Set once the grid follows a long-term report.
    pub adapted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamGridConfig {
    pub n_beams: usize,
    /// Elevation range covered by the fixed grid, degrees.
    pub range_deg: (f64, f64),
    /// Angular span of the re-centered grid, degrees.
    pub adaptive_span_deg: f64,
}

impl Default for BeamGridConfig {
    fn default() -> Self {
        BeamGridConfig {
            n_beams: 4,
            range_deg: (-30.0, -2.0),
            adaptive_span_deg: 16.0,
        }
    }
}

impl BeamGridConfig {
    /// Fixed grid: beam centers uniformly spread over `range_deg`.
    pub fn uniform(&self) -> VerticalGrid {
        let (lo, hi) = self.range_deg;
        let step = (hi - lo) / self.n_beams as f64;
        VerticalGrid {
            elevations_deg: (0..self.n_beams).map(|i| lo + (i as f64 + 0.5) * step).collect(),
            adapted: false,
        }
    }

    /// Grid of the same size centered at `center_deg` with spacing `span/n`.
    pub fn centered(&self, center_deg: f64) -> VerticalGrid {
        let step = self.adaptive_span_deg / self.n_beams as f64;
        let mid = (self.n_beams as f64 - 1.0) / 2.0;
        VerticalGrid {
            elevations_deg: (0..self.n_beams)
                .map(|i| (center_deg + (i as f64 - mid) * step).clamp(-90.0, 90.0))
                .collect(),
            adapted: true,
        }
    }
}

impl VerticalGrid {
    pub fn beam_set<T: Real>(&self, m: usize, dv: T) -> BeamSet<T> {
        BeamSet {
            beams: self
                .elevations_deg
                .iter()
                .map(|&e| vertical_beam(m, dv, T::lit(e)))
                .collect(),
        }
    }
}

/// Long-term vertical PMI: the elevation of a fine steering codebook that
/// captures the most power of the column observations.
pub fn long_term_elevation<T: Real>(
    column_observations: &[Vec<Complex<T>>],
    candidates_deg: &[f64],
    dv: T,
) -> Result<f64, FeedbackError> {
    let m = column_observations.first().map_or(0, |h| h.len());
    let set = BeamSet {
        beams: candidates_deg.iter().map(|&e| vertical_beam(m, dv, T::lit(e))).collect(),
    };
    if set.beams.is_empty() {
        return Err(FeedbackError::EmptyCodebook);
    }
    let (i, _) = select_beam_accumulated(column_observations, &set)?;
    Ok(candidates_deg[i])
}

/// One adaptive-feedback update: re-centers the beam grid on the long-term
/// elevation, or falls back to the uniform grid when none is available.
pub fn adaptive_feedback_step(long_term_elevation_deg: Option<f64>, config: &BeamGridConfig) -> VerticalGrid {
    match long_term_elevation_deg {
        Some(c) => config.centered(c),
        None => config.uniform(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::kron_vec;
    use crate::rng::{complex_normal, stream, Stream};
    use num_complex::Complex64;

    fn random_vec(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n).map(|_| complex_normal(rng)).collect()
    }

    #[test]
    fn dft_examples() {
        let cb = build_dft_codebook::<f64>(1, 1).unwrap();
        assert_eq!(cb.len(), 1);
        assert!((cb.codewords[0][(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);

        let cb = build_dft_codebook::<f64>(2, 1).unwrap();
        let s = 0.5f64.sqrt();
        assert!((cb.codewords[0].column(0)[1] - Complex64::new(s, 0.0)).norm() < 1e-12);
        assert!((cb.codewords[1].column(0)[1] - Complex64::new(-s, 0.0)).norm() < 1e-12);

        let cb = build_dft_codebook::<f64>(4, 2).unwrap();
        assert_eq!(cb.len(), 8);
        let c = |i: usize| cb.codewords[i].column(0);
        let adjacent = dot_h(&c(0), &c(1)).norm();
        let orthogonal = dot_h(&c(0), &c(2)).norm();
        assert!(adjacent > orthogonal + 0.5);
        assert!(orthogonal < 1e-12);
        assert!(cb.codewords.iter().all(|w| (w.frobenius_sq() - 1.0).abs() < 1e-12));
        assert!(build_dft_codebook::<f64>(0, 1).is_err());
    }

    #[test]
    fn kronecker_cardinality_and_norm() {
        let v = build_dft_codebook::<f64>(2, 2).unwrap();
        let h = build_dft_codebook::<f64>(4, 4).unwrap();
        let k = kronecker_codebook(&v, &h);
        assert_eq!(k.len(), 64);
        assert_eq!(k.bits(), 6);
        assert_eq!(k.split_index(17), (1, 1));
        assert!(k.codewords.iter().all(|w| (w.frobenius_sq() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn kronecker_channel_selects_component_indices() {
        let v = build_dft_codebook::<f64>(4, 2).unwrap();
        let h = build_dft_codebook::<f64>(4, 2).unwrap();
        let k = kronecker_codebook(&v, &h);
        for (iv, ih) in [(0, 0), (3, 5), (7, 2)] {
            let ch = kron_vec(&v.codewords[iv].column(0), &h.codewords[ih].column(0));
            let (i, g) = select_pmi(&ch, &k).unwrap();
            assert_eq!(k.split_index(i), (iv, ih));
            assert!((g - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pmi_self_selection_and_scale_invariance() {
        let cb = build_dft_codebook::<f64>(8, 2).unwrap();
        let h: Vec<Complex64> = cb.codewords[3].column(0).iter().map(|z| z * 7.5).collect();
        let (i, g) = select_pmi(&h, &cb).unwrap();
        assert_eq!(i, 3);
        assert!((g - 1.0).abs() < 1e-12);
        assert_eq!(select_pmi(&vec![Complex64::new(0.0, 0.0); 8], &cb), Err(FeedbackError::ZeroChannel));
        assert!(matches!(select_pmi(&h[..4], &cb), Err(FeedbackError::Length { .. })));
    }

    #[test]
    fn pmi_matches_brute_force() {
        let mut rng = stream(11, Stream::Test, &[]);
        let cb = build_dft_codebook::<f64>(8, 2).unwrap();
        for _ in 0..200 {
            let h = random_vec(&mut rng, 8);
            let n = norm_sq(&h);
            let mut best = (0, -1.0);
            for (i, w) in cb.codewords.iter().enumerate() {
                let p = dot_h(&h, &w.column(0)).norm_sqr() / n;
                if p > best.1 {
                    best = (i, p);
                }
            }
            assert_eq!(select_pmi(&h, &cb).unwrap().0, best.0);
        }
    }

    #[test]
    fn beam_selection_examples() {
        let cb = build_dft_codebook::<f64>(8, 1).unwrap();
        let beams = BeamSet::new(cb.codewords.iter().map(|w| w.column(0)).collect()).unwrap();
        let h = beams.beams[2].clone();
        assert_eq!(select_beam(&h, &beams).unwrap().0, 2);
        let single = BeamSet::new(vec![beams.beams[5].clone()]).unwrap();
        assert_eq!(single.bits(), 0);
        let mut rng = stream(12, Stream::Test, &[]);
        assert_eq!(select_beam(&random_vec(&mut rng, 8), &single).unwrap().0, 0);
    }

    #[test]
    fn co_phase_examples() {
        let mut rng = stream(13, Stream::Test, &[]);
        let h1 = random_vec(&mut rng, 4);
        let v = random_vec(&mut rng, 4);
        let j = Complex64::new(0.0, 1.0);
        let rotated: Vec<_> = h1.iter().map(|z| z * j).collect();
        let negated: Vec<_> = h1.iter().map(|z| -z).collect();
        assert_eq!(select_co_phase(&h1, &rotated, &v).unwrap(), CoPhase::J);
        assert_eq!(select_co_phase(&h1, &h1, &v).unwrap(), CoPhase::One);
        assert_eq!(select_co_phase(&h1, &negated, &v).unwrap(), CoPhase::MinusOne);
        let zero = vec![Complex64::new(0.0, 0.0); 4];
        assert_eq!(select_co_phase(&zero, &zero, &v), Err(FeedbackError::ZeroChannel));
    }

    #[test]
    fn dual_pol_codebooks() {
        let base = build_dft_codebook::<f64>(4, 4).unwrap();
        let r1 = dual_pol_codebook(&base, 1).unwrap();
        let r2 = dual_pol_codebook(&base, 2).unwrap();
        assert_eq!(r1.len(), 64);
        assert_eq!(r2.len(), 32);
        for w in r1.codewords.iter().chain(&r2.codewords) {
            assert!((w.frobenius_sq() - 1.0).abs() < 1e-12);
        }
        for w in &r2.codewords {
            let g = w.adjoint().matmul(w).unwrap();
            assert!(g[(0, 1)].norm() < 1e-12);
        }
        assert_eq!(dual_pol_codebook(&base, 3), Err(FeedbackError::Rank(3)));
    }

    #[test]
    fn restricted_horizontal_codebooks() {
        let full = horizontal_codebook::<f64>(8, 2, 4, 1).unwrap();
        assert_eq!(full.len(), 64);
        let two = horizontal_codebook_with::<f64>(8, 2, 4, 1, Some(1), 2).unwrap();
        assert_eq!(two.len(), 2);
        assert_eq!(two.codewords[0], full.codewords[0]);
        assert_eq!(two.codewords[1], full.codewords[2]);
        let r2 = horizontal_codebook_with::<f64>(8, 2, 4, 2, Some(4), 2).unwrap();
        assert_eq!(r2.len(), 8);
        assert_eq!(
            horizontal_codebook_with::<f64>(8, 2, 4, 1, None, 3),
            Err(FeedbackError::CoPhases(3))
        );
        let dft = build_dft_codebook::<f64>(4, 4).unwrap();
        let thin = thin_codebook(&dft, 4).unwrap();
        for (i, w) in thin.codewords.iter().enumerate() {
            assert_eq!(*w, dft.codewords[4 * i]);
        }
        assert_eq!(thin_codebook(&dft, 0), Err(FeedbackError::EmptyCodebook));
        assert_eq!(thin_codebook(&dft, 99).unwrap().len(), 16);
    }

    #[test]
    fn cqi_examples() {
        assert_eq!(compute_cqi(f64::NEG_INFINITY).efficiency, 0.0);
        assert_eq!(compute_cqi(f64::NEG_INFINITY).index, 0);
        let c = compute_cqi(10.0);
        assert!((c.efficiency - 11f64.log2()).abs() < 1e-12);
        assert!((c.efficiency - 3.459).abs() < 1e-3);
        assert_eq!(c.quantized_efficiency(), 3.3223);
        let hi = compute_cqi(200.0);
        assert_eq!(hi.efficiency, 6.0);
        assert_eq!(hi.index, 15);
    }

    #[test]
    fn feedback_bit_examples() {
        assert_eq!(feedback_bits(FeedbackClass::B, 64, 4, 10.0, 1), 2);
        assert_eq!(feedback_bits(FeedbackClass::B, 64, 4, 10.0, 2), 4);
        assert_eq!(feedback_bits(FeedbackClass::A, 16, 4, 10.0, 1), 50);
        assert_eq!(feedback_bits(FeedbackClass::A, 1, 4, 10.0, 1), 0);
        assert_eq!(feedback_bits(FeedbackClass::A, 4, 4, 10.0, 1), 10);
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(5), 3);
        assert_eq!(ceil_log2(256), 8);
    }

    #[test]
    fn pilot_overhead_examples() {
        assert!((pilot_overhead_fraction(PilotScheme::NonPrecoded, 64) - 80.0 / 168.0).abs() < 1e-15);
        assert!((pilot_overhead_fraction(PilotScheme::NonPrecoded, 64) - 0.476).abs() < 0.005);
        assert!((pilot_overhead_fraction(PilotScheme::Beamformed, 12) - 28.0 / 168.0).abs() < 1e-15);
        assert!((pilot_overhead_fraction(PilotScheme::Beamformed, 0) - 16.0 / 168.0).abs() < 1e-15);
        assert!(pilot_overhead_fraction(PilotScheme::NonPrecoded, 1000) < 1.0);
        let b = PilotBudget::new(PilotScheme::NonPrecoded, 32, 4, 40.0);
        assert_eq!((b.resources, b.per_pilot_power), (32, 1.25));
        let b = PilotBudget::new(PilotScheme::Beamformed, 32, 4, 40.0);
        assert_eq!((b.resources, b.per_pilot_power), (4, 10.0));
    }

    #[test]
    fn report_bit_cost_is_sum_of_fields() {
        let r = FeedbackReport::new(2, DirectionReport::Beam(1), 2, Some(CoPhase::J), vec![3; 6]);
        assert_eq!(r.bit_cost, RI_BITS + 2 + CO_PHASE_BITS + 6 * CQI_BITS);
        assert_eq!(r.age, 0);
    }

    #[test]
    fn adaptive_grid() {
        let cfg = BeamGridConfig::default();
        let fallback = adaptive_feedback_step(None, &cfg);
        assert_eq!(fallback, cfg.uniform());
        assert!(!fallback.adapted);
        let g = adaptive_feedback_step(Some(-12.0), &cfg);
        let mean: f64 = g.elevations_deg.iter().sum::<f64>() / 4.0;
        assert!((mean + 12.0).abs() < 1e-12);
        assert!((g.elevations_deg[3] - g.elevations_deg[0] - 12.0).abs() < 1e-12);
    }

    #[test]
    fn adaptive_grid_reaches_fixed_point_on_static_channel() {
        let m = 8;
        let dv = 0.8;
        let mut rng = stream(14, Stream::Test, &[]);
        let target = vertical_beam::<f64>(m, dv, -9.3);
        let obs: Vec<Vec<Complex64>> = (0..4)
            .map(|_| {
                let g = complex_normal(&mut rng);
                target.iter().map(|z| z * g).collect()
            })
            .collect();
        let candidates: Vec<f64> = (0..36).map(|i| -35.0 + i as f64).collect();
        let cfg = BeamGridConfig::default();
        let mut grids = vec![cfg.uniform()];
        for _ in 0..3 {
            let e = long_term_elevation(&obs, &candidates, dv).unwrap();
            grids.push(adaptive_feedback_step(Some(e), &cfg));
        }
        assert_eq!(grids[2], grids[3]);
        assert_eq!(long_term_elevation(&obs, &candidates, dv).unwrap(), -9.0);
    }

    #[test]
    fn f32_selection() {
        let cb = build_dft_codebook::<f32>(4, 2).unwrap();
        let h = cb.codewords[5].column(0);
        assert_eq!(select_pmi(&h, &cb).unwrap().0, 5);
    }
}
