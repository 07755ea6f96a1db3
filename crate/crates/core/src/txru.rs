//! Transceiver-unit (TXRU) virtualization and precoder composition.
//!
//! The full downlink precoder is the chain `W_data = W_T · W_P · W_U`:
//! `W_T` (N_T × L) maps TXRUs onto antenna elements, `W_P` (L × N_P) maps
//! CSI-RS ports onto TXRUs and `W_U` (N_P × r) maps layers onto ports.
//!
//! Sign convention: the channel row seen by a UE in direction `d` is the
//! conjugate of the element response, so a TXRU column equal to the
//! element response toward `d` is the matched beam for that direction.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array::{steering_vector, ArrayGeometry, Direction};
use crate::linalg::{CMat, LinalgError};
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TxruError {
    #[error("cannot partition {what}: {total} is not divisible by {parts}")]
    Indivisible {
        what: &'static str,
        total: usize,
        parts: usize,
    },
    #[error("sub-array weight has {got} entries, sub-array has {expected} elements")]
    WeightLength { expected: usize, got: usize },
    #[error("L' = {l_prime} exceeds L = {l}")]
    FanIn { l: usize, l_prime: usize },
    #[error("{got} beam directions given for {expected} TXRUs")]
    BeamCount { expected: usize, got: usize },
    #[error("TXRU count must be positive")]
    Empty,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxruKind {
    Partitioned,
    Connected,
}

/// CSI-RS / TXRU layout: `n_v` rows by `n_h` columns, where `n_h` counts
/// both polarizations of a dual-polarized array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxruGrid {
    #[serde(rename = "NV")]
    pub n_v: usize,
    #[serde(rename = "NH")]
    pub n_h: usize,
}

impl TxruGrid {
    pub fn new(n_v: usize, n_h: usize) -> Self {
        Self { n_v, n_h }
    }

    pub fn count(&self) -> usize {
        self.n_v * self.n_h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TxruArchitecture<T> {
    pub kind: TxruKind,
    pub l_txru: usize,
    /// TXRUs feeding each element (1 for the partitioned architecture).
    pub l_prime: usize,
    /// N_T × L virtualization matrix.
    pub w_t: CMat<T>,
    /// Elements driven by each TXRU.
    pub nc: usize,
}

impl<T: Real> TxruArchitecture<T> {
    /// Element indices driven by TXRU `j`.
    pub fn support(&self, j: usize) -> Vec<usize> {
        (0..self.w_t.rows())
            .filter(|&e| self.w_t[(e, j)].norm_sqr() > T::zero())
            .collect()
    }
}

/// Unit-norm vertical weight steering `m` elements at spacing `dv` (wavelengths)
/// toward `elevation_deg`.
pub fn vertical_beam<T: Real>(m: usize, dv: T, elevation_deg: T) -> Vec<Complex<T>> {
    let u = elevation_deg.deg2rad().sin();
    let scale = T::one() / T::lit(m as f64).sqrt();
    steering_vector(u, dv, m)
        .entries
        .into_iter()
        .map(|z| z * scale)
        .collect()
}

/// Array partitioning: each TXRU drives a disjoint rectangular sub-array
/// with the common weight `v` (sub-array ordered row-major).
pub fn build_partitioned<T: Real>(
    geometry: &ArrayGeometry<T>,
    grid: TxruGrid,
    subarray_weight: &[Complex<T>],
) -> Result<TxruArchitecture<T>, TxruError> {
    let (m, n, p) = (geometry.m(), geometry.n(), geometry.p());
    if grid.n_v == 0 || grid.n_h == 0 {
        return Err(TxruError::Empty);
    }
    let divides = |what, total: usize, parts: usize| {
        if total % parts == 0 {
            Ok(total / parts)
        } else {
            Err(TxruError::Indivisible { what, total, parts })
        }
    };
    let nh_per_pol = divides("horizontal TXRUs across polarizations", grid.n_h, p)?;
    let sub_rows = divides("rows", m, grid.n_v)?;
    let sub_cols = divides("columns", n, nh_per_pol)?;
    let nc = sub_rows * sub_cols;
    if subarray_weight.len() != nc {
        return Err(TxruError::WeightLength {
            expected: nc,
            got: subarray_weight.len(),
        });
    }
    let l = grid.count();
    let mut w_t = CMat::zeros(geometry.len(), l);
    for row in 0..m {
        for pol in 0..p {
            for col in 0..n {
                let tv = row / sub_rows;
                let th = col / sub_cols;
                let t = tv * grid.n_h + pol * nh_per_pol + th;
                let local = (row % sub_rows) * sub_cols + col % sub_cols;
                w_t[(geometry.index(row, pol, col), t)] = subarray_weight[local];
            }
        }
    }
    Ok(TxruArchitecture {
        kind: TxruKind::Partitioned,
        l_txru: l,
        l_prime: 1,
        w_t,
        nc,
    })
}

/// Array-connected architecture.
///
/// The L TXRUs form `L'` layers of `L/L'` TXRUs each; within a layer the
/// TXRUs drive consecutive, disjoint element blocks (in element index
/// order), so every element combines exactly `L'` TXRU signals and every
/// TXRU drives `N_c = N_T·L'/L` elements. Column `j` carries the steering
/// weight toward `beam_directions[j]` on its block.
pub fn build_connected<T: Real>(
    geometry: &ArrayGeometry<T>,
    l_txru: usize,
    l_prime: usize,
    beam_directions: &[Direction<T>],
) -> Result<TxruArchitecture<T>, TxruError> {
    if l_txru == 0 || l_prime == 0 {
        return Err(TxruError::Empty);
    }
    if l_prime > l_txru {
        return Err(TxruError::FanIn {
            l: l_txru,
            l_prime,
        });
    }
    if beam_directions.len() != l_txru {
        return Err(TxruError::BeamCount {
            expected: l_txru,
            got: beam_directions.len(),
        });
    }
    if l_txru % l_prime != 0 {
        return Err(TxruError::Indivisible {
            what: "TXRUs into layers",
            total: l_txru,
            parts: l_prime,
        });
    }
    let blocks = l_txru / l_prime;
    let n_t = geometry.len();
    if n_t % blocks != 0 {
        return Err(TxruError::Indivisible {
            what: "elements into TXRU blocks",
            total: n_t,
            parts: blocks,
        });
    }
    let nc = n_t / blocks;
    let two_pi = T::lit(2.0) * T::PI();
    let mut w_t = CMat::zeros(n_t, l_txru);
    for (j, dir) in beam_directions.iter().enumerate() {
        let (uh, uv) = dir.cosines();
        let block = j % blocks;
        for e in block * nc..(block + 1) * nc {
            let pos = geometry.elements[e].position;
            let phase = -two_pi * (pos[1] * uh + pos[2] * uv) / geometry.wavelength;
            w_t[(e, j)] = Complex::from_polar(T::one(), phase);
        }
    }
    Ok(TxruArchitecture {
        kind: TxruKind::Connected,
        l_txru,
        l_prime,
        w_t,
        nc,
    })
}

/// The three factors of the downlink precoder chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderStack<T> {
    pub w_t: CMat<T>,
    pub w_p: CMat<T>,
    pub w_u: CMat<T>,
}

impl<T: Real> PrecoderStack<T> {
    pub fn new(w_t: CMat<T>, w_p: CMat<T>, w_u: CMat<T>) -> Result<Self, TxruError> {
        let s = Self { w_t, w_p, w_u };
        s.check_shapes()?;
        Ok(s)
    }

    fn check_shapes(&self) -> Result<(), TxruError> {
        if self.w_t.cols() != self.w_p.rows() {
            return Err(LinalgError::ShapeMismatch {
                op: "W_T·W_P",
                left: self.w_t.shape(),
                right: self.w_p.shape(),
            }
            .into());
        }
        if self.w_p.cols() != self.w_u.rows() {
            return Err(LinalgError::ShapeMismatch {
                op: "W_P·W_U",
                left: self.w_p.shape(),
                right: self.w_u.shape(),
            }
            .into());
        }
        Ok(())
    }

    /// Transmission rank r.
    pub fn rank(&self) -> usize {
        self.w_u.cols()
    }

    /// CSI-RS port count N_P.
    pub fn n_p(&self) -> usize {
        self.w_p.cols()
    }

    /// `W_rs = W_P · W_U`.
    pub fn w_rs(&self) -> Result<CMat<T>, TxruError> {
        Ok(self.w_p.matmul(&self.w_u)?)
    }
}

/// `W_data = W_T · W_P · W_U`, shape N_T × r.
pub fn compose_precoder<T: Real>(stack: &PrecoderStack<T>) -> Result<CMat<T>, TxruError> {
    stack.check_shapes()?;
    Ok(stack.w_t.matmul(&stack.w_rs()?)?)
}

/// Per-antenna transmit power (row energy) of a precoder.
pub fn per_antenna_power<T: Real>(w: &CMat<T>) -> Vec<T> {
    w.row_norms_sq()
}

/// Scales `w` so its total power equals `total_power`, then scales further
/// down if any antenna would exceed `per_antenna_limit`. Returns the
/// normalized precoder; a zero precoder is returned unchanged.
pub fn normalize_power<T: Real>(w: &CMat<T>, total_power: T, per_antenna_limit: Option<T>) -> CMat<T> {
    let current = w.frobenius_sq();
    if current <= T::min_positive_value() {
        return w.clone();
    }
    let mut scale = (total_power / current).sqrt();
    if let Some(limit) = per_antenna_limit {
        let peak = per_antenna_power(w).into_iter().fold(T::zero(), T::max) * scale * scale;
        if peak > limit {
            scale = scale * (limit / peak).sqrt();
        }
    }
    w.scale_real(scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{build_array, ArrayConfig};
    use crate::linalg::dot;

    type C = Complex<f64>;

    fn geom(m: usize, n: usize, p: usize) -> ArrayGeometry<f64> {
        build_array(&ArrayConfig::new(m, n, p, 0.8, 0.5, 2e9)).unwrap()
    }

    fn one() -> C {
        C::new(1.0, 0.0)
    }

    #[test]
    fn partitioned_benchmark_layout() {
        let g = geom(8, 4, 2);
        let v = vertical_beam(4, 0.8, -6.0);
        let arch = build_partitioned(&g, TxruGrid::new(2, 8), &v).unwrap();
        assert_eq!(arch.w_t.shape(), (64, 16));
        assert_eq!(arch.nc, 4);
        let mut seen = vec![false; 64];
        for j in 0..16 {
            let s = arch.support(j);
            assert_eq!(s.len(), 4);
            for e in s {
                assert!(!seen[e], "supports overlap");
                seen[e] = true;
            }
        }
        assert!(seen.iter().all(|&x| x));
        // disjoint supports => W_Tᴴ W_T diagonal
        let gram = arch.w_t.adjoint().matmul(&arch.w_t).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                if i != j {
                    assert!(gram[(i, j)].norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn per_element_txru_is_identity() {
        let g = geom(8, 4, 2);
        let arch = build_partitioned(&g, TxruGrid::new(8, 8), &[one()]).unwrap();
        assert_eq!(arch.w_t, CMat::identity(64));
    }

    #[test]
    fn partitioned_nc_arithmetic() {
        let g = geom(8, 2, 2);
        let arch = build_partitioned(&g, TxruGrid::new(2, 4), &[one(); 4]).unwrap();
        assert_eq!((g.len(), arch.l_txru, arch.nc), (32, 8, 4));
    }

    #[test]
    fn partitioned_rejects_bad_grids() {
        let g = geom(8, 4, 2);
        assert!(matches!(
            build_partitioned(&g, TxruGrid::new(3, 8), &[one(); 3]),
            Err(TxruError::Indivisible { .. })
        ));
        assert!(matches!(
            build_partitioned(&g, TxruGrid::new(2, 8), &[one(); 3]),
            Err(TxruError::WeightLength { .. })
        ));
    }

    #[test]
    fn connected_fan_in() {
        let g = geom(8, 2, 2);
        let dirs: Vec<_> = (0..8).map(|j| Direction::new(0.0, -2.0 * j as f64)).collect();
        let arch = build_connected(&g, 8, 2, &dirs).unwrap();
        assert_eq!(arch.nc, 8);
        for e in 0..32 {
            let nz = (0..8).filter(|&j| arch.w_t[(e, j)].norm() > 0.0).count();
            assert_eq!(nz, 2);
        }
        assert!(matches!(
            build_connected(&g, 2, 3, &dirs[..2]),
            Err(TxruError::FanIn { .. })
        ));
        assert!(matches!(
            build_connected(&g, 8, 2, &dirs[..3]),
            Err(TxruError::BeamCount { .. })
        ));
    }

    #[test]
    fn connected_single_beam_is_full_steering() {
        let g = geom(8, 4, 1);
        let dir = Direction::new(10.0, -5.0);
        let arch = build_connected(&g, 1, 1, &[dir]).unwrap();
        assert_eq!(arch.nc, 32);
        let resp = g.response(dir);
        for (e, a) in resp.iter().enumerate() {
            assert!((arch.w_t[(e, 0)] - *a).norm() < 1e-12);
        }
    }

    #[test]
    fn beamformed_observation_has_array_gain() {
        // y = h·v_j·x + n with h = e_t(φ_j)* gives |y − n| = N_c
        let g = geom(8, 1, 1);
        let dirs: Vec<_> = [-3.0, -9.0, -15.0, -21.0]
            .iter()
            .map(|&el| Direction::new(0.0, el))
            .collect();
        let arch = build_connected(&g, 4, 4, &dirs).unwrap();
        for (j, d) in dirs.iter().enumerate() {
            let h: Vec<C> = g.response(*d).iter().map(|z| z.conj()).collect();
            let y = dot(&h, &arch.w_t.column(j));
            assert!((y.norm() - arch.nc as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn composition_examples() {
        let g = geom(8, 4, 2);
        let arch = build_partitioned(&g, TxruGrid::new(2, 8), &vertical_beam(4, 0.8, 0.0)).unwrap();
        let w_u = CMat::column_vector(&vec![C::new(0.25, 0.0); 16]);
        let stack = PrecoderStack::new(arch.w_t.clone(), CMat::identity(16), w_u.clone()).unwrap();
        let w = compose_precoder(&stack).unwrap();
        assert!(w.max_abs_diff(&arch.w_t.matmul(&w_u).unwrap()) < 1e-15);
        assert_eq!(stack.rank(), 1);
        assert_eq!(stack.n_p(), 16);

        // rank-1 class B: W_P = 1_{N_B}, W_U = 1 sums the beam columns
        let dirs: Vec<_> = (0..4).map(|j| Direction::new(0.0, -5.0 * j as f64)).collect();
        let conn = build_connected(&g, 4, 4, &dirs).unwrap();
        let stack = PrecoderStack::new(
            conn.w_t.clone(),
            CMat::column_vector(&[one(); 4]),
            CMat::column_vector(&[one()]),
        )
        .unwrap();
        let w = compose_precoder(&stack).unwrap();
        for e in 0..64 {
            let s: C = (0..4).map(|j| conn.w_t[(e, j)]).sum();
            assert!((w[(e, 0)] - s).norm() < 1e-12);
        }

        let mut basis = vec![C::new(0.0, 0.0); 6];
        basis[2] = one();
        let stack = PrecoderStack::new(CMat::identity(6), CMat::identity(6), CMat::column_vector(&basis)).unwrap();
        assert_eq!(compose_precoder(&stack).unwrap().column(0), basis);
    }

    #[test]
    fn composition_shape_errors() {
        let r = PrecoderStack::<f64>::new(CMat::zeros(4, 2), CMat::zeros(3, 2), CMat::zeros(2, 1));
        assert!(matches!(r, Err(TxruError::Linalg(LinalgError::ShapeMismatch { .. }))));
    }

    #[test]
    fn power_normalization() {
        let w = CMat::from_fn(8, 2, |i, j| C::new(i as f64 + 1.0, j as f64));
        let n = normalize_power(&w, 2.0, None);
        assert!((n.frobenius_sq() - 2.0).abs() < 1e-12);
        let limited = normalize_power(&w, 2.0, Some(0.1));
        let peak = per_antenna_power(&limited).into_iter().fold(0.0, f64::max);
        assert!(peak <= 0.1 + 1e-12);
    }
}
