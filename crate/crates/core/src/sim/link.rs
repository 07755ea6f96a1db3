//! Per-link channel state inside a drop.
//!
//! Every (UE, cell) link keeps its large-scale draw and angular rays. Links
//! that need explicit channels additionally hold the ray responses projected
//! onto the cell's transmit basis (TXRU columns or elements) and per-subband
//! ray gains that age with a first-order autoregressive process.

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;

use crate::array::ArrayGeometry;
use crate::channel::{draw_ray_gains, polarization_amplitude, LinkRays, RayGains};
use crate::linalg::CMat;
use crate::rng::complex_normal;
use crate::txru::TxruArchitecture;

/// Transmit basis `B` (N_T × D) stored column-sparse; the data precoder in
/// element space is `B·w` for a D-dimensional `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub columns: Vec<Vec<(usize, Complex64)>>,
    /// Polarization fed by each column.
    pub pol: Vec<usize>,
}

impl Basis {
    pub fn identity(geometry: &ArrayGeometry<f64>) -> Self {
        Basis {
            columns: (0..geometry.len()).map(|e| vec![(e, Complex64::new(1.0, 0.0))]).collect(),
            pol: geometry.elements.iter().map(|e| e.pol).collect(),
        }
    }

    pub fn from_txru(arch: &TxruArchitecture<f64>, geometry: &ArrayGeometry<f64>) -> Self {
        let mut columns = Vec::with_capacity(arch.l_txru);
        let mut pol = Vec::with_capacity(arch.l_txru);
        for j in 0..arch.l_txru {
            let col: Vec<(usize, Complex64)> = arch.support(j).into_iter().map(|e| (e, arch.w_t[(e, j)])).collect();
            pol.push(col.first().map_or(0, |&(e, _)| geometry.elements[e].pol));
            columns.push(col);
        }
        Basis { columns, pol }
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }
}

/// Element responses `a(dir)` computed from separable row/column phases.
pub struct ResponseEvaluator<'a> {
    geometry: &'a ArrayGeometry<f64>,
    rows_z: Vec<f64>,
    cols_y: Vec<f64>,
}

impl<'a> ResponseEvaluator<'a> {
    pub fn new(geometry: &'a ArrayGeometry<f64>) -> Self {
        let (m, n) = (geometry.m(), geometry.n());
        let rows_z = (0..m).map(|r| geometry.elements[geometry.index(r, 0, 0)].position[2]).collect();
        let cols_y = (0..n).map(|c| geometry.elements[geometry.index(0, 0, c)].position[1]).collect();
        ResponseEvaluator { geometry, rows_z, cols_y }
    }

    /// Conjugated element response projected on the basis: `s = Bᵀ·conj(a)`.
    pub fn projected(&self, basis: &Basis, azimuth_deg: f64, elevation_deg: f64) -> Vec<Complex64> {
        let g = self.geometry;
        let amp = g.config.element_pattern.amplitude(azimuth_deg, elevation_deg);
        let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        let (uh, uv) = (el.cos() * az.sin(), el.sin());
        let k = std::f64::consts::TAU / g.wavelength;
        // conj(a) has phase +k(y·uh + z·uv)
        let row: Vec<Complex64> = self.rows_z.iter().map(|z| Complex64::from_polar(amp, k * z * uv)).collect();
        let col: Vec<Complex64> = self.cols_y.iter().map(|y| Complex64::from_polar(1.0, k * y * uh)).collect();
        let (n, p) = (g.n(), g.p());
        basis
            .columns
            .iter()
            .map(|c| {
                c.iter()
                    .map(|&(e, w)| {
                        let r = e / (p * n);
                        let cc = e % n;
                        row[r] * col[cc] * w
                    })
                    .sum()
            })
            .collect()
    }
}

/// Bessel function of the first kind, order zero (power series; accurate for |x| ≲ 20).
pub fn bessel_j0(x: f64) -> f64 {
    let q = -(x * x) / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

#[derive(Debug, Clone)]
struct Explicit {
    /// `s_i` for every ray.
    proj: Vec<Vec<Complex64>>,
    /// Ray gains per subband.
    gains: Vec<RayGains>,
    rng: ChaCha8Rng,
    epoch: u32,
    cached: Option<(u32, Vec<CMat<f64>>)>,
}

#[derive(Debug, Clone)]
pub struct LinkState {
    pub rays: LinkRays,
    /// `a²·Σ_i p_i·‖s_i‖²/D`: mean received power per receive antenna for a
    /// unit-power precoder with random direction.
    pub mean_gain: f64,
    explicit: Option<Explicit>,
}

/// Parameters shared by every link of a drop.
#[derive(Debug, Clone, Copy)]
pub struct FadingParams {
    pub n_rx: usize,
    pub n_pol: usize,
    pub xpr_db: f64,
    pub n_subbands: usize,
    /// AR(1) correlation between consecutive channel updates.
    pub rho: f64,
}

impl LinkState {
    pub fn new(rays: LinkRays, eval: &ResponseEvaluator<'_>, basis: &Basis) -> Self {
        let amp2 = rays.amplitude().powi(2);
        let d = basis.dim() as f64;
        let mean_gain = amp2
            * rays
                .rays
                .iter()
                .map(|r| {
                    let s = eval.projected(basis, r.azimuth_deg, r.elevation_deg);
                    r.power * s.iter().map(|z| z.norm_sqr()).sum::<f64>() / d
                })
                .sum::<f64>();
        LinkState {
            rays,
            mean_gain,
            explicit: None,
        }
    }

    pub fn is_explicit(&self) -> bool {
        self.explicit.is_some()
    }

    /// Projects the rays and draws the initial per-subband gains.
    pub fn materialize(&mut self, eval: &ResponseEvaluator<'_>, basis: &Basis, fading: &FadingParams, mut rng: ChaCha8Rng, epoch: u32) {
        if self.explicit.is_some() {
            return;
        }
        let proj = self
            .rays
            .rays
            .iter()
            .map(|r| eval.projected(basis, r.azimuth_deg, r.elevation_deg))
            .collect();
        let gains = (0..fading.n_subbands)
            .map(|_| draw_ray_gains(&self.rays, fading.xpr_db, fading.n_rx, fading.n_pol, &mut rng))
            .collect();
        self.explicit = Some(Explicit {
            proj,
            gains,
            rng,
            epoch,
            cached: None,
        });
    }

    /// Channels already computed for `epoch`, if any.
    pub fn cached(&self, epoch: u32) -> Option<&[CMat<f64>]> {
        match &self.explicit {
            Some(Explicit {
                cached: Some((e, h)), ..
            }) if *e == epoch => Some(h),
            _ => None,
        }
    }

    /// Channel matrices (n_rx × D) per subband at channel-update `epoch`.
    pub fn channels(&mut self, basis: &Basis, fading: &FadingParams, epoch: u32) -> &[CMat<f64>] {
        let amp = self.rays.amplitude();
        let ex = self.explicit.as_mut().expect("link must be materialized before use");
        if ex.epoch < epoch {
            let steps = (epoch - ex.epoch) as i32;
            let rho = fading.rho.powi(steps);
            let innov = (1.0 - rho * rho).max(0.0).sqrt();
            for sb in ex.gains.iter_mut() {
                for (ray, g) in self.rays.rays.iter().zip(sb.iter_mut()) {
                    if ray.direct {
                        continue;
                    }
                    let sigma = ray.power.sqrt();
                    for (r, row) in g.iter_mut().enumerate().take(fading.n_rx) {
                        for (p, cell) in row.iter_mut().enumerate().take(fading.n_pol) {
                            let pol = polarization_amplitude(fading.xpr_db, fading.n_rx, fading.n_pol, r, p);
                            *cell = *cell * rho + complex_normal(&mut ex.rng) * (innov * sigma * pol);
                        }
                    }
                }
            }
            ex.epoch = epoch;
        }
        let stale = !matches!(&ex.cached, Some((e, _)) if *e == epoch);
        if stale {
            let d = basis.dim();
            let hs = ex
                .gains
                .iter()
                .map(|g| {
                    let mut h = CMat::zeros(fading.n_rx, d);
                    for r in 0..fading.n_rx {
                        let row = h.row_mut(r);
                        for (gi, s) in g.iter().zip(&ex.proj) {
                            let by_pol = [gi[r][0] * amp, gi[r][1] * amp];
                            for ((hk, sk), &pol) in row.iter_mut().zip(s).zip(&basis.pol) {
                                *hk += by_pol[pol] * sk;
                            }
                        }
                    }
                    h
                })
                .collect();
            ex.cached = Some((epoch, hs));
        }
        &ex.cached.as_ref().expect("just filled").1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{build_array, ArrayConfig, Direction, ElementPattern};
    use crate::channel::{assemble_channel, draw_link_rays, ChannelOptions, LinkGeometry, Scenario};
    use crate::rng::{stream, Stream};
    use crate::txru::{build_partitioned, vertical_beam, TxruGrid};

    fn geometry() -> ArrayGeometry<f64> {
        let cfg = ArrayConfig {
            element_pattern: ElementPattern::sector(),
            ..ArrayConfig::default()
        };
        build_array(&cfg).unwrap()
    }

    #[test]
    fn bessel_values() {
        assert_eq!(bessel_j0(0.0), 1.0);
        assert!((bessel_j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((bessel_j0(2.404_825_557_695_773).abs()) < 1e-12);
    }

    #[test]
    fn projection_matches_element_response() {
        let g = geometry();
        let eval = ResponseEvaluator::new(&g);
        let basis = Basis::identity(&g);
        let s = eval.projected(&basis, 23.0, -8.0);
        let a = g.response(Direction::new(23.0, -8.0));
        for (x, y) in s.iter().zip(&a) {
            assert!((x - y.conj()).norm() < 1e-12);
        }
        let arch = build_partitioned(&g, TxruGrid::new(2, 8), &vertical_beam(4, 0.8, -10.0)).unwrap();
        let b = Basis::from_txru(&arch, &g);
        let s = eval.projected(&b, 23.0, -8.0);
        let a_conj = CMat::row_vector(&a.iter().map(|z| z.conj()).collect::<Vec<_>>());
        let expected = a_conj.matmul(&arch.w_t).unwrap();
        for (x, y) in s.iter().zip(expected.row(0)) {
            assert!((x - y).norm() < 1e-12);
        }
        assert_eq!(b.pol[4], 1);
        assert_eq!(b.pol[3], 0);
    }

    #[test]
    fn explicit_channel_matches_assembly() {
        let g = geometry();
        let eval = ResponseEvaluator::new(&g);
        let basis = Basis::identity(&g);
        let link = LinkGeometry {
            distance_2d: 150.0,
            distance_3d: 151.0,
            ue_height: 4.5,
            azimuth_deg: 10.0,
            elevation_deg: -8.0,
        };
        let s = Scenario::uma();
        let rays = draw_link_rays(&s, &link, &ChannelOptions::default(), &mut stream(1, Stream::Test, &[])).unwrap();
        let fading = FadingParams {
            n_rx: 2,
            n_pol: 2,
            xpr_db: 8.0,
            n_subbands: 2,
            rho: 0.99,
        };
        let mut state = LinkState::new(rays.clone(), &eval, &basis);
        let rng = stream(1, Stream::Fading, &[0]);
        let mut gains_rng = rng.clone();
        let expected_gains = draw_ray_gains(&rays, 8.0, 2, 2, &mut gains_rng);
        state.materialize(&eval, &basis, &fading, rng, 0);
        let h = state.channels(&basis, &fading, 0)[0].clone();
        let reference = assemble_channel(&g, &rays.rays, &expected_gains, 2, rays.amplitude());
        assert!(h.max_abs_diff(&reference) < 1e-9 * reference.frobenius_sq().sqrt());
        // aging changes the channel but keeps the direct ray
        let later = state.channels(&basis, &fading, 3)[0].clone();
        assert!(later.max_abs_diff(&h) > 0.0);
    }
}
