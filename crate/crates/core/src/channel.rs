//! Simplified parametric 3D channel.
//!
//! The model keeps the propagation trends that matter for elevation
//! beamforming: line-of-sight probability grows with UE height and falls
//! with distance, pathloss shrinks linearly (in dB) with UE height, and the
//! elevation spread of departure shrinks both with UE height and with
//! distance. Small-scale fading is a sum of a few angular rays
//! (12 clusters by default) with complex Gaussian gains, drawn
//! independently per subband.
//!
//! All constants live in [`Scenario`] and can be overridden from the JSON
//! config; the defaults per scenario kind are listed in [`Scenario::uma`]
//! and [`Scenario::umi`].

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array::{ArrayGeometry, Direction};
use crate::linalg::CMat;
use crate::rng::{complex_normal, normal};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("distance must be {expected}, got {got}")]
    Distance { expected: &'static str, got: f64 },
    #[error("UE height must be at least 1.5 m, got {0}")]
    Height(f64),
    #[error("invalid scenario parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    #[serde(rename = "UMa")]
    UMa3D,
    #[serde(rename = "UMi")]
    UMi3D,
}

/// `P(d) = min(d1/d, 1)·(1 − e^{−d/d2}) + e^{−d/d2}` at ground level,
/// lifted toward one by `height_boost_max·(1 − e^{−(h−1.5)/height_scale_m})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LosParams {
    pub d1_m: f64,
    pub d2_m: f64,
    pub height_boost_max: f64,
    pub height_scale_m: f64,
}

/// `PL = a + b·log10(d3d) + c·log10(f_GHz)` for LOS and NLOS; NLOS is
/// floored at the LOS value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathlossParams {
    pub los: [f64; 3],
    pub nlos: [f64; 3],
}

/// `ESD = anchor·(max(d, d_min)/d0)^(−alpha) · 10^(−height_slope·(min(h, h_bs) − 1.5))`,
/// floored at `min_deg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EsdParams {
    pub anchor_deg: f64,
    pub d0_m: f64,
    pub d_min_m: f64,
    pub alpha: f64,
    pub height_slope_per_m: f64,
    pub min_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ScenarioSpec")]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub isd: f64,
    pub bs_height: f64,
    pub height_gain_db_per_m: f64,
    pub carrier_hz: f64,
    pub los: LosParams,
    pub pathloss: PathlossParams,
    pub esd: EsdParams,
    pub asd_deg: f64,
    pub n_clusters: usize,
    pub xpr_db: f64,
    pub ricean_k_db: f64,
    pub shadow_los_db: f64,
    pub shadow_nlos_db: f64,
    pub min_distance_m: f64,
    pub indoor_fraction: f64,
    pub floor_height_m: f64,
    pub max_floor: usize,
    pub ue_speed_kmh: f64,
}

/// Config-facing form of [`Scenario`]: only `kind` is required, every other
/// key overrides the per-kind default.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub isd: Option<f64>,
    pub bs_height: Option<f64>,
    pub height_gain_db_per_m: Option<f64>,
    pub carrier_hz: Option<f64>,
    pub los: Option<LosParams>,
    pub pathloss: Option<PathlossParams>,
    pub esd: Option<EsdParams>,
    pub asd_deg: Option<f64>,
    pub n_clusters: Option<usize>,
    pub xpr_db: Option<f64>,
    pub ricean_k_db: Option<f64>,
    pub shadow_los_db: Option<f64>,
    pub shadow_nlos_db: Option<f64>,
    pub min_distance_m: Option<f64>,
    pub indoor_fraction: Option<f64>,
    pub floor_height_m: Option<f64>,
    pub max_floor: Option<usize>,
    pub ue_speed_kmh: Option<f64>,
}

impl From<ScenarioSpec> for Scenario {
    fn from(s: ScenarioSpec) -> Self {
        let d = Scenario::for_kind(s.kind);
        Scenario {
            kind: s.kind,
            isd: s.isd.unwrap_or(d.isd),
            bs_height: s.bs_height.unwrap_or(d.bs_height),
            height_gain_db_per_m: s.height_gain_db_per_m.unwrap_or(d.height_gain_db_per_m),
            carrier_hz: s.carrier_hz.unwrap_or(d.carrier_hz),
            los: s.los.unwrap_or(d.los),
            pathloss: s.pathloss.unwrap_or(d.pathloss),
            esd: s.esd.unwrap_or(d.esd),
            asd_deg: s.asd_deg.unwrap_or(d.asd_deg),
            n_clusters: s.n_clusters.unwrap_or(d.n_clusters),
            xpr_db: s.xpr_db.unwrap_or(d.xpr_db),
            ricean_k_db: s.ricean_k_db.unwrap_or(d.ricean_k_db),
            shadow_los_db: s.shadow_los_db.unwrap_or(d.shadow_los_db),
            shadow_nlos_db: s.shadow_nlos_db.unwrap_or(d.shadow_nlos_db),
            min_distance_m: s.min_distance_m.unwrap_or(d.min_distance_m),
            indoor_fraction: s.indoor_fraction.unwrap_or(d.indoor_fraction),
            floor_height_m: s.floor_height_m.unwrap_or(d.floor_height_m),
            max_floor: s.max_floor.unwrap_or(d.max_floor),
            ue_speed_kmh: s.ue_speed_kmh.unwrap_or(d.ue_speed_kmh),
        }
    }
}

impl Scenario {
    pub fn for_kind(kind: ScenarioKind) -> Self {
        match kind {
            ScenarioKind::UMa3D => Self::uma(),
            ScenarioKind::UMi3D => Self::umi(),
        }
    }

    /// Urban macro: 500 m ISD, 25 m masts, 0.6 dB/m height gain.
    pub fn uma() -> Self {
        Scenario {
            kind: ScenarioKind::UMa3D,
            isd: 500.0,
            bs_height: 25.0,
            height_gain_db_per_m: 0.6,
            carrier_hz: 2.0e9,
            los: LosParams {
                d1_m: 18.0,
                d2_m: 63.0,
                height_boost_max: 0.5,
                height_scale_m: 10.0,
            },
            pathloss: PathlossParams {
                los: [28.0, 22.0, 20.0],
                nlos: [13.54, 39.08, 20.0],
            },
            esd: EsdParams {
                anchor_deg: 12.0,
                d0_m: 50.0,
                d_min_m: 10.0,
                alpha: 0.8,
                height_slope_per_m: 0.012,
                min_deg: 0.5,
            },
            asd_deg: 15.0,
            n_clusters: 12,
            xpr_db: 8.0,
            ricean_k_db: 9.0,
            shadow_los_db: 4.0,
            shadow_nlos_db: 6.0,
            min_distance_m: 35.0,
            indoor_fraction: 0.8,
            floor_height_m: 3.0,
            max_floor: 8,
            ue_speed_kmh: 3.0,
        }
    }

    /// Urban micro: 200 m ISD, 10 m masts, 0.3 dB/m height gain.
    pub fn umi() -> Self {
        Scenario {
            kind: ScenarioKind::UMi3D,
            isd: 200.0,
            bs_height: 10.0,
            height_gain_db_per_m: 0.3,
            carrier_hz: 2.0e9,
            los: LosParams {
                d1_m: 18.0,
                d2_m: 36.0,
                height_boost_max: 0.5,
                height_scale_m: 10.0,
            },
            pathloss: PathlossParams {
                los: [32.4, 21.0, 20.0],
                nlos: [22.4, 35.3, 21.3],
            },
            esd: EsdParams {
                anchor_deg: 15.0,
                d0_m: 30.0,
                d_min_m: 10.0,
                alpha: 0.6,
                height_slope_per_m: 0.01,
                min_deg: 0.5,
            },
            asd_deg: 20.0,
            n_clusters: 12,
            xpr_db: 8.0,
            ricean_k_db: 9.0,
            shadow_los_db: 4.0,
            shadow_nlos_db: 7.82,
            min_distance_m: 10.0,
            indoor_fraction: 0.8,
            floor_height_m: 3.0,
            max_floor: 8,
            ue_speed_kmh: 3.0,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |what: &str| Err(ChannelError::Parameter(what.to_string()));
        if !(self.isd > 0.0) {
            return bad("isd must be positive");
        }
        if !(self.bs_height > 0.0) {
            return bad("bs_height must be positive");
        }
        if !(self.carrier_hz > 0.0) {
            return bad("carrier_hz must be positive");
        }
        if self.n_clusters == 0 {
            return bad("n_clusters must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.indoor_fraction) {
            return bad("indoor_fraction must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.los.height_boost_max) {
            return bad("los.height_boost_max must lie in [0, 1)");
        }
        if self.los.d1_m <= 0.0 || self.los.d2_m <= 0.0 || self.los.height_scale_m <= 0.0 {
            return bad("los distances must be positive");
        }
        if self.esd.anchor_deg <= 0.0 || self.esd.d0_m <= 0.0 || self.esd.alpha < 0.0 {
            return bad("esd parameters out of range");
        }
        if self.max_floor == 0 || self.floor_height_m <= 0.0 {
            return bad("floors must be positive");
        }
        if self.min_distance_m < 0.0 || self.min_distance_m >= self.isd / 3f64.sqrt() {
            return bad("min_distance_m must lie inside the cell");
        }
        Ok(())
    }
}

/// UE location in the global frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UePosition {
    pub x: f64,
    pub y: f64,
    pub height: f64,
    pub indoor: bool,
}

fn check_height(h: f64) -> Result<(), ChannelError> {
    if !(h >= 1.5) {
        return Err(ChannelError::Height(h));
    }
    Ok(())
}

pub fn los_probability(scenario: &Scenario, distance_2d: f64, ue_height: f64) -> Result<f64, ChannelError> {
    if !(distance_2d >= 0.0) {
        return Err(ChannelError::Distance {
            expected: "nonnegative",
            got: distance_2d,
        });
    }
    check_height(ue_height)?;
    let p = &scenario.los;
    let base = if distance_2d <= p.d1_m {
        1.0
    } else {
        let e = (-distance_2d / p.d2_m).exp();
        (p.d1_m / distance_2d) * (1.0 - e) + e
    };
    let boost = p.height_boost_max * (1.0 - (-(ue_height - 1.5) / p.height_scale_m).exp());
    Ok(1.0 - (1.0 - base) * (1.0 - boost))
}

pub fn pathloss_db(scenario: &Scenario, distance_3d: f64, ue_height: f64, los: bool) -> Result<f64, ChannelError> {
    if !(distance_3d > 0.0) {
        return Err(ChannelError::Distance {
            expected: "positive",
            got: distance_3d,
        });
    }
    check_height(ue_height)?;
    let fc = (scenario.carrier_hz / 1e9).log10();
    let dl = distance_3d.log10();
    let [a, b, c] = scenario.pathloss.los;
    let pl_los = a + b * dl + c * fc;
    let base = if los {
        pl_los
    } else {
        let [a, b, c] = scenario.pathloss.nlos;
        (a + b * dl + c * fc).max(pl_los)
    };
    Ok(base - scenario.height_gain_db_per_m * (ue_height - 1.5))
}

pub fn elevation_spread_deg(scenario: &Scenario, distance_2d: f64, ue_height: f64) -> Result<f64, ChannelError> {
    if !(distance_2d > 0.0) {
        return Err(ChannelError::Distance {
            expected: "positive",
            got: distance_2d,
        });
    }
    check_height(ue_height)?;
    let p = &scenario.esd;
    let d = distance_2d.max(p.d_min_m);
    let h = ue_height.min(scenario.bs_height).max(1.5);
    let esd = p.anchor_deg * (d / p.d0_m).powf(-p.alpha) * 10f64.powf(-p.height_slope_per_m * (h - 1.5));
    Ok(esd.max(p.min_deg))
}

/// Link geometry as seen from the transmitting array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    pub distance_2d: f64,
    pub distance_3d: f64,
    pub ue_height: f64,
    /// Azimuth of the UE relative to the array boresight, degrees.
    pub azimuth_deg: f64,
    /// Elevation of the UE seen from the array, degrees (negative below).
    pub elevation_deg: f64,
}

impl LinkGeometry {
    /// Builds the geometry for a UE seen from an array at `(bs_x, bs_y, bs_height)`
    /// whose boresight points at `boresight_deg` (counter-clockwise from +x).
    pub fn from_positions(bs: (f64, f64, f64), boresight_deg: f64, ue: &UePosition) -> Self {
        let dx = ue.x - bs.0;
        let dy = ue.y - bs.1;
        let d2 = (dx * dx + dy * dy).sqrt().max(1e-3);
        let dz = ue.height - bs.2;
        let bearing = dy.atan2(dx).to_degrees();
        LinkGeometry {
            distance_2d: d2,
            distance_3d: (d2 * d2 + dz * dz).sqrt(),
            ue_height: ue.height,
            azimuth_deg: wrap_deg(bearing - boresight_deg),
            elevation_deg: dz.atan2(d2).to_degrees(),
        }
    }
}

/// Wraps an angle into (−180, 180].
pub fn wrap_deg(a: f64) -> f64 {
    let mut x = a % 360.0;
    if x > 180.0 {
        x -= 360.0;
    } else if x <= -180.0 {
        x += 360.0;
    }
    x
}

/// One propagation path: a departure direction and its share of the link power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub power: f64,
    /// The deterministic line-of-sight ray.
    pub direct: bool,
}

/// Large-scale state and angular structure of one link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRays {
    pub los: bool,
    pub pathloss_db: f64,
    pub shadowing_db: f64,
    pub esd_deg: f64,
    pub rays: Vec<Ray>,
    /// Fixed phases of the direct ray per (rx, tx polarization).
    pub direct_phase: [[f64; 2]; 2],
}

impl LinkRays {
    /// Linear amplitude of the large-scale gain.
    pub fn amplitude(&self) -> f64 {
        10f64.powf(-(self.pathloss_db + self.shadowing_db) / 20.0)
    }
}

/// Options that bypass parts of the model (tests and calibration runs).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelOptions {
    /// Use a unit large-scale gain instead of pathloss and shadowing.
    pub unit_large_scale: bool,
    pub esd_override_deg: Option<f64>,
    pub force_los: Option<bool>,
}

pub fn draw_link_rays<R: Rng + ?Sized>(
    scenario: &Scenario,
    link: &LinkGeometry,
    options: &ChannelOptions,
    rng: &mut R,
) -> Result<LinkRays, ChannelError> {
    let p_los = los_probability(scenario, link.distance_2d, link.ue_height)?;
    let u: f64 = rng.random();
    let los = options.force_los.unwrap_or(u < p_los);
    let pl = pathloss_db(scenario, link.distance_3d, link.ue_height, los)?;
    let sigma = if los {
        scenario.shadow_los_db
    } else {
        scenario.shadow_nlos_db
    };
    let sf = sigma * normal(rng);
    let esd = match options.esd_override_deg {
        Some(v) => v,
        None => elevation_spread_deg(scenario, link.distance_2d.max(1e-3), link.ue_height)?,
    };
    let (pathloss_db, shadowing_db) = if options.unit_large_scale { (0.0, 0.0) } else { (pl, sf) };

    // With line of sight the first cluster is the direct path.
    let n_direct = usize::from(los);
    let n_scatter = scenario.n_clusters - n_direct.min(scenario.n_clusters);
    let k_lin = if los { 10f64.powf(scenario.ricean_k_db / 10.0) } else { 0.0 };
    let (direct_share, scatter_share) = if n_scatter == 0 {
        (1.0, 0.0)
    } else {
        (k_lin / (1.0 + k_lin), 1.0 / (1.0 + k_lin))
    };
    let mut powers: Vec<f64> = (0..n_scatter)
        .map(|_| {
            let x: f64 = rng.random();
            -(1.0 - x).max(1e-300).ln()
        })
        .collect();
    let total: f64 = powers.iter().sum();
    for p in &mut powers {
        *p *= scatter_share / total;
    }
    let mut rays = Vec::with_capacity(scenario.n_clusters);
    if los {
        rays.push(Ray {
            azimuth_deg: link.azimuth_deg,
            elevation_deg: link.elevation_deg,
            power: direct_share,
            direct: true,
        });
    }
    rays.extend(powers.into_iter().map(|power| Ray {
        azimuth_deg: wrap_deg(link.azimuth_deg + scenario.asd_deg * normal(rng)),
        elevation_deg: (link.elevation_deg + esd * normal(rng)).clamp(-90.0, 90.0),
        power,
        direct: false,
    }));
    let two_pi = std::f64::consts::TAU;
    let direct_phase = [
        [two_pi * rng.random::<f64>(), two_pi * rng.random::<f64>()],
        [two_pi * rng.random::<f64>(), two_pi * rng.random::<f64>()],
    ];
    Ok(LinkRays {
        los,
        pathloss_db,
        shadowing_db,
        esd_deg: esd,
        rays,
        direct_phase,
    })
}

/// Amplitude coupling between receive antenna `r` and transmit polarization `p`.
///
/// With a dual-polarized array and two cross-polarized receive antennas the
/// co-polar path is `XPR` times stronger than the cross-polar one; the
/// factors average to one so the channel keeps unit mean energy per entry.
pub fn polarization_amplitude(xpr_db: f64, n_rx: usize, n_pol: usize, r: usize, p: usize) -> f64 {
    if n_rx == 2 && n_pol == 2 {
        let xpr = 10f64.powf(xpr_db / 10.0);
        if r == p {
            (2.0 * xpr / (1.0 + xpr)).sqrt()
        } else {
            (2.0 / (1.0 + xpr)).sqrt()
        }
    } else {
        1.0
    }
}

/// Small-scale gains of every ray: `gains[ray][r][p]`.
pub type RayGains = Vec<[[Complex64; 2]; 2]>;

/// Draws one realization of the ray gains, including ray power and polarization coupling.
pub fn draw_ray_gains<R: Rng + ?Sized>(
    link: &LinkRays,
    xpr_db: f64,
    n_rx: usize,
    n_pol: usize,
    rng: &mut R,
) -> RayGains {
    link.rays
        .iter()
        .map(|ray| {
            let mut g = [[Complex64::new(0.0, 0.0); 2]; 2];
            let amp = ray.power.sqrt();
            for (r, row) in g.iter_mut().enumerate().take(n_rx.min(2)) {
                for (p, cell) in row.iter_mut().enumerate().take(n_pol) {
                    let pol = polarization_amplitude(xpr_db, n_rx, n_pol, r, p);
                    *cell = if ray.direct {
                        Complex64::from_polar(amp * pol, link.direct_phase[r][p])
                    } else {
                        complex_normal(rng) * (amp * pol)
                    };
                }
            }
            g
        })
        .collect()
}

/// `H[r, k] = a · Σ_i g_i[r][pol(k)] · conj(response_k(ray_i))`.
pub fn assemble_channel(
    geometry: &ArrayGeometry<f64>,
    rays: &[Ray],
    gains: &RayGains,
    n_rx: usize,
    amplitude: f64,
) -> CMat<f64> {
    let n_t = geometry.len();
    let mut h = CMat::zeros(n_rx, n_t);
    for (ray, g) in rays.iter().zip(gains) {
        let resp = geometry.response(Direction::new(ray.azimuth_deg, ray.elevation_deg));
        for r in 0..n_rx {
            let row = h.row_mut(r);
            for (k, (hk, a)) in row.iter_mut().zip(&resp).enumerate() {
                let pol = geometry.elements[k].pol;
                *hk += g[r.min(1)][pol] * a.conj() * amplitude;
            }
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub gain: [[Complex64; 2]; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub clusters: Vec<Cluster>,
    /// n_rx × N_T coefficient matrix.
    pub h: CMat<f64>,
    pub los: bool,
    /// Receive signature (ideal co-located receive antennas).
    pub e_r: f64,
    pub large_scale_amplitude: f64,
}

/// Draws a complete single-subband channel for one link.
pub fn generate_channel<R: Rng + ?Sized>(
    geometry: &ArrayGeometry<f64>,
    scenario: &Scenario,
    link: &LinkGeometry,
    n_rx: usize,
    options: &ChannelOptions,
    rng: &mut R,
) -> Result<ChannelRealization, ChannelError> {
    let rays = draw_link_rays(scenario, link, options, rng)?;
    let gains = draw_ray_gains(&rays, scenario.xpr_db, n_rx, geometry.p(), rng);
    let amplitude = rays.amplitude();
    let h = assemble_channel(geometry, &rays.rays, &gains, n_rx, amplitude);
    let clusters = rays
        .rays
        .iter()
        .zip(&gains)
        .map(|(r, g)| Cluster {
            azimuth_deg: r.azimuth_deg,
            elevation_deg: r.elevation_deg,
            gain: *g,
        })
        .collect();
    Ok(ChannelRealization {
        clusters,
        h,
        los: rays.los,
        e_r: 1.0,
        large_scale_amplitude: amplitude,
    })
}
