//! Two-dimensional dual-polarized antenna arrays.
//!
//! The array lies in the y–z plane and radiates along +x. Elements are
//! indexed vertical-major, then polarization, then column:
//! `index = row·(P·N) + p·N + col`. With this ordering a vertical weight
//! `a` and a horizontal (polarization × column) weight `b` combine to the
//! full-array weight `a ⊗ b`.
//!
//! Directions are given as azimuth/elevation in degrees at the API surface;
//! internally everything is expressed with the directional cosines
//! `u_h = cos(el)·sin(az)` and `u_v = sin(el)`.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Real;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArrayError {
    #[error("array must have at least one element (M={m}, N={n}, P={p})")]
    Empty { m: usize, n: usize, p: usize },
    #[error("polarization degree must be 1 or 2, got {0}")]
    Polarization(usize),
    #[error("element spacing must be positive, got dv={dv}, dh={dh}")]
    Spacing { dv: f64, dh: f64 },
    #[error("carrier frequency must be positive, got {0}")]
    Carrier(f64),
    #[error("weight vector has {got} entries, array has {expected} elements")]
    WeightLength { expected: usize, got: usize },
    #[error("a {n}-element array with spacing {spacing} wavelengths has no pattern null")]
    NoNull { n: usize, spacing: f64 },
}

/// Radiation pattern of a single element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ElementPattern {
    #[default]
    Isotropic,
    /// Parabolic sector pattern in dB with a front-to-back floor.
    Parabolic {
        front_to_back_db: f64,
        hpbw_h_deg: f64,
        hpbw_v_deg: f64,
        max_gain_dbi: f64,
    },
}

impl ElementPattern {
    pub fn sector() -> Self {
        ElementPattern::Parabolic {
            front_to_back_db: 30.0,
            hpbw_h_deg: 65.0,
            hpbw_v_deg: 65.0,
            max_gain_dbi: 8.0,
        }
    }

    /// Power gain in dBi toward (azimuth, elevation) in degrees.
    pub fn gain_db(&self, az_deg: f64, el_deg: f64) -> f64 {
        match *self {
            ElementPattern::Isotropic => 0.0,
            ElementPattern::Parabolic {
                front_to_back_db,
                hpbw_h_deg,
                hpbw_v_deg,
                max_gain_dbi,
            } => {
                let a_h = -(12.0 * (az_deg / hpbw_h_deg).powi(2)).min(front_to_back_db);
                let a_v = -(12.0 * (el_deg / hpbw_v_deg).powi(2)).min(front_to_back_db);
                max_gain_dbi - (-(a_h + a_v)).min(front_to_back_db)
            }
        }
    }

    /// Field amplitude (square root of the linear power gain).
    pub fn amplitude(&self, az_deg: f64, el_deg: f64) -> f64 {
        match self {
            ElementPattern::Isotropic => 1.0,
            _ => 10f64.powf(self.gain_db(az_deg, el_deg) / 20.0),
        }
    }
}

/// `(M, N, P)` array description with spacings in wavelengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    #[serde(rename = "M")]
    pub m_vertical: usize,
    #[serde(rename = "N")]
    pub n_horizontal: usize,
    #[serde(rename = "P")]
    pub polarization: usize,
    #[serde(rename = "dv_lambda")]
    pub dv: f64,
    #[serde(rename = "dh_lambda")]
    pub dh: f64,
    #[serde(rename = "carrier_hz", default = "default_carrier_hz")]
    pub carrier_freq: f64,
    #[serde(default)]
    pub element_pattern: ElementPattern,
}

fn default_carrier_hz() -> f64 {
    2.0e9
}

impl Default for ArrayConfig {
    /// The (8, 4, 2) benchmark configuration at 2 GHz.
    fn default() -> Self {
        Self {
            m_vertical: 8,
            n_horizontal: 4,
            polarization: 2,
            dv: 0.8,
            dh: 0.5,
            carrier_freq: 2.0e9,
            element_pattern: ElementPattern::Isotropic,
        }
    }
}

impl ArrayConfig {
    pub fn new(m: usize, n: usize, p: usize, dv: f64, dh: f64, carrier_freq: f64) -> Self {
        Self {
            m_vertical: m,
            n_horizontal: n,
            polarization: p,
            dv,
            dh,
            carrier_freq,
            element_pattern: ElementPattern::Isotropic,
        }
    }

    pub fn element_count(&self) -> usize {
        self.m_vertical * self.n_horizontal * self.polarization
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    pub fn validate(&self) -> Result<(), ArrayError> {
        if self.element_count() == 0 {
            return Err(ArrayError::Empty {
                m: self.m_vertical,
                n: self.n_horizontal,
                p: self.polarization,
            });
        }
        if !(1..=2).contains(&self.polarization) {
            return Err(ArrayError::Polarization(self.polarization));
        }
        if !(self.dv > 0.0 && self.dh > 0.0) {
            return Err(ArrayError::Spacing {
                dv: self.dv,
                dh: self.dh,
            });
        }
        if !(self.carrier_freq > 0.0) {
            return Err(ArrayError::Carrier(self.carrier_freq));
        }
        Ok(())
    }
}

/// Polarization slant of an element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slant {
    Vertical,
    Plus45,
    Minus45,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element<T> {
    pub row: usize,
    pub col: usize,
    /// Polarization port index (0 or 1).
    pub pol: usize,
    pub slant: Slant,
    /// Position in meters: x along broadside, y horizontal, z vertical.
    pub position: [T; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry<T> {
    pub config: ArrayConfig,
    pub elements: Vec<Element<T>>,
    /// (height, width) in meters.
    pub bounding_box: (T, T),
    pub wavelength: T,
}

/// Azimuth/elevation pair in degrees; elevation is positive above the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction<T> {
    pub azimuth_deg: T,
    pub elevation_deg: T,
}

impl<T: Real> Direction<T> {
    pub fn new(azimuth_deg: T, elevation_deg: T) -> Self {
        Self {
            azimuth_deg,
            elevation_deg,
        }
    }

    pub fn broadside() -> Self {
        Self::new(T::zero(), T::zero())
    }

    /// `(u_h, u_v)` directional cosines along the array's horizontal and vertical axes.
    pub fn cosines(&self) -> (T, T) {
        let az = self.azimuth_deg.deg2rad();
        let el = self.elevation_deg.deg2rad();
        (el.cos() * az.sin(), el.sin())
    }

    pub fn mirrored(&self) -> Self {
        Self::new(-self.azimuth_deg, -self.elevation_deg)
    }
}

pub fn build_array<T: Real>(config: &ArrayConfig) -> Result<ArrayGeometry<T>, ArrayError> {
    config.validate()?;
    let lambda = T::lit(config.wavelength());
    let dv = T::lit(config.dv) * lambda;
    let dh = T::lit(config.dh) * lambda;
    let (m, n, p) = (config.m_vertical, config.n_horizontal, config.polarization);
    let mut elements = Vec::with_capacity(m * n * p);
    for row in 0..m {
        for pol in 0..p {
            for col in 0..n {
                let slant = match (p, pol) {
                    (1, _) => Slant::Vertical,
                    (_, 0) => Slant::Plus45,
                    _ => Slant::Minus45,
                };
                elements.push(Element {
                    row,
                    col,
                    pol,
                    slant,
                    position: [
                        T::zero(),
                        T::lit(col as f64) * dh,
                        T::lit(row as f64) * dv,
                    ],
                });
            }
        }
    }
    let height = T::lit((m - 1) as f64) * dv;
    let width = T::lit((n - 1) as f64) * dh;
    Ok(ArrayGeometry {
        config: config.clone(),
        elements,
        bounding_box: (height, width),
        wavelength: lambda,
    })
}

impl<T: Real> ArrayGeometry<T> {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn m(&self) -> usize {
        self.config.m_vertical
    }

    pub fn n(&self) -> usize {
        self.config.n_horizontal
    }

    pub fn p(&self) -> usize {
        self.config.polarization
    }

    /// Index of the element at `(row, pol, col)`.
    #[inline]
    pub fn index(&self, row: usize, pol: usize, col: usize) -> usize {
        row * self.p() * self.n() + pol * self.n() + col
    }

    /// Far-field response of every element toward `dir`, including the element pattern.
    pub fn response(&self, dir: Direction<T>) -> Vec<Complex<T>> {
        let (uh, uv) = dir.cosines();
        let amp = T::lit(
            self.config
                .element_pattern
                .amplitude(dir.azimuth_deg.as_f64(), dir.elevation_deg.as_f64()),
        );
        let k = T::lit(2.0) * T::PI() / self.wavelength;
        self.elements
            .iter()
            .map(|e| {
                let phase = -k * (e.position[1] * uh + e.position[2] * uv);
                Complex::from_polar(amp, phase)
            })
            .collect()
    }
}

/// Uniform linear array steering vector with entries `exp(−j·2π·k·γ·φ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector<T> {
    pub entries: Vec<Complex<T>>,
    pub gamma: T,
    pub phi: T,
}

pub fn steering_vector<T: Real>(phi: T, gamma: T, n: usize) -> SteeringVector<T> {
    let two_pi = T::lit(2.0) * T::PI();
    let entries = (0..n)
        .map(|k| Complex::from_polar(T::one(), -two_pi * T::lit(k as f64) * gamma * phi))
        .collect();
    SteeringVector {
        entries,
        gamma,
        phi,
    }
}

/// Coherent sum `Σ w_k · a_k(direction)` over all elements.
pub fn array_factor<T: Real>(
    geometry: &ArrayGeometry<T>,
    weights: &[Complex<T>],
    direction: Direction<T>,
) -> Result<Complex<T>, ArrayError> {
    if weights.len() != geometry.len() {
        return Err(ArrayError::WeightLength {
            expected: geometry.len(),
            got: weights.len(),
        });
    }
    Ok(geometry
        .response(direction)
        .iter()
        .zip(weights)
        .map(|(a, w)| *a * *w)
        .sum())
}

/// First null of a uniformly weighted linear array, in degrees off broadside.
pub fn first_null<T: Real>(n: usize, spacing: T) -> Result<T, ArrayError> {
    let aperture = T::lit(n as f64) * spacing;
    if aperture < T::one() {
        return Err(ArrayError::NoNull {
            n,
            spacing: spacing.as_f64(),
        });
    }
    Ok((T::one() / aperture).asin().rad2deg())
}
