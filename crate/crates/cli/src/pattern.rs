use fdmimo_core::array::{array_factor, build_array, ArrayConfig, Direction};
use fdmimo_core::C64;

use crate::error::CliError;
use crate::output::{config_hash, num, Provenance, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plane {
    /// Azimuth sweep at the steering elevation.
    Horizontal,
    /// Elevation sweep at the steering azimuth.
    Vertical,
}

impl Plane {
    pub fn label(self) -> &'static str {
        match self {
            Plane::Horizontal => "horizontal",
            Plane::Vertical => "vertical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternPoint {
    pub plane: Plane,
    pub angle_deg: f64,
    pub gain: C64,
}

/// Array factor with weights matched to `steer` over −90°..90° in both planes.
///
/// Angles are placed at `−90 + 180·k/K` so that every multiple of `step_deg`
/// dividing 180 is hit exactly.
pub fn pattern_cuts(cfg: &ArrayConfig, steer: Direction<f64>, step_deg: f64) -> Result<Vec<PatternPoint>, CliError> {
    if !(step_deg > 0.0 && step_deg <= 180.0) {
        return Err(CliError::Usage(format!("step must lie in (0, 180], got {step_deg}")));
    }
    let g = build_array::<f64>(cfg).map_err(|e| CliError::Config(e.to_string()))?;
    let w: Vec<C64> = g.response(steer).iter().map(|a| a.conj()).collect();
    let intervals = (180.0 / step_deg).round().max(1.0) as usize;
    let mut out = Vec::with_capacity(2 * (intervals + 1));
    for plane in [Plane::Horizontal, Plane::Vertical] {
        for k in 0..=intervals {
            let angle = -90.0 + 180.0 * k as f64 / intervals as f64;
            let dir = match plane {
                Plane::Horizontal => Direction::new(angle, steer.elevation_deg),
                Plane::Vertical => Direction::new(steer.azimuth_deg, angle),
            };
            let gain = array_factor(&g, &w, dir).map_err(|e| CliError::Config(e.to_string()))?;
            out.push(PatternPoint {
                plane,
                angle_deg: angle,
                gain,
            });
        }
    }
    Ok(out)
}

pub fn pattern_table(cfg: &ArrayConfig, points: &[PatternPoint]) -> Table {
    let mut t = Table::new(
        Provenance::new(config_hash(cfg), &[]),
        &["plane", "angle_deg", "gain_re", "gain_im", "magnitude", "relative_db"],
    );
    let peak = points.iter().map(|p| p.gain.norm()).fold(0.0, f64::max);
    for p in points {
        let mag = p.gain.norm();
        let rel = if peak > 0.0 { 20.0 * (mag / peak).max(1e-15).log10() } else { -300.0 };
        t.push(vec![
            p.plane.label().into(),
            num(p.angle_deg),
            num(p.gain.re),
            num(p.gain.im),
            num(mag),
            num(rel),
        ]);
    }
    t
}
