//! 19-site, 57-cell hexagonal layout with wraparound and UE drops.

use rand::Rng;
use serde::Serialize;

use crate::channel::{Scenario, UePosition};

pub const SITES: usize = 19;
pub const SECTORS: usize = 3;
pub const SECTOR_BEARINGS_DEG: [f64; 3] = [0.0, 120.0, 240.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub id: usize,
    pub site: usize,
    pub sector: usize,
    pub x: f64,
    pub y: f64,
    pub height: f64,
    pub bearing_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkLayout {
    pub isd: f64,
    pub cells: Vec<Cell>,
    pub wraparound: bool,
    /// Translations of the 19-site cluster used for wraparound (the first is zero).
    pub wrap_shifts: Vec<(f64, f64)>,
}

/// Lattice coordinates of the 19 sites: the origin, then rings 1 and 2.
fn site_lattice() -> Vec<(i32, i32)> {
    let mut sites = vec![(0, 0)];
    for ring in 1..=2i32 {
        for i in -ring..=ring {
            for j in -ring..=ring {
                let d = i.abs().max(j.abs()).max((i + j).abs());
                if d == ring {
                    sites.push((i, j));
                }
            }
        }
    }
    sites
}

fn lattice_to_xy(isd: f64, i: i32, j: i32) -> (f64, f64) {
    (isd * (i as f64 + 0.5 * j as f64), isd * (3f64.sqrt() / 2.0) * j as f64)
}

pub fn build_layout(scenario: &Scenario, wraparound: bool) -> NetworkLayout {
    let isd = scenario.isd;
    let mut cells = Vec::with_capacity(SITES * SECTORS);
    for (site, &(i, j)) in site_lattice().iter().enumerate() {
        let (x, y) = lattice_to_xy(isd, i, j);
        for (sector, &bearing) in SECTOR_BEARINGS_DEG.iter().enumerate() {
            cells.push(Cell {
                id: site * SECTORS + sector,
                site,
                sector,
                x,
                y,
                height: scenario.bs_height,
                bearing_deg: bearing,
            });
        }
    }
    let mut wrap_shifts = vec![(0.0, 0.0)];
    if wraparound {
        // (5, −2) and its rotations by multiples of 60° tile the plane with 19-site clusters
        let mut v = (5i32, -2i32);
        for _ in 0..6 {
            wrap_shifts.push(lattice_to_xy(isd, v.0, v.1));
            v = (-v.1, v.0 + v.1);
        }
    }
    NetworkLayout {
        isd,
        cells,
        wraparound,
        wrap_shifts,
    }
}

impl NetworkLayout {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Position of the image of `cell` closest to `(x, y)`.
    pub fn nearest_image(&self, cell: usize, x: f64, y: f64) -> (f64, f64) {
        let c = &self.cells[cell];
        self.wrap_shifts
            .iter()
            .map(|&(dx, dy)| (c.x + dx, c.y + dy))
            .min_by(|a, b| {
                let da = (a.0 - x).powi(2) + (a.1 - y).powi(2);
                let db = (b.0 - x).powi(2) + (b.1 - y).powi(2);
                da.total_cmp(&db)
            })
            .expect("at least one image")
    }
}

/// Whether `(dx, dy)` relative to a site lies inside its hexagon (flat sides
/// facing the six neighbours).
fn inside_hexagon(isd: f64, dx: f64, dy: f64) -> bool {
    let half = isd / 2.0;
    (0..6).all(|k| {
        let a = (k as f64 * 60.0).to_radians();
        dx * a.cos() + dy * a.sin() <= half
    })
}

fn sector_of(dx: f64, dy: f64) -> usize {
    let bearing = dy.atan2(dx).to_degrees().rem_euclid(360.0);
    // boresights at 0/120/240: the sector spans ±60° around its boresight
    (((bearing + 60.0) / 120.0).floor() as usize) % SECTORS
}

/// Drops a UE uniformly in the sector region of `cell` (outside the minimum
/// distance), with an indoor floor or street-level height.
pub fn drop_ue<R: Rng + ?Sized>(layout: &NetworkLayout, scenario: &Scenario, cell: usize, rng: &mut R) -> UePosition {
    let c = &layout.cells[cell];
    let r = layout.isd / 3f64.sqrt();
    let (dx, dy) = loop {
        let dx = (rng.random::<f64>() * 2.0 - 1.0) * r;
        let dy = (rng.random::<f64>() * 2.0 - 1.0) * r;
        if inside_hexagon(layout.isd, dx, dy)
            && sector_of(dx, dy) == c.sector
            && (dx * dx + dy * dy).sqrt() >= scenario.min_distance_m
        {
            break (dx, dy);
        }
    };
    let indoor = rng.random::<f64>() < scenario.indoor_fraction;
    let height = if indoor {
        let floor = rng.random_range(1..=scenario.max_floor);
        scenario.floor_height_m * (floor as f64 - 1.0) + 1.5
    } else {
        1.5
    };
    UePosition {
        x: c.x + dx,
        y: c.y + dy,
        height,
        indoor,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use std::collections::HashSet;

    #[test]
    fn fifty_seven_cells() {
        let l = build_layout(&Scenario::uma(), true);
        assert_eq!(l.len(), 57);
        assert_eq!(l.isd, 500.0);
        assert_eq!((l.cells[0].x, l.cells[0].y), (0.0, 0.0));
        let bearings: Vec<f64> = l.cells[..3].iter().map(|c| c.bearing_deg).collect();
        assert_eq!(bearings, vec![0.0, 120.0, 240.0]);
        assert_eq!(build_layout(&Scenario::umi(), false).isd, 200.0);
        // nearest neighbours sit exactly one ISD away
        let d = ((l.cells[3].x).powi(2) + (l.cells[3].y).powi(2)).sqrt();
        assert!((d - 500.0).abs() < 1e-9);
    }

    #[test]
    fn wrap_images_tile_the_plane() {
        let l = build_layout(&Scenario::uma(), true);
        let mut seen = HashSet::new();
        for shift in &l.wrap_shifts {
            for c in l.cells.iter().step_by(3) {
                let key = (((c.x + shift.0) / 10.0).round() as i64, ((c.y + shift.1) / 10.0).round() as i64);
                assert!(seen.insert(key), "duplicate site image");
            }
        }
        // every site within two rings of the cluster edge is covered exactly once
        for i in -4..=4 {
            for j in -4..=4 {
                let (x, y) = lattice_to_xy(500.0, i, j);
                if (x * x + y * y).sqrt() <= 1100.0 {
                    let key = ((x / 10.0).round() as i64, (y / 10.0).round() as i64);
                    assert!(seen.contains(&key), "({i},{j}) uncovered");
                }
            }
        }
    }

    #[test]
    fn ue_drops_stay_in_sector() {
        let s = Scenario::uma();
        let l = build_layout(&s, true);
        let mut rng = stream(1, Stream::Test, &[]);
        for cell in [0, 1, 2, 13] {
            for _ in 0..200 {
                let u = drop_ue(&l, &s, cell, &mut rng);
                let c = &l.cells[cell];
                let (dx, dy) = (u.x - c.x, u.y - c.y);
                assert_eq!(sector_of(dx, dy), c.sector);
                assert!(inside_hexagon(500.0, dx, dy));
                assert!((dx * dx + dy * dy).sqrt() >= 35.0);
                assert!(u.height >= 1.5 && u.height <= 22.5);
                if !u.indoor {
                    assert_eq!(u.height, 1.5);
                }
            }
        }
    }

    #[test]
    fn nearest_image_wraps() {
        let l = build_layout(&Scenario::uma(), true);
        // a point far to the right of the cluster sees the left-most site wrapped around
        let far_left = l.cells.iter().min_by(|a, b| a.x.total_cmp(&b.x)).unwrap().id;
        let img = l.nearest_image(far_left, 1200.0, 0.0);
        assert!(img.0 > 0.0);
        let plain = build_layout(&Scenario::uma(), false);
        assert_eq!(plain.nearest_image(far_left, 1200.0, 0.0).0, plain.cells[far_left].x);
    }
}
