use fdmimo_core::feedback::{feedback_bits, pilot_overhead_fraction, FeedbackClass, PilotBudget, PilotScheme};
use fdmimo_core::precoding::effective_sum_capacity;
use serde::Serialize;

use crate::error::CliError;
use crate::output::{config_hash, num, Provenance, Table};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverheadParams {
    pub n_t_min: usize,
    pub n_t_max: usize,
    pub snr_db: f64,
    pub n_b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadRow {
    pub n_t: usize,
    pub class_a_bits: u32,
    pub class_b_bits: u32,
    pub nonprecoded_fraction: f64,
    pub beamformed_fraction: f64,
}

/// Rank-1 direction feedback bits and pilot overhead fractions per antenna count.
pub fn overhead_curve(p: &OverheadParams) -> Result<Vec<OverheadRow>, CliError> {
    if p.n_t_min > p.n_t_max || p.n_b == 0 {
        return Err(CliError::Usage("need n_t_min ≤ n_t_max and N_B ≥ 1".into()));
    }
    Ok((p.n_t_min..=p.n_t_max)
        .map(|n_t| OverheadRow {
            n_t,
            class_a_bits: feedback_bits(FeedbackClass::A, n_t, p.n_b, p.snr_db, 1),
            class_b_bits: feedback_bits(FeedbackClass::B, n_t, p.n_b, p.snr_db, 1),
            nonprecoded_fraction: pilot_overhead_fraction(PilotScheme::NonPrecoded, n_t),
            beamformed_fraction: PilotBudget::new(PilotScheme::Beamformed, n_t, p.n_b, 1.0).overhead_fraction,
        })
        .collect())
}

pub fn overhead_table(p: &OverheadParams, rows: &[OverheadRow]) -> Table {
    let mut t = Table::new(
        Provenance::new(config_hash(p), &[]),
        &["n_t", "class_a_bits", "class_b_bits", "nonprecoded_overhead", "beamformed_overhead"],
    );
    for r in rows {
        t.push(vec![
            r.n_t.to_string(),
            r.class_a_bits.to_string(),
            r.class_b_bits.to_string(),
            num(r.nonprecoded_fraction),
            num(r.beamformed_fraction),
        ]);
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityParams {
    pub n_t: Vec<usize>,
    pub users: usize,
    pub snr_db: f64,
    pub n_b: usize,
    pub draws: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityRow {
    pub n_t: usize,
    /// Without pilot overhead.
    pub reference: f64,
    pub nonprecoded: f64,
    pub beamformed: f64,
    pub nonprecoded_overhead: f64,
    pub beamformed_overhead: f64,
}

/// ZF effective sum capacity under both pilot overhead models. The three
/// curves of one antenna count share the same channel draws.
pub fn capacity_curve(p: &CapacityParams) -> Result<Vec<CapacityRow>, CliError> {
    if p.n_t.is_empty() || p.users == 0 || p.draws == 0 || p.n_b == 0 {
        return Err(CliError::Usage("capacity needs antenna counts, users, draws and N_B ≥ 1".into()));
    }
    p.n_t
        .iter()
        .map(|&n_t| {
            let np = pilot_overhead_fraction(PilotScheme::NonPrecoded, n_t);
            let bf = PilotBudget::new(PilotScheme::Beamformed, n_t, p.n_b, 1.0).overhead_fraction;
            let run = |rho| {
                effective_sum_capacity(n_t, p.users, p.snr_db, rho, p.draws, p.seed)
                    .map_err(|e| CliError::Usage(e.to_string()))
            };
            Ok(CapacityRow {
                n_t,
                reference: run(0.0)?,
                nonprecoded: run(np)?,
                beamformed: run(bf)?,
                nonprecoded_overhead: np,
                beamformed_overhead: bf,
            })
        })
        .collect()
}

pub fn capacity_table(p: &CapacityParams, rows: &[CapacityRow]) -> Table {
    let mut t = Table::new(
        Provenance::new(config_hash(p), &[p.seed]),
        &[
            "n_t",
            "zero_overhead",
            "nonprecoded",
            "beamformed",
            "nonprecoded_overhead",
            "beamformed_overhead",
        ],
    );
    for r in rows {
        t.push(vec![
            r.n_t.to_string(),
            num(r.reference),
            num(r.nonprecoded),
            num(r.beamformed),
            num(r.nonprecoded_overhead),
            num(r.beamformed_overhead),
        ]);
    }
    t
}
