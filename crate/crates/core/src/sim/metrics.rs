//! Per-drop performance metrics.

use serde::{Deserialize, Serialize};

use super::traffic::PacketRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    /// Delivered bits per resource element of the carrier, averaged over cells (b/s/Hz/cell).
    pub cell_avg_se: f64,
    /// 5th percentile of the per-UE spectral efficiency (b/s/Hz).
    pub edge_se: f64,
    pub mean_upt_mbps: f64,
    pub median_upt_mbps: f64,
    /// 5th percentile of the user packet throughput.
    pub edge_upt_mbps: f64,
    pub packets_completed: u64,
    pub packets_unfinished: u64,
    /// Fraction of (cell, subband, subframe) slots carrying data.
    pub resource_utilization: f64,
    /// Share of first transmissions that were not decoded.
    pub first_tx_bler: f64,
    /// Mean number of spatial layers on an occupied subband.
    pub mean_layers: f64,
    pub feedback_bits_per_report: f64,
    pub ues: usize,
    pub active_cells: usize,
}

impl SimMetrics {
    pub const NAMES: [&'static str; 13] = [
        "cell_avg_se",
        "edge_se",
        "mean_upt_mbps",
        "median_upt_mbps",
        "edge_upt_mbps",
        "packets_completed",
        "packets_unfinished",
        "resource_utilization",
        "first_tx_bler",
        "mean_layers",
        "feedback_bits_per_report",
        "ues",
        "active_cells",
    ];

    /// Values in the order of [`SimMetrics::NAMES`].
    pub fn values(&self) -> [f64; 13] {
        [
            self.cell_avg_se,
            self.edge_se,
            self.mean_upt_mbps,
            self.median_upt_mbps,
            self.edge_upt_mbps,
            self.packets_completed as f64,
            self.packets_unfinished as f64,
            self.resource_utilization,
            self.first_tx_bler,
            self.mean_layers,
            self.feedback_bits_per_report,
            self.ues as f64,
            self.active_cells as f64,
        ]
    }
}

/// Linear-interpolation percentile (`q` in [0, 1]) of unsorted samples; zero when empty.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Empirical CDF points `(value, F(value))` of the samples.
pub fn empirical_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect()
}

pub(crate) struct Tally {
    pub busy_slots: u64,
    pub slots: u64,
    pub layers: u64,
    pub first_tx: u64,
    pub first_nack: u64,
    pub feedback_bits: u64,
    pub reports: u64,
}

pub(crate) fn collect(
    ue_se: &[f64],
    active_cells: usize,
    packets: &[PacketRecord],
    tally: &Tally,
) -> SimMetrics {
    let upt: Vec<f64> = packets.iter().map(PacketRecord::throughput_mbps).collect();
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    SimMetrics {
        cell_avg_se: ue_se.iter().sum::<f64>() / active_cells.max(1) as f64,
        edge_se: percentile(ue_se, 0.05),
        mean_upt_mbps: mean(&upt),
        median_upt_mbps: percentile(&upt, 0.5),
        edge_upt_mbps: percentile(&upt, 0.05),
        packets_completed: packets.iter().filter(|p| p.completed).count() as u64,
        packets_unfinished: packets.iter().filter(|p| !p.completed).count() as u64,
        resource_utilization: ratio(tally.busy_slots, tally.slots),
        first_tx_bler: ratio(tally.first_nack, tally.first_tx),
        mean_layers: ratio(tally.layers, tally.busy_slots),
        feedback_bits_per_report: ratio(tally.feedback_bits, tally.reports),
        ues: ue_se.len(),
        active_cells,
    }
}
