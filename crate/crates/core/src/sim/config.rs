//! Strict JSON configuration of a simulation run.
//!
//! Every key is optional; omitted keys take the defaults listed on each
//! field. Unknown keys are rejected.

use serde::{Deserialize, Deserializer, Serialize};

use crate::array::{ArrayConfig, ElementPattern};
use crate::channel::{Scenario, ScenarioKind};
use crate::feedback::BeamGridConfig;
use crate::txru::{TxruGrid, TxruKind};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CsiScheme {
    /// Non-precoded CSI-RS with the composite (vertical ⊗ horizontal) codebook.
    #[serde(rename = "A")]
    NonPrecoded,
    /// Fixed vertical beams, beam index plus horizontal PMI and co-phase.
    #[serde(rename = "B")]
    BeamformedFixed,
    /// Beams re-centered on a long-term vertical PMI.
    #[serde(rename = "B2")]
    BeamformedAdaptive,
    /// Genie channel knowledge at the eNB and genie link adaptation.
    #[serde(rename = "ideal")]
    Ideal,
}

impl CsiScheme {
    pub fn label(self) -> &'static str {
        match self {
            CsiScheme::NonPrecoded => "A",
            CsiScheme::BeamformedFixed => "B",
            CsiScheme::BeamformedAdaptive => "B2",
            CsiScheme::Ideal => "ideal",
        }
    }

    pub fn beamformed(self) -> bool {
        matches!(self, CsiScheme::BeamformedFixed | CsiScheme::BeamformedAdaptive)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeedbackConfig {
    pub feedback_class: CsiScheme,
    #[serde(rename = "N_B")]
    pub n_b: usize,
    pub report_period_ms: u32,
    pub delay_ms: u32,
    pub vertical_oversampling: usize,
    pub horizontal_oversampling: usize,
    /// Number of horizontal DFT beams kept (evenly strided); all when absent.
    pub horizontal_beams: Option<usize>,
    /// Rank-1 co-phase alphabet size (2 or 4).
    pub co_phases: usize,
    /// Non-precoded vertical PMI reported once per report instead of per subband.
    pub wideband_vertical_pmi: bool,
    /// Elevation range covered by the fixed vertical beams.
    pub beam_range_deg: (f64, f64),
    /// Span of the re-centered beam grid.
    pub adaptive_span_deg: f64,
    pub long_term_period_ms: u32,
    /// Candidate elevations `(low, high, step)` of the long-term vertical PMI.
    pub long_term_grid_deg: (f64, f64, f64),
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        let grid = BeamGridConfig::default();
        FeedbackConfig {
            feedback_class: CsiScheme::NonPrecoded,
            n_b: grid.n_beams,
            report_period_ms: 5,
            delay_ms: 6,
            vertical_oversampling: 2,
            horizontal_oversampling: 4,
            horizontal_beams: None,
            co_phases: 4,
            wideband_vertical_pmi: true,
            beam_range_deg: grid.range_deg,
            adaptive_span_deg: grid.adaptive_span_deg,
            long_term_period_ms: 40,
            long_term_grid_deg: (-45.0, 15.0, 1.0),
        }
    }
}

impl FeedbackConfig {
    pub fn beam_grid(&self) -> BeamGridConfig {
        BeamGridConfig {
            n_beams: self.n_b,
            range_deg: self.beam_range_deg,
            adaptive_span_deg: self.adaptive_span_deg,
        }
    }

    pub fn long_term_candidates(&self) -> Vec<f64> {
        let (lo, hi, step) = self.long_term_grid_deg;
        let n = ((hi - lo) / step).floor() as usize + 1;
        (0..n).map(|i| lo + i as f64 * step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TxruConfig {
    pub kind: TxruKind,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "L_prime")]
    pub l_prime: usize,
    pub grid: TxruGrid,
    /// Electrical tilt of the sub-array weight, degrees (negative is down).
    pub tilt_deg: f64,
}

impl Default for TxruConfig {
    fn default() -> Self {
        TxruConfig {
            kind: TxruKind::Partitioned,
            l: 16,
            l_prime: 1,
            grid: TxruGrid::new(2, 8),
            tilt_deg: -10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrafficModel {
    FullBuffer,
    Ftp {
        #[serde(default = "default_packet_bytes")]
        packet_bytes: u64,
        /// Packet arrivals per second per cell.
        arrival_rate: f64,
    },
}

fn default_packet_bytes() -> u64 {
    500_000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarqConfig {
    pub max_retransmissions: u32,
    pub rtt_ms: u32,
}

impl Default for HarqConfig {
    fn default() -> Self {
        HarqConfig {
            max_retransmissions: 3,
            rtt_ms: 8,
        }
    }
}

/// Per-RB per-subframe resource element budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OverheadConfig {
    pub control_symbols: u32,
    pub crs_re: f64,
    pub dmrs_re: f64,
    /// CSI-RS resource elements per RB per report period are capped here.
    pub csi_rs_re_cap: f64,
}

impl Default for OverheadConfig {
    fn default() -> Self {
        OverheadConfig {
            control_symbols: 3,
            crs_re: 16.0,
            dmrs_re: 12.0,
            csi_rs_re_cap: 16.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimation {
    Ideal,
    NonIdeal,
}

/// Single-link debug setup: one UE in cell 0 at a fixed point on boresight,
/// every other cell silent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DebugConfig {
    pub ue_distance_m: f64,
    pub ue_height_m: f64,
    #[serde(default)]
    pub force_los: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub scenario: Scenario,
    #[serde(deserialize_with = "sector_by_default")]
    pub array: ArrayConfig,
    pub txru: TxruConfig,
    pub feedback: FeedbackConfig,
    pub traffic: TrafficModel,
    pub ues_per_cell: usize,
    pub n_rx: usize,
    pub subframes: u32,
    pub warmup_subframes: u32,
    pub wraparound: bool,
    pub bandwidth_rb: usize,
    pub subband_count: usize,
    pub bandwidth_hz: f64,
    /// Defaults to 46 dBm (UMa) or 41 dBm (UMi).
    pub tx_power_dbm: Option<f64>,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub harq: HarqConfig,
    pub overhead: OverheadConfig,
    pub pf_window: f64,
    pub max_layers: usize,
    pub max_layers_per_ue: usize,
    /// UEs considered for pairing on each subband, best single-user PF metric first.
    pub pairing_candidates: usize,
    pub channel_estimation: Estimation,
    pub channel_update_ms: u32,
    /// Interfering cells per UE whose precoded channels are computed explicitly;
    /// weaker cells contribute their spatially white average power.
    pub explicit_interferers: usize,
    pub cqi_cap: f64,
    /// Outer-loop link adaptation toward a 10% first-transmission BLER.
    pub olla: bool,
    pub debug: Option<DebugConfig>,
    pub trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        let array = ArrayConfig {
            element_pattern: ElementPattern::sector(),
            ..ArrayConfig::default()
        };
        SimConfig {
            scenario: Scenario::uma(),
            array,
            txru: TxruConfig::default(),
            feedback: FeedbackConfig::default(),
            traffic: TrafficModel::FullBuffer,
            ues_per_cell: 10,
            n_rx: 2,
            subframes: 2000,
            warmup_subframes: 0,
            wraparound: true,
            bandwidth_rb: 50,
            subband_count: 6,
            bandwidth_hz: 10e6,
            tx_power_dbm: None,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 9.0,
            harq: HarqConfig::default(),
            overhead: OverheadConfig::default(),
            pf_window: 100.0,
            max_layers: 4,
            max_layers_per_ue: 2,
            pairing_candidates: 4,
            channel_estimation: Estimation::NonIdeal,
            channel_update_ms: 5,
            explicit_interferers: 56,
            cqi_cap: 6.0,
            olla: true,
            debug: None,
            trace: false,
        }
    }
}

/// The array block of the simulator uses the sector element pattern unless
/// another pattern is given explicitly.
fn sector_by_default<'de, D: Deserializer<'de>>(d: D) -> Result<ArrayConfig, D::Error> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Spec {
        #[serde(rename = "M")]
        m: usize,
        #[serde(rename = "N")]
        n: usize,
        #[serde(rename = "P")]
        p: usize,
        dv_lambda: f64,
        dh_lambda: f64,
        #[serde(default = "default_carrier")]
        carrier_hz: f64,
        element_pattern: Option<ElementPattern>,
    }
    let s = Spec::deserialize(d)?;
    Ok(ArrayConfig {
        element_pattern: s.element_pattern.unwrap_or_else(ElementPattern::sector),
        ..ArrayConfig::new(s.m, s.n, s.p, s.dv_lambda, s.dh_lambda, s.carrier_hz)
    })
}

fn default_carrier() -> f64 {
    2.0e9
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let cfg: SimConfig = serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn tx_power_dbm(&self) -> f64 {
        self.tx_power_dbm.unwrap_or(match self.scenario.kind {
            ScenarioKind::UMa3D => 46.0,
            ScenarioKind::UMi3D => 41.0,
        })
    }

    pub fn tx_power_w(&self) -> f64 {
        10f64.powf((self.tx_power_dbm() - 30.0) / 10.0)
    }

    pub fn noise_power_w(&self) -> f64 {
        10f64.powf((self.noise_psd_dbm_hz + self.noise_figure_db - 30.0) / 10.0) * self.bandwidth_hz
    }

    /// RBs per subband; the first `bandwidth_rb % subband_count` subbands get one extra.
    pub fn subband_sizes(&self) -> Vec<usize> {
        let base = self.bandwidth_rb / self.subband_count;
        let extra = self.bandwidth_rb % self.subband_count;
        (0..self.subband_count).map(|i| base + usize::from(i < extra)).collect()
    }

    pub fn n_cells(&self) -> usize {
        57
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Config(msg));
        self.scenario.validate().map_err(|e| SimError::Config(e.to_string()))?;
        self.array.validate().map_err(|e| SimError::Config(e.to_string()))?;
        if (self.array.carrier_freq - self.scenario.carrier_hz).abs() > 1e-6 * self.scenario.carrier_hz {
            return bad(format!(
                "array.carrier_hz ({}) differs from scenario.carrier_hz ({})",
                self.array.carrier_freq, self.scenario.carrier_hz
            ));
        }
        if self.ues_per_cell == 0 {
            return bad("ues_per_cell must be at least 1".into());
        }
        if !(1..=2).contains(&self.n_rx) {
            return bad(format!("n_rx must be 1 or 2, got {}", self.n_rx));
        }
        if self.subframes == 0 || self.warmup_subframes >= self.subframes {
            return bad("subframes must exceed warmup_subframes".into());
        }
        if self.subband_count == 0 || self.subband_count > self.bandwidth_rb {
            return bad("subband_count must lie in 1..=bandwidth_rb".into());
        }
        if !(self.bandwidth_hz > 0.0) {
            return bad("bandwidth_hz must be positive".into());
        }
        if !(self.pf_window > 1.0) {
            return bad("pf_window must exceed 1".into());
        }
        if self.max_layers == 0 || self.max_layers > 4 || self.max_layers_per_ue == 0 || self.max_layers_per_ue > 2 {
            return bad("max_layers must lie in 1..=4 and max_layers_per_ue in 1..=2".into());
        }
        if self.pairing_candidates == 0 {
            return bad("pairing_candidates must be at least 1".into());
        }
        if self.channel_update_ms == 0 || self.feedback.report_period_ms == 0 {
            return bad("channel_update_ms and report_period_ms must be positive".into());
        }
        if self.explicit_interferers > self.n_cells() - 1 {
            return bad("explicit_interferers cannot exceed 56".into());
        }
        if !(self.cqi_cap > 0.0) {
            return bad("cqi_cap must be positive".into());
        }
        if self.harq.rtt_ms == 0 {
            return bad("harq.rtt_ms must be positive".into());
        }
        let data_re = self.overhead_ledger().data();
        if !(data_re > 0.0) {
            return bad("overhead leaves no data resource elements".into());
        }
        match &self.traffic {
            TrafficModel::FullBuffer => {}
            TrafficModel::Ftp {
                packet_bytes,
                arrival_rate,
            } => {
                if *packet_bytes == 0 || !(*arrival_rate > 0.0) {
                    return bad("ftp packet_bytes and arrival_rate must be positive".into());
                }
            }
        }
        let fb = &self.feedback;
        if fb.horizontal_beams == Some(0) {
            return bad("horizontal_beams must be positive".into());
        }
        if !matches!(fb.co_phases, 2 | 4) {
            return bad("co_phases must be 2 or 4".into());
        }
        match fb.feedback_class {
            CsiScheme::BeamformedFixed | CsiScheme::BeamformedAdaptive => {
                if fb.n_b == 0 {
                    return bad("class B feedback needs N_B ≥ 1".into());
                }
                if self.array.polarization == 2 && self.array.n_horizontal == 0 {
                    return bad("array has no columns".into());
                }
                let (lo, hi) = fb.beam_range_deg;
                if !(lo < hi) || !(fb.adaptive_span_deg > 0.0) {
                    return bad("beam_range_deg must be increasing and adaptive_span_deg positive".into());
                }
                let (lo, hi, step) = fb.long_term_grid_deg;
                if !(step > 0.0) || !(lo <= hi) {
                    return bad("long_term_grid_deg must be (low, high, positive step)".into());
                }
                if fb.long_term_period_ms == 0 {
                    return bad("long_term_period_ms must be positive".into());
                }
            }
            CsiScheme::NonPrecoded | CsiScheme::Ideal => {
                let t = &self.txru;
                if t.kind != TxruKind::Partitioned {
                    return bad("the simulator supports the partitioned TXRU architecture for class A and ideal feedback".into());
                }
                if t.l != t.grid.count() || t.l_prime != 1 {
                    return bad(format!(
                        "partitioned TXRUs need L = NV·NH and L_prime = 1, got L={} NV={} NH={} L_prime={}",
                        t.l, t.grid.n_v, t.grid.n_h, t.l_prime
                    ));
                }
                if t.grid.n_v == 0
                    || t.grid.n_h == 0
                    || self.array.m_vertical % t.grid.n_v != 0
                    || t.grid.n_h % self.array.polarization != 0
                    || self.array.n_horizontal % (t.grid.n_h / self.array.polarization).max(1) != 0
                {
                    return bad("TXRU grid does not partition the array".into());
                }
                if fb.feedback_class == CsiScheme::NonPrecoded && (fb.vertical_oversampling == 0 || fb.horizontal_oversampling == 0) {
                    return bad("codebook oversampling must be positive".into());
                }
            }
        }
        if let Some(d) = &self.debug {
            if !(d.ue_distance_m > 0.0) || !(d.ue_height_m >= 1.5) {
                return bad("debug UE needs a positive distance and a height of at least 1.5 m".into());
            }
        }
        Ok(())
    }

    /// CSI-RS resources (ports) measured per report period.
    pub fn csi_rs_resources(&self) -> usize {
        match self.feedback.feedback_class {
            CsiScheme::NonPrecoded | CsiScheme::Ideal => self.txru.l,
            CsiScheme::BeamformedFixed | CsiScheme::BeamformedAdaptive => {
                self.feedback.n_b * self.array.n_horizontal * self.array.polarization
            }
        }
    }

    /// Resource-element budget per RB per subframe.
    pub fn overhead_ledger(&self) -> OverheadLedger {
        let o = &self.overhead;
        let csi = (self.csi_rs_resources() as f64).min(o.csi_rs_re_cap) / self.feedback.report_period_ms as f64;
        OverheadLedger {
            control: 12.0 * o.control_symbols as f64,
            crs: o.crs_re,
            dmrs: o.dmrs_re,
            csi_rs: csi,
        }
    }
}

/// Resource elements per RB per subframe by use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverheadLedger {
    pub control: f64,
    pub crs: f64,
    pub dmrs: f64,
    pub csi_rs: f64,
}

pub const RE_PER_RB_SUBFRAME: f64 = 168.0;

impl OverheadLedger {
    pub fn data(&self) -> f64 {
        RE_PER_RB_SUBFRAME - self.control - self.crs - self.dmrs - self.csi_rs
    }

    pub fn data_fraction(&self) -> f64 {
        self.data() / RE_PER_RB_SUBFRAME
    }

    pub fn overhead_fraction(&self) -> f64 {
        1.0 - self.data_fraction()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SimConfig::default().validate().unwrap();
        assert_eq!(SimConfig::default().subband_sizes(), vec![9, 9, 8, 8, 8, 8]);
        assert_eq!(SimConfig::default().tx_power_dbm(), 46.0);
    }

    #[test]
    fn strict_parsing() {
        assert!(SimConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(SimConfig::from_json(r#"{"feedback": {"N_B": 0, "feedback_class": "B"}}"#).is_err());
        let c = SimConfig::from_json(
            r#"{"scenario": {"kind": "UMi"}, "feedback": {"feedback_class": "B2"},
                "traffic": {"kind": "ftp", "arrival_rate": 2.0},
                "array": {"M": 8, "N": 4, "P": 2, "dv_lambda": 0.8, "dh_lambda": 0.5}}"#,
        )
        .unwrap();
        assert_eq!(c.scenario.isd, 200.0);
        assert_eq!(c.tx_power_dbm(), 41.0);
        assert_eq!(c.array.element_pattern, ElementPattern::sector());
        assert_eq!(
            c.traffic,
            TrafficModel::Ftp {
                packet_bytes: 500_000,
                arrival_rate: 2.0
            }
        );
        assert!(SimConfig::from_json(r#"{"txru": {"L": 12}}"#).is_err());
    }

    #[test]
    fn overhead_line_items() {
        let c = SimConfig::default();
        let o = c.overhead_ledger();
        assert_eq!(o.control, 36.0);
        assert!((o.csi_rs - 16.0 / 5.0).abs() < 1e-12);
        let sum = o.control + o.crs + o.dmrs + o.csi_rs;
        assert!((o.data_fraction() - (1.0 - sum / 168.0)).abs() < 1e-15);
    }

    #[test]
    fn round_trip() {
        let c = SimConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(SimConfig::from_json(&text).unwrap(), c);
    }
}
