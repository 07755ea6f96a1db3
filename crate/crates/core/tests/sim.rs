use fdmimo_core::array::ElementPattern;
use fdmimo_core::channel::{pathloss_db, Scenario};
use fdmimo_core::sim::config::{DebugConfig, Estimation};
use fdmimo_core::sim::engine::simulate;
use fdmimo_core::sim::{run_campaign, CsiScheme, SimConfig, TrafficModel};
use fdmimo_core::txru::TxruGrid;

fn small(scheme: CsiScheme) -> SimConfig {
    let mut c = SimConfig {
        ues_per_cell: 2,
        subframes: 30,
        explicit_interferers: 4,
        ..SimConfig::default()
    };
    c.feedback.feedback_class = scheme;
    c
}

fn debug_link(tx_power_dbm: f64) -> SimConfig {
    let mut c = SimConfig {
        n_rx: 1,
        subframes: 20,
        channel_estimation: Estimation::Ideal,
        tx_power_dbm: Some(tx_power_dbm),
        debug: Some(DebugConfig {
            ue_distance_m: 100.0,
            ue_height_m: 1.5,
            force_los: None,
        }),
        ..SimConfig::default()
    };
    c.feedback.feedback_class = CsiScheme::Ideal;
    c.txru.grid = TxruGrid::new(8, 8);
    c.txru.l = 64;
    c
}

/// Single-link SNR of full-array maximum-ratio transmission toward the debug UE.
fn debug_snr(c: &SimConfig) -> f64 {
    let scenario = Scenario::uma();
    let dz = 1.5 - scenario.bs_height;
    let d3 = (100.0f64 * 100.0 + dz * dz).sqrt();
    let el = dz.atan2(100.0).to_degrees();
    let gain = 10f64.powf(-pathloss_db(&scenario, d3, 1.5, true).unwrap() / 10.0);
    let pattern = ElementPattern::sector().amplitude(0.0, el).powi(2);
    c.tx_power_w() * gain * pattern * 64.0 / c.noise_power_w()
}

#[test]
fn debug_link_matches_closed_form() {
    let c = debug_link(-35.0);
    let snr = debug_snr(&c);
    let rate = (1.0 + snr).log2();
    assert!(rate < c.cqi_cap, "oracle must stay below the cap: {rate}");
    let expected = rate * c.overhead_ledger().data_fraction();
    let out = simulate(&c, 7).unwrap();
    assert_eq!(out.ue_se.len(), 1);
    let got = out.ue_se[0];
    assert!(((got - expected) / expected).abs() < 1e-9, "{got} vs {expected}");
    assert_eq!(out.metrics.first_tx_bler, 0.0);
    assert_eq!(out.metrics.active_cells, 1);
}

#[test]
fn debug_link_saturates_at_cap() {
    let c = debug_link(10.0);
    let out = simulate(&c, 7).unwrap();
    let expected = c.cqi_cap * c.overhead_ledger().data_fraction();
    assert!(((out.ue_se[0] - expected) / expected).abs() < 1e-9);
}

#[test]
fn isolated_packet_throughput() {
    let mut c = debug_link(-35.0);
    let bytes = 10_000u64;
    c.traffic = TrafficModel::Ftp {
        packet_bytes: bytes,
        arrival_rate: 1.0,
    };
    c.subframes = 5000;
    let per_subframe = (1.0 + debug_snr(&c)).log2() * c.overhead_ledger().data() * c.bandwidth_rb as f64;
    let bits = (bytes * 8) as f64;
    let delay = (bits / per_subframe).ceil();
    let out = simulate(&c, 3).unwrap();
    let done: Vec<_> = out.packets.iter().filter(|p| p.completed).collect();
    assert!(done.len() >= 2, "{} packets", done.len());
    for p in done {
        assert_eq!(p.delay_ms as f64, delay);
        let upt = bits / delay / 1e3;
        assert!((p.throughput_mbps() - upt).abs() < 1e-9 * upt);
    }
}

#[test]
fn same_seed_same_result() {
    let c = small(CsiScheme::BeamformedFixed);
    let a = simulate(&c, 11).unwrap();
    let b = simulate(&c, 11).unwrap();
    assert_eq!(a, b);
    let d = simulate(&c, 12).unwrap();
    assert_ne!(a.ue_se, d.ue_se);
}

#[test]
fn every_scheme_runs() {
    for scheme in [
        CsiScheme::NonPrecoded,
        CsiScheme::BeamformedFixed,
        CsiScheme::BeamformedAdaptive,
        CsiScheme::Ideal,
    ] {
        let m = simulate(&small(scheme), 1).unwrap().metrics;
        assert!(m.cell_avg_se > 0.0, "{scheme:?}: {m:?}");
        assert!(m.edge_se <= m.cell_avg_se);
        assert!((0.0..=1.0).contains(&m.first_tx_bler));
        assert!(m.mean_layers >= 1.0 && m.mean_layers <= 4.0);
        assert_eq!(m.ues, 114);
    }
}

#[test]
fn power_ledger_closes() {
    let mut c = small(CsiScheme::NonPrecoded);
    c.trace = true;
    c.explicit_interferers = 8;
    let out = simulate(&c, 5).unwrap();
    assert!(!out.ledgers.is_empty());
    for l in &out.ledgers {
        let rel = (l.total - l.sum_of_parts()).abs() / l.total;
        assert!(rel < 1e-9, "{l:?}");
        assert!(l.serving > 0.0 && l.noise > 0.0);
    }
    assert!(!out.feedback_trace.is_empty());
    assert!(!out.schedule_trace.is_empty());
}

#[test]
fn campaign_is_order_and_thread_independent() {
    let configs = vec![
        ("a".to_string(), small(CsiScheme::NonPrecoded)),
        ("b".to_string(), small(CsiScheme::BeamformedFixed)),
    ];
    let seeds = [1, 2];
    let serial = run_campaign(&configs, &seeds, 1).unwrap();
    let parallel = run_campaign(&configs, &seeds, 4).unwrap();
    assert_eq!(serial, parallel);
    assert_eq!(serial.rows.len(), 4);
    assert_eq!(serial.aggregates.len(), 2);
    for agg in &serial.aggregates {
        assert_eq!(agg.succeeded, 2);
        assert_eq!(agg.failed, 0);
    }
}

#[test]
fn campaign_keeps_failed_rows() {
    let mut bad = small(CsiScheme::NonPrecoded);
    bad.n_rx = 3;
    let configs = vec![("ok".to_string(), small(CsiScheme::Ideal)), ("bad".to_string(), bad)];
    let res = run_campaign(&configs, &[4], 1).unwrap();
    assert!(res.rows[0].outcome.is_ok());
    assert!(res.rows[1].outcome.is_err());
    assert_eq!(res.aggregates[1].failed, 1);
    assert!(res.aggregates[1].mean[0].is_nan());
}
