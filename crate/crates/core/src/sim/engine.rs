//! Subframe-level simulation of one drop.
//!
//! Per subframe: traffic arrivals, CSI measurement and delayed reporting,
//! per-cell retransmissions and MU-MIMO scheduling on every subband, then the
//! actual per-layer MMSE SINR with the precoders every other cell really
//! used, and HARQ with mutual-information accumulation.
//!
//! All powers are in watts over the full carrier; the precoders of a
//! subband have unit total norm and are scaled by the cell transmit power.

use std::collections::VecDeque;

use num_complex::Complex64;
use serde::Serialize;

use super::config::{CsiScheme, Estimation, SimConfig};
use super::csi::{build_report, cqi_sinr, effective_columns, mmse_sinrs, vertical_project, Cov2, CsiReport};
use super::harq::{HarqOutcome, HarqProcess};
use super::layout::{build_layout, drop_ue, NetworkLayout};
use super::link::{bessel_j0, Basis, FadingParams, LinkState, ResponseEvaluator};
use super::metrics::{collect, SimMetrics, Tally};
use super::traffic::{cell_arrivals, Buffer, PacketArrival, PacketRecord};
use super::SimError;
use crate::array::{build_array, ArrayGeometry};
use crate::channel::{draw_link_rays, ChannelOptions, LinkGeometry, Scenario, UePosition};
use crate::feedback::{
    build_dft_codebook, cqi_efficiency_linear, cqi_index, horizontal_codebook_with, long_term_elevation, Codebook, VerticalGrid,
    CQI_EFFICIENCY,
};
use crate::linalg::{kron_vec, CMat};
use crate::precoding::slnr_precoder;
use crate::rng::{complex_normal, stream, Stream};
use crate::scheduler::{greedy_group, MuGroup, SchedulingState};
use crate::txru::{build_partitioned, vertical_beam};

/// Packets younger than this at the end of the run are not counted.
const MIN_UNFINISHED_AGE_MS: u32 = 100;
const OLLA_DOWN_DB: f64 = 0.5;
const OLLA_UP_DB: f64 = OLLA_DOWN_DB / 9.0;
const ACTIVITY_SMOOTHING: f64 = 0.1;
const MAX_LEDGER_ROWS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedbackTrace {
    pub subframe: u32,
    pub ue: usize,
    pub cell: usize,
    pub rank: usize,
    pub beam: Option<usize>,
    pub vertical_sb0: usize,
    pub horizontal_sb0: usize,
    pub cqi_sb0: u8,
    pub bits: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleTrace {
    pub subframe: u32,
    pub cell: usize,
    pub subband: usize,
    /// Co-scheduled UEs separated by `;`.
    pub ues: String,
    pub layers: usize,
    pub retransmission: bool,
}

/// Received power split of one scheduled layer (watts summed over receive antennas).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLedger {
    pub subframe: u32,
    pub ue: usize,
    pub subband: usize,
    pub serving: f64,
    pub intra_cell: f64,
    pub explicit_interference: f64,
    pub background_interference: f64,
    pub noise: f64,
    /// Trace of the full receive covariance.
    pub total: f64,
}

impl PowerLedger {
    pub fn sum_of_parts(&self) -> f64 {
        self.serving + self.intra_cell + self.explicit_interference + self.background_interference + self.noise
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropOutput {
    pub metrics: SimMetrics,
    /// Spectral efficiency of every UE (b/s/Hz).
    pub ue_se: Vec<f64>,
    pub ue_positions: Vec<UePosition>,
    pub serving_cell: Vec<usize>,
    pub packets: Vec<PacketRecord>,
    pub feedback_trace: Vec<FeedbackTrace>,
    pub schedule_trace: Vec<ScheduleTrace>,
    pub ledgers: Vec<PowerLedger>,
}

pub fn run_drop(config: &SimConfig, seed: u64) -> Result<SimMetrics, SimError> {
    Ok(simulate(config, seed)?.metrics)
}

struct Plan<'a> {
    cfg: &'a SimConfig,
    scheme: CsiScheme,
    basis: Basis,
    eval: ResponseEvaluator<'a>,
    fading: FadingParams,
    power: f64,
    noise: f64,
    sb_rbs: Vec<usize>,
    data_re: f64,
    cap: f64,
    /// Vertical codewords of the non-precoded composite codebook.
    port_vertical: Vec<Vec<Complex64>>,
    /// Horizontal codebooks by rank.
    horizontal: Vec<Codebook<f64>>,
    n_h: usize,
    max_rank: usize,
    m: usize,
    dv: f64,
}

struct UeState {
    cell: usize,
    pos: UePosition,
    links: Vec<LinkState>,
    mean_gain: Vec<f64>,
    explicit: Vec<usize>,
    background: Vec<usize>,
    buffer: Buffer,
    in_flight: f64,
    harq: Vec<HarqProcess>,
    olla_db: f64,
    pending: VecDeque<(u32, CsiReport)>,
    report: Option<CsiReport>,
    grid: VerticalGrid,
    pending_grid: VecDeque<(u32, VerticalGrid)>,
    /// Column observations gathered since the last long-term update.
    long_term: Vec<Vec<Complex64>>,
    ideal_rank: usize,
    delivered: f64,
}

impl UeState {
    fn available(&self) -> f64 {
        self.buffer.backlog() - self.in_flight
    }
}

/// Scheduler view of one UE on one subband.
struct Candidate {
    ue: usize,
    rank: usize,
    /// Estimated channel rows: per-layer rows from the report, or the genie channel.
    rows: CMat<f64>,
    su_w: CMat<f64>,
    su_sinr: Vec<f64>,
    average: f64,
    remaining: f64,
    olla: f64,
}

struct Allocation {
    /// `(ue, efficiency)` per layer, aligned with the columns of `w`.
    layers: Vec<(usize, f64)>,
    w: CMat<f64>,
    retx: bool,
}

struct Transmission {
    capacity_bits: f64,
    mutual_info: f64,
    subbands: Vec<usize>,
    rank: usize,
    retx: Option<usize>,
}

pub fn simulate(config: &SimConfig, seed: u64) -> Result<DropOutput, SimError> {
    config.validate()?;
    let mut scenario = config.scenario.clone();
    if config.debug.is_some() {
        scenario.n_clusters = 1;
        scenario.shadow_los_db = 0.0;
        scenario.shadow_nlos_db = 0.0;
    }
    let geometry: ArrayGeometry<f64> = build_array(&config.array)?;
    let plan = make_plan(config, &geometry)?;
    let layout = build_layout(&scenario, config.wraparound);
    let mut sim = Sim::new(plan, &scenario, &layout, seed)?;
    for t in 0..config.subframes {
        sim.step(t)?;
    }
    Ok(sim.finish())
}

fn make_plan<'a>(cfg: &'a SimConfig, geometry: &'a ArrayGeometry<f64>) -> Result<Plan<'a>, SimError> {
    let scheme = cfg.feedback.feedback_class;
    let (m, n, p) = (geometry.m(), geometry.n(), geometry.p());
    let fb = &cfg.feedback;
    let (basis, port_vertical, n_h) = if scheme.beamformed() {
        (Basis::identity(geometry), Vec::new(), n * p)
    } else {
        let grid = cfg.txru.grid;
        let sub_rows = m / grid.n_v;
        let sub_cols = n / (grid.n_h / p);
        let horizontal = vec![Complex64::new(1.0 / (sub_cols as f64).sqrt(), 0.0); sub_cols];
        let weight = kron_vec(&vertical_beam(sub_rows, cfg.array.dv, cfg.txru.tilt_deg), &horizontal);
        let arch = build_partitioned(geometry, grid, &weight)?;
        let vertical = if grid.n_v == 1 {
            vec![vec![Complex64::new(1.0, 0.0)]]
        } else {
            build_dft_codebook::<f64>(grid.n_v, fb.vertical_oversampling)?
                .codewords
                .iter()
                .map(|c| c.column(0))
                .collect()
        };
        (Basis::from_txru(&arch, geometry), vertical, grid.n_h)
    };
    let mut horizontal = Vec::new();
    if scheme != CsiScheme::Ideal {
        for rank in 1..=2 {
            match horizontal_codebook_with::<f64>(n_h, p, fb.horizontal_oversampling, rank, fb.horizontal_beams, fb.co_phases) {
                Ok(cb) => horizontal.push(cb),
                Err(e) if rank == 1 => return Err(e.into()),
                Err(_) => break,
            }
        }
    }
    let mut max_rank = cfg.n_rx.min(cfg.max_layers_per_ue).min(cfg.max_layers);
    if scheme != CsiScheme::Ideal {
        max_rank = max_rank.min(horizontal.len());
    }
    let wavelength = geometry.wavelength;
    let speed = cfg.scenario.ue_speed_kmh / 3.6;
    let doppler = speed / wavelength;
    let rho = bessel_j0(std::f64::consts::TAU * doppler * cfg.channel_update_ms as f64 * 1e-3).clamp(0.0, 1.0);
    Ok(Plan {
        cfg,
        scheme,
        eval: ResponseEvaluator::new(geometry),
        fading: FadingParams {
            n_rx: cfg.n_rx,
            n_pol: p,
            xpr_db: cfg.scenario.xpr_db,
            n_subbands: cfg.subband_count,
            rho,
        },
        power: cfg.tx_power_w(),
        noise: cfg.noise_power_w(),
        sb_rbs: cfg.subband_sizes(),
        data_re: cfg.overhead_ledger().data(),
        cap: cfg.cqi_cap,
        basis,
        port_vertical,
        horizontal,
        n_h,
        max_rank,
        m,
        dv: cfg.array.dv,
    })
}

struct Sim<'a> {
    plan: Plan<'a>,
    seed: u64,
    ues: Vec<UeState>,
    cell_ues: Vec<Vec<usize>>,
    arrivals: VecDeque<PacketArrival>,
    pf: SchedulingState,
    activity: Vec<f64>,
    tally: Tally,
    packets: Vec<PacketRecord>,
    feedback_trace: Vec<FeedbackTrace>,
    schedule_trace: Vec<ScheduleTrace>,
    ledgers: Vec<PowerLedger>,
}

impl<'a> Sim<'a> {
    fn new(plan: Plan<'a>, scenario: &Scenario, layout: &NetworkLayout, seed: u64) -> Result<Self, SimError> {
        let cfg = plan.cfg;
        let n_cells = layout.len();
        let mut positions: Vec<(usize, UePosition)> = Vec::new();
        let mut options = ChannelOptions::default();
        if let Some(d) = &cfg.debug {
            let c = &layout.cells[0];
            let b = c.bearing_deg.to_radians();
            positions.push((
                0,
                UePosition {
                    x: c.x + d.ue_distance_m * b.cos(),
                    y: c.y + d.ue_distance_m * b.sin(),
                    height: d.ue_height_m,
                    indoor: false,
                },
            ));
            options.force_los = Some(d.force_los.unwrap_or(true));
        } else {
            for cell in 0..n_cells {
                let mut rng = stream(seed, Stream::UeDrop, &[cell as u64]);
                for _ in 0..cfg.ues_per_cell {
                    positions.push((cell, drop_ue(layout, scenario, cell, &mut rng)));
                }
            }
        }
        let grid = cfg.feedback.beam_grid().uniform();
        let mut ues = Vec::with_capacity(positions.len());
        let mut cell_ues = vec![Vec::new(); n_cells];
        let debug = cfg.debug.is_some();
        for (u, (dropped, pos)) in positions.into_iter().enumerate() {
            let mut links = Vec::with_capacity(n_cells);
            for (c, site) in layout.cells.iter().enumerate() {
                let (bx, by) = layout.nearest_image(c, pos.x, pos.y);
                let geo = LinkGeometry::from_positions((bx, by, site.height), site.bearing_deg, &pos);
                let mut rng = stream(seed, Stream::LargeScale, &[u as u64, c as u64]);
                let rays = draw_link_rays(scenario, &geo, &options, &mut rng)?;
                links.push(LinkState::new(rays, &plan.eval, &plan.basis));
            }
            let mean_gain: Vec<f64> = links.iter().map(|l| l.mean_gain).collect();
            // strongest wideband received power picks the serving cell
            let cell = if debug {
                dropped
            } else {
                (0..n_cells).fold(dropped, |best, c| if mean_gain[c] > mean_gain[best] { c } else { best })
            };
            let mut others: Vec<usize> = (0..n_cells).filter(|&c| c != cell).collect();
            others.sort_by(|&a, &b| mean_gain[b].total_cmp(&mean_gain[a]).then(a.cmp(&b)));
            let background = others.split_off(cfg.explicit_interferers.min(others.len()));
            cell_ues[cell].push(u);
            ues.push(UeState {
                cell,
                pos,
                links,
                mean_gain,
                explicit: others,
                background,
                buffer: Buffer::new(&cfg.traffic),
                in_flight: 0.0,
                harq: Vec::new(),
                olla_db: 0.0,
                pending: VecDeque::new(),
                report: None,
                grid: grid.clone(),
                pending_grid: VecDeque::new(),
                long_term: Vec::new(),
                ideal_rank: 1,
                delivered: 0.0,
            });
        }
        let mut arrivals: Vec<PacketArrival> = Vec::new();
        for (cell, members) in cell_ues.iter().enumerate() {
            let mut rng = stream(seed, Stream::Traffic, &[cell as u64]);
            arrivals.extend(cell_arrivals(&cfg.traffic, members, cfg.subframes, &mut rng));
        }
        arrivals.sort_by_key(|a| a.subframe);
        let full = matches!(cfg.traffic, super::config::TrafficModel::FullBuffer);
        let activity = cell_ues
            .iter()
            .map(|m| if m.is_empty() { 0.0 } else if full { 1.0 } else { ACTIVITY_SMOOTHING })
            .collect();
        let pf = SchedulingState::new(ues.len(), cfg.pf_window).map_err(|e| SimError::Config(e.to_string()))?;
        Ok(Sim {
            plan,
            seed,
            ues,
            cell_ues,
            arrivals: arrivals.into(),
            pf,
            activity,
            tally: Tally {
                busy_slots: 0,
                slots: 0,
                layers: 0,
                first_tx: 0,
                first_nack: 0,
                feedback_bits: 0,
                reports: 0,
            },
            packets: Vec::new(),
            feedback_trace: Vec::new(),
            schedule_trace: Vec::new(),
            ledgers: Vec::new(),
        })
    }

    fn epoch(&self, t: u32) -> u32 {
        t / self.plan.cfg.channel_update_ms
    }

    /// Makes sure the link from cell `c` to UE `u` has channels for `epoch`.
    fn refresh(&mut self, u: usize, c: usize, epoch: u32) {
        let plan = &self.plan;
        let link = &mut self.ues[u].links[c];
        if !link.is_explicit() {
            let rng = stream(self.seed, Stream::Fading, &[u as u64, c as u64]);
            link.materialize(&plan.eval, &plan.basis, &plan.fading, rng, epoch);
        }
        link.channels(&plan.basis, &plan.fading, epoch);
    }

    fn serving(&self, u: usize, epoch: u32) -> &[CMat<f64>] {
        let ue = &self.ues[u];
        ue.links[ue.cell].cached(epoch).expect("serving link refreshed")
    }

    /// `√(P/(N0 + I))`: scale that turns the serving channel into SINR units.
    fn csi_scale(&self, u: usize) -> f64 {
        let ue = &self.ues[u];
        let interference: f64 = ue
            .mean_gain
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != ue.cell)
            .map(|(c, g)| g * self.activity[c])
            .sum::<f64>()
            * self.plan.power;
        (self.plan.power / (self.plan.noise + interference)).sqrt()
    }

    fn step(&mut self, t: u32) -> Result<(), SimError> {
        let cfg = self.plan.cfg;
        let epoch = self.epoch(t);
        while self.arrivals.front().is_some_and(|a| a.subframe <= t) {
            let a = self.arrivals.pop_front().expect("front exists");
            self.ues[a.ue].buffer.push(a.subframe, a.bits);
        }
        for u in 0..self.ues.len() {
            let cell = self.ues[u].cell;
            self.refresh(u, cell, epoch);
        }
        if t % cfg.feedback.report_period_ms == 0 {
            self.measure(t, epoch)?;
        }
        if self.plan.scheme == CsiScheme::BeamformedAdaptive {
            if t % cfg.feedback.report_period_ms == 0 {
                self.sample_long_term(t, epoch);
            }
            if t % cfg.feedback.long_term_period_ms == 0 {
                self.update_grids(t);
            }
        }
        for ue in &mut self.ues {
            while ue.pending.front().is_some_and(|(at, _)| *at <= t) {
                ue.report = ue.pending.pop_front().map(|(_, r)| r);
            }
            while ue.pending_grid.front().is_some_and(|(at, _)| *at <= t) {
                ue.grid = ue.pending_grid.pop_front().expect("front exists").1;
            }
        }

        let n_cells = self.cell_ues.len();
        let n_sb = self.plan.sb_rbs.len();
        let mut alloc: Vec<Vec<Option<Allocation>>> = (0..n_cells).map(|_| (0..n_sb).map(|_| None).collect()).collect();
        let mut tx: Vec<Option<Transmission>> = (0..self.ues.len()).map(|_| None).collect();
        for c in 0..n_cells {
            if self.cell_ues[c].is_empty() {
                continue;
            }
            self.schedule_retransmissions(c, t, epoch, &mut alloc[c], &mut tx);
            self.schedule_new(c, epoch, &mut alloc[c], &mut tx);
        }

        self.receive(t, epoch, &alloc, &mut tx);
        let delivered = self.complete(t, &mut tx);
        self.pf.update(&delivered);

        let measured = t >= cfg.warmup_subframes;
        for (c, cell_alloc) in alloc.iter().enumerate() {
            let busy = cell_alloc.iter().filter(|a| a.is_some()).count();
            if !self.cell_ues[c].is_empty() {
                self.activity[c] =
                    (1.0 - ACTIVITY_SMOOTHING) * self.activity[c] + ACTIVITY_SMOOTHING * busy as f64 / n_sb as f64;
                if measured {
                    self.tally.slots += n_sb as u64;
                    self.tally.busy_slots += busy as u64;
                    self.tally.layers += cell_alloc.iter().flatten().map(|a| a.layers.len() as u64).sum::<u64>();
                }
            }
            if cfg.trace {
                for (sb, a) in cell_alloc.iter().enumerate() {
                    if let Some(a) = a {
                        let mut ues: Vec<usize> = a.layers.iter().map(|l| l.0).collect();
                        ues.dedup();
                        self.schedule_trace.push(ScheduleTrace {
                            subframe: t,
                            cell: c,
                            subband: sb,
                            ues: ues.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(";"),
                            layers: a.layers.len(),
                            retransmission: a.retx,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn estimation_noise(&self, u: usize, t: u32, x: &mut CMat<f64>, variance: f64) {
        let mut rng = stream(self.seed, Stream::Estimation, &[u as u64, t as u64]);
        let sd = variance.sqrt();
        for r in 0..x.rows() {
            for z in x.row_mut(r) {
                *z += complex_normal(&mut rng) * sd;
            }
        }
    }

    fn measure(&mut self, t: u32, epoch: u32) -> Result<(), SimError> {
        let cfg = self.plan.cfg;
        let noisy = cfg.channel_estimation == Estimation::NonIdeal;
        for u in 0..self.ues.len() {
            if !(self.ues[u].available() > 0.0) {
                continue;
            }
            let scale = self.csi_scale(u);
            let xs: Vec<CMat<f64>> = self.serving(u, epoch).iter().map(|h| h.scale_real(scale)).collect();
            if self.plan.scheme == CsiScheme::Ideal {
                self.ues[u].ideal_rank = self.ideal_rank(&xs)?;
                continue;
            }
            // per-port pilot power is bounded by the power amplifiers feeding the port
            let (vertical, n_ports) = if self.plan.scheme.beamformed() {
                (self.ues[u].grid.beam_set(self.plan.m, self.plan.dv).beams, self.plan.n_h)
            } else {
                (self.plan.port_vertical.clone(), self.plan.basis.dim())
            };
            let mut ys = Vec::with_capacity(xs.len());
            let mut truth = Vec::with_capacity(xs.len());
            for (sb, x) in xs.iter().enumerate() {
                let variance = n_ports as f64 / self.plan.sb_rbs[sb] as f64;
                let clean = vertical_project(x, &vertical, self.plan.n_h);
                if !noisy {
                    ys.push(clean);
                    continue;
                }
                if self.plan.scheme.beamformed() {
                    let mut y = clean.clone();
                    for (v, yv) in y.iter_mut().enumerate() {
                        let key = t.wrapping_mul(64).wrapping_add((sb * 8 + v) as u32);
                        self.estimation_noise(u, key, yv, variance);
                    }
                    ys.push(y);
                } else {
                    let mut x = x.clone();
                    self.estimation_noise(u, t.wrapping_mul(64).wrapping_add(sb as u32), &mut x, variance);
                    ys.push(vertical_project(&x, &vertical, self.plan.n_h));
                }
                truth.push(clean);
            }
            let report = build_report(
                &ys,
                noisy.then_some(truth.as_slice()),
                &vertical,
                &self.plan.horizontal,
                self.plan.scheme.beamformed() || cfg.feedback.wideband_vertical_pmi,
                self.plan.max_rank,
                self.plan.cap,
            );
            self.tally.feedback_bits += report.bits as u64;
            self.tally.reports += 1;
            if cfg.trace {
                let s0 = &report.subbands[0];
                self.feedback_trace.push(FeedbackTrace {
                    subframe: t,
                    ue: u,
                    cell: self.ues[u].cell,
                    rank: report.rank,
                    beam: report.beam,
                    vertical_sb0: s0.vertical,
                    horizontal_sb0: s0.horizontal,
                    cqi_sb0: s0.cqi[0],
                    bits: report.bits,
                });
            }
            self.ues[u].pending.push_back((t + cfg.feedback.delay_ms, report));
        }
        Ok(())
    }

    /// Samples one column of the non-precoded pilots for the long-term
    /// vertical direction.
    fn sample_long_term(&mut self, t: u32, epoch: u32) {
        let cfg = self.plan.cfg;
        let (m, n_h) = (self.plan.m, self.plan.n_h);
        for u in 0..self.ues.len() {
            if !(self.ues[u].available() > 0.0) {
                continue;
            }
            let scale = self.csi_scale(u);
            let mut obs = Vec::new();
            for (sb, h) in self.serving(u, epoch).iter().enumerate() {
                let mut col = CMat::from_fn(h.rows(), m, |r, row| h[(r, row * n_h)] * scale);
                if cfg.channel_estimation == Estimation::NonIdeal {
                    let key = t.wrapping_mul(64).wrapping_add(60 + sb as u32);
                    let ports = self.plan.basis.dim() as f64;
                    self.estimation_noise(u, key, &mut col, ports / self.plan.sb_rbs[sb] as f64);
                }
                for r in 0..col.rows() {
                    obs.push(col.row(r).iter().map(|z| z.conj()).collect::<Vec<_>>());
                }
            }
            self.ues[u].long_term.extend(obs);
        }
    }

    /// Re-centers each beamformed grid on the elevation that captured the
    /// most power over the samples of the last long-term period.
    fn update_grids(&mut self, t: u32) {
        let cfg = self.plan.cfg;
        let candidates = cfg.feedback.long_term_candidates();
        let grid_cfg = cfg.feedback.beam_grid();
        for ue in &mut self.ues {
            if ue.long_term.is_empty() {
                continue;
            }
            let elevation = long_term_elevation(&ue.long_term, &candidates, self.plan.dv).ok();
            ue.long_term.clear();
            let grid = crate::feedback::adaptive_feedback_step(elevation, &grid_cfg);
            ue.pending_grid.push_back((t + cfg.feedback.delay_ms, grid));
        }
    }

    fn ideal_rank(&self, xs: &[CMat<f64>]) -> Result<usize, SimError> {
        if self.plan.max_rank < 2 {
            return Ok(1);
        }
        let (mut r1, mut r2) = (0.0, 0.0);
        for x in xs {
            let c = crate::precoding::rank_candidates_from_channel(x, 1.0, self.plan.cap)?;
            r1 += c.rank1_efficiency;
            r2 += c.rank2_efficiency;
        }
        Ok(if r2 > r1 { 2 } else { 1 })
    }

    fn efficiency(&self, sinr: f64, olla: f64) -> f64 {
        if self.plan.scheme == CsiScheme::Ideal {
            cqi_efficiency_linear(sinr, self.plan.cap)
        } else {
            // out-of-range reports still get the most robust MCS
            CQI_EFFICIENCY[cqi_index(cqi_efficiency_linear(sinr * olla, self.plan.cap)).max(1) as usize]
        }
    }

    fn candidate(&self, u: usize, sb: usize, epoch: u32, remaining: f64) -> Option<Candidate> {
        let ue = &self.ues[u];
        let olla = if self.plan.cfg.olla && self.plan.scheme != CsiScheme::Ideal {
            10f64.powf(ue.olla_db / 10.0)
        } else {
            1.0
        };
        let base = |rows, rank, su_w, su_sinr| Candidate {
            ue: u,
            rank,
            rows,
            su_w,
            su_sinr,
            average: self.pf.average[u],
            remaining,
            olla,
        };
        if self.plan.scheme == CsiScheme::Ideal {
            let x = self.serving(u, epoch)[sb].scale_real(self.csi_scale(u));
            let rank = ue.ideal_rank.min(x.rows());
            let pre = slnr_precoder(std::slice::from_ref(&x), &[rank], 1.0, 1.0).ok()?;
            let g = effective_columns(&x, &pre.w);
            let sinr = mmse_sinrs(&g, &(0..pre.w.cols()).collect::<Vec<_>>());
            Some(base(x, rank, pre.w, sinr))
        } else {
            let report = ue.report.as_ref()?;
            let s = &report.subbands[sb];
            let floor = cqi_sinr(1);
            let sinr: Vec<f64> = s.sinr().into_iter().map(|x| x.max(floor)).collect();
            let r = report.rank;
            let rows = CMat::from_fn(r, s.w.rows(), |l, i| {
                let norm = s.w.column(l).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                s.w[(i, l)].conj() * ((sinr[l] * r as f64).sqrt() / norm)
            });
            Some(base(rows, r, s.w.clone(), sinr))
        }
    }

    /// Precoder and per-layer estimated SINR for a group (columns of each UE contiguous).
    fn evaluate(&self, group: &MuGroup, cands: &[Candidate]) -> Option<(CMat<f64>, Vec<(usize, f64)>, Vec<f64>)> {
        let find = |ue: usize| cands.iter().find(|c| c.ue == ue).expect("candidate exists");
        if group.ues.len() == 1 && group.ranks[0] == find(group.ues[0]).rank {
            let c = find(group.ues[0]);
            let layers = c.su_sinr.iter().map(|_| (c.ue, 0.0)).collect();
            return Some((c.su_w.clone(), layers, c.su_sinr.clone()));
        }
        let ideal = self.plan.scheme == CsiScheme::Ideal;
        let channels: Vec<CMat<f64>> = group
            .ues
            .iter()
            .zip(&group.ranks)
            .map(|(&u, &r)| {
                let c = find(u);
                if ideal {
                    c.rows.clone()
                } else {
                    CMat::from_rows(&(0..r).map(|l| c.rows.row(l).to_vec()).collect::<Vec<_>>())
                }
            })
            .collect();
        let pre = slnr_precoder(&channels, &group.ranks, 1.0, 1.0).ok()?;
        let mut layers = Vec::with_capacity(pre.w.cols());
        let mut sinrs = Vec::with_capacity(pre.w.cols());
        for (k, h) in channels.iter().enumerate() {
            let own: Vec<usize> = (0..pre.w.cols()).filter(|&j| pre.layer_user[j] == k).collect();
            if ideal {
                let g = effective_columns(h, &pre.w);
                sinrs.extend(mmse_sinrs(&g, &own));
            } else {
                let g = h.matmul(&pre.w).ok()?;
                for (l, &j) in own.iter().enumerate() {
                    let signal = g[(l, j)].norm_sqr();
                    let leak: f64 = (0..g.cols()).filter(|&m| m != j).map(|m| g[(l, m)].norm_sqr()).sum();
                    sinrs.push(signal / (1.0 + leak));
                }
            }
            layers.extend(own.iter().map(|_| (group.ues[k], 0.0)));
        }
        Some((pre.w, layers, sinrs))
    }

    fn group_value(&self, group: &MuGroup, cands: &[Candidate], rbs: f64) -> f64 {
        let Some((_, layers, sinrs)) = self.evaluate(group, cands) else {
            return 0.0;
        };
        let mut value = 0.0;
        for &u in &group.ues {
            let c = cands.iter().find(|c| c.ue == u).expect("candidate exists");
            let rate: f64 = layers
                .iter()
                .zip(&sinrs)
                .filter(|((lu, _), _)| *lu == u)
                .map(|(_, &s)| self.efficiency(s, c.olla))
                .sum::<f64>()
                * self.plan.data_re
                * rbs;
            value += rate.min(c.remaining) / c.average;
        }
        value
    }

    fn schedule_retransmissions(
        &mut self,
        c: usize,
        t: u32,
        epoch: u32,
        alloc: &mut [Option<Allocation>],
        tx: &mut [Option<Transmission>],
    ) {
        let members = self.cell_ues[c].clone();
        for u in members {
            for k in 0..self.ues[u].harq.len() {
                let proc = &self.ues[u].harq[k];
                if proc.due != t {
                    continue;
                }
                let free = proc.subbands.iter().all(|&sb| alloc[sb].is_none());
                if !free || tx[u].is_some() {
                    self.ues[u].harq[k].due += 1;
                    continue;
                }
                let (subbands, rank) = (proc.subbands.clone(), proc.rank);
                let mut placed = Vec::new();
                for &sb in &subbands {
                    let Some(cand) = self.candidate(u, sb, epoch, f64::INFINITY) else {
                        continue;
                    };
                    let r = rank.min(cand.rank);
                    let group = MuGroup::single(u, r);
                    let cands = [cand];
                    if let Some((w, layers, _)) = self.evaluate(&group, &cands) {
                        alloc[sb] = Some(Allocation { layers, w, retx: true });
                        placed.push(sb);
                    }
                }
                if placed.is_empty() {
                    self.ues[u].harq[k].due += 1;
                    continue;
                }
                tx[u] = Some(Transmission {
                    capacity_bits: 0.0,
                    mutual_info: 0.0,
                    subbands: placed,
                    rank,
                    retx: Some(k),
                });
            }
        }
    }

    fn schedule_new(&mut self, c: usize, epoch: u32, alloc: &mut [Option<Allocation>], tx: &mut [Option<Transmission>]) {
        let cfg = self.plan.cfg;
        let members: Vec<usize> = self.cell_ues[c]
            .iter()
            .copied()
            .filter(|&u| tx[u].is_none() && self.ues[u].available() > 0.0)
            .collect();
        if members.is_empty() {
            return;
        }
        let mut allocated = vec![0.0; members.len()];
        let mut ranks = vec![0usize; members.len()];
        let mut used: Vec<Vec<usize>> = vec![Vec::new(); members.len()];
        for sb in 0..self.plan.sb_rbs.len() {
            if alloc[sb].is_some() {
                continue;
            }
            let rbs = self.plan.sb_rbs[sb] as f64;
            let mut cands: Vec<Candidate> = members
                .iter()
                .enumerate()
                .filter_map(|(i, &u)| {
                    let remaining = self.ues[u].available() - allocated[i];
                    if remaining > 0.0 {
                        self.candidate(u, sb, epoch, remaining)
                    } else {
                        None
                    }
                })
                .collect();
            if cands.is_empty() {
                continue;
            }
            let su_metric = |c: &Candidate| {
                let rate: f64 = c.su_sinr.iter().map(|&s| self.efficiency(s, c.olla)).sum::<f64>() * self.plan.data_re * rbs;
                rate.min(c.remaining) / c.average
            };
            let mut order: Vec<(f64, usize)> = cands.iter().enumerate().map(|(i, c)| (su_metric(c), i)).collect();
            order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            order.truncate(cfg.pairing_candidates);
            let keep: Vec<usize> = order.iter().filter(|(m, _)| *m > 0.0).map(|&(_, i)| i).collect();
            if keep.is_empty() {
                continue;
            }
            let mut slots: Vec<Option<Candidate>> = cands.drain(..).map(Some).collect();
            let cands: Vec<Candidate> = keep.iter().map(|&i| slots[i].take().expect("unique index")).collect();
            let mut tuples = Vec::new();
            for cand in &cands {
                tuples.push((cand.ue, cand.rank));
                if cand.rank == 2 {
                    tuples.push((cand.ue, 1));
                }
            }
            let Some((group, _)) = greedy_group(&tuples, cfg.max_layers, |g| self.group_value(g, &cands, rbs)) else {
                continue;
            };
            let Some((w, mut layers, sinrs)) = self.evaluate(&group, &cands) else {
                continue;
            };
            for ((u, eff), s) in layers.iter_mut().zip(&sinrs) {
                let cand = cands.iter().find(|c| c.ue == *u).expect("candidate exists");
                *eff = self.efficiency(*s, cand.olla);
            }
            for (&u, &r) in group.ues.iter().zip(&group.ranks) {
                let i = members.iter().position(|&m| m == u).expect("member");
                let rate: f64 = layers.iter().filter(|l| l.0 == u).map(|l| l.1).sum::<f64>() * self.plan.data_re * rbs;
                allocated[i] += rate;
                ranks[i] = ranks[i].max(r);
                used[i].push(sb);
            }
            alloc[sb] = Some(Allocation { layers, w, retx: false });
        }
        for (i, &u) in members.iter().enumerate() {
            if !used[i].is_empty() {
                tx[u] = Some(Transmission {
                    capacity_bits: allocated[i],
                    mutual_info: 0.0,
                    subbands: std::mem::take(&mut used[i]),
                    rank: ranks[i],
                    retx: None,
                });
            }
        }
    }

    /// Actual SINR of every scheduled layer and the mutual information it carries.
    fn receive(&mut self, t: u32, epoch: u32, alloc: &[Vec<Option<Allocation>>], tx: &mut [Option<Transmission>]) {
        let cfg = self.plan.cfg;
        let active: Vec<bool> = alloc.iter().map(|a| a.iter().any(Option::is_some)).collect();
        let scheduled: Vec<usize> = (0..self.ues.len()).filter(|&u| tx[u].is_some()).collect();
        for &u in &scheduled {
            let explicit = self.ues[u].explicit.clone();
            for c in explicit {
                if active[c] {
                    self.refresh(u, c, epoch);
                }
            }
        }
        let p = self.plan.power;
        let n0 = self.plan.noise;
        let n_rx = cfg.n_rx;
        let nonideal = cfg.channel_estimation == Estimation::NonIdeal;
        let measured = t >= cfg.warmup_subframes;
        for &u in &scheduled {
            let ue = &self.ues[u];
            let sbs = tx[u].as_ref().expect("scheduled").subbands.clone();
            let mut mi = 0.0;
            for sb in sbs {
                let a = alloc[ue.cell][sb].as_ref().expect("allocated");
                let h = &ue.links[ue.cell].cached(epoch).expect("serving refreshed")[sb];
                let mut base = Cov2::scaled_identity(n_rx, n0);
                let mut explicit_power = 0.0;
                for &c in &ue.explicit {
                    if let Some(ai) = &alloc[c][sb] {
                        let hc = &ue.links[c].cached(epoch).expect("interferer refreshed")[sb];
                        for g in effective_columns(hc, &ai.w) {
                            base.add_outer(&g, p);
                            explicit_power += p * g.iter().map(|z| z.norm_sqr()).sum::<f64>();
                        }
                    }
                }
                let background: f64 = ue
                    .background
                    .iter()
                    .filter(|&&c| alloc[c][sb].is_some())
                    .map(|&c| p * ue.mean_gain[c])
                    .sum();
                base.add_identity(background);
                let g = effective_columns(h, &a.w);
                let rbs = self.plan.sb_rbs[sb] as f64;
                for (l, (lu, _)) in a.layers.iter().enumerate() {
                    if *lu != u {
                        continue;
                    }
                    let mut cov = base;
                    for (m, gm) in g.iter().enumerate() {
                        if m != l {
                            cov.add_outer(gm, p);
                        }
                    }
                    let mut sinr = p * cov.quad_inv(&g[l]);
                    if nonideal {
                        let mse = 1.0 / (1.0 + cfg.overhead.dmrs_re * rbs * sinr);
                        sinr = sinr * (1.0 - mse) / (1.0 + sinr * mse);
                    }
                    mi += cqi_efficiency_linear(sinr, self.plan.cap) * self.plan.data_re * rbs;
                    if cfg.trace && measured && self.ledgers.len() < MAX_LEDGER_ROWS {
                        let mut full = cov;
                        full.add_outer(&g[l], p);
                        let power = |v: &[Complex64]| p * v.iter().map(|z| z.norm_sqr()).sum::<f64>();
                        self.ledgers.push(PowerLedger {
                            subframe: t,
                            ue: u,
                            subband: sb,
                            serving: power(&g[l]),
                            intra_cell: g.iter().enumerate().filter(|&(m, _)| m != l).map(|(_, v)| power(v)).sum(),
                            explicit_interference: explicit_power,
                            background_interference: background * n_rx as f64,
                            noise: n0 * n_rx as f64,
                            total: full.trace(),
                        });
                    }
                }
            }
            let t_u = tx[u].as_mut().expect("scheduled");
            t_u.mutual_info = mi;
        }
    }

    /// HARQ outcomes and delivery; returns the bits delivered per UE.
    fn complete(&mut self, t: u32, tx: &mut [Option<Transmission>]) -> Vec<f64> {
        let cfg = self.plan.cfg;
        let measured = t >= cfg.warmup_subframes;
        let ideal = self.plan.scheme == CsiScheme::Ideal;
        let mut delivered = vec![0.0; self.ues.len()];
        for (u, slot) in tx.iter_mut().enumerate() {
            let Some(tr) = slot.take() else { continue };
            let ue = &mut self.ues[u];
            let bits = match tr.retx {
                Some(k) => {
                    let outcome = ue.harq[k].receive(tr.mutual_info, t, &cfg.harq);
                    let bits = ue.harq[k].bits;
                    match outcome {
                        HarqOutcome::Nack(_) => continue,
                        HarqOutcome::Ack => {
                            ue.harq.remove(k);
                            ue.in_flight -= bits;
                            bits
                        }
                        HarqOutcome::Failed => {
                            ue.harq.remove(k);
                            ue.in_flight -= bits;
                            continue;
                        }
                    }
                }
                None => {
                    let capacity = if ideal { tr.mutual_info } else { tr.capacity_bits };
                    let bits = capacity.min(ue.available());
                    if !(bits > 0.0) {
                        continue;
                    }
                    let mut proc = HarqProcess::new(u, bits, tr.subbands, tr.rank, t);
                    let outcome = proc.receive(tr.mutual_info, t, &cfg.harq);
                    if measured {
                        self.tally.first_tx += 1;
                    }
                    let ack = outcome == HarqOutcome::Ack;
                    if cfg.olla && !ideal {
                        ue.olla_db += if ack { OLLA_UP_DB } else { -OLLA_DOWN_DB };
                    }
                    match outcome {
                        HarqOutcome::Ack => bits,
                        HarqOutcome::Nack(_) => {
                            if measured {
                                self.tally.first_nack += 1;
                            }
                            ue.in_flight += bits;
                            ue.harq.push(proc);
                            continue;
                        }
                        HarqOutcome::Failed => {
                            if measured {
                                self.tally.first_nack += 1;
                            }
                            continue;
                        }
                    }
                }
            };
            delivered[u] = bits;
            if measured {
                ue.delivered += bits;
            }
            for rec in ue.buffer.deliver(u, bits, t) {
                let arrival = t + 1 - rec.delay_ms as u32;
                if arrival >= cfg.warmup_subframes {
                    self.packets.push(rec);
                }
            }
        }
        delivered
    }

    fn finish(mut self) -> DropOutput {
        let cfg = self.plan.cfg;
        let end = cfg.subframes;
        for (u, ue) in self.ues.iter().enumerate() {
            for rec in ue.buffer.unfinished(u, end, MIN_UNFINISHED_AGE_MS) {
                if end - rec.delay_ms as u32 >= cfg.warmup_subframes {
                    self.packets.push(rec);
                }
            }
        }
        let span = (cfg.subframes - cfg.warmup_subframes) as f64 * cfg.bandwidth_rb as f64 * super::config::RE_PER_RB_SUBFRAME;
        let ue_se: Vec<f64> = self.ues.iter().map(|ue| ue.delivered / span).collect();
        let active_cells = self.cell_ues.iter().filter(|m| !m.is_empty()).count();
        let metrics = collect(&ue_se, active_cells, &self.packets, &self.tally);
        DropOutput {
            metrics,
            ue_se,
            ue_positions: self.ues.iter().map(|u| u.pos).collect(),
            serving_cell: self.ues.iter().map(|u| u.cell).collect(),
            packets: self.packets,
            feedback_trace: self.feedback_trace,
            schedule_trace: self.schedule_trace,
            ledgers: self.ledgers,
        }
    }
}
