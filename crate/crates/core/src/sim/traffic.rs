//! FTP model 1 style traffic and per-UE packet buffers.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::config::TrafficModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketArrival {
    pub subframe: u32,
    pub ue: usize,
    pub bits: f64,
}

/// Poisson packet arrivals of one cell over `subframes` ms, each addressed to
/// a uniformly chosen UE of the cell.
pub fn cell_arrivals<R: Rng + ?Sized>(
    traffic: &TrafficModel,
    cell_ues: &[usize],
    subframes: u32,
    rng: &mut R,
) -> Vec<PacketArrival> {
    let TrafficModel::Ftp {
        packet_bytes,
        arrival_rate,
    } = *traffic
    else {
        return Vec::new();
    };
    if cell_ues.is_empty() {
        return Vec::new();
    }
    let gap = Exp::new(arrival_rate / 1000.0).expect("positive rate");
    let mut t = 0.0;
    let mut out = Vec::new();
    loop {
        t += gap.sample(rng);
        if t >= subframes as f64 {
            return out;
        }
        let ue = cell_ues[rng.random_range(0..cell_ues.len())];
        out.push(PacketArrival {
            subframe: t.floor() as u32,
            ue,
            bits: packet_bytes as f64 * 8.0,
        });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendingPacket {
    pub arrival: u32,
    pub size: f64,
    pub remaining: f64,
}

/// Completed packet: size and the time from arrival to last bit delivered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketRecord {
    pub ue: usize,
    pub bits: f64,
    pub delay_ms: f64,
    pub completed: bool,
}

impl PacketRecord {
    /// User packet throughput in Mbit/s.
    pub fn throughput_mbps(&self) -> f64 {
        self.bits / self.delay_ms / 1e3
    }
}

/// Data waiting at the eNB for one UE.
#[derive(Debug, Clone, PartialEq)]
pub enum Buffer {
    Full,
    Packets(VecDeque<PendingPacket>),
}

impl Buffer {
    pub fn new(traffic: &TrafficModel) -> Self {
        match traffic {
            TrafficModel::FullBuffer => Buffer::Full,
            TrafficModel::Ftp { .. } => Buffer::Packets(VecDeque::new()),
        }
    }

    pub fn push(&mut self, subframe: u32, bits: f64) {
        if let Buffer::Packets(q) = self {
            q.push_back(PendingPacket {
                arrival: subframe,
                size: bits,
                remaining: bits,
            });
        }
    }

    pub fn backlog(&self) -> f64 {
        match self {
            Buffer::Full => f64::INFINITY,
            Buffer::Packets(q) => q.iter().map(|p| p.remaining).sum(),
        }
    }

    pub fn has_data(&self) -> bool {
        self.backlog() > 0.0
    }

    /// Delivers `bits` at the end of subframe `now`, returning completed packets.
    pub fn deliver(&mut self, ue: usize, mut bits: f64, now: u32) -> Vec<PacketRecord> {
        let mut done = Vec::new();
        if let Buffer::Packets(q) = self {
            while bits > 0.0 {
                let Some(front) = q.front_mut() else { break };
                let take = bits.min(front.remaining);
                front.remaining -= take;
                bits -= take;
                if front.remaining <= 1e-9 {
                    let p = q.pop_front().expect("front exists");
                    done.push(PacketRecord {
                        ue,
                        bits: p.size,
                        delay_ms: (now + 1 - p.arrival) as f64,
                        completed: true,
                    });
                }
            }
        }
        done
    }

    /// Packets still queued at the end of the run that arrived at least
    /// `min_age` subframes before `end`, credited with the bits delivered so far.
    pub fn unfinished(&self, ue: usize, end: u32, min_age: u32) -> Vec<PacketRecord> {
        match self {
            Buffer::Full => Vec::new(),
            Buffer::Packets(q) => q
                .iter()
                .filter(|p| end.saturating_sub(p.arrival) >= min_age)
                .map(|p| PacketRecord {
                    ue,
                    bits: p.size - p.remaining,
                    delay_ms: (end - p.arrival) as f64,
                    completed: false,
                })
                .collect(),
        }
    }
}
