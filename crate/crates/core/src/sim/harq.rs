//! Incremental-redundancy HARQ with mutual-information accumulation.
//!
//! A transport block of `bits` decodes once the mutual information collected
//! over its transmissions reaches `bits`. ACK/NACK signalling is error-free.

use super::config::HarqConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct HarqProcess {
    pub ue: usize,
    pub bits: f64,
    pub accumulated: f64,
    pub transmissions: u32,
    /// Subframe of the next (re)transmission.
    pub due: u32,
    /// Subbands and layer count of the original allocation.
    pub subbands: Vec<usize>,
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HarqOutcome {
    Ack,
    /// Retransmission scheduled for the given subframe.
    Nack(u32),
    /// Retransmissions exhausted; the bits stay queued.
    Failed,
}

impl HarqProcess {
    pub fn new(ue: usize, bits: f64, subbands: Vec<usize>, rank: usize, now: u32) -> Self {
        HarqProcess {
            ue,
            bits,
            accumulated: 0.0,
            transmissions: 0,
            due: now,
            subbands,
            rank,
        }
    }

    /// Records one transmission carrying `mutual_info` bits at subframe `now`.
    pub fn receive(&mut self, mutual_info: f64, now: u32, cfg: &HarqConfig) -> HarqOutcome {
        self.accumulated += mutual_info.max(0.0);
        self.transmissions += 1;
        if self.accumulated >= self.bits * (1.0 - 1e-12) {
            HarqOutcome::Ack
        } else if self.transmissions > cfg.max_retransmissions {
            HarqOutcome::Failed
        } else {
            self.due = now + cfg.rtt_ms;
            HarqOutcome::Nack(self.due)
        }
    }
}
