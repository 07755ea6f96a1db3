//! Proportional-fair scheduling in time and frequency and greedy MU pairing.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchedulerError {
    #[error("no UEs to schedule")]
    Empty,
    #[error("rate table has {got} rows for {expected} UEs")]
    Shape { expected: usize, got: usize },
    #[error("PF window must exceed one subframe, got {0}")]
    Window(f64),
    #[error("group exceeds {max_layers} layers or {max_per_ue} layers per UE")]
    Layers { max_layers: usize, max_per_ue: usize },
}

/// Exponentially smoothed per-UE throughput.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulingState {
    pub average: Vec<f64>,
    /// Smoothing factor `1/window`.
    pub alpha: f64,
    pub floor: f64,
}

impl SchedulingState {
    pub fn new(n_ue: usize, window: f64) -> Result<Self, SchedulerError> {
        if !(window > 1.0) {
            return Err(SchedulerError::Window(window));
        }
        Ok(SchedulingState {
            average: vec![1e-6; n_ue],
            alpha: 1.0 / window,
            floor: 1e-6,
        })
    }

    pub fn len(&self) -> usize {
        self.average.len()
    }

    pub fn is_empty(&self) -> bool {
        self.average.is_empty()
    }

    /// Moves every average toward this subframe's delivered rate (zero for UEs
    /// that were not served).
    pub fn update(&mut self, delivered: &[f64]) {
        for (avg, &r) in self.average.iter_mut().zip(delivered) {
            *avg = ((1.0 - self.alpha) * *avg + self.alpha * r).max(self.floor);
        }
    }

    pub fn metric(&self, ue: usize, rate: f64) -> f64 {
        rate / self.average[ue]
    }
}

/// Single-user PF allocation: for each subband the UE maximizing
/// `rate/average` (lowest id on ties), or `None` when every rate is zero.
///
/// `rates[ue][subband]` are instantaneous achievable rates. The averages are
/// updated with the rates of the allocated subbands.
pub fn pf_schedule(state: &mut SchedulingState, rates: &[Vec<f64>]) -> Result<Vec<Option<usize>>, SchedulerError> {
    if rates.is_empty() || state.is_empty() {
        return Err(SchedulerError::Empty);
    }
    if rates.len() != state.len() {
        return Err(SchedulerError::Shape {
            expected: state.len(),
            got: rates.len(),
        });
    }
    let n_sb = rates.iter().map(Vec::len).max().unwrap_or(0);
    let mut delivered = vec![0.0; state.len()];
    let allocation: Vec<Option<usize>> = (0..n_sb)
        .map(|sb| {
            let mut best: Option<(usize, f64)> = None;
            for (ue, r) in rates.iter().enumerate() {
                let rate = r.get(sb).copied().unwrap_or(0.0);
                if rate <= 0.0 {
                    continue;
                }
                let m = state.metric(ue, rate);
                if best.is_none_or(|(_, b)| m > b) {
                    best = Some((ue, m));
                }
            }
            if let Some((ue, _)) = best {
                delivered[ue] += rates[ue][sb];
            }
            best.map(|(ue, _)| ue)
        })
        .collect();
    state.update(&delivered);
    Ok(allocation)
}

/// Co-scheduled UEs and their layer counts on one subband.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MuGroup {
    pub ues: Vec<usize>,
    pub ranks: Vec<usize>,
}

pub const MAX_LAYERS: usize = 4;
pub const MAX_LAYERS_PER_UE: usize = 2;

impl MuGroup {
    pub fn single(ue: usize, rank: usize) -> Self {
        MuGroup {
            ues: vec![ue],
            ranks: vec![rank],
        }
    }

    pub fn layers(&self) -> usize {
        self.ranks.iter().sum()
    }

    pub fn contains(&self, ue: usize) -> bool {
        self.ues.contains(&ue)
    }

    pub fn validate(&self, max_layers: usize, max_per_ue: usize) -> Result<(), SchedulerError> {
        if self.layers() > max_layers || self.ranks.iter().any(|&r| r == 0 || r > max_per_ue) {
            return Err(SchedulerError::Layers { max_layers, max_per_ue });
        }
        Ok(())
    }
}

/// Greedy group construction.
///
/// Starts from the best single `(ue, rank)` candidate and keeps adding the
/// candidate that raises `metric` the most, as long as it improves and the
/// layer caps hold. `candidates` lists `(ue, rank)` pairs; `metric` scores a
/// whole group (typically `Σ rate/average` from estimated MU SINRs).
pub fn greedy_group<F>(candidates: &[(usize, usize)], max_layers: usize, mut metric: F) -> Option<(MuGroup, f64)>
where
    F: FnMut(&MuGroup) -> f64,
{
    let mut best: Option<(MuGroup, f64)> = None;
    for &(ue, rank) in candidates {
        if rank > max_layers {
            continue;
        }
        let g = MuGroup::single(ue, rank);
        let m = metric(&g);
        if m > 0.0 && best.as_ref().is_none_or(|(_, b)| m > *b) {
            best = Some((g, m));
        }
    }
    let (mut group, mut value) = best?;
    loop {
        let mut step: Option<(MuGroup, f64)> = None;
        for &(ue, rank) in candidates {
            if group.contains(ue) || group.layers() + rank > max_layers {
                continue;
            }
            let mut g = group.clone();
            g.ues.push(ue);
            g.ranks.push(rank);
            let m = metric(&g);
            if m > value && step.as_ref().is_none_or(|(_, b)| m > *b) {
                step = Some((g, m));
            }
        }
        match step {
            Some((g, m)) => {
                group = g;
                value = m;
            }
            None => return Some((group, value)),
        }
    }
}
