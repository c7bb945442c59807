//! Per-run logs.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterRecord {
    pub k: usize,
    pub worker: usize,
    pub coords_up: usize,
    pub coords_down: usize,
    pub support_size: usize,
    pub epoch: usize,
}

/// Objective value at a logged point; `iter` counts arrivals processed so far.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjPoint<T> {
    pub iter: usize,
    pub exchanges: u64,
    pub value: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// the user-supplied check fired at an epoch boundary
    Criterion,
    EpochBudget,
    IterBudget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace<T> {
    pub records: Vec<IterRecord>,
    /// `k_m`, starting with `k_0 = 0`
    pub epochs: Vec<usize>,
    /// `x` at `k_0` (before any arrival) and right after each later boundary
    pub epoch_iterates: Vec<Vec<T>>,
    /// `(number of processed arrivals, x)`
    pub snapshots: Vec<(usize, Vec<T>)>,
    pub objective: Vec<ObjPoint<T>>,
    /// arrival counts (1-based) after which `supp(x)` changed; 0 means the initial support
    pub support_changes: Vec<usize>,
    /// `x` after setup, before any arrival
    pub initial_x: Vec<T>,
    pub final_x: Vec<T>,
    pub final_xbar: Vec<T>,
    pub worker_points: Vec<Vec<T>>,
    /// coordinates each worker reports as sent and committed after setup
    pub worker_up: Vec<u64>,
    pub setup_up: u64,
    pub setup_down: u64,
    pub stop: StopReason,
}

impl<T: Scalar> RunTrace<T> {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    /// Completed epochs.
    pub fn num_epochs(&self) -> usize {
        self.epochs.len() - 1
    }

    pub fn total_up(&self) -> u64 {
        self.setup_up + self.records.iter().map(|r| r.coords_up as u64).sum::<u64>()
    }

    pub fn total_down(&self) -> u64 {
        self.setup_down + self.records.iter().map(|r| r.coords_down as u64).sum::<u64>()
    }

    pub fn total_exchanges(&self) -> u64 {
        self.total_up() + self.total_down()
    }

    /// Arrival order of this run.
    pub fn arrival_log(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.worker).collect()
    }
}
