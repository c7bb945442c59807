//! Epoch sequence `k_{m+1} = min{k > k_m : every worker's penultimate update is at or after k_m}`.
//!
//! Arrivals are indexed from 0 and `k_0 = 0`.

/// Online computation of epoch boundaries from the arrival log.
#[derive(Debug, Clone)]
pub struct EpochTracker {
    last: Vec<Option<usize>>,
    penultimate: Vec<Option<usize>>,
    boundaries: Vec<usize>,
    /// workers whose penultimate update is at or after the current boundary
    ready: usize,
}

impl EpochTracker {
    pub fn new(workers: usize) -> Self {
        Self {
            last: vec![None; workers],
            penultimate: vec![None; workers],
            boundaries: vec![0],
            ready: 0,
        }
    }

    pub fn epoch(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    fn current(&self) -> usize {
        *self.boundaries.last().unwrap()
    }

    /// Records arrival `k` from `worker`; returns true when `k` closes an epoch.
    pub fn record(&mut self, k: usize, worker: usize) -> bool {
        let km = self.current();
        let was_ready = self.penultimate[worker].is_some_and(|p| p >= km);
        self.penultimate[worker] = self.last[worker];
        self.last[worker] = Some(k);
        let is_ready = self.penultimate[worker].is_some_and(|p| p >= km);
        if is_ready && !was_ready {
            self.ready += 1;
        }
        if k > km && self.ready == self.last.len() {
            self.boundaries.push(k);
            self.ready = self
                .penultimate
                .iter()
                .filter(|p| p.is_some_and(|p| p >= k))
                .count();
            return true;
        }
        false
    }
}

/// All `k_m` reachable within the given arrival log.
pub fn epoch_boundaries(log: &[usize], workers: usize) -> Vec<usize> {
    let mut t = EpochTracker::new(workers);
    for (k, &i) in log.iter().enumerate() {
        t.record(k, i);
    }
    t.boundaries().to_vec()
}
