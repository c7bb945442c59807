//! Which worker's message arrives at each global time.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{invalid, Result};
use crate::rng::{stream, StreamRng};

#[derive(Debug, Clone, PartialEq)]
pub enum DelaySchedule {
    RoundRobin,
    RandomUniform { seed: u64 },
    /// Cycled forever; must mention every worker.
    FixedTrace(Vec<usize>),
    /// Workers with exponential service times of rate `speeds[i]`.
    Heterogeneous { speeds: Vec<f64>, seed: u64 },
}

impl DelaySchedule {
    pub fn validate(&self, workers: usize) -> Result<()> {
        if workers == 0 {
            return Err(invalid("schedule needs at least one worker"));
        }
        match self {
            DelaySchedule::RoundRobin | DelaySchedule::RandomUniform { .. } => Ok(()),
            DelaySchedule::FixedTrace(t) => {
                if let Some(&bad) = t.iter().find(|&&i| i >= workers) {
                    return Err(invalid(format!("trace mentions worker {bad} of {workers}")));
                }
                let mut seen = vec![false; workers];
                t.iter().for_each(|&i| seen[i] = true);
                if seen.iter().any(|s| !s) {
                    return Err(invalid("trace must contain every worker"));
                }
                Ok(())
            }
            DelaySchedule::Heterogeneous { speeds, .. } => {
                if speeds.len() != workers {
                    return Err(invalid(format!("{} speeds for {workers} workers", speeds.len())));
                }
                if speeds.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                    return Err(invalid("worker speeds must be positive"));
                }
                Ok(())
            }
        }
    }

    /// Arrival sequence for `workers` workers. Call [`DelaySchedule::validate`] first.
    pub fn arrivals(&self, workers: usize) -> Arrivals {
        let state = match self {
            DelaySchedule::RoundRobin => State::RoundRobin { next: 0 },
            DelaySchedule::RandomUniform { seed } => State::Uniform(stream(*seed, 1 << 32)),
            DelaySchedule::FixedTrace(t) => State::Trace { trace: t.clone(), pos: 0 },
            DelaySchedule::Heterogeneous { speeds, seed } => {
                let mut rng = stream(*seed, 1 << 33);
                let exps: Vec<Exp<f64>> = speeds.iter().map(|&s| Exp::new(s).expect("validated")).collect();
                let heap = exps
                    .iter()
                    .enumerate()
                    .map(|(i, e)| Reverse(Event { time: e.sample(&mut rng), worker: i }))
                    .collect();
                State::Events { heap, exps, rng }
            }
        };
        Arrivals { workers, state }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    worker: usize,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.worker.cmp(&other.worker))
    }
}

#[derive(Debug, Clone)]
enum State {
    RoundRobin { next: usize },
    Uniform(StreamRng),
    Trace { trace: Vec<usize>, pos: usize },
    Events { heap: BinaryHeap<Reverse<Event>>, exps: Vec<Exp<f64>>, rng: StreamRng },
}

/// Infinite iterator of worker ids.
#[derive(Debug, Clone)]
pub struct Arrivals {
    workers: usize,
    state: State,
}

impl Iterator for Arrivals {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        Some(match &mut self.state {
            State::RoundRobin { next } => {
                let i = *next;
                *next = (i + 1) % self.workers;
                i
            }
            State::Uniform(rng) => rng.random_range(0..self.workers),
            State::Trace { trace, pos } => {
                let i = trace[*pos];
                *pos = (*pos + 1) % trace.len();
                i
            }
            State::Events { heap, exps, rng } => {
                let Reverse(ev) = heap.pop().expect("one event per worker");
                let next = ev.time + exps[ev.worker].sample(rng);
                heap.push(Reverse(Event { time: next, worker: ev.worker }));
                ev.worker
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_robin_and_trace() {
        let rr: Vec<usize> = DelaySchedule::RoundRobin.arrivals(3).take(7).collect();
        assert_eq!(rr, vec![0, 1, 2, 0, 1, 2, 0]);
        let t: Vec<usize> = DelaySchedule::FixedTrace(vec![1, 0, 0]).arrivals(2).take(5).collect();
        assert_eq!(t, vec![1, 0, 0, 1, 0]);
        assert!(DelaySchedule::FixedTrace(vec![0, 0]).validate(2).is_err());
        assert!(DelaySchedule::FixedTrace(vec![0, 2]).validate(2).is_err());
    }

    #[test]
    fn heterogeneous_favors_fast_workers() {
        let s = DelaySchedule::Heterogeneous { speeds: vec![1.0, 4.0], seed: 5 };
        s.validate(2).unwrap();
        let draws: Vec<usize> = s.arrivals(2).take(10_000).collect();
        let fast = draws.iter().filter(|&&i| i == 1).count() as f64 / 10_000.0;
        assert!((fast - 0.8).abs() < 0.03, "{fast}");
        let again: Vec<usize> = s.arrivals(2).take(10_000).collect();
        assert_eq!(draws, again);
        assert!(DelaySchedule::Heterogeneous { speeds: vec![1.0, 0.0], seed: 0 }.validate(2).is_err());
    }

    #[test]
    fn uniform_hits_everyone() {
        let draws: Vec<usize> = DelaySchedule::RandomUniform { seed: 2 }.arrivals(5).take(500).collect();
        for i in 0..5 {
            assert!(draws.contains(&i));
        }
    }
}
