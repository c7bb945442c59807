//! Deterministic single-threaded execution driven by a delay schedule.

use super::{
    prime_point, weighted_sum, worker_update, Coordinator, EngineConfig, EpochView, IterRecord, Logger,
    RunTrace, Start, StopReason, StopRule, Variant,
};
use crate::error::Result;
use crate::problem::{CompositeProblem, Workspace};
use crate::scalar::Scalar;
use crate::sparsifier::CoordinateMask;

struct Slot<T> {
    x: Vec<T>,
    model: Vec<T>,
    mask: CoordinateMask,
}

pub(super) fn run<T: Scalar>(
    problem: &CompositeProblem<T>,
    variant: &Variant<T>,
    cfg: &EngineConfig<T>,
    start: Start<T>,
    mut stop: StopRule<'_, T>,
) -> Result<RunTrace<T>> {
    let (d, m) = (problem.dim(), problem.num_shards());
    let gamma = cfg.gamma;
    let mut coord = Coordinator::new(problem, variant, cfg);

    let (points, setup_up) = match start {
        Start::Prime(init) => {
            let pts: Vec<Vec<T>> = (0..m).map(|i| prime_point(problem, gamma, i, &init)).collect();
            coord.set_xbar(weighted_sum(problem.alphas(), &pts));
            (pts, (m * d) as u64)
        }
        Start::Continue(w) => {
            coord.set_xbar(w.xbar);
            (w.workers, 0)
        }
    };
    let center = coord.center_cost();
    let mut setup_down = 0u64;
    let mut slots: Vec<Slot<T>> = Vec::with_capacity(m);
    for (i, x) in points.into_iter().enumerate() {
        let mask = coord.draw(i);
        setup_down += (coord.down_cost(&mask) + center) as u64;
        slots.push(Slot { x, model: coord.x.clone(), mask });
    }

    let mut log = Logger::new(problem, &cfg.log, &coord.x, setup_up, setup_down);
    let view = EpochView { epoch: 0, iterations: 0, x: &coord.x };
    if let Some(reason) = stop.at_boundary(view) {
        let workers = slots.into_iter().map(|s| s.x).collect();
        return Ok(log.finish(reason, coord.x.clone(), coord.xbar.clone(), workers));
    }

    let mut ws: Vec<Workspace<T>> = problem.shards().iter().map(Workspace::for_shard).collect();
    let mut buf = vec![T::zero(); d];
    let mut arrivals = cfg.schedule.arrivals(m);
    let slowdown = coord.slowdown();
    let mut k = 0usize;
    let reason = loop {
        if stop.max_iters.is_some_and(|n| k >= n) {
            break StopReason::IterBudget;
        }
        let i = arrivals.next().expect("infinite schedule");
        let slot = &mut slots[i];
        let s = slot.mask.len();
        let out = &mut buf[..s];
        worker_update(problem, gamma, i, &slot.model, slot.mask.indices(), slowdown, &slot.x, out, &mut ws[i]);
        for (o, &j) in out.iter_mut().zip(slot.mask.indices()) {
            let delta = *o - slot.x[j];
            slot.x[j] = *o;
            *o = delta;
        }
        let changed = coord.apply(i, slot.mask.indices(), out, k)?;
        let next = coord.draw(i);
        let down = coord.down_cost(&next);
        slot.model.copy_from_slice(&coord.x);
        slot.mask = next;

        let rec = IterRecord { k, worker: i, coords_up: s, coords_down: down, support_size: coord.nnz, epoch: 0 };
        let boundary = log.arrival(rec, &coord.x, changed);
        k += 1;

        #[cfg(debug_assertions)]
        if k % 256 == 0 {
            let pts: Vec<Vec<T>> = slots.iter().map(|s| s.x.clone()).collect();
            super::debug_check_average(problem.alphas(), &pts, &coord.xbar);
        }

        if boundary {
            coord.check_norm(k - 1)?;
            let view = EpochView { epoch: log.tracker.epoch(), iterations: k, x: &coord.x };
            if let Some(r) = stop.at_boundary(view) {
                break r;
            }
        }
    };
    let workers = slots.into_iter().map(|s| s.x).collect();
    Ok(log.finish(reason, coord.x.clone(), coord.xbar.clone(), workers))
}
