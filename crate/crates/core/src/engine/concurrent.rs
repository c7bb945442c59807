//! One thread per worker, coordinator on the calling thread, ordered channels in between.
//!
//! A worker keeps its freshly computed point pending until the coordinator answers: the next
//! model means the delta was applied and the point is committed, a `Stop { commit: false }`
//! means the delta was never applied and the point is discarded.

use std::sync::mpsc::{channel, Receiver, Sender};
use std::thread;

use super::{
    weighted_sum, worker_update, Coordinator, EngineConfig, EpochView, IterRecord, Logger, RunTrace, Start,
    StopReason, StopRule, Variant,
};
use crate::error::Result;
use crate::problem::{CompositeProblem, Workspace};
use crate::scalar::Scalar;
use crate::sparsifier::CoordinateMask;

enum Down<T> {
    Prime(Vec<T>),
    Work { model: Vec<T>, mask: CoordinateMask },
    Stop { commit: bool },
}

struct Up<T> {
    worker: usize,
    mask: CoordinateMask,
    delta: Vec<T>,
}

struct WorkerResult<T> {
    x: Vec<T>,
    committed_up: u64,
}

fn worker<T: Scalar>(
    problem: &CompositeProblem<T>,
    gamma: T,
    slowdown: Option<T>,
    i: usize,
    mut x: Vec<T>,
    rx: Receiver<Down<T>>,
    tx: Sender<Up<T>>,
) -> WorkerResult<T> {
    let mut ws = Workspace::for_shard(problem.shard(i));
    let mut pending: Option<(CoordinateMask, Vec<T>)> = None;
    let mut committed_up = 0u64;
    let commit = |x: &mut Vec<T>, p: Option<(CoordinateMask, Vec<T>)>, up: &mut u64| {
        if let Some((mask, vals)) = p {
            for (&j, &v) in mask.indices().iter().zip(&vals) {
                x[j] = v;
            }
            *up += mask.len() as u64;
        }
    };
    while let Ok(msg) = rx.recv() {
        match msg {
            Down::Prime(init) => {
                let next = super::prime_point(problem, gamma, i, &init);
                let delta = next.iter().zip(&x).map(|(&a, &b)| a - b).collect();
                x = next;
                let mask = CoordinateMask::full(x.len());
                if tx.send(Up { worker: i, mask, delta }).is_err() {
                    break;
                }
            }
            Down::Work { model, mask } => {
                commit(&mut x, pending.take(), &mut committed_up);
                let mut vals = vec![T::zero(); mask.len()];
                worker_update(problem, gamma, i, &model, mask.indices(), slowdown, &x, &mut vals, &mut ws);
                let delta = mask.indices().iter().zip(&vals).map(|(&j, &v)| v - x[j]).collect();
                if tx.send(Up { worker: i, mask: mask.clone(), delta }).is_err() {
                    break;
                }
                pending = Some((mask, vals));
            }
            Down::Stop { commit: keep } => {
                if keep {
                    commit(&mut x, pending.take(), &mut committed_up);
                }
                break;
            }
        }
    }
    WorkerResult { x, committed_up }
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
    let slowdown = coord.slowdown();

    let (up_tx, up_rx) = channel::<Up<T>>();
    let (prime, initial): (Option<Vec<T>>, Vec<Vec<T>>) = match start {
        Start::Prime(init) => (Some(init), vec![vec![T::zero(); d]; m]),
        Start::Continue(w) => {
            coord.set_xbar(w.xbar);
            (None, w.workers)
        }
    };

    let outcome = thread::scope(|scope| -> Result<(RunTrace<T>, Vec<u64>)> {
        let mut downs = Vec::with_capacity(m);
        let mut handles = Vec::with_capacity(m);
        for (i, x) in initial.into_iter().enumerate() {
            let (tx, rx) = channel();
            downs.push(tx);
            let up = up_tx.clone();
            handles.push(scope.spawn(move || worker(problem, gamma, slowdown, i, x, rx, up)));
        }
        drop(up_tx);

        let mut setup_up = 0u64;
        if let Some(init) = prime {
            for tx in &downs {
                tx.send(Down::Prime(init.clone())).expect("worker alive");
            }
            let mut deltas: Vec<Option<Vec<T>>> = vec![None; m];
            for _ in 0..m {
                let msg = up_rx.recv().expect("priming reply");
                deltas[msg.worker] = Some(msg.delta);
            }
            let points: Vec<Vec<T>> = deltas.into_iter().map(|p| p.expect("one reply per worker")).collect();
            coord.set_xbar(weighted_sum(problem.alphas(), &points));
            setup_up = (m * d) as u64;
        }

        let center = coord.center_cost();
        let mut setup_down = 0u64;
        let mut masks = Vec::with_capacity(m);
        for i in 0..m {
            let mask = coord.draw(i);
            setup_down += (coord.down_cost(&mask) + center) as u64;
            masks.push(mask);
        }
        let mut log = Logger::new(problem, &cfg.log, &coord.x, setup_up, setup_down);

        let finish = |downs: &[Sender<Down<T>>], last: Option<usize>| {
            for (i, tx) in downs.iter().enumerate() {
                let _ = tx.send(Down::Stop { commit: Some(i) == last });
            }
        };
        let collect = |handles: Vec<thread::ScopedJoinHandle<'_, WorkerResult<T>>>| {
            let res: Vec<WorkerResult<T>> = handles.into_iter().map(|h| h.join().expect("worker panicked")).collect();
            let up = res.iter().map(|r| r.committed_up).collect();
            (res.into_iter().map(|r| r.x).collect::<Vec<_>>(), up)
        };

        let view = EpochView { epoch: 0, iterations: 0, x: &coord.x };
        if let Some(reason) = stop.at_boundary(view) {
            finish(&downs, None);
            let (workers, up) = collect(handles);
            return Ok((log.finish(reason, coord.x.clone(), coord.xbar.clone(), workers), up));
        }
        for (tx, mask) in downs.iter().zip(masks) {
            tx.send(Down::Work { model: coord.x.clone(), mask }).expect("worker alive");
        }

        let mut k = 0usize;
        let (reason, last) = loop {
            if stop.max_iters.is_some_and(|n| k >= n) {
                break (StopReason::IterBudget, None);
            }
            let msg = up_rx.recv().expect("workers alive while coordinator runs");
            let i = msg.worker;
            let changed = match coord.apply(i, msg.mask.indices(), &msg.delta, k) {
                Ok(c) => c,
                Err(e) => {
                    finish(&downs, None);
                    collect(handles);
                    return Err(e);
                }
            };
            let next = coord.draw(i);
            let rec = IterRecord {
                k,
                worker: i,
                coords_up: msg.mask.len(),
                coords_down: coord.down_cost(&next),
                support_size: coord.nnz,
                epoch: 0,
            };
            let boundary = log.arrival(rec, &coord.x, changed);
            k += 1;
            if boundary {
                if let Err(e) = coord.check_norm(k - 1) {
                    finish(&downs, None);
                    collect(handles);
                    return Err(e);
                }
                let view = EpochView { epoch: log.tracker.epoch(), iterations: k, x: &coord.x };
                if let Some(r) = stop.at_boundary(view) {
                    break (r, Some(i));
                }
            }
            downs[i].send(Down::Work { model: coord.x.clone(), mask: next }).expect("worker alive");
        };
        finish(&downs, last);
        let (workers, up) = collect(handles);
        Ok((log.finish(reason, coord.x.clone(), coord.xbar.clone(), workers), up))
    });

    let (mut trace, up) = outcome?;
    trace.worker_up = up;
    Ok(trace)
}
