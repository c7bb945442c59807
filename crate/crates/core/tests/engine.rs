use proptest::prelude::*;

use spy_core::data::{build_problem, generate_conditioned, generate_lasso, shard_even, LossSpec};
use spy_core::engine::{
    self, DelaySchedule, DownCount, EngineConfig, ExecMode, LogOptions, ObjectiveLog, RunTrace, Start, StopReason,
    StopRule, Variant, WarmState,
};
use spy_core::metrics::{certify, reference_solution};
use spy_core::problem::{support_size, CompositeProblem, Regularizer};
use spy_core::sparsifier::{uniform_distribution, SelectorDistribution};
use spy_core::{Error, Problem};

fn conditioned() -> Problem {
    let (data, plan, _) = generate_conditioned::<f64>(30, 40, 3, 0.2, 1.0, 0.7, 0.05, 4).unwrap();
    build_problem(&data, &plan, LossSpec::LeastSquares, Regularizer::l1(0.01).unwrap()).unwrap()
}

fn lasso() -> Problem {
    let (data, _) = generate_lasso::<f64>(60, 40, 0.9, 0.1, 8).unwrap();
    let plan = shard_even(40, 4, 1).unwrap();
    build_problem(&data, &plan, LossSpec::LeastSquares, Regularizer::l1(0.05).unwrap()).unwrap()
}

fn cfg(p: &Problem, seed: u64) -> EngineConfig<f64> {
    let mut c = EngineConfig::new(p.max_stepsize());
    c.seed = seed;
    c.log = LogOptions { objective: ObjectiveLog::Epochs, epoch_iterates: true, snapshot_stride: Some(5) };
    c
}

fn zeros(p: &Problem) -> Vec<f64> {
    vec![0.0; p.dim()]
}

#[test]
fn same_seed_same_trace() {
    let p = conditioned();
    let dist = uniform_distribution(p.dim(), 0.4).unwrap();
    let mut c = cfg(&p, 11);
    c.schedule = DelaySchedule::Heterogeneous { speeds: vec![1.0, 2.0, 0.5], seed: 3 };
    let a = engine::run_spy(&p, &dist, &c, &zeros(&p), StopRule::epochs(40)).unwrap();
    let b = engine::run_spy(&p, &dist, &c, &zeros(&p), StopRule::epochs(40)).unwrap();
    assert_eq!(a, b);
    c.seed = 12;
    let d = engine::run_spy(&p, &dist, &c, &zeros(&p), StopRule::epochs(40)).unwrap();
    assert_ne!(a.records, d.records);
}

#[test]
fn full_masks_and_unit_slowdown_reduce_to_davepg() {
    let p = lasso();
    let c = cfg(&p, 5);
    let dave = engine::run_davepg(&p, &c, &zeros(&p), StopRule::epochs(30)).unwrap();
    let spy = engine::run_spy(&p, &SelectorDistribution::ones(p.dim()), &c, &zeros(&p), StopRule::epochs(30)).unwrap();
    let slow = engine::run_adaptive_spy_slowdown(&p, 1.0, &c, &zeros(&p), StopRule::epochs(30)).unwrap();
    for t in [&spy, &slow] {
        assert_eq!(t.final_x, dave.final_x);
        assert_eq!(t.epoch_iterates, dave.epoch_iterates);
        assert_eq!(t.total_exchanges(), dave.total_exchanges());
    }
}

#[test]
fn davepg_converges_to_reference() {
    let p = conditioned();
    let r = reference_solution(&p, 1e-12).unwrap();
    let t = engine::run_davepg(&p, &cfg(&p, 0), &zeros(&p), StopRule::epochs(400)).unwrap();
    let err: f64 = t.final_x.iter().zip(&r.x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(err < 1e-8, "{err}");
    assert!(t.objective.windows(2).all(|w| w[1].iter > w[0].iter));
}

#[test]
fn up_counts_match_masks_and_workers() {
    let p = lasso();
    let dist = uniform_distribution(p.dim(), 0.3).unwrap();
    for mode in [ExecMode::Sim, ExecMode::Concurrent] {
        let c = EngineConfig { mode, ..cfg(&p, 2) };
        let t = engine::run_spy(&p, &dist, &c, &zeros(&p), StopRule::epochs(25)).unwrap();
        let from_records: u64 = t.records.iter().map(|r| r.coords_up as u64).sum();
        assert_eq!(t.worker_up.iter().sum::<u64>(), from_records, "{mode:?}");
        assert_eq!(t.total_up(), t.setup_up + from_records);
        // a reply carries the model's support plus the mask of the worker's next step
        for (j, r) in t.records.iter().enumerate() {
            if let Some(next) = t.records[j + 1..].iter().find(|n| n.worker == r.worker) {
                assert_eq!(r.coords_down, r.support_size + next.coords_up, "{mode:?}");
            }
        }
    }
}

#[test]
fn dense_down_count_charges_d() {
    let p = lasso();
    let dist = uniform_distribution(p.dim(), 0.3).unwrap();
    let c = EngineConfig { down: DownCount::Dense, ..cfg(&p, 2) };
    let t = engine::run_spy(&p, &dist, &c, &zeros(&p), StopRule::epochs(5)).unwrap();
    for (j, r) in t.records.iter().enumerate() {
        if let Some(next) = t.records[j + 1..].iter().find(|n| n.worker == r.worker) {
            assert_eq!(r.coords_down, p.dim() + next.coords_up);
        }
    }
    let s = engine::run_spy(&p, &dist, &cfg(&p, 2), &zeros(&p), StopRule::epochs(5)).unwrap();
    assert_eq!(s.final_x, t.final_x);
    assert!(s.total_down() < t.total_down());
}

#[test]
fn concurrent_run_reaches_the_solution() {
    let p = conditioned();
    let r = reference_solution(&p, 1e-12).unwrap();
    let dist = uniform_distribution(p.dim(), 0.5).unwrap();
    let c = EngineConfig { mode: ExecMode::Concurrent, ..EngineConfig::new(p.max_stepsize()) };
    let gamma = p.max_stepsize();
    let stop =
        StopRule::epochs(20_000).with_check(|v| certify(&p, gamma, v.x).ok().flatten().is_some_and(|b| b <= 1e-10));
    let t = engine::run(&p, &Variant::Spy(dist), &c, Start::Prime(zeros(&p)), stop).unwrap();
    assert_eq!(t.stop, StopReason::Criterion);
    let err: f64 = t.final_x.iter().zip(&r.x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(err < 1e-8, "{err}");
}

#[test]
fn bad_inputs_are_rejected() {
    let p = conditioned();
    let too_big = EngineConfig::new(p.max_stepsize() * 1.01);
    assert!(matches!(
        engine::run_davepg(&p, &too_big, &zeros(&p), StopRule::epochs(1)),
        Err(Error::InvalidStepsize { .. })
    ));
    assert!(engine::run_davepg(&p, &EngineConfig::new(0.0), &zeros(&p), StopRule::epochs(1)).is_err());
    let c = cfg(&p, 0);
    assert!(matches!(
        engine::run_davepg(&p, &c, &[0.0; 3], StopRule::epochs(1)),
        Err(Error::DimensionMismatch { .. })
    ));
    let wrong = uniform_distribution(p.dim() + 1, 0.5).unwrap();
    assert!(engine::run_spy(&p, &wrong, &c, &zeros(&p), StopRule::epochs(1)).is_err());
    assert!(engine::run_adaptive_spy_slowdown(&p, 1.5, &c, &zeros(&p), StopRule::epochs(1)).is_err());
    let bad_sched = EngineConfig { schedule: DelaySchedule::FixedTrace(vec![0, 1]), ..cfg(&p, 0) };
    assert!(engine::run_davepg(&p, &bad_sched, &zeros(&p), StopRule::epochs(1)).is_err());
    let warm = WarmState { xbar: zeros(&p), workers: vec![zeros(&p)] };
    assert!(engine::run(&p, &Variant::DavePg, &c, Start::Continue(warm), StopRule::epochs(1)).is_err());
}

#[test]
fn continuing_skips_the_priming_round() {
    let p = lasso();
    let c = EngineConfig { log: LogOptions::default(), ..EngineConfig::new(p.max_stepsize()) };
    let first = engine::run_davepg(&p, &c, &zeros(&p), StopRule::epochs(1_000).with_max_iters(40)).unwrap();
    assert_eq!(first.stop, StopReason::IterBudget);
    assert!(first.setup_up > 0);
    let rest = engine::run(
        &p,
        &Variant::DavePg,
        &c,
        Start::Continue(WarmState::from_trace(&first)),
        StopRule::epochs(1_000).with_max_iters(400),
    )
    .unwrap();
    assert_eq!(rest.setup_up, 0);
    assert_eq!(rest.initial_x, first.final_x);
    let f = |x: &[f64]| p.eval_objective(x).unwrap();
    assert!(f(&rest.final_x) < f(&first.final_x));
}

#[test]
fn zero_regularized_problem_keeps_dense_support() {
    let p = conditioned().with_reg(Regularizer::None);
    let t = engine::run_davepg(&p, &cfg(&p, 0), &zeros(&p), StopRule::epochs(20)).unwrap();
    assert_eq!(support_size(&t.final_x), p.dim());
}

#[test]
fn single_precision_runs() {
    let (data, plan, _) = generate_conditioned::<f32>(20, 30, 2, 0.3, 1.0, 0.5, 0.05, 1).unwrap();
    let p: CompositeProblem<f32> =
        build_problem(&data, &plan, LossSpec::LeastSquares, Regularizer::l1(0.01f32).unwrap()).unwrap();
    let dist = uniform_distribution(p.dim(), 0.5f32).unwrap();
    let c = EngineConfig::new(p.max_stepsize());
    let t: RunTrace<f32> = engine::run_spy(&p, &dist, &c, &vec![0.0; p.dim()], StopRule::epochs(300)).unwrap();
    let bound = certify(&p, p.max_stepsize(), &t.final_x).unwrap().unwrap();
    assert!(bound < 1e-3, "{bound}");
}

fn brute_boundaries(log: &[usize], workers: usize) -> Vec<usize> {
    let mut out = vec![0];
    for k in 0..log.len() {
        let km = *out.last().unwrap();
        let done = (0..workers).all(|i| log[km..=k].iter().filter(|&&w| w == i).count() >= 2);
        if done && k > km {
            out.push(k);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn logged_epochs_match_brute_force(seed in 0u64..1000, workers in 2usize..5) {
        let (data, _) = generate_lasso::<f64>(12, 16, 0.5, 0.1, seed).unwrap();
        let plan = shard_even(16, workers, seed).unwrap();
        let p = build_problem(&data, &plan, LossSpec::LeastSquares, Regularizer::l1(0.01).unwrap()).unwrap();
        let c = EngineConfig { schedule: DelaySchedule::RandomUniform { seed }, ..EngineConfig::new(p.max_stepsize()) };
        let t = engine::run_davepg(&p, &c, &vec![0.0; 12], StopRule::epochs(8)).unwrap();
        prop_assert_eq!(&t.epochs, &brute_boundaries(&t.arrival_log(), workers));
        prop_assert_eq!(t.num_epochs(), 8);
    }

    #[test]
    fn snapshots_follow_the_stride(stride in 1usize..20) {
        let p = lasso();
        let c = EngineConfig {
            log: LogOptions { objective: ObjectiveLog::Stride(stride), epoch_iterates: false, snapshot_stride: Some(stride) },
            ..EngineConfig::new(p.max_stepsize())
        };
        let t = engine::run_davepg(&p, &c, &vec![0.0; p.dim()], StopRule::epochs(10_000).with_max_iters(97)).unwrap();
        prop_assert_eq!(t.snapshots.len(), 1 + 97 / stride);
        let expected = 1 + 97 / stride + usize::from(97 % stride != 0);
        prop_assert_eq!(t.objective.len(), expected);
    }
}
