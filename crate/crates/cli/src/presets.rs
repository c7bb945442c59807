//! Packaged experiments.

use std::path::PathBuf;

use crate::config::{
    AlgorithmSpec, DataSpec, ExperimentConfig, InnerCriterion, InnerStartSpec, Loss, ProblemSpec, WarmstartSpec,
};

/// What a preset is meant to be run with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Compare,
    Warmstart,
}

pub struct Preset {
    pub name: &'static str,
    pub about: &'static str,
    pub command: Command,
    pub configs: Vec<ExperimentConfig>,
}

pub const NAMES: [&str; 9] =
    ["lasso", "madelon-synth", "madelon", "rcv1", "sm1", "sm7", "fig-lasso", "fig-madelon", "warmstart"];

fn reco(c_factor: f64, criterion: InnerCriterion) -> AlgorithmSpec {
    AlgorithmSpec::Reconditioned {
        c: None,
        c_factor: Some(c_factor),
        criterion,
        epochs: 1,
        delta: 0.5,
        inner_start: InnerStartSpec::Continue,
    }
}

/// Synthetic stand-in with madelon's shape: d = 500, n = 2000, M = 10.
fn madelon_synth_problem() -> ProblemSpec {
    ProblemSpec {
        data: DataSpec::SyntheticLogistic { d: 500, n: 2000, informative: 5, flip: 0.05, seed: 5 },
        loss: Loss::Logistic,
        lambda1: None,
        support_target: Some(5),
        lambda2: 1e-3,
        workers: 10,
        shard_seed: 5,
    }
}

fn madelon_problem() -> ProblemSpec {
    ProblemSpec {
        data: DataSpec::Libsvm { path: PathBuf::from("data/madelon"), dim: Some(500), scale: true },
        loss: Loss::Logistic,
        lambda1: Some(0.03),
        support_target: None,
        lambda2: 1e-3,
        workers: 10,
        shard_seed: 0,
    }
}

fn rcv1_problem() -> ProblemSpec {
    ProblemSpec {
        data: DataSpec::Libsvm { path: PathBuf::from("data/rcv1_train.binary"), dim: Some(47236), scale: false },
        loss: Loss::Logistic,
        lambda1: Some(1e-3),
        support_target: None,
        lambda2: 1e-4,
        workers: 20,
        shard_seed: 0,
    }
}

fn logistic_base(name: &str, problem: ProblemSpec) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        target: 1e-4,
        reference_tol: 1e-9,
        problem,
        algorithm: reco(1.0, InnerCriterion::C1Simple),
        ..Default::default()
    }
}

fn named(base: &ExperimentConfig, name: String, algorithm: AlgorithmSpec) -> ExperimentConfig {
    ExperimentConfig { name, algorithm, ..base.clone() }
}

fn davepg(base: &ExperimentConfig) -> ExperimentConfig {
    named(base, format!("{}-davepg", base.name), AlgorithmSpec::Davepg)
}

fn c_sweep(base: &ExperimentConfig) -> Vec<ExperimentConfig> {
    let mut out = vec![davepg(base)];
    for (tag, f) in [("s3", 1.0 / 3.0), ("1s", 1.0), ("3s", 3.0), ("10s", 10.0)] {
        out.push(named(base, format!("{}-c{tag}", base.name), reco(f, InnerCriterion::C1Simple)));
    }
    out
}

fn sm7_lasso() -> ExperimentConfig {
    ExperimentConfig {
        name: "sm7".into(),
        target: 1e-8,
        reference_tol: 1e-11,
        seeds: (0..10).collect(),
        problem: ProblemSpec {
            data: DataSpec::SyntheticLasso { d: 400, m: 200, sparsity: 0.98, noise: 0.5, seed: 77 },
            support_target: Some(8),
            workers: 4,
            shard_seed: 2,
            ..ProblemSpec::default()
        },
        ..Default::default()
    }
}

pub fn preset(name: &str) -> Option<Preset> {
    let lasso = ExperimentConfig::default();
    let madelon_synth = logistic_base("madelon-synth", madelon_synth_problem());
    let p = match name {
        "lasso" => Preset { name: "lasso", about: "lasso d=1000, m=500, M=5, s*=12", command: Command::Run, configs: vec![lasso] },
        "madelon-synth" => Preset {
            name: "madelon-synth",
            about: "synthetic logistic problem shaped like madelon, M=10",
            command: Command::Run,
            configs: vec![madelon_synth],
        },
        "madelon" => Preset {
            name: "madelon",
            about: "madelon logistic regression, M=10 (needs the LIBSVM file)",
            command: Command::Run,
            configs: vec![logistic_base("madelon", madelon_problem())],
        },
        "rcv1" => {
            let base = ExperimentConfig {
                outer_budget: 200_000,
                warmstart: Some(WarmstartSpec::default()),
                ..logistic_base("rcv1", rcv1_problem())
            };
            Preset {
                name: "rcv1",
                about: "rcv1_train logistic regression, M=20, warm-started (needs the LIBSVM file)",
                command: Command::Warmstart,
                configs: vec![base],
            }
        }
        "sm1" => {
            let base = ExperimentConfig { name: "sm1".into(), ..madelon_synth };
            let mut configs = vec![davepg(&base)];
            for pi in [0.1, 0.3, 0.6] {
                configs.push(named(&base, format!("sm1-uniform-{pi}"), AlgorithmSpec::SpyUniform { pi }));
            }
            Preset {
                name: "sm1",
                about: "uniform sparsification at several probabilities vs DAve-PG",
                command: Command::Compare,
                configs,
            }
        }
        "sm7" => {
            let base = sm7_lasso();
            let configs = vec![
                named(&base, "sm7-c1-simple".into(), reco(1.0, InnerCriterion::C1Simple)),
                named(&base, "sm7-c3".into(), reco(1.0, InnerCriterion::C3)),
            ];
            Preset { name: "sm7", about: "one-epoch restarts vs criterion C3 on a lasso", command: Command::Compare, configs }
        }
        "fig-lasso" => Preset {
            name: "fig-lasso",
            about: "lasso: DAve-PG and c in {s*/3, s*, 3s*, 10s*}",
            command: Command::Compare,
            configs: c_sweep(&lasso),
        },
        "fig-madelon" => Preset {
            name: "fig-madelon",
            about: "synthetic madelon: DAve-PG and c in {s*/3, s*, 3s*, 10s*}",
            command: Command::Compare,
            configs: c_sweep(&madelon_synth),
        },
        "warmstart" => Preset {
            name: "warmstart",
            about: "lasso warm-started with DAve-PG until 1e-2 suboptimality and 2% density",
            command: Command::Warmstart,
            configs: vec![ExperimentConfig {
                name: "warmstart".into(),
                // s* is 1.2% of d here, so a 1% trigger could never fire
                warmstart: Some(WarmstartSpec { density: 0.02, ..WarmstartSpec::default() }),
                ..lasso
            }],
        },
        _ => return None,
    };
    Some(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ConfigError, DataSpec};

    #[test]
    fn every_preset_builds_and_round_trips() {
        for name in NAMES {
            let p = preset(name).unwrap();
            assert_eq!(p.name, name);
            for c in &p.configs {
                let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
                assert_eq!(&back, c, "{name}");
                match (&c.problem.data, c.validate()) {
                    (DataSpec::Libsvm { .. }, r) => assert!(matches!(r, Err(ConfigError::Invalid(_))) || r.is_ok()),
                    (_, r) => r.unwrap(),
                }
            }
        }
        assert!(preset("nope").is_none());
    }

    #[test]
    fn comparisons_share_the_problem() {
        for name in NAMES {
            let p = preset(name).unwrap();
            if p.command == Command::Compare {
                assert!(p.configs.len() >= 2);
                assert!(p.configs.iter().all(|c| c.problem == p.configs[0].problem));
            }
        }
    }
}
