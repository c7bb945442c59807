//! Experiment configuration, read from and written to TOML.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Sim,
    Concurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Down {
    #[default]
    Sparse,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    #[default]
    LeastSquares,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    /// Gaussian design with a planted sparse signal; `sparsity` is the fraction of zeros
    SyntheticLasso { d: usize, m: usize, sparsity: f64, noise: f64, seed: u64 },
    /// dense binary classification with `informative` relevant features
    SyntheticLogistic { d: usize, n: usize, informative: usize, flip: f64, seed: u64 },
    /// least squares whose shard Hessians all have spectrum in `[mu, lip]`
    SyntheticConditioned {
        d: usize,
        rows_per_shard: usize,
        mu: f64,
        lip: f64,
        sparsity: f64,
        noise: f64,
        seed: u64,
    },
    Libsvm {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
        /// divide every column by its largest absolute entry
        #[serde(default)]
        scale: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSpec {
    pub data: DataSpec,
    pub loss: Loss,
    /// ℓ1 level; mutually exclusive with `support_target`
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
    /// calibrate λ₁ so that the optimum has this many nonzeros
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support_target: Option<usize>,
    /// ridge term of the logistic loss
    pub lambda2: f64,
    pub workers: usize,
    /// row shuffling for shard assignment (ignored by synthetic-conditioned)
    pub shard_seed: u64,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self {
            data: DataSpec::SyntheticLasso { d: 1000, m: 500, sparsity: 0.985, noise: 0.01, seed: 2024 },
            loss: Loss::LeastSquares,
            lambda1: None,
            support_target: None,
            lambda2: 0.0,
            workers: 5,
            shard_seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InnerCriterion {
    #[default]
    C1,
    C2,
    C3,
    C1Simple,
    C2Prime,
    C3Prime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InnerStartSpec {
    #[default]
    Continue,
    Prime,
}

fn default_delta() -> f64 {
    0.5
}

fn default_epochs() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    Davepg,
    SpyUniform {
        pi: f64,
    },
    SpySlowdown {
        pi: f64,
    },
    Reconditioned {
        /// expected mask size; or give `c_factor` to use a multiple of the optimal support size
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c_factor: Option<f64>,
        #[serde(default)]
        criterion: InnerCriterion,
        /// epochs per loop for c1-simple
        #[serde(default = "default_epochs")]
        epochs: usize,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default)]
        inner_start: InnerStartSpec,
    },
    Catalyst {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c_factor: Option<f64>,
        criterion: InnerCriterion,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default)]
        inner_start: InnerStartSpec,
    },
}

impl AlgorithmSpec {
    pub fn label(&self) -> String {
        match self {
            AlgorithmSpec::Davepg => "davepg".into(),
            AlgorithmSpec::SpyUniform { pi } => format!("spy-uniform(pi={pi})"),
            AlgorithmSpec::SpySlowdown { pi } => format!("spy-slowdown(pi={pi})"),
            AlgorithmSpec::Reconditioned { c, c_factor, criterion, .. } => {
                format!("reconditioned({}, {criterion:?})", c_label(*c, *c_factor))
            }
            AlgorithmSpec::Catalyst { c, c_factor, criterion, .. } => {
                format!("catalyst({}, {criterion:?})", c_label(*c, *c_factor))
            }
        }
    }

    pub fn is_outer(&self) -> bool {
        matches!(self, AlgorithmSpec::Reconditioned { .. } | AlgorithmSpec::Catalyst { .. })
    }
}

fn c_label(c: Option<f64>, f: Option<f64>) -> String {
    match (c, f) {
        (Some(c), _) => format!("c={c}"),
        (None, Some(f)) => format!("c={f}s*"),
        _ => "c=?".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleSpec {
    #[default]
    RoundRobin,
    /// uniformly random next worker; without a seed, the run seed is used
    Random {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// exponential service times with the given rates
    Heterogeneous {
        speeds: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarmstartSpec {
    pub algorithm: AlgorithmSpec,
    /// switch once F − F⋆ is at most this ...
    pub subopt: f64,
    /// ... and at most this fraction of coordinates is nonzero
    pub density: f64,
    pub max_epochs: usize,
}

impl Default for WarmstartSpec {
    fn default() -> Self {
        Self { algorithm: AlgorithmSpec::Davepg, subopt: 1e-2, density: 0.01, max_epochs: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    pub mode: Mode,
    /// stop once F − F⋆ reaches this
    pub target: f64,
    /// objective logging: 0 logs at epoch boundaries, n > 0 every n arrivals
    pub log_stride: usize,
    /// epoch cap for single-level methods
    pub max_epochs: usize,
    /// loop cap for reconditioned and catalyst methods
    pub outer_budget: usize,
    /// certified accuracy of the reference solution
    pub reference_tol: f64,
    pub down: Down,
    pub problem: ProblemSpec,
    pub algorithm: AlgorithmSpec,
    pub schedule: ScheduleSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmstart: Option<WarmstartSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "lasso".into(),
            seeds: (0..10).collect(),
            mode: Mode::Sim,
            target: 1e-6,
            log_stride: 0,
            max_epochs: 50_000,
            outer_budget: 20_000,
            reference_tol: 1e-10,
            down: Down::Sparse,
            problem: ProblemSpec { support_target: Some(12), ..ProblemSpec::default() },
            algorithm: AlgorithmSpec::Reconditioned {
                c: None,
                c_factor: Some(1.0),
                criterion: InnerCriterion::C1Simple,
                epochs: 1,
                delta: 0.5,
                inner_start: InnerStartSpec::Continue,
            },
            schedule: ScheduleSpec::RoundRobin,
            warmstart: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let cfg = Self::from_toml(&text).map_err(|message| ConfigError::Parse { path: path.into(), message })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Every problem with the configuration, all at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        need(&mut errs, !self.seeds.is_empty(), "seeds: need at least one seed".into());
        need(&mut errs, self.target > 0.0 && self.target.is_finite(), format!("target: {} must be positive", self.target));
        need(&mut errs, self.max_epochs > 0, "max_epochs: must be positive".into());
        need(&mut errs, self.outer_budget > 0, "outer_budget: must be positive".into());
        need(&mut errs, self.reference_tol > 0.0, "reference_tol: must be positive".into());
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        need(&mut errs, sorted.len() == self.seeds.len(), "seeds: duplicates".into());

        let p = &self.problem;
        need(&mut errs, p.workers > 0, "problem.workers: must be positive".into());
        let dim = match &p.data {
            DataSpec::SyntheticLasso { d, m, sparsity, noise, .. } => {
                need(&mut errs, *d > 0 && *m > 0, "problem.data: d and m must be positive".into());
                need(&mut errs, *m >= p.workers, format!("problem.data: m = {m} rows for {} workers", p.workers));
                need(&mut errs, (0.0..=1.0).contains(sparsity), format!("problem.data.sparsity: {sparsity} outside [0, 1]"));
                need(&mut errs, *noise >= 0.0, "problem.data.noise: negative".into());
                Some(*d)
            }
            DataSpec::SyntheticLogistic { d, n, informative, flip, .. } => {
                need(&mut errs, *d > 0 && *n > 0, "problem.data: d and n must be positive".into());
                need(&mut errs, *n >= p.workers, format!("problem.data: n = {n} rows for {} workers", p.workers));
                need(&mut errs, *informative <= *d, "problem.data.informative: exceeds d".into());
                need(&mut errs, (0.0..=0.5).contains(flip), format!("problem.data.flip: {flip} outside [0, 0.5]"));
                Some(*d)
            }
            DataSpec::SyntheticConditioned { d, rows_per_shard, mu, lip, sparsity, noise, .. } => {
                need(&mut errs, *d > 0, "problem.data.d: must be positive".into());
                need(&mut errs, rows_per_shard >= d, "problem.data.rows_per_shard: must be at least d".into());
                need(&mut errs, *mu > 0.0 && mu <= lip, "problem.data: need 0 < mu <= lip".into());
                need(&mut errs, (0.0..=1.0).contains(sparsity), format!("problem.data.sparsity: {sparsity} outside [0, 1]"));
                need(&mut errs, *noise >= 0.0, "problem.data.noise: negative".into());
                Some(*d)
            }
            DataSpec::Libsvm { path, dim, .. } => {
                need(&mut errs, path.is_file(), format!("problem.data.path: {} does not exist", path.display()));
                *dim
            }
        };
        match (p.lambda1, p.support_target) {
            (Some(_), Some(_)) => errs.push("problem: give lambda1 or support_target, not both".into()),
            (None, None) => errs.push("problem: need lambda1 or support_target".into()),
            (Some(l), None) if !(l >= 0.0 && l.is_finite()) => errs.push(format!("problem.lambda1: {l} must be nonnegative")),
            (None, Some(s)) if s == 0 || dim.is_some_and(|d| s > d) => {
                errs.push(format!("problem.support_target: {s} outside 1..=d"))
            }
            _ => {}
        }
        need(&mut errs, p.lambda2 >= 0.0, "problem.lambda2: negative".into());
        if p.loss == Loss::LeastSquares && p.lambda2 != 0.0 {
            errs.push("problem.lambda2: only used by the logistic loss".into());
        }

        check_algorithm(&self.algorithm, "algorithm", &mut errs);
        match &self.schedule {
            ScheduleSpec::Heterogeneous { speeds, .. } => {
                if speeds.len() != p.workers {
                    errs.push(format!("schedule.speeds: {} rates for {} workers", speeds.len(), p.workers));
                }
                if speeds.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                    errs.push("schedule.speeds: rates must be positive".into());
                }
            }
            ScheduleSpec::RoundRobin | ScheduleSpec::Random { .. } => {}
        }
        if let Some(w) = &self.warmstart {
            check_algorithm(&w.algorithm, "warmstart.algorithm", &mut errs);
            if w.algorithm.is_outer() {
                errs.push("warmstart.algorithm: must be davepg or a spy variant".into());
            }
            if !(w.subopt > 0.0) {
                errs.push("warmstart.subopt: must be positive".into());
            }
            if !(w.density > 0.0 && w.density <= 1.0) {
                errs.push("warmstart.density: outside (0, 1]".into());
            }
            if w.max_epochs == 0 {
                errs.push("warmstart.max_epochs: must be positive".into());
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}

fn need(errs: &mut Vec<String>, ok: bool, msg: String) {
    if !ok {
        errs.push(msg);
    }
}

fn check_algorithm(a: &AlgorithmSpec, at: &str, errs: &mut Vec<String>) {
    let c_ok = |c: Option<f64>, f: Option<f64>, errs: &mut Vec<String>| match (c, f) {
        (Some(_), Some(_)) => errs.push(format!("{at}: give c or c_factor, not both")),
        (None, None) => errs.push(format!("{at}: need c or c_factor")),
        (Some(v), None) | (None, Some(v)) if !(v > 0.0 && v.is_finite()) => {
            errs.push(format!("{at}: c must be positive, got {v}"))
        }
        _ => {}
    };
    match a {
        AlgorithmSpec::Davepg => {}
        AlgorithmSpec::SpyUniform { pi } | AlgorithmSpec::SpySlowdown { pi } => {
            if !(*pi > 0.0 && *pi <= 1.0) {
                errs.push(format!("{at}.pi: {pi} outside (0, 1]"));
            }
        }
        AlgorithmSpec::Reconditioned { c, c_factor, criterion, epochs, delta, .. } => {
            c_ok(*c, *c_factor, errs);
            if matches!(criterion, InnerCriterion::C2Prime | InnerCriterion::C3Prime) {
                errs.push(format!("{at}.criterion: {criterion:?} needs the catalyst algorithm"));
            }
            if *criterion == InnerCriterion::C1Simple && *epochs == 0 {
                errs.push(format!("{at}.epochs: must be positive"));
            }
            if !(*delta > 0.0 && *delta < 1.0) {
                errs.push(format!("{at}.delta: {delta} outside (0, 1)"));
            }
        }
        AlgorithmSpec::Catalyst { c, c_factor, criterion, delta, .. } => {
            c_ok(*c, *c_factor, errs);
            if !matches!(criterion, InnerCriterion::C2Prime | InnerCriterion::C3Prime) {
                errs.push(format!("{at}.criterion: catalyst takes c2-prime or c3-prime"));
            }
            if !(*delta > 0.0 && *delta < 1.0) {
                errs.push(format!("{at}.delta: {delta} outside (0, 1)"));
            }
        }
    }
}

/// Parses `0..10`, `1,4,7` or a mix such as `0..3,9`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range {part}"))?;
            let b: u64 = b.trim().parse().map_err(|_| format!("bad seed range {part}"))?;
            if b <= a {
                return Err(format!("empty seed range {part}"));
            }
            out.extend(a..b);
        } else {
            out.push(part.parse().map_err(|_| format!("bad seed {part}"))?);
        }
    }
    if out.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = ExperimentConfig::from_toml(
            r#"
            name = "x"
            seeds = [3]
            [algorithm]
            kind = "spy-uniform"
            pi = 0.3
            "#,
        )
        .unwrap();
        assert_eq!(c.problem, ExperimentConfig::default().problem);
        assert_eq!(c.algorithm, AlgorithmSpec::SpyUniform { pi: 0.3 });
        assert_eq!(c.seeds, vec![3]);
    }

    #[test]
    fn all_errors_reported() {
        let mut c = ExperimentConfig::default();
        c.seeds.clear();
        c.target = -1.0;
        c.algorithm = AlgorithmSpec::SpyUniform { pi: 1.5 };
        let ConfigError::Invalid(errs) = c.validate().unwrap_err() else { panic!() };
        assert_eq!(errs.len(), 3, "{errs:?}");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("nmae = \"typo\"").is_err());
        assert!(ExperimentConfig::from_toml("[problem]\nworkerz = 3").is_err());
    }

    #[test]
    fn missing_dataset_is_a_config_error() {
        let mut c = ExperimentConfig::default();
        c.problem.data = DataSpec::Libsvm { path: "/nonexistent/file.svm".into(), dim: None, scale: false };
        assert!(c.validate().is_err());
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3,9").unwrap(), vec![0, 1, 2, 9]);
        assert_eq!(parse_seeds("7").unwrap(), vec![7]);
        assert!(parse_seeds("3..1").is_err());
        assert!(parse_seeds("a").is_err());
        assert!(parse_seeds("").is_err());
    }
}
