//! Synthetic generators, LibSVM ingestion and sharding.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, CsrMatrix, DenseMatrix, Design};
use crate::problem::{CompositeProblem, LossShard, Regularizer};
use crate::rng::{setup_stream, StreamRng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub design: Design<T>,
    pub labels: Vec<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(design: Design<T>, labels: Vec<T>) -> Result<Self> {
        if design.rows() == 0 {
            return Err(Error::Empty("dataset has no examples"));
        }
        if labels.len() != design.rows() {
            return Err(Error::DimensionMismatch { expected: design.rows(), found: labels.len() });
        }
        Ok(Self { design, labels })
    }

    pub fn n(&self) -> usize {
        self.design.rows()
    }

    pub fn d(&self) -> usize {
        self.design.cols()
    }

    /// Divide every feature by its largest absolute value (all-zero features untouched).
    pub fn max_abs_scaled(mut self) -> Self {
        let s: Vec<T> = self
            .design
            .col_max_abs()
            .into_iter()
            .map(|m| if m > T::zero() { T::one() / m } else { T::one() })
            .collect();
        self.design.scale_cols(&s);
        self
    }
}

fn gaussian<T: Scalar>(rng: &mut StreamRng) -> T {
    let v: f64 = StandardNormal.sample(rng);
    T::of(v)
}

fn check_sizes(d: usize, m: usize, sparsity: f64, noise: f64) -> Result<()> {
    if d == 0 || m == 0 {
        return Err(invalid("d and m must be positive"));
    }
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(invalid("sparsity must lie in [0, 1]"));
    }
    if !(noise >= 0.0) {
        return Err(invalid("noise standard deviation must be nonnegative"));
    }
    Ok(())
}

/// Number of nonzeros of the planted vector; `f64::round` rounds halves away from zero.
pub fn planted_nonzeros(d: usize, sparsity: f64) -> usize {
    (((1.0 - sparsity) * d as f64).round() as usize).min(d)
}

fn planted<T: Scalar>(d: usize, sparsity: f64, rng: &mut StreamRng) -> Vec<T> {
    let k = planted_nonzeros(d, sparsity);
    let mut x0 = vec![T::zero(); d];
    let mut pos = index::sample(rng, d, k).into_vec();
    pos.sort_unstable();
    for j in pos {
        x0[j] = gaussian(rng);
        // a planted entry must be nonzero
        while x0[j] == T::zero() {
            x0[j] = gaussian(rng);
        }
    }
    x0
}

fn noisy_targets<T: Scalar>(a: &Design<T>, x0: &[T], noise: f64, rng: &mut StreamRng) -> Vec<T> {
    let mut b = vec![T::zero(); a.rows()];
    a.mul_vec(x0, &mut b);
    if noise > 0.0 {
        let e = Normal::new(0.0, noise).expect("validated");
        for bi in &mut b {
            *bi += T::of(e.sample(rng));
        }
    }
    b
}

/// `A` with i.i.d. standard normal entries, `b = A x₀ + e`.
pub fn generate_lasso<T: Scalar>(
    d: usize,
    m: usize,
    sparsity: f64,
    noise_std: f64,
    seed: u64,
) -> Result<(Dataset<T>, Vec<T>)> {
    check_sizes(d, m, sparsity, noise_std)?;
    let mut rng = setup_stream(seed);
    let mut a = DenseMatrix::zeros(m, d);
    for j in 0..d {
        for v in a.col_mut(j) {
            *v = gaussian(&mut rng);
        }
    }
    let a = Design::Dense(a);
    let x0 = planted(d, sparsity, &mut rng);
    let b = noisy_targets(&a, &x0, noise_std, &mut rng);
    Ok((Dataset::new(a, b)?, x0))
}

/// Matrix with orthonormal columns from Gram–Schmidt on a Gaussian matrix.
fn orthonormal(rows: usize, cols: usize, rng: &mut StreamRng) -> DenseMatrix<f64> {
    let mut q = DenseMatrix::<f64>::zeros(rows, cols);
    let mut j = 0;
    while j < cols {
        let mut v: Vec<f64> = (0..rows).map(|_| gaussian(rng)).collect();
        // two passes keep the basis orthogonal to working precision
        for _ in 0..2 {
            for p in 0..j {
                let c = dot(q.col(p), &v);
                crate::linalg::axpy(-c, q.col(p), &mut v);
            }
        }
        let n = dot(&v, &v).sqrt();
        if n < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= n);
        q.col_mut(j).copy_from_slice(&v);
        j += 1;
    }
    q
}

/// Least-squares data whose `M` contiguous shards have local Hessians `2AᵢᵀAᵢ/nᵢ` with
/// eigenvalues spread geometrically over `[mu, lip]` (both ends attained on every shard).
#[allow(clippy::too_many_arguments)]
pub fn generate_conditioned<T: Scalar>(
    d: usize,
    rows_per_shard: usize,
    workers: usize,
    mu: f64,
    lip: f64,
    sparsity: f64,
    noise_std: f64,
    seed: u64,
) -> Result<(Dataset<T>, ShardingPlan, Vec<T>)> {
    check_sizes(d, rows_per_shard, sparsity, noise_std)?;
    if workers == 0 {
        return Err(invalid("need at least one worker"));
    }
    if rows_per_shard < d {
        return Err(invalid("each shard needs at least d rows to be strongly convex"));
    }
    if !(mu > 0.0 && mu <= lip) {
        return Err(invalid("need 0 < μ ≤ L"));
    }
    let mut rng = setup_stream(seed);
    let n = rows_per_shard * workers;
    let mut a = DenseMatrix::<T>::zeros(n, d);
    let ni = rows_per_shard as f64;
    let eig: Vec<f64> = (0..d)
        .map(|j| if d == 1 { lip } else { mu * (lip / mu).powf(j as f64 / (d - 1) as f64) })
        .collect();
    let sigma: Vec<f64> = eig.iter().map(|&e| (e * ni / 2.0).sqrt()).collect();
    for w in 0..workers {
        let q = orthonormal(rows_per_shard, d, &mut rng);
        let r = orthonormal(d, d, &mut rng);
        // A_w = Q diag(σ) Rᵀ
        for c in 0..d {
            for p in 0..d {
                let coef = sigma[p] * r.get(c, p);
                let src = q.col(p);
                let dst = &mut a.col_mut(c)[w * rows_per_shard..(w + 1) * rows_per_shard];
                for (o, &s) in dst.iter_mut().zip(src) {
                    *o += T::of(coef * s);
                }
            }
        }
    }
    let a = Design::Dense(a);
    let x0 = planted(d, sparsity, &mut rng);
    let b = noisy_targets(&a, &x0, noise_std, &mut rng);
    let assignment = (0..n).map(|i| i / rows_per_shard).collect();
    Ok((Dataset::new(a, b)?, ShardingPlan::from_assignment(assignment, workers)?, x0))
}

/// Dense binary classification data: `informative` Gaussian features drive the label through
/// a random linear rule, the rest are noise; a fraction `flip` of labels is inverted.
pub fn generate_logistic<T: Scalar>(
    d: usize,
    n: usize,
    informative: usize,
    flip: f64,
    seed: u64,
) -> Result<(Dataset<T>, Vec<T>)> {
    if d == 0 || n == 0 || informative == 0 || informative > d {
        return Err(invalid("need 0 < informative ≤ d and n > 0"));
    }
    if !(0.0..0.5).contains(&flip) {
        return Err(invalid("label flip rate must lie in [0, 0.5)"));
    }
    let mut rng = setup_stream(seed);
    let mut a = DenseMatrix::zeros(n, d);
    for j in 0..d {
        for v in a.col_mut(j) {
            *v = gaussian(&mut rng);
        }
    }
    let mut w = vec![T::zero(); d];
    let mut pos = index::sample(&mut rng, d, informative).into_vec();
    pos.sort_unstable();
    for j in pos {
        w[j] = gaussian(&mut rng);
    }
    let a = Design::Dense(a);
    let mut z = vec![T::zero(); n];
    a.mul_vec(&w, &mut z);
    let y = z
        .iter()
        .map(|&zi| {
            let s = if zi >= T::zero() { T::one() } else { -T::one() };
            if rng.random::<f64>() < flip {
                -s
            } else {
                s
            }
        })
        .collect();
    Ok((Dataset::new(a, y)?, w))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LibsvmOptions {
    /// feature dimension; must not be smaller than the largest index seen
    pub dim: Option<usize>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// Parses `<label> <idx>:<val> ...` lines with 1-based, strictly increasing indices.
/// Blank lines and `#` comments are skipped; label 0 maps to −1.
pub fn parse_libsvm<T: Scalar, R: Read>(reader: R, opts: &LibsvmOptions) -> Result<Dataset<T>> {
    let mut rows: Vec<Vec<(usize, T)>> = Vec::new();
    let mut labels = Vec::new();
    let mut max_col = 0usize;
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut tokens = body.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line");
        let label: f64 = label_tok.parse().map_err(|_| parse_err(lineno, format!("bad label `{label_tok}`")))?;
        let label = if label == 1.0 {
            T::one()
        } else if label == -1.0 || label == 0.0 {
            -T::one()
        } else {
            return Err(parse_err(lineno, format!("label {label} is not binary")));
        };
        let mut row = Vec::new();
        let mut prev: Option<usize> = None;
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("token `{tok}` is not idx:value")))?;
            let i: usize = i.parse().map_err(|_| parse_err(lineno, format!("bad index `{i}`")))?;
            if i == 0 {
                return Err(parse_err(lineno, "indices are 1-based"));
            }
            let v: f64 = v.parse().map_err(|_| parse_err(lineno, format!("bad value `{v}`")))?;
            if !v.is_finite() {
                return Err(parse_err(lineno, format!("non-finite value `{v}`")));
            }
            let col = i - 1;
            if prev.is_some_and(|p| col <= p) {
                return Err(parse_err(lineno, format!("index {i} not increasing")));
            }
            prev = Some(col);
            max_col = max_col.max(i);
            row.push((col, T::of(v)));
        }
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(Error::Empty("no examples in LibSVM input"));
    }
    let d = match opts.dim {
        Some(d) if d < max_col => {
            return Err(invalid(format!("dimension override {d} below largest index {max_col}")))
        }
        Some(d) => d,
        None => max_col,
    };
    let csr = CsrMatrix::from_row_entries(d, &rows)?;
    Dataset::new(Design::Sparse(csr), labels)
}

/// Opens `path`, decompressing when it ends in `.gz`.
pub fn load_libsvm<T: Scalar>(path: &Path, opts: &LibsvmOptions) -> Result<Dataset<T>> {
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        parse_libsvm(GzDecoder::new(file), opts)
    } else {
        parse_libsvm(file, opts)
    }
}

pub fn write_libsvm<T: Scalar, W: Write>(data: &Dataset<T>, mut w: W) -> Result<()> {
    for i in 0..data.n() {
        let label = if data.labels[i] > T::zero() { "+1" } else { "-1" };
        write!(w, "{label}")?;
        for (j, v) in data.design.row_entries(i) {
            write!(w, " {}:{}", j + 1, v.as_f64())?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardingPlan {
    /// worker of every example
    pub assignment: Vec<usize>,
    /// examples of every worker, in dataset order
    pub shards: Vec<Vec<usize>>,
}

impl ShardingPlan {
    pub fn from_assignment(assignment: Vec<usize>, workers: usize) -> Result<Self> {
        let mut shards = vec![Vec::new(); workers];
        for (e, &w) in assignment.iter().enumerate() {
            if w >= workers {
                return Err(invalid(format!("example {e} assigned to worker {w} of {workers}")));
            }
            shards[w].push(e);
        }
        if shards.iter().any(Vec::is_empty) {
            return Err(invalid("every worker needs at least one example"));
        }
        Ok(Self { assignment, shards })
    }

    pub fn workers(&self) -> usize {
        self.shards.len()
    }

    pub fn alphas(&self) -> Vec<f64> {
        let n = self.assignment.len() as f64;
        self.shards.iter().map(|s| s.len() as f64 / n).collect()
    }
}

/// Shuffle examples with `seed`, then cut into `workers` blocks whose sizes differ by at most one.
pub fn shard_even(n: usize, workers: usize, seed: u64) -> Result<ShardingPlan> {
    if workers == 0 || workers > n {
        return Err(invalid(format!("cannot split {n} examples over {workers} workers")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut crate::rng::stream(seed, u64::MAX - 1));
    let mut assignment = vec![0; n];
    let (base, extra) = (n / workers, n % workers);
    let mut pos = 0;
    for w in 0..workers {
        let size = base + usize::from(w < extra);
        for &e in &order[pos..pos + size] {
            assignment[e] = w;
        }
        pos += size;
    }
    ShardingPlan::from_assignment(assignment, workers)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec<T> {
    LeastSquares,
    Logistic { l2: T },
}

/// One shard per worker of `plan`, with `α_i = |S_i|/n`.
pub fn build_problem<T: Scalar>(
    data: &Dataset<T>,
    plan: &ShardingPlan,
    loss: LossSpec<T>,
    reg: Regularizer<T>,
) -> Result<CompositeProblem<T>> {
    if plan.assignment.len() != data.n() {
        return Err(Error::DimensionMismatch { expected: data.n(), found: plan.assignment.len() });
    }
    let shards = plan
        .shards
        .iter()
        .map(|rows| {
            let a = data.design.select_rows(rows);
            let t: Vec<T> = rows.iter().map(|&r| data.labels[r]).collect();
            match loss {
                LossSpec::LeastSquares => LossShard::least_squares(a, t),
                LossSpec::Logistic { l2 } => LossShard::logistic(a, t, l2),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    CompositeProblem::new(shards, reg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lasso_shapes_and_determinism() {
        let (ds, x0) = generate_lasso::<f64>(1000, 50, 0.99, 0.01, 4).unwrap();
        assert_eq!((ds.n(), ds.d()), (50, 1000));
        assert_eq!(x0.iter().filter(|v| **v != 0.0).count(), 10);
        let (ds2, x02) = generate_lasso::<f64>(1000, 50, 0.99, 0.01, 4).unwrap();
        assert_eq!(ds, ds2);
        assert_eq!(x0, x02);
        let (zero, x) = generate_lasso::<f64>(20, 10, 1.0, 0.0, 1).unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
        assert!(zero.labels.iter().all(|v| *v == 0.0));
        assert!(generate_lasso::<f64>(0, 10, 0.5, 0.0, 1).is_err());
        assert!(generate_lasso::<f64>(10, 10, 1.5, 0.0, 1).is_err());
        assert!(generate_lasso::<f64>(10, 10, 0.5, -1.0, 1).is_err());
    }

    #[test]
    fn libsvm_examples() {
        let ds: Dataset<f64> = parse_libsvm("+1 1:0.5 3:2\n".as_bytes(), &LibsvmOptions::default()).unwrap();
        assert_eq!((ds.n(), ds.d()), (1, 3));
        assert_eq!(ds.design.row_entries(0), vec![(0, 0.5), (2, 2.0)]);
        assert_eq!(ds.labels, vec![1.0]);
        let neg: Dataset<f64> = parse_libsvm("0 2:1\n".as_bytes(), &LibsvmOptions::default()).unwrap();
        assert_eq!(neg.labels, vec![-1.0]);
    }

    #[test]
    fn libsvm_errors_carry_lines() {
        let bad = "+1 1:1\n-1 3:1 2:1\n";
        match parse_libsvm::<f64, _>(bad.as_bytes(), &LibsvmOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        for input in ["+1 abc\n", "+1 0:1\n", "2 1:1\n", "x 1:1\n", "+1 1:nan\n"] {
            assert!(matches!(
                parse_libsvm::<f64, _>(input.as_bytes(), &LibsvmOptions::default()),
                Err(Error::Parse { line: 1, .. })
            ));
        }
        let small = LibsvmOptions { dim: Some(2) };
        assert!(parse_libsvm::<f64, _>("+1 3:1\n".as_bytes(), &small).is_err());
        let wide = LibsvmOptions { dim: Some(10) };
        assert_eq!(parse_libsvm::<f64, _>("+1 3:1\n".as_bytes(), &wide).unwrap().d(), 10);
    }

    #[test]
    fn gz_input() {
        use flate2::write::GzEncoder;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.svm.gz");
        let mut enc = GzEncoder::new(File::create(&path).unwrap(), flate2::Compression::default());
        enc.write_all(b"1 1:1 2:-3\n-1 2:0.25\n").unwrap();
        enc.finish().unwrap();
        let ds: Dataset<f64> = load_libsvm(&path, &LibsvmOptions::default()).unwrap();
        assert_eq!((ds.n(), ds.d()), (2, 2));
    }

    #[test]
    fn sharding_examples() {
        let p = shard_even(10, 5, 0).unwrap();
        assert!(p.shards.iter().all(|s| s.len() == 2));
        assert!(p.alphas().iter().all(|a| (a - 0.2).abs() < 1e-15));
        let q = shard_even(7, 2, 0).unwrap();
        let mut sizes: Vec<usize> = q.shards.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 4]);
        assert!(shard_even(3, 4, 0).is_err());
    }

    #[test]
    fn conditioned_spectrum_is_exact() {
        let (ds, plan, _) = generate_conditioned::<f64>(6, 10, 2, 0.1, 1.0, 0.5, 0.0, 3).unwrap();
        let prob = build_problem(&ds, &plan, LossSpec::LeastSquares, Regularizer::None).unwrap();
        let (mu, l) = prob.smoothness_constants();
        assert!((mu - 0.1).abs() < 1e-6, "{mu}");
        assert!((l - 1.0).abs() < 1e-8, "{l}");
    }

    proptest! {
        #[test]
        fn libsvm_round_trip(rows in proptest::collection::vec(
            (any::<bool>(), proptest::collection::btree_map(0usize..30, -100.0f64..100.0, 0..8)), 1..12)
        ) {
            let mut text = String::new();
            for (pos, row) in &rows {
                text.push_str(if *pos { "+1" } else { "-1" });
                for (j, v) in row {
                    text.push_str(&format!(" {}:{}", j + 1, v));
                }
                text.push('\n');
            }
            let a: Dataset<f64> = parse_libsvm(text.as_bytes(), &LibsvmOptions::default()).unwrap();
            let mut out = Vec::new();
            write_libsvm(&a, &mut out).unwrap();
            let b: Dataset<f64> = parse_libsvm(out.as_slice(), &LibsvmOptions { dim: Some(a.d()) }).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn shards_partition(n in 1usize..200, seed in 0u64..50, frac in 0.0f64..1.0) {
            let m = 1 + ((n - 1) as f64 * frac) as usize;
            let p = shard_even(n, m, seed).unwrap();
            let sizes: Vec<usize> = p.shards.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let mut all: Vec<usize> = p.shards.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert!((p.alphas().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn planted_support_size(d in 1usize..300, sparsity in 0.0f64..=1.0, seed in 0u64..10) {
            let (_, x0) = generate_lasso::<f64>(d, 2, sparsity, 0.0, seed).unwrap();
            prop_assert_eq!(x0.iter().filter(|v| **v != 0.0).count(), planted_nonzeros(d, sparsity));
        }
    }
}
