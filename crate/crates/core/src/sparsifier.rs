//! Random coordinate selection.

use rand::Rng;

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Per-coordinate inclusion probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorDistribution<T> {
    p: Vec<T>,
    p_min: T,
    p_max: T,
}

impl<T: Scalar> SelectorDistribution<T> {
    pub fn new(p: Vec<T>) -> Result<Self> {
        if p.is_empty() {
            return Err(invalid("empty probability vector"));
        }
        if let Some(bad) = p.iter().find(|&&v| !(v > T::zero() && v <= T::one())) {
            return Err(invalid(format!("probability {bad} outside (0, 1]")));
        }
        let p_min = p.iter().copied().fold(T::one(), T::min);
        let p_max = p.iter().copied().fold(T::zero(), T::max);
        Ok(Self { p, p_min, p_max })
    }

    pub fn ones(d: usize) -> Self {
        Self { p: vec![T::one(); d], p_min: T::one(), p_max: T::one() }
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn probs(&self) -> &[T] {
        &self.p
    }

    pub fn p_min(&self) -> T {
        self.p_min
    }

    pub fn p_max(&self) -> T {
        self.p_max
    }

    pub fn is_full(&self) -> bool {
        self.p_min >= T::one()
    }

    pub fn expected_size(&self) -> T {
        self.p.iter().copied().sum()
    }

    /// `p_min/p_max ≥ (1−γμ)²`, the condition under which sparsified updates contract.
    pub fn satisfies_gap(&self, gamma: T, mu: T) -> bool {
        let q = T::one() - gamma * mu;
        self.p_min / self.p_max >= q * q
    }

    /// Per-epoch contraction factor `p_max(1−γμ)² + 1 − p_min`.
    pub fn epoch_rate(&self, gamma: T, mu: T) -> T {
        let q = T::one() - gamma * mu;
        self.p_max * q * q + T::one() - self.p_min
    }
}

/// Sorted, duplicate-free coordinate subset.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoordinateMask {
    indices: Vec<usize>,
}

impl CoordinateMask {
    pub fn full(d: usize) -> Self {
        Self { indices: (0..d).collect() }
    }

    pub fn from_sorted(indices: Vec<usize>) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        Self { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn uniform_distribution<T: Scalar>(d: usize, pi: T) -> Result<SelectorDistribution<T>> {
    if !(pi > T::zero() && pi <= T::one()) {
        return Err(invalid(format!("π = {pi} outside (0, 1]")));
    }
    if d == 0 {
        return Err(invalid("d must be positive"));
    }
    Ok(SelectorDistribution { p: vec![pi; d], p_min: pi, p_max: pi })
}

/// Ones on `supp(center)`, `min(c/|null(center)|, 1)` elsewhere.
pub fn adaptive_distribution<T: Scalar>(center: &[T], c: T) -> Result<SelectorDistribution<T>> {
    if !(c > T::zero()) {
        return Err(invalid("exploration budget c must be positive"));
    }
    let nulls = center.iter().filter(|v| **v == T::zero()).count();
    if nulls == 0 {
        return Ok(SelectorDistribution::ones(center.len()));
    }
    let pi = (c / T::of_usize(nulls)).min(T::one());
    let p: Vec<T> = center.iter().map(|&v| if v == T::zero() { pi } else { T::one() }).collect();
    let p_max = T::one();
    let p_min = if nulls > 0 { pi } else { T::one() };
    Ok(SelectorDistribution { p, p_min, p_max })
}

/// `π_ℓ = min(c/|null(center)|, 1)`.
pub fn adaptive_level<T: Scalar>(center: &[T], c: T) -> T {
    let nulls = center.iter().filter(|v| **v == T::zero()).count();
    if nulls == 0 {
        T::one()
    } else {
        (c / T::of_usize(nulls)).min(T::one())
    }
}

/// One Bernoulli trial per coordinate; certain coordinates consume no randomness.
pub fn draw_mask<T: Scalar, R: Rng + ?Sized>(dist: &SelectorDistribution<T>, rng: &mut R) -> CoordinateMask {
    if dist.is_full() {
        return CoordinateMask::full(dist.dim());
    }
    let mut indices = Vec::with_capacity(dist.expected_size().as_f64().ceil() as usize + 8);
    for (j, &p) in dist.p.iter().enumerate() {
        if p >= T::one() || rng.random::<f64>() < p.as_f64() {
            indices.push(j);
        }
    }
    CoordinateMask { indices }
}

/// `(1−√π)/(1+√π)`.
pub fn min_conditioning<T: Scalar>(pi: T) -> Result<T> {
    if !(pi > T::zero() && pi <= T::one()) {
        return Err(invalid(format!("π = {pi} outside (0, 1]")));
    }
    let s = pi.sqrt();
    Ok((T::one() - s) / (T::one() + s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn uniform_examples() {
        let u = uniform_distribution(3, 1.0).unwrap();
        assert_eq!(u.probs(), &[1.0, 1.0, 1.0]);
        assert_eq!((u.p_min(), u.p_max()), (1.0, 1.0));
        let q = uniform_distribution(2, 0.25).unwrap();
        assert_eq!((q.p_min(), q.p_max()), (0.25, 0.25));
        assert!(uniform_distribution(2, 0.0).is_err());
        assert!(uniform_distribution(2, 1.5).is_err());
    }

    #[test]
    fn adaptive_examples() {
        assert_eq!(adaptive_distribution(&[0.0, 0.0, 5.0], 1.0).unwrap().probs(), &[0.5, 0.5, 1.0]);
        assert_eq!(adaptive_distribution(&[1.0, -2.0], 0.1).unwrap().probs(), &[1.0, 1.0]);
        assert_eq!(adaptive_distribution(&[0.0; 4], 4.0).unwrap().probs(), &[1.0; 4]);
        assert!(adaptive_distribution(&[0.0; 4], 0.0).is_err());
    }

    #[test]
    fn min_conditioning_examples() {
        assert_eq!(min_conditioning(1.0).unwrap(), 0.0);
        assert!((min_conditioning(0.25f64).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let grid: Vec<f64> = (1..=100).map(|i| min_conditioning(i as f64 / 100.0).unwrap()).collect();
        assert!(grid.windows(2).all(|w| w[1] < w[0]));
        assert!(min_conditioning(0.0).is_err());
    }

    #[test]
    fn certain_and_near_impossible_masks() {
        let mut rng = stream(1, 0);
        let ones = SelectorDistribution::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(draw_mask(&ones, &mut rng).indices(), &[0, 1]);
        let tiny = SelectorDistribution::new(vec![1e-12; 5]).unwrap();
        let hits: usize = (0..100).map(|_| draw_mask(&tiny, &mut rng).len()).sum();
        assert_eq!(hits, 0);
    }

    #[test]
    fn uniform_frequency_matches_pi() {
        let pi = 0.3;
        let dist = uniform_distribution(4, pi).unwrap();
        let mut rng = stream(3, 9);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            for &j in draw_mask(&dist, &mut rng).indices() {
                counts[j] += 1;
            }
        }
        for c in counts {
            assert!((c as f64 / n as f64 - pi).abs() < 0.01);
        }
    }

    proptest! {
        #[test]
        fn adaptive_has_at_most_two_levels(
            x in proptest::collection::vec(prop_oneof![Just(0.0f64), -1.0f64..1.0], 1..50),
            c in 0.1f64..60.0,
        ) {
            let p = adaptive_distribution(&x, c).unwrap();
            let mut levels: Vec<f64> = p.probs().to_vec();
            levels.sort_by(f64::total_cmp);
            levels.dedup();
            prop_assert!(levels.len() <= 2);
            for (pj, xj) in p.probs().iter().zip(&x) {
                if *xj != 0.0 { prop_assert_eq!(*pj, 1.0); }
            }
            prop_assert_eq!(p.p_min(), adaptive_level(&x, c));
        }

        #[test]
        fn masks_sorted_unique(seed in 0u64..1000, pi in 0.01f64..1.0, d in 1usize..200) {
            let dist = uniform_distribution(d, pi).unwrap();
            let m = draw_mask(&dist, &mut stream(seed, 0));
            prop_assert!(m.indices().windows(2).all(|w| w[0] < w[1]));
            prop_assert!(m.indices().iter().all(|&j| j < d));
        }
    }
}
