use crate::error::{Error, Result};

const PMF_TOLERANCE: f64 = 1e-9;

/// Distribution of the number of eCPRI segments offered in one grant cycle.
///
/// Stored densely: index `k` holds the probability of exactly `k` segments.
#[derive(Debug, Clone, PartialEq)]
pub struct SizePmf {
    probs: Vec<f64>,
    segment_bytes: u32,
}

impl SizePmf {
    pub fn new(mut probs: Vec<f64>, segment_bytes: u32) -> Result<Self> {
        if segment_bytes == 0 {
            return Err(Error::param("segment size must be > 0"));
        }
        if probs.is_empty() {
            return Err(Error::param("size pmf is empty"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0 + PMF_TOLERANCE) {
            return Err(Error::param("size pmf has a probability outside [0, 1]"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PMF_TOLERANCE {
            return Err(Error::param(format!("size pmf sums to {total}")));
        }
        while probs.len() > 1 && probs.last() == Some(&0.0) {
            probs.pop();
        }
        Ok(SizePmf {
            probs,
            segment_bytes,
        })
    }

    /// Builds a pmf from `(segments, probability)` pairs; repeated keys are merged.
    pub fn from_entries(
        entries: impl IntoIterator<Item = (usize, f64)>,
        segment_bytes: u32,
    ) -> Result<Self> {
        let mut probs = Vec::new();
        for (k, p) in entries {
            if probs.len() <= k {
                probs.resize(k + 1, 0.0);
            }
            probs[k] += p;
        }
        SizePmf::new(probs, segment_bytes)
    }

    /// All mass on `k` segments.
    pub fn point(k: usize, segment_bytes: u32) -> Result<Self> {
        SizePmf::from_entries([(k, 1.0)], segment_bytes)
    }

    pub fn segment_bytes(&self) -> u32 {
        self.segment_bytes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    /// Largest segment count with non-zero probability.
    pub fn max_segments(&self) -> usize {
        self.probs.len() - 1
    }

    /// Non-zero `(segments, probability)` pairs in ascending order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(k, p)| (k, *p))
    }

    pub fn mean(&self) -> f64 {
        self.entries().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.entries()
            .map(|(k, p)| {
                let d = k as f64 - mean;
                d * d * p
            })
            .sum()
    }
}

/// Distribution of the sum of two independent segment counts.
pub fn convolve(p: &SizePmf, q: &SizePmf) -> Result<SizePmf> {
    if p.segment_bytes != q.segment_bytes {
        return Err(Error::param(format!(
            "cannot convolve pmfs with segment sizes {} and {}",
            p.segment_bytes, q.segment_bytes
        )));
    }
    let mut out = vec![0.0; p.probs.len() + q.probs.len() - 1];
    for (i, &a) in p.probs.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (j, &b) in q.probs.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    Ok(SizePmf {
        probs: out,
        segment_bytes: p.segment_bytes,
    })
}

/// Aggregate per-cycle size of a slice: left fold of [`convolve`] over its RUs.
pub fn slice_aggregate_pmf(rus: &[SizePmf]) -> Result<SizePmf> {
    let (first, rest) = rus
        .split_first()
        .ok_or_else(|| Error::param("cannot aggregate an empty slice"))?;
    rest.iter().try_fold(first.clone(), |acc, p| convolve(&acc, p))
}

/// `base` convolved with itself `n` times (`n = 0` gives the point mass at zero).
pub(crate) fn convolve_power(base: &SizePmf, n: usize) -> Result<SizePmf> {
    let mut acc = SizePmf::point(0, base.segment_bytes)?;
    for _ in 0..n {
        acc = convolve(&acc, base)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pmf(probs: &[f64]) -> SizePmf {
        SizePmf::new(probs.to_vec(), 1500).unwrap()
    }

    #[test]
    fn identity_element() {
        let q = pmf(&[0.1, 0.2, 0.3, 0.4]);
        let delta = SizePmf::point(0, 1500).unwrap();
        assert_eq!(convolve(&delta, &q).unwrap(), q);
    }

    #[test]
    fn bernoulli_self_convolution() {
        let b = pmf(&[0.5, 0.5]);
        let c = convolve(&b, &b).unwrap();
        assert_eq!(c.probs(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn segment_mismatch_is_rejected() {
        let a = SizePmf::point(1, 1500).unwrap();
        let b = SizePmf::point(1, 1000).unwrap();
        assert!(matches!(convolve(&a, &b), Err(Error::Parameter(_))));
    }

    #[test]
    fn three_uniforms_against_monte_carlo() {
        let u = pmf(&[0.25; 4]);
        let agg = slice_aggregate_pmf(&[u.clone(), u.clone(), u]).unwrap();
        let n = 1_000_000;
        let mut counts = [0u64; 10];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..n {
            let s: usize = (0..3).map(|_| rng.random_range(0..4usize)).sum();
            counts[s] += 1;
        }
        for (k, &c) in counts.iter().enumerate() {
            let p = agg.prob(k);
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            let freq = c as f64 / n as f64;
            assert!(
                (freq - p).abs() <= 3.0 * sigma + 1e-12,
                "k={k}: mc {freq} vs pmf {p} (3σ = {})",
                3.0 * sigma
            );
        }
    }

    #[test]
    fn aggregate_base_cases() {
        let p = pmf(&[0.3, 0.7]);
        assert_eq!(slice_aggregate_pmf(std::slice::from_ref(&p)).unwrap(), p);
        let det = SizePmf::point(7, 1500).unwrap();
        let agg = slice_aggregate_pmf(&vec![det; 5]).unwrap();
        assert_eq!(agg.entries().collect::<Vec<_>>(), vec![(35, 1.0)]);
        assert!(slice_aggregate_pmf(&[]).is_err());
    }

    #[test]
    fn heterogeneous_mean_additivity() {
        let rus = [
            pmf(&[0.0, 0.2, 0.8]),
            pmf(&[0.5, 0.0, 0.0, 0.5]),
            SizePmf::from_entries([(15, 0.1), (36, 0.6), (57, 0.3)], 1500).unwrap(),
            SizePmf::from_entries([(3, 0.4), (12, 0.35), (21, 0.2), (31, 0.05)], 1500).unwrap(),
        ];
        let agg = slice_aggregate_pmf(&rus).unwrap();
        let mean_sum: f64 = rus.iter().map(SizePmf::mean).sum();
        let var_sum: f64 = rus.iter().map(SizePmf::variance).sum();
        assert_abs_diff_eq!(agg.mean(), mean_sum, epsilon = 1e-9);
        assert_abs_diff_eq!(agg.variance(), var_sum, epsilon = 1e-9);
    }

    #[test]
    fn validation() {
        assert!(SizePmf::new(vec![], 1500).is_err());
        assert!(SizePmf::new(vec![0.5, 0.4], 1500).is_err());
        assert!(SizePmf::new(vec![-0.1, 1.1], 1500).is_err());
        assert!(SizePmf::new(vec![1.0], 0).is_err());
        let merged = SizePmf::from_entries([(2, 0.25), (2, 0.25), (0, 0.5)], 1500).unwrap();
        assert_eq!(merged.probs(), &[0.5, 0.0, 0.5]);
    }

    #[test]
    fn convolve_power_matches_repeated_fold() {
        let p = pmf(&[0.1, 0.6, 0.3]);
        let folded = slice_aggregate_pmf(&vec![p.clone(); 4]).unwrap();
        let pow = convolve_power(&p, 4).unwrap();
        for (a, b) in folded.probs().iter().zip(pow.probs()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }
}
