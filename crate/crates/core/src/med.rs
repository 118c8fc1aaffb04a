//! The Multivariate Ewens Distribution: probabilities of partitions, the
//! Chinese-restaurant predictive rule, forward sampling and the moments and
//! distribution of the number of clusters `K`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, EwensError, Result};
use crate::special::{lgamma, ln_rising, psi1, stirling_log_row_cached};

/// A partition of `n` items, stored as cluster sizes sorted descending.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    n: usize,
    sizes: Vec<usize>,
}

impl Partition {
    /// Builds a partition from cluster sizes in any order.
    pub fn new(mut sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(EwensError::InvalidPartition(
                "a non-empty partition needs at least one cluster".into(),
            ));
        }
        if sizes.contains(&0) {
            return Err(EwensError::InvalidPartition(
                "cluster sizes must be >= 1".into(),
            ));
        }
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        let n = sizes.iter().sum();
        Ok(Self { n, sizes })
    }

    /// The partition of zero items (the restaurant before anyone arrives).
    pub fn empty() -> Self {
        Self {
            n: 0,
            sizes: Vec::new(),
        }
    }

    /// Builds a partition from arbitrary cluster labels, one per item.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        if labels.is_empty() {
            return Ok(Self::empty());
        }
        let mut counts = std::collections::HashMap::new();
        for &l in labels {
            *counts.entry(l).or_insert(0usize) += 1;
        }
        Self::new(counts.into_values().collect())
    }

    /// Builds a partition from multiplicities: `r[j - 1]` clusters of size `j`.
    pub fn from_multiplicities(r: &[usize]) -> Result<Self> {
        let sizes: Vec<usize> = r
            .iter()
            .enumerate()
            .flat_map(|(j, &count)| std::iter::repeat_n(j + 1, count))
            .collect();
        Self::new(sizes)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of clusters `K`.
    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// `r_j = #{k : m_k = j}` for `j = 1..=n`, at index `j - 1`.
    pub fn multiplicities(&self) -> Vec<usize> {
        let mut r = vec![0; self.n];
        for &m in &self.sizes {
            r[m - 1] += 1;
        }
        r
    }

    /// `Σ_k ln Γ(m_k)`, the β-free part of the labelled-partition probability.
    pub fn log_size_weight(&self) -> f64 {
        self.sizes.iter().map(|&m| lgamma(m as f64)).sum()
    }
}

/// `ln p(ξ₁..ξₙ | β) = ln Γ(β) − ln Γ(β+n) + K ln β + Σ ln Γ(m_k)`.
///
/// This is the probability of one particular labelled assignment with the
/// given cluster sizes.
pub fn log_pmf_sizes(p: &Partition, beta: f64) -> Result<f64> {
    check_positive("beta", beta)?;
    Ok(-ln_rising(beta, p.n()) + p.k() as f64 * beta.ln() + p.log_size_weight())
}

/// `ln p(K, r₁..rₙ | β)`, the probability of the multiplicity configuration.
pub fn log_pmf_config(n: usize, r: &[usize], beta: f64) -> Result<f64> {
    check_positive("beta", beta)?;
    let mut k = 0usize;
    let mut total = 0usize;
    for (j, &rj) in r.iter().enumerate() {
        k += rj;
        total += (j + 1) * rj;
    }
    if total != n || k == 0 && n > 0 {
        return Err(EwensError::InvalidPartition(format!(
            "multiplicities cover {total} items, expected {n}"
        )));
    }
    let mut lp = lgamma(n as f64 + 1.0) - ln_rising(beta, n) + k as f64 * beta.ln();
    for (j, &rj) in r.iter().enumerate() {
        if rj > 0 {
            lp -= rj as f64 * ((j + 1) as f64).ln() + lgamma(rj as f64 + 1.0);
        }
    }
    Ok(lp)
}

/// Chinese-restaurant predictive: probabilities that item `n + 1` joins each
/// existing cluster (in `p.sizes()` order) followed by the new-cluster mass.
pub fn crp_predictive(p: &Partition, beta: f64) -> Result<Vec<f64>> {
    check_positive("beta", beta)?;
    let denom = beta + p.n() as f64;
    let mut out: Vec<f64> = p.sizes().iter().map(|&m| m as f64 / denom).collect();
    out.push(beta / denom);
    Ok(out)
}

/// Item-level cluster labels drawn sequentially from the Chinese restaurant
/// process; labels are `0..K` in order of first appearance.
pub fn sample_labels<R: Rng + ?Sized>(n: usize, beta: f64, rng: &mut R) -> Result<Vec<usize>> {
    check_positive("beta", beta)?;
    if n == 0 {
        return Err(EwensError::Domain {
            name: "n",
            value: 0.0,
            reason: "need at least one item",
        });
    }
    let mut labels = Vec::with_capacity(n);
    let mut k = 0usize;
    for i in 0..n {
        // Join an existing cluster with probability i/(β+i), choosing it by
        // copying the label of a uniformly chosen earlier item.
        let u: f64 = rng.random();
        if i > 0 && u * (beta + i as f64) < i as f64 {
            let j = rng.random_range(0..i);
            labels.push(labels[j]);
        } else {
            labels.push(k);
            k += 1;
        }
    }
    Ok(labels)
}

/// Draws a partition of `n` items from the Ewens distribution with parameter `beta`.
pub fn sample_partition<R: Rng + ?Sized>(n: usize, beta: f64, rng: &mut R) -> Result<Partition> {
    let labels = sample_labels(n, beta, rng)?;
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let mut sizes = vec![0usize; k];
    for l in labels {
        sizes[l] += 1;
    }
    Partition::new(sizes)
}

/// `E[K | β, n] = Σ_{j<n} β/(β+j)`.
pub fn expected_k(beta: f64, n: usize) -> Result<f64> {
    check_positive("beta", beta)?;
    Ok((0..n).map(|j| beta / (beta + j as f64)).sum())
}

/// `Var[K | β, n] = Σ_{j<n} βj/(β+j)²`.
pub fn variance_k(beta: f64, n: usize) -> Result<f64> {
    check_positive("beta", beta)?;
    Ok((1..n)
        .map(|j| {
            let j = j as f64;
            beta * j / ((beta + j) * (beta + j))
        })
        .sum())
}

/// `ln Pr(K = k | β, n) = ln|s(n,k)| + k ln β − ln(β)_n`.
pub fn log_prob_k(n: usize, k: usize, beta: f64) -> Result<f64> {
    check_positive("beta", beta)?;
    if n == 0 || k == 0 || k > n {
        return Err(EwensError::Domain {
            name: "k",
            value: k as f64,
            reason: "need 1 <= k <= n",
        });
    }
    let row = stirling_log_row_cached(n)?;
    Ok(row.log_abs(k) + k as f64 * beta.ln() - ln_rising(beta, n))
}

/// Expected Fisher information `I(β) = (1/β) Σ_{j=1}^{n-1} j/(β+j)²`.
pub fn fisher_information(beta: f64, n: usize) -> Result<f64> {
    check_positive("beta", beta)?;
    Ok(weighted_inverse_power_sum(beta, n, 2) / beta)
}

/// Observed information `−d²/dβ² ln p = ψ′(β+n) − ψ′(β) + K/β²` for a
/// partition of `n` items with `k` clusters.
pub fn observed_information(beta: f64, n: usize, k: usize) -> Result<f64> {
    check_positive("beta", beta)?;
    Ok(psi1(beta + n as f64) - psi1(beta) + k as f64 / (beta * beta))
}

/// `Σ_{j=1}^{n-1} j / (β+j)^p`.
pub(crate) fn weighted_inverse_power_sum(beta: f64, n: usize, p: i32) -> f64 {
    (1..n)
        .map(|j| {
            let j = j as f64;
            j / (beta + j).powi(p)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn pmf_sizes_examples() {
        let p = Partition::new(vec![3]).unwrap();
        assert!(close(log_pmf_sizes(&p, 1.0).unwrap(), (1.0f64 / 3.0).ln(), 1e-12));
        let single = Partition::new(vec![1]).unwrap();
        for beta in [0.01, 1.0, 250.0] {
            assert!(close(log_pmf_sizes(&single, beta).unwrap(), 0.0, 1e-12));
        }
        let pair = Partition::new(vec![1, 1]).unwrap();
        assert!(close(log_pmf_sizes(&pair, 2.0).unwrap(), (2.0f64 / 3.0).ln(), 1e-12));
        assert!(log_pmf_sizes(&pair, 0.0).is_err());
    }

    #[test]
    fn pmf_config_examples() {
        let half = 0.5f64.ln();
        assert!(close(log_pmf_config(2, &[2, 0], 1.0).unwrap(), half, 1e-12));
        assert!(close(log_pmf_config(2, &[0, 1], 1.0).unwrap(), half, 1e-12));
        assert!(close(log_pmf_config(3, &[0, 0, 1], 1.0).unwrap(), (1.0f64 / 3.0).ln(), 1e-12));
        assert!(matches!(
            log_pmf_config(3, &[1, 0, 0], 1.0),
            Err(EwensError::InvalidPartition(_))
        ));
    }

    #[test]
    fn crp_examples() {
        let p = Partition::new(vec![2]).unwrap();
        let w = crp_predictive(&p, 1.0).unwrap();
        assert!(close(w[0], 2.0 / 3.0, 1e-15) && close(w[1], 1.0 / 3.0, 1e-15));
        assert_eq!(crp_predictive(&Partition::empty(), 5.0).unwrap(), vec![1.0]);
        let p = Partition::new(vec![1, 2]).unwrap();
        let w = crp_predictive(&p, 2.0).unwrap();
        for (got, want) in w.iter().zip([0.4, 0.2, 0.4]) {
            assert!(close(*got, want, 1e-15));
        }
        assert!(crp_predictive(&p, -1.0).is_err());
    }

    #[test]
    fn invalid_partitions() {
        assert!(Partition::new(vec![]).is_err());
        assert!(Partition::new(vec![2, 0]).is_err());
        let p = Partition::from_labels(&[7, 7, 3, 9, 3, 7]).unwrap();
        assert_eq!(p.sizes(), &[3, 2, 1]);
        assert_eq!(p.multiplicities(), vec![1, 1, 1, 0, 0, 0]);
        assert_eq!(Partition::from_multiplicities(&[1, 1, 1]).unwrap(), p);
    }

    #[test]
    fn degenerate_sampling_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = sample_partition(10, 1e-12, &mut rng).unwrap();
        assert_eq!(p.sizes(), &[10]);
        let p = sample_partition(10, 1e12, &mut rng).unwrap();
        assert_eq!(p.k(), 10);
        assert!(sample_partition(0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn sampling_frequency_of_single_cluster() {
        // Pr(K = 1 | β = 1, n = 4) = |s(4,1)| / 4! = 1/4
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 100_000;
        let hits = (0..draws)
            .filter(|_| sample_partition(4, 1.0, &mut rng).unwrap().k() == 1)
            .count();
        let p_hat = hits as f64 / draws as f64;
        let sd = (0.25f64 * 0.75 / draws as f64).sqrt();
        assert!((p_hat - 0.25).abs() < 3.0 * sd, "p_hat = {p_hat}");
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let a = sample_partition(200, 3.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_partition(200, 3.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn moments_of_k() {
        assert!(close(expected_k(1.0, 3).unwrap(), 11.0 / 6.0, 1e-15));
        for beta in [0.2, 1.0, 30.0] {
            assert!(close(expected_k(beta, 1).unwrap(), 1.0, 1e-15));
            assert_eq!(variance_k(beta, 1).unwrap(), 0.0);
        }
        assert!(close(variance_k(1.0, 2).unwrap(), 0.25, 1e-15));
    }

    #[test]
    fn prob_k_examples() {
        assert!(close(log_prob_k(2, 1, 1.0).unwrap(), 0.5f64.ln(), 1e-12));
        assert!(close(log_prob_k(3, 3, 1.0).unwrap(), (1.0f64 / 6.0).ln(), 1e-12));
        let total: f64 = (1..=5).map(|k| log_prob_k(5, k, 0.7).unwrap().exp()).sum();
        assert!(close(total, 1.0, 1e-12));
        assert!(log_prob_k(5, 0, 1.0).is_err());
        assert!(log_prob_k(5, 6, 1.0).is_err());
    }

    #[test]
    fn prob_k_matches_moments() {
        let (n, beta) = (60, 2.5);
        let pk: Vec<f64> = (1..=n).map(|k| log_prob_k(n, k, beta).unwrap().exp()).collect();
        let mean: f64 = pk.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
        let m2: f64 = pk.iter().enumerate().map(|(i, p)| ((i + 1) as f64).powi(2) * p).sum();
        assert!(close(mean, expected_k(beta, n).unwrap(), 1e-10));
        assert!(close(m2 - mean * mean, variance_k(beta, n).unwrap(), 1e-9));
    }

    #[test]
    fn fisher_information_identity() {
        // I(β) = ψ′(β+n) − ψ′(β) + E[K]/β²
        for &(n, beta) in &[(2usize, 0.5), (5, 1.0), (20, 3.0), (300, 40.0)] {
            let via_trigamma = psi1(beta + n as f64) - psi1(beta) + expected_k(beta, n).unwrap() / (beta * beta);
            let direct = fisher_information(beta, n).unwrap();
            assert!(((via_trigamma - direct) / direct).abs() < 1e-9, "n={n} beta={beta}");
        }
    }
}
