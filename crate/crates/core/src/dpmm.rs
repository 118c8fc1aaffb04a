//! Dirichlet-process mixture of Poisson kernels with a Gamma base measure,
//! fitted by collapsed Gibbs sampling over cluster assignments.
//!
//! Two variants share the reassignment loop:
//! - a Gamma prior on β, refreshed after every sweep by the Escobar–West step;
//! - the Jeffreys prior with β integrated out, where the CRP weights are
//!   replaced by ratios of cached `A(n, n, ·)` / `A(n−1, n, ·)` integrals.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, EwensError, Result};
use crate::jeffreys::ACache;
use crate::posterior::{escobar_west_step, PriorSpec, BETA_FLOOR};
use crate::quadrature::QuadratureConfig;
use crate::special::{lgamma, log_sum_exp};

/// Gamma(shape, rate) base measure on the Poisson mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonGammaBase {
    pub shape: f64,
    pub rate: f64,
}

impl PoissonGammaBase {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        check_positive("shape", shape)?;
        check_positive("rate", rate)?;
        Ok(Self { shape, rate })
    }

    /// Base measure with the given mean and variance.
    pub fn from_moments(mean: f64, variance: f64) -> Result<Self> {
        check_positive("mean", mean)?;
        check_positive("variance", variance)?;
        Self::new(mean * mean / variance, mean / variance)
    }
}

/// Negative-binomial predictive `ln ∫ Poisson(y|ϑ) Gamma(ϑ | a, b) dϑ`.
fn log_negbin(y: u64, a: f64, b: f64) -> f64 {
    let yf = y as f64;
    lgamma(a + yf) - lgamma(a) - lgamma(yf + 1.0) + a * (b / (b + 1.0)).ln() - yf * (b + 1.0).ln()
}

/// Prior predictive of one observation under the base measure.
pub fn log_marginal_new(y: u64, base: &PoissonGammaBase) -> Result<f64> {
    check_positive("shape", base.shape)?;
    check_positive("rate", base.rate)?;
    Ok(log_negbin(y, base.shape, base.rate))
}

/// Posterior predictive of `y` given a cluster of `count` observations
/// summing to `sum`.
pub fn log_marginal_existing(y: u64, count: usize, sum: u64, base: &PoissonGammaBase) -> Result<f64> {
    check_positive("shape", base.shape)?;
    check_positive("rate", base.rate)?;
    Ok(log_negbin(
        y,
        base.shape + sum as f64,
        base.rate + count as f64,
    ))
}

/// Cluster assignments with per-cluster sufficient statistics.
///
/// Labels are contiguous `0..K`. `beta` is present only for the Gamma-prior
/// sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpmmState {
    labels: Vec<usize>,
    counts: Vec<usize>,
    sums: Vec<u64>,
    beta: Option<f64>,
}

impl DpmmState {
    /// Every observation in one cluster.
    pub fn single_cluster(data: &[u64], beta: Option<f64>) -> Result<Self> {
        Self::from_labels(&vec![0; data.len()], data, beta)
    }

    /// Builds a state from arbitrary labels, compacting them to `0..K` in
    /// order of first appearance.
    pub fn from_labels(labels: &[usize], data: &[u64], beta: Option<f64>) -> Result<Self> {
        if labels.len() != data.len() {
            return Err(EwensError::Config(format!(
                "{} labels for {} observations",
                labels.len(),
                data.len()
            )));
        }
        if data.is_empty() {
            return Err(EwensError::Config("no observations".into()));
        }
        if let Some(b) = beta {
            check_positive("beta", b)?;
        }
        let mut state = Self {
            labels: labels.to_vec(),
            counts: Vec::new(),
            sums: Vec::new(),
            beta,
        };
        state.canonicalize(data);
        Ok(state)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn sums(&self) -> &[u64] {
        &self.sums
    }

    pub fn beta(&self) -> Option<f64> {
        self.beta
    }

    /// Number of occupied clusters.
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    /// Relabels clusters in order of first appearance and rebuilds the
    /// sufficient statistics from scratch.
    pub fn canonicalize(&mut self, data: &[u64]) {
        let mut map: Vec<Option<usize>> = Vec::new();
        let mut next = 0usize;
        self.counts.clear();
        self.sums.clear();
        for (l, &y) in self.labels.iter_mut().zip(data) {
            if *l >= map.len() {
                map.resize(*l + 1, None);
            }
            let new = *map[*l].get_or_insert_with(|| {
                next += 1;
                next - 1
            });
            *l = new;
            if new == self.counts.len() {
                self.counts.push(0);
                self.sums.push(0);
            }
            self.counts[new] += 1;
            self.sums[new] += y;
        }
    }

    /// Checks the sufficient statistics against a recomputation from scratch.
    pub fn check_consistency(&self, data: &[u64]) -> Result<()> {
        let k = self.k();
        let mut counts = vec![0usize; k];
        let mut sums = vec![0u64; k];
        for (&l, &y) in self.labels.iter().zip(data) {
            if l >= k {
                return Err(EwensError::InvalidPartition(format!(
                    "label {l} outside 0..{k}"
                )));
            }
            counts[l] += 1;
            sums[l] += y;
        }
        if counts != self.counts || sums != self.sums || counts.contains(&0) {
            return Err(EwensError::InvalidPartition(
                "sufficient statistics out of sync with labels".into(),
            ));
        }
        Ok(())
    }

    fn remove(&mut self, i: usize, y: u64) {
        let c = self.labels[i];
        self.counts[c] -= 1;
        self.sums[c] -= y;
        if self.counts[c] == 0 {
            self.counts.remove(c);
            self.sums.remove(c);
            for l in self.labels.iter_mut() {
                if *l > c && *l != usize::MAX {
                    *l -= 1;
                }
            }
        }
        self.labels[i] = usize::MAX;
    }

    fn insert(&mut self, i: usize, y: u64, c: usize) {
        if c == self.counts.len() {
            self.counts.push(0);
            self.sums.push(0);
        }
        self.counts[c] += 1;
        self.sums[c] += y;
        self.labels[i] = c;
    }
}

/// Draws an index from unnormalized log weights, returning the index.
fn sample_log_weights<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> Result<usize> {
    let norm = log_sum_exp(log_w);
    if !norm.is_finite() || log_w.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(EwensError::Undefined(format!(
            "reassignment weights are not finite: {log_w:?}"
        )));
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, w) in log_w.iter().enumerate() {
        acc += (w - norm).exp();
        if u < acc {
            return Ok(j);
        }
    }
    Ok(log_w.len() - 1)
}

/// Reassigns every observation in turn. `cluster_log_weights(K⁻)` returns
/// the log prior weight multiplying `m_k⁻` for existing clusters and the
/// log weight of opening a new one.
fn sweep<R, W>(
    state: &mut DpmmState,
    data: &[u64],
    base: &PoissonGammaBase,
    rng: &mut R,
    mut cluster_log_weights: W,
) -> Result<()>
where
    R: Rng + ?Sized,
    W: FnMut(usize) -> Result<(f64, f64)>,
{
    if state.labels.len() != data.len() {
        return Err(EwensError::Config("state and data lengths differ".into()));
    }
    state.canonicalize(data);
    let mut log_w = Vec::with_capacity(state.k() + 1);
    let log_new_pred: Vec<f64> = data.iter().map(|&y| log_negbin(y, base.shape, base.rate)).collect();
    for (i, &y) in data.iter().enumerate() {
        state.remove(i, y);
        let k_minus = state.k();
        let (log_existing, log_new) = cluster_log_weights(k_minus)?;
        log_w.clear();
        for c in 0..k_minus {
            let m = state.counts[c];
            log_w.push(
                (m as f64).ln()
                    + log_existing
                    + log_negbin(y, base.shape + state.sums[c] as f64, base.rate + m as f64),
            );
        }
        log_w.push(log_new + log_new_pred[i]);
        let c = sample_log_weights(&log_w, rng)?;
        state.insert(i, y, c);
    }
    Ok(())
}

/// One Gibbs sweep under a Gamma(`shape`, `rate`) prior on β: reassignment
/// with CRP weights `m_k⁻` and β, followed by an Escobar–West refresh of β.
pub fn gibbs_sweep_gamma<R: Rng + ?Sized>(
    state: &mut DpmmState,
    data: &[u64],
    base: &PoissonGammaBase,
    shape: f64,
    rate: f64,
    rng: &mut R,
) -> Result<()> {
    check_positive("shape", shape)?;
    check_positive("rate", rate)?;
    let beta = state
        .beta
        .ok_or_else(|| EwensError::Config("Gamma-prior sweep needs a current β".into()))?;
    let ln_beta = beta.ln();
    sweep(state, data, base, rng, |_| Ok((0.0, ln_beta)))?;
    let k = state.k();
    if shape + k as f64 - 1.0 > 0.0 {
        let next = escobar_west_step(beta, data.len(), k, shape, rate, rng)?;
        state.beta = Some(next.max(BETA_FLOOR));
    }
    Ok(())
}

/// One Gibbs sweep with β integrated out under the Jeffreys prior:
/// existing cluster `k` has weight `m_k⁻ A(n,n,K⁻)/A(n−1,n,K⁻) p(y|y_k⁻)` and a
/// new cluster `A(n,n,K⁻+1)/A(n−1,n,K⁻) p(y)`.
pub fn gibbs_sweep_marginal_jeffreys<R: Rng + ?Sized>(
    state: &mut DpmmState,
    data: &[u64],
    base: &PoissonGammaBase,
    cache: &ACache,
    rng: &mut R,
) -> Result<()> {
    if cache.n() != data.len() {
        return Err(EwensError::Config(format!(
            "A-cache built for n = {} but data has {} observations",
            cache.n(),
            data.len()
        )));
    }
    sweep(state, data, base, rng, |k_minus| {
        let denom = cache.log_a_reduced(k_minus)?;
        Ok((
            cache.log_a_full(k_minus)? - denom,
            cache.log_a_full(k_minus + 1)? - denom,
        ))
    })
}

/// Empirical `Pr(K = k | data)` for `k = 1..=max(K)`, at index `k − 1`.
pub fn posterior_k_distribution(k_trace: &[usize]) -> Result<Vec<f64>> {
    const MIN_SWEEPS: usize = 1000;
    if k_trace.len() < MIN_SWEEPS {
        return Err(EwensError::InsufficientDraws {
            needed: MIN_SWEEPS,
            got: k_trace.len(),
        });
    }
    let kmax = *k_trace.iter().max().expect("non-empty trace");
    let mut pmf = vec![0.0; kmax];
    for &k in k_trace {
        if k == 0 {
            return Err(EwensError::InvalidPartition("K = 0 in trace".into()));
        }
        pmf[k - 1] += 1.0;
    }
    let total = k_trace.len() as f64;
    pmf.iter_mut().for_each(|p| *p /= total);
    Ok(pmf)
}

/// Settings for one DPMM chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpmmConfig {
    pub base: PoissonGammaBase,
    pub prior: PriorSpec,
    pub burn_in: usize,
    pub sweeps: usize,
    pub seed: u64,
    /// Starting β for the Gamma-prior variant.
    pub initial_beta: f64,
}

impl DpmmConfig {
    pub fn new(base: PoissonGammaBase, prior: PriorSpec, seed: u64) -> Self {
        Self {
            base,
            prior,
            burn_in: 2_000,
            sweeps: 10_000,
            seed,
            initial_beta: 1.0,
        }
    }
}

/// Trace of a DPMM chain: the number of clusters after every retained sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpmmRun {
    pub k_trace: Vec<usize>,
    pub final_state: DpmmState,
}

impl DpmmRun {
    pub fn posterior_k(&self) -> Result<Vec<f64>> {
        posterior_k_distribution(&self.k_trace)
    }

    pub fn mean_k(&self) -> f64 {
        self.k_trace.iter().sum::<usize>() as f64 / self.k_trace.len() as f64
    }
}

/// Runs a chain from the single-cluster start, calling `observe` on the state
/// after each retained sweep.
pub fn run_dpmm_with<F>(data: &[u64], cfg: &DpmmConfig, cache: Option<&ACache>, mut observe: F) -> Result<DpmmRun>
where
    F: FnMut(&DpmmState),
{
    if data.is_empty() {
        return Err(EwensError::Config("no observations".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut k_trace = Vec::with_capacity(cfg.sweeps);
    let owned_cache;
    let (mut state, jeffreys_cache) = match cfg.prior {
        PriorSpec::Gamma { .. } => (DpmmState::single_cluster(data, Some(cfg.initial_beta))?, None),
        PriorSpec::Jeffreys { n } => {
            cfg.prior.validate_for(data.len())?;
            let cache = match cache {
                Some(c) => c,
                None => {
                    owned_cache = ACache::build(n, &QuadratureConfig::default(), 0)?;
                    &owned_cache
                }
            };
            (DpmmState::single_cluster(data, None)?, Some(cache))
        }
    };
    for s in 0..cfg.burn_in + cfg.sweeps {
        match (cfg.prior, jeffreys_cache) {
            (PriorSpec::Gamma { shape, rate }, _) => {
                gibbs_sweep_gamma(&mut state, data, &cfg.base, shape, rate, &mut rng)?
            }
            (PriorSpec::Jeffreys { .. }, Some(cache)) => {
                gibbs_sweep_marginal_jeffreys(&mut state, data, &cfg.base, cache, &mut rng)?
            }
            (PriorSpec::Jeffreys { .. }, None) => unreachable!("cache resolved above"),
        }
        if s >= cfg.burn_in {
            k_trace.push(state.k());
            observe(&state);
        }
    }
    Ok(DpmmRun {
        k_trace,
        final_state: state,
    })
}

pub fn run_dpmm(data: &[u64], cfg: &DpmmConfig, cache: Option<&ACache>) -> Result<DpmmRun> {
    run_dpmm_with(data, cfg, cache, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_base() -> PoissonGammaBase {
        PoissonGammaBase::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn marginal_examples() {
        let b = unit_base();
        assert!((log_marginal_new(0, &b).unwrap() - 0.5f64.ln()).abs() < 1e-14);
        assert!((log_marginal_new(1, &b).unwrap() - 0.25f64.ln()).abs() < 1e-14);
        assert!((log_marginal_existing(0, 1, 0, &b).unwrap() - (2.0f64 / 3.0).ln()).abs() < 1e-14);
        assert_eq!(
            log_marginal_existing(7, 0, 0, &b).unwrap(),
            log_marginal_new(7, &b).unwrap()
        );
        let base = PoissonGammaBase::new(2.0, 0.1).unwrap();
        let total: f64 = (0..=500).map(|y| log_marginal_new(y, &base).unwrap().exp()).sum();
        assert!((total - 1.0).abs() < 1e-10);
        assert!(PoissonGammaBase::new(0.0, 1.0).is_err());
    }

    #[test]
    fn predictive_mean_increases_with_cluster_sum() {
        let b = PoissonGammaBase::new(2.0, 0.1).unwrap();
        let mean = |s: u64| -> f64 {
            (0..2000u64)
                .map(|y| y as f64 * log_marginal_existing(y, 3, s, &b).unwrap().exp())
                .sum()
        };
        let (m1, m2) = (mean(10), mean(40));
        assert!((m1 - 12.0 / 3.1).abs() < 1e-6);
        assert!(m2 > m1);
    }

    #[test]
    fn base_from_moments() {
        let b = PoissonGammaBase::from_moments(20.0, 200.0).unwrap();
        assert!((b.shape - 2.0).abs() < 1e-15 && (b.rate - 0.1).abs() < 1e-15);
    }

    #[test]
    fn canonical_labels_and_stats() {
        let data = [3, 5, 7, 11, 13];
        let s = DpmmState::from_labels(&[9, 4, 9, 2, 4], &data, None).unwrap();
        assert_eq!(s.labels(), &[0, 1, 0, 2, 1]);
        assert_eq!(s.counts(), &[2, 2, 1]);
        assert_eq!(s.sums(), &[10, 18, 11]);
        s.check_consistency(&data).unwrap();
        assert!(DpmmState::from_labels(&[0, 0], &data, None).is_err());
    }

    #[test]
    fn single_item_sweep_is_noop() {
        let data = [4u64];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = DpmmState::single_cluster(&data, Some(1.0)).unwrap();
        for _ in 0..50 {
            gibbs_sweep_gamma(&mut s, &data, &unit_base(), 1.0, 1.0, &mut rng).unwrap();
            assert_eq!(s.k(), 1);
        }
    }

    #[test]
    fn huge_beta_with_flat_likelihood_follows_crp() {
        // A very diffuse base makes predictive values nearly identical, so the
        // reassignment probabilities are the CRP weights; with β = 1e12 every
        // item opens its own cluster.
        let data = [0u64; 8];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = DpmmState::single_cluster(&data, Some(1e12)).unwrap();
        let base = PoissonGammaBase::new(1.0, 1.0).unwrap();
        let ln_beta = 1e12f64.ln();
        sweep(&mut s, &data, &base, &mut rng, |_| Ok((0.0, ln_beta))).unwrap();
        assert_eq!(s.k(), 8);
    }

    #[test]
    fn well_separated_pair_splits() {
        // Exact two-partition oracle: weight(split)/weight(join) with β = 1.
        let data = [0u64, 50];
        let base = PoissonGammaBase::new(1.0, 0.05).unwrap();
        let split = 1f64.ln() + log_marginal_new(0, &base).unwrap() + log_marginal_new(50, &base).unwrap();
        let join = log_marginal_new(0, &base).unwrap() + log_marginal_existing(50, 1, 0, &base).unwrap();
        let p_split = 1.0 / (1.0 + (join - split).exp());
        assert!(p_split > 0.95);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = DpmmState::single_cluster(&data, Some(1.0)).unwrap();
        let mut splits = 0;
        for _ in 0..2000 {
            sweep(&mut s, &data, &base, &mut rng, |_| Ok((0.0, 0.0))).unwrap();
            splits += usize::from(s.k() == 2);
        }
        assert!(splits as f64 / 2000.0 > 0.95);
    }

    #[test]
    fn stats_stay_consistent() {
        let data: Vec<u64> = vec![1, 40, 3, 22, 19, 0, 5, 60, 61, 2, 18, 17];
        let base = PoissonGammaBase::new(2.0, 0.1).unwrap();
        let cache = ACache::build(data.len(), &QuadratureConfig::default(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut a = DpmmState::single_cluster(&data, Some(1.0)).unwrap();
        let mut b = DpmmState::single_cluster(&data, None).unwrap();
        for _ in 0..300 {
            gibbs_sweep_gamma(&mut a, &data, &base, 0.001, 0.001, &mut rng).unwrap();
            a.check_consistency(&data).unwrap();
            gibbs_sweep_marginal_jeffreys(&mut b, &data, &base, &cache, &mut rng).unwrap();
            b.check_consistency(&data).unwrap();
        }
    }

    #[test]
    fn marginal_sweep_rejects_mismatched_cache() {
        let data = [1u64, 2, 3];
        let cache = ACache::build(4, &QuadratureConfig::default(), 1).unwrap();
        let mut s = DpmmState::single_cluster(&data, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(gibbs_sweep_marginal_jeffreys(&mut s, &data, &unit_base(), &cache, &mut rng).is_err());
    }

    #[test]
    fn posterior_k_needs_enough_sweeps() {
        assert!(posterior_k_distribution(&[1; 999]).is_err());
        let mut trace = vec![1; 600];
        trace.extend(vec![3; 400]);
        assert_eq!(posterior_k_distribution(&trace).unwrap(), vec![0.6, 0.0, 0.4]);
    }
}
