//! Posterior inference for β given the number of clusters `K` (or a full
//! partition): random-walk Metropolis on `ln β`, the Escobar–West augmented
//! Gibbs sampler for Gamma priors, and a deterministic quadrature summary
//! used both as an oracle and as the fast path of the coverage harness.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, EwensError, Result};
use crate::jeffreys::{log_density_raw, log_normalizing_constant};
use crate::med::{log_pmf_sizes, Partition};
use crate::quadrature::{LogIntegrand, QuadratureConfig};
use crate::special::ln_rising;

/// Smallest β a sampler will hold.
pub const BETA_FLOOR: f64 = 1e-300;

/// Minimum retained draws for [`credible_interval`].
pub const MIN_INTERVAL_DRAWS: usize = 1000;

/// Number of batches for batch-means standard errors.
pub const DEFAULT_BATCHES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    /// Jeffreys prior indexed by the sample size.
    Jeffreys { n: usize },
    /// Gamma prior with shape `a` and rate `b`.
    Gamma { shape: f64, rate: f64 },
}

impl PriorSpec {
    pub fn jeffreys(n: usize) -> Self {
        Self::Jeffreys { n }
    }

    pub fn gamma(shape: f64, rate: f64) -> Self {
        Self::Gamma { shape, rate }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Jeffreys { n } if n < 2 => Err(EwensError::Domain {
                name: "n",
                value: n as f64,
                reason: "the Jeffreys prior needs n >= 2",
            }),
            Self::Jeffreys { .. } => Ok(()),
            Self::Gamma { shape, rate } => {
                check_positive("shape", shape)?;
                check_positive("rate", rate)?;
                Ok(())
            }
        }
    }

    /// Checks that a Jeffreys prior is indexed by the observed sample size.
    pub fn validate_for(&self, n: usize) -> Result<()> {
        self.validate()?;
        if let Self::Jeffreys { n: m } = *self {
            if m != n {
                return Err(EwensError::Config(format!(
                    "Jeffreys prior indexed by {m} applied to a sample of {n} items"
                )));
            }
        }
        Ok(())
    }

    /// Unnormalized log density; unchecked.
    pub fn log_density_unnorm(&self, beta: f64) -> f64 {
        match *self {
            Self::Jeffreys { n } => log_density_raw(beta, n),
            Self::Gamma { shape, rate } => (shape - 1.0) * beta.ln() - rate * beta,
        }
    }

    /// Normalized log density.
    pub fn log_density(&self, beta: f64) -> Result<f64> {
        check_positive("beta", beta)?;
        self.validate()?;
        Ok(match *self {
            Self::Jeffreys { n } => {
                log_density_raw(beta, n) - log_normalizing_constant(n, &QuadratureConfig::default())?
            }
            Self::Gamma { shape, rate } => {
                shape * rate.ln() - crate::special::lgamma(shape) + self.log_density_unnorm(beta)
            }
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Jeffreys { .. } => "jeffreys",
            Self::Gamma { .. } => "gamma",
        }
    }
}

fn check_counts(n: usize, k: usize) -> Result<()> {
    if n == 0 || k == 0 || k > n {
        return Err(EwensError::Domain {
            name: "k",
            value: k as f64,
            reason: "need 1 <= k <= n",
        });
    }
    Ok(())
}

/// Unnormalized `ln p(β | K = k)`: `k ln β − ln(β)_n + ln prior(β)`.
pub fn log_posterior_given_k(beta: f64, n: usize, k: usize, prior: &PriorSpec) -> Result<f64> {
    check_positive("beta", beta)?;
    check_counts(n, k)?;
    prior.validate_for(n)?;
    Ok(log_posterior_raw(beta, n, k, prior))
}

fn log_posterior_raw(beta: f64, n: usize, k: usize, prior: &PriorSpec) -> f64 {
    k as f64 * beta.ln() - ln_rising(beta, n) + prior.log_density_unnorm(beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCMCConfig {
    /// Retained draws after burn-in.
    pub iterations: usize,
    pub burn_in: usize,
    /// Standard deviation of the Gaussian step on `ln β`.
    pub proposal_sd: f64,
    pub seed: u64,
}

impl MCMCConfig {
    /// Default run length with the proposal scale chosen by sample size:
    /// `τ² = 1` up to 300 items, `τ² = 0.05` beyond.
    pub fn for_sample_size(n: usize, seed: u64) -> Self {
        Self {
            iterations: 100_000,
            burn_in: 5_000,
            proposal_sd: default_proposal_sd(n),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(EwensError::Config(format!(
                "iterations ({}) must exceed burn_in ({})",
                self.iterations, self.burn_in
            )));
        }
        check_positive("proposal_sd", self.proposal_sd)?;
        Ok(())
    }
}

pub fn default_proposal_sd(n: usize) -> f64 {
    if n <= 300 {
        1.0
    } else {
        0.05f64.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub draws: Vec<f64>,
    pub accepted: usize,
    pub acceptance_rate: f64,
    pub config: MCMCConfig,
}

impl Chain {
    pub fn mean(&self) -> f64 {
        mean(&self.draws)
    }

    /// Batch-means Monte Carlo standard error of the mean.
    pub fn mc_standard_error(&self) -> f64 {
        batch_means_se(&self.draws, DEFAULT_BATCHES)
    }

    /// Warning text when the acceptance rate falls outside `[0.1, 0.9]`.
    pub fn diagnostic(&self) -> Option<String> {
        if self.acceptance_rate < 0.1 {
            Some(format!(
                "acceptance rate {:.3} is below 0.1; consider a smaller proposal_sd",
                self.acceptance_rate
            ))
        } else if self.acceptance_rate > 0.9 {
            Some(format!(
                "acceptance rate {:.3} is above 0.9; consider a larger proposal_sd",
                self.acceptance_rate
            ))
        } else {
            None
        }
    }
}

/// Posterior mode of `ln β` by grid scan and golden-section polish; used to
/// start the samplers in the bulk of the posterior.
fn posterior_mode_log(n: usize, k: usize, prior: &PriorSpec) -> f64 {
    let f = |t: f64| log_posterior_raw(t.exp(), n, k, prior) + t;
    let (lo, hi, step) = (-25.0, 25.0, 0.05);
    let mut best = (lo, f64::NEG_INFINITY);
    let mut t = lo;
    while t <= hi {
        let v = f(t);
        if v > best.1 {
            best = (t, v);
        }
        t += step;
    }
    let (mut a, mut b) = (best.0 - step, best.0 + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

/// Random-walk Metropolis on `θ = ln β` for an arbitrary log target in β.
///
/// The Jacobian of the log transform enters the acceptance ratio as
/// `θ′ − θ`. `init_log_beta` is the starting value of θ.
pub fn rw_mh_log_target<F>(log_target: F, init_log_beta: f64, cfg: &MCMCConfig) -> Result<Chain>
where
    F: Fn(f64) -> f64,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let target = |t: f64| log_target(t.exp()) + t;
    let mut theta = init_log_beta;
    let mut current = target(theta);
    if !current.is_finite() {
        return Err(EwensError::Undefined(format!(
            "log target is not finite at the starting point β = {}",
            theta.exp()
        )));
    }
    let mut draws = Vec::with_capacity(cfg.iterations);
    let mut accepted = 0usize;
    for step in 0..cfg.burn_in + cfg.iterations {
        let z: f64 = StandardNormal.sample(&mut rng);
        let proposal = theta + cfg.proposal_sd * z;
        let candidate = target(proposal);
        let u: f64 = rng.random();
        let ok = candidate.is_finite() && u.ln() < candidate - current;
        if ok {
            theta = proposal;
            current = candidate;
        }
        if step >= cfg.burn_in {
            accepted += usize::from(ok);
            draws.push(theta.exp().max(BETA_FLOOR));
        }
    }
    Ok(Chain {
        acceptance_rate: accepted as f64 / cfg.iterations as f64,
        draws,
        accepted,
        config: *cfg,
    })
}

/// Random-walk Metropolis for β given `K = k` out of `n` items.
pub fn rw_mh_sample(n: usize, k: usize, prior: &PriorSpec, cfg: &MCMCConfig) -> Result<Chain> {
    check_counts(n, k)?;
    prior.validate_for(n)?;
    let init = posterior_mode_log(n, k, prior);
    rw_mh_log_target(|b| log_posterior_raw(b, n, k, prior), init, cfg)
}

/// Random-walk Metropolis for β given the full partition. The likelihood
/// differs from the `K`-only version by a β-free constant.
pub fn rw_mh_sample_partition(p: &Partition, prior: &PriorSpec, cfg: &MCMCConfig) -> Result<Chain> {
    check_counts(p.n(), p.k())?;
    prior.validate_for(p.n())?;
    let init = posterior_mode_log(p.n(), p.k(), prior);
    rw_mh_log_target(
        |b| log_pmf_sizes(p, b).unwrap_or(f64::NEG_INFINITY) + prior.log_density_unnorm(b),
        init,
        cfg,
    )
}

/// One Escobar–West update of β given `K = k` under a Gamma(a, b) prior.
pub fn escobar_west_step<R: Rng + ?Sized>(
    beta: f64,
    n: usize,
    k: usize,
    shape: f64,
    rate: f64,
    rng: &mut R,
) -> Result<f64> {
    let eta = Beta::new(beta + 1.0, n as f64)
        .map_err(|e| EwensError::Config(format!("latent Beta draw: {e}")))?
        .sample(rng)
        .max(f64::MIN_POSITIVE);
    let post_rate = rate - eta.ln();
    let kf = k as f64;
    // odds w/(1−w) = (a+k−1) / (n (b − ln η)), evaluated in log space
    let log_odds = (shape + kf - 1.0).ln() - (n as f64).ln() - post_rate.ln();
    let w = 1.0 / (1.0 + (-log_odds).exp());
    let post_shape = if rng.random::<f64>() < w {
        shape + kf
    } else {
        shape + kf - 1.0
    };
    let draw = Gamma::new(post_shape, 1.0 / post_rate)
        .map_err(|e| EwensError::Config(format!("Gamma draw: {e}")))?
        .sample(rng);
    Ok(draw.max(BETA_FLOOR))
}

/// Escobar–West augmented Gibbs sampler for β under a Gamma(a, b) prior.
pub fn escobar_west_sample(n: usize, k: usize, shape: f64, rate: f64, cfg: &MCMCConfig) -> Result<Chain> {
    check_counts(n, k)?;
    let prior = PriorSpec::gamma(shape, rate);
    prior.validate()?;
    if shape + k as f64 - 1.0 <= 0.0 {
        return Err(EwensError::Domain {
            name: "shape",
            value: shape,
            reason: "need a + k - 1 > 0",
        });
    }
    if cfg.iterations <= cfg.burn_in {
        return Err(EwensError::Config(format!(
            "iterations ({}) must exceed burn_in ({})",
            cfg.iterations, cfg.burn_in
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut beta = posterior_mode_log(n, k, &prior).exp().max(BETA_FLOOR);
    let mut draws = Vec::with_capacity(cfg.iterations);
    for step in 0..cfg.burn_in + cfg.iterations {
        beta = escobar_west_step(beta, n, k, shape, rate, &mut rng)?;
        if step >= cfg.burn_in {
            draws.push(beta);
        }
    }
    Ok(Chain {
        accepted: cfg.iterations,
        acceptance_rate: 1.0,
        draws,
        config: *cfg,
    })
}

/// Default sampler per prior: random-walk Metropolis for
/// Jeffreys, Escobar–West for Gamma.
pub fn sample_posterior(n: usize, k: usize, prior: &PriorSpec, cfg: &MCMCConfig) -> Result<Chain> {
    match *prior {
        PriorSpec::Jeffreys { .. } => rw_mh_sample(n, k, prior, cfg),
        PriorSpec::Gamma { shape, rate } => escobar_west_sample(n, k, shape, rate, cfg),
    }
}

/// Posterior point and interval summaries for β and `η = β/(β+n+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub level: f64,
    pub beta_mean: f64,
    pub beta_ci: (f64, f64),
    pub eta_mean: f64,
    pub eta_ci: (f64, f64),
}

/// Normalized posterior density of β given `K = k`, evaluated by quadrature.
pub struct PosteriorDensity {
    n: usize,
    k: usize,
    prior: PriorSpec,
    integrator: LogIntegrand<Box<dyn Fn(f64) -> f64 + Send + Sync>>,
    log_z: f64,
}

impl PosteriorDensity {
    pub fn new(n: usize, k: usize, prior: &PriorSpec, quad: &QuadratureConfig) -> Result<Self> {
        check_counts(n, k)?;
        prior.validate_for(n)?;
        let p = *prior;
        let integrator = LogIntegrand::new(
            Box::new(move |b: f64| log_posterior_raw(b, n, k, &p)) as Box<dyn Fn(f64) -> f64 + Send + Sync>,
            *quad,
        )?;
        let log_z = integrator.log_total()?;
        Ok(Self {
            n,
            k,
            prior: p,
            integrator,
            log_z,
        })
    }

    pub fn log_density(&self, beta: f64) -> Result<f64> {
        check_positive("beta", beta)?;
        Ok(log_posterior_raw(beta, self.n, self.k, &self.prior) - self.log_z)
    }

    /// Posterior mean of β; undefined (infinite) under the Jeffreys prior
    /// when every item is its own cluster.
    pub fn mean(&self) -> Result<f64> {
        if matches!(self.prior, PriorSpec::Jeffreys { .. }) && self.k == self.n {
            return Err(EwensError::Undefined(
                "posterior mean of β is infinite when k = n under the Jeffreys prior".into(),
            ));
        }
        self.expectation(|b| b.ln())
    }

    /// `E[g(β)]` for positive `g` given as `ln g`.
    pub fn expectation<G: Fn(f64) -> f64>(&self, log_g: G) -> Result<f64> {
        let (n, k, p) = (self.n, self.k, self.prior);
        let li = LogIntegrand::new(
            move |b: f64| log_g(b) + log_posterior_raw(b, n, k, &p),
            *self.integrator.config(),
        )?;
        Ok((li.log_total()? - self.log_z).exp())
    }

    pub fn cdf(&self, beta: f64) -> Result<f64> {
        self.integrator.cdf(beta)
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        let guess = self.mean().unwrap_or(self.n as f64);
        self.integrator.quantile(p, guess)
    }

    /// Equal-tail interval at `level`.
    pub fn interval(&self, level: f64) -> Result<(f64, f64)> {
        check_level(level)?;
        let tail = 0.5 * (1.0 - level);
        Ok((self.quantile(tail)?, self.quantile(1.0 - tail)?))
    }

    pub fn summary(&self, level: f64) -> Result<PosteriorSummary> {
        let beta_mean = self.mean()?;
        let beta_ci = self.interval(level)?;
        let shift = self.n as f64 + 1.0;
        let eta_mean = self.expectation(move |b| b.ln() - (b + shift).ln())?;
        let eta = |b: f64| b / (b + shift);
        Ok(PosteriorSummary {
            level,
            beta_mean,
            beta_ci,
            eta_mean,
            eta_ci: (eta(beta_ci.0), eta(beta_ci.1)),
        })
    }
}

/// Deterministic posterior summary by one-dimensional quadrature.
pub fn quadrature_posterior_summary(
    n: usize,
    k: usize,
    prior: &PriorSpec,
    level: f64,
) -> Result<PosteriorSummary> {
    PosteriorDensity::new(n, k, prior, &QuadratureConfig::default())?.summary(level)
}

/// Summary of an MCMC chain: sample means and equal-tail intervals.
pub fn chain_summary(chain: &Chain, n: usize, level: f64) -> Result<PosteriorSummary> {
    let beta_ci = credible_interval(chain, level)?;
    let shift = n as f64 + 1.0;
    let etas: Vec<f64> = chain.draws.iter().map(|b| b / (b + shift)).collect();
    Ok(PosteriorSummary {
        level,
        beta_mean: chain.mean(),
        beta_ci,
        eta_mean: mean(&etas),
        eta_ci: equal_tail_interval(&etas, level)?,
    })
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(EwensError::Domain {
            name: "level",
            value: level,
            reason: "must lie in (0, 1)",
        })
    }
}

/// Empirical quantile with linear interpolation between order statistics
/// (`h = (N − 1) p`).
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-tail interval from raw samples.
pub fn equal_tail_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    check_level(level)?;
    if samples.is_empty() {
        return Err(EwensError::InsufficientDraws { needed: 1, got: 0 });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    Ok((
        empirical_quantile(&sorted, tail),
        empirical_quantile(&sorted, 1.0 - tail),
    ))
}

/// Equal-tail credible interval from a chain with at least
/// [`MIN_INTERVAL_DRAWS`] retained draws.
pub fn credible_interval(chain: &Chain, level: f64) -> Result<(f64, f64)> {
    if chain.draws.len() < MIN_INTERVAL_DRAWS {
        return Err(EwensError::InsufficientDraws {
            needed: MIN_INTERVAL_DRAWS,
            got: chain.draws.len(),
        });
    }
    equal_tail_interval(&chain.draws, level)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Batch-means standard error of the mean with `batches` equal batches
/// (trailing draws that do not fill a batch are dropped).
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    if size == 0 || batches < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> = xs.chunks_exact(size).take(batches).map(mean).collect();
    let grand = mean(&means);
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}
