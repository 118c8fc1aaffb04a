//! The Jeffreys prior for the Ewens concentration parameter,
//!
//! `π_n(β) ∝ sqrt((1/β) Σ_{j=1}^{n-1} j/(β+j)²)`,
//!
//! together with its normalizing constant, quantiles, the integrals
//! `A(n, m, k) = ∫ β^k Γ(β)/Γ(β+n) π_m(β) dβ`, and the prior it induces on the
//! number of clusters and on the probability of discovering a new cluster.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::error::{check_positive, EwensError, Result};
use crate::med::{expected_k, variance_k, weighted_inverse_power_sum};
use crate::parallel::map_indexed;
use crate::quadrature::{LogIntegrand, QuadratureConfig};
use crate::special::{ln_rising, stirling_log_row_cached};

type BoxedLogFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

fn check_index(n: usize) -> Result<()> {
    if n < 2 {
        return Err(EwensError::Domain {
            name: "n",
            value: n as f64,
            reason: "the Jeffreys prior needs n >= 2",
        });
    }
    Ok(())
}

/// Unchecked unnormalized log density.
pub(crate) fn log_density_raw(beta: f64, n: usize) -> f64 {
    0.5 * (weighted_inverse_power_sum(beta, n, 2).ln() - beta.ln())
}

/// `½ ln[(1/β) Σ_{j=1}^{n-1} j/(β+j)²]`.
pub fn log_density_unnorm(beta: f64, n: usize) -> Result<f64> {
    check_positive("beta", beta)?;
    check_index(n)?;
    Ok(log_density_raw(beta, n))
}

/// Closed-form `d/dβ ln π_n(β)`.
pub fn log_density_derivative(beta: f64, n: usize) -> Result<f64> {
    check_positive("beta", beta)?;
    check_index(n)?;
    let s2 = weighted_inverse_power_sum(beta, n, 2);
    let s3 = weighted_inverse_power_sum(beta, n, 3);
    Ok(-0.5 / beta - s3 / s2)
}

/// Closed-form `d²/dβ² ln π_n(β)`.
pub fn log_density_second_derivative(beta: f64, n: usize) -> Result<f64> {
    check_positive("beta", beta)?;
    check_index(n)?;
    let s2 = weighted_inverse_power_sum(beta, n, 2);
    let s3 = weighted_inverse_power_sum(beta, n, 3);
    let s4 = weighted_inverse_power_sum(beta, n, 4);
    Ok(0.5 / (beta * beta) + (3.0 * s4 * s2 - 2.0 * s3 * s3) / (s2 * s2))
}

/// Upper bound `π sqrt(n(n−1)/2)` on the normalizing constant.
pub fn normalizing_bound(n: usize) -> f64 {
    let n = n as f64;
    std::f64::consts::PI * (n * (n - 1.0) / 2.0).sqrt()
}

fn config_key(n: usize, quad: &QuadratureConfig) -> (usize, u64, usize, u64) {
    (
        n,
        quad.rel_tol.to_bits(),
        quad.max_subdivisions,
        quad.split_point.to_bits(),
    )
}

/// `ln C(n)` with `C(n) = ∫_0^∞ sqrt((1/β) Σ j/(β+j)²) dβ`, memoized per
/// `(n, quadrature settings)`.
pub fn log_normalizing_constant(n: usize, quad: &QuadratureConfig) -> Result<f64> {
    check_index(n)?;
    // Keyed on n and the bit patterns of the quadrature settings.
    type Key = (usize, u64, usize, u64);
    static CACHE: OnceLock<Mutex<HashMap<Key, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = config_key(n, quad);
    if let Some(&v) = cache.lock().expect("constant cache poisoned").get(&key) {
        return Ok(v);
    }
    let li = LogIntegrand::new(move |b: f64| log_density_raw(b, n), *quad)?;
    let v = li.log_total()?;
    cache.lock().expect("constant cache poisoned").insert(key, v);
    Ok(v)
}

/// `C(n)`.
pub fn normalizing_constant(n: usize, quad: &QuadratureConfig) -> Result<f64> {
    log_normalizing_constant(n, quad).map(f64::exp)
}

/// `ln A(n, m, k)` with the prior `π_m` normalized.
pub fn a_integral(n: usize, m: usize, k: usize, quad: &QuadratureConfig) -> Result<f64> {
    check_index(m)?;
    if k > n {
        return Err(EwensError::Domain {
            name: "k",
            value: k as f64,
            reason: "need k <= n",
        });
    }
    if k == 0 {
        if n == 0 {
            return Ok(0.0);
        }
        // ∫ Γ(β)/Γ(β+n) π dβ diverges at the origin like ∫ β^{-3/2}.
        return Err(EwensError::Undefined(format!(
            "A({n}, {m}, 0) diverges for n >= 1"
        )));
    }
    let log_c = log_normalizing_constant(m, quad)?;
    let kf = k as f64;
    let li = LogIntegrand::new(
        move |b: f64| kf * b.ln() - ln_rising(b, n) + log_density_raw(b, m) - log_c,
        *quad,
    )?;
    li.log_total()
}

/// The normalized Jeffreys prior for a sample of `n` items.
pub struct JeffreysPrior {
    n: usize,
    log_norm_const: f64,
    quad: QuadratureConfig,
    integrator: LogIntegrand<BoxedLogFn>,
}

impl std::fmt::Debug for JeffreysPrior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JeffreysPrior")
            .field("n", &self.n)
            .field("log_norm_const", &self.log_norm_const)
            .field("quad", &self.quad)
            .finish()
    }
}

impl JeffreysPrior {
    pub fn new(n: usize) -> Result<Self> {
        Self::with_config(n, QuadratureConfig::default())
    }

    pub fn with_config(n: usize, quad: QuadratureConfig) -> Result<Self> {
        check_index(n)?;
        quad.validate()?;
        let log_norm_const = log_normalizing_constant(n, &quad)?;
        let integrator = LogIntegrand::new(
            Box::new(move |b: f64| log_density_raw(b, n) - log_norm_const) as BoxedLogFn,
            quad,
        )?;
        Ok(Self {
            n,
            log_norm_const,
            quad,
            integrator,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn quadrature(&self) -> &QuadratureConfig {
        &self.quad
    }

    pub fn log_norm_const(&self) -> f64 {
        self.log_norm_const
    }

    /// `C(n)`.
    pub fn normalizing_constant(&self) -> f64 {
        self.log_norm_const.exp()
    }

    /// Normalized log density.
    pub fn log_density(&self, beta: f64) -> Result<f64> {
        check_positive("beta", beta)?;
        Ok(log_density_raw(beta, self.n) - self.log_norm_const)
    }

    pub fn density(&self, beta: f64) -> Result<f64> {
        self.log_density(beta).map(f64::exp)
    }

    pub fn cdf(&self, beta: f64) -> Result<f64> {
        if beta.is_nan() || beta < 0.0 {
            return Err(EwensError::Domain {
                name: "beta",
                value: beta,
                reason: "must be >= 0",
            });
        }
        self.integrator.cdf(beta)
    }

    /// Solves `cdf(q) = p`, bracketing from the linear median rule.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        let guess = 0.36 * self.n as f64 + 1.0;
        self.integrator.quantile(p, guess)
    }

    pub fn median(&self) -> Result<f64> {
        self.quantile(0.5)
    }

    /// `E[g(β)]` for a positive function given by its logarithm.
    pub fn log_expectation<G>(&self, log_g: G) -> Result<f64>
    where
        G: Fn(f64) -> f64,
    {
        let n = self.n;
        let c = self.log_norm_const;
        LogIntegrand::new(
            move |b: f64| log_g(b) + log_density_raw(b, n) - c,
            self.quad,
        )?
        .log_total()
    }

    /// `ln ∫_0^upper β π(β) dβ`; grows without bound in `upper`.
    pub fn log_partial_first_moment(&self, upper: f64) -> Result<f64> {
        crate::error::check_positive("upper", upper)?;
        let n = self.n;
        let c = self.log_norm_const;
        // The full integral diverges, so truncate the integrand itself and
        // put the split point on the cut.
        let quad = QuadratureConfig {
            split_point: upper,
            ..self.quad
        };
        LogIntegrand::new(
            move |b: f64| {
                if b > upper {
                    f64::NEG_INFINITY
                } else {
                    b.ln() + log_density_raw(b, n) - c
                }
            },
            quad,
        )?
        .log_total()
    }

    /// `ln A(n_items, self.n, k)`.
    pub fn log_a(&self, n_items: usize, k: usize) -> Result<f64> {
        a_integral(n_items, self.n, k, &self.quad)
    }

    /// `Pr(K = k | n)` for `k = 1..=n`, at index `k - 1`.
    pub fn prior_k_pmf(&self) -> Result<Vec<f64>> {
        self.prior_k_pmf_with_jobs(0)
    }

    pub fn prior_k_pmf_with_jobs(&self, jobs: usize) -> Result<Vec<f64>> {
        let n = self.n;
        let row = stirling_log_row_cached(n)?;
        map_indexed(n, jobs, |i| {
            let k = i + 1;
            a_integral(n, n, k, &self.quad).map(|la| (row.log_abs(k) + la).exp())
        })
        .into_iter()
        .collect()
    }

    /// `E[K | n] = ∫ E[K | β, n] π(β) dβ`.
    pub fn prior_k_mean(&self) -> Result<f64> {
        let n = self.n;
        self.log_expectation(|b| expected_k_raw(b, n).ln())
            .map(f64::exp)
    }

    /// `Var[K | n] = E[Var(K|β)] + E[E(K|β)²] − E[K]²`.
    pub fn prior_k_var(&self) -> Result<f64> {
        let n = self.n;
        let mean = self.prior_k_mean()?;
        let within = self
            .log_expectation(|b| variance_k(b, n).map_or(f64::NEG_INFINITY, f64::ln))?
            .exp();
        let second = self
            .log_expectation(|b| 2.0 * expected_k_raw(b, n).ln())?
            .exp();
        Ok(within + second - mean * mean)
    }

    /// Mean and variance of the discovery probability `η = β/(β+n+1)`.
    pub fn discovery_moments(&self) -> Result<(f64, f64)> {
        let shift = self.n as f64 + 1.0;
        let log_eta = move |b: f64| b.ln() - (b + shift).ln();
        let mean = self.log_expectation(log_eta)?.exp();
        let second = self.log_expectation(move |b| 2.0 * log_eta(b))?.exp();
        Ok((mean, (second - mean * mean).max(0.0)))
    }
}

fn expected_k_raw(beta: f64, n: usize) -> f64 {
    expected_k(beta, n).unwrap_or(f64::NAN)
}

/// Cached `ln A(n, n, k)` (`k = 1..=n`) and `ln A(n−1, n, k)` (`k = 1..n`)
/// for the β-marginalized collapsed Gibbs sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct ACache {
    n: usize,
    log_a_full: Vec<f64>,
    log_a_reduced: Vec<f64>,
}

impl ACache {
    pub fn build(n: usize, quad: &QuadratureConfig, jobs: usize) -> Result<Self> {
        check_index(n)?;
        // Warm the constant cache before fanning out.
        log_normalizing_constant(n, quad)?;
        let full: Result<Vec<f64>> = map_indexed(n, jobs, |i| a_integral(n, n, i + 1, quad))
            .into_iter()
            .collect();
        let reduced: Result<Vec<f64>> =
            map_indexed(n - 1, jobs, |i| a_integral(n - 1, n, i + 1, quad))
                .into_iter()
                .collect();
        Ok(Self {
            n,
            log_a_full: full?,
            log_a_reduced: reduced?,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `ln A(n, n, k)`.
    pub fn log_a_full(&self, k: usize) -> Result<f64> {
        k.checked_sub(1)
            .and_then(|i| self.log_a_full.get(i))
            .copied()
            .ok_or(EwensError::CacheMiss { n: self.n, k })
    }

    /// `ln A(n−1, n, k)`.
    pub fn log_a_reduced(&self, k: usize) -> Result<f64> {
        k.checked_sub(1)
            .and_then(|i| self.log_a_reduced.get(i))
            .copied()
            .ok_or(EwensError::CacheMiss { n: self.n, k })
    }
}
