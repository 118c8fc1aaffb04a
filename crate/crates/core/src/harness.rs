//! Experiment harness: prior summary tables, the frequentist coverage study,
//! DPMM experiments, data loading and the plain-text output format.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::dpmm::{run_dpmm, DpmmConfig, DpmmRun};
use crate::error::{check_positive, EwensError, Result};
use crate::jeffreys::{normalizing_bound, JeffreysPrior};
use crate::med::sample_partition;
use crate::parallel::{derive_seed, map_indexed};
use crate::posterior::{
    batch_means_se, credible_interval, sample_posterior, MCMCConfig, PosteriorDensity, PriorSpec,
};
use crate::quadrature::QuadratureConfig;

/// Provenance record written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: BTreeMap<String, String>,
    pub seed: u64,
    pub tool_version: String,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            parameters: BTreeMap::new(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: 0.0,
        }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.parameters.insert(key.to_string(), value.to_string());
        self
    }
}

/// Formats a real with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// A rectangular table of reals with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Comma-separated, header row, LF endings. Integral columns named in
    /// `integer_columns` are written without exponent.
    pub fn to_csv(&self, integer_columns: &[&str]) -> String {
        let int_mask: Vec<bool> = self
            .columns
            .iter()
            .map(|c| integer_columns.contains(&c.as_str()))
            .collect();
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .zip(&int_mask)
                .map(|(&v, &is_int)| {
                    if is_int {
                        format!("{}", v as i64)
                    } else {
                        fmt_real(v)
                    }
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Which prior summary series to tabulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSeries {
    /// Density on a log-spaced β grid.
    Density,
    /// Normalizing constant and its upper bound.
    Const,
    /// Median and the linear rule `0.36 n + 1`.
    Median,
    /// Prior mean, variance and standard deviation of K.
    KMoments,
    /// Full prior distribution of K.
    KDist,
    /// Mean and variance of the discovery probability.
    Eta,
}

impl PriorSeries {
    pub fn integer_columns(self) -> &'static [&'static str] {
        match self {
            Self::KDist => &["n", "k"],
            _ => &["n"],
        }
    }
}

/// Points in the density grid.
pub const DENSITY_GRID_POINTS: usize = 200;

pub fn prior_summary(ns: &[usize], what: PriorSeries, jobs: usize) -> Result<Table> {
    let mut table = match what {
        PriorSeries::Density => Table::new(&["n", "beta", "density"]),
        PriorSeries::Const => Table::new(&["n", "normalizing_constant", "upper_bound"]),
        PriorSeries::Median => Table::new(&["n", "median", "linear_rule"]),
        PriorSeries::KMoments => Table::new(&["n", "mean_k", "var_k", "sd_k"]),
        PriorSeries::KDist => Table::new(&["n", "k", "probability"]),
        PriorSeries::Eta => Table::new(&["n", "eta_mean", "eta_var"]),
    };
    for &n in ns {
        let prior = JeffreysPrior::new(n)?;
        let nf = n as f64;
        match what {
            PriorSeries::Density => {
                let (lo, hi) = (1e-3f64.ln(), (1e3 * nf).ln());
                for i in 0..DENSITY_GRID_POINTS {
                    let b = (lo + (hi - lo) * i as f64 / (DENSITY_GRID_POINTS - 1) as f64).exp();
                    table.push(vec![nf, b, prior.density(b)?]);
                }
            }
            PriorSeries::Const => {
                table.push(vec![nf, prior.normalizing_constant(), normalizing_bound(n)]);
            }
            PriorSeries::Median => table.push(vec![nf, prior.median()?, 0.36 * nf + 1.0]),
            PriorSeries::KMoments => {
                let var = prior.prior_k_var()?;
                table.push(vec![nf, prior.prior_k_mean()?, var, var.sqrt()]);
            }
            PriorSeries::KDist => {
                for (i, p) in prior.prior_k_pmf_with_jobs(jobs)?.into_iter().enumerate() {
                    table.push(vec![nf, (i + 1) as f64, p]);
                }
            }
            PriorSeries::Eta => {
                let (m, v) = prior.discovery_moments()?;
                table.push(vec![nf, m, v]);
            }
        }
    }
    Ok(table)
}

/// How each replicate's posterior is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Quadrature,
    Mcmc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub beta_true: f64,
    pub n: usize,
    pub levels: Vec<f64>,
    pub replicates: usize,
    pub prior: PriorSpec,
    pub seed: u64,
    pub method: FitMethod,
    /// Retained draws per chain when `method` is MCMC.
    pub mcmc_iterations: usize,
    pub mcmc_burn_in: usize,
    pub jobs: usize,
}

impl CoverageConfig {
    pub fn new(beta_true: f64, n: usize, prior: PriorSpec, replicates: usize, seed: u64) -> Self {
        Self {
            beta_true,
            n,
            levels: vec![0.90, 0.95],
            replicates,
            prior,
            seed,
            method: FitMethod::Quadrature,
            mcmc_iterations: 100_000,
            mcmc_burn_in: 5_000,
            jobs: 0,
        }
    }
}

/// Minimum number of replicates accepted by [`run_coverage`].
pub const MIN_REPLICATES: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    pub beta_true: f64,
    pub n: usize,
    pub level: f64,
    pub prior: PriorSpec,
    /// Replicates that produced an interval.
    pub replicates: usize,
    pub covered: usize,
    pub coverage: f64,
    pub mean_width: f64,
    pub sd_width: f64,
    /// Replicates whose fit failed; excluded from the counts above.
    pub failures: usize,
}

/// Per-replicate outcome: the sampled K and one interval per level.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub k: usize,
    pub intervals: Vec<(f64, f64)>,
}

/// Draws one dataset and fits it; deterministic in `(cfg.seed, index)`.
pub fn coverage_replicate(cfg: &CoverageConfig, index: usize) -> Result<Replicate> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, index as u64));
    let k = sample_partition(cfg.n, cfg.beta_true, &mut rng)?.k();
    let intervals = match cfg.method {
        FitMethod::Quadrature => {
            let post = PosteriorDensity::new(cfg.n, k, &cfg.prior, &QuadratureConfig::default())?;
            cfg.levels
                .iter()
                .map(|&l| post.interval(l))
                .collect::<Result<Vec<_>>>()?
        }
        FitMethod::Mcmc => {
            let mcmc = MCMCConfig {
                iterations: cfg.mcmc_iterations,
                burn_in: cfg.mcmc_burn_in,
                proposal_sd: crate::posterior::default_proposal_sd(cfg.n),
                seed: rng.random(),
            };
            let chain = sample_posterior(cfg.n, k, &cfg.prior, &mcmc)?;
            cfg.levels
                .iter()
                .map(|&l| credible_interval(&chain, l))
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(Replicate { k, intervals })
}

/// Runs the coverage study; one result row per level. Replicates may run in
/// parallel but are reduced in index order.
pub fn run_coverage(cfg: &CoverageConfig) -> Result<Vec<CoverageResult>> {
    check_positive("beta_true", cfg.beta_true)?;
    cfg.prior.validate_for(cfg.n)?;
    if cfg.replicates < MIN_REPLICATES {
        return Err(EwensError::Config(format!(
            "need at least {MIN_REPLICATES} replicates, got {}",
            cfg.replicates
        )));
    }
    if cfg.levels.is_empty() || cfg.levels.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
        return Err(EwensError::Config(format!(
            "levels must lie in (0, 1): {:?}",
            cfg.levels
        )));
    }
    let outcomes = map_indexed(cfg.replicates, cfg.jobs, |i| coverage_replicate(cfg, i));
    let failures = outcomes.iter().filter(|o| o.is_err()).count();
    let ok: Vec<&Replicate> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    Ok(cfg
        .levels
        .iter()
        .enumerate()
        .map(|(j, &level)| {
            let covered = ok
                .iter()
                .filter(|r| {
                    let (lo, hi) = r.intervals[j];
                    lo <= cfg.beta_true && cfg.beta_true <= hi
                })
                .count();
            let widths: Vec<f64> = ok.iter().map(|r| r.intervals[j].1 - r.intervals[j].0).collect();
            let m = widths.len() as f64;
            let mean_width = widths.iter().sum::<f64>() / m;
            let sd_width = (widths.iter().map(|w| (w - mean_width).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
            CoverageResult {
                beta_true: cfg.beta_true,
                n: cfg.n,
                level,
                prior: cfg.prior,
                replicates: ok.len(),
                covered,
                coverage: covered as f64 / ok.len() as f64,
                mean_width,
                sd_width,
                failures,
            }
        })
        .collect())
}

/// Parses one non-negative integer count per line, or a single-column CSV
/// whose header is `y`. Blank lines are skipped.
pub fn parse_counts(text: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if out.is_empty() && idx == first_content_line(text) && line.trim_matches('"') == "y" {
            continue;
        }
        let value = line.parse::<u64>().map_err(|_| EwensError::Data {
            line: idx + 1,
            message: format!("expected a non-negative integer count, found {line:?}"),
        })?;
        out.push(value);
    }
    if out.is_empty() {
        return Err(EwensError::EmptyData);
    }
    Ok(out)
}

fn first_content_line(text: &str) -> usize {
    text.lines()
        .position(|l| !l.trim().is_empty())
        .unwrap_or(0)
}

/// Negative binomial counts with the given mean and variance (`variance > mean`),
/// drawn as a Gamma mixture of Poissons.
pub fn simulate_negbin<R: Rng + ?Sized>(n: usize, mean: f64, variance: f64, rng: &mut R) -> Result<Vec<u64>> {
    check_positive("mean", mean)?;
    if !(variance > mean) {
        return Err(EwensError::Domain {
            name: "variance",
            value: variance,
            reason: "negative binomial needs variance > mean",
        });
    }
    let size = mean * mean / (variance - mean);
    let gamma = Gamma::new(size, mean / size)
        .map_err(|e| EwensError::Config(format!("Gamma mixing distribution: {e}")))?;
    (0..n)
        .map(|_| {
            let rate = gamma.sample(rng).max(f64::MIN_POSITIVE);
            poisson_draw(rate, rng)
        })
        .collect()
}

pub fn simulate_poisson<R: Rng + ?Sized>(n: usize, mean: f64, rng: &mut R) -> Result<Vec<u64>> {
    check_positive("mean", mean)?;
    (0..n).map(|_| poisson_draw(mean, rng)).collect()
}

fn poisson_draw<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<u64> {
    let d = Poisson::new(rate).map_err(|e| EwensError::Config(format!("Poisson({rate}): {e}")))?;
    Ok(d.sample(rng) as u64)
}

/// A simulated count dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimulatedCounts {
    NegBin { mean: f64, variance: f64 },
    Poisson { mean: f64 },
}

impl SimulatedCounts {
    pub fn generate(&self, n: usize, seed: u64) -> Result<Vec<u64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match *self {
            Self::NegBin { mean, variance } => simulate_negbin(n, mean, variance, &mut rng),
            Self::Poisson { mean } => simulate_poisson(n, mean, &mut rng),
        }
    }
}

/// Total-variation distance between two pmfs (shorter one zero-padded).
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let len = p.len().max(q.len());
    0.5 * (0..len)
        .map(|i| (p.get(i).unwrap_or(&0.0) - q.get(i).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

/// Empirical CDF of K at `k = 1..=kmax`, with batch-means standard errors.
pub fn k_cdf_with_se(k_trace: &[usize], kmax: usize) -> Vec<(f64, f64)> {
    (1..=kmax)
        .map(|k| {
            let ind: Vec<f64> = k_trace.iter().map(|&x| f64::from(u8::from(x <= k))).collect();
            let p = ind.iter().sum::<f64>() / ind.len() as f64;
            (p, batch_means_se(&ind, crate::posterior::DEFAULT_BATCHES))
        })
        .collect()
}

/// Named DPMM chain result.
#[derive(Debug, Clone, PartialEq)]
pub struct DpmmArm {
    pub label: String,
    pub run: DpmmRun,
}

/// Runs one DPMM chain per prior, concurrently when allowed. Chain `i` uses
/// seed `derive_seed(seed, i)`.
pub fn run_dpmm_arms(data: &[u64], configs: &[(String, DpmmConfig)], jobs: usize) -> Result<Vec<DpmmArm>> {
    map_indexed(configs.len(), jobs, |i| {
        let (label, cfg) = &configs[i];
        run_dpmm(data, cfg, None).map(|run| DpmmArm {
            label: label.clone(),
            run,
        })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = Table::new(&["n", "value"]);
        t.push(vec![3.0, 0.1]);
        let csv = t.to_csv(&["n"]);
        assert_eq!(csv, "n,value\n3,1.0000000000000001e-1\n");
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn parse_plain_and_csv() {
        assert_eq!(parse_counts("1\n2\n\n30\n").unwrap(), vec![1, 2, 30]);
        assert_eq!(parse_counts("y\n4\n5\n").unwrap(), vec![4, 5]);
        match parse_counts("y\n4\nfive\n") {
            Err(EwensError::Data { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_counts("-1\n"), Err(EwensError::Data { line: 1, .. })));
        assert_eq!(parse_counts(""), Err(EwensError::EmptyData));
        assert_eq!(parse_counts("y\n"), Err(EwensError::EmptyData));
    }

    #[test]
    fn negbin_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let xs = simulate_negbin(200_000, 20.0, 220.0, &mut rng).unwrap();
        let m = xs.iter().sum::<u64>() as f64 / xs.len() as f64;
        let v = xs.iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((m - 20.0).abs() < 0.2, "mean {m}");
        assert!((v - 220.0).abs() < 6.0, "var {v}");
        assert!(simulate_negbin(5, 20.0, 10.0, &mut rng).is_err());
    }

    #[test]
    fn total_variation_basics() {
        assert_eq!(total_variation(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
        assert!((total_variation(&[1.0], &[0.0, 1.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn coverage_counts_are_exact_and_order_independent() {
        let mut cfg = CoverageConfig::new(1.0, 30, PriorSpec::jeffreys(30), 50, 99);
        cfg.jobs = 1;
        let seq = run_coverage(&cfg).unwrap();
        cfg.jobs = 3;
        let par = run_coverage(&cfg).unwrap();
        assert_eq!(seq, par);
        for r in &seq {
            assert_eq!(r.replicates + r.failures, 50);
            assert_eq!(r.coverage, r.covered as f64 / r.replicates as f64);
            assert!((0.0..=1.0).contains(&r.coverage));
            assert!(r.mean_width >= 0.0 && r.sd_width >= 0.0);
        }
        assert!(seq[1].mean_width > seq[0].mean_width);
    }

    #[test]
    fn coverage_rejects_small_runs() {
        let cfg = CoverageConfig::new(1.0, 30, PriorSpec::jeffreys(30), 49, 1);
        assert!(run_coverage(&cfg).is_err());
        let cfg = CoverageConfig::new(1.0, 30, PriorSpec::jeffreys(31), 50, 1);
        assert!(run_coverage(&cfg).is_err());
    }

    #[test]
    fn prior_summary_shapes() {
        let t = prior_summary(&[2], PriorSeries::Const, 1).unwrap();
        assert!((t.rows[0][1] - std::f64::consts::PI).abs() < 1e-8);
        let t = prior_summary(&[12], PriorSeries::KDist, 1).unwrap();
        assert_eq!(t.rows.len(), 12);
        let total: f64 = t.column("probability").unwrap().iter().sum();
        assert!((total - 1.0).abs() < 1e-6);
        let t = prior_summary(&[5, 6], PriorSeries::Density, 1).unwrap();
        assert_eq!(t.rows.len(), 2 * DENSITY_GRID_POINTS);
    }
}
