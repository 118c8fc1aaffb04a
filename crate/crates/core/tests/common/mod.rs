//! Enumeration oracles shared by the integration tests.
#![allow(dead_code)]

use ewens_core::dpmm::{run_dpmm_with, DpmmConfig, DpmmState, PoissonGammaBase};
use ewens_core::posterior::PriorSpec;

/// Every set partition of `{0..n}` as a restricted growth string.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let next = prefix.iter().max().map_or(0, |m| m + 1);
        for l in 0..=next {
            prefix.push(l);
            grow(prefix, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    grow(&mut Vec::new(), n, &mut out);
    out
}

pub const BELL: [usize; 9] = [1, 1, 2, 5, 15, 52, 203, 877, 4140];

pub const DATA: [u64; 3] = [4, 6, 15];
pub const BASE_SHAPE: f64 = 2.0;
pub const BASE_RATE: f64 = 0.2;
pub const RETAINED: usize = 100_000;
pub const THIN: usize = 5;
/// Upper 1% point of chi-square with 4 degrees of freedom.
pub const CHI2_4_99: f64 = 13.2767;

/// Canonical label vectors of the five partitions of {0, 1, 2}.
pub const PARTITIONS: [[usize; 3]; 5] = [[0, 0, 0], [0, 0, 1], [0, 1, 0], [0, 1, 1], [0, 1, 2]];

pub fn ln_gamma(x: f64) -> f64 {
    // Stirling series after shifting; independent of the crate's own routine.
    let mut x = x;
    let mut acc = 0.0;
    while x < 15.0 {
        acc -= x.ln();
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// log ∫ Π Poisson(y|θ) Gamma(θ|a, b) dθ for the observations in one block.
pub fn log_block_marginal(ys: &[u64]) -> f64 {
    let s: u64 = ys.iter().sum();
    let m = ys.len() as f64;
    let (a, b) = (BASE_SHAPE, BASE_RATE);
    a * b.ln() - ln_gamma(a) + ln_gamma(a + s as f64) - (a + s as f64) * (b + m).ln()
        - ys.iter().map(|&y| ln_gamma(y as f64 + 1.0)).sum::<f64>()
}

pub fn canonical(labels: &[usize]) -> [usize; 3] {
    let mut map = Vec::new();
    let mut out = [0; 3];
    for (i, &l) in labels.iter().enumerate() {
        let pos = map.iter().position(|&x| x == l).unwrap_or_else(|| {
            map.push(l);
            map.len() - 1
        });
        out[i] = pos;
    }
    out
}

pub fn blocks(p: &[usize; 3]) -> Vec<Vec<u64>> {
    let k = p.iter().max().unwrap() + 1;
    (0..k)
        .map(|c| (0..3).filter(|&i| p[i] == c).map(|i| DATA[i]).collect())
        .collect()
}

/// log ∫ β^K Γ(β)/Γ(β+3) w(β) dβ by the trapezoid rule on ln β.
pub fn log_beta_integral(k: usize, log_w: impl Fn(f64) -> f64) -> f64 {
    let (lo, hi, steps) = (-60.0f64, 40.0f64, 400_000usize);
    let h = (hi - lo) / steps as f64;
    let vals: Vec<f64> = (0..=steps)
        .map(|i| {
            let t = lo + h * i as f64;
            let b = t.exp();
            // β^K / (β(β+1)(β+2)) with the d(ln β) Jacobian β.
            k as f64 * t - ((b + 1.0) * (b + 2.0)).ln() + log_w(b)
        })
        .collect();
    let mx = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = vals
        .iter()
        .enumerate()
        .map(|(i, v)| (v - mx).exp() * if i == 0 || i == steps { 0.5 } else { 1.0 })
        .sum();
    mx + (sum * h).ln()
}

pub fn exact_posterior(log_prior_beta: impl Fn(f64) -> f64) -> [f64; 5] {
    let per_k: Vec<f64> = (1..=3).map(|k| log_beta_integral(k, &log_prior_beta)).collect();
    let logs: Vec<f64> = PARTITIONS
        .iter()
        .map(|p| {
            let bl = blocks(p);
            let k = bl.len();
            bl.iter()
                .map(|b| ln_gamma(b.len() as f64) + log_block_marginal(b))
                .sum::<f64>()
                + per_k[k - 1]
        })
        .collect();
    let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logs.iter().map(|l| (l - mx).exp()).sum();
    let mut out = [0.0; 5];
    for (o, l) in out.iter_mut().zip(&logs) {
        *o = (l - mx).exp() / z;
    }
    out
}

pub fn empirical(prior: PriorSpec, seed: u64) -> [usize; 5] {
    let base = PoissonGammaBase::new(BASE_SHAPE, BASE_RATE).unwrap();
    let mut cfg = DpmmConfig::new(base, prior, seed);
    cfg.burn_in = 1_000;
    cfg.sweeps = RETAINED * THIN;
    let mut counts = [0usize; 5];
    let mut step = 0usize;
    run_dpmm_with(&DATA, &cfg, None, |s: &DpmmState| {
        step += 1;
        if step.is_multiple_of(THIN) {
            let c = canonical(s.labels());
            let idx = PARTITIONS.iter().position(|p| *p == c).unwrap();
            counts[idx] += 1;
        }
    })
    .unwrap();
    counts
}

pub fn chi_square(counts: &[usize; 5], probs: &[f64; 5]) -> f64 {
    let total = counts.iter().sum::<usize>() as f64;
    counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| (c as f64 - total * p).powi(2) / (total * p))
        .sum()
}

pub fn jeffreys3_log(b: f64) -> f64 {
    0.5 * ((1.0 / (b + 1.0).powi(2) + 2.0 / (b + 2.0).powi(2)) / b).ln()
}

