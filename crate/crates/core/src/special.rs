//! Scalar special functions and log-scale Stirling numbers.
//!
//! Everything combinatorial is kept in log space: at the sample sizes seen in
//! practice (a few thousand items) the Stirling numbers and gamma ratios
//! overflow `f64` long before they become interesting.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{check_positive, EwensError, Result};

/// Largest Stirling row computed unless the caller raises the limit.
pub const DEFAULT_STIRLING_MAX: usize = 5000;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Argument above which the asymptotic expansions are used directly.
const ASYMPTOTIC_CUTOFF: f64 = 10.0;

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    check_positive("x", x)?;
    Ok(lgamma(x))
}

/// Unchecked `ln Γ(x)`; callers guarantee `x > 0`.
pub(crate) fn lgamma(x: f64) -> f64 {
    if x >= ASYMPTOTIC_CUTOFF {
        return lgamma_stirling(x);
    }
    // Shift upward: Γ(x) = Γ(x + m) / (x (x+1) ... (x+m-1)).
    let mut prod = 1.0;
    let mut z = x;
    while z < ASYMPTOTIC_CUTOFF {
        prod *= z;
        z += 1.0;
    }
    lgamma_stirling(z) - prod.ln()
}

fn lgamma_stirling(x: f64) -> f64 {
    let r = 1.0 / x;
    let r2 = r * r;
    let series = r
        * (1.0 / 12.0
            + r2 * (-1.0 / 360.0
                + r2 * (1.0 / 1260.0
                    + r2 * (-1.0 / 1680.0
                        + r2 * (1.0 / 1188.0 + r2 * (-691.0 / 360_360.0 + r2 / 156.0))))));
    (x - 0.5) * x.ln() - x + LN_SQRT_2PI + series
}

/// Digamma ψ(x) for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    check_positive("x", x)?;
    Ok(psi(x))
}

pub(crate) fn psi(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < ASYMPTOTIC_CUTOFF {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let r2 = 1.0 / (x * x);
    let tail = r2
        * (1.0 / 12.0
            - r2 * (1.0 / 120.0
                - r2 * (1.0 / 252.0
                    - r2 * (1.0 / 240.0 - r2 * (1.0 / 132.0 - r2 * (691.0 / 32760.0 - r2 / 12.0))))));
    acc + x.ln() - 0.5 / x - tail
}

/// Trigamma ψ′(x) for `x > 0`.
pub fn trigamma(x: f64) -> Result<f64> {
    check_positive("x", x)?;
    Ok(psi1(x))
}

pub(crate) fn psi1(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < ASYMPTOTIC_CUTOFF {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let r = 1.0 / x;
    let r2 = r * r;
    // 1/x + 1/(2x²) + Σ B_{2k} / x^{2k+1}
    let tail = r
        * r2
        * (1.0 / 6.0
            - r2 * (1.0 / 30.0
                - r2 * (1.0 / 42.0
                    - r2 * (1.0 / 30.0 - r2 * (5.0 / 66.0 - r2 * (691.0 / 2730.0 - r2 * 7.0 / 6.0))))));
    acc + r + 0.5 * r2 + tail
}

/// `ln(exp(a) + exp(b))` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln Σ exp(xᵢ)`; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln Γ(β+n) − ln Γ(β)`, the log rising factorial β(β+1)…(β+n−1).
pub(crate) fn ln_rising(beta: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if n <= 16 {
        return (0..n).map(|j| (beta + j as f64).ln()).sum();
    }
    if beta > 1e7 {
        // The lgamma difference cancels catastrophically this far out.
        let ln_beta = beta.ln();
        return (0..n).map(|j| ln_beta + (j as f64 / beta).ln_1p()).sum();
    }
    lgamma(beta + n as f64) - lgamma(beta)
}

/// Row `n` of the unsigned Stirling numbers of the first kind, in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct StirlingTable {
    n: usize,
    /// Entry `k - 1` holds `ln |s(n, k)|` for `k = 1..=n`.
    log_values: Vec<f64>,
}

impl StirlingTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    /// `ln |s(n, k)|`; `-inf` when `k = 0` or `k > n`.
    pub fn log_abs(&self, k: usize) -> f64 {
        if k == 0 || k > self.n {
            f64::NEG_INFINITY
        } else {
            self.log_values[k - 1]
        }
    }
}

/// Computes `ln |s(n, k)|` for `k = 1..=n` with the default row limit.
pub fn stirling_log_row(n: usize) -> Result<StirlingTable> {
    stirling_log_row_with_max(n, DEFAULT_STIRLING_MAX)
}

pub fn stirling_log_row_with_max(n: usize, max: usize) -> Result<StirlingTable> {
    if n == 0 {
        return Err(EwensError::Domain {
            name: "n",
            value: 0.0,
            reason: "Stirling rows start at n = 1",
        });
    }
    if n > max {
        return Err(EwensError::StirlingTooLarge { n, max });
    }
    // row[k] = ln|s(m, k)| for the current m, k = 0..=m.
    let mut row = vec![f64::NEG_INFINITY; n + 1];
    row[0] = 0.0;
    for m in 0..n {
        let ln_m = (m as f64).ln();
        for k in (1..=m + 1).rev() {
            let stay = if k <= m { ln_m + row[k] } else { f64::NEG_INFINITY };
            row[k] = log_add_exp(stay, row[k - 1]);
        }
        row[0] = f64::NEG_INFINITY;
    }
    row.remove(0);
    Ok(StirlingTable { n, log_values: row })
}

/// Memoized [`stirling_log_row`]; rows are shared and immutable.
pub fn stirling_log_row_cached(n: usize) -> Result<Arc<StirlingTable>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<StirlingTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(row) = cache.lock().expect("stirling cache poisoned").get(&n) {
        return Ok(Arc::clone(row));
    }
    let row = Arc::new(stirling_log_row(n)?);
    cache
        .lock()
        .expect("stirling cache poisoned")
        .entry(n)
        .or_insert_with(|| Arc::clone(&row));
    Ok(row)
}
