//! Adaptive Gauss–Kronrod quadrature and a half-line integrator for
//! log-scale integrands on `β ∈ (0, ∞)`.
//!
//! The half line is mapped onto `x ∈ (0, 2)` through `ν = √β`:
//! `β = s·x²` on `(0, 1]` and `β = s / (2 − x)²` on `(1, 2)`, with `s` the
//! split point. Both pieces have bounded integrands whenever the target
//! behaves like `β^{-1/2}` at the origin and decays at least like `β^{-3/2}`
//! in the tail, which covers the Jeffreys prior and every posterior built on
//! it.
//!
//! Below `β_left = s·e^{-40}` the integrand is treated as a pure power law
//! `c·β^{q-1}`, whose mass and quantiles are closed-form. This keeps
//! near-singular targets such as `β^{-0.999}` (a diffuse Gamma prior with
//! one observed cluster) integrable without chasing the singularity.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{EwensError, Result};
use crate::special::log_add_exp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    pub split_point: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_subdivisions: 200,
            split_point: 1.0,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(EwensError::Config(format!(
                "rel_tol must be > 0, got {}",
                self.rel_tol
            )));
        }
        if self.max_subdivisions < 10 {
            return Err(EwensError::Config(format!(
                "max_subdivisions must be >= 10, got {}",
                self.max_subdivisions
            )));
        }
        if !(self.split_point > 0.0 && self.split_point.is_finite()) {
            return Err(EwensError::Config(format!(
                "split_point must be > 0, got {}",
                self.split_point
            )));
        }
        Ok(())
    }
}

// 15-point Kronrod abscissae (non-negative half) with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
}

/// Globally adaptive 7/15 Gauss–Kronrod over `[points[0], points[last]]`,
/// starting from the intervals delimited by `points` (sorted ascending).
///
/// Stops once the summed error estimate is at most
/// `max(abs_tol, rel_tol · |value|)`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: &F,
    points: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    max_subdivisions: usize,
) -> Result<Estimate> {
    if points.len() < 2 {
        return Err(EwensError::Config("need at least two breakpoints".into()));
    }
    let mut heap = BinaryHeap::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            heap.push(kronrod15(f, w[0], w[1]));
        }
    }
    let mut subdivisions = heap.len();
    loop {
        let (value, error) = heap
            .iter()
            .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
        if !value.is_finite() || !error.is_finite() {
            return Err(EwensError::NonConvergence {
                subdivisions,
                estimate: value,
                error,
            });
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Estimate {
                value,
                error,
                subdivisions,
            });
        }
        if subdivisions >= max_subdivisions {
            return Err(EwensError::NonConvergence {
                subdivisions,
                estimate: value,
                error,
            });
        }
        let worst = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // Interval can no longer be split in floating point.
            return Err(EwensError::NonConvergence {
                subdivisions,
                estimate: value,
                error,
            });
        }
        heap.push(kronrod15(f, worst.a, mid));
        heap.push(kronrod15(f, mid, worst.b));
        subdivisions += 1;
    }
}

/// Grid spacing in `ln β` used to locate the integrand's bulk.
const SCAN_STEP: f64 = 0.025;
/// Half-width of the scanned window in `ln β`, centred on the split point.
const SCAN_HALF_WIDTH: f64 = 40.0;
/// Log-drop from the maximum that delimits the integrand's bulk.
const BULK_DROP: f64 = 40.0;
/// `ln(β_left / s)`: the power-law closure covers `(0, β_left]`.
const LEFT_CLOSURE: f64 = -40.0;

/// A non-negative integrand on `(0, ∞)` given by its logarithm, prepared for
/// repeated integration over sub-ranges.
///
/// Construction scans the integrand on a log grid, records its maximum (the
/// shift applied before exponentiating) and places breakpoints around the
/// bulk so narrow peaks are never stepped over by the first Kronrod pass.
pub struct LogIntegrand<F: Fn(f64) -> f64> {
    log_f: F,
    cfg: QuadratureConfig,
    shift: f64,
    breakpoints: Vec<f64>,
    x_left: f64,
    beta_left: f64,
    /// Exponent `q` with `f(β) ≈ c·β^{q-1}` on `(0, β_left]`.
    left_exponent: f64,
    /// Shifted log mass on `(0, β_left]`.
    log_left_mass: f64,
    total: OnceLock<std::result::Result<f64, EwensError>>,
}

impl<F: Fn(f64) -> f64> LogIntegrand<F> {
    pub fn new(log_f: F, cfg: QuadratureConfig) -> Result<Self> {
        cfg.validate()?;
        let s = cfg.split_point;
        let ln_s = s.ln();
        let steps = (2.0 * SCAN_HALF_WIDTH / SCAN_STEP).round() as usize;
        let h = |ln_beta: f64| -> f64 {
            let beta = ln_beta.exp();
            let v = log_f(beta) + log_jacobian_beta(beta, s);
            if v.is_nan() {
                f64::NEG_INFINITY
            } else {
                v
            }
        };
        let grid: Vec<(f64, f64)> = (0..=steps)
            .map(|i| {
                let t = ln_s - SCAN_HALF_WIDTH + SCAN_STEP * i as f64;
                (t, h(t))
            })
            .collect();
        let (imax, &(mut t_max, mut h_max)) = grid
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .expect("scan grid is non-empty");
        if !h_max.is_finite() {
            return Err(EwensError::Undefined(format!(
                "integrand has no finite values on the scan grid (max {h_max})"
            )));
        }
        // Golden-section polish of the peak location in ln β.
        if imax > 0 && imax < steps {
            let (mut lo, mut hi) = (grid[imax - 1].0, grid[imax + 1].0);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            let mut c = hi - g * (hi - lo);
            let mut d = lo + g * (hi - lo);
            let (mut fc, mut fd) = (h(c), h(d));
            for _ in 0..40 {
                if fc > fd {
                    hi = d;
                    d = c;
                    fd = fc;
                    c = hi - g * (hi - lo);
                    fc = h(c);
                } else {
                    lo = c;
                    c = d;
                    fc = fd;
                    d = lo + g * (hi - lo);
                    fd = h(d);
                }
            }
            let t = 0.5 * (lo + hi);
            let v = h(t);
            if v > h_max {
                t_max = t;
                h_max = v;
            }
        }

        let beta_left = s * LEFT_CLOSURE.exp();
        let x_left = x_of_beta(beta_left, s);
        let lf_left = log_f(beta_left);
        let (left_exponent, log_left_mass) = if lf_left.is_finite() {
            let q = lf_left - log_f(beta_left / std::f64::consts::E) + 1.0;
            if !(q > 1e-12) {
                return Err(EwensError::Undefined(format!(
                    "integrand behaves like beta^{:.6} at the origin and is not integrable",
                    q - 1.0
                )));
            }
            (q, lf_left + beta_left.ln() - q.ln() - h_max)
        } else {
            (1.0, f64::NEG_INFINITY)
        };

        let mut bps = vec![x_left, 1.0, 2.0];
        // Geometric breakpoints resolve steep power laws near the origin.
        bps.extend((1..10).map(|j| (-2.0 * j as f64).exp()));
        let to_x = |t: f64| x_of_beta(t.exp(), s);
        if let Some(&(t, _)) = grid.iter().find(|(_, v)| *v >= h_max - BULK_DROP) {
            bps.push(to_x(t));
        }
        if let Some(&(t, _)) = grid.iter().rev().find(|(_, v)| *v >= h_max - BULK_DROP) {
            bps.push(to_x(t));
        }
        bps.push(to_x(t_max));
        // Curvature in ln β gives a width scale for interior peaks.
        let eps = 1e-3;
        let curv = (h(t_max + eps) - 2.0 * h_max + h(t_max - eps)) / (eps * eps);
        if curv < 0.0 && curv.is_finite() {
            let width = 1.0 / (-curv).sqrt();
            for m in [1.0, 3.0, 6.0, 12.0] {
                bps.push(to_x(t_max - m * width));
                bps.push(to_x(t_max + m * width));
            }
        }
        bps.retain(|x| x.is_finite() && (x_left..=2.0).contains(x));
        bps.sort_by(f64::total_cmp);
        bps.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

        Ok(Self {
            log_f,
            cfg,
            shift: h_max,
            breakpoints: bps,
            x_left,
            beta_left,
            left_exponent,
            log_left_mass,
            total: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &QuadratureConfig {
        &self.cfg
    }

    /// The log integrand, as supplied.
    pub fn log_f(&self, beta: f64) -> f64 {
        (self.log_f)(beta)
    }

    fn integrand_x(&self, x: f64) -> f64 {
        let s = self.cfg.split_point;
        let beta = beta_of_x(x, s);
        if !(beta > 0.0) || beta.is_infinite() {
            return 0.0;
        }
        let v = (self.log_f)(beta) + log_jacobian_x(x, s) - self.shift;
        if v == f64::NEG_INFINITY {
            0.0
        } else {
            v.exp()
        }
    }

    fn integrate_x(&self, xa: f64, xb: f64, abs_tol: f64) -> Result<f64> {
        let xa = xa.max(self.x_left);
        if xb <= xa {
            return Ok(f64::NEG_INFINITY);
        }
        let mut pts = vec![xa];
        pts.extend(self.breakpoints.iter().copied().filter(|&x| x > xa && x < xb));
        pts.push(xb);
        let f = |x: f64| self.integrand_x(x);
        let est = integrate_adaptive(
            &f,
            &pts,
            self.cfg.rel_tol,
            abs_tol,
            self.cfg.max_subdivisions,
        )?;
        if est.value < 0.0 {
            return Err(EwensError::NonConvergence {
                subdivisions: est.subdivisions,
                estimate: est.value,
                error: est.error,
            });
        }
        Ok(est.value.ln() + self.shift)
    }

    /// Unshifted log mass of the power-law closure on `(lo, hi] ∩ (0, β_left]`.
    fn log_left_integral(&self, lo: f64, hi: f64) -> f64 {
        let hi = hi.min(self.beta_left);
        if hi <= lo {
            return f64::NEG_INFINITY;
        }
        let q = self.left_exponent;
        let r_hi = (q * (hi / self.beta_left).ln()).exp();
        let r_lo = (q * (lo / self.beta_left).ln()).exp();
        self.log_left_mass + (r_hi - r_lo).ln() + self.shift
    }

    /// `ln ∫_0^∞ exp(log_f(β)) dβ`.
    pub fn log_total(&self) -> Result<f64> {
        self.total
            .get_or_init(|| {
                let body = self.integrate_x(self.x_left, 2.0, 0.0)?;
                Ok(log_add_exp(body, self.log_left_mass + self.shift))
            })
            .clone()
    }

    /// `ln ∫_lo^hi exp(log_f(β)) dβ` for `0 ≤ lo ≤ hi ≤ ∞`.
    ///
    /// Partial integrals are resolved to an absolute tolerance of
    /// `rel_tol` times the total mass, so tiny tail masses come back as
    /// absolute rather than relative approximations.
    pub fn log_integral(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo >= 0.0) || !(hi >= lo) {
            return Err(EwensError::Config(format!(
                "invalid integration range [{lo}, {hi}]"
            )));
        }
        let s = self.cfg.split_point;
        let (xa, xb) = (x_of_beta(lo, s), x_of_beta(hi, s));
        if xa == 0.0 && xb == 2.0 {
            return self.log_total();
        }
        let total = self.log_total()?;
        let abs_tol = self.cfg.rel_tol * (total - self.shift).exp();
        let body = self.integrate_x(xa, xb, abs_tol)?;
        Ok(log_add_exp(body, self.log_left_integral(lo, hi)))
    }

    /// Normalized mass on `(0, b]`.
    pub fn cdf(&self, b: f64) -> Result<f64> {
        if b <= 0.0 {
            return Ok(0.0);
        }
        if b == f64::INFINITY {
            return Ok(1.0);
        }
        let total = self.log_total()?;
        let lower = self.log_integral(0.0, b)?;
        Ok((lower - total).exp().clamp(0.0, 1.0))
    }

    /// The `p`-quantile of the normalized density, by Brent's method on `ln β`.
    pub fn quantile(&self, p: f64, guess: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(EwensError::Domain {
                name: "p",
                value: p,
                reason: "probability must lie in (0, 1)",
            });
        }
        let guess = if guess > 0.0 && guess.is_finite() {
            guess
        } else {
            1.0
        };
        let left_cdf = self.cdf(self.beta_left)?;
        if p <= left_cdf {
            // Invert the power law; may underflow to 0 for very flat tails.
            return Ok(self.beta_left * ((p / left_cdf).ln() / self.left_exponent).exp());
        }
        let g = |t: f64| self.cdf(t.exp()).map(|c| c - p);
        let (lo, hi) = crate::roots::expand_bracket(&g, guess.ln() - 16f64.ln(), guess.ln() + 16f64.ln(), 60)?;
        let t = crate::roots::brent(&g, lo, hi, 1e-10, 200)?;
        Ok(t.exp())
    }
}

pub(crate) fn beta_of_x(x: f64, s: f64) -> f64 {
    if x <= 1.0 {
        s * x * x
    } else {
        let t = 2.0 - x;
        s / (t * t)
    }
}

pub(crate) fn x_of_beta(beta: f64, s: f64) -> f64 {
    if beta <= 0.0 {
        0.0
    } else if beta == f64::INFINITY {
        2.0
    } else if beta <= s {
        (beta / s).sqrt()
    } else {
        2.0 - (s / beta).sqrt()
    }
}

fn log_jacobian_x(x: f64, s: f64) -> f64 {
    if x <= 1.0 {
        (2.0 * s * x).ln()
    } else {
        (2.0 * s).ln() - 3.0 * (2.0 - x).ln()
    }
}

fn log_jacobian_beta(beta: f64, s: f64) -> f64 {
    if beta <= s {
        std::f64::consts::LN_2 + 0.5 * (s * beta).ln()
    } else {
        std::f64::consts::LN_2 + 1.5 * beta.ln() - 0.5 * s.ln()
    }
}
