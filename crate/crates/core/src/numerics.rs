#![allow(non_snake_case)]
//! Special functions, distribution functions, adaptive quadrature and the
//! success-probability integrals `I(p, Δ)` and `J_{m,n}(Δ)`.
//!
//! `erf` comes from `libm`; the gamma function and the regularized
//! incomplete gamma / beta functions are delegated to `statrs`. Everything built on top of them
//! (CDFs, the density of `w`, the integrals and their asymptotics) lives here.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::{beta, gamma as sgamma};

use crate::embedcore::{EffectiveSubspace, Vector};
use crate::error::{Error, Result};

/// Error function, exactly odd.
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        -libm::erf(-x)
    } else {
        libm::erf(x)
    }
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

pub fn ln_gamma(x: f64) -> f64 {
    sgamma::ln_gamma(x)
}

pub fn gamma(x: f64) -> f64 {
    sgamma::gamma(x)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

fn check_dof(k: usize, what: &str) -> Result<()> {
    if k == 0 {
        Err(Error::InvalidArgument(format!(
            "{what}: degrees of freedom must be >= 1"
        )))
    } else {
        Ok(())
    }
}

/// CDF of the chi-squared distribution with `k` degrees of freedom.
pub fn chi2_cdf(x: f64, k: usize) -> Result<f64> {
    check_dof(k, "chi2_cdf")?;
    if x.is_nan() {
        return Err(Error::InvalidArgument("chi2_cdf: NaN argument".into()));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    Ok(sgamma::gamma_lr(k as f64 / 2.0, x / 2.0).clamp(0.0, 1.0))
}

/// Upper tail of the chi-squared distribution.
pub fn chi2_sf(x: f64, k: usize) -> Result<f64> {
    check_dof(k, "chi2_sf")?;
    if x <= 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(sgamma::gamma_ur(k as f64 / 2.0, x / 2.0).clamp(0.0, 1.0))
}

/// CDF of the F-distribution `F(v1, v2)`.
pub fn f_cdf(x: f64, v1: usize, v2: usize) -> Result<f64> {
    check_dof(v1, "f_cdf")?;
    check_dof(v2, "f_cdf")?;
    if x.is_nan() {
        return Err(Error::InvalidArgument("f_cdf: NaN argument".into()));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let (a, b) = (v1 as f64, v2 as f64);
    let t = a * x / (a * x + b);
    Ok(beta::beta_reg(a / 2.0, b / 2.0, t).clamp(0.0, 1.0))
}

/// Parameters of the law of `w`: `m = D - d_e`, `n = d - d_e + 1`,
/// `delta = ‖x_top* - p_top‖`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionParams {
    pub m: usize,
    pub n: usize,
    pub delta: f64,
}

impl DistributionParams {
    pub fn new(m: usize, n: usize, delta: f64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidArgument(format!(
                "m={m}, n={n}: both must be >= 1"
            )));
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "delta={delta} must be finite and >= 0"
            )));
        }
        Ok(Self { m, n, delta })
    }
}

/// Density of the `m`-dimensional t-distribution followed by `w`.
pub fn pdf_w(wbar: &[f64], params: &DistributionParams) -> Result<f64> {
    let DistributionParams { m, n, delta } = *params;
    if wbar.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "w̄ has length {} but m = {m}",
            wbar.len()
        )));
    }
    if delta <= 0.0 {
        return Err(Error::Degenerate(
            "delta = 0: w is identically zero (x_top* = p_top)".into(),
        ));
    }
    let (mf, nf) = (m as f64, n as f64);
    let r2: f64 = wbar.iter().map(|v| v * v).sum();
    let log_norm = ln_gamma((mf + nf) / 2.0) - ln_gamma(nf / 2.0) - mf * (PI.sqrt() * delta).ln();
    Ok((log_norm - (mf + nf) / 2.0 * (r2 / (delta * delta)).ln_1p()).exp())
}

/// Tolerances for the adaptive quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Upper integration limit for the chi-weighted integrals; `None` picks
    /// the smallest integer offset past `√n` with tail mass below `1e-12`.
    pub tail_cutoff: Option<f64>,
    pub max_subdivisions: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-7,
            tail_cutoff: None,
            max_subdivisions: 4000,
        }
    }
}

impl QuadratureConfig {
    fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return Err(Error::InvalidArgument(
                "quadrature tolerances must be > 0".into(),
            ));
        }
        if let Some(c) = self.tail_cutoff {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument("tail cutoff must be > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes (…, 0.949, 0.742, 0.406, 0).
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy, Debug)]
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

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = KRONROD_WEIGHTS[7] * fc;
    let mut g = GAUSS_WEIGHTS[3] * fc;
    for i in 0..7 {
        let dx = h * KRONROD_NODES[i];
        let s = f(c - dx) + f(c + dx);
        k += KRONROD_WEIGHTS[i] * s;
        if i % 2 == 1 {
            g += GAUSS_WEIGHTS[i / 2] * s;
        }
    }
    Segment {
        a,
        b,
        value: k * h,
        error: ((k - g) * h).abs(),
    }
}

/// Globally adaptive 7/15-point Gauss–Kronrod quadrature on `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    cfg: &QuadratureConfig,
) -> Result<Quadrature> {
    cfg.validate()?;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidArgument(
            "integration limits must be finite".into(),
        ));
    }
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
            intervals: 0,
        });
    }
    let mut heap = BinaryHeap::new();
    let first = gauss_kronrod(&f, a, b);
    let mut total = first.value;
    let mut err = first.error;
    heap.push(first);
    loop {
        let tol = cfg.abs_tol.max(cfg.rel_tol * total.abs());
        if err <= tol {
            break;
        }
        if heap.len() >= cfg.max_subdivisions {
            return Err(Error::Quadrature {
                achieved: err,
                requested: tol,
            });
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval can no longer be split in floating point
            return Err(Error::Quadrature {
                achieved: err,
                requested: tol,
            });
        }
        let left = gauss_kronrod(&f, worst.a, mid);
        let right = gauss_kronrod(&f, mid, worst.b);
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // recompute the sums to shed accumulated cancellation
    let (value, error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
    Ok(Quadrature {
        value,
        error,
        intervals: heap.len(),
    })
}

/// Smallest `s = ⌈√n⌉ + k` (k ≥ 4) with `P[χ_n > s] < 1e-12`.
pub fn chi_tail_cutoff(n: usize) -> f64 {
    let mut s = (n as f64).sqrt().ceil() + 4.0;
    while chi2_sf(s * s, n.max(1)).unwrap_or(0.0) >= 1e-12 {
        s += 1.0;
    }
    s
}

fn chi_log_norm(n: usize) -> f64 {
    let nf = n as f64;
    -((nf / 2.0 - 1.0) * 2f64.ln() + ln_gamma(nf / 2.0))
}

/// `J_{m,n}(Δ)`: the probability that all `m` coordinates of a
/// t-distributed vector (`n` dof, scale `Δ²/n`) lie in `[-1, 1]`,
/// evaluated as a one-dimensional chi-weighted integral of `erf^m`.
pub fn integral_J(m: usize, n: usize, delta: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let _ = DistributionParams::new(m, n, delta)?;
    if delta <= 0.0 {
        return Err(Error::Degenerate("integral_J requires delta > 0".into()));
    }
    let s_max = cfg.tail_cutoff.unwrap_or_else(|| chi_tail_cutoff(n));
    let log_norm = chi_log_norm(n);
    let mf = m as i32;
    let nf = (n - 1) as i32;
    let scale = 1.0 / (SQRT_2 * delta);
    let q = integrate(
        |s| {
            if s <= 0.0 {
                return 0.0;
            }
            let e = erf(s * scale);
            e.powi(mf) * (log_norm + f64::from(nf) * s.ln() - 0.5 * s * s).exp()
        },
        0.0,
        s_max,
        cfg,
    )?;
    Ok(q.value.clamp(0.0, 1.0))
}

/// `I(p, Δ)` for a coordinate-aligned effective subspace: the probability
/// that `p_{d_e+1:D} + w ∈ [-1, 1]^{D-d_e}`.
pub fn integral_I(
    p: &Vector,
    x_top_star: &Vector,
    sub: &EffectiveSubspace,
    n: usize,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let dim = sub.ambient_dim();
    if p.len() != dim || x_top_star.len() != dim {
        return Err(Error::DimensionMismatch(format!(
            "p has length {}, x_top* has length {}, D = {dim}",
            p.len(),
            x_top_star.len()
        )));
    }
    if !sub.is_aligned() {
        return Err(Error::Unsupported(
            "integral_I needs a coordinate-aligned effective subspace".into(),
        ));
    }
    check_dof(n, "integral_I")?;
    let d_e = sub.effective_dim();
    let delta = (x_top_star.rows(0, d_e) - p.rows(0, d_e)).norm();
    if delta <= 0.0 {
        return Err(Error::Degenerate(
            "integral_I requires x_top* != p_top".into(),
        ));
    }
    let tail: Vec<f64> = p.iter().skip(d_e).copied().collect();
    let s_max = cfg.tail_cutoff.unwrap_or_else(|| chi_tail_cutoff(n));
    let log_norm = chi_log_norm(n);
    let nf = (n - 1) as i32;
    let scale = 1.0 / (SQRT_2 * delta);
    let q = integrate(
        |s| {
            if s <= 0.0 {
                return 0.0;
            }
            let t = s * scale;
            let prod: f64 = tail
                .iter()
                .map(|&pi| 0.5 * (erf(t * (1.0 - pi)) + erf(t * (1.0 + pi))))
                .product();
            prod * (log_norm + f64::from(nf) * s.ln() - 0.5 * s * s).exp()
        },
        0.0,
        s_max,
        cfg,
    )?;
    Ok(q.value.clamp(0.0, 1.0))
}

/// Two-term large-`m` expansion of `J_{m,n}(Δ)`; exact `1/(m+1)` when
/// `r = (n + Δ² - 2)/2 = 0`.
pub fn asymptotic_J(m: usize, n: usize, delta: f64) -> Result<f64> {
    let _ = DistributionParams::new(m, n, delta)?;
    if delta <= 0.0 {
        return Err(Error::Degenerate("Γ(Δ²) has a pole at Δ = 0".into()));
    }
    let d2 = delta * delta;
    let r = (n as f64 + d2 - 2.0) / 2.0;
    let mp1 = m as f64 + 1.0;
    if r.abs() < 1e-12 {
        return Ok(1.0 / mp1);
    }
    let log_c =
        0.5 * d2 * PI.ln() + n as f64 * delta.ln() + ln_gamma(d2) - ln_gamma(n as f64 / 2.0);
    let l = mp1.ln();
    let bracket = l.powf(r) - 0.5 * r * l.ln().ln() * l.powf(r - 1.0);
    Ok((log_c - d2 * l).exp() * bracket)
}

/// Outcome of a one-sample Kolmogorov–Smirnov test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

impl KsResult {
    pub fn passes(&self, significance: f64) -> bool {
        self.p_value >= significance
    }
}

/// Survival function of the Kolmogorov distribution, `P[K > λ]`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// KS test of `sample` against a continuous `cdf`, with Stephens'
/// finite-sample correction of the asymptotic p-value.
pub fn ks_test<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<KsResult> {
    if sample.is_empty() {
        return Err(Error::InvalidArgument("KS test on an empty sample".into()));
    }
    if sample.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("KS test sample contains NaN".into()));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let nf = n as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            let lo = c - i as f64 / nf;
            let hi = (i + 1) as f64 / nf - c;
            lo.max(hi)
        })
        .fold(0.0_f64, f64::max);
    let sq = nf.sqrt();
    let p_value = kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d);
    Ok(KsResult {
        statistic: d,
        p_value,
        n,
    })
}
