//! Empirical and numerical checks of the success-probability theory:
//! Monte-Carlo success rates, the laws of `‖y₂*‖`, `w` and `w/‖w‖`, the
//! `τ`/`τ₀` lower bounds and the convergence bound `1 - (1 - τρ)^k`.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedcore::{
    compute_w, label_tag, reduced_minimizer, sample_gaussian, sample_uniform_box, stream_id,
    Matrix, SeededRng, Vector,
};
use crate::error::{Error, Result};
use crate::numerics::{
    chi2_cdf, f_cdf, integral_I, integral_J, ks_test, ln_gamma, KsResult, QuadratureConfig,
};
use crate::problems::{lift_with_rotation, BaseFunction, SyntheticProblem};
use crate::reduced::FEAS_TOL;
use crate::xrego::{digest, run_with_observer, RunConfig};

/// Outcome of a Monte-Carlo success-probability estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessTrial {
    pub problem: String,
    pub p: Vector,
    pub d: usize,
    pub samples: usize,
    pub hits: usize,
    pub estimate: f64,
    pub std_err: f64,
    pub seed: u64,
    pub stream: u64,
}

impl SuccessTrial {
    fn from_hits(
        prob: &SyntheticProblem,
        p: &Vector,
        d: usize,
        samples: usize,
        hits: usize,
        rng: &SeededRng,
    ) -> Self {
        let est = hits as f64 / samples as f64;
        Self {
            problem: prob.name().to_string(),
            p: p.clone(),
            d,
            samples,
            hits,
            estimate: est,
            std_err: (est * (1.0 - est) / samples as f64).sqrt(),
            seed: rng.master_seed(),
            stream: rng.stream_id(),
        }
    }
}

/// A coordinate-aligned problem (`Q = I`) whose only minimizer in the
/// effective coordinates is `x_bar`: `ḡ(x) = ‖x - x_bar‖²`.
pub fn aligned_quadratic(x_bar: &[f64], dim: usize) -> Result<SyntheticProblem> {
    let c = x_bar.to_vec();
    let base = BaseFunction::custom(
        "aligned_quadratic",
        vec![(-1.0, 1.0); c.len()],
        0.0,
        c.clone(),
        Arc::new(move |x: &[f64]| x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum()),
    )?;
    lift_with_rotation(&base, Matrix::identity(dim, dim))
}

fn check_inputs(prob: &SyntheticProblem, p: &Vector, d: usize) -> Result<()> {
    if p.len() != prob.dim() {
        return Err(Error::DimensionMismatch(format!(
            "p has length {}, D = {}",
            p.len(),
            prob.dim()
        )));
    }
    if p.amax() > 1.0 {
        return Err(Error::InvalidArgument("p must lie in [-1, 1]^D".into()));
    }
    if d < prob.effective_dim() {
        return Err(Error::InvalidArgument(format!(
            "d = {d} is below the effective dimension {}",
            prob.effective_dim()
        )));
    }
    Ok(())
}

fn anchored_at_minimizer(prob: &SyntheticProblem, p: &Vector) -> bool {
    let z = prob.subspace().u().transpose() * (prob.x_top_star() - p);
    z.norm() == 0.0
}

fn feasible(x: &Vector) -> bool {
    x.iter().all(|v| v.abs() <= 1.0 + FEAS_TOL)
}

/// Fraction of `N` Gaussian embeddings for which the minimal-norm reduced
/// minimizer maps into `X`.
pub fn mc_success_probability(
    prob: &SyntheticProblem,
    p: &Vector,
    d: usize,
    samples: usize,
    rng: &SeededRng,
) -> Result<SuccessTrial> {
    check_inputs(prob, p, d)?;
    if samples < 100 {
        return Err(Error::InvalidArgument("need at least 100 samples".into()));
    }
    if anchored_at_minimizer(prob, p) {
        return Ok(SuccessTrial::from_hits(prob, p, d, samples, samples, rng));
    }
    let dim = prob.dim();
    let hits = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.derive(i as u64);
            let a = sample_gaussian(dim, d, &mut r);
            let rm = reduced_minimizer(prob.subspace(), &a, prob.x_top_star(), p)?;
            Ok(usize::from(feasible(&(&a * &rm.y + p))))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(SuccessTrial::from_hits(prob, p, d, samples, hits, rng))
}

/// Largest `s ≥ 0` with `|x + s·v|_∞ ≤ 1`, given `|x|_∞ ≤ 1`.
fn max_step(x: &Vector, v: &Vector) -> f64 {
    x.iter()
        .zip(v.iter())
        .filter(|(_, vi)| **vi != 0.0)
        .map(|(xi, vi)| {
            if *vi > 0.0 {
                (1.0 - xi) / vi
            } else {
                (-1.0 - xi) / vi
            }
        })
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
}

/// Estimator of `P[(RPX) is ε-successful]`: each sample tests the
/// minimal-norm minimizer, then its feasibility-clipped version along the
/// ray from `y = 0`, then 200 steps of projected random search inside the
/// polytope. A miss is not proof of failure, so this under-estimates.
pub fn mc_eps_success_probability(
    prob: &SyntheticProblem,
    p: &Vector,
    d: usize,
    samples: usize,
    epsilon: f64,
    rng: &SeededRng,
) -> Result<SuccessTrial> {
    check_inputs(prob, p, d)?;
    if samples < 100 || !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(
            "need >= 100 samples and epsilon > 0".into(),
        ));
    }
    let dim = prob.dim();
    let target = prob.f_star() + epsilon;
    let hits = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.derive(i as u64);
            let a = sample_gaussian(dim, d, &mut r);
            let rm = reduced_minimizer(prob.subspace(), &a, prob.x_top_star(), p)?;
            let x2 = &a * &rm.y + p;
            if feasible(&x2) {
                return Ok(1usize);
            }
            let ay = &a * &rm.y;
            let t = max_step(p, &ay).min(1.0);
            let mut y = &rm.y * t;
            let mut x = &a * &y + p;
            let mut f = prob.evaluate(&x)?;
            if f <= target {
                return Ok(1);
            }
            let mut sigma = 0.1 * rm.y.norm().max(1e-3);
            for _ in 0..200 {
                let step = Vector::from_fn(d, |_, _| sigma * r.standard_normal());
                let s = max_step(&x, &(&a * &step)).min(1.0);
                let cand = &y + &step * s;
                let xc = &a * &cand + p;
                let fc = prob.evaluate(&xc)?;
                if fc < f {
                    y = cand;
                    x = xc;
                    f = fc;
                    sigma *= 1.5;
                    if f <= target {
                        return Ok(1);
                    }
                } else {
                    sigma *= 0.9;
                }
            }
            Ok(0)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(SuccessTrial::from_hits(prob, p, d, samples, hits, rng))
}

fn delta_of(prob: &SyntheticProblem, p: &Vector) -> f64 {
    (prob.subspace().u().transpose() * (prob.x_top_star() - p)).norm()
}

/// `N` draws of `‖x_top* - p_top‖² / ‖y₂*‖²`.
pub fn sample_norm_ratio(
    prob: &SyntheticProblem,
    p: &Vector,
    d: usize,
    samples: usize,
    rng: &SeededRng,
) -> Result<Vec<f64>> {
    check_inputs(prob, p, d)?;
    let delta = delta_of(prob, p);
    if delta == 0.0 {
        return Err(Error::Degenerate(
            "x_top* = p_top: y₂* is identically zero".into(),
        ));
    }
    let dim = prob.dim();
    (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.derive(i as u64);
            let a = sample_gaussian(dim, d, &mut r);
            let rm = reduced_minimizer(prob.subspace(), &a, prob.x_top_star(), p)?;
            Ok(delta * delta / rm.y.norm_squared())
        })
        .collect()
}

/// `N` draws of `w = VᵀA y₂*`.
pub fn sample_w(
    prob: &SyntheticProblem,
    p: &Vector,
    d: usize,
    samples: usize,
    rng: &SeededRng,
) -> Result<Vec<Vector>> {
    check_inputs(prob, p, d)?;
    if delta_of(prob, p) == 0.0 {
        return Err(Error::Degenerate(
            "x_top* = p_top: w is identically zero".into(),
        ));
    }
    let dim = prob.dim();
    (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.derive(i as u64);
            let a = sample_gaussian(dim, d, &mut r);
            let rm = reduced_minimizer(prob.subspace(), &a, prob.x_top_star(), p)?;
            compute_w(prob.subspace(), &a, &rm.y)
        })
        .collect()
}

fn dofs(prob: &SyntheticProblem, d: usize) -> (usize, usize) {
    (
        prob.dim() - prob.effective_dim(),
        d - prob.effective_dim() + 1,
    )
}

/// KS test of `Δ²/‖y₂*‖²` against `χ²_{d-d_e+1}` (or `χ²_df` if given).
pub fn ks_check_chi2(
    prob: &SyntheticProblem,
    p: &Vector,
    d: usize,
    samples: usize,
    rng: &SeededRng,
    df: Option<usize>,
) -> Result<KsResult> {
    if samples < 2000 {
        return Err(Error::InvalidArgument(
            "KS checks need at least 2000 samples".into(),
        ));
    }
    let df = df.unwrap_or(dofs(prob, d).1);
    let xs = sample_norm_ratio(prob, p, d, samples, rng)?;
    ks_test(&xs, |x| chi2_cdf(x, df).unwrap_or(f64::NAN))
}

/// `(1/Δ²)(n/m)‖w‖²` for each sample.
pub fn f_statistics(prob: &SyntheticProblem, p: &Vector, d: usize, ws: &[Vector]) -> Vec<f64> {
    let (m, n) = dofs(prob, d);
    let delta = delta_of(prob, p);
    ws.iter()
        .map(|w| w.norm_squared() / (delta * delta) * n as f64 / m as f64)
        .collect()
}

/// KS test of `(1/Δ²)(n/m)‖w‖²` against `F(m, n)` (or `F(v1, v2)` if given).
pub fn ks_check_f(
    prob: &SyntheticProblem,
    p: &Vector,
    d: usize,
    samples: usize,
    rng: &SeededRng,
    dfs: Option<(usize, usize)>,
) -> Result<KsResult> {
    if samples < 2000 {
        return Err(Error::InvalidArgument(
            "KS checks need at least 2000 samples".into(),
        ));
    }
    let (v1, v2) = dfs.unwrap_or_else(|| dofs(prob, d));
    let ws = sample_w(prob, p, d, samples, rng)?;
    let xs = f_statistics(prob, p, d, &ws);
    ks_test(&xs, |x| f_cdf(x, v1, v2).unwrap_or(f64::NAN))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphericalCheck {
    pub m: usize,
    pub samples: usize,
    /// KS test of the first coordinate of `w/‖w‖` (absent for `m = 1`).
    pub ks: Option<KsResult>,
    /// `max |Σ̂ - I/m|` of the normalized second-moment matrix.
    pub cov_deviation: f64,
    pub cov_tolerance: f64,
    /// Fraction of `+1` signs (only meaningful for `m = 1`).
    pub positive_fraction: f64,
    pub passed: bool,
}

/// CDF of one coordinate of a uniform point on `S^{m-1}`, `m ≥ 2`.
pub fn sphere_coordinate_cdf(t: f64, m: usize) -> f64 {
    if t <= -1.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let ib = statrs::function::beta::beta_reg(0.5, (m as f64 - 1.0) / 2.0, t * t);
    0.5 + 0.5 * t.signum() * ib
}

/// Tests that `w/‖w‖` is uniform on the sphere.
pub fn spherical_check(w_samples: &[Vector], significance: f64) -> Result<SphericalCheck> {
    let n = w_samples.len();
    if n < 2000 {
        return Err(Error::InvalidArgument(
            "spherical check needs at least 2000 samples".into(),
        ));
    }
    let m = w_samples[0].len();
    if m == 0 || w_samples.iter().any(|w| w.len() != m) {
        return Err(Error::DimensionMismatch(
            "w samples of unequal length".into(),
        ));
    }
    let us: Vec<Vector> = w_samples
        .iter()
        .filter(|w| w.norm() > 0.0)
        .map(|w| w / w.norm())
        .collect();
    let nf = us.len() as f64;
    let tol = 5.0 / nf.sqrt();
    let positive_fraction = us.iter().filter(|u| u[0] > 0.0).count() as f64 / nf;
    if m == 1 {
        let passed = (positive_fraction - 0.5).abs() <= 3.0 * 0.5 / nf.sqrt();
        return Ok(SphericalCheck {
            m,
            samples: n,
            ks: None,
            cov_deviation: 0.0,
            cov_tolerance: tol,
            positive_fraction,
            passed,
        });
    }
    let first: Vec<f64> = us.iter().map(|u| u[0]).collect();
    let ks = ks_test(&first, |t| sphere_coordinate_cdf(t, m))?;
    let mut cov = Matrix::zeros(m, m);
    for u in &us {
        cov += u * u.transpose();
    }
    cov /= nf;
    let dev = (cov - Matrix::identity(m, m) / m as f64).amax();
    Ok(SphericalCheck {
        m,
        samples: n,
        passed: ks.passes(significance) && dev <= tol,
        ks: Some(ks),
        cov_deviation: dev,
        cov_tolerance: tol,
        positive_fraction,
    })
}

/// `(τ, τ₀) = (2^{-m} J_{m,n}(√d_e), J_{m,n}(√d_e))`.
pub fn tau_bounds(m: usize, n: usize, d_e: usize, cfg: &QuadratureConfig) -> Result<(f64, f64)> {
    if d_e == 0 {
        return Err(Error::InvalidArgument("d_e must be >= 1".into()));
    }
    let tau0 = integral_J(m, n, (d_e as f64).sqrt(), cfg)?;
    Ok((tau0 * 0.5f64.powi(m as i32), tau0))
}

fn check_tau_rho(tau: f64, rho: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) || !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "τ = {tau}, ρ = {rho}: both must lie in (0, 1]"
        )));
    }
    Ok(())
}

/// `1 - (1 - τρ)^k`.
pub fn convergence_bound(tau: f64, rho: f64, k: u64) -> Result<f64> {
    check_tau_rho(tau, rho)?;
    let q = 1.0 - tau * rho;
    Ok(1.0 - q.powf(k as f64))
}

/// `K_ξ = ⌈|log(1 - ξ)| / (τρ)⌉`.
pub fn k_xi(tau: f64, rho: f64, xi: f64) -> Result<u64> {
    check_tau_rho(tau, rho)?;
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "ξ = {xi} must lie in (0, 1)"
        )));
    }
    Ok(((1.0 - xi).ln().abs() / (tau * rho)).ceil() as u64)
}

/// `τ_ε = C(m,n)(2√D)^{-m}(1 + 9D²L²/ε²)^{-(m+n)/2}·vol(Ḡ*)` with
/// `C(m,n) = Γ((m+n)/2) / (π^{m/2} Γ(n/2))`; `L` and `vol(Ḡ*)` are user inputs.
pub fn tau_eps(
    m: usize,
    n: usize,
    dim: usize,
    epsilon: f64,
    lipschitz: f64,
    volume: f64,
) -> Result<f64> {
    if m == 0 || n == 0 || dim == 0 {
        return Err(Error::InvalidArgument("m, n, D must be >= 1".into()));
    }
    if !(epsilon > 0.0 && lipschitz > 0.0 && volume >= 0.0) {
        return Err(Error::InvalidArgument("need ε > 0, L > 0, vol >= 0".into()));
    }
    let (mf, nf, df) = (m as f64, n as f64, dim as f64);
    let log_c =
        ln_gamma((mf + nf) / 2.0) - ln_gamma(nf / 2.0) - mf / 2.0 * std::f64::consts::PI.ln();
    let log_rest = -mf * (2.0 * df.sqrt()).ln()
        - (mf + nf) / 2.0 * (9.0 * df * df * lipschitz * lipschitz / (epsilon * epsilon)).ln_1p();
    Ok((log_c + log_rest).exp() * volume)
}

/// Empirical convergence curve against `1 - (1 - τ̂ρ̂)^k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub runs: usize,
    pub k: Vec<usize>,
    /// Fraction of runs with `f(x_opt^k) ≤ f* + ε`.
    pub empirical: Vec<f64>,
    pub bound: Vec<f64>,
    /// Binomial standard error `√(b(1-b)/runs)` at the bound value.
    pub std_err: Vec<f64>,
    pub tau_hat: f64,
    pub tau_hat_std_err: f64,
    pub rho_hat: f64,
    /// Embeddings where the minimal-norm minimizer was feasible.
    pub r_count: usize,
    /// ...and the subsolver got within `ε/2` of `f*`.
    pub rs_count: usize,
    pub dominated: bool,
    pub seed: u64,
}

/// Runs `runs` seeded X-REGO runs and compares the fraction reaching
/// `G_ε` by embedding `k` with the convergence bound.
///
/// `τ̂` is the Monte-Carlo success estimate (`mc_samples` draws) at the
/// worst of the first 20 distinct anchors seen; `ρ̂` is the fraction of
/// embeddings with a feasible minimal-norm minimizer on which the solver
/// reached `f* + ε/2`.
pub fn convergence_experiment(
    prob: &SyntheticProblem,
    template: &RunConfig,
    runs: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<ConvergenceReport> {
    if runs == 0 {
        return Err(Error::InvalidArgument("need at least one run".into()));
    }
    template.validate()?;
    let k_max = template.k_max;
    let half_eps = template.epsilon / 2.0;
    let f_star = prob.f_star();
    let anchors: Mutex<BTreeMap<u64, Vector>> = Mutex::new(BTreeMap::new());
    let per_run = (0..runs)
        .into_par_iter()
        .map(|i| {
            let local = prob.fresh_clone();
            let mut cfg = template.clone();
            cfg.master_seed = stream_id(&[seed, label_tag("convergence"), i as u64]);
            let mut r_count = 0usize;
            let mut rs_count = 0usize;
            let mut seen = Vec::new();
            let rec = run_with_observer(&local, &cfg, |_, emb, res| {
                seen.push(emb.p().clone());
                let ok = reduced_minimizer(local.subspace(), emb.a(), local.x_top_star(), emb.p())
                    .map(|rm| feasible(&(emb.a() * &rm.y + emb.p())))
                    .unwrap_or(false);
                if ok {
                    r_count += 1;
                    if res.f_best - f_star <= half_eps {
                        rs_count += 1;
                    }
                }
            })
            .map_err(|e| e.source)?;
            {
                let mut a = anchors.lock().expect("anchor lock");
                for p in seen {
                    if a.len() >= 20 {
                        break;
                    }
                    a.entry(digest(&p)).or_insert(p);
                }
            }
            let first = match rec.termination {
                Some(crate::xrego::Termination::EpsReached(k)) => Some(k),
                _ => None,
            };
            Ok((first, r_count, rs_count))
        })
        .collect::<Result<Vec<_>>>()?;
    let r_count: usize = per_run.iter().map(|r| r.1).sum();
    let rs_count: usize = per_run.iter().map(|r| r.2).sum();
    if r_count == 0 {
        return Err(Error::Degenerate(
            "no embedding had a feasible reduced minimizer".into(),
        ));
    }
    let rho_hat = rs_count as f64 / r_count as f64;
    let mut tau_hat = f64::INFINITY;
    let mut tau_se = 0.0;
    let anchors = anchors.into_inner().expect("anchor lock");
    for (j, p) in anchors.values().enumerate() {
        let rng = SeededRng::new(seed, stream_id(&[label_tag("tau"), j as u64]));
        let t = mc_success_probability(prob, p, template.d, mc_samples, &rng)?;
        if t.estimate < tau_hat {
            tau_hat = t.estimate;
            tau_se = t.std_err;
        }
    }
    let mut ks = Vec::with_capacity(k_max);
    let mut emp = Vec::with_capacity(k_max);
    let mut bound = Vec::with_capacity(k_max);
    let mut se = Vec::with_capacity(k_max);
    let mut dominated = true;
    for k in 1..=k_max {
        let reached = per_run
            .iter()
            .filter(|r| r.0.is_some_and(|f| f <= k))
            .count();
        let e = reached as f64 / runs as f64;
        let b = if tau_hat * rho_hat > 0.0 {
            convergence_bound(tau_hat.min(1.0), rho_hat, k as u64)?
        } else {
            0.0
        };
        let s = (b * (1.0 - b) / runs as f64).sqrt();
        dominated &= e >= b - 3.0 * s;
        ks.push(k);
        emp.push(e);
        bound.push(b);
        se.push(s);
    }
    Ok(ConvergenceReport {
        runs,
        k: ks,
        empirical: emp,
        bound,
        std_err: se,
        tau_hat,
        tau_hat_std_err: tau_se,
        rho_hat,
        r_count,
        rs_count,
        dominated,
        seed,
    })
}

/// One line of a [`TheoryReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryCheck {
    pub name: String,
    pub passed: bool,
    /// Master seed of every random draw behind this check.
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub checks: Vec<TheoryCheck>,
}

impl TheoryReport {
    pub fn push(&mut self, name: &str, passed: bool, seed: u64, metrics: &[(&str, f64)]) {
        self.checks.push(TheoryCheck {
            name: name.to_string(),
            passed,
            seed,
            metrics: metrics.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        });
    }

    pub fn violations(&self) -> Vec<&TheoryCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// `name,passed,seed,metric,value` rows.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["check", "passed", "seed", "metric", "value"])
            .map_err(|e| Error::Parse(e.to_string()))?;
        for c in &self.checks {
            for (k, v) in &c.metrics {
                w.write_record([
                    c.name.as_str(),
                    if c.passed { "true" } else { "false" },
                    &c.seed.to_string(),
                    k,
                    &v.to_string(),
                ])
                .map_err(|e| Error::Parse(e.to_string()))?;
            }
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Parse(e.to_string()))?)
            .map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Sizes for [`validate_theory`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub seed: u64,
    pub ks_samples: usize,
    pub mc_samples: usize,
    pub significance: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            seed: 2022,
            ks_samples: 2000,
            mc_samples: 5000,
            significance: 0.01,
        }
    }
}

/// Binomial standard error under the hypothesis that the rate is `q`.
fn null_se(q: f64, samples: usize) -> f64 {
    (q * (1.0 - q) / samples as f64).sqrt().max(1e-12)
}

/// The standard battery of distribution, bound and ordering checks.
pub fn validate_theory(cfg: &ValidationConfig) -> Result<TheoryReport> {
    let mut report = TheoryReport::default();
    let q = QuadratureConfig::default();
    let seed = cfg.seed;
    let mut rng = SeededRng::new(seed, label_tag("validate"));

    for m in 1..=10 {
        let j = integral_J(m, 1, 1.0, &q)?;
        let exact = 1.0 / (m as f64 + 1.0);
        report.push(
            &format!("J_closed_form_m{m}"),
            (j - exact).abs() <= 1e-6,
            seed,
            &[("J", j), ("exact", exact)],
        );
    }

    for (k, &(d_e, d, dim)) in [
        (2usize, 4usize, 10usize),
        (1, 1, 5),
        (2, 3, 8),
        (1, 3, 12),
        (3, 5, 20),
    ]
    .iter()
    .enumerate()
    {
        let xbar: Vec<f64> = (0..d_e).map(|_| rng.uniform(-0.9, 0.9)).collect();
        let mut qrng = SeededRng::new(seed, stream_id(&[label_tag("rotation"), k as u64]));
        let base = BaseFunction::custom(
            "quadratic",
            vec![(-1.0, 1.0); d_e],
            0.0,
            xbar.clone(),
            Arc::new(move |x: &[f64]| x.iter().zip(&xbar).map(|(a, b)| (a - b).powi(2)).sum()),
        )?;
        let prob = crate::problems::lift(&base, dim, &mut qrng)?;
        let p = sample_uniform_box(dim, &mut rng) * 0.5;
        let s = SeededRng::new(seed, stream_id(&[label_tag("ks"), k as u64]));
        let chi = ks_check_chi2(&prob, &p, d, cfg.ks_samples, &s, None)?;
        let fk = ks_check_f(&prob, &p, d, cfg.ks_samples, &s, None)?;
        let tag = format!("d_e{d_e}_d{d}_D{dim}");
        report.push(
            &format!("chi2_law_{tag}"),
            chi.passes(cfg.significance),
            seed,
            &[("ks", chi.statistic), ("p_value", chi.p_value)],
        );
        report.push(
            &format!("f_law_{tag}"),
            fk.passes(cfg.significance),
            seed,
            &[("ks", fk.statistic), ("p_value", fk.p_value)],
        );
        let ws = sample_w(&prob, &p, d, cfg.ks_samples, &s)?;
        let sph = spherical_check(&ws, cfg.significance)?;
        report.push(
            &format!("spherical_{tag}"),
            sph.passed,
            seed,
            &[
                ("cov_dev", sph.cov_deviation),
                ("cov_tol", sph.cov_tolerance),
            ],
        );
    }

    let mut prev: Option<SuccessTrial> = None;
    for dim in [6usize, 12, 24] {
        let prob = aligned_quadratic(&[0.5, -0.4], dim)?;
        let p = Vector::zeros(dim);
        let s = SeededRng::new(seed, stream_id(&[label_tag("mc"), dim as u64]));
        let t = mc_success_probability(&prob, &p, 2, cfg.mc_samples, &s)?;
        let (m, n) = (dim - 2, 1);
        let j = integral_J(m, n, delta_of(&prob, &p), &q)?;
        let (tau, tau0) = tau_bounds(m, n, 2, &q)?;
        report.push(
            &format!("equality_case_D{dim}"),
            (t.estimate - j).abs() <= 3.0 * null_se(j, t.samples),
            seed,
            &[("mc", t.estimate), ("std_err", t.std_err), ("J", j)],
        );
        report.push(
            &format!("tau0_bound_D{dim}"),
            t.estimate >= tau0 - 3.0 * t.std_err && tau <= tau0 && tau > 0.0,
            seed,
            &[("mc", t.estimate), ("tau0", tau0), ("tau", tau)],
        );
        let eps = mc_eps_success_probability(&prob, &p, 2, cfg.mc_samples.min(2000), 1e-3, &s)?;
        let comb = (eps.std_err.powi(2) + t.std_err.powi(2)).sqrt();
        report.push(
            &format!("ordering_D{dim}"),
            eps.estimate >= t.estimate - 3.0 * comb && t.estimate >= j - 3.0 * t.std_err,
            seed,
            &[
                ("eps_success", eps.estimate),
                ("success", t.estimate),
                ("J", j),
            ],
        );
        if let Some(pt) = &prev {
            let c = (pt.std_err.powi(2) + t.std_err.powi(2)).sqrt();
            report.push(
                &format!("dimension_decay_D{dim}"),
                t.estimate <= pt.estimate + 3.0 * c,
                seed,
                &[("prev", pt.estimate), ("now", t.estimate)],
            );
        }
        prev = Some(t);
    }

    for k in 0..10 {
        let dim = 4 + k % 8;
        let sub_prob = aligned_quadratic(&[rng.uniform(-1.0, 1.0)], dim)?;
        let p = sample_uniform_box(dim, &mut rng);
        let i = integral_I(&p, sub_prob.x_top_star(), sub_prob.subspace(), 1, &q)?;
        let m = dim - 1;
        let lb = 0.5f64.powi(m as i32) * integral_J(m, 1, delta_of(&sub_prob, &p) / 2.0, &q)?;
        let s = SeededRng::new(seed, stream_id(&[label_tag("I"), k as u64]));
        let t = mc_success_probability(&sub_prob, &p, 1, cfg.mc_samples.min(2000), &s)?;
        report.push(
            &format!("integral_I_vs_mc_{k}"),
            i >= lb - 1e-8 && (t.estimate - i).abs() <= 3.0 * null_se(i, t.samples),
            seed,
            &[("I", i), ("lower", lb), ("mc", t.estimate)],
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedcore::EffectiveSubspace;

    #[test]
    fn trivial_success_at_minimizer() {
        let prob = aligned_quadratic(&[0.3, -0.2], 6).unwrap();
        let p = Vector::from_vec(vec![0.3, -0.2, 0.5, 0.5, -0.1, 0.0]);
        let t = mc_success_probability(&prob, &p, 2, 100, &SeededRng::new(1, 1)).unwrap();
        assert_eq!(t.estimate, 1.0);
        assert_eq!(t.hits, 100);
        assert!(sample_norm_ratio(&prob, &p, 2, 10, &SeededRng::new(1, 1)).is_err());
    }

    #[test]
    fn mc_rejects_bad_inputs() {
        let prob = aligned_quadratic(&[0.3, -0.2], 6).unwrap();
        let p = Vector::zeros(6);
        assert!(mc_success_probability(&prob, &p, 1, 500, &SeededRng::new(1, 1)).is_err());
        assert!(mc_success_probability(&prob, &p, 2, 50, &SeededRng::new(1, 1)).is_err());
        assert!(
            mc_success_probability(&prob, &Vector::zeros(5), 2, 500, &SeededRng::new(1, 1))
                .is_err()
        );
    }

    #[test]
    fn tau_bound_values() {
        let q = QuadratureConfig::default();
        let (tau, tau0) = tau_bounds(1, 1, 1, &q).unwrap();
        assert!((tau0 - 0.5).abs() < 1e-6);
        assert!((tau - 0.25).abs() < 1e-6);
        for m in 1..6 {
            let (t, t0) = tau_bounds(m, 2, 2, &q).unwrap();
            assert!(t <= t0 && t > 0.0 && t0 <= 1.0);
        }
    }

    #[test]
    fn convergence_bound_and_k_xi() {
        assert_eq!(convergence_bound(1.0, 1.0, 1).unwrap(), 1.0);
        assert!(convergence_bound(0.0, 0.5, 3).is_err());
        for &(tau, rho, xi) in &[(0.1, 0.9, 0.95), (0.01, 0.5, 0.5), (0.3, 1.0, 0.999)] {
            let k = k_xi(tau, rho, xi).unwrap();
            assert!(convergence_bound(tau, rho, k).unwrap() >= xi);
        }
        assert!(k_xi(0.5, 0.5, 1.0).is_err());
    }

    #[test]
    fn tau_eps_positive_and_monotone_in_eps() {
        let a = tau_eps(3, 1, 5, 1e-2, 2.0, 0.5).unwrap();
        let b = tau_eps(3, 1, 5, 1e-1, 2.0, 0.5).unwrap();
        assert!(a > 0.0 && b > a);
        assert!(tau_eps(3, 1, 5, 0.0, 2.0, 0.5).is_err());
    }

    #[test]
    fn sphere_cdf_matches_uniform_circle() {
        // m = 2: first coordinate is cos θ, θ uniform
        for t in [-0.9f64, -0.3, 0.0, 0.4, 0.8] {
            let exact = 1.0 - t.acos() / std::f64::consts::PI;
            assert!((sphere_coordinate_cdf(t, 2) - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn spherical_check_negative_controls() {
        let prob = aligned_quadratic(&[0.4, 0.1], 6).unwrap();
        let p = Vector::zeros(6);
        let ws = sample_w(&prob, &p, 3, 2000, &SeededRng::new(9, 9)).unwrap();
        assert!(spherical_check(&ws, 0.01).unwrap().passed);
        let bent: Vec<Vector> = ws
            .iter()
            .map(|w| {
                let mut w = w.clone();
                w[0] *= 2.0;
                w
            })
            .collect();
        let c = spherical_check(&bent, 0.01).unwrap();
        assert!(c.cov_deviation > c.cov_tolerance && !c.passed);
        let one = aligned_quadratic(&[0.4], 2).unwrap();
        let w1 = sample_w(&one, &Vector::zeros(2), 1, 2000, &SeededRng::new(9, 8)).unwrap();
        let c1 = spherical_check(&w1, 0.01).unwrap();
        assert!(c1.ks.is_none() && c1.passed);
    }

    #[test]
    fn f_moment_matches() {
        // F(v1, v2) has mean v2/(v2 - 2) for v2 > 2: d_e = 1, d = 4 gives v2 = 4
        let prob = aligned_quadratic(&[0.6], 6).unwrap();
        let p = Vector::zeros(6);
        let ws = sample_w(&prob, &p, 4, 20_000, &SeededRng::new(3, 3)).unwrap();
        let xs = f_statistics(&prob, &p, 4, &ws);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 2.0).abs() <= 3.0 * (var / n).sqrt(), "{mean}");
    }

    #[test]
    fn reconstruction_identity_holds() {
        let mut rng = SeededRng::new(5, 5);
        let base = BaseFunction::by_name("hartmann3").unwrap();
        let prob = crate::problems::lift(&base, 9, &mut rng).unwrap();
        let p = sample_uniform_box(9, &mut rng);
        let sub: &EffectiveSubspace = prob.subspace();
        for _ in 0..20 {
            let a = sample_gaussian(9, 4, &mut rng);
            let rm = reduced_minimizer(sub, &a, prob.x_top_star(), &p).unwrap();
            let w = compute_w(sub, &a, &rm.y).unwrap();
            let (xt, _) = sub.project(prob.x_top_star()).unwrap();
            let (pt, _) = sub.project(&p).unwrap();
            let lhs = &a * &rm.y;
            let rhs = &xt - &pt + sub.v() * &w;
            assert!((lhs - rhs).amax() <= 1e-8);
            assert!((rm.z.norm() - (&xt - &pt).norm()).abs() <= 1e-10);
        }
    }

    #[test]
    fn report_serializes() {
        let mut r = TheoryReport::default();
        r.push("a", true, 1, &[("x", 1.0)]);
        r.push("b", false, 1, &[("y", 2.0)]);
        assert_eq!(r.violations().len(), 1);
        assert!(r.to_json().unwrap().contains("\"b\""));
        assert_eq!(r.to_csv().unwrap().lines().count(), 3);
    }
}
