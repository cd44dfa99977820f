//! Subproblem solvers for the reduced problem: a deterministic DIRECT, a
//! bound-aware Nelder–Mead used single- or multi-start, and random search.
//!
//! Every solver evaluates `y = 0` first, so the anchor `p` is always tried
//! and a feasible point is always on record.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::embedcore::{SeededRng, Vector};
use crate::error::{Error, Result};
use crate::reduced::{ReducedProblem, SolveResult, SolveStatus, YBox};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverBudget {
    pub max_evals: u64,
    /// Stop as soon as a feasible value `≤ target_value` is seen.
    pub target_value: f64,
    #[serde(default, with = "opt_secs")]
    pub wall_limit: Option<Duration>,
}

mod opt_secs {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(v: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        v.map(|d| d.as_secs_f64()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.map(Duration::from_secs_f64))
    }
}

impl SolverBudget {
    pub fn new(max_evals: u64) -> Self {
        Self {
            max_evals,
            target_value: f64::NEG_INFINITY,
            wall_limit: None,
        }
    }

    pub fn with_target(mut self, target: f64) -> Self {
        self.target_value = target;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.max_evals == 0 {
            return Err(Error::InvalidArgument("max_evals must be >= 1".into()));
        }
        if self.target_value.is_nan() {
            return Err(Error::InvalidArgument("target value is NaN".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SolverKind {
    DirectGlobal,
    MultiStartLocal { starts: usize },
    SingleStartLocal,
    RandomSearch,
}

impl SolverKind {
    pub fn label(&self) -> String {
        match self {
            Self::DirectGlobal => "direct".into(),
            Self::MultiStartLocal { starts } => format!("multistart{starts}"),
            Self::SingleStartLocal => "local".into(),
            Self::RandomSearch => "random".into(),
        }
    }

    pub fn is_local(&self) -> bool {
        matches!(self, Self::MultiStartLocal { .. } | Self::SingleStartLocal)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverTuning {
    /// DIRECT balance parameter.
    pub eps_direct: f64,
    /// Nelder–Mead stops when the simplex diameter drops below this.
    pub simplex_tol: f64,
    /// Initial simplex edge as a fraction of the box width.
    pub initial_step: f64,
}

impl Default for SolverTuning {
    fn default() -> Self {
        Self {
            eps_direct: 1e-4,
            simplex_tol: 1e-8,
            initial_step: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    #[serde(flatten)]
    pub kind: SolverKind,
    #[serde(default)]
    pub tuning: SolverTuning,
    /// Assumed per-solve success probability, used only by bound checks.
    #[serde(default = "one")]
    pub rho_assumed: f64,
}

fn one() -> f64 {
    1.0
}

impl SolverSpec {
    pub fn new(kind: SolverKind) -> Self {
        Self {
            kind,
            tuning: SolverTuning::default(),
            rho_assumed: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let SolverKind::MultiStartLocal { starts } = self.kind {
            if starts == 0 {
                return Err(Error::InvalidArgument(
                    "multi-start needs >= 1 start".into(),
                ));
            }
        }
        if !(self.rho_assumed > 0.0 && self.rho_assumed <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "rho_assumed = {} must lie in (0, 1]",
                self.rho_assumed
            )));
        }
        let t = &self.tuning;
        if !(t.eps_direct >= 0.0) || !(t.simplex_tol > 0.0) || !(t.initial_step > 0.0) {
            return Err(Error::InvalidArgument("invalid solver tuning".into()));
        }
        Ok(())
    }
}

/// Wraps the reduced problem with budget, target and wall-clock checks.
struct Driver<'r, 'a> {
    rp: &'r mut ReducedProblem<'a>,
    max_evals: u64,
    target: f64,
    deadline: Option<Instant>,
    calls: u64,
    call_cap: u64,
    stop: Option<SolveStatus>,
}

impl<'r, 'a> Driver<'r, 'a> {
    fn new(rp: &'r mut ReducedProblem<'a>, budget: &SolverBudget) -> Self {
        let base = rp.evals();
        Self {
            rp,
            max_evals: base + budget.max_evals,
            target: budget.target_value,
            deadline: budget.wall_limit.map(|w| Instant::now() + w),
            calls: 0,
            // infeasible trial points are free, so cap total calls as well
            call_cap: 20 * budget.max_evals + 1000,
            stop: None,
        }
    }

    fn evals(&self) -> u64 {
        self.rp.evals()
    }

    /// `None` once the run must stop.
    fn eval(&mut self, y: &Vector) -> Result<Option<f64>> {
        self.eval_within(y, u64::MAX)
    }

    /// As [`Self::eval`], but also refuses once `limit` evaluations are used.
    fn eval_within(&mut self, y: &Vector, limit: u64) -> Result<Option<f64>> {
        if self.stop.is_some() || self.evals() >= limit {
            return Ok(None);
        }
        if self.calls >= self.call_cap || self.deadline.is_some_and(|d| Instant::now() >= d) {
            self.stop = Some(SolveStatus::BudgetExhausted);
            return Ok(None);
        }
        self.calls += 1;
        let f = self.rp.penalized_objective(y)?;
        if self.rp.best_value().is_some_and(|b| b <= self.target) {
            self.stop = Some(SolveStatus::TargetReached);
        } else if self.evals() >= self.max_evals {
            self.stop = Some(SolveStatus::BudgetExhausted);
        }
        Ok(Some(f))
    }
}

/// Solves the reduced problem with the configured method.
pub fn solve(
    rp: &mut ReducedProblem<'_>,
    spec: &SolverSpec,
    budget: &SolverBudget,
    rng: &mut SeededRng,
) -> Result<SolveResult> {
    spec.validate()?;
    budget.validate()?;
    let mut drv = Driver::new(rp, budget);
    let origin = Vector::zeros(drv.rp.dim());
    drv.eval(&origin)?;
    let status = match drv.stop {
        Some(s) => s,
        None => match spec.kind {
            SolverKind::DirectGlobal => run_direct(&mut drv, spec.tuning.eps_direct)?,
            SolverKind::SingleStartLocal => {
                let limit = drv.max_evals;
                let f0 = drv.rp.origin_value();
                nelder_mead(&mut drv, &origin, f0, limit, &spec.tuning)?
            }
            SolverKind::MultiStartLocal { starts } => {
                multi_start(&mut drv, starts, &spec.tuning, rng)?
            }
            SolverKind::RandomSearch => random_search(&mut drv, rng)?,
        },
    };
    let status = drv.stop.unwrap_or(status);
    rp.result(status)
}

/// A hyperrectangle of the DIRECT partition in normalized `[0, 1]^d`
/// coordinates; side `i` has length `3^{-levels[i]}`.
#[derive(Clone, Debug)]
struct Rect {
    center: Vec<f64>,
    levels: Vec<u32>,
    f: f64,
}

/// Deepest trisection level; sides below `3^-MAX_LEVEL` are not split.
const MAX_LEVEL: u32 = 30;

fn half_diagonal(levels: &[u32]) -> f64 {
    0.5 * levels
        .iter()
        .map(|&l| 9f64.powi(-(l as i32)))
        .sum::<f64>()
        .sqrt()
}

/// Outcome of one DIRECT iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DirectStep {
    Continue,
    /// The evaluator asked to stop.
    Stopped,
    /// No rectangle can be divided further.
    Exhausted,
}

/// The DIRECT partition over a box.
#[derive(Clone, Debug)]
pub struct DirectState {
    lower: Vec<f64>,
    width: Vec<f64>,
    eps: f64,
    rects: Vec<Rect>,
    best: Option<(Vec<f64>, f64)>,
    iterations: usize,
}

impl DirectState {
    pub fn new(lower: &[f64], upper: &[f64], eps: f64) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::DimensionMismatch("DIRECT box bounds".into()));
        }
        if lower
            .iter()
            .zip(upper)
            .any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite())
        {
            return Err(Error::InvalidArgument(
                "DIRECT box must be bounded and nonempty".into(),
            ));
        }
        Ok(Self {
            lower: lower.to_vec(),
            width: lower.iter().zip(upper).map(|(l, u)| u - l).collect(),
            eps,
            rects: Vec::new(),
            best: None,
            iterations: 0,
        })
    }

    fn to_box(&self, u: &[f64]) -> Vector {
        Vector::from_iterator(
            u.len(),
            u.iter()
                .enumerate()
                .map(|(i, v)| self.lower[i] + v * self.width[i]),
        )
    }

    fn record(&mut self, u: &[f64], f: f64) {
        if self.best.as_ref().is_none_or(|(_, b)| f < *b) {
            self.best = Some((u.to_vec(), f));
        }
    }

    pub fn best(&self) -> Option<(Vector, f64)> {
        self.best.as_ref().map(|(u, f)| (self.to_box(u), *f))
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn rectangles(&self) -> usize {
        self.rects.len()
    }

    /// Evaluates the center of the box.
    pub fn initialize<F>(&mut self, eval: &mut F) -> Result<DirectStep>
    where
        F: FnMut(&Vector) -> Result<Option<f64>>,
    {
        let d = self.lower.len();
        let c = vec![0.5; d];
        match eval(&self.to_box(&c))? {
            Some(f) => {
                self.record(&c, f);
                self.rects.push(Rect {
                    center: c,
                    levels: vec![0; d],
                    f,
                });
                Ok(DirectStep::Continue)
            }
            None => Ok(DirectStep::Stopped),
        }
    }

    /// Indices of potentially optimal rectangles: per size class the lowest
    /// value, kept if it lies on the lower-right convex hull with slope
    /// satisfying the `ε` sufficient-decrease test.
    fn potentially_optimal(&self) -> Vec<usize> {
        let mut groups: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
        for (i, r) in self.rects.iter().enumerate() {
            if r.levels.iter().all(|&l| l >= MAX_LEVEL) {
                continue;
            }
            let mut key = r.levels.clone();
            key.sort_unstable();
            match groups.get(&key) {
                Some(&j) if self.rects[j].f <= r.f => {}
                _ => {
                    groups.insert(key, i);
                }
            }
        }
        let cands: Vec<(f64, f64, usize)> = groups
            .values()
            .map(|&i| (half_diagonal(&self.rects[i].levels), self.rects[i].f, i))
            .collect();
        let f_min = self.best.as_ref().map(|b| b.1).unwrap_or(f64::INFINITY);
        let mut out = Vec::new();
        for &(dj, fj, j) in &cands {
            let mut k_low: f64 = 0.0;
            let mut k_up = f64::INFINITY;
            for &(di, fi, _) in &cands {
                if di < dj {
                    k_low = k_low.max((fj - fi) / (dj - di));
                } else if di > dj {
                    k_up = k_up.min((fi - fj) / (di - dj));
                }
            }
            if k_low > k_up {
                continue;
            }
            if k_up.is_finite()
                && f_min.is_finite()
                && fj - dj * k_up > f_min - self.eps * f_min.abs()
            {
                continue;
            }
            out.push(j);
        }
        out
    }

    /// Divides every potentially optimal rectangle once.
    pub fn iterate<F>(&mut self, eval: &mut F) -> Result<DirectStep>
    where
        F: FnMut(&Vector) -> Result<Option<f64>>,
    {
        if self.rects.is_empty() {
            return self.initialize(eval);
        }
        let selected = self.potentially_optimal();
        if selected.is_empty() {
            return Ok(DirectStep::Exhausted);
        }
        self.iterations += 1;
        for idx in selected {
            let rect = self.rects[idx].clone();
            let lmin = *rect.levels.iter().min().expect("d >= 1");
            let delta = 3f64.powi(-(lmin as i32 + 1));
            let long: Vec<usize> = (0..rect.levels.len())
                .filter(|&i| rect.levels[i] == lmin)
                .collect();
            let mut probes = Vec::with_capacity(long.len());
            for &i in &long {
                let mut lo = rect.center.clone();
                lo[i] -= delta;
                let mut hi = rect.center.clone();
                hi[i] += delta;
                let Some(flo) = eval(&self.to_box(&lo))? else {
                    return Ok(DirectStep::Stopped);
                };
                self.record(&lo, flo);
                let Some(fhi) = eval(&self.to_box(&hi))? else {
                    // keep the evaluated point in the partition bookkeeping
                    return Ok(DirectStep::Stopped);
                };
                self.record(&hi, fhi);
                probes.push((flo.min(fhi), i, lo, flo, hi, fhi));
            }
            probes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut levels = rect.levels.clone();
            for (_, i, lo, flo, hi, fhi) in probes {
                levels[i] += 1;
                self.rects.push(Rect {
                    center: lo,
                    levels: levels.clone(),
                    f: flo,
                });
                self.rects.push(Rect {
                    center: hi,
                    levels: levels.clone(),
                    f: fhi,
                });
            }
            self.rects[idx].levels = levels;
        }
        Ok(DirectStep::Continue)
    }
}

fn run_direct(drv: &mut Driver<'_, '_>, eps: f64) -> Result<SolveStatus> {
    let b = drv.rp.y_box().clone();
    let mut state = DirectState::new(b.lower.as_slice(), b.upper.as_slice(), eps)?;
    let mut eval = |y: &Vector| drv.eval(y);
    loop {
        match state.iterate(&mut eval)? {
            DirectStep::Continue => {}
            DirectStep::Stopped => return Ok(SolveStatus::BudgetExhausted),
            DirectStep::Exhausted => return Ok(SolveStatus::Converged),
        }
    }
}

fn nm_coefficients(n: usize) -> (f64, f64, f64, f64) {
    if n >= 2 {
        let nf = n as f64;
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    }
}

/// Nelder–Mead from `start` (whose value may already be known) using the
/// penalized objective, until the simplex diameter falls below
/// `tuning.simplex_tol` or `limit` total evaluations are reached.
fn nelder_mead(
    drv: &mut Driver<'_, '_>,
    start: &Vector,
    f_start: Option<f64>,
    limit: u64,
    tuning: &SolverTuning,
) -> Result<SolveStatus> {
    let n = start.len();
    let b: YBox = drv.rp.y_box().clone();
    let (alpha, beta, gamma, delta) = nm_coefficients(n);
    let mut simplex: Vec<(Vector, f64)> = Vec::with_capacity(n + 1);
    let f0 = match f_start {
        Some(f) => f,
        None => match drv.eval_within(start, limit)? {
            Some(f) => f,
            None => return Ok(SolveStatus::BudgetExhausted),
        },
    };
    simplex.push((start.clone(), f0));
    for i in 0..n {
        let step = tuning.initial_step * b.width(i);
        let mut v = start.clone();
        // step toward the far side of the box
        if start[i] + step > b.upper[i] && start[i] - step >= b.lower[i] {
            v[i] -= step;
        } else {
            v[i] += step;
        }
        let Some(f) = drv.eval_within(&v, limit)? else {
            return Ok(SolveStatus::BudgetExhausted);
        };
        simplex.push((v, f));
    }
    macro_rules! eval_or_stop {
        ($y:expr) => {
            match drv.eval_within(&$y, limit)? {
                Some(f) => f,
                None => return Ok(SolveStatus::BudgetExhausted),
            }
        };
    }
    let mut sum = simplex.iter().fold(Vector::zeros(n), |acc, (v, _)| acc + v);
    let mut iter = 0usize;
    let check_every = (n / 4).max(1);
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        // the diameter costs O(n²); checking it every few iterations is enough
        if iter.is_multiple_of(check_every) {
            let diam = simplex[1..]
                .iter()
                .map(|(v, _)| (v - &simplex[0].0).amax())
                .fold(0.0, f64::max);
            if diam < tuning.simplex_tol {
                return Ok(SolveStatus::Converged);
            }
        }
        iter += 1;
        let (worst, f_worst) = simplex[n].clone();
        let centroid = (&sum - &worst) / n as f64;
        let f_best = simplex[0].1;
        let f_second = simplex[n - 1].1;
        let xr = &centroid + (&centroid - &worst) * alpha;
        let fr = eval_or_stop!(xr);
        let replacement = if fr < f_best {
            let xe = &centroid + (&xr - &centroid) * beta;
            let fe = eval_or_stop!(xe);
            Some(if fe < fr { (xe, fe) } else { (xr, fr) })
        } else if fr < f_second {
            Some((xr, fr))
        } else {
            let xc = if fr < f_worst {
                &centroid + (&xr - &centroid) * gamma
            } else {
                &centroid + (&worst - &centroid) * gamma
            };
            let fc = eval_or_stop!(xc);
            (fc < fr.min(f_worst)).then_some((xc, fc))
        };
        match replacement {
            Some(v) => {
                sum += &v.0 - &worst;
                simplex[n] = v;
            }
            None => {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let v = &best + (&vertex.0 - &best) * delta;
                    let f = eval_or_stop!(v);
                    *vertex = (v, f);
                }
                sum = simplex.iter().fold(Vector::zeros(n), |acc, (v, _)| acc + v);
            }
        }
    }
}

/// A feasible uniform draw from the y-box; falls back to shrinking a box
/// draw toward the origin (always feasible) after 1000 rejections.
pub fn feasible_start(rp: &ReducedProblem<'_>, rng: &mut SeededRng) -> Vector {
    let b = rp.y_box();
    let draw =
        |rng: &mut SeededRng| Vector::from_fn(b.dim(), |j, _| rng.uniform(b.lower[j], b.upper[j]));
    for _ in 0..1000 {
        let y = draw(rng);
        if rp.is_feasible(&y) {
            return y;
        }
    }
    let mut y = draw(rng);
    while !rp.is_feasible(&y) {
        y *= 0.5;
    }
    y
}

fn multi_start(
    drv: &mut Driver<'_, '_>,
    starts: usize,
    tuning: &SolverTuning,
    rng: &mut SeededRng,
) -> Result<SolveStatus> {
    let total = drv.max_evals - drv.evals() + 1;
    let share = (total / starts as u64).max(1);
    let first_limit = drv.evals() - 1 + share + total % starts as u64;
    let origin = Vector::zeros(drv.rp.dim());
    let f0 = drv.rp.origin_value();
    let mut status = nelder_mead(drv, &origin, f0, first_limit, tuning)?;
    for _ in 1..starts {
        if drv.stop.is_some() {
            break;
        }
        let y = feasible_start(drv.rp, rng);
        let limit = drv.evals() + share;
        status = nelder_mead(drv, &y, None, limit, tuning)?;
    }
    Ok(status)
}

fn random_search(drv: &mut Driver<'_, '_>, rng: &mut SeededRng) -> Result<SolveStatus> {
    loop {
        let y = feasible_start(drv.rp, rng);
        if drv.eval(&y)?.is_none() {
            return Ok(SolveStatus::BudgetExhausted);
        }
    }
}
