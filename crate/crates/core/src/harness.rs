//! Experiment orchestration: the problem × dimension × variant × solver ×
//! repetition matrix, no-embedding baselines, median tables, Dolan–Moré
//! performance profiles, and CSV/SVG output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedcore::{label_tag, stream_id, SeededRng, Vector};
use crate::error::{Error, Result};
use crate::problems::{BaseFunction, Manifest, ManifestEntry, SyntheticProblem};
use crate::reduced::ReducedProblem;
use crate::solvers::{solve, SolverBudget, SolverKind, SolverSpec};
use crate::xrego::{
    digest, run, PPolicy, ResultRow, RunConfig, RunEntry, RunFailure, RunRecord, Termination,
};

/// Variant label of the direct full-dimensional baseline.
pub const NO_EMBEDDING: &str = "no-embedding";

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "XREGO_WORKERS";

/// Largest `D` allowed without `allow_large_dims`.
pub const DESK_MAX_DIM: usize = 100;

/// Evaluation budgets for one solver, inside X-REGO and without embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetRule {
    /// Per reduced problem.
    pub embedded_evals: u64,
    /// Solver applied directly to the `D`-dimensional problem.
    pub no_embedding_solver: SolverSpec,
    pub no_embedding_evals: u64,
}

impl BudgetRule {
    /// Default budgets: 3000 evaluations per reduced problem for DIRECT,
    /// 1000 per local start, and 60000 or 100 starts without embedding.
    pub fn default_for(kind: SolverKind) -> Self {
        let multi100 = SolverSpec::new(SolverKind::MultiStartLocal { starts: 100 });
        match kind {
            SolverKind::DirectGlobal => Self {
                embedded_evals: 3000,
                no_embedding_solver: SolverSpec::new(SolverKind::DirectGlobal),
                no_embedding_evals: 60_000,
            },
            SolverKind::MultiStartLocal { starts } => Self {
                embedded_evals: 1000 * starts as u64,
                no_embedding_solver: multi100,
                no_embedding_evals: 300_000,
            },
            SolverKind::SingleStartLocal => Self {
                embedded_evals: 1000,
                no_embedding_solver: multi100,
                no_embedding_evals: 300_000,
            },
            SolverKind::RandomSearch => Self {
                embedded_evals: 3000,
                no_embedding_solver: SolverSpec::new(SolverKind::RandomSearch),
                no_embedding_evals: 60_000,
            },
        }
    }

    fn validate(&self) -> Result<()> {
        if self.embedded_evals == 0 || self.no_embedding_evals == 0 {
            return Err(Error::InvalidArgument(
                "budgets must be >= 1 evaluation".into(),
            ));
        }
        self.no_embedding_solver.validate()
    }
}

fn default_dims() -> Vec<usize> {
    vec![10, 100]
}
fn default_offsets() -> Vec<usize> {
    vec![0]
}
fn default_reps() -> usize {
    5
}
fn default_k() -> usize {
    100
}
fn default_eps() -> f64 {
    1e-3
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    /// Master seed for every cell.
    pub seed: u64,
    /// Seed of the problem instances (rotations).
    #[serde(default)]
    pub problem_seed: u64,
    /// Benchmark names; empty selects the whole catalog.
    #[serde(default)]
    pub problems: Vec<String>,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    /// `d = d_e + offset` for each offset (capped at `D`).
    #[serde(default = "default_offsets")]
    pub d_offsets: Vec<usize>,
    pub variants: Vec<PPolicy>,
    pub solvers: Vec<SolverSpec>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_k")]
    pub k_max: usize,
    #[serde(default = "default_eps")]
    pub epsilon: f64,
    /// Keyed by solver label; missing entries get [`BudgetRule::default_for`].
    #[serde(default)]
    pub budgets: BTreeMap<String, BudgetRule>,
    #[serde(default = "default_true")]
    pub include_no_embedding: bool,
    /// Opt-in for `D > 100`.
    #[serde(default)]
    pub allow_large_dims: bool,
}

impl ExperimentPlan {
    pub fn new(variants: Vec<PPolicy>, solvers: Vec<SolverSpec>, seed: u64) -> Self {
        let mut plan = Self {
            seed,
            problem_seed: 0,
            problems: Vec::new(),
            dims: default_dims(),
            d_offsets: default_offsets(),
            variants,
            solvers,
            reps: default_reps(),
            k_max: default_k(),
            epsilon: default_eps(),
            budgets: BTreeMap::new(),
            include_no_embedding: true,
            allow_large_dims: false,
        };
        plan.fill_budgets();
        plan
    }

    /// The local-solver comparison: LA/LN-REGO against multi-start without embedding.
    pub fn local_comparison(seed: u64) -> Self {
        Self::new(
            vec![PPolicy::local_adaptive(), PPolicy::UniformRandom],
            vec![SolverSpec::new(SolverKind::SingleStartLocal)],
            seed,
        )
    }

    fn fill_budgets(&mut self) {
        for s in &self.solvers {
            self.budgets
                .entry(s.kind.label())
                .or_insert_with(|| BudgetRule::default_for(s.kind));
        }
    }

    pub fn budget(&self, solver: &SolverSpec) -> Result<&BudgetRule> {
        self.budgets.get(&solver.kind.label()).ok_or_else(|| {
            Error::InvalidArgument(format!("no budget for solver '{}'", solver.kind.label()))
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 || self.k_max == 0 {
            return Err(Error::InvalidArgument("reps and K must be >= 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be > 0".into()));
        }
        if self.dims.is_empty() || self.solvers.is_empty() {
            return Err(Error::InvalidArgument(
                "need at least one dimension and one solver".into(),
            ));
        }
        if self.variants.is_empty() && !self.include_no_embedding {
            return Err(Error::InvalidArgument(
                "nothing to run: no variants and no baseline".into(),
            ));
        }
        if self.d_offsets.is_empty() {
            return Err(Error::InvalidArgument("d_offsets must not be empty".into()));
        }
        for &dim in &self.dims {
            if dim == 0 {
                return Err(Error::InvalidArgument("D must be >= 1".into()));
            }
            if dim > DESK_MAX_DIM && !self.allow_large_dims {
                return Err(Error::InvalidArgument(format!(
                    "D = {dim} exceeds {DESK_MAX_DIM}; set allow_large_dims"
                )));
            }
        }
        for name in &self.problems {
            BaseFunction::by_name(name)?;
        }
        for s in &self.solvers {
            s.validate()?;
            self.budget(s)?.validate()?;
        }
        for v in &self.variants {
            RunConfig::new(1, *v, self.solvers[0], 1, 0).validate()?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut plan: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        plan.fill_budgets();
        Ok(plan)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Problem instances selected by the plan.
    pub fn manifest(&self) -> Result<Manifest> {
        let names: Vec<String> = if self.problems.is_empty() {
            BaseFunction::catalog_names()
                .iter()
                .map(|s| s.to_string())
                .collect()
        } else {
            self.problems.clone()
        };
        let mut problems = Vec::new();
        for &dim in &self.dims {
            for name in &names {
                problems.push(ManifestEntry::new(name, dim, self.problem_seed)?);
            }
        }
        Ok(Manifest { problems })
    }

    /// Every cell of the plan over `manifest`, in sorted order.
    pub fn cells(&self, manifest: &Manifest) -> Vec<CellKey> {
        let mut keys = Vec::new();
        for e in &manifest.problems {
            for s in &self.solvers {
                let solver = s.kind.label();
                for rep in 0..self.reps {
                    for v in &self.variants {
                        let mut ds: Vec<usize> = self
                            .d_offsets
                            .iter()
                            .map(|o| (e.d_e + o).min(e.dim))
                            .collect();
                        ds.dedup();
                        for d in ds {
                            keys.push(CellKey {
                                problem: e.name.clone(),
                                dim: e.dim,
                                d,
                                variant: v.label().to_string(),
                                solver: solver.clone(),
                                rep,
                            });
                        }
                    }
                    if self.include_no_embedding {
                        keys.push(CellKey {
                            problem: e.name.clone(),
                            dim: e.dim,
                            d: e.dim,
                            variant: NO_EMBEDDING.to_string(),
                            solver: solver.clone(),
                            rep,
                        });
                    }
                }
            }
        }
        keys.sort();
        keys.dedup();
        keys
    }
}

/// Identifies one run of the experiment matrix.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub problem: String,
    #[serde(rename = "D")]
    pub dim: usize,
    pub d: usize,
    pub variant: String,
    pub solver: String,
    pub rep: usize,
}

impl CellKey {
    /// The cell's RNG seed, derived from the plan seed and its labels.
    pub fn seed(&self, master: u64) -> u64 {
        stream_id(&[
            master,
            label_tag(&self.problem),
            self.dim as u64,
            self.d as u64,
            label_tag(&self.variant),
            label_tag(&self.solver),
            self.rep as u64,
        ])
    }

    fn of(row: &ResultRow) -> Self {
        Self {
            problem: row.problem.clone(),
            dim: row.dim,
            d: row.d,
            variant: row.variant.clone(),
            solver: row.solver.clone(),
            rep: row.rep,
        }
    }
}

/// Per-cell outcome recomputed from `results.csv` rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub key: CellKey,
    /// Evaluations spent until termination (the cap when unsolved).
    pub evals: u64,
    pub solved: bool,
    pub errored: bool,
    pub embeddings: usize,
}

impl CellSummary {
    /// `N_p(A)`: evaluations to reach the target, `None` when unsolved.
    pub fn cost(&self) -> Option<u64> {
        (self.solved && !self.errored).then_some(self.evals)
    }
}

/// Rows of every cell plus the cell errors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub errors: Vec<(CellKey, String)>,
}

impl ResultTable {
    pub fn summaries(&self) -> Vec<CellSummary> {
        summarize(&self.rows)
    }
}

/// Groups rows by cell; the last row of each cell decides the outcome.
pub fn summarize(rows: &[ResultRow]) -> Vec<CellSummary> {
    let mut cells: BTreeMap<CellKey, CellSummary> = BTreeMap::new();
    for r in rows {
        let key = CellKey::of(r);
        let e = cells.entry(key.clone()).or_insert(CellSummary {
            key,
            evals: 0,
            solved: false,
            errored: false,
            embeddings: 0,
        });
        if r.k >= e.embeddings {
            e.embeddings = r.k;
            e.evals = r.cum_evals;
            e.solved = r.terminated == Termination::EpsReached(0).label();
            e.errored = r.terminated == "error";
        }
    }
    cells.into_values().collect()
}

/// Worker count from `XREGO_WORKERS`, if set and valid.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n >= 1)
            .map(Some)
            .ok_or_else(|| {
                Error::InvalidArgument(format!("{WORKERS_ENV}='{v}' is not a positive integer"))
            }),
        Err(_) => Ok(None),
    }
}

fn failure_rows(key: &CellKey, failure: &RunFailure) -> Vec<ResultRow> {
    let mut rows = failure.record.rows(key.rep);
    if rows.is_empty() {
        rows.push(ResultRow {
            problem: key.problem.clone(),
            dim: key.dim,
            d: key.d,
            variant: key.variant.clone(),
            solver: key.solver.clone(),
            rep: key.rep,
            k: 0,
            f_xk: f64::NAN,
            f_xopt: f64::NAN,
            cum_evals: 0,
            terminated: "error".into(),
        });
    }
    rows
}

/// Applies the baseline solver directly to the `D`-dimensional problem;
/// recorded as a single "embedding" at `p = 0`.
pub fn run_no_embedding(
    prob: &SyntheticProblem,
    spec: &SolverSpec,
    max_evals: u64,
    epsilon: f64,
    seed: u64,
    solver_label: &str,
) -> std::result::Result<RunRecord, RunFailure> {
    let mut record = RunRecord {
        problem: prob.name().to_string(),
        dim: prob.dim(),
        d: prob.dim(),
        variant: NO_EMBEDDING.to_string(),
        solver: solver_label.to_string(),
        f_star: prob.f_star(),
        epsilon,
        entries: Vec::new(),
        x_opt_index: Vec::new(),
        termination: None,
    };
    let attempt = (|| -> Result<_> {
        let mut rp = ReducedProblem::full_dimensional(prob)?;
        let budget = SolverBudget::new(max_evals).with_target(prob.f_star() + epsilon);
        let mut rng = SeededRng::new(seed, label_tag("solve"));
        let res = solve(&mut rp, spec, &budget, &mut rng)?;
        Ok((res, rp.origin_value()))
    })();
    match attempt {
        Ok((res, f_p)) => {
            let p = Vector::zeros(prob.dim());
            let success = res.f_best - prob.f_star() <= epsilon;
            record.entries.push(RunEntry {
                k: 1,
                f_xk: res.f_best,
                f_xopt: res.f_best,
                evals: res.evals,
                cum_evals: res.evals,
                p_digest: digest(&p),
                p,
                f_p: f_p.unwrap_or(f64::NAN),
                x: res.x_best,
                success,
                status: res.status,
            });
            record.x_opt_index.push(0);
            record.termination = Some(if success {
                Termination::EpsReached(1)
            } else {
                Termination::ExhaustedK
            });
            Ok(record)
        }
        Err(source) => Err(RunFailure {
            k: 1,
            record: Box::new(record),
            source,
        }),
    }
}

fn find_spec<'p>(plan: &'p ExperimentPlan, label: &str) -> Result<&'p SolverSpec> {
    plan.solvers
        .iter()
        .find(|s| s.kind.label() == label)
        .ok_or_else(|| Error::InvalidArgument(format!("solver '{label}' is not in the plan")))
}

/// Runs one cell; deterministic in `(plan.seed, key)`.
pub fn run_cell(
    plan: &ExperimentPlan,
    prob: &SyntheticProblem,
    key: &CellKey,
) -> Result<std::result::Result<RunRecord, RunFailure>> {
    let spec = find_spec(plan, &key.solver)?;
    let rule = plan.budget(spec)?;
    let seed = key.seed(plan.seed);
    let prob = prob.fresh_clone();
    if key.variant == NO_EMBEDDING {
        return Ok(run_no_embedding(
            &prob,
            &rule.no_embedding_solver,
            rule.no_embedding_evals,
            plan.epsilon,
            seed,
            &key.solver,
        ));
    }
    let policy = plan
        .variants
        .iter()
        .find(|v| v.label() == key.variant)
        .copied()
        .ok_or_else(|| {
            Error::InvalidArgument(format!("variant '{}' is not in the plan", key.variant))
        })?;
    let mut cfg = RunConfig::new(key.d, policy, *spec, rule.embedded_evals, seed);
    cfg.k_max = plan.k_max;
    cfg.epsilon = plan.epsilon;
    Ok(run(&prob, &cfg))
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}"))),
        None => Ok(f()),
    }
}

/// Executes every cell of the plan in parallel. Cell failures are recorded
/// in the table (as `error` rows) and do not stop the plan.
pub fn run_plan(
    plan: &ExperimentPlan,
    manifest: &Manifest,
    workers: Option<usize>,
) -> Result<ResultTable> {
    plan.validate()?;
    let problems: BTreeMap<(String, usize), std::result::Result<SyntheticProblem, String>> =
        manifest
            .problems
            .par_iter()
            .map(|e| {
                (
                    (e.name.clone(), e.dim),
                    e.build().map_err(|err| err.to_string()),
                )
            })
            .collect();
    let keys = plan.cells(manifest);
    let outcomes: Vec<(CellKey, Vec<ResultRow>, Option<String>)> = with_pool(workers, || {
        keys.par_iter()
            .map(|key| {
                let outcome = match &problems[&(key.problem.clone(), key.dim)] {
                    Ok(prob) => run_cell(plan, prob, key).map_err(|e| e.to_string()),
                    Err(e) => Err(e.clone()),
                };
                match outcome {
                    Ok(Ok(rec)) => (key.clone(), rec.rows(key.rep), None),
                    Ok(Err(fail)) => {
                        let msg = format!("embedding {}: {}", fail.k, fail.source);
                        (key.clone(), failure_rows(key, &fail), Some(msg))
                    }
                    Err(msg) => {
                        let fail = RunFailure {
                            k: 0,
                            record: Box::new(empty_record(key)),
                            source: Error::Solver(msg.clone()),
                        };
                        (key.clone(), failure_rows(key, &fail), Some(msg))
                    }
                }
            })
            .collect()
    })?;
    let mut table = ResultTable::default();
    for (key, rows, err) in outcomes {
        table.rows.extend(rows);
        if let Some(e) = err {
            table.errors.push((key, e));
        }
    }
    Ok(table)
}

fn empty_record(key: &CellKey) -> RunRecord {
    RunRecord {
        problem: key.problem.clone(),
        dim: key.dim,
        d: key.d,
        variant: key.variant.clone(),
        solver: key.solver.clone(),
        f_star: f64::NAN,
        epsilon: f64::NAN,
        entries: Vec::new(),
        x_opt_index: Vec::new(),
        termination: None,
    }
}

/// Re-runs one cell by its key, reproducing the rows of the full plan.
pub fn replay(plan: &ExperimentPlan, manifest: &Manifest, key: &CellKey) -> Result<RunRecord> {
    plan.validate()?;
    if !plan.cells(manifest).contains(key) {
        return Err(Error::InvalidArgument(format!(
            "cell {key:?} is not part of the plan"
        )));
    }
    let entry = manifest
        .problems
        .iter()
        .find(|e| e.name == key.problem && e.dim == key.dim)
        .ok_or_else(|| Error::InvalidArgument("problem not in manifest".into()))?;
    let prob = entry.build()?;
    run_cell(plan, &prob, key)?.map_err(|f| f.source)
}

/// One line of the median table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MedianRow {
    pub solver: String,
    #[serde(rename = "D")]
    pub dim: usize,
    pub variant: String,
    pub cells: usize,
    pub solved: usize,
    /// Median evaluations over all non-failed cells; unsolved cells count
    /// with the evaluations they spent (the cap).
    pub median_evals: f64,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Median evaluations per `(solver, D, variant)`.
pub fn medians(cells: &[CellSummary]) -> Vec<MedianRow> {
    let mut groups: BTreeMap<(String, usize, String), Vec<&CellSummary>> = BTreeMap::new();
    for c in cells.iter().filter(|c| !c.errored) {
        groups
            .entry((c.key.solver.clone(), c.key.dim, c.key.variant.clone()))
            .or_default()
            .push(c);
    }
    groups
        .into_iter()
        .map(|((solver, dim, variant), cs)| {
            let mut v: Vec<f64> = cs.iter().map(|c| c.evals as f64).collect();
            MedianRow {
                solver,
                dim,
                variant,
                cells: cs.len(),
                solved: cs.iter().filter(|c| c.solved).count(),
                median_evals: median(&mut v).unwrap_or(f64::NAN),
            }
        })
        .collect()
}

/// A Dolan–Moré step curve for one algorithm in one `(solver, D)` panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub algorithm: String,
    pub solver: String,
    pub dim: usize,
    /// `(α, π(α))` at every breakpoint, starting at `α = 1` and ending at the
    /// panel's largest finite ratio.
    pub points: Vec<(f64, f64)>,
}

impl ProfileCurve {
    /// `π(α)` of the step function.
    pub fn at(&self, alpha: f64) -> f64 {
        self.points
            .iter()
            .take_while(|(a, _)| *a <= alpha)
            .last()
            .map_or(0.0, |(_, p)| *p)
    }
}

/// Profiles of `algorithms` on cells sharing one `(solver, D)`; each
/// `(problem, rep)` pair is one profile problem and unsolved cells cost `∞`.
pub fn performance_profile(
    cells: &[CellSummary],
    algorithms: &[String],
) -> Result<Vec<ProfileCurve>> {
    if cells.is_empty() || algorithms.is_empty() {
        return Err(Error::InvalidArgument("empty result table".into()));
    }
    let (solver, dim) = (cells[0].key.solver.clone(), cells[0].key.dim);
    let mut cost: BTreeMap<(String, usize), BTreeMap<&str, Option<f64>>> = BTreeMap::new();
    for c in cells {
        if !algorithms.contains(&c.key.variant) {
            continue;
        }
        if c.key.solver != solver || c.key.dim != dim {
            return Err(Error::InvalidArgument(
                "profile cells must share solver and D".into(),
            ));
        }
        cost.entry((c.key.problem.clone(), c.key.rep))
            .or_default()
            .insert(c.key.variant.as_str(), c.cost().map(|n| n as f64));
    }
    let best: Vec<Option<f64>> = cost
        .values()
        .map(|m| {
            m.values()
                .flatten()
                .copied()
                .fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.min(v))))
        })
        .collect();
    if best.iter().all(Option::is_none) {
        return Err(Error::InvalidArgument(
            "no problem was solved by any algorithm".into(),
        ));
    }
    let n_problems = cost.len() as f64;
    let ratios: Vec<Vec<f64>> = algorithms
        .iter()
        .map(|a| {
            let mut r: Vec<f64> = cost
                .values()
                .zip(&best)
                .filter_map(|(m, b)| {
                    let c = m.get(a.as_str()).copied().flatten()?;
                    // a zero-cost solve (minimizer at the anchor) is as good as the best
                    Some(if c <= b.unwrap_or(c) {
                        1.0
                    } else {
                        c / b.unwrap_or(c).max(1.0)
                    })
                })
                .collect();
            r.sort_by(f64::total_cmp);
            r
        })
        .collect();
    let cap = ratios.iter().flatten().copied().fold(1.0f64, f64::max);
    Ok(algorithms
        .iter()
        .zip(&ratios)
        .map(|(a, r)| {
            let mut points = vec![(
                1.0,
                r.iter().filter(|&&x| x <= 1.0).count() as f64 / n_problems,
            )];
            for (i, &x) in r.iter().enumerate() {
                let pi = (i + 1) as f64 / n_problems;
                if x > 1.0 {
                    match points.last_mut() {
                        Some(last) if last.0 == x => last.1 = pi,
                        _ => points.push((x, pi)),
                    }
                }
            }
            if points.last().is_some_and(|l| l.0 < cap) {
                let pi = points.last().map_or(0.0, |l| l.1);
                points.push((cap, pi));
            }
            ProfileCurve {
                algorithm: a.clone(),
                solver: solver.clone(),
                dim,
                points,
            }
        })
        .collect())
}

/// Profiles for every `(solver, D)` panel present in `cells`, comparing all
/// variants of the panel.
pub fn profiles_by_panel(cells: &[CellSummary]) -> Result<Vec<ProfileCurve>> {
    let mut panels: BTreeMap<(String, usize), Vec<CellSummary>> = BTreeMap::new();
    for c in cells {
        panels
            .entry((c.key.solver.clone(), c.key.dim))
            .or_default()
            .push(c.clone());
    }
    let mut curves = Vec::new();
    for cs in panels.values() {
        let mut algs: Vec<String> = cs.iter().map(|c| c.key.variant.clone()).collect();
        algs.sort();
        algs.dedup();
        match performance_profile(cs, &algs) {
            Ok(c) => curves.extend(c),
            Err(Error::InvalidArgument(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(curves)
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Parse(e.to_string())
}

pub fn results_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    if rows.is_empty() {
        w.write_record([
            "problem",
            "D",
            "d",
            "variant",
            "solver",
            "rep",
            "k",
            "f_xk",
            "f_xopt",
            "cum_evals",
            "terminated",
        ])
        .map_err(csv_err)?;
    }
    String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)
}

pub fn parse_results(text: &str) -> Result<Vec<ResultRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<ResultRow>, _>>()
        .map_err(csv_err)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_results(&text)
}

pub fn medians_csv(rows: &[MedianRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)
}

pub fn profiles_csv(curves: &[ProfileCurve]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["solver", "D", "algorithm", "alpha", "pi"])
        .map_err(csv_err)?;
    for c in curves {
        for (a, p) in &c.points {
            w.write_record([
                c.solver.as_str(),
                &c.dim.to_string(),
                &c.algorithm,
                &a.to_string(),
                &p.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// One panel per `(solver, D)`, `log₂ α` on the horizontal axis.
pub fn profiles_svg(curves: &[ProfileCurve]) -> Result<String> {
    if curves.is_empty() {
        return Err(Error::InvalidArgument("no profile curves to draw".into()));
    }
    let mut panels: BTreeMap<(String, usize), Vec<&ProfileCurve>> = BTreeMap::new();
    for c in curves {
        panels.entry((c.solver.clone(), c.dim)).or_default().push(c);
    }
    let mut algs: Vec<&str> = curves.iter().map(|c| c.algorithm.as_str()).collect();
    algs.sort();
    algs.dedup();
    let color = |a: &str| COLORS[algs.iter().position(|x| *x == a).unwrap_or(0) % COLORS.len()];
    let (pw, ph, ml, mt, iw, ih) = (380.0, 280.0, 50.0, 30.0, 300.0, 200.0);
    let dims: Vec<usize> = {
        let mut v: Vec<usize> = panels.keys().map(|k| k.1).collect();
        v.sort();
        v.dedup();
        v
    };
    let solvers: Vec<&String> = {
        let mut v: Vec<&String> = panels.keys().map(|k| &k.0).collect();
        v.dedup();
        v
    };
    let width = pw * dims.len() as f64;
    let height = ph * solvers.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    for ((solver, dim), cs) in &panels {
        let col = dims.iter().position(|d| d == dim).unwrap_or(0) as f64;
        let row = solvers.iter().position(|x| *x == solver).unwrap_or(0) as f64;
        let (ox, oy) = (col * pw + ml, row * ph + mt);
        let amax = cs
            .iter()
            .flat_map(|c| c.points.iter().map(|p| p.0))
            .fold(1.0f64, f64::max);
        let lmax = amax.log2().max(1.0);
        let px = |a: f64| ox + iw * a.log2() / lmax;
        let py = |p: f64| oy + ih * (1.0 - p);
        let _ = writeln!(
            s,
            r#"<g><text x="{:.1}" y="{:.1}" text-anchor="middle">{} D={}</text>"#,
            ox + iw / 2.0,
            oy - 10.0,
            xml_escape(solver),
            dim
        );
        let _ = writeln!(
            s,
            r##"<rect x="{ox:.1}" y="{oy:.1}" width="{iw}" height="{ih}" fill="none" stroke="#444"/>"##
        );
        for t in [0.0, 0.5, 1.0] {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{t}</text>"#,
                ox - 4.0,
                py(t) + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">log2(alpha), max {:.2}</text>"#,
            ox + iw / 2.0,
            oy + ih + 18.0,
            lmax
        );
        for (i, c) in cs.iter().enumerate() {
            let mut pts = String::new();
            let mut prev: Option<f64> = None;
            for &(a, p) in &c.points {
                if let Some(pp) = prev {
                    let _ = write!(pts, "{:.2},{:.2} ", px(a), py(pp));
                }
                let _ = write!(pts, "{:.2},{:.2} ", px(a), py(p));
                prev = Some(p);
            }
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                color(&c.algorithm),
                pts.trim_end()
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" fill="{}">{}</text>"#,
                ox + iw - 90.0,
                oy + ih - 10.0 - 14.0 * i as f64,
                color(&c.algorithm),
                xml_escape(&c.algorithm)
            );
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Paths written by [`emit`].
#[derive(Clone, Debug, PartialEq)]
pub struct Emitted {
    pub results: PathBuf,
    pub profiles: PathBuf,
    pub svg: PathBuf,
    pub medians: PathBuf,
}

/// Writes `results.csv`, `profiles.csv`, `profiles.svg` and `medians.csv`.
/// Everything is rendered before the first write, and each file is written
/// to a temporary name and renamed, so a failure leaves no partial files.
pub fn emit(rows: &[ResultRow], curves: &[ProfileCurve], out_dir: &Path) -> Result<Emitted> {
    if curves.is_empty() {
        return Err(Error::InvalidArgument("no profile curves to emit".into()));
    }
    let files = [
        ("results.csv", results_csv(rows)?),
        ("profiles.csv", profiles_csv(curves)?),
        ("profiles.svg", profiles_svg(curves)?),
        ("medians.csv", medians_csv(&medians(&summarize(rows)))?),
    ];
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut staged = Vec::new();
    for (name, body) in &files {
        let tmp = out_dir.join(format!(".{name}.tmp"));
        if let Err(e) = std::fs::write(&tmp, body) {
            for t in &staged {
                let _ = std::fs::remove_file(t);
            }
            return Err(Error::io(&tmp, e));
        }
        staged.push(tmp);
    }
    for ((name, _), tmp) in files.iter().zip(&staged) {
        let dest = out_dir.join(name);
        std::fs::rename(tmp, &dest).map_err(|e| Error::io(&dest, e))?;
    }
    Ok(Emitted {
        results: out_dir.join("results.csv"),
        profiles: out_dir.join("profiles.csv"),
        svg: out_dir.join("profiles.svg"),
        medians: out_dir.join("medians.csv"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(problem: &str, variant: &str, rep: usize, evals: u64, solved: bool) -> CellSummary {
        CellSummary {
            key: CellKey {
                problem: problem.into(),
                dim: 10,
                d: 2,
                variant: variant.into(),
                solver: "local".into(),
                rep,
            },
            evals,
            solved,
            errored: false,
            embeddings: 1,
        }
    }

    #[test]
    fn single_algorithm_profile_starts_at_solved_fraction() {
        let cells = vec![
            cell("a", "X", 0, 10, true),
            cell("b", "X", 0, 50, false),
            cell("c", "X", 0, 7, true),
            cell("d", "X", 0, 70, true),
        ];
        let c = performance_profile(&cells, &["X".into()]).unwrap();
        assert_eq!(c[0].points, vec![(1.0, 0.75)]);
        assert_eq!(c[0].at(100.0), 0.75);
    }

    #[test]
    fn two_algorithm_profile_matches_hand_computation() {
        // costs: p1 A=10 B=20; p2 A=40 B=10; p3 A=∞ B=30
        // ratios A: 1, 4, ∞; B: 2, 1, 1
        let cells = vec![
            cell("p1", "A", 0, 10, true),
            cell("p1", "B", 0, 20, true),
            cell("p2", "A", 0, 40, true),
            cell("p2", "B", 0, 10, true),
            cell("p3", "A", 0, 99, false),
            cell("p3", "B", 0, 30, true),
        ];
        let c = performance_profile(&cells, &["A".into(), "B".into()]).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(c[0].points, vec![(1.0, third), (4.0, 2.0 * third)]);
        assert_eq!(
            c[1].points,
            vec![(1.0, 2.0 * third), (2.0, 1.0), (4.0, 1.0)]
        );
        assert_eq!(c[0].at(3.9), third);
        assert_eq!(c[1].at(2.0), 1.0);
        for curve in &c {
            assert!(curve
                .points
                .windows(2)
                .all(|w| w[0].1 <= w[1].1 && w[0].0 < w[1].0));
        }
    }

    #[test]
    fn profile_rejects_empty_or_unsolved() {
        assert!(performance_profile(&[], &["A".into()]).is_err());
        let cells = vec![cell("p", "A", 0, 5, false)];
        assert!(performance_profile(&cells, &["A".into()]).is_err());
    }

    #[test]
    fn medians_average_middle_pair() {
        let mut v = vec![3.0, 1.0, 4.0, 2.0];
        assert_eq!(median(&mut v), Some(2.5));
        assert_eq!(median(&mut [5.0]), Some(5.0));
        assert_eq!(median(&mut []), None);
        let cells = vec![
            cell("a", "X", 0, 10, true),
            cell("b", "X", 0, 300, false),
            cell("c", "X", 0, 20, true),
        ];
        let m = medians(&cells);
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].median_evals, m[0].solved, m[0].cells), (20.0, 2, 3));
    }

    #[test]
    fn budgets_default_to_table() {
        let plan = ExperimentPlan::new(
            vec![PPolicy::Adaptive],
            vec![
                SolverSpec::new(SolverKind::DirectGlobal),
                SolverSpec::new(SolverKind::MultiStartLocal { starts: 5 }),
            ],
            1,
        );
        assert_eq!(plan.budgets["direct"].embedded_evals, 3000);
        assert_eq!(plan.budgets["direct"].no_embedding_evals, 60_000);
        assert_eq!(
            plan.budgets["multistart5"].no_embedding_solver.kind,
            SolverKind::MultiStartLocal { starts: 100 }
        );
        plan.validate().unwrap();
    }

    #[test]
    fn plan_round_trips_through_toml() {
        let mut plan = ExperimentPlan::local_comparison(3);
        plan.problems = vec!["branin".into()];
        let back = ExperimentPlan::from_toml(&plan.to_toml().unwrap()).unwrap();
        assert_eq!(back, plan);
        let minimal = ExperimentPlan::from_toml(
            "seed = 1\nvariants = [{ type = \"origin\" }]\nsolvers = [{ type = \"direct_global\" }]\n",
        )
        .unwrap();
        assert_eq!(minimal.dims, vec![10, 100]);
        assert_eq!(minimal.reps, 5);
        assert!(minimal.budgets.contains_key("direct"));
    }

    #[test]
    fn large_dims_need_opt_in() {
        let mut plan = ExperimentPlan::local_comparison(3);
        plan.dims = vec![1000];
        assert!(plan.validate().is_err());
        plan.allow_large_dims = true;
        plan.validate().unwrap();
    }

    #[test]
    fn cells_cover_matrix() {
        let mut plan = ExperimentPlan::local_comparison(3);
        plan.problems = vec!["branin".into(), "hartmann3".into()];
        plan.dims = vec![10];
        plan.reps = 2;
        plan.d_offsets = vec![0, 1];
        let cells = plan.cells(&plan.manifest().unwrap());
        // 2 problems × 2 reps × (2 variants × 2 d + baseline)
        assert_eq!(cells.len(), 2 * 2 * 5);
        assert!(cells.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn summarize_uses_last_row() {
        let row = |k: usize, cum: u64, t: &str| ResultRow {
            problem: "a".into(),
            dim: 10,
            d: 2,
            variant: "X".into(),
            solver: "local".into(),
            rep: 0,
            k,
            f_xk: 1.0,
            f_xopt: 1.0,
            cum_evals: cum,
            terminated: t.into(),
        };
        let s = summarize(&[row(1, 10, ""), row(2, 25, "eps")]);
        assert_eq!((s[0].evals, s[0].solved, s[0].embeddings), (25, true, 2));
        let e = summarize(&[row(0, 0, "error")]);
        assert!(e[0].errored && e[0].cost().is_none());
    }

    #[test]
    fn svg_requires_curves() {
        assert!(profiles_svg(&[]).is_err());
    }
}
