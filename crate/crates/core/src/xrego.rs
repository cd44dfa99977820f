//! The X-REGO driver: a sequence of random embeddings, each solved as a
//! reduced problem anchored at the current point `p`, with `p` updated by
//! one of four policies.

use serde::{Deserialize, Serialize};

use crate::embedcore::{
    label_tag, sample_gaussian, sample_uniform_box, stream_id, Embedding, SeededRng, Vector,
};
use crate::error::{Error, Result};
use crate::problems::SyntheticProblem;
use crate::reduced::{ReducedProblem, SolveResult, SolveStatus};
use crate::solvers::{solve, SolverBudget, SolverSpec};

pub const DEFAULT_GAMMA: f64 = 1e-5;

/// How the anchor `p` moves between embeddings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PPolicy {
    /// Move to `x^k` when it improves on `f(p)` (A-REGO).
    Adaptive,
    /// Move to `x^k` when `|f(x^k) - f(p)| > γ`, else redraw uniformly (LA-REGO).
    LocalAdaptive { gamma: f64 },
    /// Always `p = 0` (N-REGO).
    Origin,
    /// Fresh uniform draw in `X` every time (LN-REGO).
    UniformRandom,
}

impl PPolicy {
    pub fn local_adaptive() -> Self {
        Self::LocalAdaptive {
            gamma: DEFAULT_GAMMA,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Adaptive => "A-REGO",
            Self::LocalAdaptive { .. } => "LA-REGO",
            Self::Origin => "N-REGO",
            Self::UniformRandom => "LN-REGO",
        }
    }

    pub fn from_label(label: &str) -> Result<Self> {
        match label.to_ascii_uppercase().as_str() {
            "A-REGO" | "A" | "ADAPTIVE" => Ok(Self::Adaptive),
            "LA-REGO" | "LA" | "LOCAL_ADAPTIVE" => Ok(Self::local_adaptive()),
            "N-REGO" | "N" | "ORIGIN" => Ok(Self::Origin),
            "LN-REGO" | "LN" | "UNIFORM_RANDOM" => Ok(Self::UniformRandom),
            _ => Err(Error::InvalidArgument(format!("unknown policy '{label}'"))),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::LocalAdaptive { gamma } if !(*gamma > 0.0) => Err(Error::InvalidArgument(
                format!("gamma = {gamma} must be > 0"),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Subspace dimension.
    pub d: usize,
    /// Maximum number of embeddings.
    pub k_max: usize,
    pub epsilon: f64,
    pub policy: PPolicy,
    pub solver: SolverSpec,
    /// Per-embedding budget; an infinite target is replaced by `f* + ε`.
    pub per_embedding_budget: SolverBudget,
    pub master_seed: u64,
}

impl RunConfig {
    pub fn new(
        d: usize,
        policy: PPolicy,
        solver: SolverSpec,
        max_evals: u64,
        master_seed: u64,
    ) -> Self {
        Self {
            d,
            k_max: 100,
            epsilon: 1e-3,
            policy,
            solver,
            per_embedding_budget: SolverBudget::new(max_evals),
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.k_max == 0 {
            return Err(Error::InvalidArgument("d and K must be >= 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be > 0".into()));
        }
        self.policy.validate()?;
        self.solver.validate()
    }
}

/// FNV-1a over the little-endian bytes of `p`.
pub fn digest(p: &Vector) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in p.iter() {
        for b in v.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub k: usize,
    pub f_xk: f64,
    pub f_xopt: f64,
    pub evals: u64,
    pub cum_evals: u64,
    /// Anchor used for this embedding (`p^{k-1}`).
    pub p: Vector,
    pub p_digest: u64,
    pub f_p: f64,
    pub x: Vector,
    pub success: bool,
    pub status: SolveStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    EpsReached(usize),
    ExhaustedK,
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Self::EpsReached(_) => "eps",
            Self::ExhaustedK => "exhausted",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem: String,
    pub dim: usize,
    pub d: usize,
    pub variant: String,
    pub solver: String,
    pub f_star: f64,
    pub epsilon: f64,
    pub entries: Vec<RunEntry>,
    /// `x_opt_index[k-1]` is the entry holding `x_opt^k`.
    pub x_opt_index: Vec<usize>,
    pub termination: Option<Termination>,
}

impl RunRecord {
    fn new(prob: &SyntheticProblem, cfg: &RunConfig) -> Self {
        Self {
            problem: prob.name().to_string(),
            dim: prob.dim(),
            d: cfg.d,
            variant: cfg.policy.label().to_string(),
            solver: cfg.solver.kind.label(),
            f_star: prob.f_star(),
            epsilon: cfg.epsilon,
            entries: Vec::new(),
            x_opt_index: Vec::new(),
            termination: None,
        }
    }

    pub fn total_evals(&self) -> u64 {
        self.entries.last().map_or(0, |e| e.cum_evals)
    }

    pub fn solved(&self) -> bool {
        matches!(self.termination, Some(Termination::EpsReached(_)))
    }

    pub fn best_value(&self) -> Option<f64> {
        self.entries.last().map(|e| e.f_xopt)
    }
}

/// `x_opt^k`: the best point over the first `k` embeddings.
pub fn x_opt(record: &RunRecord, k: usize) -> Result<&Vector> {
    if k == 0 || k > record.entries.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} outside 1..={}",
            record.entries.len()
        )));
    }
    Ok(&record.entries[record.x_opt_index[k - 1]].x)
}

/// Error from a run, with everything recorded before the failure.
#[derive(Debug, thiserror::Error)]
#[error("X-REGO run failed at embedding {k}: {source}")]
pub struct RunFailure {
    pub k: usize,
    pub record: Box<RunRecord>,
    #[source]
    pub source: Error,
}

/// The next anchor. `f_prev = f(p_prev)` and `f_k = f(x_k)` are cached
/// values; `f` is never re-evaluated here.
pub fn update_p(
    policy: &PPolicy,
    p_prev: &Vector,
    f_prev: f64,
    x_k: &Vector,
    f_k: f64,
    rng: &mut SeededRng,
) -> (Vector, Option<f64>) {
    match policy {
        PPolicy::Adaptive => {
            if f_k < f_prev {
                (x_k.clone(), Some(f_k))
            } else {
                (p_prev.clone(), Some(f_prev))
            }
        }
        PPolicy::LocalAdaptive { gamma } => {
            if (f_k - f_prev).abs() > *gamma {
                (x_k.clone(), Some(f_k))
            } else {
                (sample_uniform_box(p_prev.len(), rng), None)
            }
        }
        PPolicy::Origin => (Vector::zeros(p_prev.len()), None),
        PPolicy::UniformRandom => (sample_uniform_box(p_prev.len(), rng), None),
    }
}

fn stream(master: u64, label: &str, k: usize) -> SeededRng {
    SeededRng::new(master, stream_id(&[label_tag(label), k as u64]))
}

/// Runs X-REGO on `prob`.
pub fn run(prob: &SyntheticProblem, cfg: &RunConfig) -> std::result::Result<RunRecord, RunFailure> {
    run_with_observer(prob, cfg, |_, _, _| {})
}

/// As [`run`], calling `observe(k, embedding, result)` after every solve.
pub fn run_with_observer<F>(
    prob: &SyntheticProblem,
    cfg: &RunConfig,
    mut observe: F,
) -> std::result::Result<RunRecord, RunFailure>
where
    F: FnMut(usize, &Embedding, &SolveResult),
{
    let mut record = RunRecord::new(prob, cfg);
    let fail = |k: usize, record: RunRecord, source: Error| RunFailure {
        k,
        record: Box::new(record),
        source,
    };
    if let Err(e) = cfg.validate() {
        return Err(fail(0, record, e));
    }
    let dim = prob.dim();
    let mut budget = cfg.per_embedding_budget.clone();
    if budget.target_value == f64::NEG_INFINITY {
        budget.target_value = prob.f_star() + cfg.epsilon;
    }
    let mut p = match cfg.policy {
        PPolicy::UniformRandom => sample_uniform_box(dim, &mut stream(cfg.master_seed, "p", 0)),
        _ => Vector::zeros(dim),
    };
    let mut cum = 0u64;
    let mut best: Option<(usize, f64)> = None;
    for k in 1..=cfg.k_max {
        let a = sample_gaussian(dim, cfg.d, &mut stream(cfg.master_seed, "A", k));
        let step = (|| {
            let emb = Embedding::new(a, p.clone())?;
            let mut rp = ReducedProblem::new(emb.clone(), prob)?;
            let res = solve(
                &mut rp,
                &cfg.solver,
                &budget,
                &mut stream(cfg.master_seed, "solve", k),
            )?;
            let f_p = rp
                .origin_value()
                .ok_or_else(|| Error::Solver("anchor was not evaluated".into()))?;
            Ok::<_, Error>((emb, res, f_p))
        })();
        let (emb, res, f_p) = match step {
            Ok(v) => v,
            Err(e) => return Err(fail(k, record, e)),
        };
        observe(k, &emb, &res);
        cum += res.evals;
        let idx = record.entries.len();
        if best.is_none_or(|(_, f)| res.f_best < f) {
            best = Some((idx, res.f_best));
        }
        let (bi, bf) = best.expect("set above");
        record.x_opt_index.push(bi);
        let success = res.f_best - prob.f_star() <= cfg.epsilon;
        let (p_next, _) = update_p(
            &cfg.policy,
            &p,
            f_p,
            &res.x_best,
            res.f_best,
            &mut stream(cfg.master_seed, "p", k),
        );
        record.entries.push(RunEntry {
            k,
            f_xk: res.f_best,
            f_xopt: bf,
            evals: res.evals,
            cum_evals: cum,
            p_digest: digest(&p),
            p: p.clone(),
            f_p,
            x: res.x_best.clone(),
            success,
            status: res.status,
        });
        if success {
            record.termination = Some(Termination::EpsReached(k));
            return Ok(record);
        }
        p = p_next.map(|v| v.clamp(-1.0, 1.0));
    }
    record.termination = Some(Termination::ExhaustedK);
    Ok(record)
}

/// One line of `results.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub problem: String,
    #[serde(rename = "D")]
    pub dim: usize,
    pub d: usize,
    pub variant: String,
    pub solver: String,
    pub rep: usize,
    pub k: usize,
    pub f_xk: f64,
    pub f_xopt: f64,
    pub cum_evals: u64,
    /// `eps` / `exhausted` on the final row of a run, `error` for a failed
    /// run, empty otherwise.
    pub terminated: String,
}

impl RunRecord {
    pub fn rows(&self, rep: usize) -> Vec<ResultRow> {
        let n = self.entries.len();
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| ResultRow {
                problem: self.problem.clone(),
                dim: self.dim,
                d: self.d,
                variant: self.variant.clone(),
                solver: self.solver.clone(),
                rep,
                k: e.k,
                f_xk: e.f_xk,
                f_xopt: e.f_xopt,
                cum_evals: e.cum_evals,
                terminated: if i + 1 == n {
                    self.termination.map_or("error", |t| t.label()).to_string()
                } else {
                    String::new()
                },
            })
            .collect()
    }
}
