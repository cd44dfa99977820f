//! The reduced problem `min f(Ay + p) s.t. Ay + p ∈ [-1, 1]^D` in y-space.
//!
//! Box-based solvers search a per-coordinate bounding box of the feasible
//! polytope, obtained from `2d` small LPs. Points outside the polytope get an
//! extreme-barrier value and never reach `f`.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use crate::embedcore::{Embedding, Matrix, Vector};
use crate::error::{Error, Result};
use crate::problems::SyntheticProblem;

/// Absolute slack allowed on `|Ay + p|_∞ ≤ 1`.
pub const FEAS_TOL: f64 = 1e-12;
/// Relative inflation of the LP box.
pub const BOX_MARGIN: f64 = 1e-9;
/// Penalty used before any feasible value has been seen.
const FALLBACK_PENALTY: f64 = 1e10;

/// Axis-aligned box in y-space enclosing the feasible polytope.
#[derive(Clone, Debug, PartialEq)]
pub struct YBox {
    pub lower: Vector,
    pub upper: Vector,
    /// The LP optimizers: `witnesses[2j]` attains the lower bound of
    /// coordinate `j`, `witnesses[2j + 1]` the upper.
    pub witnesses: Vec<Vector>,
}

impl YBox {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, y: &Vector) -> bool {
        y.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    pub fn width(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }
}

/// Per-coordinate extent of `{y : -1 ≤ Ay + p ≤ 1}`.
pub fn compute_y_box(emb: &Embedding) -> Result<YBox> {
    let a = emb.a();
    let p = emb.p();
    let d = emb.reduced_dim();
    let mut lower = Vector::zeros(d);
    let mut upper = Vector::zeros(d);
    let mut witnesses = Vec::with_capacity(2 * d);
    for j in 0..d {
        for (dir, slot) in [
            (OptimizationDirection::Minimize, 0),
            (OptimizationDirection::Maximize, 1),
        ] {
            let (val, y) = coordinate_lp(a, p, j, dir)?;
            if slot == 0 {
                lower[j] = val;
            } else {
                upper[j] = val;
            }
            witnesses.push(y);
        }
    }
    for j in 0..d {
        let pad = BOX_MARGIN * (upper[j] - lower[j]).abs().max(1.0);
        lower[j] -= pad;
        upper[j] += pad;
    }
    Ok(YBox {
        lower,
        upper,
        witnesses,
    })
}

fn coordinate_lp(
    a: &Matrix,
    p: &Vector,
    j: usize,
    dir: OptimizationDirection,
) -> Result<(f64, Vector)> {
    let d = a.ncols();
    let mut lp = Problem::new(dir);
    let vars: Vec<_> = (0..d)
        .map(|k| {
            lp.add_var(
                if k == j { 1.0 } else { 0.0 },
                (f64::NEG_INFINITY, f64::INFINITY),
            )
        })
        .collect();
    for i in 0..a.nrows() {
        let row: Vec<_> = vars
            .iter()
            .enumerate()
            .map(|(k, &v)| (v, a[(i, k)]))
            .collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Le, 1.0 - p[i]);
        lp.add_constraint(row.as_slice(), ComparisonOp::Ge, -1.0 - p[i]);
    }
    match lp.solve() {
        Ok(sol) => {
            let y = Vector::from_iterator(d, vars.iter().map(|&v| sol[v]));
            Ok((sol[vars[j]], y))
        }
        Err(minilp::Error::Unbounded) => Err(Error::LinearProgram(format!(
            "coordinate {j} is unbounded; A is rank deficient"
        ))),
        Err(minilp::Error::Infeasible) => Err(Error::LinearProgram(
            "feasible polytope is empty although y = 0 should be feasible".into(),
        )),
    }
}

/// How a subproblem solve ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    TargetReached,
    BudgetExhausted,
    /// The solver's own stopping test fired (simplex collapsed, DIRECT
    /// exhausted its rectangle supply) before budget or target.
    Converged,
    SolverError,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::TargetReached => "target",
            Self::BudgetExhausted => "budget",
            Self::Converged => "converged",
            Self::SolverError => "error",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub y_best: Vector,
    pub x_best: Vector,
    pub f_best: f64,
    pub evals: u64,
    pub status: SolveStatus,
}

#[derive(Clone, Debug)]
struct Best {
    y: Vector,
    x: Vector,
    f: f64,
}

/// One instance of the reduced problem, owned by a single solver call.
pub struct ReducedProblem<'a> {
    embedding: Embedding,
    problem: &'a SyntheticProblem,
    y_box: YBox,
    penalty_scale: Option<f64>,
    evals: u64,
    best: Option<Best>,
    origin_value: Option<f64>,
    /// `A = I`, `p = 0`: skips the matrix product.
    identity: bool,
}

impl<'a> ReducedProblem<'a> {
    pub fn new(embedding: Embedding, problem: &'a SyntheticProblem) -> Result<Self> {
        if embedding.ambient_dim() != problem.dim() {
            return Err(Error::DimensionMismatch(format!(
                "embedding lives in dimension {}, problem in {}",
                embedding.ambient_dim(),
                problem.dim()
            )));
        }
        let y_box = compute_y_box(&embedding)?;
        Ok(Self::assemble(embedding, problem, y_box))
    }

    /// The problem itself with `A = I`, `p = 0`: the search box is `X`.
    pub fn full_dimensional(problem: &'a SyntheticProblem) -> Result<Self> {
        let dim = problem.dim();
        let embedding = Embedding::new(Matrix::identity(dim, dim), Vector::zeros(dim))?;
        let y_box = YBox {
            lower: Vector::from_element(dim, -1.0),
            upper: Vector::from_element(dim, 1.0),
            witnesses: Vec::new(),
        };
        let mut rp = Self::assemble(embedding, problem, y_box);
        rp.identity = true;
        Ok(rp)
    }

    fn map(&self, y: &Vector) -> Vector {
        if self.identity {
            y.clone()
        } else {
            self.embedding.map(y)
        }
    }

    fn assemble(embedding: Embedding, problem: &'a SyntheticProblem, y_box: YBox) -> Self {
        Self {
            embedding,
            problem,
            y_box,
            penalty_scale: None,
            evals: 0,
            best: None,
            origin_value: None,
            identity: false,
        }
    }

    pub fn embedding(&self) -> &Embedding {
        &self.embedding
    }

    pub fn problem(&self) -> &SyntheticProblem {
        self.problem
    }

    pub fn y_box(&self) -> &YBox {
        &self.y_box
    }

    /// Dimension `d` of the search space.
    pub fn dim(&self) -> usize {
        self.embedding.reduced_dim()
    }

    pub fn penalty_scale(&self) -> f64 {
        self.penalty_scale.unwrap_or(FALLBACK_PENALTY)
    }

    /// Objective evaluations made through this instance.
    pub fn evals(&self) -> u64 {
        self.evals
    }

    /// `f(p)`, once `y = 0` has been evaluated.
    pub fn origin_value(&self) -> Option<f64> {
        self.origin_value
    }

    pub fn best_value(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.f)
    }

    pub fn best_point(&self) -> Option<&Vector> {
        self.best.as_ref().map(|b| &b.y)
    }

    pub fn is_feasible(&self, y: &Vector) -> bool {
        y.len() == self.dim()
            && self
                .map(y)
                .iter()
                .all(|v| (-1.0 - FEAS_TOL..=1.0 + FEAS_TOL).contains(v))
    }

    /// `‖max(|Ay + p| - 1, 0)‖₁`.
    pub fn violation(&self, y: &Vector) -> f64 {
        self.map(y).iter().map(|v| (v.abs() - 1.0).max(0.0)).sum()
    }

    /// `f(Ay + p)` on the polytope, `scale·(1 + violation)` off it.
    pub fn penalized_objective(&mut self, y: &Vector) -> Result<f64> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "y has length {}, d = {}",
                y.len(),
                self.dim()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Ok(f64::MAX);
        }
        let x = self.map(y);
        let viol: f64 = x.iter().map(|v| (v.abs() - 1.0 - FEAS_TOL).max(0.0)).sum();
        if viol > 0.0 {
            let v: f64 = x.iter().map(|v| (v.abs() - 1.0).max(0.0)).sum();
            return Ok(self.penalty_scale() * (1.0 + v));
        }
        let f = self.problem.evaluate(&x)?;
        self.evals += 1;
        if y.iter().all(|v| *v == 0.0) && self.origin_value.is_none() {
            self.origin_value = Some(f);
        }
        match self.penalty_scale {
            Some(s) if f < s => {}
            _ => self.penalty_scale = Some(f + 10.0 * (1.0 + f.abs())),
        }
        if self.best.as_ref().is_none_or(|b| f < b.f) {
            self.best = Some(Best { y: y.clone(), x, f });
        }
        Ok(f)
    }

    /// Packages the best feasible point seen so far.
    pub fn result(&self, status: SolveStatus) -> Result<SolveResult> {
        let best = self
            .best
            .as_ref()
            .ok_or_else(|| Error::Solver("no feasible point was evaluated".into()))?;
        Ok(SolveResult {
            y_best: best.y.clone(),
            x_best: best.x.clone(),
            f_best: best.f,
            evals: self.evals,
            status,
        })
    }
}
