//! Benchmark functions and the construction of high-dimensional objectives
//! with low effective dimensionality.
//!
//! A base function `ḡ` on `[-1, 1]^{d_e}` is lifted to `f(x) = ḡ((Qx)_{1:d_e})`
//! on `ℝ^D`, where `Q` is a Haar-distributed rotation. The first `d_e` rows of
//! `Q` span the effective subspace.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use crate::embedcore::{
    label_tag, orthonormality_residual, sample_haar_orthogonal, stream_id, EffectiveSubspace,
    Matrix, SeededRng, Vector, ORTHO_TOL,
};
use crate::error::{Error, Result};

pub type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Which external solvers the original benchmark could be run with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverCompat {
    pub baron: bool,
    pub knitro: bool,
}

impl Default for SolverCompat {
    fn default() -> Self {
        Self {
            baron: true,
            knitro: true,
        }
    }
}

/// A low-dimensional test function with its box domain and known minimum.
#[derive(Clone)]
pub struct BaseFunction {
    name: String,
    domain: Vec<(f64, f64)>,
    f_star: f64,
    x_star: Vec<f64>,
    minimizer_count: usize,
    compat: SolverCompat,
    evaluator: Evaluator,
}

impl fmt::Debug for BaseFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BaseFunction")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("f_star", &self.f_star)
            .field("x_star", &self.x_star)
            .finish_non_exhaustive()
    }
}

impl BaseFunction {
    /// Builds a base function, checking that `evaluator(x_star)` reproduces
    /// `f_star` to within `1e-4·max(1, |f_star|)` (tabulated minima are rounded).
    pub fn custom(
        name: impl Into<String>,
        domain: Vec<(f64, f64)>,
        f_star: f64,
        x_star: Vec<f64>,
        evaluator: Evaluator,
    ) -> Result<Self> {
        let name = name.into();
        if domain.is_empty() || domain.len() != x_star.len() {
            return Err(Error::DimensionMismatch(format!(
                "{name}: domain has {} coordinates, x* has {}",
                domain.len(),
                x_star.len()
            )));
        }
        if domain.iter().any(|&(l, u)| !(l < u)) {
            return Err(Error::InvalidArgument(format!(
                "{name}: empty domain interval"
            )));
        }
        let got = evaluator(&x_star);
        if !((got - f_star).abs() <= 1e-4 * f_star.abs().max(1.0)) {
            return Err(Error::InvalidArgument(format!(
                "{name}: f(x*) = {got} but f* = {f_star}"
            )));
        }
        Ok(Self {
            name,
            domain,
            f_star,
            x_star,
            minimizer_count: 1,
            compat: SolverCompat::default(),
            evaluator,
        })
    }

    fn with_meta(mut self, minimizer_count: usize, compat: SolverCompat) -> Self {
        self.minimizer_count = minimizer_count;
        self.compat = compat;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn effective_dim(&self) -> usize {
        self.domain.len()
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    /// One global minimizer, in this function's own coordinates.
    pub fn x_star(&self) -> &[f64] {
        &self.x_star
    }

    pub fn minimizer_count(&self) -> usize {
        self.minimizer_count
    }

    pub fn compat(&self) -> SolverCompat {
        self.compat
    }

    pub fn is_unit_box(&self) -> bool {
        self.domain.iter().all(|&(l, u)| l == -1.0 && u == 1.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.evaluator)(x)
    }

    /// Names of the bundled benchmark set, in alphabetical order.
    pub fn catalog_names() -> &'static [&'static str] {
        &CATALOG
    }

    /// All bundled benchmark functions in native coordinates.
    pub fn catalog() -> Vec<BaseFunction> {
        CATALOG
            .iter()
            .map(|n| Self::by_name(n).expect("catalog entries are valid"))
            .collect()
    }

    /// Looks up a bundled benchmark function (native coordinates).
    pub fn by_name(name: &str) -> Result<BaseFunction> {
        let no_baron = SolverCompat {
            baron: false,
            knitro: true,
        };
        let no_knitro = SolverCompat {
            baron: true,
            knitro: false,
        };
        let ok = SolverCompat::default();
        let f =
            match name {
                "beale" => {
                    build(name, vec![(-4.5, 4.5); 2], 0.0, vec![3.0, 0.5], beale)?.with_meta(1, ok)
                }
                "branin" => build(
                    name,
                    vec![(-5.0, 10.0), (0.0, 15.0)],
                    0.397887,
                    vec![PI, 2.275],
                    branin,
                )?
                .with_meta(3, no_baron),
                "brent" => build(name, vec![(-10.0, 10.0); 2], 0.0, vec![-10.0, -10.0], brent)?
                    .with_meta(1, ok),
                "bukin6" => build(
                    name,
                    vec![(-15.0, -5.0), (-3.0, 3.0)],
                    0.0,
                    vec![-10.0, 1.0],
                    bukin6,
                )?
                .with_meta(1, no_knitro),
                "easom" => build(name, vec![(-100.0, 100.0); 2], -1.0, vec![PI, PI], easom)?
                    .with_meta(1, no_baron),
                "goldstein_price" => build(
                    name,
                    vec![(-2.0, 2.0); 2],
                    3.0,
                    vec![0.0, -1.0],
                    goldstein_price,
                )?
                .with_meta(1, ok),
                "hartmann3" => build(
                    name,
                    vec![(0.0, 1.0); 3],
                    -3.86278,
                    vec![
                        0.114_588_881_225_412_9,
                        0.555_648_895_473_937_1,
                        0.852_546_984_217_274_6,
                    ],
                    hartmann3,
                )?
                .with_meta(1, ok),
                "hartmann6" => build(
                    name,
                    vec![(0.0, 1.0); 6],
                    -3.32237,
                    vec![
                        0.201_689_509_093_657_5,
                        0.150_010_693_541_113_7,
                        0.476_873_972_925_099_8,
                        0.275_332_427_522_078_2,
                        0.311_651_617_239_568_6,
                        0.657_300_534_553_670_2,
                    ],
                    hartmann6,
                )?
                .with_meta(1, ok),
                "levy" => build(name, vec![(-10.0, 10.0); 4], 0.0, vec![1.0; 4], levy)?
                    .with_meta(1, no_baron),
                "perm" => build(
                    name,
                    vec![(-4.0, 4.0); 4],
                    0.0,
                    vec![1.0, 0.5, 1.0 / 3.0, 0.25],
                    perm_4_half,
                )?
                .with_meta(1, ok),
                "rosenbrock" => build(name, vec![(-5.0, 10.0); 3], 0.0, vec![1.0; 3], rosenbrock)?
                    .with_meta(1, ok),
                "shekel5" => build(
                    name,
                    vec![(0.0, 10.0); 4],
                    -10.1532,
                    vec![
                        4.000_037_152_376_549,
                        4.000_133_278_657_566,
                        4.000_037_151_057_555,
                        4.000_133_277_090_425,
                    ],
                    |x| shekel(x, 5),
                )?
                .with_meta(1, ok),
                "shekel7" => build(
                    name,
                    vec![(0.0, 10.0); 4],
                    -10.4029,
                    vec![
                        4.000_572_818_167_059,
                        3.999_606_207_067_230_5,
                        4.000_572_821_117_356,
                        3.999_606_210_400_273,
                    ],
                    |x| shekel(x, 7),
                )?
                .with_meta(1, ok),
                "shekel10" => build(
                    name,
                    vec![(0.0, 10.0); 4],
                    -10.5364,
                    vec![
                        4.000_746_867_869_747,
                        3.999_509_485_057_627_6,
                        4.000_746_868_809_279,
                        3.999_509_480_017_675,
                    ],
                    |x| shekel(x, 10),
                )?
                .with_meta(1, ok),
                "shubert" => build(
                    name,
                    vec![(-10.0, 10.0); 2],
                    -186.7309,
                    vec![-7.083_506_409_397_382, 4.858_056_877_022_195],
                    shubert,
                )?
                .with_meta(18, no_baron),
                "six_hump_camel" => build(
                    name,
                    vec![(-3.0, 3.0), (-2.0, 2.0)],
                    -1.0316,
                    vec![0.089_842_008_935_272_33, -0.712_656_403_019_058],
                    six_hump_camel,
                )?
                .with_meta(2, ok),
                "styblinski_tang" => build(
                    name,
                    vec![(-5.0, 5.0); 4],
                    -156.664,
                    vec![-2.903_534_027_771_178; 4],
                    styblinski_tang,
                )?
                .with_meta(1, ok),
                "trid" => build(
                    name,
                    vec![(-25.0, 25.0); 5],
                    -30.0,
                    vec![5.0, 8.0, 9.0, 8.0, 5.0],
                    trid,
                )?
                .with_meta(1, ok),
                "zettl" => build(
                    name,
                    vec![(-5.0, 5.0); 2],
                    -0.00379,
                    vec![-0.029_895_985_207_942_8, 0.0],
                    zettl,
                )?
                .with_meta(1, ok),
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown benchmark function '{other}'"
                    )))
                }
            };
        Ok(f)
    }
}

const CATALOG: [&str; 19] = [
    "beale",
    "branin",
    "brent",
    "bukin6",
    "easom",
    "goldstein_price",
    "hartmann3",
    "hartmann6",
    "levy",
    "perm",
    "rosenbrock",
    "shekel5",
    "shekel7",
    "shekel10",
    "shubert",
    "six_hump_camel",
    "styblinski_tang",
    "trid",
    "zettl",
];

fn build(
    name: &str,
    domain: Vec<(f64, f64)>,
    f_star: f64,
    x_star: Vec<f64>,
    f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
) -> Result<BaseFunction> {
    BaseFunction::custom(name, domain, f_star, x_star, Arc::new(f))
}

fn beale(x: &[f64]) -> f64 {
    let (a, b) = (x[0], x[1]);
    (1.5 - a + a * b).powi(2) + (2.25 - a + a * b * b).powi(2) + (2.625 - a + a * b.powi(3)).powi(2)
}

fn branin(x: &[f64]) -> f64 {
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (x[1] - b * x[0] * x[0] + c * x[0] - 6.0).powi(2) + 10.0 * (1.0 - t) * x[0].cos() + 10.0
}

fn brent(x: &[f64]) -> f64 {
    (x[0] + 10.0).powi(2) + (x[1] + 10.0).powi(2) + (-x[0] * x[0] - x[1] * x[1]).exp()
}

fn bukin6(x: &[f64]) -> f64 {
    100.0 * (x[1] - 0.01 * x[0] * x[0]).abs().sqrt() + 0.01 * (x[0] + 10.0).abs()
}

fn easom(x: &[f64]) -> f64 {
    -x[0].cos() * x[1].cos() * (-(x[0] - PI).powi(2) - (x[1] - PI).powi(2)).exp()
}

fn goldstein_price(x: &[f64]) -> f64 {
    let (a, b) = (x[0], x[1]);
    let p = 1.0
        + (a + b + 1.0).powi(2)
            * (19.0 - 14.0 * a + 3.0 * a * a - 14.0 * b + 6.0 * a * b + 3.0 * b * b);
    let q = 30.0
        + (2.0 * a - 3.0 * b).powi(2)
            * (18.0 - 32.0 * a + 12.0 * a * a + 48.0 * b - 36.0 * a * b + 27.0 * b * b);
    p * q
}

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];

fn hartmann<const N: usize>(x: &[f64], a: &[[f64; N]; 4], p: &[[f64; N]; 4]) -> f64 {
    -(0..4)
        .map(|i| {
            let s: f64 = (0..N)
                .map(|j| a[i][j] * (x[j] - 1e-4 * p[i][j]).powi(2))
                .sum();
            HARTMANN_ALPHA[i] * (-s).exp()
        })
        .sum::<f64>()
}

fn hartmann3(x: &[f64]) -> f64 {
    const A: [[f64; 3]; 4] = [
        [3.0, 10.0, 30.0],
        [0.1, 10.0, 35.0],
        [3.0, 10.0, 30.0],
        [0.1, 10.0, 35.0],
    ];
    const P: [[f64; 3]; 4] = [
        [3689.0, 1170.0, 2673.0],
        [4699.0, 4387.0, 7470.0],
        [1091.0, 8732.0, 5547.0],
        [381.0, 5743.0, 8828.0],
    ];
    hartmann(x, &A, &P)
}

fn hartmann6(x: &[f64]) -> f64 {
    const A: [[f64; 6]; 4] = [
        [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
        [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
        [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
        [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
    ];
    const P: [[f64; 6]; 4] = [
        [1312.0, 1696.0, 5569.0, 124.0, 8283.0, 5886.0],
        [2329.0, 4135.0, 8307.0, 3736.0, 1004.0, 9991.0],
        [2348.0, 1451.0, 3522.0, 2883.0, 3047.0, 6650.0],
        [4047.0, 8828.0, 8732.0, 5743.0, 1091.0, 381.0],
    ];
    hartmann(x, &A, &P)
}

fn levy(x: &[f64]) -> f64 {
    let w: Vec<f64> = x.iter().map(|v| 1.0 + (v - 1.0) / 4.0).collect();
    let last = w[w.len() - 1];
    let mid: f64 = w[..w.len() - 1]
        .iter()
        .map(|wi| (wi - 1.0).powi(2) * (1.0 + 10.0 * (PI * wi + 1.0).sin().powi(2)))
        .sum();
    (PI * w[0]).sin().powi(2) + mid + (last - 1.0).powi(2) * (1.0 + (2.0 * PI * last).sin().powi(2))
}

fn perm_4_half(x: &[f64]) -> f64 {
    let beta = 0.5;
    (1..=x.len() as i32)
        .map(|i| {
            let inner: f64 = x
                .iter()
                .enumerate()
                .map(|(j, xj)| {
                    let j = (j + 1) as f64;
                    (j + beta) * (xj.powi(i) - j.powi(-i))
                })
                .sum();
            inner * inner
        })
        .sum()
}

fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (w[0] - 1.0).powi(2))
        .sum()
}

fn shekel(x: &[f64], m: usize) -> f64 {
    const C: [[f64; 10]; 4] = [
        [4.0, 1.0, 8.0, 6.0, 3.0, 2.0, 5.0, 8.0, 6.0, 7.0],
        [4.0, 1.0, 8.0, 6.0, 7.0, 9.0, 3.0, 1.0, 2.0, 3.6],
        [4.0, 1.0, 8.0, 6.0, 3.0, 2.0, 5.0, 8.0, 6.0, 7.0],
        [4.0, 1.0, 8.0, 6.0, 7.0, 9.0, 3.0, 1.0, 2.0, 3.6],
    ];
    const BETA: [f64; 10] = [1.0, 2.0, 2.0, 4.0, 4.0, 6.0, 3.0, 7.0, 5.0, 5.0];
    -(0..m)
        .map(|i| {
            let s: f64 = (0..4).map(|j| (x[j] - C[j][i]).powi(2)).sum();
            1.0 / (s + 0.1 * BETA[i])
        })
        .sum::<f64>()
}

fn shubert(x: &[f64]) -> f64 {
    x.iter()
        .map(|&xk| {
            (1..=5)
                .map(|i| i as f64 * ((i as f64 + 1.0) * xk + i as f64).cos())
                .sum::<f64>()
        })
        .product()
}

fn six_hump_camel(x: &[f64]) -> f64 {
    let (a, b) = (x[0], x[1]);
    (4.0 - 2.1 * a * a + a.powi(4) / 3.0) * a * a + a * b + (-4.0 + 4.0 * b * b) * b * b
}

fn styblinski_tang(x: &[f64]) -> f64 {
    0.5 * x
        .iter()
        .map(|v| v.powi(4) - 16.0 * v * v + 5.0 * v)
        .sum::<f64>()
}

fn trid(x: &[f64]) -> f64 {
    let a: f64 = x.iter().map(|v| (v - 1.0).powi(2)).sum();
    let b: f64 = x.windows(2).map(|w| w[0] * w[1]).sum();
    a - b
}

fn zettl(x: &[f64]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] - 2.0 * x[0]).powi(2) + 0.25 * x[0]
}

/// Reparameterizes `base` on `[-1, 1]^{d_e}` via
/// `x̄_i = l_i + (u_i - l_i)(x_i + 1)/2`.
pub fn scale_to_unit_box(base: &BaseFunction) -> Result<BaseFunction> {
    if base
        .domain
        .iter()
        .any(|&(l, u)| !l.is_finite() || !u.is_finite())
    {
        return Err(Error::InvalidArgument(format!(
            "{}: cannot scale an unbounded domain",
            base.name
        )));
    }
    if base.is_unit_box() {
        return Ok(base.clone());
    }
    let dom = base.domain.clone();
    let x_star = base
        .x_star
        .iter()
        .zip(&dom)
        .map(|(&x, &(l, u))| 2.0 * (x - l) / (u - l) - 1.0)
        .collect();
    let inner = base.evaluator.clone();
    let map = dom.clone();
    let evaluator: Evaluator = Arc::new(move |x: &[f64]| {
        let native: Vec<f64> = x
            .iter()
            .zip(&map)
            .map(|(&t, &(l, u))| l + (u - l) * (t + 1.0) / 2.0)
            .collect();
        inner(&native)
    });
    Ok(BaseFunction {
        name: base.name.clone(),
        domain: vec![(-1.0, 1.0); dom.len()],
        f_star: base.f_star,
        x_star,
        minimizer_count: base.minimizer_count,
        compat: base.compat,
        evaluator,
    })
}

struct Payload {
    base: BaseFunction,
    q: Matrix,
    q_top: Matrix,
    sub: EffectiveSubspace,
    x_star: Vector,
    feasible_minimizer: Option<Vector>,
}

/// `f(x) = ḡ((Qx)_{1:d_e})` on `ℝ^D` with an evaluation counter.
///
/// The rotation and minimizer data are shared between copies made by
/// [`SyntheticProblem::fresh_clone`]; each copy has its own counter.
pub struct SyntheticProblem {
    payload: Arc<Payload>,
    counter: AtomicU64,
}

impl fmt::Debug for SyntheticProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SyntheticProblem")
            .field("name", &self.payload.base.name)
            .field("dim", &self.dim())
            .field("d_e", &self.effective_dim())
            .field("evaluations", &self.evaluations())
            .finish()
    }
}

/// Lifts `base` to dimension `dim` with a Haar rotation drawn from `rng`.
///
/// Rotations for which the optimal affine set `{x : Uᵀx = x̄*}` misses
/// `[-1, 1]^D` are rejected and redrawn from the same stream, so the
/// minimum value is attained inside the feasible box.
pub fn lift(base: &BaseFunction, dim: usize, rng: &mut SeededRng) -> Result<SyntheticProblem> {
    let d_e = base.effective_dim();
    if dim <= d_e {
        return Err(Error::InvalidArgument(format!(
            "{}: D = {dim} must exceed d_e = {d_e}",
            base.name
        )));
    }
    for _ in 0..64 {
        let q = sample_haar_orthogonal(dim, rng);
        let prob = lift_with_rotation(base, q)?;
        if prob.payload.feasible_minimizer.is_some() {
            return Ok(prob);
        }
    }
    Err(Error::Degenerate(format!(
        "{}: no rotation with a feasible minimizer found for D = {dim}",
        base.name
    )))
}

/// Lifts `base` with a caller-supplied orthogonal `q` (for instance the
/// identity, giving a coordinate-aligned effective subspace).
pub fn lift_with_rotation(base: &BaseFunction, q: Matrix) -> Result<SyntheticProblem> {
    let base = scale_to_unit_box(base)?;
    let d_e = base.effective_dim();
    let dim = q.nrows();
    if q.ncols() != dim {
        return Err(Error::DimensionMismatch(format!(
            "rotation is {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    if dim <= d_e {
        return Err(Error::InvalidArgument(format!(
            "{}: D = {dim} must exceed d_e = {d_e}",
            base.name
        )));
    }
    let res = orthonormality_residual(&q);
    if res > ORTHO_TOL {
        return Err(Error::InvalidArgument(format!(
            "rotation not orthogonal: residual {res:.2e}"
        )));
    }
    let sub = EffectiveSubspace::from_rotation(&q, d_e)?;
    let q_top = q.rows(0, d_e).into_owned();
    let xbar = Vector::from_column_slice(&base.x_star);
    let x_star = q_top.transpose() * &xbar;
    let feasible_minimizer = feasible_point_on(&q_top, &xbar, &x_star);
    Ok(SyntheticProblem {
        payload: Arc::new(Payload {
            base,
            q,
            q_top,
            sub,
            x_star,
            feasible_minimizer,
        }),
        counter: AtomicU64::new(0),
    })
}

/// A point of `[-1, 1]^D` on `{x : Mx = b}`, if one exists.
fn feasible_point_on(m: &Matrix, b: &Vector, hint: &Vector) -> Option<Vector> {
    if hint.amax() <= 1.0 {
        return Some(hint.clone());
    }
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = (0..m.ncols())
        .map(|_| lp.add_var(0.0, (-1.0, 1.0)))
        .collect();
    for i in 0..m.nrows() {
        let terms: Vec<_> = vars
            .iter()
            .enumerate()
            .map(|(j, &v)| (v, m[(i, j)]))
            .collect();
        lp.add_constraint(terms.as_slice(), ComparisonOp::Eq, b[i]);
    }
    let sol = lp.solve().ok()?;
    let x = Vector::from_iterator(vars.len(), vars.iter().map(|&v| sol[v].clamp(-1.0, 1.0)));
    ((m * &x - b).amax() <= 1e-9).then_some(x)
}

impl SyntheticProblem {
    /// A copy sharing the immutable payload, with its counter reset to zero.
    pub fn fresh_clone(&self) -> Self {
        Self {
            payload: Arc::clone(&self.payload),
            counter: AtomicU64::new(0),
        }
    }

    pub fn name(&self) -> &str {
        &self.payload.base.name
    }

    pub fn base(&self) -> &BaseFunction {
        &self.payload.base
    }

    pub fn dim(&self) -> usize {
        self.payload.q.nrows()
    }

    pub fn effective_dim(&self) -> usize {
        self.payload.q_top.nrows()
    }

    pub fn rotation(&self) -> &Matrix {
        &self.payload.q
    }

    pub fn subspace(&self) -> &EffectiveSubspace {
        &self.payload.sub
    }

    pub fn f_star(&self) -> f64 {
        self.payload.base.f_star
    }

    pub fn compat(&self) -> SolverCompat {
        self.payload.base.compat
    }

    /// The lifted minimizer `Qᵀ(x̄*; 0)`.
    pub fn x_star(&self) -> &Vector {
        &self.payload.x_star
    }

    /// `x_top* = UUᵀx*`; equal to [`Self::x_star`] by construction.
    pub fn x_top_star(&self) -> &Vector {
        &self.payload.x_star
    }

    /// A global minimizer inside `[-1, 1]^D`, when one exists.
    pub fn feasible_minimizer(&self) -> Option<&Vector> {
        self.payload.feasible_minimizer.as_ref()
    }

    pub fn evaluations(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }

    pub fn reset_counter(&self) {
        self.counter.store(0, Ordering::Relaxed);
    }

    /// `f(x)`; counts one evaluation.
    pub fn evaluate(&self, x: &Vector) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "x has length {}, D = {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "non-finite point passed to f".into(),
            ));
        }
        self.counter.fetch_add(1, Ordering::Relaxed);
        let z = &self.payload.q_top * x;
        Ok(self.payload.base.eval(z.as_slice()))
    }
}

/// One line of a problem-set manifest; enough to rebuild the problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub d_e: usize,
    #[serde(rename = "D")]
    pub dim: usize,
    pub seed: u64,
    pub baron: bool,
    pub knitro: bool,
}

impl ManifestEntry {
    pub fn new(name: &str, dim: usize, seed: u64) -> Result<Self> {
        let base = BaseFunction::by_name(name)?;
        Ok(Self {
            name: name.to_string(),
            d_e: base.effective_dim(),
            dim,
            seed,
            baron: base.compat.baron,
            knitro: base.compat.knitro,
        })
    }

    /// Rebuilds the problem; bit-identical for equal `(name, D, seed)`.
    pub fn build(&self) -> Result<SyntheticProblem> {
        let base = BaseFunction::by_name(&self.name)?;
        if base.effective_dim() != self.d_e {
            return Err(Error::Parse(format!(
                "{}: manifest says d_e = {}, function has {}",
                self.name,
                self.d_e,
                base.effective_dim()
            )));
        }
        let mut rng = SeededRng::new(
            self.seed,
            stream_id(&[label_tag(&self.name), self.dim as u64]),
        );
        lift(&base, self.dim, &mut rng)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub problems: Vec<ManifestEntry>,
}

impl Manifest {
    /// The full benchmark set at each dimension in `dims`.
    pub fn catalog(dims: &[usize], seed: u64) -> Result<Self> {
        let mut problems = Vec::new();
        for &dim in dims {
            for name in CATALOG {
                problems.push(ManifestEntry::new(name, dim, seed)?);
            }
        }
        Ok(Self { problems })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }
}
