//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs without the libtest harness so the lines are
//! always visible.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use xrego_core::embedcore::{
    compute_w, label_tag, orthonormality_residual, reduced_minimizer, sample_gaussian,
    sample_uniform_box, stream_id, Matrix, SeededRng, Vector,
};
use xrego_core::harness::{medians, run_plan, ExperimentPlan, NO_EMBEDDING};
use xrego_core::numerics::{integral_J, QuadratureConfig};
use xrego_core::problems::{lift, lift_with_rotation, BaseFunction, SyntheticProblem};
use xrego_core::solvers::{SolverKind, SolverSpec};
use xrego_core::theory::{
    aligned_quadratic, convergence_experiment, ks_check_chi2, ks_check_f, mc_success_probability,
    tau_bounds,
};
use xrego_core::xrego::{run, x_opt, PPolicy, RunConfig};

const SEED: u64 = 20_220_601;
const SIG: f64 = 0.01;

struct Outcome {
    passed: bool,
    detail: String,
}

type Criterion = fn() -> Outcome;

fn quadratic(xbar: Vec<f64>) -> BaseFunction {
    let c = xbar.clone();
    BaseFunction::custom(
        "quadratic",
        vec![(-1.0, 1.0); c.len()],
        0.0,
        xbar,
        Arc::new(move |x: &[f64]| x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum()),
    )
    .expect("quadratic")
}

fn delta(prob: &SyntheticProblem, p: &Vector) -> f64 {
    (prob.subspace().u().transpose() * (prob.x_top_star() - p)).norm()
}

fn closed_form_j() -> Outcome {
    let q = QuadratureConfig::default();
    let mut worst = 0.0f64;
    for m in 1..=30 {
        let j = integral_J(m, 1, 1.0, &q).expect("J");
        worst = worst.max((j - 1.0 / (m as f64 + 1.0)).abs());
    }
    Outcome {
        passed: worst <= 1e-6,
        detail: format!("max |J_(m,1)(1) - 1/(m+1)| over m=1..30 = {worst:.2e}"),
    }
}

fn distribution_laws() -> Outcome {
    let mut rng = SeededRng::new(SEED, label_tag("laws"));
    let mut fails = Vec::new();
    let mut configs = vec![(2usize, 4usize, 10usize)];
    while configs.len() < 6 {
        let d_e = 1 + (rng.uniform(0.0, 3.0) as usize).min(2);
        let d = d_e + (rng.uniform(0.0, 4.0) as usize).min(3);
        let dim = (d + 2 + rng.uniform(0.0, (29 - d) as f64) as usize).min(30);
        configs.push((d_e, d, dim));
    }
    let mut min_p = 1.0f64;
    for (i, &(d_e, d, dim)) in configs.iter().enumerate() {
        let xbar: Vec<f64> = (0..d_e).map(|_| rng.uniform(-0.8, 0.8)).collect();
        let mut qrng = SeededRng::new(SEED, stream_id(&[label_tag("rot"), i as u64]));
        let prob = lift(&quadratic(xbar), dim, &mut qrng).expect("lift");
        let p = sample_uniform_box(dim, &mut rng) * 0.5;
        let s = SeededRng::new(SEED, stream_id(&[label_tag("ks"), i as u64]));
        let chi = ks_check_chi2(&prob, &p, d, 2000, &s, None).expect("chi2");
        let f = ks_check_f(&prob, &p, d, 2000, &s, None).expect("F");
        min_p = min_p.min(chi.p_value).min(f.p_value);
        if !chi.passes(SIG) {
            fails.push(format!("chi2 ({d_e},{d},{dim}) p={:.3}", chi.p_value));
        }
        if !f.passes(SIG) {
            fails.push(format!("F ({d_e},{d},{dim}) p={:.3}", f.p_value));
        }
    }
    // negative controls on (d_e, d, D) = (2, 4, 10): m = 8, n = 3
    let mut qrng = SeededRng::new(SEED, label_tag("control"));
    let prob = lift(&quadratic(vec![0.3, -0.6]), 10, &mut qrng).expect("lift");
    let p = sample_uniform_box(10, &mut rng) * 0.5;
    let s = SeededRng::new(SEED, label_tag("negative"));
    let wrong_df = ks_check_chi2(&prob, &p, 4, 5000, &s, Some(4)).expect("chi2");
    let swapped = ks_check_f(&prob, &p, 4, 5000, &s, Some((3, 8))).expect("F");
    if wrong_df.passes(SIG) {
        fails.push(format!("wrong-df control passed p={:.3}", wrong_df.p_value));
    }
    if swapped.passes(SIG) {
        fails.push(format!(
            "swapped-df control passed p={:.3}",
            swapped.p_value
        ));
    }
    Outcome {
        passed: fails.is_empty(),
        detail: format!(
            "{} configs {:?}; min p = {min_p:.3}; controls p = {:.1e}, {:.1e}{}",
            configs.len(),
            configs,
            wrong_df.p_value,
            swapped.p_value,
            if fails.is_empty() {
                String::new()
            } else {
                format!("; failures: {}", fails.join(", "))
            }
        ),
    }
}

fn equality_case() -> Outcome {
    let q = QuadratureConfig::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for dim in [6usize, 10, 20] {
        let prob = aligned_quadratic(&[0.5, -0.4], dim).expect("problem");
        let p = Vector::zeros(dim);
        let rng = SeededRng::new(SEED, stream_id(&[label_tag("equality"), dim as u64]));
        let t = mc_success_probability(&prob, &p, 2, 5000, &rng).expect("mc");
        let j = integral_J(dim - 2, 1, delta(&prob, &p), &q).expect("J");
        let z = (t.estimate - j) / t.std_err;
        ok &= z.abs() <= 3.0;
        parts.push(format!("D={dim}: mc={:.4} J={j:.4} z={z:+.2}", t.estimate));
    }
    Outcome {
        passed: ok,
        detail: parts.join("; "),
    }
}

fn bound_ordering() -> Outcome {
    let q = QuadratureConfig::default();
    let mut rng = SeededRng::new(SEED, label_tag("ordering"));
    let mut ok = true;
    let mut parts = Vec::new();
    // p = 0 against τ₀ on a few aligned instances
    for (i, &(d_e, d, dim)) in [(1usize, 1usize, 6usize), (2, 2, 8), (2, 3, 12), (1, 2, 12)]
        .iter()
        .enumerate()
    {
        let xbar: Vec<f64> = (0..d_e).map(|_| rng.uniform(-0.9, 0.9)).collect();
        let prob = aligned_quadratic(&xbar, dim).expect("problem");
        let (m, n) = (dim - d_e, d - d_e + 1);
        let (_, tau0) = tau_bounds(m, n, d_e, &q).expect("tau");
        let s = SeededRng::new(SEED, stream_id(&[label_tag("tau0"), i as u64]));
        let t = mc_success_probability(&prob, &Vector::zeros(dim), d, 5000, &s).expect("mc");
        ok &= t.estimate >= tau0 - 3.0 * t.std_err;
        parts.push(format!(
            "p=0 ({d_e},{d},{dim}) mc={:.3}>=tau0={tau0:.3}",
            t.estimate
        ));
    }
    // 20 random anchors against τ and the anchor-dependent 2^-m J(Δ/2)
    let mut worst_margin = f64::INFINITY;
    for i in 0..20 {
        let d_e = 1 + i % 2;
        let d = d_e + (i / 2) % 2;
        let dim = 6 + i % 7;
        let xbar: Vec<f64> = (0..d_e).map(|_| rng.uniform(-0.9, 0.9)).collect();
        let prob = aligned_quadratic(&xbar, dim).expect("problem");
        let p = sample_uniform_box(dim, &mut rng);
        let (m, n) = (dim - d_e, d - d_e + 1);
        let (tau, _) = tau_bounds(m, n, d_e, &q).expect("tau");
        let local =
            0.5f64.powi(m as i32) * integral_J(m, n, delta(&prob, &p) / 2.0, &q).expect("J");
        let s = SeededRng::new(SEED, stream_id(&[label_tag("tau"), i as u64]));
        let t = mc_success_probability(&prob, &p, d, 5000, &s).expect("mc");
        let margin = t.estimate - tau.max(local) + 3.0 * t.std_err;
        worst_margin = worst_margin.min(margin);
        ok &= tau > 0.0 && margin >= 0.0;
    }
    parts.push(format!(
        "20 random p: min(mc - max(tau, 2^-m J(delta/2)) + 3se) = {worst_margin:.2e}"
    ));
    Outcome {
        passed: ok,
        detail: parts.join("; "),
    }
}

fn dimension_decay() -> Outcome {
    let mut prev: Option<(f64, f64)> = None;
    let mut ok = true;
    let mut parts = Vec::new();
    for dim in [6usize, 12, 24] {
        let prob = aligned_quadratic(&[0.5, -0.4], dim).expect("problem");
        let rng = SeededRng::new(SEED, stream_id(&[label_tag("decay"), dim as u64]));
        let t = mc_success_probability(&prob, &Vector::zeros(dim), 3, 5000, &rng).expect("mc");
        if let Some((e, se)) = prev {
            ok &= t.estimate <= e + 3.0 * (se * se + t.std_err * t.std_err).sqrt();
        }
        prev = Some((t.estimate, t.std_err));
        parts.push(format!("D={dim}: {:.4}±{:.4}", t.estimate, t.std_err));
    }
    Outcome {
        passed: ok,
        detail: parts.join(", "),
    }
}

fn convergence_curve() -> Outcome {
    let base = BaseFunction::by_name("goldstein_price").expect("base");
    let prob = lift_with_rotation(&base, Matrix::identity(12, 12)).expect("problem");
    let mut cfg = RunConfig::new(
        2,
        PPolicy::Origin,
        SolverSpec::new(SolverKind::DirectGlobal),
        3000,
        0,
    );
    cfg.k_max = 30;
    let r = convergence_experiment(&prob, &cfg, 200, 5000, SEED).expect("experiment");
    let worst = r
        .empirical
        .iter()
        .zip(&r.bound)
        .zip(&r.std_err)
        .map(|((e, b), s)| e - (b - 3.0 * s))
        .fold(f64::INFINITY, f64::min);
    Outcome {
        passed: r.dominated,
        detail: format!(
            "tau_hat={:.3}±{:.3} rho_hat={:.3} ({}/{}); empirical k=1,5,30: {:.3},{:.3},{:.3}; bound: {:.3},{:.3},{:.3}; min slack {worst:.3}",
            r.tau_hat,
            r.tau_hat_std_err,
            r.rho_hat,
            r.rs_count,
            r.r_count,
            r.empirical[0],
            r.empirical[4],
            r.empirical[29],
            r.bound[0],
            r.bound[4],
            r.bound[29]
        ),
    }
}

fn table2_direction() -> Outcome {
    let mut plan = ExperimentPlan::local_comparison(SEED);
    plan.dims = vec![100];
    plan.problem_seed = SEED;
    let manifest = plan.manifest().expect("manifest");
    let table = run_plan(&plan, &manifest, None).expect("plan");
    let rows = medians(&table.summaries());
    let get = |v: &str| {
        rows.iter()
            .find(|r| r.variant == v)
            .map(|r| (r.median_evals, r.solved, r.cells))
            .unwrap_or((f64::NAN, 0, 0))
    };
    let (ln, ln_s, n) = get("LN-REGO");
    let (la, la_s, _) = get("LA-REGO");
    let (ne, ne_s, _) = get(NO_EMBEDDING);
    Outcome {
        passed: table.errors.is_empty() && ln < ne && la < ne,
        detail: format!(
            "D=100 median evals over {n} cells: LN-REGO {ln} (solved {ln_s}), LA-REGO {la} (solved {la_s}), no-embedding {ne} (solved {ne_s}); cell errors {}",
            table.errors.len()
        ),
    }
}

fn structural_invariants() -> Outcome {
    let names = BaseFunction::catalog_names();
    let mut fails: Vec<String> = Vec::new();
    for i in 0..100u64 {
        let mut rng = SeededRng::new(SEED, stream_id(&[label_tag("structural"), i]));
        let base = BaseFunction::by_name(names[i as usize % names.len()]).expect("base");
        let d_e = base.effective_dim();
        let dim = d_e + 1 + (rng.uniform(0.0, 15.0) as usize);
        let d = (d_e + (rng.uniform(0.0, 3.0) as usize).min(2)).min(dim);
        let prob = lift(&base, dim, &mut rng).expect("lift");
        let sub = prob.subspace();
        let mut fail = |what: &str| fails.push(format!("#{i} {}: {what}", prob.name()));

        let uv = Matrix::from_fn(dim, dim, |r, c| {
            if c < d_e {
                sub.u()[(r, c)]
            } else {
                sub.v()[(r, c - d_e)]
            }
        });
        if orthonormality_residual(prob.rotation()) > 1e-10 || orthonormality_residual(&uv) > 1e-10
        {
            fail("orthonormality");
        }

        let p = sample_uniform_box(dim, &mut rng);
        let a = sample_gaussian(dim, d, &mut rng);
        let rm = reduced_minimizer(sub, &a, prob.x_top_star(), &p).expect("minimizer");
        let b = sub.u().transpose() * &a;
        if (&b * &rm.y - &rm.z).amax() > 1e-9 {
            fail("By = z");
        }
        let pinv = b.clone().pseudo_inverse(1e-12).expect("pinv");
        if (&pinv * &rm.z - &rm.y).amax() > 1e-8 * (1.0 + rm.y.amax()) {
            fail("pseudo-inverse");
        }
        let proj = Matrix::identity(d, d) - &pinv * &b;
        for _ in 0..10 {
            let r = &proj * Vector::from_fn(d, |_, _| rng.standard_normal());
            if (&rm.y + &r).norm() < rm.y.norm() - 1e-12
                || (&b * (&rm.y + &r) - &rm.z).amax() > 1e-8
            {
                fail("min-norm vs null space");
            }
        }

        let w = compute_w(sub, &a, &rm.y).expect("w");
        let (xt, _) = sub.project(prob.x_top_star()).expect("project");
        let (pt, _) = sub.project(&p).expect("project");
        if (&a * &rm.y - (&xt - &pt + sub.v() * &w)).norm() > 1e-8 {
            fail("reconstruction");
        }
        if (rm.z.norm() - (&xt - &pt).norm()).abs() > 1e-10 {
            fail("norm identity");
        }

        let x = sample_uniform_box(dim, &mut rng);
        let r = sub.v() * Vector::from_fn(dim - d_e, |_, _| rng.standard_normal());
        let (f0, f1) = (
            prob.evaluate(&x).expect("f"),
            prob.evaluate(&(&x + r)).expect("f"),
        );
        if (f0 - f1).abs() > 1e-9 * (1.0 + f0.abs()) {
            fail("f(x + Vr) = f(x)");
        }

        let policy = [
            PPolicy::Adaptive,
            PPolicy::local_adaptive(),
            PPolicy::Origin,
            PPolicy::UniformRandom,
        ][i as usize % 4];
        let mut cfg = RunConfig::new(
            d,
            policy,
            SolverSpec::new(SolverKind::SingleStartLocal),
            150,
            i,
        );
        cfg.k_max = 4;
        let rec = run(&prob, &cfg).expect("run");
        let mut prev_f = f64::INFINITY;
        let mut prev_cum = 0;
        let mut sum = 0;
        for e in &rec.entries {
            let fo = prob.evaluate(x_opt(&rec, e.k).expect("x_opt")).expect("f");
            if fo > prev_f
                || e.f_xopt > prev_f
                || e.x.amax() > 1.0 + 1e-9
                || e.cum_evals <= prev_cum
            {
                fail("run trace");
            }
            sum += e.evals;
            prev_f = e.f_xopt;
            prev_cum = e.cum_evals;
        }
        if sum != rec.total_evals() {
            fail("eval accounting");
        }
    }
    Outcome {
        passed: fails.is_empty(),
        detail: if fails.is_empty() {
            "100 instances, all invariants hold".into()
        } else {
            format!(
                "{} failures: {}",
                fails.len(),
                fails.iter().take(5).cloned().collect::<Vec<_>>().join("; ")
            )
        },
    }
}

/// Minima as listed in the benchmark table.
const TABLE_MINIMA: [(&str, f64); 19] = [
    ("beale", 0.0),
    ("branin", 0.397887),
    ("brent", 0.0),
    ("bukin6", 0.0),
    ("easom", -1.0),
    ("goldstein_price", 3.0),
    ("hartmann3", -3.86278),
    ("hartmann6", -3.32237),
    ("levy", 0.0),
    ("perm", 0.0),
    ("rosenbrock", 0.0),
    ("shekel5", -10.1532),
    ("shekel7", -10.4029),
    ("shekel10", -10.5364),
    ("shubert", -186.7309),
    ("six_hump_camel", -1.0316),
    ("styblinski_tang", -156.664),
    ("trid", -30.0),
    ("zettl", -0.00379),
];

fn benchmark_fidelity() -> Outcome {
    let mut worst = (0.0f64, String::new());
    let mut missing = Vec::new();
    for (name, f_star) in TABLE_MINIMA {
        let base = BaseFunction::by_name(name).expect("base");
        for dim in [10usize, 100] {
            let mut rng = SeededRng::new(SEED, stream_id(&[label_tag(name), dim as u64]));
            let prob = lift(&base, dim, &mut rng).expect("lift");
            let Some(x) = prob.feasible_minimizer() else {
                missing.push(format!("{name}@{dim}"));
                continue;
            };
            for point in [x, prob.x_star()] {
                let err = (prob.evaluate(point).expect("f") - f_star).abs();
                if err > worst.0 {
                    worst = (err, format!("{name}@D={dim}"));
                }
            }
        }
    }
    Outcome {
        passed: worst.0 <= 1e-3 && missing.is_empty(),
        detail: format!(
            "19 functions at D=10,100: max |f(x*) - table value| = {:.2e} ({}){}",
            worst.0,
            worst.1,
            if missing.is_empty() {
                String::new()
            } else {
                format!("; no feasible minimizer: {missing:?}")
            }
        ),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion, Duration); 9] = [
        (
            "closed form J_(m,1)(1) = 1/(m+1)",
            closed_form_j,
            Duration::from_secs(1),
        ),
        (
            "chi-squared and F laws, negative controls",
            distribution_laws,
            Duration::from_secs(30),
        ),
        (
            "equality case mc = J",
            equality_case,
            Duration::from_secs(60),
        ),
        (
            "bound ordering tau0, tau",
            bound_ordering,
            Duration::from_secs(120),
        ),
        ("dimension decay", dimension_decay, Duration::from_secs(60)),
        (
            "convergence curve dominates bound",
            convergence_curve,
            Duration::from_secs(300),
        ),
        (
            "local variants beat no-embedding median at D=100",
            table2_direction,
            Duration::from_secs(1200),
        ),
        (
            "structural invariants",
            structural_invariants,
            Duration::from_secs(60),
        ),
        (
            "benchmark fidelity",
            benchmark_fidelity,
            Duration::from_secs(5),
        ),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = check();
        let took = start.elapsed();
        let pass = out.passed && took <= *limit;
        failed += usize::from(!pass);
        println!(
            "{} criterion {id}: {name} [{:.2}s / {}s] {}",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            limit.as_secs(),
            out.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
