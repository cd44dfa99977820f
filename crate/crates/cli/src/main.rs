//! `xrego` command-line interface: problem manifests, experiment plans,
//! the theory validation suite, profiles and single-cell replay.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use xrego_core::harness::{
    emit, profiles_by_panel, read_results, replay, results_csv, run_plan, summarize, CellKey,
    ExperimentPlan, NO_EMBEDDING, WORKERS_ENV,
};
use xrego_core::problems::Manifest;
use xrego_core::theory::{validate_theory, ValidationConfig};
use xrego_core::xrego::PPolicy;

#[derive(Parser)]
#[command(
    name = "xrego",
    version,
    about = "Random-embedding global optimization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a problem manifest (and optionally a plan template).
    Gen {
        /// Ambient dimensions, comma-separated.
        #[arg(long, value_delimiter = ',', default_value = "10,100")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "manifest.toml")]
        out: PathBuf,
        /// Also write a plan template here.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Execute an experiment plan and write results, medians and profiles.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Use this manifest instead of the plan's problem selection.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
    },
    /// Run the theory validation suite.
    Validate {
        #[arg(long, default_value_t = 2022)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        ks_samples: usize,
        #[arg(long, default_value_t = 5000)]
        mc_samples: usize,
        /// Write the JSON report here (stdout otherwise).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the report as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Rebuild medians and profiles from an existing results.csv.
    Profile {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Re-run one cell of a plan and print its rows.
    Replay {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        problem: String,
        #[arg(long = "dim")]
        dim: usize,
        #[arg(long)]
        variant: String,
        #[arg(long)]
        solver: String,
        #[arg(long, default_value_t = 0)]
        rep: usize,
        /// Subspace dimension; defaults to the problem's effective dimension.
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

fn load_manifest(plan: &ExperimentPlan, path: Option<&Path>) -> Result<Manifest> {
    Ok(match path {
        Some(p) => Manifest::read(p)?,
        None => plan.manifest()?,
    })
}

fn gen(dims: &[usize], seed: u64, out: &Path, plan: Option<&Path>) -> Result<()> {
    Manifest::catalog(dims, seed)?.write(out)?;
    eprintln!("wrote {}", out.display());
    if let Some(path) = plan {
        let mut p = ExperimentPlan::local_comparison(seed);
        p.dims = dims.to_vec();
        p.problem_seed = seed;
        std::fs::write(path, p.to_toml()?)
            .with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn run(config: &Path, out: &Path, manifest: Option<&Path>, workers: Option<usize>) -> Result<bool> {
    let plan = ExperimentPlan::read(config)?;
    let manifest = load_manifest(&plan, manifest)?;
    let table = run_plan(&plan, &manifest, workers)?;
    for (key, err) in &table.errors {
        eprintln!(
            "cell error: {} D={} d={} {} {} rep={}: {err}",
            key.problem, key.dim, key.d, key.variant, key.solver, key.rep
        );
    }
    let curves = profiles_by_panel(&table.summaries())?;
    if curves.is_empty() {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let path = out.join("results.csv");
        std::fs::write(&path, results_csv(&table.rows)?)
            .with_context(|| format!("writing {}", path.display()))?;
        bail!("no problem was solved; wrote {} only", path.display());
    }
    let files = emit(&table.rows, &curves, out)?;
    eprintln!("wrote {}", files.results.display());
    Ok(table.errors.is_empty())
}

fn validate(cfg: ValidationConfig, out: Option<&Path>, csv: Option<&Path>) -> Result<bool> {
    let report = validate_theory(&cfg)?;
    let json = report.to_json()?;
    match out {
        Some(p) => std::fs::write(p, &json).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{json}"),
    }
    if let Some(p) = csv {
        std::fs::write(p, report.to_csv()?).with_context(|| format!("writing {}", p.display()))?;
    }
    for c in report.violations() {
        eprintln!("violation: {} (seed {})", c.name, c.seed);
    }
    Ok(report.all_passed())
}

fn profile(results: &Path, out: &Path) -> Result<()> {
    let rows = read_results(results)?;
    let curves = profiles_by_panel(&summarize(&rows))?;
    let files = emit(&rows, &curves, out)?;
    eprintln!("wrote {}", files.profiles.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen {
            dims,
            seed,
            out,
            plan,
        } => gen(&dims, seed, &out, plan.as_deref()).map(|_| true),
        Command::Run {
            config,
            out,
            manifest,
            workers,
        } => run(&config, &out, manifest.as_deref(), workers),
        Command::Validate {
            seed,
            ks_samples,
            mc_samples,
            out,
            csv,
        } => validate(
            ValidationConfig {
                seed,
                ks_samples,
                mc_samples,
                ..ValidationConfig::default()
            },
            out.as_deref(),
            csv.as_deref(),
        ),
        Command::Profile { results, out } => profile(&results, &out).map(|_| true),
        Command::Replay {
            config,
            problem,
            dim,
            variant,
            solver,
            rep,
            d,
            manifest,
        } => (|| {
            let plan = ExperimentPlan::read(&config)?;
            let manifest = load_manifest(&plan, manifest.as_deref())?;
            let variant = if variant == NO_EMBEDDING {
                variant
            } else {
                PPolicy::from_label(&variant)?.label().to_string()
            };
            let d = match d {
                Some(d) => d,
                None if variant == NO_EMBEDDING => dim,
                None => xrego_core::problems::BaseFunction::by_name(&problem)?.effective_dim(),
            };
            let key = CellKey {
                problem,
                dim,
                d,
                variant,
                solver,
                rep,
            };
            let record = replay(&plan, &manifest, &key)?;
            print!("{}", results_csv(&record.rows(rep))?);
            Ok(true)
        })(),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
