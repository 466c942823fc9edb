mod compare;
mod config;
mod solve;
mod verify;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ProblemArgs, RunConfig, SolverArgs};
use solve::Job;

/// Environment variable naming the default output directory.
const OUT_ENV: &str = "MTEQ_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("not converged: {0}")]
    NotConverged(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::NotConverged(_) | Failure::Numerical(_) => 2,
            Failure::Config(_) => 3,
            Failure::Io(_) => 4,
        }
    }
}

impl From<mteq::Error> for Failure {
    fn from(e: mteq::Error) -> Self {
        use mteq::Error as E;
        match e {
            E::Io(m) => Failure::Io(m),
            E::Parse(_) | E::InvalidArgument(_) | E::DimensionMismatch(_) | E::MetricMismatch => {
                Failure::Config(e.to_string())
            }
            other => Failure::Numerical(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "mteq", version, about = "Low-rank solvers for SPD multiterm matrix equations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a problem instance as Matrix Market files plus a manifest.
    Generate {
        /// JSON run config whose `problem` section is used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        problem: ProblemArgs,
        /// Instance directory [default: $MTEQ_OUT_DIR/<family>].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one or more solver configs, writing trace.csv and summary.json.
    Solve {
        /// JSON run config; repeat to run several. Flags override every config.
        #[arg(long)]
        config: Vec<PathBuf>,
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Output directory [default: config `out_dir`, then $MTEQ_OUT_DIR, then ./mteq-out].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of configs solved concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Tabulate run summaries as CSV.
    Compare {
        /// summary.json files or run directories.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// CSV file [default: stdout].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the solvers against dense computations on a tiny instance.
    Verify {
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        rank: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn default_out() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("mteq-out"))
}

fn read_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    RunConfig::from_json(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn generate(config: Option<PathBuf>, problem: ProblemArgs, out: Option<PathBuf>) -> Result<(), Failure> {
    let mut spec = match config {
        Some(p) => read_config(&p)?.problem,
        None => Default::default(),
    };
    problem.apply(&mut spec);
    let spec = spec.resolve();
    let inst = spec.build()?;
    let dir = out.unwrap_or_else(|| default_out().join(&inst.family));
    let m = mteq::io::export_instance(&inst, &dir)?;
    println!(
        "{}: {} instance, {}x{}, {} terms, rhs rank {}, {} files",
        dir.display(),
        m.family,
        m.rows,
        m.cols,
        m.terms.len(),
        inst.rhs.width(),
        m.sha256.len()
    );
    Ok(())
}

/// Applies the flag overrides and assigns output directories. With several
/// configs each run writes to `<out>/<name>` or `<out>/run<i>`.
fn plan(list: &mut [RunConfig], problem: &ProblemArgs, solver: &SolverArgs, out: Option<PathBuf>) -> Result<Vec<Job>, Failure> {
    let several = list.len() > 1;
    let mut seen = BTreeSet::new();
    let mut work = Vec::new();
    for (i, c) in list.iter_mut().enumerate() {
        problem.apply(&mut c.problem);
        solver.apply(c);
        let c = c.resolve()?;
        let base = out.clone().or_else(|| c.out_dir.clone()).unwrap_or_else(default_out);
        let dir = if several { base.join(c.name.clone().unwrap_or_else(|| format!("run{i}"))) } else { base };
        if !seen.insert(dir.clone()) {
            return Err(Failure::Config(format!("two runs write to {}", dir.display())));
        }
        work.push(Job { config: c, dir });
    }
    Ok(work)
}

/// Every error is reported here, so the caller only sets the exit code.
fn solve(
    configs: Vec<PathBuf>,
    problem: ProblemArgs,
    solver: SolverArgs,
    out: Option<PathBuf>,
    jobs: usize,
) -> Result<(), Failure> {
    let mut list = if configs.is_empty() {
        vec![RunConfig::default()]
    } else {
        configs.iter().map(|p| read_config(p)).collect::<Result<Vec<_>, _>>().inspect_err(|e| eprintln!("error: {e}"))?
    };
    let work = plan(&mut list, &problem, &solver, out).inspect_err(|e| eprintln!("error: {e}"))?;
    let mut worst: Option<Failure> = None;
    for (job, r) in work.iter().zip(solve::run_all(&work, jobs)) {
        match r {
            Ok(s) => println!(
                "{}: {} in {} iterations, residual {}, rank {}, {:.2}s",
                job.dir.display(),
                s.status,
                s.iters,
                s.final_res.map_or("n/a".into(), |r| format!("{r:.3e}")),
                s.final_rank,
                s.wall_s
            ),
            Err(e) => {
                eprintln!("error: {e}");
                if worst.as_ref().map_or(true, |w| e.code() > w.code()) {
                    worst = Some(e);
                }
            }
        }
    }
    worst.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let reported = matches!(cli.cmd, Cmd::Solve { .. });
    let res = match cli.cmd {
        Cmd::Generate { config, problem, out } => generate(config, problem, out),
        Cmd::Solve { config, problem, solver, out, jobs } => solve(config, problem, solver, out, jobs),
        Cmd::Compare { runs, out } => match out {
            Some(p) => std::fs::File::create(&p).map_err(Failure::from).and_then(|f| compare::compare(&runs, f)),
            None => compare::compare(&runs, std::io::stdout().lock()),
        },
        Cmd::Verify { n, rank, seed } => verify::verify(n, rank, seed).and_then(|checks| {
            let mut ok = true;
            for c in &checks {
                println!(
                    "{}: {} ({:.2e}, bound {:.0e})",
                    c.name,
                    if c.passed() { "PASS" } else { "FAIL" },
                    c.value,
                    c.bound
                );
                ok &= c.passed();
            }
            if ok {
                Ok(())
            } else {
                Err(Failure::Numerical("dense-oracle checks failed".into()))
            }
        }),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !reported {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.code())
        }
    }
}
