use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use mteq::io::import_instance;
use mteq::problems::{fd_series_instance, gen_synthetic, identity_instance, stoch_galerkin_default, ProblemInstance};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    #[default]
    FdDiffusion,
    StochGalerkin,
    Synthetic,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
pub enum SolverKind {
    #[serde(rename = "rnlcg")]
    Rnlcg,
    #[default]
    #[serde(rename = "rram")]
    Rram,
    #[serde(rename = "trunc_cg")]
    #[value(name = "trunc_cg", alias = "trunc-cg")]
    TruncCg,
}

/// `auto` takes the geometry suggested by the preconditioner, `standard`
/// forces the Frobenius metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MetricChoice {
    #[default]
    Auto,
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PrecondChoice {
    Identity,
    P1,
    #[default]
    P2,
    Tangadi,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Rnlcg => "rnlcg",
            SolverKind::Rram => "rram",
            SolverKind::TruncCg => "trunc_cg",
        }
    }
}

impl PrecondChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            PrecondChoice::Identity => "identity",
            PrecondChoice::P1 => "p1",
            PrecondChoice::P2 => "p2",
            PrecondChoice::Tangadi => "tangadi",
        }
    }
}

/// Either a generated family with its parameters or an instance directory.
/// Parameters left out take the family defaults during [`ProblemSpec::resolve`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSpec {
    pub family: Family,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub import: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lk: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coupling: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank_f: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ProblemSpec {
    /// Fills in family defaults and drops parameters the family ignores.
    pub fn resolve(&self) -> ProblemSpec {
        let mut r = ProblemSpec { family: self.family, import: self.import.clone(), ..Default::default() };
        if r.import.is_some() {
            return r;
        }
        match self.family {
            Family::FdDiffusion => {
                r.n = Some(self.n.unwrap_or(200));
                r.alpha = Some(self.alpha.unwrap_or(10.0));
                r.lk = Some(self.lk.unwrap_or(3));
            }
            Family::StochGalerkin => {
                r.n = Some(self.n.unwrap_or(32));
                r.q = Some(self.q.unwrap_or(4));
                r.p = Some(self.p.unwrap_or(3));
            }
            Family::Synthetic | Family::Identity => {
                let n = self.n.unwrap_or(6);
                r.n = Some(n);
                r.m = Some(self.m.unwrap_or(n));
                r.rank_f = Some(self.rank_f.unwrap_or(2));
                r.seed = Some(self.seed.unwrap_or(0));
                if self.family == Family::Synthetic {
                    r.l = Some(self.l.unwrap_or(3));
                    r.coupling = Some(self.coupling.unwrap_or(0.3));
                }
            }
        }
        r
    }

    /// Builds the instance from a resolved spec.
    pub fn build(&self) -> Result<ProblemInstance, Failure> {
        if let Some(dir) = &self.import {
            return Ok(import_instance(dir)?);
        }
        let need = |v: Option<usize>, what: &str| v.ok_or_else(|| Failure::Config(format!("missing `{what}`")));
        let inst = match self.family {
            Family::FdDiffusion => {
                fd_series_instance(need(self.n, "n")?, self.alpha.unwrap_or(10.0), need(self.lk, "lk")?)?
            }
            Family::StochGalerkin => stoch_galerkin_default(need(self.n, "n")?, need(self.q, "q")?, need(self.p, "p")?)?,
            Family::Synthetic => gen_synthetic(
                need(self.m, "m")?,
                need(self.n, "n")?,
                need(self.l, "l")?,
                self.coupling.unwrap_or(0.3),
                need(self.rank_f, "rank_f")?,
                self.seed.unwrap_or(0),
            )?,
            Family::Identity => identity_instance(
                need(self.m, "m")?,
                need(self.n, "n")?,
                need(self.rank_f, "rank_f")?,
                self.seed.unwrap_or(0),
            )?,
        };
        Ok(inst)
    }
}

/// One solver run. Every field can be overridden from the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub problem: ProblemSpec,
    pub solver: SolverKind,
    pub metric: MetricChoice,
    pub precond: PrecondChoice,
    /// Wachspress shift count for tangADI and ambient ADI.
    pub shifts: usize,
    /// ADI steps per preconditioner application.
    pub steps: usize,
    /// Fixed rank for `rnlcg`.
    pub rank: usize,
    /// Initial rank and rank increment for `rram`.
    pub r0: usize,
    pub r_up: usize,
    /// Rank ceiling for `rram` and `trunc_cg`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank_cap: Option<usize>,
    pub tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: None,
            problem: ProblemSpec::default(),
            solver: SolverKind::default(),
            metric: MetricChoice::default(),
            precond: PrecondChoice::default(),
            shifts: 8,
            steps: 8,
            rank: 10,
            r0: 3,
            r_up: 3,
            rank_cap: None,
            tol: 1e-6,
            max_iter: None,
            seed: 0,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, Failure> {
        serde_json::from_str(text).map_err(|e| Failure::Config(e.to_string()))
    }

    /// Checks cross-field constraints and fills defaults.
    pub fn resolve(&self) -> Result<RunConfig, Failure> {
        let bad = |msg: &str| Err(Failure::Config(msg.into()));
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return bad("tol must be a nonnegative finite number");
        }
        if self.shifts == 0 || self.steps == 0 {
            return bad("shifts and steps must be positive");
        }
        match self.solver {
            SolverKind::Rnlcg if self.rank == 0 => return bad("rank must be positive"),
            SolverKind::Rnlcg if self.rank_cap.is_some() => return bad("rank_cap does not apply to rnlcg"),
            SolverKind::Rram if self.r0 == 0 || self.r_up == 0 => return bad("r0 and r_up must be positive"),
            SolverKind::TruncCg if self.precond == PrecondChoice::Tangadi => {
                return bad("tangadi acts on tangent spaces; trunc_cg takes identity, p1 or p2")
            }
            _ => {}
        }
        if self.rank_cap == Some(0) {
            return bad("rank_cap must be positive");
        }
        let mut r = self.clone();
        r.problem = self.problem.resolve();
        r.max_iter = Some(self.max_iter.unwrap_or(match self.solver {
            SolverKind::TruncCg => 500,
            _ => 1000,
        }));
        Ok(r)
    }
}

/// Problem parameters shared by `generate` and `solve`.
#[derive(Debug, Clone, Default, Args)]
pub struct ProblemArgs {
    /// Problem family.
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    /// Instance directory written by `generate`.
    #[arg(long, value_name = "DIR")]
    pub import: Option<PathBuf>,
    /// Grid size (columns for synthetic families).
    #[arg(long)]
    pub n: Option<usize>,
    /// Rows for synthetic families.
    #[arg(long)]
    pub m: Option<usize>,
    /// Coefficient contrast of fd-diffusion.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Series length of the fd-diffusion coefficient.
    #[arg(long)]
    pub lk: Option<usize>,
    /// Random parameters of stoch-galerkin.
    #[arg(long)]
    pub q: Option<usize>,
    /// Total polynomial degree of stoch-galerkin.
    #[arg(long)]
    pub p: Option<usize>,
    /// Number of terms of synthetic.
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long)]
    pub coupling: Option<f64>,
    /// Rank of the right-hand side for synthetic families.
    #[arg(long)]
    pub rank_f: Option<usize>,
    /// Generator seed for synthetic families.
    #[arg(long)]
    pub problem_seed: Option<u64>,
}

impl ProblemArgs {
    pub fn apply(&self, p: &mut ProblemSpec) {
        if let Some(f) = self.family {
            p.family = f;
            p.import = None;
        }
        if let Some(d) = &self.import {
            p.import = Some(d.clone());
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if self.$f.is_some() { p.$f = self.$f; })* };
        }
        set!(n, m, alpha, lk, q, p, l, coupling, rank_f);
        if self.problem_seed.is_some() {
            p.seed = self.problem_seed;
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SolverArgs {
    #[arg(long, value_enum)]
    pub solver: Option<SolverKind>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricChoice>,
    #[arg(long, value_enum)]
    pub precond: Option<PrecondChoice>,
    #[arg(long)]
    pub shifts: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub r0: Option<usize>,
    #[arg(long)]
    pub r_up: Option<usize>,
    #[arg(long)]
    pub rank_cap: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Seed of the initial guess and of the residual estimator.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run name, also the output subdirectory when several configs run.
    #[arg(long)]
    pub name: Option<String>,
}

impl SolverArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f.clone() { c.$f = v; })* };
        }
        set!(solver, metric, precond, shifts, steps, rank, r0, r_up, tol, seed);
        if self.rank_cap.is_some() {
            c.rank_cap = self.rank_cap;
        }
        if self.max_iter.is_some() {
            c.max_iter = self.max_iter;
        }
        if self.name.is_some() {
            c.name = self.name.clone();
        }
    }
}
