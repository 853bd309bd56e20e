//! Command-line orchestration: generate a domain, solve, verify the theory
//! probes on the solution and write the report files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    self, BoundednessReport, DeGiorgiParams, DeGiorgiReport, ExponentConfig, NaturalBoundaryReport, OscillationReport,
    SubminimizerReport,
};
use crate::calculus::BoundaryField;
use crate::domains::{generate, make_boundary_data, DataKind, DomainSpec};
use crate::error::{Error, Result};
use crate::report::{self, Cell};
use crate::solver::{
    assemble, verify_minimizer_set, EnergyBreakdown, MinimizerSetReport, NeumannProblem, Solution, SolverOptions,
};
use crate::space::{self, CapacityBounds, DiagnoseOptions, Domain, NodeIdx, SpaceDiagnostics};

#[derive(Debug, Parser)]
#[command(name = "neumann-plap", version, about = "Neumann p-Laplacian solver and De Giorgi verification harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub config: RunConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write domain.json.
    Generate,
    /// Write solution.json.
    Solve,
    /// Solve, then write the verification reports.
    Verify,
    /// Write diagnostics.json.
    Diagnose,
    /// All of the above.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Debug, Args)]
pub struct RunConfig {
    /// Domain spec (path:N, grid:N, lshape:N, annulus:N, sierpinski:L, optional :H) or a domain JSON file.
    #[arg(long, global = true, default_value = "grid:16")]
    pub domain: String,
    #[arg(long, global = true, default_value_t = 2.0)]
    pub p: f64,
    /// dipole, patch[:left|right|bottom|top], random, or a JSON object of boundary values.
    #[arg(long, global = true, default_value = "dipole")]
    pub data: String,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Gradient tolerance of the solver.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, global = true, default_value_t = 100_000)]
    pub max_iter: usize,
    /// Subtract the P-weighted mean from incompatible data instead of failing.
    #[arg(long, global = true)]
    pub project_compat: bool,
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, value_delimiter = ',', default_value = "json,csv")]
    pub format: Vec<Format>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Largest accepted De Giorgi ratio.
    #[arg(long, global = true, default_value_t = analysis::DEFAULT_C_BUDGET)]
    pub c_budget: f64,
}

/// Outcome of a run: whether every probe passed, and the files written.
#[derive(Debug)]
pub struct RunOutcome {
    pub passed: bool,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            2
        }
    }
}

struct Writer<'a> {
    dir: &'a Path,
    formats: &'a [Format],
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.dir.join(name);
        report::write_json(&path, value)?;
        self.files.push(path);
        Ok(())
    }

    fn table(&mut self, stem: &str, header: &[&str], rows: Vec<Vec<Cell>>, json: &impl Serialize) -> Result<()> {
        if self.formats.contains(&Format::Csv) {
            let path = self.dir.join(format!("{stem}.csv"));
            report::write_csv(&path, header, &rows)?;
            self.files.push(path);
        }
        if self.formats.contains(&Format::Json) {
            self.json(&format!("{stem}.json"), json)?;
        }
        Ok(())
    }
}

pub fn load_domain(spec: &str) -> Result<Domain> {
    generate(&DomainSpec::from_str(spec)?)
}

/// A data kind name, or a JSON object mapping boundary ids to values.
pub fn load_data(domain: &Domain, data: &str, seed: u64) -> Result<BoundaryField> {
    let text = data.trim();
    if text.starts_with('{') {
        let map: BTreeMap<String, f64> = serde_json::from_str(text)?;
        return BoundaryField::from_map(domain, &map);
    }
    make_boundary_data(domain, DataKind::from_str(text)?, seed)
}

#[derive(Serialize)]
struct EdgeQuotient<'a> {
    a: &'a str,
    b: &'a str,
    quotient: f64,
}

#[derive(Serialize)]
struct SolutionFile<'a> {
    domain: &'a str,
    p: f64,
    u: BTreeMap<String, f64>,
    edge_quotients: Vec<EdgeQuotient<'a>>,
    energy: EnergyBreakdown,
    iterations: usize,
    residual: f64,
    euler_lagrange_interior: f64,
    euler_lagrange_boundary: f64,
    method: crate::Method,
    fell_back: bool,
    converged: bool,
}

fn solution_file<'a>(cfg: &'a RunConfig, problem: &NeumannProblem<'a>, sol: &Solution) -> SolutionFile<'a> {
    let d = problem.domain;
    let g = d.graph();
    let (el_in, el_bd) = problem.euler_lagrange_residual(&sol.u);
    SolutionFile {
        domain: &cfg.domain,
        p: problem.p,
        u: sol.u.to_map(d).into_iter().filter(|(id, _)| d.index_of(id).is_ok_and(|i| d.in_closure(i))).collect(),
        edge_quotients: d
            .energy_edges()
            .iter()
            .map(|&k| {
                let e = g.edge(k);
                EdgeQuotient { a: g.id(e.a), b: g.id(e.b), quotient: sol.gradient.edge_quotients[k] }
            })
            .collect(),
        energy: sol.breakdown(),
        iterations: sol.iterations,
        residual: sol.residual,
        euler_lagrange_interior: el_in,
        euler_lagrange_boundary: el_bd,
        method: sol.method,
        fell_back: sol.fell_back,
        converged: sol.converged,
    }
}

fn solver_options(cfg: &RunConfig) -> SolverOptions {
    SolverOptions {
        tol_grad: cfg.tol,
        max_iter: cfg.max_iter,
        project_compat: cfg.project_compat,
        seed: cfg.seed,
        ..SolverOptions::default()
    }
}

/// Every verification probe on one solution.
#[derive(Debug, Serialize)]
pub struct Verification {
    pub params: DeGiorgiParams,
    pub s_fit: f64,
    pub degiorgi: DeGiorgiReport,
    pub minimizer_set: MinimizerSetReport,
    pub boundedness: Vec<BoundednessReport>,
    pub oscillation: Vec<OscillationReport>,
    pub subminimizer: Option<SubminimizerReport>,
    pub natural_boundary: NaturalBoundaryReport,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.degiorgi.passed
            && self.minimizer_set.passed
            && self.boundedness.iter().all(|b| b.passed)
            && self.oscillation.iter().all(|o| o.passed != Some(false))
            && self.subminimizer.as_ref().is_none_or(|s| s.passed)
            && self.natural_boundary.passed
    }
}

/// Largest radius (2^j + ½)ℓ below `limit`, or `limit/2` when none fits.
fn half_integer_radius(limit: f64, h: f64) -> f64 {
    let mut r = None;
    let mut j = 1.0;
    while (j + 0.5) * h < limit {
        r = Some((j + 0.5) * h);
        j *= 2.0;
    }
    r.unwrap_or(limit / 2.0)
}

/// Exponents for the harness: the fitted mass exponent raised to at least p + 1.
pub fn harness_exponents(domain: &Domain, p: f64, seed: u64) -> Result<(f64, DeGiorgiParams)> {
    let radii = space::dyadic_radii(domain);
    let s_fit = match space::estimate_mass_exponent(domain, 16, &radii, seed) {
        Ok(m) => m.s,
        Err(e) => {
            log::warn!("mass exponent unavailable ({e}); using p + 1");
            p + 1.0
        }
    };
    let s_eff = s_fit.max(p + 1.0);
    Ok((s_fit, analysis::compute_exponents(s_eff, p, &ExponentConfig::default())?))
}

pub fn verify(problem: &NeumannProblem, sol: &Solution, seed: u64, c_budget: f64) -> Result<Verification> {
    let d = problem.domain;
    let (u, f, p) = (&sol.u, &problem.f, problem.p);
    let (s_fit, params) = harness_exponents(d, p, seed)?;
    let h = d.graph().max_edge_len();
    let diam = d.closure_diameter();

    let tuples = analysis::sample_degiorgi_tuples(d, u, 16, seed);
    let degiorgi = analysis::check_degiorgi(d, u, f, p, &tuples, c_budget)?;
    let c_measured = degiorgi.max_ratio.max(1.0);

    let minimizer_set = verify_minimizer_set(problem, 4, seed)?;

    let big_r = half_integer_radius(diam / 4.0, h);
    let centers = crate::sampling::choose(d.boundary(), 8, seed);
    let boundedness = centers
        .par_iter()
        .map(|&x| analysis::boundedness_iteration(d, u, f, x, big_r, &params, 0.0, 24, c_measured))
        .collect::<Result<Vec<_>>>()?;

    let radii = analysis::dyadic_grid(big_r, h);
    let oscillation = d
        .boundary()
        .par_iter()
        .map(|&x| analysis::oscillation_decay(d, u, f, x, &radii, &params))
        .filter(|r| !matches!(r, Err(Error::BelowResolution(_))))
        .collect::<Result<Vec<_>>>()?;

    let subminimizer = match positive_patch(d, f, &radii) {
        Some((x, r)) => Some(analysis::subminimizer_check(d, u, x, r, f, p, 200, seed)?),
        None => {
            log::info!("no boundary node with f > 0; subminimizer probe skipped");
            None
        }
    };
    let natural_boundary = analysis::natural_boundary_check(d, u, f, 1e-10, None)?;
    Ok(Verification {
        params,
        s_fit,
        degiorgi,
        minimizer_set,
        boundedness,
        oscillation,
        subminimizer,
        natural_boundary,
    })
}

/// The boundary node with the largest f > 0 and the largest grid radius on
/// whose ball f ≥ 0.
fn positive_patch(d: &Domain, f: &BoundaryField, radii: &[f64]) -> Option<(NodeIdx, f64)> {
    let (pos, &top) = f.values().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))?;
    if !(top > 0.0) {
        return None;
    }
    let x = d.boundary()[pos];
    let dist = d.graph().distances_from(x);
    let ok = |r: f64| d.boundary().iter().zip(f.values()).all(|(&z, &v)| dist[z] >= r || v >= 0.0);
    let r = radii.iter().copied().filter(|&r| ok(r)).fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))));
    Some((x, r.unwrap_or(1.5 * d.graph().max_edge_len())))
}

#[derive(Serialize)]
struct Diagnostics {
    domain: String,
    p: f64,
    space: SpaceDiagnostics,
    capacity_samples: Vec<CapacityBounds>,
}

fn diagnostics(cfg: &RunConfig, d: &Domain) -> Result<Diagnostics> {
    let opts = DiagnoseOptions { p: cfg.p, seed: cfg.seed, ..DiagnoseOptions::default() };
    let space = space::diagnose(d, &opts)?;
    let r = 1.5 * d.graph().max_edge_len();
    let capacity_samples = crate::sampling::choose(d.closure(), 4, cfg.seed)
        .into_iter()
        .map(|x| space::capacity_ball_bounds(d, x, r, cfg.p))
        .collect::<Result<Vec<_>>>()?;
    Ok(Diagnostics { domain: cfg.domain.clone(), p: cfg.p, space, capacity_samples })
}

fn write_verification(w: &mut Writer, d: &Domain, v: &Verification) -> Result<()> {
    let rows = v
        .degiorgi
        .rows
        .iter()
        .map(|r| {
            vec![
                Cell::from(r.x.as_str()),
                r.r.into(),
                r.big_r.into(),
                r.k.into(),
                r.level.into(),
                r.lhs.into(),
                r.rhs_volume.into(),
                r.rhs_boundary.into(),
                r.ratio.into(),
            ]
        })
        .collect();
    w.table(
        "degiorgi",
        &["x", "r", "R", "k", "level", "lhs", "rhs_volume", "rhs_boundary", "ratio"],
        rows,
        &v.degiorgi,
    )?;
    w.json("minimizer_set.json", &v.minimizer_set)?;
    w.json("boundedness.json", &v.boundedness)?;
    let mut rows = Vec::new();
    for o in &v.oscillation {
        if o.rows.is_empty() {
            rows.push(vec![
                Cell::from(o.x.as_str()),
                o.status.as_str().into(),
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
            ]);
        }
        for r in &o.rows {
            rows.push(vec![
                Cell::from(o.x.as_str()),
                o.status.as_str().into(),
                r.radius.into(),
                r.sup.into(),
                r.m.into(),
                r.osc.into(),
                r.contraction.into(),
                r.nu_trigger.into(),
            ]);
        }
    }
    w.table(
        "oscillation",
        &["x", "status", "radius", "M", "m", "osc", "contraction", "nu_trigger"],
        rows,
        &v.oscillation,
    )?;
    w.json("subminimizer.json", &v.subminimizer)?;
    w.json("natural_boundary.json", &v.natural_boundary)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        nodes: usize,
        passed: bool,
        s_fit: f64,
        params: &'a DeGiorgiParams,
        degiorgi_max_ratio: f64,
        minimizer_set: bool,
        boundedness: bool,
        oscillation_applicable: usize,
        oscillation_inapplicable: usize,
        subminimizer: Option<bool>,
        natural_boundary: bool,
    }
    let count = |s: &str| v.oscillation.iter().filter(|o| o.status == s).count();
    w.json(
        "verify_summary.json",
        &Summary {
            nodes: d.node_count(),
            passed: v.passed(),
            s_fit: v.s_fit,
            params: &v.params,
            degiorgi_max_ratio: v.degiorgi.max_ratio,
            minimizer_set: v.minimizer_set.passed,
            boundedness: v.boundedness.iter().all(|b| b.passed),
            oscillation_applicable: count("applicable"),
            oscillation_inapplicable: count("inapplicable"),
            subminimizer: v.subminimizer.as_ref().map(|s| s.passed),
            natural_boundary: v.natural_boundary.passed,
        },
    )
}

fn solve_and_write<'a>(cfg: &'a RunConfig, d: &'a Domain, w: &mut Writer) -> Result<(NeumannProblem<'a>, Solution)> {
    let f = load_data(d, &cfg.data, cfg.seed)?;
    let problem = assemble(d, cfg.p, f, solver_options(cfg))?;
    match problem.solve() {
        Ok(sol) => {
            w.json("solution.json", &solution_file(cfg, &problem, &sol))?;
            Ok((problem, sol))
        }
        Err(Error::NotConverged { iterations, residual, last }) => {
            w.json("solution.json", &solution_file(cfg, &problem, &last))?;
            Err(Error::NotConverged { iterations, residual, last })
        }
        Err(e) => Err(e),
    }
}

pub fn run(cfg: &RunConfig, command: Command) -> Result<RunOutcome> {
    if !(cfg.p > 1.0) {
        return Err(Error::arg(format!("p must exceed 1, got {}", cfg.p)));
    }
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::arg(e.to_string()))?
            .install(|| run_inner(cfg, command)),
        None => run_inner(cfg, command),
    }
}

fn run_inner(cfg: &RunConfig, command: Command) -> Result<RunOutcome> {
    fs::create_dir_all(&cfg.out)?;
    let mut formats = cfg.format.clone();
    formats.sort();
    formats.dedup();
    let mut w = Writer { dir: &cfg.out, formats: &formats, files: Vec::new() };
    let d = load_domain(&cfg.domain)?;
    let mut passed = true;
    if matches!(command, Command::Generate | Command::Full) {
        w.json("domain.json", &d.to_file())?;
    }
    if matches!(command, Command::Solve | Command::Verify | Command::Full) {
        let (problem, sol) = solve_and_write(cfg, &d, &mut w)?;
        if command != Command::Solve {
            let v = verify(&problem, &sol, cfg.seed, cfg.c_budget)?;
            write_verification(&mut w, &d, &v)?;
            passed &= v.passed();
            if !v.passed() {
                log::warn!("theory breach: see verify_summary.json");
            }
        }
    }
    if matches!(command, Command::Diagnose | Command::Full) {
        w.json("diagnostics.json", &diagnostics(cfg, &d)?)?;
    }
    Ok(RunOutcome { passed, files: w.files })
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli.config, cli.command) {
        Ok(outcome) => {
            for f in &outcome.files {
                log::info!("wrote {}", f.display());
            }
            if !outcome.passed {
                eprintln!("theory breach witnessed; see the reports in {}", cli.config.out.display());
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(domain: &str, data: &str, out: &Path) -> RunConfig {
        let cli = Cli::try_parse_from([
            "neumann-plap",
            "solve",
            "--domain",
            domain,
            "--data",
            data,
            "--out",
            out.to_str().unwrap(),
        ])
        .unwrap();
        cli.config
    }

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from([
            "neumann-plap",
            "full",
            "--p",
            "3",
            "--format",
            "csv",
            "--threads",
            "2",
            "--c-budget",
            "50",
            "--project-compat",
        ])
        .unwrap();
        assert_eq!(cli.command, Command::Full);
        assert_eq!(cli.config.p, 3.0);
        assert_eq!(cli.config.format, vec![Format::Csv]);
        assert_eq!(cli.config.threads, Some(2));
        assert!(cli.config.project_compat);
        assert_eq!(cli.config.c_budget, 50.0);
    }

    #[test]
    fn solve_model_problem() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg("path:3", "dipole", dir.path());
        let out = run(&c, Command::Solve).unwrap();
        assert!(out.passed);
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("solution.json")).unwrap()).unwrap();
        assert!((v["u"]["a"].as_f64().unwrap() - 1.0).abs() < 1e-8);
        assert!((v["u"]["c"].as_f64().unwrap() + 1.0).abs() < 1e-8);
        assert!((v["energy"]["total"].as_f64().unwrap() + 1.0).abs() < 1e-8);
    }

    #[test]
    fn incompatible_data_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg("path:3", r#"{"a":1,"c":1}"#, dir.path());
        let err = run(&c, Command::Solve).unwrap_err();
        assert_eq!(err.to_string(), "compatibility defect 2");
        assert_eq!(
            main_with_args([
                "neumann-plap",
                "solve",
                "--domain",
                "path:3",
                "--data",
                "{\"a\":1,\"c\":1}",
                "--out",
                dir.path().to_str().unwrap()
            ]),
            1
        );
    }
}
