//! Config-driven runner: parsing, the four subcommands and CSV output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use evalexpr::{build_operator_tree, ContextWithMutableVariables, HashMapContext, Node, Value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{
    kernel_by_legendre, kernel_by_recurrence, kernel_gf_oracle, Kernel, KernelParams,
    ORACLE_POINTS, ORACLE_RADIUS,
};
use crate::problem::{sample, Fn1, Fn2, Mesh, ProblemSpec, TailConstants, DEFAULT_TAIL_TOL};
use crate::stepper::{
    boundary_kernel, march, march_sampled, BoundaryMode, SchemeConfig, Trajectory,
    DEFAULT_DOUBLING_TOL,
};
use crate::validation::{
    certify_dissipativity, diagnose_energy, error_report, example1_problem, example2_problem,
    ExactSolution, DISSIPATIVITY_TOL,
};

/// Largest `m` for which `kernel --compare` evaluates the contour oracle.
pub const ORACLE_M_MAX: usize = 50;
/// Relative tolerance of the energy equalities in `diagnose`.
pub const ENERGY_TOL: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(name = "dtbc", version, about = "Parabolic solver with discrete transparent boundary conditions")]
pub struct Cli {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for CSV files.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Omit the timestamp header line so repeated runs are byte-identical.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Seed for random test data.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Override a config key, e.g. `--set theta=1/6`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// March one configuration and write solution, report and diagnostics.
    Solve,
    /// Error table over `table_theta` x `table_m`.
    Table,
    /// Dump the boundary kernel.
    Kernel {
        /// Add Legendre and contour-oracle columns.
        #[arg(long)]
        compare: bool,
    },
    /// Energy and dissipativity checks with zero boundary data.
    Diagnose,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemKind {
    Example1,
    Example2,
    Custom(CustomProblem),
}

/// Expression sources of a custom problem (`x` and `t` are the variables).
#[derive(Debug, Clone, PartialEq)]
pub struct CustomProblem {
    pub rho: String,
    pub b: String,
    pub c: String,
    pub f: String,
    pub g: String,
    pub u0: String,
    pub exact: Option<String>,
    pub tail: Option<TailConstants>,
    pub rho_lower: Option<f64>,
    pub b_lower: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub sigma: f64,
    pub theta: f64,
    pub x_end: f64,
    pub h: Option<f64>,
    pub nodes: Option<Vec<f64>>,
    pub x0: Option<f64>,
    pub tau: f64,
    pub m_count: usize,
    pub boundary: BoundaryMode,
    pub doubling_tol: f64,
    pub tail_tol: f64,
    pub emit_snapshots: bool,
    pub snapshot_every: usize,
    pub emit_kernel: bool,
    pub run_diagnostics: bool,
    pub m_max: usize,
    pub table_m: Vec<usize>,
    pub table_theta: Vec<f64>,
    pub trials: usize,
}

const KEYS: &[&str] = &[
    "problem", "sigma", "theta", "X", "h", "nodes", "X0", "tau", "M", "T", "boundary_mode",
    "extension_factor", "doubling_tol", "tail_tol", "emit_snapshots", "snapshot_every",
    "emit_kernel", "run_diagnostics", "m_max", "table_m", "table_theta", "trials", "rho", "b",
    "c", "f", "g", "u0", "exact", "tail_rho", "tail_b", "tail_c", "rho_lower", "b_lower",
];

/// Parses a number, accepting fractions such as `1/12`.
pub fn parse_number(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::Config(format!("not a number: {s:?}"));
    let v = match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| bad())?;
            let d: f64 = d.trim().parse().map_err(|_| bad())?;
            n / d
        }
        None => s.parse().map_err(|_| bad())?,
    };
    if !v.is_finite() {
        return Err(bad());
    }
    Ok(v)
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Config(format!("not a count: {s:?}")))
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::Config(format!("not a boolean: {other:?}"))),
    }
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(item).collect()
}

/// Splits config text into key/value pairs.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        let k = k.trim().to_string();
        if map.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {k}", n + 1)));
        }
    }
    Ok(map)
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_pairs(&parse_pairs(text)?)
    }

    /// Reads the optional config file and applies `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut pairs = match path {
            Some(p) => parse_pairs(&fs::read_to_string(p).map_err(|e| {
                Error::Config(format!("cannot read {}: {e}", p.display()))
            })?)?,
            None => BTreeMap::new(),
        };
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            pairs.insert(k.trim().to_string(), v.trim().to_string());
        }
        Self::from_pairs(&pairs)
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = pairs.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key {k:?}")));
        }
        let get = |k: &str| pairs.get(k).map(String::as_str);
        let num = |k: &str| get(k).map(parse_number).transpose();
        let count = |k: &str| get(k).map(parse_usize).transpose();
        let flag = |k: &str, d: bool| get(k).map(parse_bool).transpose().map(|v| v.unwrap_or(d));

        let kind = get("problem").unwrap_or("example1");
        let (problem, dx, dh, dtau, dt) = match kind {
            "example1" => (ProblemKind::Example1, 2.5, 0.05, 1.0 / 1500.0, 1.0),
            "example2" => (ProblemKind::Example2, 1.0, 0.1, 0.01, 1.0),
            "custom" => {
                let expr = |k: &str, d: &str| get(k).unwrap_or(d).to_string();
                let tail = match (num("tail_rho")?, num("tail_b")?, num("tail_c")?) {
                    (None, None, None) => None,
                    (Some(rho), Some(b), c) => Some(TailConstants { rho, b, c: c.unwrap_or(0.0) }),
                    _ => return Err(Error::Config("tail_rho and tail_b go together".into())),
                };
                let custom = CustomProblem {
                    rho: expr("rho", "1"),
                    b: expr("b", "1"),
                    c: expr("c", "0"),
                    f: expr("f", "0"),
                    g: expr("g", "0"),
                    u0: expr("u0", "0"),
                    exact: get("exact").map(str::to_string),
                    tail,
                    rho_lower: num("rho_lower")?,
                    b_lower: num("b_lower")?,
                };
                (ProblemKind::Custom(custom), 1.0, 0.1, 0.01, 1.0)
            }
            other => return Err(Error::Config(format!("unknown problem {other:?}"))),
        };
        if !matches!(problem, ProblemKind::Custom(_)) {
            for k in ["rho", "b", "c", "f", "g", "u0", "exact", "tail_rho", "tail_b", "tail_c"] {
                if pairs.contains_key(k) {
                    return Err(Error::Config(format!("key {k} needs problem = custom")));
                }
            }
        }

        let nodes = get("nodes").map(|s| parse_list(s, parse_number)).transpose()?;
        let x_end = match (&nodes, num("X")?) {
            (Some(n), _) => *n.last().ok_or_else(|| Error::Config("empty node list".into()))?,
            (None, Some(x)) => x,
            (None, None) => dx,
        };
        let h = match (&nodes, num("h")?) {
            (Some(_), Some(_)) => return Err(Error::Config("give either h or nodes".into())),
            (Some(_), None) => None,
            (None, h) => Some(h.unwrap_or(dh)),
        };
        let (tau, m_count) = match (num("tau")?, count("M")?, num("T")?) {
            (Some(_), Some(_), Some(_)) => {
                return Err(Error::Config("give at most two of tau, M, T".into()))
            }
            (Some(tau), Some(m), None) => (tau, m),
            (Some(tau), None, t) => (tau, steps_for(t.unwrap_or(dt), tau)?),
            (None, Some(m), t) => (t.unwrap_or(dt) / m as f64, m),
            (None, None, Some(t)) => (dtau, steps_for(t, dtau)?),
            (None, None, None) => (dtau, steps_for(dt, dtau)?),
        };
        let boundary = match get("boundary_mode").unwrap_or("dtbc") {
            "dtbc" => BoundaryMode::Dtbc,
            "neumann" => BoundaryMode::Neumann,
            "reference" => BoundaryMode::Reference {
                extension_factor: num("extension_factor")?.unwrap_or(5.0),
            },
            other => return Err(Error::Config(format!("unknown boundary_mode {other:?}"))),
        };

        let config = RunConfig {
            problem,
            sigma: num("sigma")?.unwrap_or(0.5),
            theta: num("theta")?.unwrap_or(1.0 / 12.0),
            x_end,
            h,
            nodes,
            x0: num("X0")?,
            tau,
            m_count,
            boundary,
            doubling_tol: num("doubling_tol")?.unwrap_or(DEFAULT_DOUBLING_TOL),
            tail_tol: num("tail_tol")?.unwrap_or(DEFAULT_TAIL_TOL),
            emit_snapshots: flag("emit_snapshots", true)?,
            snapshot_every: count("snapshot_every")?.unwrap_or(1),
            emit_kernel: flag("emit_kernel", false)?,
            run_diagnostics: flag("run_diagnostics", false)?,
            m_max: count("m_max")?.unwrap_or(m_count),
            table_m: get("table_m")
                .map(|s| parse_list(s, parse_usize))
                .transpose()?
                .unwrap_or_else(|| vec![m_count]),
            table_theta: get("table_theta")
                .map(|s| parse_list(s, parse_number))
                .transpose()?
                .unwrap_or_else(|| vec![num("theta").ok().flatten().unwrap_or(1.0 / 12.0)]),
            trials: count("trials")?.unwrap_or(1000),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        self.scheme()?;
        if self.snapshot_every == 0 {
            return Err(Error::Config("snapshot_every must be at least 1".into()));
        }
        if self.m_count == 0 || self.table_m.contains(&0) {
            return Err(Error::Config("M must be at least 1".into()));
        }
        for &theta in &self.table_theta {
            SchemeConfig::new(self.sigma, theta, self.boundary)?;
        }
        if !(self.doubling_tol > 0.0) || !(self.tail_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        self.mesh()?;
        let problem = self.problem_spec()?;
        sample(&problem, &self.mesh()?.with_time(self.tau, 1)?)?;
        Ok(())
    }

    pub fn scheme(&self) -> Result<SchemeConfig> {
        Ok(SchemeConfig::new(self.sigma, self.theta, self.boundary)?
            .with_doubling_tol(self.doubling_tol))
    }

    /// Mesh with the configured time step.
    pub fn mesh(&self) -> Result<Mesh> {
        self.mesh_with_steps(self.m_count, self.tau)
    }

    fn mesh_with_steps(&self, m_count: usize, tau: f64) -> Result<Mesh> {
        match (&self.nodes, self.h) {
            (Some(nodes), _) => Mesh::from_nodes(nodes.clone(), tau, m_count),
            (None, Some(h)) => {
                let j = (self.x_end / h).round();
                if j < 1.0 || ((j * h - self.x_end).abs() > 1e-9 * self.x_end) {
                    return Err(Error::Config(format!(
                        "h = {h} does not divide X = {}",
                        self.x_end
                    )));
                }
                Mesh::uniform(self.x_end, j as usize, tau, m_count)
            }
            (None, None) => unreachable!("either h or nodes is set"),
        }
    }

    fn tail_step(&self) -> f64 {
        match &self.nodes {
            Some(n) => n[n.len() - 1] - n[n.len() - 2],
            None => self.h.unwrap(),
        }
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        let h_tail = self.tail_step();
        let mut p = match &self.problem {
            ProblemKind::Example1 => example1_problem(h_tail),
            ProblemKind::Example2 => example2_problem(h_tail),
            ProblemKind::Custom(c) => custom_problem(c, self.x_end, h_tail)?,
        };
        p = p.with_truncation(self.x_end);
        p.x0 = self.x0.unwrap_or(self.x_end - h_tail);
        Ok(p.with_tail_tol(self.tail_tol))
    }

    pub fn exact(&self) -> Result<Option<ExactSolution>> {
        Ok(match &self.problem {
            ProblemKind::Example1 => Some(ExactSolution::example1()),
            ProblemKind::Example2 => Some(ExactSolution::example2()),
            ProblemKind::Custom(c) => match &c.exact {
                Some(e) => Some(ExactSolution { label: "custom".into(), evaluator: expr_fn2(e)? }),
                None => None,
            },
        })
    }
}

fn steps_for(t_final: f64, tau: f64) -> Result<usize> {
    let m = (t_final / tau).round();
    if m < 1.0 || (m * tau - t_final).abs() > 1e-9 * t_final {
        return Err(Error::Config(format!("tau = {tau} does not divide T = {t_final}")));
    }
    Ok(m as usize)
}

fn compile(expr: &str) -> Result<Arc<Node>> {
    build_operator_tree(expr)
        .map(Arc::new)
        .map_err(|e| Error::Config(format!("cannot parse {expr:?}: {e}")))
}

fn eval_node(node: &Node, vars: &[(&str, f64)]) -> std::result::Result<f64, String> {
    let mut ctx = HashMapContext::new();
    ctx.set_value("pi".into(), Value::Float(std::f64::consts::PI)).unwrap();
    for (k, v) in vars {
        ctx.set_value((*k).into(), Value::Float(*v)).map_err(|e| e.to_string())?;
    }
    node.eval_number_with_context(&ctx).map_err(|e| e.to_string())
}

fn expr_fn1(expr: &str, var: &'static str) -> Result<Fn1> {
    let node = compile(expr)?;
    eval_node(&node, &[(var, 0.5)]).map_err(|e| Error::Config(format!("{expr:?}: {e}")))?;
    Ok(Arc::new(move |v| eval_node(&node, &[(var, v)]).unwrap_or(f64::NAN)))
}

fn expr_fn2(expr: &str) -> Result<Fn2> {
    let node = compile(expr)?;
    eval_node(&node, &[("x", 0.5), ("t", 0.5)])
        .map_err(|e| Error::Config(format!("{expr:?}: {e}")))?;
    Ok(Arc::new(move |x, t| eval_node(&node, &[("x", x), ("t", t)]).unwrap_or(f64::NAN)))
}

fn custom_problem(c: &CustomProblem, x_end: f64, h_tail: f64) -> Result<ProblemSpec> {
    let (rho, b, cc) = (expr_fn1(&c.rho, "x")?, expr_fn1(&c.b, "x")?, expr_fn1(&c.c, "x")?);
    let tail = c.tail.unwrap_or(TailConstants { rho: rho(x_end), b: b(x_end), c: cc(x_end) });
    // Default lower bounds from a dense scan of the coefficients.
    let scan = |f: &Fn1| (0..=1000).map(|i| f(x_end * i as f64 / 1000.0)).fold(f64::INFINITY, f64::min);
    let rho_lower = c.rho_lower.unwrap_or_else(|| scan(&rho));
    let b_lower = c.b_lower.unwrap_or_else(|| scan(&b));
    Ok(ProblemSpec::heat(x_end, x_end - h_tail)
        .with_label("custom")
        .with_coefficients(rho, b, cc, tail, rho_lower, b_lower)
        .with_forcing(expr_fn2(&c.f)?)
        .with_boundary(expr_fn1(&c.g, "t")?)
        .with_initial(expr_fn1(&c.u0, "x")?))
}

/// Formats a value with 17 significant digits.
pub fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

fn header(out: &mut String, command: &str, deterministic: bool, runtime: Option<f64>) {
    if deterministic {
        return;
    }
    let stamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    match runtime {
        Some(r) => writeln!(out, "# dtbc {command} {stamp} runtime_s={r:.3}").unwrap(),
        None => writeln!(out, "# dtbc {command} {stamp}").unwrap(),
    }
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, text)?;
    Ok(path)
}

fn mode_name(mode: BoundaryMode) -> String {
    match mode {
        BoundaryMode::Dtbc => "dtbc".into(),
        BoundaryMode::Neumann => "neumann".into(),
        BoundaryMode::Reference { extension_factor } => format!("reference({extension_factor})"),
    }
}

fn problem_name(kind: &ProblemKind) -> &'static str {
    match kind {
        ProblemKind::Example1 => "example1",
        ProblemKind::Example2 => "example2",
        ProblemKind::Custom(_) => "custom",
    }
}

/// Shared options of all subcommands.
#[derive(Debug, Clone)]
pub struct Output {
    pub dir: PathBuf,
    pub deterministic: bool,
    pub seed: u64,
}

/// `solve`: writes `solution.csv`, `report.csv` and, if requested,
/// `kernel.csv` and `diagnostics.csv`. Returns the max-abs error when an
/// exact solution is known.
pub fn cmd_solve(config: &RunConfig, out: &Output) -> Result<Option<f64>> {
    let start = Instant::now();
    let problem = config.problem_spec()?;
    let mesh = config.mesh()?;
    let scheme = config.scheme()?;
    let trajectory = march(&problem, &mesh, &scheme)?;
    let exact = config.exact()?;
    let report = exact.as_ref().map(|e| error_report(&trajectory, e));
    let runtime = start.elapsed().as_secs_f64();
    log::info!("solve finished in {runtime:.3} s");

    let mut sol = String::new();
    header(&mut sol, "solve", out.deterministic, None);
    sol.push_str("m,t,j,x,U,exact,error\n");
    let m_final = mesh.steps();
    for (m, u) in trajectory.levels.iter().enumerate() {
        let keep = if config.emit_snapshots {
            m % config.snapshot_every == 0 || m == m_final
        } else {
            m == m_final
        };
        if !keep {
            continue;
        }
        let t = mesh.t(m);
        for (j, &v) in u.iter().enumerate() {
            let x = mesh.x(j);
            let (ex, err) = match &exact {
                Some(e) => {
                    let w = e.eval(x, t);
                    (sci(w), sci((v - w).abs()))
                }
                None => (String::new(), String::new()),
            };
            writeln!(sol, "{m},{},{j},{},{},{ex},{err}", sci(t), sci(x), sci(v)).unwrap();
        }
    }
    write_file(&out.dir, "solution.csv", &sol)?;

    let mut rep = String::new();
    header(&mut rep, "solve", out.deterministic, Some(runtime));
    rep.push_str("key,value\n");
    let rows: Vec<(&str, String)> = vec![
        ("problem", problem_name(&config.problem).into()),
        ("sigma", sci(config.sigma)),
        ("theta", sci(config.theta)),
        ("boundary_mode", mode_name(config.boundary)),
        ("J", mesh.last().to_string()),
        ("M", m_final.to_string()),
        ("tau", sci(mesh.tau())),
        ("X", sci(mesh.x_end())),
    ];
    for (k, v) in rows {
        writeln!(rep, "{k},{v}").unwrap();
    }
    if let Some(r) = &report {
        let (j, m) = r.argmax;
        writeln!(rep, "max_abs_error,{}", sci(r.max_abs_error)).unwrap();
        writeln!(rep, "argmax_j,{j}\nargmax_m,{m}").unwrap();
        writeln!(rep, "argmax_x,{}\nargmax_t,{}", sci(mesh.x(j)), sci(mesh.t(m))).unwrap();
    }
    write_file(&out.dir, "report.csv", &rep)?;

    if config.emit_kernel {
        write_kernel(config, out, false)?;
    }
    if config.run_diagnostics {
        cmd_diagnose(config, out)?;
    }
    Ok(report.map(|r| r.max_abs_error))
}

/// Max-abs error of one (theta, M) cell, with `tau = T / M`.
pub fn table_cell(config: &RunConfig, theta: f64, m_count: usize) -> Result<f64> {
    let exact = config
        .exact()?
        .ok_or_else(|| Error::Config("table needs an exact solution".into()))?;
    let t_final = config.tau * config.m_count as f64;
    let mesh = config.mesh_with_steps(m_count, t_final / m_count as f64)?;
    let scheme = SchemeConfig::new(config.sigma, theta, config.boundary)?
        .with_doubling_tol(config.doubling_tol);
    let trajectory = march(&config.problem_spec()?, &mesh, &scheme)?;
    Ok(error_report(&trajectory, &exact).max_abs_error)
}

/// Error matrix with one row per theta and one column per M, computed in
/// parallel.
pub fn table_errors(config: &RunConfig, thetas: &[f64], ms: &[usize]) -> Result<Vec<Vec<f64>>> {
    let cells: Vec<(usize, usize)> =
        (0..thetas.len()).flat_map(|a| (0..ms.len()).map(move |b| (a, b))).collect();
    let values: Vec<Result<f64>> =
        cells.par_iter().map(|&(a, b)| table_cell(config, thetas[a], ms[b])).collect();
    let mut table = vec![vec![0.0; ms.len()]; thetas.len()];
    for (&(a, b), v) in cells.iter().zip(values) {
        table[a][b] = v?;
    }
    Ok(table)
}

pub fn cmd_table(config: &RunConfig, out: &Output) -> Result<Vec<Vec<f64>>> {
    let table = table_errors(config, &config.table_theta, &config.table_m)?;
    let mut text = String::new();
    header(&mut text, "table", out.deterministic, None);
    text.push_str("theta");
    for m in &config.table_m {
        write!(text, ",M={m}").unwrap();
    }
    text.push('\n');
    for (theta, row) in config.table_theta.iter().zip(&table) {
        text.push_str(&sci(*theta));
        for v in row {
            write!(text, ",{}", sci(*v)).unwrap();
        }
        text.push('\n');
    }
    write_file(&out.dir, "table.csv", &text)?;
    print!("{text}");
    Ok(table)
}

fn kernel_for(config: &RunConfig) -> Result<(KernelParams, Kernel)> {
    let problem = config.problem_spec()?;
    let mesh = config.mesh()?;
    let params = KernelParams::derive(problem.tail, mesh.tail_step(), mesh.tau(), config.sigma, config.theta)?;
    let kernel = kernel_by_recurrence(&params, config.m_max);
    Ok((params, kernel))
}

/// Largest deviations found by `kernel --compare`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelComparison {
    pub max_abs_legendre: f64,
    pub max_rel_legendre: f64,
    pub max_abs_oracle: f64,
}

fn write_kernel(config: &RunConfig, out: &Output, compare: bool) -> Result<Option<KernelComparison>> {
    let (params, kernel) = kernel_for(config)?;
    let r = kernel.coeffs();
    let extra = if compare {
        let leg = kernel_by_legendre(&params, config.m_max);
        let m_oracle = config.m_max.min(ORACLE_M_MAX);
        let oracle = kernel_gf_oracle(&params, m_oracle, ORACLE_RADIUS, ORACLE_POINTS)?;
        Some((leg, oracle))
    } else {
        None
    };
    let mut text = String::new();
    header(&mut text, "kernel", out.deterministic, None);
    text.push_str("m,R_m,lg_abs_R_m");
    if extra.is_some() {
        text.push_str(",legendre,diff_legendre,oracle,diff_oracle");
    }
    text.push('\n');
    let mut cmp = KernelComparison { max_abs_legendre: 0.0, max_rel_legendre: 0.0, max_abs_oracle: 0.0 };
    for (m, &v) in r.iter().enumerate() {
        write!(text, "{m},{},{}", sci(v), sci(v.abs().log10())).unwrap();
        if let Some((leg, oracle)) = &extra {
            let l = leg.coeffs()[m];
            let d = (v - l).abs();
            cmp.max_abs_legendre = cmp.max_abs_legendre.max(d);
            let scale = v.abs().max(l.abs());
            if scale > 0.0 {
                cmp.max_rel_legendre = cmp.max_rel_legendre.max(d / scale);
            }
            write!(text, ",{},{}", sci(l), sci(d)).unwrap();
            match oracle.get(m) {
                Some(&o) => {
                    cmp.max_abs_oracle = cmp.max_abs_oracle.max((v - o).abs());
                    write!(text, ",{},{}", sci(o), sci((v - o).abs())).unwrap();
                }
                None => text.push_str(",,"),
            }
        }
        text.push('\n');
    }
    write_file(&out.dir, "kernel.csv", &text)?;
    Ok(extra.map(|_| cmp))
}

pub fn cmd_kernel(config: &RunConfig, out: &Output, compare: bool) -> Result<Option<KernelComparison>> {
    let cmp = write_kernel(config, out, compare)?;
    if let Some(c) = &cmp {
        println!("max |recurrence - legendre| = {:e}", c.max_abs_legendre);
        println!("max relative recurrence/legendre deviation = {:e}", c.max_rel_legendre);
        println!(
            "max |recurrence - oracle| (m <= {}) = {:e}",
            config.m_max.min(ORACLE_M_MAX),
            c.max_abs_oracle
        );
    }
    Ok(cmp)
}

/// One row of `diagnostics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, pass: value <= threshold }
    }

    fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, pass: value >= threshold }
    }
}

fn energy_checks(
    label: &str,
    mesh: &Mesh,
    coeffs: &crate::problem::SampledCoefficients,
    scheme: &SchemeConfig,
) -> Result<Vec<Check>> {
    let trajectory: Trajectory = march_sampled(mesh, coeffs, scheme)?;
    let kernel = match scheme.boundary {
        BoundaryMode::Dtbc => Some(boundary_kernel(mesh, coeffs, scheme)?),
        _ => None,
    };
    let r = diagnose_energy(&trajectory, coeffs, scheme, kernel.as_ref())?;
    let mut checks = vec![
        Check::at_most(format!("{label}_first_energy_equality"), r.first_equality, ENERGY_TOL),
        Check::at_most(format!("{label}_second_energy_equality"), r.second_equality, ENERGY_TOL),
    ];
    if let Some(s) = r.bound_sb_slack {
        checks.push(Check::at_least(format!("{label}_first_bound_slack"), s, 0.0));
    }
    if let Some(s) = r.bound_sba_slack {
        checks.push(Check::at_least(format!("{label}_second_bound_slack"), s, 0.0));
    }
    Ok(checks)
}

/// Runs the diagnostics behind `diagnose`. The configured problem is
/// marched with `g = 0` and initial data vanishing at both ends; a second
/// run uses seeded random initial data.
pub fn diagnostics(config: &RunConfig, seed: u64) -> Result<Vec<Check>> {
    let mesh = config.mesh()?;
    let mut scheme = config.scheme()?;
    if let BoundaryMode::Reference { .. } = scheme.boundary {
        scheme.boundary = BoundaryMode::Dtbc;
    }
    let problem = config.problem_spec()?.with_boundary(Arc::new(|_| 0.0));
    let mut coeffs = sample(&problem, &mesh)?;
    let jn = mesh.last();
    coeffs.initial[0] = 0.0;
    coeffs.initial[jn] = 0.0;
    let mut checks = energy_checks("problem", &mesh, &coeffs, &scheme)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for j in 1..jn {
        coeffs.initial[j] = rng.gen_range(-1.0..=1.0);
    }
    checks.extend(energy_checks("random", &mesh, &coeffs, &scheme)?);

    if scheme.boundary == BoundaryMode::Dtbc {
        let kernel = boundary_kernel(&mesh, &coeffs, &scheme)?;
        let d = certify_dissipativity(&kernel, config.trials, mesh.steps(), seed)?;
        checks.push(Check::at_most("dissipativity_first", d.worst_cs, DISSIPATIVITY_TOL));
        checks.push(Check::at_most("dissipativity_second", d.worst_csa, DISSIPATIVITY_TOL));
    }
    Ok(checks)
}

/// `diagnose`: writes `diagnostics.csv` and returns whether every check passed.
pub fn cmd_diagnose(config: &RunConfig, out: &Output) -> Result<bool> {
    let checks = diagnostics(config, out.seed)?;
    let mut text = String::new();
    header(&mut text, "diagnose", out.deterministic, None);
    text.push_str("check,value,threshold,pass\n");
    for c in &checks {
        writeln!(text, "{},{},{},{}", c.name, sci(c.value), sci(c.threshold), c.pass).unwrap();
    }
    write_file(&out.dir, "diagnostics.csv", &text)?;
    for c in checks.iter().filter(|c| !c.pass) {
        log::warn!("check {} failed: {:e} vs {:e}", c.name, c.value, c.threshold);
    }
    Ok(checks.iter().all(|c| c.pass))
}

/// Exit code for an error: 2 for numerical failures, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        2
    } else {
        1
    }
}

/// Executes a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let outcome = RunConfig::load(cli.config.as_deref(), &cli.overrides).and_then(|config| {
        let out = Output { dir: cli.out.clone(), deterministic: cli.deterministic, seed: cli.seed };
        match &cli.command {
            Command::Solve => cmd_solve(&config, &out).map(|e| {
                if let Some(e) = e {
                    println!("max abs error {e:e}");
                }
                true
            }),
            Command::Table => cmd_table(&config, &out).map(|_| true),
            Command::Kernel { compare } => cmd_kernel(&config, &out, *compare).map(|_| true),
            Command::Diagnose => cmd_diagnose(&config, &out),
        }
    });
    match outcome {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("error: diagnostic checks failed; see diagnostics.csv");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
