//! Command-line runner. Each subcommand loads one config, runs one stage and
//! writes its result files; the exit code classifies the outcome.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{self, ConfigError, Experiment, Format};
use crate::ifs::PotentialKind;
use crate::ldp::{all_checks, beta_sweep, default_battery, rate_function, Verdict};
use crate::output::{cell, num, nums, Writer};
use crate::thermo::{solve_thermo_method, ThermoState};
use crate::tropical::{
    brute_force_mane_column, mane_column, nonplace_density_symbolic, solve_tropical, TropicalError,
    TropicalState,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_CONTRADICTION: i32 = 4;

/// Exact-hit radius for the oracle: far below any grid spacing, far above
/// rounding in the word images.
const EXACT_EPS: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "ifs-ldp", version, about = "Gibbs states and zero-temperature large deviations for contractive IFS")]
pub struct Cli {
    /// experiment config (TOML)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// output directory; overrides `output.directory`
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// worker threads (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// override a scalar tolerance, e.g. `ldp=0.2`; repeatable
    #[arg(long = "tol-override", value_name = "KEY=VAL", global = true)]
    pub tol_override: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// parse and validate the config
    Validate,
    /// eigenpair, normalized weights, Gibbs measure and pressure at one β
    Thermo {
        #[arg(long)]
        beta: Option<f64>,
    },
    /// m(A), calibrated subaction, Mañé closure, Aubry set and density
    Tropical,
    /// β sweep and every zero-temperature check
    Ldp,
    /// exhaustive word enumeration against the grid results
    Oracle {
        #[arg(long, value_enum)]
        target: OracleTarget,
        /// word length; defaults to `symbolic.depth`, then 12
        #[arg(long)]
        depth: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleTarget {
    Mane,
    Density,
    Rate,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let code = match e {
            ConfigError::Validation(_) => EXIT_VALIDATION,
            _ => EXIT_PARSE,
        };
        Self::new(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::new(EXIT_SOLVER, format!("cannot write results: {e}"))
    }
}

fn tropical_failure(e: TropicalError) -> Failure {
    let code = match e {
        TropicalError::EmptyAubry { .. } => EXIT_CONTRADICTION,
        TropicalError::TooManyWords { .. } | TropicalError::NotConstantPerMap => EXIT_VALIDATION,
        _ => EXIT_SOLVER,
    };
    Failure::new(code, e.to_string())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let path = cli.config.as_ref().ok_or_else(|| Failure::new(EXIT_PARSE, "--config is required"))?;
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(Failure::new(EXIT_PARSE, "--threads must be at least 1"));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    let exp = config::load(path, &cli.tol_override)?;
    let dir = cli.out.clone().unwrap_or_else(|| exp.config.output.directory.clone());
    match &cli.command {
        Command::Validate => {
            validate(&exp);
            Ok(())
        }
        Command::Thermo { beta } => thermo(&exp, *beta, &mut writer(&dir, &exp)?),
        Command::Tropical => tropical(&exp, &mut writer(&dir, &exp)?),
        Command::Ldp => ldp(&exp, &mut writer(&dir, &exp)?),
        Command::Oracle { target, depth } => oracle(&exp, *target, *depth, &mut writer(&dir, &exp)?),
    }
}

fn writer(dir: &std::path::Path, exp: &Experiment) -> Result<Writer, Failure> {
    Ok(Writer::new(dir, &exp.sha256)?)
}

fn kind_name(exp: &Experiment) -> &'static str {
    match exp.potential.kind() {
        PotentialKind::ConstantPerMap { .. } => "constant",
        PotentialKind::AffinePerMap { .. } => "affine",
        PotentialKind::Tabulated { .. } => "tabulated",
    }
}

fn validate(exp: &Experiment) {
    println!("ok: {} maps, gamma = {}", exp.sys.n_maps(), exp.sys.gamma());
    println!("potential: {} (Lipschitz bound {})", kind_name(exp), exp.potential.lip_bound());
    println!("grid: {} nodes, spacing {}", exp.grid.len(), exp.grid.spacing());
    println!("betas: {:?}", exp.betas);
    println!("config_sha256={}", exp.sha256);
}

fn thermo(exp: &Experiment, beta: Option<f64>, w: &mut Writer) -> Result<(), Failure> {
    let beta = beta.or(exp.config.schedule.thermo_beta).unwrap_or(exp.betas[0]);
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Failure::new(EXIT_VALIDATION, format!("beta = {beta} must be positive")));
    }
    let st: ThermoState =
        solve_thermo_method(&exp.sys, &exp.potential, &exp.grid, beta, &exp.thermo, exp.eigen_method)
            .map_err(|e| Failure::new(EXIT_SOLVER, e.to_string()))?;
    let g = &exp.grid;
    let n = g.len();
    let lip_log_h = st.eigen.log_lipschitz(g);
    let lip_bound = beta * exp.potential.lip_bound() / (1.0 - exp.sys.gamma());
    if exp.wants(Format::Csv) {
        let rows: Vec<Vec<String>> = (0..n)
            .map(|i| {
                let lh = st.eigen.log_h[i];
                vec![i.to_string(), cell(g.point(i)), cell(lh.exp()), cell(lh)]
            })
            .collect();
        w.csv("thermo_eigen.csv", &["i", "x", "h", "log_h"], &rows)?;
        let mut rows = Vec::with_capacity(n * exp.sys.n_maps());
        for i in 0..n {
            for j in 0..exp.sys.n_maps() {
                rows.push(vec![
                    i.to_string(),
                    cell(g.point(i)),
                    j.to_string(),
                    cell(st.weights.q(j, i)),
                    cell(st.weights.log_q(j, i)),
                ]);
            }
        }
        w.csv("thermo_weights.csv", &["i", "x", "j", "q", "log_q"], &rows)?;
        let rows: Vec<Vec<String>> = (0..n)
            .map(|i| {
                vec![i.to_string(), cell(g.point(i)), cell(st.gibbs.mass[i]), cell(st.gibbs.log_mass[i])]
            })
            .collect();
        w.csv("thermo_gibbs.csv", &["i", "x", "mass", "log_mass"], &rows)?;
    }
    let id = st.identity;
    if exp.wants(Format::Json) {
        w.json(
            "thermo_summary.json",
            json!({
                "beta": num(beta),
                "method": st.eigen.method,
                "lambda": num(st.eigen.lambda()),
                "log_lambda": num(st.eigen.log_lambda),
                "pressure": num(id.pressure),
                "pressure_over_beta": num(id.pressure / beta),
                "energy": num(id.energy),
                "entropy": num(id.entropy),
                "identity_residual": num(id.residual),
                "log_space": st.eigen.log_space,
                "eigen_residual": num(st.eigen.residual),
                "eigen_iterations": st.eigen.iterations,
                "renormalization": num(st.weights.renormalization),
                "normalization_error": num(st.weights.normalization_error()),
                "gibbs_residual": num(st.gibbs.residual),
                "gibbs_iterations": st.gibbs.iterations,
                "holonomy_residual": num(st.lift.holonomy_residual),
                "log_h_lipschitz": num(lip_log_h),
                "log_h_lipschitz_bound": num(lip_bound),
                "grid_points": n,
            }),
        )?;
    }
    println!("beta = {beta}");
    println!("pressure = {}", id.pressure);
    println!("entropy = {}", id.entropy);
    println!("log_space = {}", st.eigen.log_space);
    println!("pressure identity residual = {:e}", id.residual);
    Ok(())
}

fn solve_zero(exp: &Experiment) -> Result<TropicalState, Failure> {
    solve_tropical(&exp.sys, &exp.potential, &exp.grid, &exp.tropical).map_err(tropical_failure)
}

fn tropical(exp: &Experiment, w: &mut Writer) -> Result<(), Failure> {
    let st = solve_zero(exp)?;
    let g = &exp.grid;
    let n = g.len();
    let rate = rate_function(&st.density);
    if exp.wants(Format::Csv) {
        let rows: Vec<Vec<String>> =
            (0..n).map(|i| vec![i.to_string(), cell(g.point(i)), cell(st.pack.v[i])]).collect();
        w.csv("tropical_subaction.csv", &["i", "x", "V"], &rows)?;
        let mut rows = Vec::with_capacity(n * exp.sys.n_maps());
        for i in 0..n {
            for j in 0..exp.sys.n_maps() {
                rows.push(vec![i.to_string(), cell(g.point(i)), j.to_string(), cell(st.pack.q.get(j, i))]);
            }
        }
        w.csv("tropical_q.csv", &["i", "x", "j", "q"], &rows)?;
        let rows: Vec<Vec<String>> = (0..n)
            .map(|i| {
                vec![
                    i.to_string(),
                    cell(g.point(i)),
                    cell(st.density.values[i]),
                    cell(rate.values[i]),
                    u8::from(st.aubry.contains(i)).to_string(),
                ]
            })
            .collect();
        w.csv("tropical_density.csv", &["i", "x", "density", "rate", "aubry"], &rows)?;
        let rows: Vec<Vec<String>> =
            st.aubry.nodes.iter().map(|&i| vec![i.to_string(), cell(g.point(i))]).collect();
        w.csv("tropical_aubry.csv", &["i", "x"], &rows)?;
        // S[x][y] for every stored source column y
        let sources: Vec<usize> = (0..n).filter(|&y| st.closure.has_column(y)).collect();
        let mut rows = Vec::new();
        for &y in &sources {
            let col = st.closure.column(y);
            for (x, v) in col.iter().enumerate() {
                if v.is_finite() {
                    rows.push(vec![x.to_string(), y.to_string(), cell(*v)]);
                }
            }
        }
        w.csv("tropical_closure.csv", &["x", "y", "S"], &rows)?;
    }
    if exp.wants(Format::Json) {
        let inv = st.invariance;
        w.json(
            "tropical_summary.json",
            json!({
                "m_a": num(st.pack.m_a),
                "subaction_method": st.pack.method,
                "calibration_residual": num(st.pack.calibration_residual),
                "calibration_tol": num(st.calibration_tol),
                "aubry_tol": num(st.aubry_tol),
                "aubry": st.aubry.nodes,
                "aubry_points": nums(&st.aubry.nodes.iter().map(|&i| g.point(i)).collect::<Vec<_>>()),
                "irreducible": st.irreducible,
                "density_max": num(st.density.max()),
                "invariance": {
                    "residual": num(inv.residual),
                    "worst_node": inv.worst_node,
                    "dual_residual": num(inv.dual_residual),
                    "tol": num(inv.tol),
                    "pass": inv.pass,
                },
                "eq7_residual": st.eq7_residual.map_or(serde_json::Value::Null, num),
                "resolution": {
                    "spacing": num(st.resolution.spacing),
                    "max_snap": num(st.resolution.max_snap),
                    "worst_node": st.resolution.worst_node,
                    "worst_letter": st.resolution.worst_letter,
                },
                "closure": if st.closure.is_dense() { "dense" } else { "aubry_columns" },
                "grid_points": n,
            }),
        )?;
    }
    let pts: Vec<f64> = st.aubry.nodes.iter().map(|&i| g.point(i)).collect();
    println!("mA = {}", st.pack.m_a);
    println!("aubry = {pts:?}");
    println!("irreducible = {}", st.irreducible);
    println!("calibration residual = {:e}", st.pack.calibration_residual);
    println!("invariance residual = {:e} ({})", st.invariance.residual, if st.invariance.pass { "pass" } else { "fail" });
    Ok(())
}

fn ldp(exp: &Experiment, w: &mut Writer) -> Result<(), Failure> {
    let st = solve_zero(exp)?;
    let g = &exp.grid;
    let sweep = beta_sweep(&exp.sys, &exp.potential, g, &exp.betas, &st.pack, &exp.thermo)
        .map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
    let checks = all_checks(&sweep, &st.density, &default_battery(g), &exp.checks)
        .map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
    let rate = rate_function(&st.density);
    let count = |v: Verdict| checks.iter().filter(|c| c.verdict == v).count();
    let (passed, failed, inconclusive) = (count(Verdict::Pass), count(Verdict::Fail), count(Verdict::Inconclusive));
    let failures: Vec<(f64, String)> = sweep.failures().map(|(b, e)| (b, e.to_string())).collect();

    if exp.wants(Format::Csv) {
        let rows: Vec<Vec<String>> = sweep
            .records
            .iter()
            .map(|(b, r)| match r {
                Ok(r) => vec![
                    cell(*b),
                    "ok".into(),
                    cell(r.lambda()),
                    cell(r.log_lambda),
                    cell(r.pressure_over_beta),
                    cell(r.gap_m_a),
                    cell(r.gap_v),
                    cell(r.gap_q),
                    r.log_space.to_string(),
                    cell(r.eigen_residual),
                    cell(r.gibbs_residual),
                    cell(r.identity_residual),
                    cell(r.entropy),
                    String::new(),
                ],
                Err(e) => {
                    let mut row = vec![cell(*b), "failed".into()];
                    row.extend(std::iter::repeat(String::new()).take(11));
                    row.push(e.to_string());
                    row
                }
            })
            .collect();
        w.csv(
            "ldp_sweep.csv",
            &[
                "beta",
                "status",
                "lambda",
                "log_lambda",
                "pressure_over_beta",
                "gap_mA",
                "gap_V",
                "gap_q",
                "log_space",
                "eigen_residual",
                "gibbs_residual",
                "identity_residual",
                "entropy",
                "error",
            ],
            &rows,
        )?;
        let rows: Vec<Vec<String>> = checks
            .iter()
            .map(|c| {
                vec![
                    c.name.clone(),
                    cell(c.lhs),
                    cell(c.rhs),
                    cell(c.gap),
                    cell(c.tol),
                    format!("{:?}", c.verdict).to_uppercase(),
                    c.trend.iter().map(|t| cell(*t)).collect::<Vec<_>>().join(";"),
                ]
            })
            .collect();
        w.csv("ldp_checks.csv", &["name", "lhs", "rhs", "gap", "tol", "verdict", "trend"], &rows)?;
        // rate function next to (1/β) log ρ_β at every node
        let ok: Vec<_> = sweep.ok_records().collect();
        let mut header = vec!["i".to_string(), "x".into(), "rate".into()];
        header.extend(ok.iter().map(|r| format!("scaled_log_mass_beta_{}", r.beta)));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = (0..g.len())
            .map(|i| {
                let mut row = vec![i.to_string(), cell(g.point(i)), cell(rate.values[i])];
                row.extend(ok.iter().map(|r| cell(r.log_mass[i] / r.beta)));
                row
            })
            .collect();
        w.csv("ldp_rate.csv", &header, &rows)?;
    }
    if exp.wants(Format::Json) {
        w.json(
            "ldp_summary.json",
            json!({
                "m_a": num(st.pack.m_a),
                "betas": nums(&exp.betas),
                "conditional": exp.checks.conditional,
                "passed": passed,
                "failed": failed,
                "inconclusive": inconclusive,
                "beta_failures": failures.iter().map(|(b, e)| json!({ "beta": num(*b), "error": e })).collect::<Vec<_>>(),
                "checks": checks.iter().map(|c| json!({
                    "name": c.name,
                    "lhs": num(c.lhs),
                    "rhs": num(c.rhs),
                    "gap": num(c.gap),
                    "tol": num(c.tol),
                    "pass": c.pass,
                    "verdict": c.verdict,
                    "trend": nums(&c.trend),
                })).collect::<Vec<_>>(),
            }),
        )?;
    }
    for c in &checks {
        println!("{:<13} {} gap={:.3e} tol={}", format!("{:?}", c.verdict).to_uppercase(), c.name, c.gap, c.tol);
    }
    println!("{passed} passed, {failed} failed, {inconclusive} inconclusive");
    if inconclusive > 0 {
        eprintln!("warning: {inconclusive} inconclusive checks");
    }
    if !failures.is_empty() {
        let list: Vec<String> = failures.iter().map(|(b, e)| format!("beta={b}: {e}")).collect();
        return Err(Failure::new(EXIT_SOLVER, list.join("; ")));
    }
    if failed > 0 {
        return Err(Failure::new(EXIT_SOLVER, format!("{failed} checks failed")));
    }
    Ok(())
}

fn oracle(exp: &Experiment, target: OracleTarget, depth: Option<usize>, w: &mut Writer) -> Result<(), Failure> {
    let depth = depth.or(exp.config.symbolic.as_ref().map(|s| s.depth)).unwrap_or(12);
    if depth == 0 {
        return Err(Failure::new(EXIT_VALIDATION, "depth must be at least 1"));
    }
    match target {
        OracleTarget::Mane => oracle_mane(exp, depth, w),
        OracleTarget::Density | OracleTarget::Rate => oracle_density(exp, target, depth, w),
    }
}

/// Lipschitz bound of the grid discretization error on closure entries:
/// `2·Lip(q)·h/(1-γ)` with `Lip(q) <= 2·Lip(A)/(1-γ)`.
pub fn mane_error_bound(lip_a: f64, gamma: f64, h: f64) -> f64 {
    let lip_q = 2.0 * lip_a / (1.0 - gamma);
    2.0 * lip_q * h / (1.0 - gamma)
}

fn oracle_mane(exp: &Experiment, depth: usize, w: &mut Writer) -> Result<(), Failure> {
    let st = solve_zero(exp)?;
    let g = exp.grid;
    let n = g.len();
    let h = g.spacing();
    let q = &st.pack.q;
    let q_fn = |j: usize, x: f64| g.interpolate(q.row(j), x);
    let bound = mane_error_bound(exp.potential.lip_bound(), exp.sys.gamma(), h);
    // refuse before any closure work
    brute_force_mane_column(&exp.sys, q_fn, &g, 0.0, depth, h).map_err(tropical_failure)?;
    let columns: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|y| {
            let grid_col = if st.closure.has_column(y) {
                Ok(st.closure.column(y))
            } else {
                mane_column(&st.q_matrix, y, st.calibration_tol)
            }?;
            let coarse = brute_force_mane_column(&exp.sys, q_fn, &g, g.point(y), depth, h)?;
            let exact = brute_force_mane_column(&exp.sys, q_fn, &g, g.point(y), depth, EXACT_EPS)?;
            Ok((grid_col, coarse, exact))
        })
        .collect::<Result<_, TropicalError>>()
        .map_err(tropical_failure)?;

    let (mut two_sided, mut excess, mut exact_gap) = (0.0_f64, 0.0_f64, 0.0_f64);
    let (mut compared, mut compared_exact) = (0usize, 0usize);
    let mut rows = Vec::new();
    for (y, (s, coarse, exact)) in columns.iter().enumerate() {
        for x in 0..n {
            if coarse[x].is_finite() {
                compared += 1;
                two_sided = two_sided.max(if s[x].is_finite() { (s[x] - coarse[x]).abs() } else { f64::INFINITY });
                if s[x].is_finite() {
                    excess = excess.max(s[x] - coarse[x]);
                }
            }
            if exact[x].is_finite() {
                compared_exact += 1;
                exact_gap = exact_gap.max(if s[x].is_finite() { (s[x] - exact[x]).abs() } else { f64::INFINITY });
            }
            if s[x].is_finite() || coarse[x].is_finite() {
                rows.push(vec![x.to_string(), y.to_string(), cell(s[x]), cell(coarse[x]), cell(exact[x])]);
            }
        }
    }
    if exp.wants(Format::Csv) {
        w.csv("oracle_mane.csv", &["x", "y", "grid", "oracle_eps_h", "oracle_exact"], &rows)?;
    }
    let summary = json!({
        "target": "mane",
        "depth": depth,
        "bound": num(bound),
        "pairs_eps_h": compared,
        "pairs_exact": compared_exact,
        "max_discrepancy_eps_h": num(two_sided),
        "max_excess_eps_h": num(excess.max(0.0)),
        "max_discrepancy_exact": num(exact_gap),
    });
    if exp.wants(Format::Json) {
        w.json("oracle_summary.json", summary)?;
    }
    println!("bound = {bound:e}");
    println!("max discrepancy (eps = h, {compared} pairs) = {two_sided}");
    println!("max grid excess over oracle (eps = h) = {}", excess.max(0.0));
    println!("max discrepancy (exact hits, {compared_exact} pairs) = {exact_gap}");
    Ok(())
}

fn oracle_density(exp: &Experiment, target: OracleTarget, depth: usize, w: &mut Writer) -> Result<(), Failure> {
    let constants = exp.potential.constants().ok_or_else(|| tropical_failure(TropicalError::NotConstantPerMap))?;
    let space = crate::ifs::SymbolicSpace::new(exp.sys.n_maps(), depth)
        .map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
    let st = solve_zero(exp)?;
    // constant weights normalize by subtracting m(A) = max_j A_j
    let q: Vec<f64> = constants.iter().map(|c| c - st.pack.m_a).collect();
    let symbolic = nonplace_density_symbolic(&exp.sys, &q, &exp.grid, &space).map_err(tropical_failure)?;
    let sign = if target == OracleTarget::Rate { -1.0 } else { 1.0 };
    let g = &exp.grid;
    let mut worst = 0.0_f64;
    let mut compared = 0usize;
    let mut rows = Vec::new();
    for (i, &sym) in symbolic.iter().enumerate() {
        let grid_v = sign * st.density.values[i];
        let sym_v = sign * sym;
        if sym.is_finite() {
            compared += 1;
            worst = worst.max((grid_v - sym_v).abs());
        }
        rows.push(vec![i.to_string(), cell(g.point(i)), cell(grid_v), cell(sym_v)]);
    }
    let name = if target == OracleTarget::Rate { "rate" } else { "density" };
    if exp.wants(Format::Csv) {
        w.csv(&format!("oracle_{name}.csv"), &["i", "x", "grid", "symbolic"], &rows)?;
    }
    if exp.wants(Format::Json) {
        w.json(
            "oracle_summary.json",
            json!({ "target": name, "depth": depth, "nodes": compared, "max_discrepancy": num(worst) }),
        )?;
    }
    println!("max discrepancy ({compared} nodes) = {worst}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_map_to_exit_codes() {
        let empty = TropicalError::EmptyAubry { tol: 1e-9, best_diagonal: -1.0 };
        assert_eq!(tropical_failure(empty).code, EXIT_CONTRADICTION);
        assert_eq!(tropical_failure(TropicalError::NotConstantPerMap).code, EXIT_VALIDATION);
        assert_eq!(tropical_failure(TropicalError::PolicyIteration(3)).code, EXIT_SOLVER);
        assert_eq!(Failure::from(ConfigError::Parse("x".into())).code, EXIT_PARSE);
        assert_eq!(Failure::from(ConfigError::Validation("x".into())).code, EXIT_VALIDATION);
    }

    #[test]
    fn missing_config_and_bad_flags_are_parse_errors() {
        assert_eq!(main_with_args(["ifs-ldp", "validate"]), EXIT_PARSE);
        assert_eq!(main_with_args(["ifs-ldp", "--config", "x.toml", "frobnicate"]), EXIT_PARSE);
        assert_eq!(main_with_args(["ifs-ldp", "--config", "/nonexistent/x.toml", "validate"]), EXIT_PARSE);
    }

    #[test]
    fn lipschitz_error_bound() {
        assert_eq!(mane_error_bound(0.0, 0.5, 0.1), 0.0);
        // Lip(q) = 4, bound = 2·4·h/(1/2)
        assert!((mane_error_bound(1.0, 0.5, 1.0 / 32.0) - 0.5).abs() < 1e-15);
    }
}
