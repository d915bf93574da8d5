//! Command dispatch.

use serde::Serialize;

use infobound_core::solver::solve_on_grid;
use infobound_core::{
    case_cohort_model, compute_bound, grid_for, operator_identities, run_sweep, run_table1, sp_estimator_variance_mc,
    stratified_model, validate_mc, BoundReport, Check, FullDataModel, MissingnessDesign, ObservedTables,
    Route, SweepBase, SweepSpec, Table1Spec, ValidateOptions,
};

use crate::config::{Command, RouteChoice, RunConfig, SpecBlock, ValidateConfig};
use crate::error::CliError;
use crate::output::{sweep_csv, table1_csv, to_json};

/// Largest sup-norm difference accepted between the two routes' solutions.
pub const ROUTE_AGREEMENT_TOL: f64 = 1e-8;

/// Rendered result of a command.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub body: String,
    pub exit_code: i32,
    /// Human-readable lines for the terminal.
    pub summary: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct UStarSummary {
    pub component: usize,
    pub sup_norm: f64,
    pub w1_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RouteReport {
    #[serde(flatten)]
    pub report: BoundReport,
    pub u_star: Vec<UStarSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundDocument {
    pub schema_version: u32,
    pub command: Command,
    pub routes: Vec<RouteReport>,
    /// Sup-norm distance between the route solutions when both ran on the same grid.
    pub route_agreement: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationDocument {
    pub schema_version: u32,
    pub command: Command,
    pub n: usize,
    pub seed: u64,
    pub i_star: Vec<Vec<f64>>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

fn model_and_design(block: &SpecBlock) -> Result<(FullDataModel, MissingnessDesign), CliError> {
    Ok(match block {
        SpecBlock::CaseCohort(s) => case_cohort_model(s)?,
        SpecBlock::Stratified(s) => stratified_model(s)?,
        SpecBlock::Raw(r) => (r.model.clone(), r.design.clone()),
    })
}

fn require_block(cfg: &RunConfig) -> Result<SpecBlock, CliError> {
    cfg.spec_block().ok_or_else(|| CliError::Config("missing design block".into()))
}

fn routes(choice: RouteChoice) -> Vec<Route> {
    match choice {
        RouteChoice::T => vec![Route::T],
        RouteChoice::K => vec![Route::K],
        RouteChoice::Both => vec![Route::T, Route::K],
    }
}

pub fn cmd_bound(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (model, design) = model_and_design(&require_block(cfg)?)?;
    let mut reports = Vec::new();
    let mut solutions = Vec::new();
    for route in routes(cfg.route) {
        let r = compute_bound(&model, &design, &cfg.bound_options(route))?;
        let u_star = r
            .solution
            .u_star
            .iter()
            .enumerate()
            .map(|(c, u)| UStarSummary { component: c, sup_norm: u.sup_norm(), w1_norm: r.tables.inner_w1(u, u).sqrt() })
            .collect();
        reports.push(RouteReport { report: r.report.clone(), u_star });
        solutions.push(r.solution);
    }
    let route_agreement = match solutions.as_slice() {
        [a, b] if a.cells == b.cells => {
            Some(a.u_star.iter().zip(&b.u_star).map(|(x, y)| x.sup_distance(y)).fold(0.0, f64::max))
        }
        _ => None,
    };
    let summary = reports
        .iter()
        .map(|r| {
            format!(
                "route {:?}: I* = {:?}, I_full = {:?}, ARE = {:?}, cells = {}, converged = {}",
                r.report.route, r.report.i_star, r.report.i_full, r.report.are, r.report.cells, r.report.converged
            )
        })
        .collect();
    let doc = BoundDocument { schema_version: cfg.schema_version, command: Command::Bound, routes: reports, route_agreement };
    Ok(Outcome { body: to_json(&doc)?, exit_code: 0, summary })
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let sweep = cfg.sweep.as_ref().ok_or_else(|| CliError::Config("missing sweep block".into()))?;
    let base = match require_block(cfg)? {
        SpecBlock::CaseCohort(s) => SweepBase::CaseCohort(s),
        SpecBlock::Stratified(s) => SweepBase::Stratified(s),
        SpecBlock::Raw(_) => return Err(CliError::Config("sweeps run on case_cohort or stratified designs".into())),
    };
    let spec = SweepSpec { base, axes: sweep.axes.clone(), sp: sweep.sp, options: cfg.bound_options(cfg.primary_route()) };
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let report = run_sweep(&spec)?;
    let failed: Vec<String> = report
        .rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.error.as_ref().map(|e| format!("row {i} failed: {e}")))
        .collect();
    let all_failed = !report.rows.is_empty() && failed.len() == report.rows.len();
    let mut summary = vec![format!("{} rows, {} failed", report.rows.len(), failed.len())];
    summary.extend(failed);
    Ok(Outcome { body: sweep_csv(&report, sweep.sp)?, exit_code: if all_failed { 3 } else { 0 }, summary })
}

pub fn cmd_table1(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let t = cfg.table1.clone().unwrap_or_default();
    let spec = Table1Spec {
        thetas: t.thetas,
        lambda: t.lambda,
        rule: t.rule,
        total: t.total,
        tolerance_pp: t.tolerance_pp,
        published: t.published,
        options: cfg.bound_options(cfg.primary_route()),
    };
    let report = run_table1(&spec)?;
    let mut summary: Vec<String> = report
        .fits
        .iter()
        .map(|f| format!("theta {:.6}: max |dev| table (a) {:.3} pp, table (b) last row {:.3} pp", f.theta, f.max_deviation_a, f.max_deviation_b_last_row))
        .collect();
    summary.push(format!("best theta {:.6}, reproduced within {} pp: {}", report.best_theta, spec.tolerance_pp, report.reproduced));
    Ok(Outcome { body: table1_csv(&report)?, exit_code: 0, summary })
}

fn route_agreement_check(model: &FullDataModel, design: &MissingnessDesign, cfg: &RunConfig) -> Result<Check, CliError> {
    let grid = grid_for(model, design, cfg.grid.initial_nodes)?;
    let (_, _, t) = solve_on_grid(model, design, &grid, &cfg.bound_options(Route::T))?;
    let (_, _, k) = solve_on_grid(model, design, &grid, &cfg.bound_options(Route::K))?;
    let worst = t.u_star.iter().zip(&k.u_star).map(|(a, b)| a.sup_distance(b)).fold(0.0, f64::max);
    Ok(Check {
        name: "route_agreement".into(),
        null: 0.0,
        estimate: worst,
        se: 0.0,
        allowed: ROUTE_AGREEMENT_TOL,
        pass: worst <= ROUTE_AGREEMENT_TOL,
    })
}

pub fn cmd_validate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let block = require_block(cfg)?;
    let (model, design) = model_and_design(&block)?;
    let v: ValidateConfig = cfg.validate.unwrap_or_default();
    let options = ValidateOptions { n: v.n, seed: cfg.seed, se_multiplier: v.se_multiplier, bound: cfg.bound_options(cfg.primary_route()) };
    let mc = validate_mc(&model, &design, &options)?;

    let mut checks = Vec::new();
    let grid = grid_for(&model, &design, cfg.grid.initial_nodes)?;
    let tables = ObservedTables::build_with_order(&model, &grid, cfg.grid.gl_order)?;
    let sampling = design.resolve(&model)?;
    for mut c in operator_identities(&tables, &sampling, v.identity_samples, cfg.seed)? {
        c.name = format!("identity_{}", c.name);
        checks.push(c);
    }
    if cfg.route == RouteChoice::Both {
        checks.push(route_agreement_check(&model, &design, cfg)?);
    }
    checks.extend(mc.checks.iter().cloned());
    if let (Some(sp), SpecBlock::CaseCohort(spec)) = (v.sp_mc, &block) {
        let r = sp_estimator_variance_mc(spec, sp.n, sp.reps, cfg.seed, v.se_multiplier)?;
        checks.push(Check {
            name: "sp_variance".into(),
            null: r.asymptotic_variance,
            estimate: r.scaled_variance,
            se: r.se,
            allowed: r.allowed,
            pass: r.pass,
        });
    }
    let pass = checks.iter().all(|c| c.pass);
    let summary = checks
        .iter()
        .map(|c| format!("{:<40} {}  estimate {:+.6e}  null {:+.6e}  allowed {:.3e}", c.name, if c.pass { "pass" } else { "FAIL" }, c.estimate, c.null, c.allowed))
        .collect();
    let doc = ValidationDocument {
        schema_version: cfg.schema_version,
        command: Command::Validate,
        n: mc.n,
        seed: cfg.seed,
        i_star: mc.i_star,
        checks,
        pass,
    };
    Ok(Outcome { body: to_json(&doc)?, exit_code: if pass { 0 } else { 1 }, summary })
}

/// Runs the configured command, on a dedicated thread pool when a thread
/// count is given.
pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let dispatch = || match cfg.command {
        Command::Bound => cmd_bound(cfg),
        Command::Sweep => cmd_sweep(cfg),
        Command::Table1 => cmd_table1(cfg),
        Command::Validate => cmd_validate(cfg),
    };
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?
            .install(dispatch),
        None => dispatch(),
    }
}
