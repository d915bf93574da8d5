//! Efficient-score equation: assembly, solution, information bound.
//!
//! Route T solves `u + T u = Π1 Z`; route K solves the equivalent form
//! `u − K u + (π₁ / E[π₁ | Y, Δ=1]) E[K u | Y, Δ=1] = π₁ (Z − E[Z | Y, RΔ=1])`.
//! Both act on cell-constant `u` over the L2(W1) support.

use serde::{Deserialize, Serialize};

use crate::error::{BoundError, Result};
use crate::field::{GridFunction, ScoreField};
use crate::grid::{TimeGrid, DEFAULT_GL_ORDER, DEFAULT_NODES};
use crate::linalg::{conjugate_gradient, dot, sup_norm, DenseLu, Matrix};
use crate::model::{CoefficientScope, FullDataModel, MissingnessDesign, Phase1Scope, SamplingTable};
use crate::operators::{apply_d, apply_pi1, covariate_grid, d_at, fulldata_information, DesignOperators};
use crate::tables::ObservedTables;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Route {
    /// `u + T u = Π1 Z`.
    T,
    /// The K-operator form with the centering function eliminated.
    K,
}

/// Which coefficient is of interest and whether Y is observed at phase 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignVariant {
    ObservedTimeFull,
    ObservedTimeExposure,
    MissingTimeFull,
    MissingTimeExposure,
}

impl DesignVariant {
    pub fn of(scope: CoefficientScope, phase1: Phase1Scope) -> Self {
        match (phase1, scope) {
            (Phase1Scope::YDeltaV, CoefficientScope::Full) => Self::ObservedTimeFull,
            (Phase1Scope::YDeltaV, CoefficientScope::Exposure) => Self::ObservedTimeExposure,
            (Phase1Scope::DeltaV, CoefficientScope::Full) => Self::MissingTimeFull,
            (Phase1Scope::DeltaV, CoefficientScope::Exposure) => Self::MissingTimeExposure,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub condition_ceiling: f64,
    /// Largest system solved by dense LU; route T switches to CG above it.
    pub dense_limit: usize,
    pub iterative_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { condition_ceiling: 1e12, dense_limit: 1700, iterative_tolerance: 1e-13, max_iterations: 5000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SolveMethod {
    DenseLu,
    ConjugateGradient { iterations: usize },
    BiCgStab { iterations: usize },
}

/// Discretized equation over the stacked support unknowns.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub route: Route,
    pub variant: DesignVariant,
    /// `(level, cell)` of every unknown.
    pub unknowns: Vec<(usize, usize)>,
    pub matrix: Matrix,
    /// One right-hand side per θ component.
    pub rhs: Vec<Vec<f64>>,
    pub condition_estimate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EfficientScoreSolution {
    pub variant: DesignVariant,
    pub route: Route,
    pub method: SolveMethod,
    pub u_star: Vec<GridFunction>,
    /// Centering function per component, one value per cell.
    pub f_star: Vec<Vec<f64>>,
    pub i_star: Vec<Vec<f64>>,
    pub residual_norm: f64,
    /// `sup |E[u* | Y, Δ = 1]|`.
    pub centering_residual: f64,
    pub condition_estimate: Option<f64>,
    pub cells: usize,
}

/// Solver bound to one model, design and grid.
pub struct ScoreSolver<'a> {
    ops: DesignOperators<'a>,
    variant: DesignVariant,
    unknowns: Vec<(usize, usize)>,
    weights: Vec<f64>,
    options: SolveOptions,
}

impl<'a> ScoreSolver<'a> {
    pub fn new(tables: &'a ObservedTables, sampling: &'a SamplingTable, options: SolveOptions) -> Result<Self> {
        let ops = DesignOperators::new(tables, sampling)?;
        let variant = DesignVariant::of(tables.model().coefficient_scope, sampling.phase1());
        let mut unknowns = Vec::new();
        let mut weights = Vec::new();
        for l in 0..tables.n_levels() {
            for k in 0..tables.n_cells() {
                if tables.in_support(l, k) {
                    unknowns.push((l, k));
                    weights.push(tables.pmf()[l] * tables.fail_mass(l, k));
                }
            }
        }
        if unknowns.is_empty() {
            return Err(BoundError::NumericSupport("the failure law has no mass".into()));
        }
        Ok(Self { ops, variant, unknowns, weights, options })
    }

    pub fn operators(&self) -> &DesignOperators<'a> {
        &self.ops
    }

    pub fn tables(&self) -> &'a ObservedTables {
        self.ops.tables()
    }

    pub fn variant(&self) -> DesignVariant {
        self.variant
    }

    pub fn n_unknowns(&self) -> usize {
        self.unknowns.len()
    }

    fn unpack(&self, x: &[f64]) -> GridFunction {
        let t = self.tables();
        let mut u = t.zero_grid();
        for (&(l, k), &v) in self.unknowns.iter().zip(x) {
            u.set(l, k, v);
        }
        u
    }

    fn pack(&self, u: &GridFunction) -> Vec<f64> {
        self.unknowns.iter().map(|&(l, k)| u.get(l, k)).collect()
    }

    /// The route's operator applied matrix-free.
    pub fn apply(&self, route: Route, u: &GridFunction) -> GridFunction {
        match route {
            Route::T => self.ops.apply_route_t(u),
            Route::K => self.ops.apply_route_k(u),
        }
    }

    fn apply_packed(&self, route: Route, x: &[f64]) -> Vec<f64> {
        self.pack(&self.apply(route, &self.unpack(x)))
    }

    /// Right-hand side of the route for θ component `c`.
    pub fn rhs(&self, route: Route, c: usize) -> GridFunction {
        let t = self.tables();
        let z = covariate_grid(t, c);
        match route {
            Route::T => apply_pi1(t, &z),
            Route::K => self.ops.route_k_rhs(&z),
        }
    }

    pub fn assemble(&self, route: Route) -> Result<LinearSystem> {
        let n = self.unknowns.len();
        let matrix = Matrix::from_columns(n, |e| self.apply_packed(route, e));
        let lu = DenseLu::factor(&matrix)?;
        let condition_estimate = matrix.norm1() * lu.inverse_norm1_estimate();
        let d = self.tables().model().dim();
        let rhs = (0..d).map(|c| self.pack(&self.rhs(route, c))).collect();
        Ok(LinearSystem { route, variant: self.variant, unknowns: self.unknowns.clone(), matrix, rhs, condition_estimate })
    }

    fn check_condition(&self, cond: f64) -> Result<()> {
        if !(cond <= self.options.condition_ceiling) {
            return Err(BoundError::IllConditioned { condition: cond, ceiling: self.options.condition_ceiling });
        }
        Ok(())
    }

    pub fn solve(&self, route: Route) -> Result<EfficientScoreSolution> {
        let d = self.tables().model().dim();
        let n = self.unknowns.len();
        let rhs: Vec<Vec<f64>> = (0..d).map(|c| self.pack(&self.rhs(route, c))).collect();
        let (xs, method, condition) = if n <= self.options.dense_limit {
            let sys = self.assemble(route)?;
            self.check_condition(sys.condition_estimate)?;
            let lu = DenseLu::factor(&sys.matrix)?;
            let xs = rhs.iter().map(|b| lu.solve_refined(&sys.matrix, b)).collect();
            (xs, SolveMethod::DenseLu, Some(sys.condition_estimate))
        } else {
            self.solve_iterative(route, &rhs)?
        };
        let u_star: Vec<GridFunction> = xs.iter().map(|x| self.unpack(x)).collect();
        self.finish(route, method, condition, u_star, &rhs)
    }

    fn solve_iterative(&self, route: Route, rhs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, SolveMethod, Option<f64>)> {
        let o = &self.options;
        match route {
            Route::T => {
                let mut xs = Vec::new();
                let mut iterations = 0;
                let mut cond: f64 = 1.0;
                for b in rhs {
                    let out = conjugate_gradient(
                        |x| self.apply_packed(Route::T, x),
                        b,
                        &self.weights,
                        o.iterative_tolerance,
                        o.max_iterations,
                    )?;
                    iterations = iterations.max(out.iterations);
                    if out.iterations > 0 {
                        cond = cond.max(out.ritz_max / out.ritz_min);
                    }
                    xs.push(out.x);
                }
                self.check_condition(cond)?;
                Ok((xs, SolveMethod::ConjugateGradient { iterations }, Some(cond)))
            }
            Route::K => {
                let mut xs = Vec::new();
                let mut iterations = 0;
                for b in rhs {
                    let (x, it) = bicgstab(|x| self.apply_packed(Route::K, x), b, o.iterative_tolerance, o.max_iterations)?;
                    iterations = iterations.max(it);
                    xs.push(x);
                }
                Ok((xs, SolveMethod::BiCgStab { iterations }, None))
            }
        }
    }

    fn finish(
        &self,
        route: Route,
        method: SolveMethod,
        condition: Option<f64>,
        u_star: Vec<GridFunction>,
        rhs: &[Vec<f64>],
    ) -> Result<EfficientScoreSolution> {
        let t = self.tables();
        let mut residual_norm = 0.0f64;
        let mut centering_residual = 0.0f64;
        let mut f_star = Vec::new();
        for (c, u) in u_star.iter().enumerate() {
            let au = self.apply_packed(route, &self.pack(u));
            let r: Vec<f64> = au.iter().zip(&rhs[c]).map(|(a, b)| a - b).collect();
            residual_norm = residual_norm.max(sup_norm(&r));
            centering_residual = centering_residual.max(sup_norm(&t.cond_mean_given_failure(u)));
            f_star.push(self.ops.centering(u, &covariate_grid(t, c)));
        }
        if !residual_norm.is_finite() {
            return Err(BoundError::NoConvergence { iterations: 0, residual: residual_norm });
        }
        let zetas: Vec<ScoreField> = u_star.iter().map(|u| apply_d(t, u)).collect();
        let i_star = self.ops.information(&zetas);
        Ok(EfficientScoreSolution {
            variant: self.variant,
            route,
            method,
            u_star,
            f_star,
            i_star,
            residual_norm,
            centering_residual,
            condition_estimate: condition,
            cells: t.n_cells(),
        })
    }

    /// Efficient score `k*` at one observation, per θ component.
    ///
    /// `level` is the covariate level when `X` was measured (`r = true`);
    /// otherwise only the phase-1 group is used.
    pub fn efficient_score(&self, solution: &EfficientScoreSolution, y: f64, delta: bool, group: usize, level: Option<usize>) -> Vec<f64> {
        let t = self.tables();
        let ops = &self.ops;
        solution
            .u_star
            .iter()
            .map(|u| {
                let e = self.phase1_mean_at(u, y, delta, group);
                match level {
                    Some(l) => {
                        let pi = ops.sampling().pi_level(y, delta, l);
                        let zeta = d_at(t, u, y, delta, l);
                        zeta / pi - (1.0 - pi) / pi * e
                    }
                    None => e,
                }
            })
            .collect()
    }

    /// `E[Du | phase-1 statistic]` at an observation.
    pub fn phase1_mean_at(&self, u: &GridFunction, y: f64, delta: bool, group: usize) -> f64 {
        let t = self.tables();
        match self.ops.phase1() {
            Phase1Scope::DeltaV => {
                let (mut num, mut den) = (0.0, 0.0);
                let du = apply_d(t, u);
                let m = t.order();
                for l in (0..t.n_levels()).filter(|&l| t.group(l) == group) {
                    let h = t.pmf()[l];
                    for k in 0..t.n_cells() {
                        let i = l * t.n_cells() + k;
                        if delta {
                            for j in 0..m {
                                num += h * t.w_fail(l, k, j) * du.fail[i * m + j];
                                den += h * t.w_fail(l, k, j);
                            }
                        } else {
                            for j in 0..m {
                                num += h * t.w_cens(l, k, j) * du.cens[i * m + j];
                                den += h * t.w_cens(l, k, j);
                            }
                            num += h * t.w_atom(l, k) * du.atom[i];
                            den += h * t.w_atom(l, k);
                        }
                    }
                }
                if den > 0.0 {
                    num / den
                } else {
                    0.0
                }
            }
            Phase1Scope::YDeltaV => {
                let (mut num, mut den) = (0.0, 0.0);
                for l in (0..t.n_levels()).filter(|&l| t.group(l) == group) {
                    let w = t.pmf()[l] * t.density_at(y, delta, l);
                    num += w * d_at(t, u, y, delta, l);
                    den += w;
                }
                if den > 0.0 {
                    num / den
                } else {
                    0.0
                }
            }
        }
    }
}

fn bicgstab(mut apply: impl FnMut(&[f64]) -> Vec<f64>, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok((x, 0));
    }
    let mut r = b.to_vec();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        v = apply(&p);
        alpha = rho / dot(&r0, &v);
        let s: Vec<f64> = (0..n).map(|i| r[i] - alpha * v[i]).collect();
        if dot(&s, &s).sqrt() <= tol * b_norm {
            for i in 0..n {
                x[i] += alpha * p[i];
            }
            return Ok((x, it));
        }
        let tv = apply(&s);
        omega = dot(&tv, &s) / dot(&tv, &tv);
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * tv[i];
        }
        if dot(&r, &r).sqrt() <= tol * b_norm {
            return Ok((x, it));
        }
    }
    Err(BoundError::NoConvergence { iterations: max_iter, residual: dot(&r, &r).sqrt() / b_norm })
}

/// Grid for a model and design: uniform nodes plus every break, bucket
/// boundary and atom (τ included).
pub fn grid_for(model: &FullDataModel, design: &MissingnessDesign, nodes: usize) -> Result<TimeGrid> {
    let mut required = model.required_nodes();
    required.extend(design.bucket_breaks.iter().copied());
    let mut atoms = model.atom_times();
    atoms.push(model.tau);
    TimeGrid::uniform(model.tau, nodes, &required, &atoms)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundOptions {
    pub initial_nodes: usize,
    pub refine: bool,
    /// Relative change in I* below which refinement stops.
    pub tolerance: f64,
    pub max_nodes: usize,
    pub gl_order: usize,
    pub route: Route,
    pub solve: SolveOptions,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            initial_nodes: DEFAULT_NODES,
            refine: true,
            tolerance: 1e-4,
            max_nodes: 6400,
            gl_order: DEFAULT_GL_ORDER,
            route: Route::T,
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridStep {
    pub cells: usize,
    pub i_star: Vec<Vec<f64>>,
    pub i_full: Vec<Vec<f64>>,
    pub relative_change: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub variant: DesignVariant,
    pub route: Route,
    pub method: SolveMethod,
    pub i_star: Vec<Vec<f64>>,
    pub i_full: Vec<Vec<f64>>,
    /// `I*_cc / I_full,cc` per component.
    pub are: Vec<f64>,
    pub residual_norm: f64,
    pub centering_residual: f64,
    pub condition_estimate: Option<f64>,
    pub cells: usize,
    pub converged: bool,
    pub trail: Vec<GridStep>,
}

/// Bound with its final tables and solution.
pub struct BoundResult {
    pub report: BoundReport,
    pub tables: ObservedTables,
    pub sampling: SamplingTable,
    pub solution: EfficientScoreSolution,
}

impl BoundResult {
    pub fn solver(&self, options: SolveOptions) -> Result<ScoreSolver<'_>> {
        ScoreSolver::new(&self.tables, &self.sampling, options)
    }
}

fn relative_change(new: &[Vec<f64>], old: &[Vec<f64>]) -> f64 {
    (0..new.len())
        .map(|i| ((new[i][i] - old[i][i]) / new[i][i].abs().max(f64::MIN_POSITIVE)).abs())
        .fold(0.0, f64::max)
}

/// Solves on one grid.
pub fn solve_on_grid(model: &FullDataModel, design: &MissingnessDesign, grid: &TimeGrid, options: &BoundOptions) -> Result<(ObservedTables, SamplingTable, EfficientScoreSolution)> {
    let tables = ObservedTables::build_with_order(model, grid, options.gl_order)?;
    let sampling = design.resolve(model)?;
    let solution = ScoreSolver::new(&tables, &sampling, options.solve)?.solve(options.route)?;
    Ok((tables, sampling, solution))
}

/// Information bound with grid refinement by bisection until I* settles.
pub fn compute_bound(model: &FullDataModel, design: &MissingnessDesign, options: &BoundOptions) -> Result<BoundResult> {
    model.validate()?;
    design.resolve(model)?;
    let mut grid = grid_for(model, design, options.initial_nodes)?;
    let mut trail: Vec<GridStep> = Vec::new();
    loop {
        let (tables, sampling, solution) = solve_on_grid(model, design, &grid, options)?;
        let i_full = fulldata_information(&tables);
        let change = trail.last().map(|prev| relative_change(&solution.i_star, &prev.i_star));
        trail.push(GridStep { cells: grid.n_cells(), i_star: solution.i_star.clone(), i_full: i_full.clone(), relative_change: change });
        let converged = change.is_some_and(|c| c < options.tolerance);
        let next = grid.refined();
        if !options.refine || converged || next.n_cells() > options.max_nodes {
            let d = i_full.len();
            let are = (0..d).map(|c| solution.i_star[c][c] / i_full[c][c]).collect();
            let report = BoundReport {
                variant: solution.variant,
                route: solution.route,
                method: solution.method,
                i_star: solution.i_star.clone(),
                i_full,
                are,
                residual_norm: solution.residual_norm,
                centering_residual: solution.centering_residual,
                condition_estimate: solution.condition_estimate,
                cells: grid.n_cells(),
                converged: converged || !options.refine,
                trail,
            };
            return Ok(BoundResult { report, tables, sampling, solution });
        }
        grid = next;
    }
}
