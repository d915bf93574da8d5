//! Example designs: the classical case-cohort design with one binary
//! covariate, and the exposure-stratified case-cohort design with a binary
//! surrogate. Both follow everyone to failure or to the end of study at 1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BoundError, Result};
use crate::grid::DEFAULT_NODES;
use crate::model::{
    CensoringLaw, CoefficientScope, CovariateLevel, FullDataModel, MissingnessDesign, Phase1Scope,
    PiecewiseConstant, SamplingEntry, DEFAULT_SIGMA,
};
use crate::operators::fulldata_information_pointwise;
use crate::solver::{compute_bound, grid_for, BoundOptions};
use crate::tables::ObservedTables;

fn default_h1() -> f64 {
    0.5
}

fn check_prob(name: &str, p: f64, lo_open: bool, hi_open: bool) -> Result<()> {
    let ok = p.is_finite() && if lo_open { p > 0.0 } else { p >= 0.0 } && if hi_open { p < 1.0 } else { p <= 1.0 };
    if ok {
        Ok(())
    } else {
        Err(BoundError::InvalidSpec(format!("{name} = {p} out of range")))
    }
}

/// Classical case-cohort design: `Z ∈ {0, 1}`, exponential failure with rate
/// `λ e^{θz}`, censoring at 1, all failures and a fraction `π0` of the
/// nonfailures measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseCohortSpec {
    /// `P(T <= 1 | Z = 0)`.
    pub p0: f64,
    pub theta: f64,
    /// `P(Z = 1)`.
    #[serde(default = "default_h1")]
    pub h1: f64,
    pub pi0: f64,
}

impl CaseCohortSpec {
    pub fn new(p0: f64, theta: f64, pi0: f64) -> Self {
        Self { p0, theta, h1: 0.5, pi0 }
    }

    pub fn validate(&self) -> Result<()> {
        check_prob("p0", self.p0, true, true)?;
        check_prob("h1", self.h1, false, false)?;
        check_prob("pi0", self.pi0, true, false)?;
        if self.pi0 < DEFAULT_SIGMA {
            return Err(BoundError::InvalidSpec(format!("pi0 = {} below the floor", self.pi0)));
        }
        if !self.theta.is_finite() {
            return Err(BoundError::InvalidSpec("θ must be finite".into()));
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        -(-self.p0).ln_1p()
    }
}

/// Exponential failure, censoring at τ = 1, covariate levels and pmf given.
fn exponential_model(lambda: f64, theta: f64, scope: CoefficientScope, levels: Vec<CovariateLevel>, pmf: Vec<f64>) -> FullDataModel {
    let n = levels.len();
    FullDataModel {
        theta: vec![theta],
        coefficient_scope: scope,
        tau: 1.0,
        baseline_hazard: PiecewiseConstant::constant(lambda),
        levels,
        covariate_pmf: pmf,
        censoring: vec![CensoringLaw::default(); n],
    }
}

pub fn case_cohort_model(spec: &CaseCohortSpec) -> Result<(FullDataModel, MissingnessDesign)> {
    case_cohort_model_with(spec, Phase1Scope::YDeltaV)
}

/// Case-cohort model with an explicit choice of what phase 1 observes.
pub fn case_cohort_model_with(spec: &CaseCohortSpec, phase1: Phase1Scope) -> Result<(FullDataModel, MissingnessDesign)> {
    spec.validate()?;
    let levels = vec![
        CovariateLevel { x: vec![0.0], v: vec![], index: 0 },
        CovariateLevel { x: vec![1.0], v: vec![], index: 1 },
    ];
    let model = exponential_model(spec.lambda(), spec.theta, CoefficientScope::Full, levels, vec![1.0 - spec.h1, spec.h1]);
    let design = MissingnessDesign::by_delta(phase1, 1.0, spec.pi0);
    Ok((model, design))
}

/// Baseline failure intensity, given directly or through `P(T <= 1 | X = 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    P0(f64),
    Lambda(f64),
}

impl Baseline {
    pub fn lambda(&self) -> f64 {
        match *self {
            Baseline::P0(p) => -(-p).ln_1p(),
            Baseline::Lambda(l) => l,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Baseline::P0(p) => check_prob("p0", p, true, true),
            Baseline::Lambda(l) if l.is_finite() && l > 0.0 => Ok(()),
            Baseline::Lambda(l) => Err(BoundError::InvalidSpec(format!("λ = {l} must be positive"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationRule {
    /// Same fraction in both strata.
    Proportional,
    /// Equal expected numbers sampled from `{Δ=0, V=0}` and `{Δ=0, V=1}`.
    EqualExpectedCounts,
    /// Expected sampled count proportional to stratum size times the
    /// standard deviation of `X` within the stratum.
    Neyman,
}

/// Overall fraction of nonfailures sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TotalFraction {
    Fixed(f64),
    /// Expected subcohort size equals the expected number of cases.
    ExpectedCases,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StratifiedSampling {
    Fixed { pi0: f64, pi1: f64 },
    Allocated { rule: AllocationRule, total: TotalFraction },
}

/// Exposure-stratified case-cohort design with surrogate `V` for `X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratifiedSpec {
    pub baseline: Baseline,
    pub theta: f64,
    /// `P(X = 0)`.
    pub px0: f64,
    /// `1 − α` is the sensitivity `P(V = 1 | X = 1)`.
    pub alpha: f64,
    /// `1 − β` is the specificity `P(V = 0 | X = 0)`.
    pub beta: f64,
    pub sampling: StratifiedSampling,
}

impl StratifiedSpec {
    pub fn validate(&self) -> Result<()> {
        self.baseline.validate()?;
        check_prob("px0", self.px0, false, false)?;
        check_prob("alpha", self.alpha, false, false)?;
        check_prob("beta", self.beta, false, false)?;
        if !self.theta.is_finite() {
            return Err(BoundError::InvalidSpec("θ must be finite".into()));
        }
        match self.sampling {
            StratifiedSampling::Fixed { pi0, pi1 } => {
                check_prob("pi0", pi0, true, false)?;
                check_prob("pi1", pi1, true, false)
            }
            StratifiedSampling::Allocated { total: TotalFraction::Fixed(f), .. } => check_prob("total", f, true, false),
            StratifiedSampling::Allocated { .. } => Ok(()),
        }
    }

    /// Levels in the order (x, v) = (0,0), (0,1), (1,0), (1,1).
    pub fn joint_pmf(&self) -> [f64; 4] {
        let (px0, px1) = (self.px0, 1.0 - self.px0);
        [px0 * (1.0 - self.beta), px0 * self.beta, px1 * self.alpha, px1 * (1.0 - self.alpha)]
    }

    /// Nonfailure strata `{Δ = 0, V = v}` for v = 0, 1.
    pub fn nonfailure_strata(&self) -> [Stratum; 2] {
        let lam = self.baseline.lambda();
        let h = self.joint_pmf();
        let s0 = (-lam).exp();
        let s1 = (-lam * self.theta.exp()).exp();
        [(h[0], h[2]), (h[1], h[3])].map(|(unexposed, exposed)| {
            let mass = unexposed * s0 + exposed * s1;
            Stratum { mass, exposed: if mass > 0.0 { exposed * s1 / mass } else { 0.0 } }
        })
    }

    /// Resolved `(π0, π1)`.
    pub fn sampling_fractions(&self) -> Result<(f64, f64)> {
        match self.sampling {
            StratifiedSampling::Fixed { pi0, pi1 } => Ok((pi0, pi1)),
            StratifiedSampling::Allocated { rule, total } => {
                let strata = self.nonfailure_strata();
                let nonfail = strata[0].mass + strata[1].mass;
                let total = match total {
                    TotalFraction::Fixed(f) => f,
                    TotalFraction::ExpectedCases => (1.0 - nonfail) / nonfail,
                };
                let [a, b] = allocate_stratified(total, strata, rule)?;
                Ok((a, b))
            }
        }
    }
}

/// A sampling stratum among the nonfailures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    /// Probability of the stratum.
    pub mass: f64,
    /// `P(X = 1)` within the stratum.
    pub exposed: f64,
}

/// Splits an overall nonfailure sampling fraction over two strata. Fractions
/// above 1 are capped and the excess moved to the other stratum.
pub fn allocate_stratified(total: f64, strata: [Stratum; 2], rule: AllocationRule) -> Result<[f64; 2]> {
    if !(total > 0.0 && total <= 1.0) {
        return Err(BoundError::InvalidSpec(format!("total sampling fraction {total} not in (0, 1]")));
    }
    let masses = strata.map(|s| s.mass);
    if strata.iter().any(|s| !(s.mass.is_finite() && s.mass >= 0.0 && (0.0..=1.0).contains(&s.exposed)))
        || masses[0] + masses[1] <= 0.0
    {
        return Err(BoundError::InvalidSpec("strata need nonnegative mass with positive sum and exposure in [0, 1]".into()));
    }
    if masses[0] == 0.0 || masses[1] == 0.0 {
        return Ok([total, total]);
    }
    let score = strata.map(|s| match rule {
        AllocationRule::Proportional => 1.0,
        AllocationRule::EqualExpectedCounts => 1.0 / s.mass,
        AllocationRule::Neyman => (s.exposed * (1.0 - s.exposed)).sqrt(),
    });
    let budget = total * (masses[0] + masses[1]);
    let norm = score[0] * masses[0] + score[1] * masses[1];
    if norm <= 0.0 {
        return Ok([total, total]);
    }
    let mut pi = score.map(|s| budget * s / norm);
    for v in 0..2 {
        if pi[v] > 1.0 {
            let other = 1 - v;
            pi[v] = 1.0;
            pi[other] = (budget - masses[v]) / masses[other];
            if pi[other] > 1.0 + 1e-12 {
                return Err(BoundError::InvalidSpec(format!("total fraction {total} is infeasible")));
            }
            pi[other] = pi[other].min(1.0);
        }
    }
    Ok(pi)
}

pub fn stratified_model(spec: &StratifiedSpec) -> Result<(FullDataModel, MissingnessDesign)> {
    spec.validate()?;
    let (pi0, pi1) = spec.sampling_fractions()?;
    let pairs = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)];
    let levels = pairs
        .iter()
        .enumerate()
        .map(|(i, &(x, v))| CovariateLevel { x: vec![x], v: vec![v], index: i })
        .collect();
    let model = exponential_model(spec.baseline.lambda(), spec.theta, CoefficientScope::Exposure, levels, spec.joint_pmf().to_vec());
    let entry = |delta: u8, v: Option<f64>, pi: f64| SamplingEntry { bucket: None, delta, v: v.map(|v| vec![v]), pi };
    let design = MissingnessDesign {
        phase1: Phase1Scope::YDeltaV,
        sigma: DEFAULT_SIGMA,
        bucket_breaks: Vec::new(),
        entries: vec![entry(1, None, 1.0), entry(0, Some(0.0), pi0), entry(0, Some(1.0), pi1)],
    };
    Ok((model, design))
}

/// Asymptotic variance of the pseudo-likelihood estimator with a subcohort
/// drawn from the whole cohort and subcohort-only risk sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpVariance {
    pub variance: f64,
    /// Full-cohort information (pointwise failure posterior).
    pub full_information: f64,
    /// Second moment of the risk-set term each subcohort member contributes.
    pub risk_set_moment: f64,
}

/// Pseudo-likelihood variance `1/Σ + ((1 − π0)/π0) E[A²]/Σ²` with
/// `A = e^{θZ} ∫₀^Y (Z − e(t)) λ dt`.
pub fn sp_asymptotic_variance(spec: &CaseCohortSpec, nodes: usize) -> Result<SpVariance> {
    let (model, design) = case_cohort_model(spec)?;
    let grid = grid_for(&model, &design, nodes)?;
    let t = ObservedTables::build(&model, &grid)?;
    let sigma = fulldata_information_pointwise(&t)[0][0];
    let rule = t.rule();
    let z = [0.0, 1.0];
    let posterior = |s: f64| {
        let (mut num, mut den) = (0.0, 0.0);
        for l in 0..2 {
            let w = t.pmf()[l] * t.risk(l) * t.survivor_at(s, l);
            num += w * z[l];
            den += w;
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    };
    let mut moment = 0.0;
    for l in 0..2 {
        let h = t.pmf()[l];
        if h == 0.0 {
            continue;
        }
        let r = t.risk(l);
        let mut cum = 0.0;
        for k in 0..t.n_cells() {
            let (lo, hi) = grid.cell(k);
            let lam = t.base_rate(k);
            let a_at = |y: f64| r * (cum + lam * rule.integrate(lo, y, |s| z[l] - posterior(s)));
            for j in 0..t.order() {
                let y = t.point(k, j);
                let w = t.w_fail(l, k, j) + t.w_cens(l, k, j);
                if w > 0.0 {
                    moment += h * w * a_at(y).powi(2);
                }
            }
            if t.w_atom(l, k) > 0.0 {
                moment += h * t.w_atom(l, k) * a_at(hi).powi(2);
            }
            cum += lam * rule.integrate(lo, hi, |s| z[l] - posterior(s));
        }
    }
    let f = (1.0 - spec.pi0) / spec.pi0;
    Ok(SpVariance { variance: 1.0 / sigma + f * moment / (sigma * sigma), full_information: sigma, risk_set_moment: moment })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepFamily {
    CaseCohort,
    Stratified,
}

/// Base design of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepBase {
    CaseCohort(CaseCohortSpec),
    Stratified(StratifiedSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub param: String,
    pub values: Vec<f64>,
}

/// Cartesian sweep; the first axis varies slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: SweepBase,
    pub axes: Vec<SweepAxis>,
    /// Also compute the pseudo-likelihood variance (case-cohort only).
    #[serde(default)]
    pub sp: bool,
    #[serde(default)]
    pub options: BoundOptions,
}

impl SweepSpec {
    pub fn family(&self) -> SweepFamily {
        match self.base {
            SweepBase::CaseCohort(_) => SweepFamily::CaseCohort,
            SweepBase::Stratified(_) => SweepFamily::Stratified,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sp && self.family() != SweepFamily::CaseCohort {
            return Err(BoundError::InvalidSpec("pseudo-likelihood variance is only available for case-cohort sweeps".into()));
        }
        for axis in &self.axes {
            if axis.values.is_empty() {
                return Err(BoundError::InvalidSpec(format!("axis {} has no values", axis.param)));
            }
            let probe = self.points().into_iter().next().unwrap_or_default();
            self.base_at(&probe)?;
        }
        Ok(())
    }

    /// Parameter assignments in sweep order.
    pub fn points(&self) -> Vec<Vec<(String, f64)>> {
        let mut pts: Vec<Vec<(String, f64)>> = vec![Vec::new()];
        for axis in &self.axes {
            let mut next = Vec::with_capacity(pts.len() * axis.values.len());
            for p in &pts {
                for &v in &axis.values {
                    let mut q = p.clone();
                    q.push((axis.param.clone(), v));
                    next.push(q);
                }
            }
            pts = next;
        }
        pts
    }

    /// Base with the point's parameters applied.
    pub fn base_at(&self, point: &[(String, f64)]) -> Result<SweepBase> {
        let mut base = self.base.clone();
        for (name, v) in point {
            let v = *v;
            let unknown = || Err(BoundError::InvalidSpec(format!("unknown sweep parameter {name}")));
            match &mut base {
                SweepBase::CaseCohort(s) => match name.as_str() {
                    "p0" => s.p0 = v,
                    "theta" => s.theta = v,
                    "h1" => s.h1 = v,
                    "pi0" => s.pi0 = v,
                    _ => return unknown(),
                },
                SweepBase::Stratified(s) => match name.as_str() {
                    "p0" => s.baseline = Baseline::P0(v),
                    "lambda" => s.baseline = Baseline::Lambda(v),
                    "theta" => s.theta = v,
                    "px0" => s.px0 = v,
                    "alpha" => s.alpha = v,
                    "beta" => s.beta = v,
                    "sensitivity" => s.alpha = 1.0 - v,
                    "specificity" => s.beta = 1.0 - v,
                    "pi0" | "pi1" => {
                        let (mut a, mut b) = match s.sampling {
                            StratifiedSampling::Fixed { pi0, pi1 } => (pi0, pi1),
                            _ => (v, v),
                        };
                        if name == "pi0" {
                            a = v
                        } else {
                            b = v
                        }
                        s.sampling = StratifiedSampling::Fixed { pi0: a, pi1: b };
                    }
                    "total" => {
                        s.sampling = match s.sampling {
                            StratifiedSampling::Allocated { rule, .. } => StratifiedSampling::Allocated { rule, total: TotalFraction::Fixed(v) },
                            StratifiedSampling::Fixed { .. } => StratifiedSampling::Fixed { pi0: v, pi1: v },
                        }
                    }
                    _ => return unknown(),
                },
            }
        }
        Ok(base)
    }
}

/// One sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreRow {
    pub params: Vec<(String, f64)>,
    pub i_star: f64,
    pub i_full: f64,
    /// `I* / I_full`.
    pub are_ib: f64,
    pub sp_var: Option<f64>,
    /// `SPvar · I*`.
    pub sp_ratio: Option<f64>,
    pub residual: f64,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreReport {
    pub family: SweepFamily,
    pub rows: Vec<AreRow>,
}

fn model_for(base: &SweepBase) -> Result<(FullDataModel, MissingnessDesign)> {
    match base {
        SweepBase::CaseCohort(s) => case_cohort_model(s),
        SweepBase::Stratified(s) => stratified_model(s),
    }
}

fn sweep_point(spec: &SweepSpec, point: &[(String, f64)]) -> AreRow {
    let failed = |e: BoundError| AreRow {
        params: point.to_vec(),
        i_star: f64::NAN,
        i_full: f64::NAN,
        are_ib: f64::NAN,
        sp_var: None,
        sp_ratio: None,
        residual: f64::NAN,
        converged: false,
        error: Some(e.to_string()),
    };
    let run = || -> Result<AreRow> {
        let base = spec.base_at(point)?;
        let (model, design) = model_for(&base)?;
        let bound = compute_bound(&model, &design, &spec.options)?;
        let r = &bound.report;
        let i_star = r.i_star[0][0];
        let sp_var = match (&base, spec.sp) {
            (SweepBase::CaseCohort(s), true) => Some(sp_asymptotic_variance(s, r.cells.min(spec.options.initial_nodes.max(DEFAULT_NODES)))?.variance),
            _ => None,
        };
        Ok(AreRow {
            params: point.to_vec(),
            i_star,
            i_full: r.i_full[0][0],
            are_ib: r.are[0],
            sp_var,
            sp_ratio: sp_var.map(|v| v * i_star),
            residual: r.residual_norm,
            converged: r.converged,
            error: None,
        })
    };
    run().unwrap_or_else(failed)
}

/// Evaluates every sweep point (in parallel), rows in sweep order.
pub fn run_sweep(spec: &SweepSpec) -> Result<AreReport> {
    spec.validate()?;
    let rows = spec.points().par_iter().map(|p| sweep_point(spec, p)).collect();
    Ok(AreReport { family: spec.family(), rows })
}

/// Published pseudo-likelihood efficiencies (percent), rows by sensitivity
/// and columns by specificity, each over {0.5, 0.7, 0.9}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedTable {
    pub px1: f64,
    pub are_pl: [[f64; 3]; 3],
    pub are_ib: [[f64; 3]; 3],
}

pub const TABLE1_ACCURACY: [f64; 3] = [0.5, 0.7, 0.9];

/// Published values for `P(X = 1) = 0.05` and `0.50`.
pub fn published_table1() -> Vec<PublishedTable> {
    vec![
        PublishedTable {
            px1: 0.05,
            are_pl: [[35.5, 36.5, 40.8], [36.5, 39.6, 47.3], [40.8, 47.3, 60.5]],
            are_ib: [[36.0, 37.8, 45.9], [37.7, 43.0, 55.9], [43.9, 53.0, 70.3]],
        },
        PublishedTable {
            px1: 0.50,
            are_pl: [[52.9, 54.0, 58.4], [54.0, 57.3, 64.7], [58.4, 64.7, 75.8]],
            are_ib: [[53.5, 55.5, 63.2], [55.5, 61.1, 72.0], [62.6, 71.2, 83.6]],
        },
    ]
}

fn default_table1_lambda() -> f64 {
    0.01
}

fn default_thetas() -> Vec<f64> {
    vec![0.0, 1.5f64.ln(), 2f64.ln(), 3f64.ln(), 4f64.ln()]
}

fn default_rule() -> AllocationRule {
    AllocationRule::EqualExpectedCounts
}

fn default_total() -> TotalFraction {
    TotalFraction::ExpectedCases
}

fn default_tolerance() -> f64 {
    1.5
}

fn default_published() -> Vec<PublishedTable> {
    published_table1()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Spec {
    #[serde(default = "default_thetas")]
    pub thetas: Vec<f64>,
    #[serde(default = "default_table1_lambda")]
    pub lambda: f64,
    #[serde(default = "default_rule")]
    pub rule: AllocationRule,
    #[serde(default = "default_total")]
    pub total: TotalFraction,
    /// Allowed deviation from the published ARE(IB), percentage points.
    #[serde(default = "default_tolerance")]
    pub tolerance_pp: f64,
    #[serde(default = "default_published")]
    pub published: Vec<PublishedTable>,
    #[serde(default)]
    pub options: BoundOptions,
}

impl Default for Table1Spec {
    fn default() -> Self {
        Self {
            thetas: default_thetas(),
            lambda: default_table1_lambda(),
            rule: default_rule(),
            total: default_total(),
            tolerance_pp: default_tolerance(),
            published: default_published(),
            options: BoundOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Cell {
    pub theta: f64,
    pub px1: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub pi0: f64,
    pub pi1: f64,
    pub are_pl: f64,
    /// Computed `100 · I*/I_full`.
    pub are_ib: f64,
    pub published_are_ib: f64,
    /// `100 · ARE(PL)/ARE(IB)`.
    pub ratio: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Fit {
    pub theta: f64,
    /// Max |computed − published| over the compared cells, percentage points.
    pub max_deviation_a: f64,
    pub max_deviation_b_last_row: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Report {
    pub cells: Vec<Table1Cell>,
    pub fits: Vec<Table1Fit>,
    pub best_theta: f64,
    /// Whether the best θ reproduces table (a) within tolerance.
    pub reproduced: bool,
}

/// ARE(IB) over the sensitivity × specificity grid for every θ and `P(X = 1)`.
pub fn run_table1(spec: &Table1Spec) -> Result<Table1Report> {
    if spec.thetas.is_empty() {
        return Err(BoundError::InvalidSpec("table needs at least one θ".into()));
    }
    Baseline::Lambda(spec.lambda).validate()?;
    let mut jobs = Vec::new();
    for &theta in &spec.thetas {
        for (ti, table) in spec.published.iter().enumerate() {
            for (r, &sens) in TABLE1_ACCURACY.iter().enumerate() {
                for (c, &spec_) in TABLE1_ACCURACY.iter().enumerate() {
                    jobs.push((theta, ti, r, c, sens, spec_, table.px1));
                }
            }
        }
    }
    let cells: Vec<Table1Cell> = jobs
        .par_iter()
        .map(|&(theta, ti, r, c, sens, spec_, px1)| -> Result<Table1Cell> {
            let s = StratifiedSpec {
                baseline: Baseline::Lambda(spec.lambda),
                theta,
                px0: 1.0 - px1,
                alpha: 1.0 - sens,
                beta: 1.0 - spec_,
                sampling: StratifiedSampling::Allocated { rule: spec.rule, total: spec.total },
            };
            let (pi0, pi1) = s.sampling_fractions()?;
            let (model, design) = stratified_model(&s)?;
            let bound = compute_bound(&model, &design, &spec.options)?;
            let table = &spec.published[ti];
            let are_ib = 100.0 * bound.report.are[0];
            let are_pl = table.are_pl[r][c];
            Ok(Table1Cell {
                theta,
                px1,
                sensitivity: sens,
                specificity: spec_,
                pi0,
                pi1,
                are_pl,
                are_ib,
                published_are_ib: table.are_ib[r][c],
                ratio: 100.0 * are_pl / are_ib,
                converged: bound.report.converged,
            })
        })
        .collect::<Result<_>>()?;
    let fits: Vec<Table1Fit> = spec
        .thetas
        .iter()
        .map(|&theta| {
            let dev = |pred: &dyn Fn(&Table1Cell) -> bool| {
                cells
                    .iter()
                    .filter(|c| c.theta == theta && pred(c))
                    .map(|c| (c.are_ib - c.published_are_ib).abs())
                    .fold(0.0, f64::max)
            };
            Table1Fit {
                theta,
                max_deviation_a: dev(&|c| (c.px1 - 0.05).abs() < 1e-12),
                max_deviation_b_last_row: dev(&|c| (c.px1 - 0.5).abs() < 1e-12 && c.sensitivity == 0.9),
            }
        })
        .collect();
    let best = fits
        .iter()
        .min_by(|a, b| a.max_deviation_a.total_cmp(&b.max_deviation_a))
        .expect("at least one θ");
    Ok(Table1Report { best_theta: best.theta, reproduced: best.max_deviation_a <= spec.tolerance_pp, fits: fits.clone(), cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_cohort_failure_probability_is_p0() {
        let s = CaseCohortSpec::new(0.1, 2f64.ln(), 0.1);
        let (m, _) = case_cohort_model(&s).unwrap();
        assert!((1.0 - m.failure_survival(1.0, 0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn stratified_pmf_recovers_sensitivity() {
        let s = StratifiedSpec {
            baseline: Baseline::P0(0.1),
            theta: 0.3,
            px0: 0.9,
            alpha: 0.2,
            beta: 0.4,
            sampling: StratifiedSampling::Fixed { pi0: 0.1, pi1: 0.1 },
        };
        let h = s.joint_pmf();
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((h[3] / (h[2] + h[3]) - 0.8).abs() < 1e-12);
        assert!((h[0] / (h[0] + h[1]) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn equal_counts_allocation_balances_strata() {
        let st = |mass| Stratum { mass, exposed: 0.1 };
        let pi = allocate_stratified(0.1, [st(0.6), st(0.3)], AllocationRule::EqualExpectedCounts).unwrap();
        assert!((pi[0] * 0.6 - pi[1] * 0.3).abs() < 1e-15);
        assert!(((pi[0] * 0.6 + pi[1] * 0.3) / 0.9 - 0.1).abs() < 1e-15);
        let capped = allocate_stratified(0.6, [st(0.85), st(0.05)], AllocationRule::EqualExpectedCounts).unwrap();
        assert_eq!(capped[1], 1.0);
        assert!(((capped[0] * 0.85 + 0.05) / 0.9 - 0.6).abs() < 1e-12);
        assert!(allocate_stratified(1.2, [st(0.5), st(0.5)], AllocationRule::Proportional).is_err());
    }

    #[test]
    fn neyman_allocation_follows_exposure_spread() {
        let strata = [Stratum { mass: 0.5, exposed: 0.5 }, Stratum { mass: 0.5, exposed: 0.1 }];
        let pi = allocate_stratified(0.1, strata, AllocationRule::Neyman).unwrap();
        assert!((pi[0] / pi[1] - 0.5 / 0.3).abs() < 1e-12);
        assert!((0.5 * (pi[0] + pi[1]) - 0.1).abs() < 1e-15);
        let flat = [Stratum { mass: 0.5, exposed: 0.0 }, Stratum { mass: 0.5, exposed: 1.0 }];
        assert_eq!(allocate_stratified(0.1, flat, AllocationRule::Neyman).unwrap(), [0.1, 0.1]);
    }

    #[test]
    fn sweep_points_are_cartesian() {
        let spec = SweepSpec {
            base: SweepBase::CaseCohort(CaseCohortSpec::new(0.1, 0.0, 0.1)),
            axes: vec![
                SweepAxis { param: "p0".into(), values: vec![0.1, 0.2] },
                SweepAxis { param: "pi0".into(), values: vec![0.1, 0.5, 1.0] },
            ],
            sp: false,
            options: BoundOptions::default(),
        };
        let pts = spec.points();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1], vec![("p0".to_string(), 0.1), ("pi0".to_string(), 0.5)]);
        let bad = SweepSpec { axes: vec![SweepAxis { param: "zeta".into(), values: vec![1.0] }], ..spec };
        assert!(bad.validate().is_err());
    }
}
