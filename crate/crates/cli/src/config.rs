//! Run configuration files.

use serde::{Deserialize, Serialize};

use infobound_core::{
    AllocationRule, BoundOptions, CaseCohortSpec, FullDataModel, MissingnessDesign, PublishedTable, Route,
    SolveOptions, StratifiedSpec, SweepAxis, Table1Spec, TotalFraction,
};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Bound,
    Sweep,
    Table1,
    Validate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
pub enum RouteChoice {
    #[default]
    #[value(name = "T")]
    T,
    #[value(name = "K")]
    K,
    #[value(name = "both")]
    #[serde(rename = "both")]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSpec {
    pub model: FullDataModel,
    pub design: MissingnessDesign,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub initial_nodes: usize,
    pub refine: bool,
    pub tolerance: f64,
    pub max_nodes: usize,
    pub gl_order: usize,
    pub solve: SolveOptions,
}

impl Default for GridConfig {
    fn default() -> Self {
        let b = BoundOptions::default();
        Self {
            initial_nodes: b.initial_nodes,
            refine: b.refine,
            tolerance: b.tolerance,
            max_nodes: b.max_nodes,
            gl_order: b.gl_order,
            solve: b.solve,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axes: Vec<SweepAxis>,
    #[serde(default)]
    pub sp: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Table1Config {
    pub thetas: Vec<f64>,
    pub lambda: f64,
    pub rule: AllocationRule,
    pub total: TotalFraction,
    pub tolerance_pp: f64,
    pub published: Vec<PublishedTable>,
}

impl Default for Table1Config {
    fn default() -> Self {
        let t = Table1Spec::default();
        Self { thetas: t.thetas, lambda: t.lambda, rule: t.rule, total: t.total, tolerance_pp: t.tolerance_pp, published: t.published }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpMcConfig {
    pub n: usize,
    pub reps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    pub n: usize,
    pub se_multiplier: f64,
    /// Random functions per operator identity.
    pub identity_samples: usize,
    pub sp_mc: Option<SpMcConfig>,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self { n: 200_000, se_multiplier: 4.0, identity_samples: 100, sp_mc: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub command: Command,
    #[serde(default)]
    pub case_cohort: Option<CaseCohortSpec>,
    #[serde(default)]
    pub stratified: Option<StratifiedSpec>,
    #[serde(default)]
    pub raw: Option<RawSpec>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub route: RouteChoice,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub table1: Option<Table1Config>,
    #[serde(default)]
    pub validate: Option<ValidateConfig>,
}

/// The design a command runs on.
#[derive(Debug, Clone, PartialEq)]
pub enum SpecBlock {
    CaseCohort(CaseCohortSpec),
    Stratified(StratifiedSpec),
    Raw(RawSpec),
}

/// Command-line settings that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub grid_n: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub route: Option<RouteChoice>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &str) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.into(), source })?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(n) = o.grid_n {
            self.grid.initial_nodes = n;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if o.threads.is_some() {
            self.threads = o.threads;
        }
        if let Some(r) = o.route {
            self.route = r;
        }
        self.check()
    }

    /// Structural checks that need no computation.
    pub fn check(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_err(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version)));
        }
        let blocks = [self.case_cohort.is_some(), self.stratified.is_some(), self.raw.is_some()].iter().filter(|b| **b).count();
        match self.command {
            Command::Table1 if blocks != 0 => return Err(config_err("table1 takes no case_cohort, stratified or raw block")),
            Command::Table1 => {}
            _ if blocks != 1 => return Err(config_err("exactly one of case_cohort, stratified or raw is required")),
            _ => {}
        }
        if self.command == Command::Sweep {
            if self.raw.is_some() {
                return Err(config_err("sweeps run on case_cohort or stratified designs"));
            }
            if self.sweep.is_none() {
                return Err(config_err("sweep command needs a sweep block"));
            }
            if self.route == RouteChoice::Both {
                return Err(config_err("route both applies to bound and validate only"));
            }
        }
        if self.command == Command::Table1 && self.route == RouteChoice::Both {
            return Err(config_err("route both applies to bound and validate only"));
        }
        if self.grid.initial_nodes == 0 || self.grid.max_nodes == 0 {
            return Err(config_err("grid node counts must be positive"));
        }
        if !(self.grid.tolerance > 0.0) {
            return Err(config_err("grid tolerance must be positive"));
        }
        if self.threads == Some(0) {
            return Err(config_err("threads must be positive"));
        }
        if let Some(v) = &self.validate {
            if v.n == 0 || !(v.se_multiplier >= 0.0) {
                return Err(config_err("validate needs n > 0 and a nonnegative se_multiplier"));
            }
            if v.sp_mc.is_some() && self.case_cohort.is_none() {
                return Err(config_err("sp_mc needs a case_cohort block"));
            }
        }
        Ok(())
    }

    pub fn spec_block(&self) -> Option<SpecBlock> {
        if let Some(s) = self.case_cohort {
            Some(SpecBlock::CaseCohort(s))
        } else if let Some(s) = self.stratified {
            Some(SpecBlock::Stratified(s))
        } else {
            self.raw.clone().map(SpecBlock::Raw)
        }
    }

    pub fn bound_options(&self, route: Route) -> BoundOptions {
        let g = &self.grid;
        BoundOptions {
            initial_nodes: g.initial_nodes,
            refine: g.refine,
            tolerance: g.tolerance,
            max_nodes: g.max_nodes,
            gl_order: g.gl_order,
            route,
            solve: g.solve,
        }
    }

    /// Single route for commands that do not compare routes.
    pub fn primary_route(&self) -> Route {
        match self.route {
            RouteChoice::K => Route::K,
            _ => Route::T,
        }
    }
}
