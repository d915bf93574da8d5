//! Complete-data Cox model and the phase-two sampling design.

use serde::{Deserialize, Serialize};

use crate::error::{BoundError, Result};

/// Piecewise-constant rate. Segment `i` covers `(breaks[i-1], breaks[i]]`,
/// with the first segment starting at 0 and the last one unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstant {
    #[serde(default)]
    pub breaks: Vec<f64>,
    pub rates: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn constant(rate: f64) -> Self {
        Self { breaks: Vec::new(), rates: vec![rate] }
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        if self.rates.len() != self.breaks.len() + 1 {
            return Err(BoundError::InvalidModel(format!(
                "{what}: {} rates for {} breaks (need one more rate than breaks)",
                self.rates.len(),
                self.breaks.len()
            )));
        }
        let mut prev = 0.0;
        for &b in &self.breaks {
            if !(b.is_finite() && b > prev) {
                return Err(BoundError::InvalidModel(format!(
                    "{what}: breaks must be positive and strictly increasing"
                )));
            }
            prev = b;
        }
        for &r in &self.rates {
            if !(r.is_finite() && r >= 0.0) {
                return Err(BoundError::InvalidModel(format!(
                    "{what}: rate {r} is negative or not finite"
                )));
            }
        }
        Ok(())
    }

    fn segment(&self, t: f64) -> usize {
        self.breaks.partition_point(|&b| b < t)
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        self.rates[self.segment(t)]
    }

    /// ∫₀ᵗ rate.
    pub fn cumulative(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let mut total = 0.0;
        let mut lo = 0.0;
        for (i, &b) in self.breaks.iter().enumerate() {
            if t <= b {
                return total + self.rates[i] * (t - lo);
            }
            total += self.rates[i] * (b - lo);
            lo = b;
        }
        total + self.rates[self.breaks.len()] * (t - lo)
    }

    /// Smallest `t` with `cumulative(t) >= target`; infinite if never reached.
    pub fn inverse_cumulative(&self, target: f64) -> f64 {
        if target <= 0.0 {
            return 0.0;
        }
        let mut total = 0.0;
        let mut lo = 0.0;
        for (i, &b) in self.breaks.iter().enumerate() {
            let seg = self.rates[i] * (b - lo);
            if total + seg >= target && self.rates[i] > 0.0 {
                return lo + (target - total) / self.rates[i];
            }
            total += seg;
            lo = b;
        }
        let r = self.rates[self.breaks.len()];
        if r > 0.0 {
            lo + (target - total) / r
        } else {
            f64::INFINITY
        }
    }
}

/// One point of the finite covariate support, `z = (x, v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateLevel {
    pub x: Vec<f64>,
    #[serde(default)]
    pub v: Vec<f64>,
    #[serde(default)]
    pub index: usize,
}

/// Censoring point mass at `time`; `prob` is the conditional probability of
/// being censored there given `C >= time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoringAtom {
    pub time: f64,
    pub prob: f64,
}

/// Censoring law for one covariate level. Anything not censored before τ is
/// censored at τ (administrative end of study).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CensoringLaw {
    #[serde(default)]
    pub hazard: Option<PiecewiseConstant>,
    #[serde(default)]
    pub atoms: Vec<CensoringAtom>,
}

impl CensoringLaw {
    pub fn rate_at(&self, t: f64) -> f64 {
        self.hazard.as_ref().map_or(0.0, |h| h.rate_at(t))
    }

    pub fn cumulative(&self, t: f64) -> f64 {
        self.hazard.as_ref().map_or(0.0, |h| h.cumulative(t))
    }

    /// Conditional atom probability at `t` (exact match only).
    pub fn atom_prob(&self, t: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| (a.time - t).abs() <= 1e-12 * t.abs().max(1.0))
            .map(|a| a.prob)
            .next()
            .unwrap_or(0.0)
    }
}

/// Which covariate components θ multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientScope {
    /// θ′z with z = (x, v).
    Full,
    /// θ′x; V only enters through the design.
    Exposure,
}

/// Complete-data law: Z ~ h, T | Z Cox with baseline λ, C | Z independent of T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullDataModel {
    pub theta: Vec<f64>,
    pub coefficient_scope: CoefficientScope,
    pub tau: f64,
    pub baseline_hazard: PiecewiseConstant,
    pub levels: Vec<CovariateLevel>,
    pub covariate_pmf: Vec<f64>,
    pub censoring: Vec<CensoringLaw>,
}

impl FullDataModel {
    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(BoundError::InvalidModel(m));
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return invalid(format!("τ must be positive, got {}", self.tau));
        }
        let n = self.levels.len();
        if n == 0 {
            return invalid("no covariate levels".into());
        }
        if self.covariate_pmf.len() != n || self.censoring.len() != n {
            return invalid(format!(
                "{n} levels but {} pmf entries and {} censoring laws",
                self.covariate_pmf.len(),
                self.censoring.len()
            ));
        }
        let dx = self.levels[0].x.len();
        let dv = self.levels[0].v.len();
        if dx == 0 {
            return invalid("covariate x must have at least one component".into());
        }
        for (i, level) in self.levels.iter().enumerate() {
            if level.index != i {
                return invalid(format!("level {i} carries index {}", level.index));
            }
            if level.x.len() != dx || level.v.len() != dv {
                return invalid(format!("level {i} has inconsistent covariate dimensions"));
            }
            if level.x.iter().chain(&level.v).any(|c| !c.is_finite()) {
                return invalid(format!("level {i} has a non-finite covariate"));
            }
            for other in &self.levels[..i] {
                if other.x == level.x && other.v == level.v {
                    return invalid(format!("level {i} duplicates level {}", other.index));
                }
            }
        }
        if self.theta.len() != self.dim() {
            return invalid(format!(
                "θ has {} components, covariate has {}",
                self.theta.len(),
                self.dim()
            ));
        }
        if self.theta.iter().any(|t| !t.is_finite()) {
            return invalid("θ must be finite".into());
        }
        let mut total = 0.0;
        for &p in &self.covariate_pmf {
            if !(p.is_finite() && p >= 0.0) {
                return invalid(format!("covariate mass {p} is negative"));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-10 {
            return invalid(format!("covariate pmf sums to {total}"));
        }
        self.baseline_hazard.validate("baseline hazard")?;
        for (i, law) in self.censoring.iter().enumerate() {
            if let Some(h) = &law.hazard {
                h.validate(&format!("censoring hazard of level {i}"))?;
            }
            let mut prev = 0.0;
            for a in &law.atoms {
                if !(a.time > prev && a.time < self.tau) {
                    return invalid(format!(
                        "censoring atoms of level {i} must be increasing inside (0, τ); got {}",
                        a.time
                    ));
                }
                if !(0.0..=1.0).contains(&a.prob) {
                    return invalid(format!("censoring atom probability {} not in [0, 1]", a.prob));
                }
                prev = a.time;
            }
        }
        Ok(())
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// Dimension of θ.
    pub fn dim(&self) -> usize {
        match self.coefficient_scope {
            CoefficientScope::Full => self.levels[0].x.len() + self.levels[0].v.len(),
            CoefficientScope::Exposure => self.levels[0].x.len(),
        }
    }

    /// The covariate vector θ multiplies at level `l`.
    pub fn covariate(&self, l: usize) -> Vec<f64> {
        let level = &self.levels[l];
        match self.coefficient_scope {
            CoefficientScope::Full => level.x.iter().chain(&level.v).copied().collect(),
            CoefficientScope::Exposure => level.x.clone(),
        }
    }

    /// Relative risk `exp(θ′z)`.
    pub fn risk(&self, l: usize) -> f64 {
        self.covariate(l)
            .iter()
            .zip(&self.theta)
            .map(|(z, t)| z * t)
            .sum::<f64>()
            .exp()
    }

    pub fn failure_rate_at(&self, t: f64, l: usize) -> f64 {
        self.risk(l) * self.baseline_hazard.rate_at(t)
    }

    /// `1 − F(t | z)`.
    pub fn failure_survival(&self, t: f64, l: usize) -> f64 {
        (-self.risk(l) * self.baseline_hazard.cumulative(t)).exp()
    }

    /// `P(C > t | z)`, including the administrative atom at τ.
    pub fn censoring_survival(&self, t: f64, l: usize) -> f64 {
        if t >= self.tau {
            return 0.0;
        }
        let law = &self.censoring[l];
        let atoms: f64 = law
            .atoms
            .iter()
            .filter(|a| a.time <= t)
            .map(|a| 1.0 - a.prob)
            .product();
        atoms * (-law.cumulative(t)).exp()
    }

    /// Phase-1 group of every level (levels sharing `v`), and the distinct `v` values.
    pub fn phase1_groups(&self) -> (Vec<usize>, Vec<Vec<f64>>) {
        let mut values: Vec<Vec<f64>> = Vec::new();
        let mut group = Vec::with_capacity(self.levels.len());
        for level in &self.levels {
            let g = match values.iter().position(|v| *v == level.v) {
                Some(g) => g,
                None => {
                    values.push(level.v.clone());
                    values.len() - 1
                }
            };
            group.push(g);
        }
        (group, values)
    }

    pub fn level_of(&self, x: &[f64], v: &[f64]) -> Option<usize> {
        self.levels.iter().position(|l| l.x == x && l.v == v)
    }

    /// Points the time grid has to contain: hazard breaks inside (0, τ) and τ.
    pub fn required_nodes(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self.baseline_hazard.breaks.clone();
        for law in &self.censoring {
            if let Some(h) = &law.hazard {
                pts.extend(&h.breaks);
            }
        }
        pts.retain(|&b| b < self.tau);
        pts.push(self.tau);
        pts
    }

    /// All censoring atom times (without τ).
    pub fn atom_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self
            .censoring
            .iter()
            .flat_map(|law| law.atoms.iter().map(|a| a.time))
            .collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }
}

/// What phase 1 observes, and hence what π may depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase1Scope {
    /// (Y, Δ, V) always observed.
    YDeltaV,
    /// Only (Δ, V) always observed; Y belongs to the phase-2 data.
    DeltaV,
}

/// One row of the sampling table. `bucket` and `v` left out match everything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingEntry {
    #[serde(default)]
    pub bucket: Option<usize>,
    pub delta: u8,
    #[serde(default)]
    pub v: Option<Vec<f64>>,
    pub pi: f64,
}

pub const DEFAULT_SIGMA: f64 = 1e-6;

fn default_sigma() -> f64 {
    DEFAULT_SIGMA
}

/// Phase-two selection probabilities π(y, δ, v).
///
/// Time buckets are `(b_{j-1}, b_j]` over `bucket_breaks`, bucket 0 starting
/// at 0 and the last one ending at τ. Later entries override earlier ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessDesign {
    pub phase1: Phase1Scope,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub bucket_breaks: Vec<f64>,
    pub entries: Vec<SamplingEntry>,
}

impl MissingnessDesign {
    /// π depending on Δ only.
    pub fn by_delta(phase1: Phase1Scope, pi_fail: f64, pi_censored: f64) -> Self {
        Self {
            phase1,
            sigma: DEFAULT_SIGMA,
            bucket_breaks: Vec::new(),
            entries: vec![
                SamplingEntry { bucket: None, delta: 1, v: None, pi: pi_fail },
                SamplingEntry { bucket: None, delta: 0, v: None, pi: pi_censored },
            ],
        }
    }

    /// Everyone measured.
    pub fn complete(phase1: Phase1Scope) -> Self {
        Self::by_delta(phase1, 1.0, 1.0)
    }

    pub fn n_buckets(&self) -> usize {
        self.bucket_breaks.len() + 1
    }

    pub fn bucket_of(&self, y: f64) -> usize {
        self.bucket_breaks.partition_point(|&b| b < y)
    }

    /// Resolves the entries into a full table over (bucket, δ, phase-1 group).
    pub fn resolve(&self, model: &FullDataModel) -> Result<SamplingTable> {
        let invalid = |m: String| Err(BoundError::InvalidDesign(m));
        if !(self.sigma.is_finite() && self.sigma > 0.0 && self.sigma <= 1.0) {
            return invalid(format!("floor σ = {} must lie in (0, 1]", self.sigma));
        }
        if self.phase1 == Phase1Scope::DeltaV && !self.bucket_breaks.is_empty() {
            return invalid("π cannot depend on Y when Y is not observed at phase 1".into());
        }
        let mut prev = 0.0;
        for &b in &self.bucket_breaks {
            if !(b > prev && b < model.tau) {
                return invalid("bucket breaks must be increasing inside (0, τ)".into());
            }
            prev = b;
        }
        let (group, values) = model.phase1_groups();
        let nb = self.n_buckets();
        let ng = values.len();
        let mut pi = vec![f64::NAN; nb * 2 * ng];
        for e in &self.entries {
            if e.delta > 1 {
                return invalid(format!("δ must be 0 or 1, got {}", e.delta));
            }
            if let Some(b) = e.bucket {
                if b >= nb {
                    return invalid(format!("bucket {b} out of range ({nb} buckets)"));
                }
            }
            if !(e.pi.is_finite() && e.pi >= self.sigma && e.pi <= 1.0) {
                return invalid(format!(
                    "π = {} outside [σ, 1] with σ = {}",
                    e.pi, self.sigma
                ));
            }
            let gs: Vec<usize> = match &e.v {
                None => (0..ng).collect(),
                Some(v) => match values.iter().position(|x| x == v) {
                    Some(g) => vec![g],
                    None => return invalid(format!("no covariate level has v = {v:?}")),
                },
            };
            let bs: Vec<usize> = match e.bucket {
                None => (0..nb).collect(),
                Some(b) => vec![b],
            };
            for &b in &bs {
                for &g in &gs {
                    pi[(b * 2 + e.delta as usize) * ng + g] = e.pi;
                }
            }
        }
        if let Some(i) = pi.iter().position(|p| p.is_nan()) {
            let g = i % ng;
            let d = (i / ng) % 2;
            let b = i / (2 * ng);
            return invalid(format!(
                "no sampling probability for bucket {b}, δ = {d}, v = {:?}",
                values[g]
            ));
        }
        Ok(SamplingTable {
            phase1: self.phase1,
            bucket_breaks: self.bucket_breaks.clone(),
            n_groups: ng,
            group,
            pi,
        })
    }
}

/// Fully resolved π over (bucket, δ, phase-1 group).
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingTable {
    phase1: Phase1Scope,
    bucket_breaks: Vec<f64>,
    n_groups: usize,
    group: Vec<usize>,
    pi: Vec<f64>,
}

impl SamplingTable {
    pub fn phase1(&self) -> Phase1Scope {
        self.phase1
    }

    pub fn bucket_breaks(&self) -> &[f64] {
        &self.bucket_breaks
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    /// Phase-1 group of level `l`.
    pub fn group(&self, l: usize) -> usize {
        self.group[l]
    }

    pub fn pi(&self, y: f64, delta: bool, group: usize) -> f64 {
        let b = self.bucket_breaks.partition_point(|&b| b < y);
        self.pi[(b * 2 + delta as usize) * self.n_groups + group]
    }

    /// π for an observation of level `l`.
    pub fn pi_level(&self, y: f64, delta: bool, l: usize) -> f64 {
        self.pi(y, delta, self.group[l])
    }

    /// True when every π equals 1.
    pub fn is_complete(&self) -> bool {
        self.pi.iter().all(|&p| p == 1.0)
    }
}
