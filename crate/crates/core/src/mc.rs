//! Monte Carlo checks of a computed bound: simulate two-phase data from the
//! model and compare empirical moments of the efficient score with the
//! computed information, and the pseudo-likelihood estimator's spread with
//! its asymptotic variance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::designs::{sp_asymptotic_variance, CaseCohortSpec};
use crate::error::{BoundError, Result};
use crate::grid::DEFAULT_NODES;
use crate::model::{FullDataModel, MissingnessDesign, Phase1Scope, SamplingTable};
use crate::operators::{DEvaluator, NuisanceDirection, NuisanceScore, TimeFunction};
use crate::solver::{compute_bound, BoundOptions};
use crate::tables::ObservedTables;

/// Observations per RNG stream.
pub const SHARD_SIZE: usize = 65_536;

/// Kolmogorov critical value `√n D` at level 0.001.
pub const KS_CRITICAL: f64 = 1.949;

/// One subject's observed data. `x` is present only when `r` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub y: f64,
    pub delta: bool,
    pub x: Option<Vec<f64>>,
    pub v: Vec<f64>,
    pub r: bool,
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>()
}

fn exponential(rng: &mut ChaCha8Rng) -> f64 {
    -(1.0 - uniform(rng)).ln()
}

/// Stream `stream` of the generator rooted at `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw_level(pmf: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u = uniform(rng);
    let mut acc = 0.0;
    for (l, p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return l;
        }
    }
    pmf.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Full data `(level, Y, Δ)` for one subject.
fn draw_full(model: &FullDataModel, rng: &mut ChaCha8Rng) -> (usize, f64, bool) {
    let l = draw_level(&model.covariate_pmf, rng);
    let t = model.baseline_hazard.inverse_cumulative(exponential(rng) / model.risk(l));
    let law = &model.censoring[l];
    let e = exponential(rng);
    let mut c = law.hazard.as_ref().map_or(f64::INFINITY, |h| h.inverse_cumulative(e));
    for atom in &law.atoms {
        let u = uniform(rng);
        if atom.time < c && u < atom.prob {
            c = atom.time;
            break;
        }
    }
    let c = c.min(model.tau);
    if t <= c {
        (l, t, true)
    } else {
        (l, c, false)
    }
}

/// Simulates `n` subjects. Shards of [`SHARD_SIZE`] use separate streams, so
/// the sample does not depend on the thread count.
pub fn simulate(model: &FullDataModel, sampling: &SamplingTable, n: usize, seed: u64) -> Result<Vec<Observation>> {
    model.validate()?;
    if n == 0 {
        return Err(BoundError::EmptyDataset);
    }
    let shards = n.div_ceil(SHARD_SIZE);
    let chunks: Vec<Vec<Observation>> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream_rng(seed, s as u64);
            let count = SHARD_SIZE.min(n - s * SHARD_SIZE);
            (0..count)
                .map(|_| {
                    let (l, y, delta) = draw_full(model, &mut rng);
                    let pi = sampling.pi_level(y, delta, l);
                    let r = uniform(&mut rng) < pi;
                    let level = &model.levels[l];
                    Observation { y, delta, x: r.then(|| level.x.clone()), v: level.v.clone(), r }
                })
                .collect()
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub se: f64,
}

/// Mean, variance and SE of `values`, summed in input order.
pub fn empirical_moments(values: &[f64]) -> Result<Moments> {
    let n = values.len();
    if n == 0 {
        return Err(BoundError::EmptyDataset);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let variance = if n > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    Ok(Moments { n, mean, variance, se: (variance / n as f64).sqrt() })
}

/// `E[f | phase-1 statistic]` evaluated at single observations.
struct Phase1Mean<'a> {
    t: &'a ObservedTables,
    scope: Phase1Scope,
    /// Per `(δ, group)` means under `(Δ, V)` conditioning.
    global: [Vec<f64>; 2],
}

impl<'a> Phase1Mean<'a> {
    fn new(t: &'a ObservedTables, scope: Phase1Scope, f: &dyn Fn(f64, bool, usize) -> f64) -> Self {
        let ng = t.n_groups();
        let mut global = [vec![0.0; ng], vec![0.0; ng]];
        if scope == Phase1Scope::DeltaV {
            let mut num = [vec![0.0; ng], vec![0.0; ng]];
            let mut den = [vec![0.0; ng], vec![0.0; ng]];
            for l in 0..t.n_levels() {
                let (g, h) = (t.group(l), t.pmf()[l]);
                for k in 0..t.n_cells() {
                    for j in 0..t.order() {
                        let y = t.point(k, j);
                        num[1][g] += h * t.w_fail(l, k, j) * f(y, true, l);
                        den[1][g] += h * t.w_fail(l, k, j);
                        num[0][g] += h * t.w_cens(l, k, j) * f(y, false, l);
                        den[0][g] += h * t.w_cens(l, k, j);
                    }
                    if t.w_atom(l, k) > 0.0 {
                        let y = t.grid().cell(k).1;
                        num[0][g] += h * t.w_atom(l, k) * f(y, false, l);
                        den[0][g] += h * t.w_atom(l, k);
                    }
                }
            }
            for d in 0..2 {
                for g in 0..ng {
                    global[d][g] = if den[d][g] > 0.0 { num[d][g] / den[d][g] } else { 0.0 };
                }
            }
        }
        Self { t, scope, global }
    }

    fn at(&self, f: &dyn Fn(f64, bool, usize) -> f64, y: f64, delta: bool, group: usize) -> f64 {
        match self.scope {
            Phase1Scope::DeltaV => self.global[delta as usize][group],
            Phase1Scope::YDeltaV => {
                let t = self.t;
                let (mut num, mut den) = (0.0, 0.0);
                for l in (0..t.n_levels()).filter(|&l| t.group(l) == group) {
                    let w = t.pmf()[l] * t.density_at(y, delta, l);
                    if w > 0.0 {
                        num += w * f(y, delta, l);
                        den += w;
                    }
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

/// One comparison of an empirical quantity with its theoretical value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub null: f64,
    pub estimate: f64,
    pub se: f64,
    /// Largest deviation accepted.
    pub allowed: f64,
    pub pass: bool,
}

impl Check {
    fn banded(name: String, null: f64, m: &Moments, multiplier: f64) -> Self {
        let allowed = multiplier * m.se + 1e-12 * null.abs().max(1.0);
        Check { name, null, estimate: m.mean, se: m.se, allowed, pass: (m.mean - null).abs() <= allowed }
    }
}

fn default_n() -> usize {
    200_000
}

fn default_multiplier() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateOptions {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_multiplier")]
    pub se_multiplier: f64,
    #[serde(default)]
    pub bound: BoundOptions,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self { n: default_n(), seed: 0, se_multiplier: default_multiplier(), bound: BoundOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n: usize,
    pub seed: u64,
    pub i_star: Vec<Vec<f64>>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// Nuisance directions probed for orthogonality.
fn probe_directions(t: &ObservedTables) -> Vec<(String, NuisanceDirection)> {
    let mut out = Vec::new();
    for p in 0..3 {
        out.push((format!("lambda_t{p}"), NuisanceDirection::Lambda { a: TimeFunction::monomial(p) }));
    }
    let n = t.n_levels();
    out.push(("lambda_g_1".into(), NuisanceDirection::LambdaG { b: vec![TimeFunction::monomial(0); n] }));
    let tz = (0..n)
        .map(|l| TimeFunction::Polynomial { coefficients: vec![0.0, t.model().covariate(l)[0]] })
        .collect();
    out.push(("lambda_g_tz".into(), NuisanceDirection::LambdaG { b: tz }));
    for c in 0..t.model().dim() {
        out.push((format!("h_z{c}"), NuisanceDirection::centered_covariate(t, c)));
    }
    out
}

/// Kolmogorov distance between a sample of `Y` and its model law, given one
/// covariate level or marginally.
pub fn ks_distance(model: &FullDataModel, level: Option<usize>, ys: &[f64]) -> f64 {
    let mut ys = ys.to_vec();
    ys.sort_by(f64::total_cmp);
    let n = ys.len() as f64;
    let cdf = |y: f64, left: bool| -> f64 {
        if y >= model.tau && !left {
            return 1.0;
        }
        let mut surv = 0.0;
        for l in 0..model.n_levels() {
            let weight = match level {
                Some(k) if k == l => 1.0,
                Some(_) => continue,
                None => model.covariate_pmf[l],
            };
            let law = &model.censoring[l];
            let atoms: f64 = law
                .atoms
                .iter()
                .filter(|a| if left { a.time < y } else { a.time <= y })
                .map(|a| 1.0 - a.prob)
                .product();
            surv += weight * model.failure_survival(y, l) * atoms * (-law.cumulative(y)).exp();
        }
        1.0 - surv
    };
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < ys.len() {
        let y = ys[i];
        let mut j = i;
        while j < ys.len() && ys[j] == y {
            j += 1;
        }
        d = d.max((cdf(y, true) - i as f64 / n).abs()).max((cdf(y, false) - j as f64 / n).abs());
        i = j;
    }
    d
}

/// Simulates from the model and checks the computed efficient score: mean
/// zero, second moment equal to `I*`, orthogonality to observed nuisance
/// scores, and the simulated law of `Y`.
pub fn validate_mc(model: &FullDataModel, design: &MissingnessDesign, options: &ValidateOptions) -> Result<ValidationReport> {
    let bound = compute_bound(model, design, &options.bound)?;
    let t = &bound.tables;
    let sol = &bound.solution;
    let sample = simulate(model, &bound.sampling, options.n, options.seed)?;
    let (groups, vs) = model.phase1_groups();
    let p = model.dim();
    let scope = bound.sampling.phase1();

    let d_evals: Vec<DEvaluator> = sol.u_star.iter().map(|u| DEvaluator::new(t, u)).collect();
    let zetas: Vec<Box<dyn Fn(f64, bool, usize) -> f64 + Sync + '_>> =
        d_evals.iter().map(|e| Box::new(move |y, d, l| e.at(y, d, l)) as Box<dyn Fn(f64, bool, usize) -> f64 + Sync>).collect();
    let probes = probe_directions(t);
    for (_, dir) in &probes {
        dir.validate(t)?;
    }
    let scorers: Vec<NuisanceScore> = probes.iter().map(|(_, dir)| dir.evaluator(t)).collect();
    let nuisance: Vec<Box<dyn Fn(f64, bool, usize) -> f64 + Sync + '_>> = scorers
        .iter()
        .map(|e| Box::new(move |y, d, l| e.at(y, d, l)) as Box<dyn Fn(f64, bool, usize) -> f64 + Sync>)
        .collect();
    let zeta_means: Vec<Phase1Mean> = zetas.iter().map(|f| Phase1Mean::new(t, scope, f.as_ref())).collect();
    let nuis_means: Vec<Phase1Mean> = nuisance.iter().map(|f| Phase1Mean::new(t, scope, f.as_ref())).collect();

    let rows: Vec<(Vec<f64>, Vec<f64>)> = sample
        .par_iter()
        .map(|o| -> Result<(Vec<f64>, Vec<f64>)> {
            let group = vs
                .iter()
                .position(|v| *v == o.v)
                .ok_or_else(|| BoundError::Structural("simulated surrogate not in model".into()))?;
            let level = match &o.x {
                Some(x) => Some(model.level_of(x, &o.v).ok_or_else(|| BoundError::Structural("simulated level not in model".into()))?),
                None => None,
            };
            let pi = bound.sampling.pi(o.y, o.delta, group);
            let k = zetas
                .iter()
                .zip(&zeta_means)
                .map(|(f, m)| {
                    let e = m.at(f.as_ref(), o.y, o.delta, group);
                    match level {
                        Some(l) => f(o.y, o.delta, l) / pi - (1.0 - pi) / pi * e,
                        None => e,
                    }
                })
                .collect();
            let s = nuisance
                .iter()
                .zip(&nuis_means)
                .map(|(f, m)| match level {
                    Some(l) => f(o.y, o.delta, l),
                    None => m.at(f.as_ref(), o.y, o.delta, group),
                })
                .collect();
            debug_assert!(level.is_none_or(|l| groups[l] == group));
            Ok((k, s))
        })
        .collect::<Result<_>>()?;

    let mult = options.se_multiplier;
    let mut checks = Vec::new();
    let column = |f: &dyn Fn(&(Vec<f64>, Vec<f64>)) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    for a in 0..p {
        let m = empirical_moments(&column(&|r| r.0[a]))?;
        checks.push(Check::banded(format!("mean_k{a}"), 0.0, &m, mult));
    }
    for a in 0..p {
        for b in a..p {
            let m = empirical_moments(&column(&|r| r.0[a] * r.0[b]))?;
            checks.push(Check::banded(format!("second_moment_k{a}_k{b}"), bound.report.i_star[a][b], &m, mult));
        }
    }
    for a in 0..p {
        for (j, (name, _)) in probes.iter().enumerate() {
            let m = empirical_moments(&column(&|r| r.0[a] * r.1[j]))?;
            checks.push(Check::banded(format!("orthogonal_k{a}_{name}"), 0.0, &m, mult));
        }
    }
    let ys: Vec<f64> = sample.iter().map(|o| o.y).collect();
    let d = ks_distance(model, None, &ys);
    let n = sample.len() as f64;
    let allowed = KS_CRITICAL / n.sqrt();
    checks.push(Check { name: "ks_y".into(), null: 0.0, estimate: d, se: 1.0 / n.sqrt(), allowed, pass: d <= allowed });

    let pass = checks.iter().all(|c| c.pass);
    Ok(ValidationReport { n: sample.len(), seed: options.seed, i_star: bound.report.i_star.clone(), checks, pass })
}

/// Pseudo-likelihood estimate of θ in a simulated case-cohort study: every
/// failure contributes, risk sets contain only subcohort members at risk.
pub fn sp_estimate(z: &[bool], y: &[f64], delta: &[bool], subcohort: &[bool]) -> Result<f64> {
    let mut at_risk = [Vec::new(), Vec::new()];
    for i in 0..y.len() {
        if subcohort[i] {
            at_risk[z[i] as usize].push(y[i]);
        }
    }
    at_risk.iter_mut().for_each(|v| v.sort_by(f64::total_cmp));
    let counts: Vec<(f64, f64, f64)> = (0..y.len())
        .filter(|&i| delta[i])
        .map(|i| {
            let n = |v: &Vec<f64>| (v.len() - v.partition_point(|&s| s < y[i])) as f64;
            (z[i] as u8 as f64, n(&at_risk[0]), n(&at_risk[1]))
        })
        .filter(|&(_, n0, n1)| n0 + n1 > 0.0)
        .collect();
    if counts.is_empty() {
        return Err(BoundError::RootFinding("no failures with a nonempty risk set".into()));
    }
    let score = |theta: f64| {
        let e = theta.exp();
        counts.iter().map(|&(zi, n0, n1)| zi - e * n1 / (e * n1 + n0)).sum::<f64>()
    };
    let (mut lo, mut hi) = (-1.0, 1.0);
    while score(lo) < 0.0 {
        lo *= 2.0;
        if lo < -64.0 {
            return Err(BoundError::RootFinding("score has no sign change".into()));
        }
    }
    while score(hi) > 0.0 {
        hi *= 2.0;
        if hi > 64.0 {
            return Err(BoundError::RootFinding("score has no sign change".into()));
        }
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if score(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Spread of the pseudo-likelihood estimator over replicate cohorts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpMcReport {
    pub n: usize,
    pub reps: usize,
    pub failed_fits: usize,
    pub mean_estimate: f64,
    /// `n` times the replicate variance.
    pub scaled_variance: f64,
    pub se: f64,
    pub asymptotic_variance: f64,
    pub allowed: f64,
    pub pass: bool,
}

/// Simulates `reps` case-cohort studies of `n` subjects with a Bernoulli(π0)
/// subcohort and compares `n · Var(θ̂)` with the asymptotic variance.
pub fn sp_estimator_variance_mc(spec: &CaseCohortSpec, n: usize, reps: usize, seed: u64, se_multiplier: f64) -> Result<SpMcReport> {
    spec.validate()?;
    if n == 0 || reps < 2 {
        return Err(BoundError::EmptyDataset);
    }
    let lambda = spec.lambda();
    let fits: Vec<Result<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let mut z = Vec::with_capacity(n);
            let mut y = Vec::with_capacity(n);
            let mut delta = Vec::with_capacity(n);
            let mut sub = Vec::with_capacity(n);
            for _ in 0..n {
                let zi = uniform(&mut rng) < spec.h1;
                let t = exponential(&mut rng) / (lambda * (spec.theta * zi as u8 as f64).exp());
                z.push(zi);
                y.push(t.min(1.0));
                delta.push(t <= 1.0);
                sub.push(uniform(&mut rng) < spec.pi0);
            }
            sp_estimate(&z, &y, &delta, &sub)
        })
        .collect();
    let est: Vec<f64> = fits.iter().filter_map(|f| f.as_ref().ok().copied()).collect();
    let failed_fits = reps - est.len();
    let m = empirical_moments(&est)?;
    let k = est.len() as f64;
    let m4 = est.iter().map(|e| (e - m.mean).powi(4)).sum::<f64>() / k;
    let scaled_variance = n as f64 * m.variance;
    let se = n as f64 * ((m4 - m.variance * m.variance).max(0.0) / k).sqrt();
    let asymptotic_variance = sp_asymptotic_variance(spec, DEFAULT_NODES)?.variance;
    let allowed = se_multiplier * se;
    Ok(SpMcReport {
        n,
        reps,
        failed_fits,
        mean_estimate: m.mean,
        scaled_variance,
        se,
        asymptotic_variance,
        allowed,
        pass: failed_fits == 0 && (scaled_variance - asymptotic_variance).abs() <= allowed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::case_cohort_model;

    #[test]
    fn simulation_is_reproducible_and_thread_independent() {
        let (model, design) = case_cohort_model(&CaseCohortSpec::new(0.2, 0.5, 0.3)).unwrap();
        let sampling = design.resolve(&model).unwrap();
        let a = simulate(&model, &sampling, 1000, 7).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| simulate(&model, &sampling, 1000, 7).unwrap());
        assert_eq!(a, b);
        assert!(a.iter().all(|o| o.r == o.x.is_some()));
        assert!(a.iter().filter(|o| o.delta).all(|o| o.r));
    }

    #[test]
    fn moments_of_constant() {
        let m = empirical_moments(&[2.0; 10]).unwrap();
        assert_eq!((m.mean, m.variance, m.se), (2.0, 0.0, 0.0));
        assert!(empirical_moments(&[]).is_err());
    }

    #[test]
    fn sp_estimate_recovers_balanced_null() {
        let z = [false, true, false, true];
        let y = [0.2, 0.3, 1.0, 1.0];
        let delta = [true, true, false, false];
        let sub = [true, true, true, true];
        let est = sp_estimate(&z, &y, &delta, &sub).unwrap();
        let e = est.exp();
        let score = (0.0 - e * 2.0 / (2.0 * e + 2.0)) + (1.0 - e * 2.0 / (2.0 * e + 1.0));
        assert!(score.abs() < 1e-8);
    }
}
