//! Operator calculus on the discretized spaces.
//!
//! `u ∈ L2(W1)` is represented by cell-constant [`GridFunction`]s. `D` maps
//! them exactly to martingale integrals `∫ u dM`; `R1` and `R2` are the
//! L2-adjoint residual maps restricted to cell-constant functions, so that
//! `R1 ∘ D = I`, `⟨Du, b⟩ = ⟨u, R1 b⟩_W1` and `Π1` hold exactly on the
//! discrete spaces. [`Pointwise`] evaluates the continuous-time `R1`, `R2`
//! for closures and checks the martingale decomposition.

use serde::{Deserialize, Serialize};

use crate::error::{BoundError, Result};
use crate::field::{GridFunction, ScoreField};
use crate::model::{Phase1Scope, SamplingTable};
use crate::tables::ObservedTables;

/// `D u (y, δ, z) = δ u(y, z) − ∫₀ʸ u(t, z) dΛ(t|z)`.
pub fn apply_d(t: &ObservedTables, u: &GridFunction) -> ScoreField {
    let m = t.order();
    let kn = t.n_cells();
    let mut b = t.zero_field();
    for l in 0..t.n_levels() {
        let mut cum = 0.0;
        for k in 0..kn {
            let i = l * kn + k;
            let rate = t.fail_rate(l, k);
            let uk = u.get(l, k);
            let lo = t.grid().cell(k).0;
            for j in 0..m {
                let s = t.point(k, j);
                let before = cum + uk * rate * (s - lo);
                b.fail[i * m + j] = uk - before;
                b.cens[i * m + j] = -before;
            }
            cum += uk * rate * t.grid().weights()[k];
            b.atom[i] = -cum;
        }
    }
    b
}

/// `D u` at an arbitrary observation.
pub fn d_at(t: &ObservedTables, u: &GridFunction, y: f64, delta: bool, l: usize) -> f64 {
    let Some(kc) = t.grid().locate(y) else {
        return 0.0;
    };
    let mut cum = 0.0;
    for k in 0..kc {
        cum += u.get(l, k) * t.fail_rate(l, k) * t.grid().weights()[k];
    }
    let lo = t.grid().cell(kc).0;
    let uk = u.get(l, kc);
    cum += uk * t.fail_rate(l, kc) * (y - lo);
    if delta {
        uk - cum
    } else {
        -cum
    }
}

/// `D u` at single observations with cumulative hazard sums cached per cell.
pub struct DEvaluator<'a> {
    t: &'a ObservedTables,
    u: &'a GridFunction,
    /// `Σ_{k' < k} u λ w` per level, `n_cells + 1` entries each.
    cum: Vec<f64>,
}

impl<'a> DEvaluator<'a> {
    pub fn new(t: &'a ObservedTables, u: &'a GridFunction) -> Self {
        let nc = t.n_cells();
        let mut cum = Vec::with_capacity(t.n_levels() * (nc + 1));
        for l in 0..t.n_levels() {
            let mut acc = 0.0;
            cum.push(acc);
            for k in 0..nc {
                acc += u.get(l, k) * t.fail_rate(l, k) * t.grid().weights()[k];
                cum.push(acc);
            }
        }
        Self { t, u, cum }
    }

    /// Same value as [`d_at`].
    pub fn at(&self, y: f64, delta: bool, l: usize) -> f64 {
        let t = self.t;
        let Some(kc) = t.grid().locate(y) else {
            return 0.0;
        };
        let mut cum = self.cum[l * (t.n_cells() + 1) + kc];
        let lo = t.grid().cell(kc).0;
        let uk = self.u.get(l, kc);
        cum += uk * t.fail_rate(l, kc) * (y - lo);
        if delta {
            uk - cum
        } else {
            -cum
        }
    }
}

/// `R1 b = b(·, 1, z) − E[b | Y > ·, Z = z]`, projected onto cells.
pub fn apply_r1(t: &ObservedTables, b: &ScoreField) -> GridFunction {
    let mean = t.cell_mean_fail(b);
    let future = t.future_mean_projected(b);
    GridFunction::from_fn(t.n_levels(), t.n_cells(), |l, k| {
        if t.in_support(l, k) {
            mean.get(l, k) - future.get(l, k)
        } else {
            0.0
        }
    })
}

/// `R2 b` on the censoring support: cell projections of the continuous part
/// and exact values at atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoringFunction {
    pub continuous: GridFunction,
    /// Per `l * K + k`, the value at node `t_k`.
    pub atom: Vec<f64>,
}

impl CensoringFunction {
    pub fn sup_norm(&self) -> f64 {
        self.atom.iter().fold(self.continuous.sup_norm(), |m, v| m.max(v.abs()))
    }
}

/// `R2 b = b(·, 0, z) − E[b | Y > ·, Z = z]`.
///
/// At an atom with conditional probability 1 the censoring martingale has
/// no increment, and the value is set to 0.
pub fn apply_r2(t: &ObservedTables, b: &ScoreField) -> Result<CensoringFunction> {
    let kn = t.n_cells();
    let mean = t.cell_mean_cens(b);
    let future = t.future_mean_projected(b);
    let continuous = GridFunction::from_fn(t.n_levels(), kn, |l, k| {
        if t.pmf()[l] * t.cens_mass(l, k) > 0.0 {
            mean.get(l, k) - future.get(l, k)
        } else {
            0.0
        }
    });
    let mut atom = vec![0.0; t.n_levels() * kn];
    for l in 0..t.n_levels() {
        if t.pmf()[l] == 0.0 {
            continue;
        }
        let g = t.future_integrals(b, l);
        for k in 0..kn {
            let q = t.atom_hazard(l, k);
            if t.w_atom(l, k) <= 0.0 || q >= 1.0 {
                continue;
            }
            let s = t.surv_end(l, k);
            if s <= 0.0 {
                return Err(BoundError::NumericSupport(format!(
                    "S(y | z) = 0 after atom at {}",
                    t.grid().nodes()[k]
                )));
            }
            atom[l * kn + k] = b.atom[l * kn + k] - g[k + 1] / s;
        }
    }
    Ok(CensoringFunction { continuous, atom })
}

/// `Π1 s = s − E[s(Y, Z) | Y, Δ = 1]`.
pub fn apply_pi1(t: &ObservedTables, s: &GridFunction) -> GridFunction {
    let mean = t.cond_mean_given_failure(s);
    GridFunction::from_fn(t.n_levels(), t.n_cells(), |l, k| {
        if t.in_support(l, k) {
            s.get(l, k) - mean[k]
        } else {
            0.0
        }
    })
}

/// `B s = D Π1 s`.
pub fn apply_b(t: &ObservedTables, s: &GridFunction) -> ScoreField {
    apply_d(t, &apply_pi1(t, s))
}

/// W1-weighted cell projection of `f(t, level)`.
pub fn project(t: &ObservedTables, f: impl Fn(f64, usize) -> f64) -> GridFunction {
    let m = t.order();
    GridFunction::from_fn(t.n_levels(), t.n_cells(), |l, k| {
        let mass = t.fail_mass(l, k);
        if !t.in_support(l, k) {
            return 0.0;
        }
        (0..m).map(|j| t.w_fail(l, k, j) * f(t.point(k, j), l)).sum::<f64>() / mass
    })
}

/// Component `c` of the covariate θ multiplies, as a grid function.
pub fn covariate_grid(t: &ObservedTables, c: usize) -> GridFunction {
    let z: Vec<f64> = (0..t.n_levels()).map(|l| t.model().covariate(l)[c]).collect();
    GridFunction::from_fn(t.n_levels(), t.n_cells(), |l, k| if t.in_support(l, k) { z[l] } else { 0.0 })
}

/// Full-data efficient information `E[Δ (Π1 Z)(Π1 Z)ᵀ]` on the cell space.
pub fn fulldata_information(t: &ObservedTables) -> Vec<Vec<f64>> {
    let d = t.model().dim();
    let pz: Vec<GridFunction> = (0..d).map(|c| apply_pi1(t, &covariate_grid(t, c))).collect();
    (0..d).map(|i| (0..d).map(|j| t.inner_w1(&pz[i], &pz[j])).collect()).collect()
}

/// Full-data efficient information with the failure posterior evaluated at
/// every quadrature point instead of per cell.
pub fn fulldata_information_pointwise(t: &ObservedTables) -> Vec<Vec<f64>> {
    let d = t.model().dim();
    let m = t.order();
    let z: Vec<Vec<f64>> = (0..t.n_levels()).map(|l| t.model().covariate(l)).collect();
    let mut info = vec![vec![0.0; d]; d];
    for k in 0..t.n_cells() {
        for j in 0..m {
            let mut den = 0.0;
            let mut mean = vec![0.0; d];
            for l in 0..t.n_levels() {
                let w = t.pmf()[l] * t.w_fail(l, k, j);
                den += w;
                for c in 0..d {
                    mean[c] += w * z[l][c];
                }
            }
            if den <= 0.0 {
                continue;
            }
            mean.iter_mut().for_each(|v| *v /= den);
            for l in 0..t.n_levels() {
                let w = t.pmf()[l] * t.w_fail(l, k, j);
                for a in 0..d {
                    for c in 0..d {
                        info[a][c] += w * (z[l][a] - mean[a]) * (z[l][c] - mean[c]);
                    }
                }
            }
        }
    }
    info
}

/// Missingness-dependent operators.
#[derive(Debug, Clone)]
pub struct DesignOperators<'a> {
    tables: &'a ObservedTables,
    sampling: &'a SamplingTable,
    pi: ScoreField,
    pi_fail: GridFunction,
}

/// The four terms of `K u`, and their sum.
#[derive(Debug, Clone)]
pub struct KTerms {
    pub future_mean: GridFunction,
    pub weighted_future_mean: GridFunction,
    pub phase1_mean: GridFunction,
    pub augmentation: GridFunction,
    pub total: GridFunction,
}

impl<'a> DesignOperators<'a> {
    pub fn new(tables: &'a ObservedTables, sampling: &'a SamplingTable) -> Result<Self> {
        tables.grid().require_nodes(sampling.bucket_breaks())?;
        if sampling.n_groups() != tables.n_groups() {
            return Err(BoundError::InvalidDesign("design was resolved against another model".into()));
        }
        let pi = tables.field_from_fn(|y, d, l| sampling.pi_level(y, d, l));
        let pi_fail = GridFunction::from_fn(tables.n_levels(), tables.n_cells(), |l, k| {
            pi.fail[(l * tables.n_cells() + k) * tables.order()]
        });
        Ok(Self { tables, sampling, pi, pi_fail })
    }

    pub fn tables(&self) -> &'a ObservedTables {
        self.tables
    }

    pub fn sampling(&self) -> &'a SamplingTable {
        self.sampling
    }

    pub fn phase1(&self) -> Phase1Scope {
        self.sampling.phase1()
    }

    /// π on the observed-data support.
    pub fn pi_field(&self) -> &ScoreField {
        &self.pi
    }

    /// `π(y, 1, v)` per (level, cell).
    pub fn pi_fail(&self) -> &GridFunction {
        &self.pi_fail
    }

    pub fn phase1_mean(&self, b: &ScoreField) -> ScoreField {
        self.tables.cond_mean_phase1(b, self.phase1())
    }

    /// `H u = ((1 − π)/π)(Du − E[Du | phase 1])`.
    pub fn apply_h(&self, u: &GridFunction) -> ScoreField {
        let du = apply_d(self.tables, u);
        let e = self.phase1_mean(&du);
        let ratio = self.pi.map(|p| (1.0 - p) / p);
        ratio.mul(&du.sub(&e))
    }

    /// `T = Π1 ∘ R1 ∘ H`.
    pub fn apply_t(&self, u: &GridFunction) -> GridFunction {
        apply_pi1(self.tables, &apply_r1(self.tables, &self.apply_h(u)))
    }

    /// `u + T u`.
    pub fn apply_route_t(&self, u: &GridFunction) -> GridFunction {
        u.axpy(1.0, &self.apply_t(u))
    }

    pub fn apply_k(&self, u: &GridFunction) -> KTerms {
        let t = self.tables;
        let du = apply_d(t, u);
        let e = self.phase1_mean(&du);
        let over_pi = du.zip_with(&self.pi, |a, p| a / p);
        let aug = e.zip_with(&self.pi, |a, p| (1.0 - p) / p * a);
        let m_du = t.future_mean_projected(&du);
        let m_over = t.future_mean_projected(&over_pi);
        let m_aug = t.future_mean_projected(&aug);
        let e_fail = t.cell_mean_fail(&e);
        let (ln, kn) = (t.n_levels(), t.n_cells());
        let on = |l: usize, k: usize, v: f64| if t.in_support(l, k) { v } else { 0.0 };
        let p = &self.pi_fail;
        let future_mean = GridFunction::from_fn(ln, kn, |l, k| on(l, k, -m_du.get(l, k)));
        let weighted_future_mean =
            GridFunction::from_fn(ln, kn, |l, k| on(l, k, p.get(l, k) * m_over.get(l, k)));
        let phase1_mean =
            GridFunction::from_fn(ln, kn, |l, k| on(l, k, (1.0 - p.get(l, k)) * e_fail.get(l, k)));
        let augmentation =
            GridFunction::from_fn(ln, kn, |l, k| on(l, k, -p.get(l, k) * m_aug.get(l, k)));
        let total = future_mean
            .axpy(1.0, &weighted_future_mean)
            .axpy(1.0, &phase1_mean)
            .axpy(1.0, &augmentation);
        KTerms { future_mean, weighted_future_mean, phase1_mean, augmentation, total }
    }

    /// `E[π(Y, 1, V) | Y ∈ cell, Δ = 1]`.
    pub fn failure_mean_pi(&self) -> Vec<f64> {
        self.tables.cond_mean_given_failure(&self.pi_fail)
    }

    /// Left-hand side of the K-form equation,
    /// `u − K u + (π₁ / E[π₁ | Y, Δ=1]) E[K u | Y, Δ=1]`.
    pub fn apply_route_k(&self, u: &GridFunction) -> GridFunction {
        let t = self.tables;
        let ku = self.apply_k(u).total;
        let e_ku = t.cond_mean_given_failure(&ku);
        let e_pi = self.failure_mean_pi();
        GridFunction::from_fn(t.n_levels(), t.n_cells(), |l, k| {
            if !t.in_support(l, k) {
                return 0.0;
            }
            u.get(l, k) - ku.get(l, k) + self.pi_fail.get(l, k) / e_pi[k] * e_ku[k]
        })
    }

    /// Right-hand side of the K-form equation, `π₁ (z − E[Z | Y, RΔ = 1])`.
    pub fn route_k_rhs(&self, z: &GridFunction) -> GridFunction {
        let t = self.tables;
        let pz = GridFunction::from_fn(t.n_levels(), t.n_cells(), |l, k| self.pi_fail.get(l, k) * z.get(l, k));
        let e_pz = t.cond_mean_given_failure(&pz);
        let e_pi = self.failure_mean_pi();
        GridFunction::from_fn(t.n_levels(), t.n_cells(), |l, k| {
            if !t.in_support(l, k) {
                return 0.0;
            }
            self.pi_fail.get(l, k) * (z.get(l, k) - e_pz[k] / e_pi[k])
        })
    }

    /// Centering function `f_u(Y)` per cell.
    pub fn centering(&self, u: &GridFunction, z: &GridFunction) -> Vec<f64> {
        let t = self.tables;
        let e_ku = t.cond_mean_given_failure(&self.apply_k(u).total);
        let pz = GridFunction::from_fn(t.n_levels(), t.n_cells(), |l, k| self.pi_fail.get(l, k) * z.get(l, k));
        let e_pz = t.cond_mean_given_failure(&pz);
        let e_z = t.cond_mean_given_failure(z);
        let e_pi = self.failure_mean_pi();
        (0..t.n_cells())
            .map(|k| {
                if t.cell_fail_mass(k) <= 0.0 {
                    return 0.0;
                }
                -e_ku[k] / e_pi[k] - (e_pz[k] / e_pi[k] - e_z[k])
            })
            .collect()
    }

    /// `m a = π a + (1 − π) E[a | phase 1]`.
    pub fn apply_m(&self, a: &ScoreField) -> ScoreField {
        let e = self.phase1_mean(a);
        let pa = self.pi.mul(a);
        pa.add(&self.pi.map(|p| 1.0 - p).mul(&e))
    }

    /// `m⁻¹ a = a/π − ((1 − π)/π) E[a | phase 1]`.
    pub fn apply_m_inverse(&self, a: &ScoreField) -> ScoreField {
        let e = self.phase1_mean(a);
        let over = a.zip_with(&self.pi, |x, p| x / p);
        over.sub(&self.pi.map(|p| (1.0 - p) / p).mul(&e))
    }

    /// `E_P[(A f)(A g)] = E_Q[π f g + (1 − π) E[f|U₁] E[g|U₁]]`.
    pub fn observed_inner(&self, f: &ScoreField, g: &ScoreField) -> f64 {
        let ef = self.phase1_mean(f);
        let eg = self.phase1_mean(g);
        let one_minus = self.pi.map(|p| 1.0 - p);
        self.tables.expect(&self.pi.mul(f).mul(g).add(&one_minus.mul(&ef).mul(&eg)))
    }

    /// Observed-data information `E_P[k_i k_j]` for scores `k = A m⁻¹ D u`.
    pub fn information(&self, zetas: &[ScoreField]) -> Vec<Vec<f64>> {
        let g: Vec<ScoreField> = zetas.iter().map(|z| self.apply_m_inverse(z)).collect();
        let d = zetas.len();
        let mut info = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in i..d {
                let v = self.observed_inner(&g[i], &g[j]);
                info[i][j] = v;
                info[j][i] = v;
            }
        }
        info
    }
}

/// Continuous-time residual maps for a closure `b(y, δ, level)`.
pub struct Pointwise<'a, F: Fn(f64, bool, usize) -> f64> {
    t: &'a ObservedTables,
    b: F,
    future: Vec<Vec<f64>>,
    level_mean: Vec<f64>,
    r1_cum: Vec<Vec<f64>>,
    r2_cum: Vec<Vec<f64>>,
}

/// Outcome of the decomposition check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    /// `E[b]`, which should be 0.
    pub mean: f64,
    /// Sup over the support of `|b − [∫R1b dM + ∫R2b dM_G + E(b|Z)]|`.
    pub residual: f64,
    pub r1_sup: f64,
    pub r2_sup: f64,
}

impl<'a, F: Fn(f64, bool, usize) -> f64> Pointwise<'a, F> {
    pub fn new(t: &'a ObservedTables, b: F) -> Self {
        let field = t.field_from_fn(&b);
        let ln = t.n_levels();
        let future = (0..ln).map(|l| t.future_integrals(&field, l)).collect();
        let level_mean = (0..ln).map(|l| t.expect_given_level(&field, l)).collect();
        let mut p = Self { t, b, future, level_mean, r1_cum: Vec::new(), r2_cum: Vec::new() };
        let kn = t.n_cells();
        for l in 0..ln {
            let mut c1 = vec![0.0; kn + 1];
            let mut c2 = vec![0.0; kn + 1];
            for k in 0..kn {
                let (lo, hi) = t.grid().cell(k);
                let i1 = t.rule().integrate(lo, hi, |s| p.r1_at(s, l)) * t.fail_rate(l, k);
                let i2 = if t.cens_rate(l, k) > 0.0 {
                    t.rule().integrate(lo, hi, |s| p.r2_at(s, l)) * t.cens_rate(l, k)
                } else {
                    0.0
                };
                let atom = if t.w_atom(l, k) > 0.0 { t.atom_hazard(l, k) * p.r2_atom(k, l) } else { 0.0 };
                c1[k + 1] = c1[k] + i1;
                c2[k + 1] = c2[k] + i2 + atom;
            }
            p.r1_cum.push(c1);
            p.r2_cum.push(c2);
        }
        p
    }

    /// `∫_{(y, τ]} b dW(·|z_l)`.
    fn future_integral(&self, y: f64, l: usize) -> f64 {
        let t = self.t;
        let Some(k) = t.grid().locate(y) else {
            return 0.0;
        };
        let (lo, hi) = t.grid().cell(k);
        let (lam, gam) = (t.fail_rate(l, k), t.cens_rate(l, k));
        let s0 = t.surv_start(l, k);
        let partial = t.rule().integrate(y, hi, |s| {
            let sv = s0 * (-(lam + gam) * (s - lo)).exp();
            sv * (lam * (self.b)(s, true, l) + gam * (self.b)(s, false, l))
        });
        partial + t.w_atom(l, k) * (self.b)(hi, false, l) + self.future[l][k + 1]
    }

    /// `E[b | Y > y, Z = z_l]`, 0 when nothing survives past `y`.
    pub fn future_mean_at(&self, y: f64, l: usize) -> f64 {
        let s = self.t.survivor_at(y, l);
        if s <= 0.0 {
            return 0.0;
        }
        self.future_integral(y, l) / s
    }

    pub fn r1_at(&self, y: f64, l: usize) -> f64 {
        (self.b)(y, true, l) - self.future_mean_at(y, l)
    }

    pub fn r2_at(&self, y: f64, l: usize) -> f64 {
        (self.b)(y, false, l) - self.future_mean_at(y, l)
    }

    /// `R2 b` at the atom on node `k`; 0 where the atom is certain.
    pub fn r2_atom(&self, k: usize, l: usize) -> f64 {
        if self.t.atom_hazard(l, k) >= 1.0 {
            return 0.0;
        }
        let y = self.t.grid().nodes()[k];
        let s = self.t.surv_end(l, k);
        if s <= 0.0 {
            return 0.0;
        }
        (self.b)(y, false, l) - self.future[l][k + 1] / s
    }

    /// `∫₀ʸ R1b dΛ`, `∫₀ʸ R2b dΛ_G` (atoms at `y` included when `with_atom`).
    fn compensators(&self, y: f64, l: usize, k: usize, with_atom: bool) -> (f64, f64) {
        let t = self.t;
        let lo = t.grid().cell(k).0;
        let c1 = self.r1_cum[l][k] + t.fail_rate(l, k) * t.rule().integrate(lo, y, |s| self.r1_at(s, l));
        let mut c2 = self.r2_cum[l][k];
        if t.cens_rate(l, k) > 0.0 {
            c2 += t.cens_rate(l, k) * t.rule().integrate(lo, y, |s| self.r2_at(s, l));
        }
        if with_atom && t.w_atom(l, k) > 0.0 {
            c2 += t.atom_hazard(l, k) * self.r2_atom(k, l);
        }
        (c1, c2)
    }

    /// Sup-norm residual of `b = ∫R1b dM + ∫R2b dM_G + E[b|Z]` over the support.
    pub fn verify(&self) -> DecompositionReport {
        let t = self.t;
        let m = t.order();
        let mut residual = 0.0f64;
        let mut r1_sup = 0.0f64;
        let mut r2_sup = 0.0f64;
        let mut mean = 0.0;
        for l in 0..t.n_levels() {
            if t.pmf()[l] == 0.0 {
                continue;
            }
            mean += t.pmf()[l] * self.level_mean[l];
            for k in 0..t.n_cells() {
                for j in 0..m {
                    let y = t.point(k, j);
                    let (c1, c2) = self.compensators(y, l, k, false);
                    if t.w_fail(l, k, j) > 0.0 {
                        let r1 = self.r1_at(y, l);
                        r1_sup = r1_sup.max(r1.abs());
                        let rec = r1 - c1 - c2 + self.level_mean[l];
                        residual = residual.max(((self.b)(y, true, l) - rec).abs());
                    }
                    if t.w_cens(l, k, j) > 0.0 {
                        let r2 = self.r2_at(y, l);
                        r2_sup = r2_sup.max(r2.abs());
                        let rec = -c1 + r2 - c2 + self.level_mean[l];
                        residual = residual.max(((self.b)(y, false, l) - rec).abs());
                    }
                }
                if t.w_atom(l, k) > 0.0 {
                    let y = t.grid().nodes()[k];
                    let (c1, c2) = self.compensators(y, l, k, true);
                    let r2 = self.r2_atom(k, l);
                    r2_sup = r2_sup.max(r2.abs());
                    let rec = -c1 + r2 - c2 + self.level_mean[l];
                    residual = residual.max(((self.b)(y, false, l) - rec).abs());
                }
            }
        }
        DecompositionReport { mean, residual, r1_sup, r2_sup }
    }
}

/// Decomposition check for a mean-zero `b`.
pub fn verify_decomposition<F: Fn(f64, bool, usize) -> f64>(t: &ObservedTables, b: F) -> DecompositionReport {
    Pointwise::new(t, b).verify()
}

/// A function of time used to build nuisance directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TimeFunction {
    /// `Σ c_i tⁱ`.
    Polynomial { coefficients: Vec<f64> },
    /// `values[i]` on `(breaks[i-1], breaks[i]]`.
    Step { breaks: Vec<f64>, values: Vec<f64> },
}

impl TimeFunction {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFunction::Polynomial { coefficients } => coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c),
            TimeFunction::Step { breaks, values } => values[breaks.partition_point(|&b| b < t).min(values.len() - 1)],
        }
    }

    pub fn monomial(power: i32) -> Self {
        let mut coefficients = vec![0.0; power as usize + 1];
        coefficients[power as usize] = 1.0;
        TimeFunction::Polynomial { coefficients }
    }
}

/// Direction of a regular parametric submodel for one nuisance component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NuisanceDirection {
    /// Baseline hazard: score `∫ a(t) dM(t)`.
    Lambda { a: TimeFunction },
    /// Censoring hazard: score `∫ b(t, z) dM_G(t)`, one function per level.
    LambdaG { b: Vec<TimeFunction> },
    /// Covariate law: score `c(z)`, mean zero under `h`.
    H { c: Vec<f64> },
}

impl NuisanceDirection {
    pub fn validate(&self, t: &ObservedTables) -> Result<()> {
        match self {
            NuisanceDirection::Lambda { .. } => Ok(()),
            NuisanceDirection::LambdaG { b } if b.len() != t.n_levels() => Err(BoundError::InvalidSpec(
                format!("λ_G direction has {} functions for {} levels", b.len(), t.n_levels()),
            )),
            NuisanceDirection::LambdaG { .. } => Ok(()),
            NuisanceDirection::H { c } => {
                if c.len() != t.n_levels() {
                    return Err(BoundError::InvalidSpec("h direction needs one value per level".into()));
                }
                let mean: f64 = c.iter().zip(t.pmf()).map(|(c, h)| c * h).sum();
                if mean.abs() > 1e-10 {
                    return Err(BoundError::InvalidSpec(format!("h direction has mean {mean}")));
                }
                Ok(())
            }
        }
    }

    /// `c(z) = z_component − E[Z_component]`.
    pub fn centered_covariate(t: &ObservedTables, component: usize) -> Self {
        let z: Vec<f64> = (0..t.n_levels()).map(|l| t.model().covariate(l)[component]).collect();
        let mean: f64 = z.iter().zip(t.pmf()).map(|(z, h)| z * h).sum();
        NuisanceDirection::H { c: z.iter().map(|z| z - mean).collect() }
    }

    /// Full-data score at an observation.
    pub fn score_at(&self, t: &ObservedTables, y: f64, delta: bool, l: usize) -> f64 {
        match self {
            NuisanceDirection::H { c } => c[l],
            NuisanceDirection::Lambda { a } => {
                let Some(kc) = t.grid().locate(y) else {
                    return 0.0;
                };
                let mut cum = 0.0;
                for k in 0..=kc {
                    let (lo, hi) = t.grid().cell(k);
                    let hi = if k == kc { y } else { hi };
                    cum += t.fail_rate(l, k) * t.rule().integrate(lo, hi, |s| a.eval(s));
                }
                if delta {
                    a.eval(y) - cum
                } else {
                    -cum
                }
            }
            NuisanceDirection::LambdaG { b } => {
                let f = &b[l];
                let Some(kc) = t.grid().locate(y) else {
                    return 0.0;
                };
                let at_node = (y - t.grid().nodes()[kc]).abs() <= 1e-12 * t.grid().tau();
                let mut cum = 0.0;
                for k in 0..=kc {
                    let (lo, hi) = t.grid().cell(k);
                    let end = if k == kc { y } else { hi };
                    cum += t.cens_rate(l, k) * t.rule().integrate(lo, end, |s| f.eval(s));
                    if (k < kc || at_node) && t.w_atom(l, k) > 0.0 {
                        cum += t.atom_hazard(l, k) * f.eval(hi);
                    }
                }
                if delta {
                    -cum
                } else {
                    f.eval(y) - cum
                }
            }
        }
    }

    /// Evaluator with the per-cell integrals of [`Self::score_at`] cached.
    pub fn evaluator<'a>(&'a self, t: &'a ObservedTables) -> NuisanceScore<'a> {
        let nc = t.n_cells();
        let mut cum = Vec::new();
        match self {
            NuisanceDirection::H { .. } => {}
            NuisanceDirection::Lambda { a } => {
                for l in 0..t.n_levels() {
                    let mut acc = 0.0;
                    cum.push(acc);
                    for k in 0..nc {
                        let (lo, hi) = t.grid().cell(k);
                        acc += t.fail_rate(l, k) * t.rule().integrate(lo, hi, |s| a.eval(s));
                        cum.push(acc);
                    }
                }
            }
            NuisanceDirection::LambdaG { b } => {
                for (l, f) in b.iter().enumerate() {
                    let mut acc = 0.0;
                    cum.push(acc);
                    for k in 0..nc {
                        let (lo, hi) = t.grid().cell(k);
                        acc += t.cens_rate(l, k) * t.rule().integrate(lo, hi, |s| f.eval(s));
                        if t.w_atom(l, k) > 0.0 {
                            acc += t.atom_hazard(l, k) * f.eval(hi);
                        }
                        cum.push(acc);
                    }
                }
            }
        }
        NuisanceScore { t, dir: self, cum }
    }

    /// Full-data score on the support.
    pub fn score_field(&self, t: &ObservedTables) -> ScoreField {
        t.field_from_fn(|y, d, l| self.score_at(t, y, d, l))
    }
}

/// Cached form of [`NuisanceDirection::score_at`].
pub struct NuisanceScore<'a> {
    t: &'a ObservedTables,
    dir: &'a NuisanceDirection,
    /// Score integrals over whole cells before `k`, `n_cells + 1` per level.
    cum: Vec<f64>,
}

impl NuisanceScore<'_> {
    pub fn at(&self, y: f64, delta: bool, l: usize) -> f64 {
        let t = self.t;
        let start = |kc: usize| self.cum[l * (t.n_cells() + 1) + kc];
        match self.dir {
            NuisanceDirection::H { c } => c[l],
            NuisanceDirection::Lambda { a } => {
                let Some(kc) = t.grid().locate(y) else {
                    return 0.0;
                };
                let lo = t.grid().cell(kc).0;
                let cum = start(kc) + t.fail_rate(l, kc) * t.rule().integrate(lo, y, |s| a.eval(s));
                if delta {
                    a.eval(y) - cum
                } else {
                    -cum
                }
            }
            NuisanceDirection::LambdaG { b } => {
                let f = &b[l];
                let Some(kc) = t.grid().locate(y) else {
                    return 0.0;
                };
                let (lo, hi) = t.grid().cell(kc);
                let at_node = (y - t.grid().nodes()[kc]).abs() <= 1e-12 * t.grid().tau();
                let mut cum = start(kc) + t.cens_rate(l, kc) * t.rule().integrate(lo, y, |s| f.eval(s));
                if at_node && t.w_atom(l, kc) > 0.0 {
                    cum += t.atom_hazard(l, kc) * f.eval(hi);
                }
                if delta {
                    -cum
                } else {
                    f.eval(y) - cum
                }
            }
        }
    }
}
