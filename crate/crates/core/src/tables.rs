//! Observed-data law of `(Y, Δ, Z)` on a time grid and its conditional
//! expectations.
//!
//! Within a cell every hazard is constant, so for level `l`
//! `dW1(y|z) = λ_lk S(y|z) dy`, `dW2(y|z) = γ_lk S(y|z) dy` with
//! `S(y|z) = S(t_{k-1}|z) exp(-(λ_lk + γ_lk)(y - t_{k-1}))`, and a censoring
//! atom at `t_k` carries mass `S(t_k-|z) q_lk`. The tables store the
//! Gauss–Legendre weights of these measures so every integral against the
//! observed-data law is a weighted sum.

use crate::error::{BoundError, Result};
use crate::field::{GridFunction, ScoreField, ScoreMask};
use crate::grid::{GaussLegendre, TimeGrid, DEFAULT_GL_ORDER};
use crate::model::{FullDataModel, Phase1Scope};

const TINY: f64 = 1e-300;

#[derive(Debug, Clone)]
pub struct ObservedTables {
    model: FullDataModel,
    grid: TimeGrid,
    rule: GaussLegendre,
    n_levels: usize,
    n_cells: usize,
    order: usize,
    pmf: Vec<f64>,
    risk: Vec<f64>,
    group: Vec<usize>,
    n_groups: usize,
    /// Quadrature abscissae, `k * m + j`.
    points: Vec<f64>,
    /// Baseline rate per cell.
    base_rate: Vec<f64>,
    /// `λ_lk`, `γ_lk`, `q_lk`, per `l * K + k`.
    fail_rate: Vec<f64>,
    cens_rate: Vec<f64>,
    atom_hazard: Vec<f64>,
    /// `S(t_{k-1})`, `S(t_k-)`, `S(t_k)`.
    surv_start: Vec<f64>,
    surv_before: Vec<f64>,
    surv_end: Vec<f64>,
    /// Conditional measures given the level, per point or per cell.
    w_fail: Vec<f64>,
    w_cens: Vec<f64>,
    w_atom: Vec<f64>,
    fail_mass: Vec<f64>,
    cens_mass: Vec<f64>,
    surv_integral: Vec<f64>,
    /// Marginal failure mass per cell, `Σ_l h_l μ1_lk`.
    cell_fail_mass: Vec<f64>,
}

impl ObservedTables {
    pub fn build(model: &FullDataModel, grid: &TimeGrid) -> Result<Self> {
        Self::build_with_order(model, grid, DEFAULT_GL_ORDER)
    }

    pub fn build_with_order(model: &FullDataModel, grid: &TimeGrid, order: usize) -> Result<Self> {
        model.validate()?;
        if (grid.tau() - model.tau).abs() > 1e-12 * model.tau {
            return Err(BoundError::Structural(format!(
                "grid ends at {} but τ = {}",
                grid.tau(),
                model.tau
            )));
        }
        grid.require_nodes(&model.required_nodes())?;
        for t in model.atom_times() {
            if !grid.atom_times().iter().any(|&a| (a - t).abs() <= 1e-12 * model.tau) {
                return Err(BoundError::Structural(format!(
                    "censoring atom at {t} is not listed among the grid atoms"
                )));
            }
        }
        let rule = GaussLegendre::new(order);
        let l_n = model.n_levels();
        let k_n = grid.n_cells();
        let m = order;
        let (group, values) = model.phase1_groups();
        let mut points = Vec::with_capacity(k_n * m);
        let mut base_rate = Vec::with_capacity(k_n);
        for k in 0..k_n {
            let (lo, hi) = grid.cell(k);
            for &x in rule.nodes() {
                points.push(lo + (hi - lo) * x);
            }
            base_rate.push(model.baseline_hazard.rate_at(0.5 * (lo + hi)));
        }
        let n = l_n * k_n;
        let mut t = Self {
            model: model.clone(),
            grid: grid.clone(),
            rule,
            n_levels: l_n,
            n_cells: k_n,
            order: m,
            pmf: model.covariate_pmf.clone(),
            risk: (0..l_n).map(|l| model.risk(l)).collect(),
            group,
            n_groups: values.len(),
            points,
            base_rate,
            fail_rate: vec![0.0; n],
            cens_rate: vec![0.0; n],
            atom_hazard: vec![0.0; n],
            surv_start: vec![0.0; n],
            surv_before: vec![0.0; n],
            surv_end: vec![0.0; n],
            w_fail: vec![0.0; n * m],
            w_cens: vec![0.0; n * m],
            w_atom: vec![0.0; n],
            fail_mass: vec![0.0; n],
            cens_mass: vec![0.0; n],
            surv_integral: vec![0.0; n],
            cell_fail_mass: vec![0.0; k_n],
        };
        for l in 0..l_n {
            let law = &model.censoring[l];
            let mut s = 1.0;
            for k in 0..k_n {
                let i = l * k_n + k;
                let (lo, hi) = grid.cell(k);
                let width = hi - lo;
                let lam = t.risk[l] * t.base_rate[k];
                let gam = law.rate_at(0.5 * (lo + hi));
                let q = if k == k_n - 1 { 1.0 } else { law.atom_prob(hi) };
                t.fail_rate[i] = lam;
                t.cens_rate[i] = gam;
                t.atom_hazard[i] = q;
                t.surv_start[i] = s;
                let (mut mf, mut mc, mut si) = (0.0, 0.0, 0.0);
                for (j, &w) in t.rule.weights().iter().enumerate() {
                    let y = t.points[k * m + j];
                    let sy = s * (-(lam + gam) * (y - lo)).exp();
                    let ww = width * w * sy;
                    t.w_fail[i * m + j] = ww * lam;
                    t.w_cens[i * m + j] = ww * gam;
                    mf += ww * lam;
                    mc += ww * gam;
                    si += ww;
                }
                t.fail_mass[i] = mf;
                t.cens_mass[i] = mc;
                t.surv_integral[i] = si;
                let before = s * (-(lam + gam) * width).exp();
                t.surv_before[i] = before;
                t.w_atom[i] = before * q;
                s = before * (1.0 - q);
                t.surv_end[i] = s;
                t.cell_fail_mass[k] += t.pmf[l] * mf;
            }
        }
        Ok(t)
    }

    pub fn model(&self) -> &FullDataModel {
        &self.model
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn rule(&self) -> &GaussLegendre {
        &self.rule
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn risk(&self, l: usize) -> f64 {
        self.risk[l]
    }

    pub fn group(&self, l: usize) -> usize {
        self.group[l]
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    /// Quadrature point `j` of cell `k`.
    pub fn point(&self, k: usize, j: usize) -> f64 {
        self.points[k * self.order + j]
    }

    pub fn base_rate(&self, k: usize) -> f64 {
        self.base_rate[k]
    }

    pub fn fail_rate(&self, l: usize, k: usize) -> f64 {
        self.fail_rate[l * self.n_cells + k]
    }

    pub fn cens_rate(&self, l: usize, k: usize) -> f64 {
        self.cens_rate[l * self.n_cells + k]
    }

    pub fn atom_hazard(&self, l: usize, k: usize) -> f64 {
        self.atom_hazard[l * self.n_cells + k]
    }

    /// `S(t_{k-1} | z_l)`.
    pub fn surv_start(&self, l: usize, k: usize) -> f64 {
        self.surv_start[l * self.n_cells + k]
    }

    /// `S(t_k- | z_l) = P(Y >= t_k | z_l)`.
    pub fn surv_before(&self, l: usize, k: usize) -> f64 {
        self.surv_before[l * self.n_cells + k]
    }

    /// `S(t_k | z_l) = P(Y > t_k | z_l)`.
    pub fn surv_end(&self, l: usize, k: usize) -> f64 {
        self.surv_end[l * self.n_cells + k]
    }

    /// `S(y | z_l)` at an arbitrary time.
    pub fn survivor_at(&self, y: f64, l: usize) -> f64 {
        if y <= 0.0 {
            return 1.0;
        }
        match self.grid.locate(y) {
            None => 0.0,
            Some(k) => {
                let i = l * self.n_cells + k;
                if (y - self.grid.nodes()[k]).abs() <= 1e-12 * self.grid.tau() {
                    return self.surv_end[i];
                }
                let lo = self.grid.cell(k).0;
                self.surv_start[i] * (-(self.fail_rate[i] + self.cens_rate[i]) * (y - lo)).exp()
            }
        }
    }

    /// Observed-data density of `(y, δ)` given level `l`: the W1 or W2
    /// density, or the atom mass when `δ = 0` and `y` is a censoring atom.
    pub fn density_at(&self, y: f64, delta: bool, l: usize) -> f64 {
        let Some(k) = self.grid.locate(y) else {
            return 0.0;
        };
        if !delta
            && (y - self.grid.nodes()[k]).abs() <= 1e-12 * self.grid.tau()
            && (0..self.n_levels).any(|i| self.w_atom(i, k) > 0.0)
        {
            return self.w_atom(l, k);
        }
        let i = l * self.n_cells + k;
        let lo = self.grid.cell(k).0;
        let s = self.surv_start[i] * (-(self.fail_rate[i] + self.cens_rate[i]) * (y - lo)).exp();
        s * if delta { self.fail_rate[i] } else { self.cens_rate[i] }
    }

    /// W1 quadrature weight at point `j` of cell `k` given level `l`.
    pub fn w_fail(&self, l: usize, k: usize, j: usize) -> f64 {
        self.w_fail[(l * self.n_cells + k) * self.order + j]
    }

    pub fn w_cens(&self, l: usize, k: usize, j: usize) -> f64 {
        self.w_cens[(l * self.n_cells + k) * self.order + j]
    }

    /// Censoring atom mass at `t_k` given level `l`.
    pub fn w_atom(&self, l: usize, k: usize) -> f64 {
        self.w_atom[l * self.n_cells + k]
    }

    /// `W1` mass of cell `k` given level `l`.
    pub fn fail_mass(&self, l: usize, k: usize) -> f64 {
        self.fail_mass[l * self.n_cells + k]
    }

    pub fn cens_mass(&self, l: usize, k: usize) -> f64 {
        self.cens_mass[l * self.n_cells + k]
    }

    /// `∫_cell S(y | z_l) dy`.
    pub fn surv_integral(&self, l: usize, k: usize) -> f64 {
        self.surv_integral[l * self.n_cells + k]
    }

    /// Marginal failure mass of cell `k`.
    pub fn cell_fail_mass(&self, k: usize) -> f64 {
        self.cell_fail_mass[k]
    }

    /// Whether `(l, k)` belongs to the L2(W1) support.
    pub fn in_support(&self, l: usize, k: usize) -> bool {
        self.pmf[l] * self.fail_mass(l, k) > 0.0
    }

    pub fn support_size(&self) -> usize {
        (0..self.n_levels)
            .flat_map(|l| (0..self.n_cells).map(move |k| (l, k)))
            .filter(|&(l, k)| self.in_support(l, k))
            .count()
    }

    /// Support points of the observed-data law.
    pub fn mask(&self) -> ScoreMask {
        let pos = |h: f64, w: f64| h * w > 0.0;
        let m = self.order;
        let mut fail = vec![false; self.w_fail.len()];
        let mut cens = vec![false; self.w_cens.len()];
        let mut atom = vec![false; self.w_atom.len()];
        for l in 0..self.n_levels {
            let h = self.pmf[l];
            for k in 0..self.n_cells {
                let i = l * self.n_cells + k;
                for j in 0..m {
                    fail[i * m + j] = pos(h, self.w_fail[i * m + j]);
                    cens[i * m + j] = pos(h, self.w_cens[i * m + j]);
                }
                atom[i] = pos(h, self.w_atom[i]);
            }
        }
        ScoreMask { fail, cens, atom }
    }

    // ---------------------------------------------------------------- fields

    pub fn zero_field(&self) -> ScoreField {
        ScoreField::zeros(self.n_levels, self.n_cells, self.order)
    }

    pub fn zero_grid(&self) -> GridFunction {
        GridFunction::zeros(self.n_levels, self.n_cells)
    }

    /// Samples `f(y, δ, level)` on the support points.
    pub fn field_from_fn(&self, f: impl Fn(f64, bool, usize) -> f64) -> ScoreField {
        let mut b = self.zero_field();
        let m = self.order;
        for l in 0..self.n_levels {
            for k in 0..self.n_cells {
                let i = l * self.n_cells + k;
                for j in 0..m {
                    let y = self.point(k, j);
                    b.fail[i * m + j] = f(y, true, l);
                    b.cens[i * m + j] = f(y, false, l);
                }
                b.atom[i] = f(self.grid.nodes()[k], false, l);
            }
        }
        b
    }

    /// Field depending on the level only.
    pub fn field_from_level(&self, c: &[f64]) -> ScoreField {
        self.field_from_fn(|_, _, l| c[l])
    }

    // ------------------------------------------------------------ integrals

    /// `E[b | Z = z_l]`.
    pub fn expect_given_level(&self, b: &ScoreField, l: usize) -> f64 {
        let m = self.order;
        let mut total = 0.0;
        for k in 0..self.n_cells {
            let i = l * self.n_cells + k;
            for j in 0..m {
                let p = i * m + j;
                total += self.w_fail[p] * b.fail[p] + self.w_cens[p] * b.cens[p];
            }
            total += self.w_atom[i] * b.atom[i];
        }
        total
    }

    /// `E[b]`.
    pub fn expect(&self, b: &ScoreField) -> f64 {
        (0..self.n_levels)
            .filter(|&l| self.pmf[l] > 0.0)
            .map(|l| self.pmf[l] * self.expect_given_level(b, l))
            .sum()
    }

    /// `E[a b]`.
    pub fn inner(&self, a: &ScoreField, b: &ScoreField) -> f64 {
        self.expect(&a.mul(b))
    }

    /// `∬ u w dW1`.
    pub fn inner_w1(&self, u: &GridFunction, w: &GridFunction) -> f64 {
        let mut total = 0.0;
        for l in 0..self.n_levels {
            for k in 0..self.n_cells {
                total += self.pmf[l] * self.fail_mass(l, k) * u.get(l, k) * w.get(l, k);
            }
        }
        total
    }

    /// Total probability, which should be 1.
    pub fn total_mass(&self) -> f64 {
        let one = self.field_from_fn(|_, _, _| 1.0);
        self.expect(&one)
    }

    /// `G_i = ∫_{(T_i, τ]} b dW(·|z_l)` for `T_0 = 0, T_i = t_i`, `i = 0..=K`.
    pub fn future_integrals(&self, b: &ScoreField, l: usize) -> Vec<f64> {
        let m = self.order;
        let mut g = vec![0.0; self.n_cells + 1];
        for k in (0..self.n_cells).rev() {
            let i = l * self.n_cells + k;
            let mut cell = self.w_atom[i] * b.atom[i];
            for j in 0..m {
                let p = i * m + j;
                cell += self.w_fail[p] * b.fail[p] + self.w_cens[p] * b.cens[p];
            }
            g[k] = g[k + 1] + cell;
        }
        g
    }

    /// `E[b(Y, Δ, Z) | Y > T_i, Z = z_l]` at the nodes `T_0 = 0, …, T_K = τ`.
    /// The value at τ is 0 (empty future).
    pub fn cond_mean_future(&self, b: &ScoreField, l: usize) -> Result<Vec<f64>> {
        let g = self.future_integrals(b, l);
        let mut out = vec![0.0; self.n_cells + 1];
        out[0] = g[0];
        for i in 1..self.n_cells {
            let s = self.surv_end(l, i - 1);
            if s <= TINY {
                return Err(BoundError::NumericSupport(format!(
                    "S(y | z) = 0 at interior node {} for level {l}",
                    self.grid.nodes()[i - 1]
                )));
            }
            out[i] = g[i] / s;
        }
        Ok(out)
    }

    /// Cell averages of `y ↦ E[b | Y > y, Z = z_l]` weighted by `S(y | z_l)`;
    /// these are its projections onto cell-constant functions in L2(W1) and L2(W2).
    pub fn future_mean_projected(&self, b: &ScoreField) -> GridFunction {
        let m = self.order;
        let mut out = self.zero_grid();
        for l in 0..self.n_levels {
            let g = self.future_integrals(b, l);
            for k in 0..self.n_cells {
                let i = l * self.n_cells + k;
                let si = self.surv_integral[i];
                if si <= TINY {
                    continue;
                }
                let (lo, hi) = self.grid.cell(k);
                let mut inner = 0.0;
                for j in 0..m {
                    let p = i * m + j;
                    let s = self.points[k * m + j] - lo;
                    inner += s * (self.w_fail[p] * b.fail[p] + self.w_cens[p] * b.cens[p]);
                }
                let atom_and_beyond = self.w_atom[i] * b.atom[i] + g[k + 1];
                out.set(l, k, ((hi - lo) * atom_and_beyond + inner) / si);
            }
        }
        out
    }

    /// W1-weighted cell averages of `b(·, 1, z_l)`.
    pub fn cell_mean_fail(&self, b: &ScoreField) -> GridFunction {
        self.cell_mean(&self.w_fail, &self.fail_mass, &b.fail)
    }

    /// W2-weighted cell averages of the continuous part of `b(·, 0, z_l)`.
    pub fn cell_mean_cens(&self, b: &ScoreField) -> GridFunction {
        self.cell_mean(&self.w_cens, &self.cens_mass, &b.cens)
    }

    fn cell_mean(&self, w: &[f64], mass: &[f64], v: &[f64]) -> GridFunction {
        let m = self.order;
        let mut out = self.zero_grid();
        for l in 0..self.n_levels {
            for k in 0..self.n_cells {
                let i = l * self.n_cells + k;
                if mass[i] <= 0.0 {
                    continue;
                }
                let s: f64 = (0..m).map(|j| w[i * m + j] * v[i * m + j]).sum();
                out.set(l, k, s / mass[i]);
            }
        }
        out
    }

    /// `E[s(Y, Z) | Y ∈ cell k, Δ = 1]` for a cell-constant `s`.
    pub fn cond_mean_given_failure(&self, s: &GridFunction) -> Vec<f64> {
        (0..self.n_cells)
            .map(|k| {
                let mass = self.cell_fail_mass[k];
                if mass <= 0.0 {
                    return 0.0;
                }
                (0..self.n_levels)
                    .map(|l| self.pmf[l] * self.fail_mass(l, k) * s.get(l, k))
                    .sum::<f64>()
                    / mass
            })
            .collect()
    }

    /// `E[g(Y, Z) | Y = y, Δ = 1]` at every quadrature point, `k * m + j`,
    /// for `g` read from the failure part of a field.
    pub fn cond_mean_given_failure_points(&self, b: &ScoreField) -> Vec<f64> {
        let m = self.order;
        let mut out = vec![0.0; self.n_cells * m];
        for k in 0..self.n_cells {
            for j in 0..m {
                let (mut num, mut den) = (0.0, 0.0);
                for l in 0..self.n_levels {
                    let p = (l * self.n_cells + k) * m + j;
                    let w = self.pmf[l] * self.w_fail[p];
                    num += w * b.fail[p];
                    den += w;
                }
                if den > 0.0 {
                    out[k * m + j] = num / den;
                }
            }
        }
        out
    }

    /// `E[b | phase-1 statistic]`, the statistic being `(Y, Δ, V)` or `(Δ, V)`.
    pub fn cond_mean_phase1(&self, b: &ScoreField, scope: Phase1Scope) -> ScoreField {
        match scope {
            Phase1Scope::YDeltaV => self.cond_mean_ydv(b),
            Phase1Scope::DeltaV => self.cond_mean_dv(b),
        }
    }

    fn cond_mean_ydv(&self, b: &ScoreField) -> ScoreField {
        let m = self.order;
        let kn = self.n_cells;
        let ng = self.n_groups;
        let mut out = self.zero_field();
        let mut num = vec![0.0; ng];
        let mut den = vec![0.0; ng];
        let mut pointwise = |w: &[f64], v: &[f64], out: &mut [f64], at: &dyn Fn(usize) -> usize| {
            num.iter_mut().for_each(|x| *x = 0.0);
            den.iter_mut().for_each(|x| *x = 0.0);
            for l in 0..self.n_levels {
                let p = at(l);
                let wt = self.pmf[l] * w[p];
                num[self.group[l]] += wt * v[p];
                den[self.group[l]] += wt;
            }
            for l in 0..self.n_levels {
                let g = self.group[l];
                out[at(l)] = if den[g] > 0.0 { num[g] / den[g] } else { 0.0 };
            }
        };
        for k in 0..kn {
            for j in 0..m {
                let at = |l: usize| (l * kn + k) * m + j;
                pointwise(&self.w_fail, &b.fail, &mut out.fail, &at);
                pointwise(&self.w_cens, &b.cens, &mut out.cens, &at);
            }
            let at = |l: usize| l * kn + k;
            pointwise(&self.w_atom, &b.atom, &mut out.atom, &at);
        }
        out
    }

    fn cond_mean_dv(&self, b: &ScoreField) -> ScoreField {
        let m = self.order;
        let kn = self.n_cells;
        let ng = self.n_groups;
        let mut num = [vec![0.0; ng], vec![0.0; ng]];
        let mut den = [vec![0.0; ng], vec![0.0; ng]];
        for l in 0..self.n_levels {
            let g = self.group[l];
            let h = self.pmf[l];
            for k in 0..kn {
                let i = l * kn + k;
                for j in 0..m {
                    let p = i * m + j;
                    num[1][g] += h * self.w_fail[p] * b.fail[p];
                    den[1][g] += h * self.w_fail[p];
                    num[0][g] += h * self.w_cens[p] * b.cens[p];
                    den[0][g] += h * self.w_cens[p];
                }
                num[0][g] += h * self.w_atom[i] * b.atom[i];
                den[0][g] += h * self.w_atom[i];
            }
        }
        let mean = |d: usize, g: usize| if den[d][g] > 0.0 { num[d][g] / den[d][g] } else { 0.0 };
        let mut out = self.zero_field();
        for l in 0..self.n_levels {
            let g = self.group[l];
            let (m1, m0) = (mean(1, g), mean(0, g));
            for k in 0..kn {
                let i = l * kn + k;
                for j in 0..m {
                    out.fail[i * m + j] = m1;
                    out.cens[i * m + j] = m0;
                }
                out.atom[i] = m0;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CensoringAtom, CensoringLaw, CoefficientScope, CovariateLevel, PiecewiseConstant};

    fn mixed_model() -> FullDataModel {
        FullDataModel {
            theta: vec![0.7],
            coefficient_scope: CoefficientScope::Full,
            tau: 2.0,
            baseline_hazard: PiecewiseConstant { breaks: vec![0.8], rates: vec![0.4, 0.9] },
            levels: vec![
                CovariateLevel { x: vec![0.0], v: vec![], index: 0 },
                CovariateLevel { x: vec![1.0], v: vec![], index: 1 },
            ],
            covariate_pmf: vec![0.3, 0.7],
            censoring: vec![
                CensoringLaw {
                    hazard: Some(PiecewiseConstant::constant(0.25)),
                    atoms: vec![CensoringAtom { time: 1.5, prob: 0.2 }],
                },
                CensoringLaw::default(),
            ],
        }
    }

    fn tables(n: usize) -> ObservedTables {
        let m = mixed_model();
        let grid = TimeGrid::uniform(m.tau, n, &m.required_nodes(), &m.atom_times()).unwrap();
        ObservedTables::build(&m, &grid).unwrap()
    }

    #[test]
    fn total_mass_is_one() {
        assert!((tables(50).total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn survivor_is_product_of_marginals() {
        let t = tables(40);
        let m = t.model().clone();
        for l in 0..2 {
            for (k, &y) in t.grid().nodes().iter().enumerate() {
                let want = m.failure_survival(y, l) * m.censoring_survival(y, l);
                assert!((t.surv_end(l, k) - want).abs() < 1e-12, "l={l} y={y}");
            }
        }
    }

    #[test]
    fn future_mean_at_zero_is_level_mean() {
        let t = tables(30);
        let b = t.field_from_fn(|y, d, l| y * y + if d { 1.0 } else { -0.5 } + l as f64);
        for l in 0..2 {
            let f = t.cond_mean_future(&b, l).unwrap();
            assert!((f[0] - t.expect_given_level(&b, l)).abs() < 1e-12);
            assert_eq!(f[t.n_cells()], 0.0);
        }
    }

    #[test]
    fn missing_grid_atom_is_structural() {
        let m = mixed_model();
        let grid = TimeGrid::uniform(m.tau, 10, &m.required_nodes(), &[]).unwrap();
        assert!(matches!(ObservedTables::build(&m, &grid), Err(BoundError::Structural(_))));
    }

    #[test]
    fn phase1_mean_of_level_free_field_is_identity() {
        let t = tables(20);
        let b = t.field_from_fn(|y, d, _| y + d as u8 as f64);
        let e = t.cond_mean_phase1(&b, Phase1Scope::YDeltaV);
        let mask = t.mask();
        assert!(e.sub(&b).sup_norm_masked(&mask) < 1e-14);
    }
}
