//! Operator identity checks on random elements of the discretized spaces.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::field::{GridFunction, ScoreField};
use crate::mc::{stream_rng, Check};
use crate::model::SamplingTable;
use crate::operators::{apply_d, apply_pi1, apply_r1, apply_r2, verify_decomposition, DesignOperators};
use crate::tables::ObservedTables;

/// Tolerance for identities that hold exactly on the discrete spaces.
pub const EXACT_TOL: f64 = 1e-12;
/// Tolerance for the pointwise martingale decomposition.
pub const DECOMPOSITION_TOL: f64 = 1e-8;

fn random_grid(t: &ObservedTables, rng: &mut ChaCha8Rng) -> GridFunction {
    GridFunction::from_fn(t.n_levels(), t.n_cells(), |l, k| {
        let v = rng.random_range(-1.0..1.0);
        if t.in_support(l, k) {
            v
        } else {
            0.0
        }
    })
}

fn random_field(t: &ObservedTables, rng: &mut ChaCha8Rng) -> ScoreField {
    let mut b = t.zero_field();
    for v in b.fail.iter_mut().chain(b.cens.iter_mut()).chain(b.atom.iter_mut()) {
        *v = rng.random_range(-1.0..1.0);
    }
    b
}

fn check(name: &str, worst: f64, allowed: f64) -> Check {
    Check { name: name.into(), null: 0.0, estimate: worst, se: 0.0, allowed, pass: worst <= allowed }
}

/// Runs every identity on `samples` random functions drawn from stream 0 of
/// `seed`. Each check reports the worst relative deviation.
pub fn operator_identities(t: &ObservedTables, sampling: &SamplingTable, samples: usize, seed: u64) -> Result<Vec<Check>> {
    let ops = DesignOperators::new(t, sampling)?;
    let mask = t.mask();
    let mut rng = stream_rng(seed, 0);
    let mut worst = [0.0f64; 7];
    for _ in 0..samples {
        let u = random_grid(t, &mut rng);
        let b = random_field(t, &mut rng);
        let scale = u.sup_norm().max(f64::MIN_POSITIVE);
        let du = apply_d(t, &u);

        worst[0] = worst[0].max(apply_r1(t, &du).sup_distance(&u) / scale);

        let r2 = apply_r2(t, &du)?;
        worst[1] = worst[1].max(r2.sup_norm() / scale);

        let p = apply_pi1(t, &u);
        worst[2] = worst[2].max(apply_pi1(t, &p).sup_distance(&p) / scale);

        let lhs = t.inner(&du, &b);
        let rhs = t.inner_w1(&u, &apply_r1(t, &b));
        let norm = (t.inner(&du, &du) * t.inner(&b, &b)).sqrt().max(f64::MIN_POSITIVE);
        worst[3] = worst[3].max((lhs - rhs).abs() / norm);

        let uu = t.inner_w1(&u, &u).max(f64::MIN_POSITIVE);
        worst[4] = worst[4].max((t.inner(&du, &du) - uu).abs() / uu);

        let back = ops.apply_m(&ops.apply_m_inverse(&b));
        worst[5] = worst[5].max(back.sub(&b).sup_norm_masked(&mask) / b.sup_norm_masked(&mask).max(f64::MIN_POSITIVE));

        let c: Vec<f64> = (0..t.n_levels() * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let smooth = |y: f64, d: bool, l: usize| {
            let o = l * 6 + if d { 3 } else { 0 };
            c[o] + c[o + 1] * y + c[o + 2] * y * y
        };
        let rep = verify_decomposition(t, smooth);
        let sup = c.iter().fold(0.0f64, |a, v| a.max(v.abs())) * 3.0;
        worst[6] = worst[6].max(rep.residual / sup);
    }
    Ok(vec![
        check("r1_after_d_is_identity", worst[0], EXACT_TOL),
        check("r2_after_d_vanishes", worst[1], EXACT_TOL),
        check("pi1_idempotent", worst[2], EXACT_TOL),
        check("d_r1_adjoint", worst[3], EXACT_TOL),
        check("d_isometry", worst[4], EXACT_TOL),
        check("m_inverse_roundtrip", worst[5], EXACT_TOL),
        check("martingale_decomposition", worst[6], DECOMPOSITION_TOL),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{case_cohort_model, CaseCohortSpec};
    use crate::solver::grid_for;

    #[test]
    fn identities_hold_on_case_cohort() {
        let (m, d) = case_cohort_model(&CaseCohortSpec::new(0.1, 2f64.ln(), 0.1)).unwrap();
        let g = grid_for(&m, &d, 40).unwrap();
        let t = ObservedTables::build(&m, &g).unwrap();
        let s = d.resolve(&m).unwrap();
        let checks = operator_identities(&t, &s, 5, 3).unwrap();
        for c in &checks {
            assert!(c.pass, "{c:?}");
        }
    }
}
