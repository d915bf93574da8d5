use infobound_core::*;

fn within(estimate: f64, null: f64, se: f64) -> bool {
    (estimate - null).abs() <= 4.0 * se
}

fn censored_model() -> FullDataModel {
    FullDataModel {
        theta: vec![0.6],
        coefficient_scope: CoefficientScope::Full,
        tau: 1.0,
        baseline_hazard: PiecewiseConstant { breaks: vec![0.4], rates: vec![0.5, 1.5] },
        levels: vec![
            CovariateLevel { x: vec![0.0], v: vec![], index: 0 },
            CovariateLevel { x: vec![1.0], v: vec![], index: 1 },
        ],
        covariate_pmf: vec![0.6, 0.4],
        censoring: vec![
            CensoringLaw { hazard: Some(PiecewiseConstant::constant(0.7)), atoms: vec![CensoringAtom { time: 0.5, prob: 0.3 }] },
            CensoringLaw { hazard: None, atoms: vec![CensoringAtom { time: 0.8, prob: 0.5 }] },
        ],
    }
}

#[test]
fn failure_rate_and_sampling_rate_match_the_model() {
    let (m, d) = case_cohort_model(&CaseCohortSpec::new(0.1, 0.0, 0.1)).unwrap();
    let s = d.resolve(&m).unwrap();
    let data = simulate(&m, &s, 1_000_000, 42).unwrap();
    let n = data.len() as f64;
    let fail = data.iter().filter(|o| o.delta).count() as f64 / n;
    assert!(within(fail, 0.1, (0.1 * 0.9 / n).sqrt()), "{fail}");

    let t = ObservedTables::build(&m, &grid_for(&m, &d, 50).unwrap()).unwrap();
    let ops = DesignOperators::new(&t, &s).unwrap();
    let expected = t.expect(ops.pi_field());
    let sampled = data.iter().filter(|o| o.r).count() as f64 / n;
    assert!(within(sampled, expected, (expected * (1.0 - expected) / n).sqrt()), "{sampled} vs {expected}");
}

#[test]
fn simulation_is_deterministic_per_seed() {
    let m = censored_model();
    let s = MissingnessDesign::by_delta(Phase1Scope::YDeltaV, 1.0, 0.3).resolve(&m).unwrap();
    let a = simulate(&m, &s, 70_000, 9).unwrap();
    let b = simulate(&m, &s, 70_000, 9).unwrap();
    let c = simulate(&m, &s, 70_000, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.iter().all(|o| o.y > 0.0 && o.y <= 1.0 && o.r == o.x.is_some()));
}

#[test]
fn per_level_observed_time_law_passes_ks() {
    let m = censored_model();
    let s = MissingnessDesign::complete(Phase1Scope::YDeltaV).resolve(&m).unwrap();
    let data = simulate(&m, &s, 200_000, 3).unwrap();
    for l in 0..2 {
        let ys: Vec<f64> = data.iter().filter(|o| o.x.as_ref().unwrap()[0] == l as f64).map(|o| o.y).collect();
        let d = ks_distance(&m, Some(l), &ys);
        assert!(d * (ys.len() as f64).sqrt() <= 1.949, "level {l}: D = {d}");
    }
}

#[test]
fn efficient_score_moments_on_small_sample() {
    let (m, d) = case_cohort_model(&CaseCohortSpec::new(0.2, 2f64.ln(), 0.2)).unwrap();
    let opts = ValidateOptions { n: 100_000, seed: 1, bound: BoundOptions { initial_nodes: 100, refine: false, ..Default::default() }, ..Default::default() };
    let report = validate_mc(&m, &d, &opts).unwrap();
    let names: Vec<&str> = report.checks.iter().map(|c| c.name.as_str()).collect();
    for expected in ["mean_k0", "second_moment_k0_k0", "orthogonal_k0_lambda_t0", "orthogonal_k0_lambda_g_tz", "orthogonal_k0_h_z0", "ks_y"] {
        assert!(names.contains(&expected), "{expected}");
    }
    assert!(report.pass, "{:?}", report.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>());
    let strict = validate_mc(&m, &d, &ValidateOptions { se_multiplier: 0.0, ..opts }).unwrap();
    assert!(!strict.pass);
}

#[test]
fn full_data_score_variance_matches_full_information() {
    let m = censored_model();
    let d = MissingnessDesign::complete(Phase1Scope::YDeltaV);
    let opts = ValidateOptions { n: 100_000, seed: 5, bound: BoundOptions { initial_nodes: 100, refine: false, ..Default::default() }, ..Default::default() };
    let report = validate_mc(&m, &d, &opts).unwrap();
    assert!(report.pass, "{:?}", report.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>());
    let second = report.checks.iter().find(|c| c.name == "second_moment_k0_k0").unwrap();
    let t = ObservedTables::build(&m, &grid_for(&m, &d, 100).unwrap()).unwrap();
    assert!((second.null - fulldata_information(&t)[0][0]).abs() < 1e-14);
}

#[test]
fn full_cohort_pseudo_likelihood_attains_full_information() {
    let spec = CaseCohortSpec::new(0.2, 2f64.ln(), 1.0);
    let r = sp_estimator_variance_mc(&spec, 2000, 600, 8, 4.0).unwrap();
    let (m, d) = case_cohort_model(&spec).unwrap();
    let t = ObservedTables::build(&m, &grid_for(&m, &d, 200).unwrap()).unwrap();
    let full = fulldata_information_pointwise(&t)[0][0];
    assert!((r.asymptotic_variance - 1.0 / full).abs() < 1e-9 / full);
    assert!(within(r.scaled_variance, 1.0 / full, r.se), "{r:?}");
    assert_eq!(r.failed_fits, 0);
}

#[test]
fn pseudo_likelihood_variance_exceeds_the_bound() {
    let spec = CaseCohortSpec::new(0.1, 2f64.ln(), 0.1);
    let r = sp_estimator_variance_mc(&spec, 5000, 500, 21, 4.0).unwrap();
    let (m, d) = case_cohort_model(&spec).unwrap();
    let i_star = compute_bound(&m, &d, &BoundOptions { initial_nodes: 200, refine: false, ..Default::default() }).unwrap().report.i_star[0][0];
    assert!(r.scaled_variance >= 1.0 / i_star - 4.0 * r.se);
    assert!(r.pass, "{r:?}");
}
