use infobound_core::*;

fn quick(nodes: usize) -> BoundOptions {
    BoundOptions { initial_nodes: nodes, refine: false, ..Default::default() }
}

fn stratified(p0: f64, sens: f64, spec: f64, sampling: StratifiedSampling) -> StratifiedSpec {
    StratifiedSpec { baseline: Baseline::P0(p0), theta: 2f64.ln(), px0: 0.9, alpha: 1.0 - sens, beta: 1.0 - spec, sampling }
}

fn stratified_are(s: &StratifiedSpec) -> f64 {
    let (m, d) = stratified_model(s).unwrap();
    compute_bound(&m, &d, &quick(60)).unwrap().report.are[0]
}

#[test]
fn sampling_fraction_sweep_reaches_full_efficiency() {
    let spec = SweepSpec {
        base: SweepBase::CaseCohort(CaseCohortSpec::new(0.1, 2f64.ln(), 0.1)),
        axes: vec![SweepAxis { param: "pi0".into(), values: vec![0.05, 0.1, 0.3, 0.6, 1.0] }],
        sp: true,
        options: quick(100),
    };
    let report = run_sweep(&spec).unwrap();
    assert_eq!(report.rows.len(), 5);
    let pis: Vec<f64> = report.rows.iter().map(|r| r.params[0].1).collect();
    assert_eq!(pis, vec![0.05, 0.1, 0.3, 0.6, 1.0]);
    for w in report.rows.windows(2) {
        assert!(w[0].are_ib <= w[1].are_ib);
    }
    let last = report.rows.last().unwrap();
    assert!((last.are_ib - 1.0).abs() < 1e-6);
    assert!((last.sp_ratio.unwrap() - 1.0).abs() < 1e-6);
    assert!(report.rows.iter().all(|r| r.sp_ratio.unwrap() >= 1.0 - 1e-9 && r.converged && r.error.is_none()));
}

#[test]
fn failing_points_are_recorded_per_row() {
    let spec = SweepSpec {
        base: SweepBase::CaseCohort(CaseCohortSpec::new(0.1, 0.0, 0.1)),
        axes: vec![SweepAxis { param: "p0".into(), values: vec![0.1, 1.5, 0.2] }],
        sp: false,
        options: quick(20),
    };
    let report = run_sweep(&spec).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(report.rows[0].error.is_none() && report.rows[2].error.is_none());
    assert!(report.rows[1].error.is_some() && !report.rows[1].converged && report.rows[1].i_star.is_nan());
}

#[test]
fn stratified_sweep_parameters_apply() {
    let spec = SweepSpec {
        base: SweepBase::Stratified(stratified(0.1, 0.5, 0.5, StratifiedSampling::Fixed { pi0: 0.1, pi1: 0.1 })),
        axes: vec![
            SweepAxis { param: "sensitivity".into(), values: vec![0.5, 0.9] },
            SweepAxis { param: "pi1".into(), values: vec![0.1, 0.4] },
        ],
        sp: false,
        options: quick(30),
    };
    let rows = run_sweep(&spec).unwrap().rows;
    assert_eq!(rows.len(), 4);
    assert!(rows[1].are_ib > rows[0].are_ib);
    assert!(rows[2].are_ib > rows[0].are_ib);
    let bad = SweepSpec { sp: true, ..spec };
    assert!(bad.validate().is_err());
}

#[test]
fn surrogate_accuracy_increases_efficiency() {
    let acc = [0.5, 0.7, 0.9];
    let fixed = StratifiedSampling::Fixed { pi0: 0.1, pi1: 0.1 };
    for &sens in &acc {
        let row: Vec<f64> = acc.iter().map(|&sp| stratified_are(&stratified(0.1, sens, sp, fixed))).collect();
        assert!(row[0] < row[1] && row[1] < row[2], "{row:?}");
    }
    for &sp in &acc {
        let col: Vec<f64> = acc.iter().map(|&sens| stratified_are(&stratified(0.1, sens, sp, fixed))).collect();
        assert!(col[0] < col[1] && col[1] < col[2], "{col:?}");
    }
}

#[test]
fn balanced_allocation_beats_proportional_sampling() {
    for p0 in [0.05, 0.2, 0.4] {
        for sens in [0.7, 0.9] {
            for sp in [0.7, 0.9] {
                let alloc = |rule| StratifiedSampling::Allocated { rule, total: TotalFraction::Fixed(0.1) };
                let equal = stratified_are(&stratified(p0, sens, sp, alloc(AllocationRule::EqualExpectedCounts)));
                let prop = stratified_are(&stratified(p0, sens, sp, alloc(AllocationRule::Proportional)));
                assert!(equal >= prop, "p0 {p0} sens {sens} spec {sp}: {equal} < {prop}");
            }
        }
    }
}

#[test]
fn table_passthrough_and_ratio_arithmetic() {
    let spec = Table1Spec { thetas: vec![2f64.ln()], options: quick(40), ..Default::default() };
    let report = run_table1(&spec).unwrap();
    assert_eq!(report.cells.len(), 18);
    let cell = |px1: f64, sens: f64, sp: f64| {
        report.cells.iter().find(|c| c.px1 == px1 && c.sensitivity == sens && c.specificity == sp).unwrap()
    };
    assert_eq!(cell(0.05, 0.9, 0.9).are_pl, 60.5);
    assert_eq!(cell(0.5, 0.7, 0.5).published_are_ib, 55.5);
    for c in &report.cells {
        assert!((c.ratio - 100.0 * c.are_pl / c.are_ib).abs() < 0.05);
    }
    let corner = cell(0.05, 0.5, 0.5);
    assert_eq!(corner.pi0, corner.pi1);
    let classical = CaseCohortSpec { p0: 1.0 - (-0.01f64).exp(), theta: 2f64.ln(), h1: 0.05, pi0: corner.pi0 };
    let (m, d) = case_cohort_model(&classical).unwrap();
    let are = compute_bound(&m, &d, &quick(40)).unwrap().report.are[0];
    assert!((100.0 * are - corner.are_ib).abs() < 1e-8);
}

#[test]
fn neyman_allocation_reproduces_published_bounds() {
    let spec = Table1Spec { thetas: vec![2f64.ln()], rule: AllocationRule::Neyman, options: quick(100), ..Default::default() };
    let report = run_table1(&spec).unwrap();
    for c in &report.cells {
        assert!((c.are_ib - c.published_are_ib).abs() < 0.5, "{c:?}");
    }
    assert!(report.reproduced);
}
