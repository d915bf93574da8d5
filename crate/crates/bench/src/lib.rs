//! Benchmark fixtures.

use infobound_core::{case_cohort_model, grid_for, CaseCohortSpec, FullDataModel, MissingnessDesign, ObservedTables, SamplingTable};

/// Case-cohort design at p0 = 0.1, θ = ln 2, π0 = 0.1.
pub fn case_cohort() -> (FullDataModel, MissingnessDesign) {
    case_cohort_model(&CaseCohortSpec::new(0.1, std::f64::consts::LN_2, 0.1)).expect("valid fixture")
}

pub fn tables(model: &FullDataModel, design: &MissingnessDesign, nodes: usize) -> ObservedTables {
    ObservedTables::build(model, &grid_for(model, design, nodes).expect("grid")).expect("tables")
}

pub fn sampling(model: &FullDataModel, design: &MissingnessDesign) -> SamplingTable {
    design.resolve(model).expect("sampling table")
}
