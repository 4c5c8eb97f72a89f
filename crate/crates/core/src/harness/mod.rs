//! Scenario files, the bundled scenario library and check orchestration.

mod checks;
mod format;
mod report;

pub use checks::{run_checks, sample_points, CheckKind, RunOptions, COVERAGE, DEFAULT_BUDGET};
pub use format::{
    load_scenario, parse_scenario, CheckRequest, Expectations, ImmersionDecl, ManifoldDecl, Sampling, ScenarioDecl, ScenarioFile, WarpDecl,
    DEFAULT_POINTS,
};
pub use report::{CheckRecord, CheckReport, CheckVerdict, Summary};

use crate::error::{Error, Result};

const BUNDLED: &[(&str, &str)] = &[
    ("direct_product", include_str!("../../scenarios/direct_product.dwp")),
    ("polar_plane", include_str!("../../scenarios/polar_plane.dwp")),
    ("sphere_warped", include_str!("../../scenarios/sphere_warped.dwp")),
    ("flat_doubly_warped", include_str!("../../scenarios/flat_doubly_warped.dwp")),
    ("surface_of_revolution_catenoid", include_str!("../../scenarios/surface_of_revolution_catenoid.dwp")),
    ("cylinder_of_revolution", include_str!("../../scenarios/cylinder_of_revolution.dwp")),
    ("generic_4d_doubly_warped", include_str!("../../scenarios/generic_4d_doubly_warped.dwp")),
    ("eigenfunction_case", include_str!("../../scenarios/eigenfunction_case.dwp")),
    ("harmonic_case", include_str!("../../scenarios/harmonic_case.dwp")),
    ("round_sphere", include_str!("../../scenarios/round_sphere.dwp")),
];

/// Names and source text of the bundled scenarios.
pub fn bundled_scenarios() -> &'static [(&'static str, &'static str)] {
    BUNDLED
}

pub fn bundled(name: &str) -> Result<ScenarioFile> {
    let (_, text) =
        BUNDLED.iter().find(|(n, _)| *n == name).ok_or_else(|| Error::Invalid(format!("no bundled scenario named `{name}`")))?;
    parse_scenario(text)
}
