//! Shadow prices within the ε-tube: radius process, retirement walk,
//! martingale tilting on scenario trees, and certificates.

pub mod epsilon;
pub mod walk;

pub use epsilon::{build_epsilon, EpsilonProcess, EpsilonRule};
pub use walk::{retirement_walk, retirement_walk_with, tube_check, tube_slack, RetirementWalk, StoppingRule, TubeReport};
pub mod tilt;
pub use tilt::{tilt_node, Relaxation, TiltMethod, TiltParams, TiltProblem, TiltSolution};
pub mod tree;
pub use tree::{
    build_scenario_tree, martingale_tilt, shadow_price, EdgeReport, ScenarioTree, ShadowPrices, TiltedTree, TreeNode,
    TreeParams, MART_TOL,
};
pub mod certificate;
pub use certificate::{cps_certificate, Certificate, CertificateStatus, NodeRecord};
pub mod probe;
pub use probe::{increment_support_probe, PlaneCoverage, ProbeParams, ProbeReport};
