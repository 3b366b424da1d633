//! Scenario trees for RES forecast errors and the rolling-planning driver.

mod rolling;
mod tree;

pub use rolling::{
    rolling_run, rolling_run_with, Fallback, InsecureStep, RollingError, RollingOptions, RollingOutcome, TracePath,
};
pub use tree::{
    branch_probabilities, build_tree, realized_trace, ForecastErrorModel, ScenarioError,
    ScenarioTree, TreeNode,
};
