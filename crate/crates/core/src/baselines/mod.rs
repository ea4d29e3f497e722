//! Comparison estimators: adjusted regression (with and without
//! treatment interactions) and S-/T-learners over a random forest.

mod forest;
mod linear;
pub mod lstsq;
mod meta;
mod tree;

pub use forest::{fit_forest, ForestConfig, ForestModel};
pub use linear::{fit_adjusted, LinearFitOptions, LinearModel};
pub use meta::{fit_meta, predict_cate_meta, MetaKind, MetaLearner};
pub use tree::{Features, RegressionTree, TreeNode};
