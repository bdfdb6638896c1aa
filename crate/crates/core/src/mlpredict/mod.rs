//! Random-forest error prediction with and without neutron features.

mod eval;
mod features;
mod forest;

pub use eval::{
    cost_benefit, evaluate_auc, run_experiment, tune, Confusion, EvaluationReport, ExperimentConfig, MitigationParams,
};
pub use features::{
    build_dataset, neutron_stats, permute_group, split_chronological, ticks, undersample_majority, LabeledDataset,
    Target, ERROR_HISTORY, NEUTRON, NEUTRON_SPANS,
};
pub use forest::{default_grid, train_forest, ForestModel, Hyperparameters, ModelParseError, Tree, TreeNode};
