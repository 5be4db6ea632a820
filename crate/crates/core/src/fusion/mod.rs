//! Score-level fusion by logistic regression, trained per capture condition
//! or pooled, and exhaustive comparator subset search.

mod logreg;
mod strategy;
mod subset;

pub use logreg::{
    apply_fusion, mean_rule, train_llr, train_llr_traced, training_objective, CalibratedScore, FusionModel,
    TrainedCondition, TrainingMeta, DEFAULT_PRIOR, MAX_ITERATIONS, MIN_DECREASE, RIDGE,
};
pub use strategy::{cross_validated_llrs, required_conditions, train_strategy, Strategy, StrategyModels};
pub use subset::{
    enumerate_subsets, evaluate_subset, rank_order, ranking_column, subset_search, SubsetResult,
    MAX_SEARCH_COMPARATORS,
};
