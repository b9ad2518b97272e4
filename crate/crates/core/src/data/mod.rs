//! Dataset ingestion, scaling, train/test splitting and synthetic data.

mod dataset;
pub mod iforest;
mod normalize;
mod split;
pub mod synthetic;

pub use dataset::{load_csv, Dataset, LoadReport, MAX_REJECTED_FRACTION};
pub use iforest::{average_path_length, score_from_path_length, ForestParams, IsolationForest};
pub use normalize::{NormalizationMeta, TargetScaling};
pub use split::{outlier_split, outlier_test_size, random_split, random_test_size, SplitIndices, StatDiff};
