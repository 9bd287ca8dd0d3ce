//! Evaluation protocols, run statistics and ablation sweeps.

mod protocol;
mod stats;
mod sweeps;

pub use protocol::{derive_seed, make_random_splits, protocol_splits, truze_classes, Protocol, ProtocolName, Split};
pub use stats::{accuracy, pearson_correlation, score_accuracy_correlation, summarize, t_quantile, SummaryStats};
pub use sweeps::{
    embedder_sweep, observer_combination_sweep, prototype_param_sweep, representation_mode_sweep, SweepRow, SweepTable,
};
