//! Evaluation and experiment orchestration: AUC, relative-AUC decay
//! summaries, and the datasets x algorithms x strategies x rho x replicates
//! grid runner.

mod config;
mod metrics;
mod records;
mod run;

pub use config::{DatasetSpec, DetectorParams, ExperimentConfig};
pub use metrics::auc;
pub use records::{
    decay_to_csv, records_to_csv, relative_auc, summarize_decay, Algorithm, DecayRow, EvalRecord,
    RelativeAuc, Strategy,
};
pub use run::{run_experiment, write_outputs};
