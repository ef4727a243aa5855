//! Scoring procedures: precision/recall, three-way agreement with other
//! settlement layers, household coincidence and misalignment-tolerant recall.

mod compare;
mod metrics;
mod summary;

pub use compare::{cross_compare, AgreementTable, CrossComparison, Disagreement};
pub use metrics::{
    household_coincidence, precision_recall, raster_precision_recall, region_recall,
    Coincidence, ConfusionCounts, PrecisionRecall,
};
pub use summary::ValidationSummary;
