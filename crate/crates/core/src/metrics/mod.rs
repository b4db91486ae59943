//! Consistency and calibration metrics.

pub mod auc;
pub mod calibration;
pub mod diagnose;
pub mod rcs;

pub use auc::auc;
pub use calibration::{
    calibration_report, ece, pcoc, score_histogram, total_variation, CalibrationBucket,
    CalibrationReport, DEFAULT_BUCKETS,
};
pub use diagnose::{diagnose, DiagnosisRow, DiagnosisTable, ALL_SLOTS};
pub use rcs::{rcs, single_objective_rcs, win_sets, RcsMode, RcsReport, RequestCoverage};
