//! Listening-test construction and analysis plus objective metrics.

pub mod listening;
pub mod objective;
pub mod report;
pub mod screening;
pub mod stats;

pub use listening::{
    append_rating, build_test_set, read_ratings, validate_rating, ProbeKind, RatingRecord, ReferenceAudio,
    SimilarityCategory, StimulusPair, SystemStimuli, TestKind, TestManifest, TestSetConfig,
};
pub use objective::{feature_profile, objective_lombard_metrics, profile_deltas, wave_profile, LombardDeltas, LombardProfile};
pub use report::{render_report, AlignmentPlot, ReportFiles, ReportInput};
pub use screening::{included_ratings, screen_listeners, ListenerScreenResult, ScreeningConfig};
pub use stats::{
    aggregate_ccr, aggregate_similarity, ccr_observations, similarity_cells, similarity_observations, CcrAggregate,
    CcrConfig, SimilarityAggregate,
};
