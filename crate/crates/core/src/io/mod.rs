//! File formats: long-format series CSV, run configuration, model
//! checkpoints and benchmark reports.

mod checkpoint;
mod config;
mod csv_io;
mod report;

pub use checkpoint::{load_model, save_model, CheckpointModel, ModelCheckpoint, FORMAT_VERSION};
pub use config::{RunConfig, SEED_ENV};
pub use csv_io::{
    ingest_long_csv, read_labels_csv, read_long_csv, read_prior_means, write_class_means, write_imputations, write_labels_csv,
    write_long_csv, write_predictions, PredictionRow,
};
pub use report::{format_table, parse_report, read_report, write_report, report_to_string};
