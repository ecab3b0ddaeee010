//! Image files, synthetic data, configuration, checkpoints and reports.

mod checkpoint;
mod config;
mod pgm;
mod report;
mod synth;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{apply_train_setting, parse_quality_range, short_hash, train_config_from_file, ConfigFile};
pub use pgm::{load_pgm, load_pgm_dir, parse_pgm, pgm_bytes, save_pgm};
pub use report::{evaluate, report_csv, report_text, sweep_csv, NamedModel, ReportRow, BASELINE_NAME, REPORT_HEADER, SWEEP_HEADER};
pub use synth::{make_synth, synth_image, MIN_SYNTH_SIZE};
