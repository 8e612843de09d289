//! Synthetic data, dataset files, the three-step training pipeline,
//! accuracy reports and the command-line front end.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod fixtures;
pub mod metrics;
pub mod pipeline;
pub mod synth;

pub use config::Config;
pub use dataset::{load_dataset, save_dataset, AttributeDataset, Split};
pub use error::{Error, Result};
pub use metrics::{category_averages, to_csv, Category, MetricsReport};
pub use pipeline::{run_pipeline, PipelineOutcome};
pub use synth::{generate_synthetic, AttributeRule, RenderSpec, SynthSpec};
