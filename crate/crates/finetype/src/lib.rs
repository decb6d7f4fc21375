//! Corpus formats, training pipeline, model files, annotation service and
//! command line for fine-grained entity typing.

pub mod cli;
pub mod formats;
pub mod model_file;
pub mod pipeline;
pub mod report;
pub mod serve;
pub mod store;
pub mod synth;
