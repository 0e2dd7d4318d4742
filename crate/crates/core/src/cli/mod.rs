//! Command-line front end: config parsing, result files, and the
//! `run` / `simulate` / `analyze` commands.

pub mod commands;
pub mod config;
pub mod record;

pub use commands::{cmd_analyze, cmd_run, cmd_simulate, summarize, Overrides, Summary};
pub use config::{model_from_config, options_from_config, Config};
pub use record::{DirectionRecord, ResultRecord};
