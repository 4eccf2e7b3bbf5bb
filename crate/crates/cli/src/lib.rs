//! Scenario files, result export and the `gridflex` command line.

pub mod config;
pub mod export;
pub mod ingest;
pub mod plot;
pub mod run;
pub mod table;

pub use config::ScenarioConfig;
pub use ingest::{load_scenario, IngestError};
pub use run::{run, Command, RunError, RunOptions};
pub use table::ParseError;
