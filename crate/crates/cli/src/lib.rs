//! Batch pipeline around `ringsens-core`: configuration, persistence,
//! plot-ready exports and resumable campaigns.

pub mod campaign;
pub mod config;
pub mod error;
pub mod export;
pub mod io;
pub mod report;
pub mod stages;

pub use campaign::{run_campaign, RunManifest};
pub use config::CampaignConfig;
pub use error::{CliError, Result};
