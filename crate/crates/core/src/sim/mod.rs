//! Multi-cell drop-based system simulation.

pub mod campaign;
pub mod config;
pub mod csi;
pub mod engine;
pub mod harq;
pub mod layout;
pub mod link;
pub mod metrics;
pub mod traffic;

use thiserror::Error;

use crate::array::ArrayError;
use crate::channel::ChannelError;
use crate::feedback::FeedbackError;
use crate::linalg::LinalgError;
use crate::precoding::PrecodingError;
use crate::txru::TxruError;

pub use campaign::{run_campaign, run_cells, Aggregate, CampaignResult, CampaignRow};
pub use config::{CsiScheme, SimConfig, TrafficModel};
pub use engine::{run_drop, simulate, DropOutput};
pub use layout::{build_layout, NetworkLayout};
pub use metrics::SimMetrics;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Array(#[from] ArrayError),
    #[error(transparent)]
    Txru(#[from] TxruError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
    #[error(transparent)]
    Precoding(#[from] PrecodingError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}
