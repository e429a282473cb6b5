//! Time-sensitive question answering: temporal tagging, masked features,
//! fact-store negatives, a contrastive reward and an extractive policy
//! trained with supervised learning followed by PPO.

pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod facts;
pub mod features;
pub mod io;
pub mod optim;
pub mod pipeline;
pub mod policy;
pub mod registry;
pub mod reward;
pub mod tagger;
pub mod time;
pub mod trainer;

pub use error::{Error, Result};
