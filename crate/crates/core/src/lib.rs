//! Crawling and analysis of blockchain peer-to-peer overlays.

pub mod addr;
pub mod churn;
pub mod cli;
pub mod config;
pub mod crawler;
pub mod fit;
pub mod graph;
pub mod harness;
pub mod overlap;
pub mod proto;
pub mod resilience;
pub mod snapstore;
pub mod stats;
pub mod transport;
