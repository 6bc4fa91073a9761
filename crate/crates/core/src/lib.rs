//! Anomaly detection for collections of Scratch programs.
//!
//! The pipeline loads a directory of student solutions, turns every script
//! into a control-flow model, computes the temporal properties of each model
//! (which block can run after which), mines closed patterns of properties that
//! many scripts share, and reports scripts that miss part of a pattern most
//! other scripts follow.
//!
//! ```no_run
//! use scratch_anomaly::{ingest, miner::MiningConfig, report::Analysis};
//!
//! let dataset = ingest::load_dataset("solutions/".as_ref()).unwrap();
//! let analysis = Analysis::run(&dataset.projects, &MiningConfig::default());
//! for anomaly in &analysis.detection.anomalies {
//!     println!("{} {}", anomaly.rank, analysis.source_of(anomaly));
//! }
//! ```

pub mod anomaly;
pub mod corpus;
pub mod dot;
pub mod error;
pub mod ingest;
pub mod miner;
pub mod model;
pub mod opcodes;
pub mod props;
pub mod ratio;
pub mod report;

pub use error::{Error, Result};
