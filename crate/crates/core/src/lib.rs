//! Tools for measuring and improving the consistency between a cascade's
//! pre-ranking and ranking stages.

pub mod cascade;
pub mod commands;
pub mod config;
pub mod domain;
pub mod error;
pub mod experiment;
pub mod logs;
pub mod metrics;
pub mod model;
pub mod report;
pub mod rng;
pub mod world;

pub use error::{Error, Result};
