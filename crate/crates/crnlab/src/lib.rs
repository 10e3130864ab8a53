//! Stochastic chemical reaction network laboratory.

pub mod cli;
pub mod harness;
pub mod limits;
pub mod linalg;
pub mod network;
pub mod parser;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod structural;
pub mod triangular;
