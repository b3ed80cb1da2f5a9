//! Budget-aware automatic algorithm design over a graph of code corrections.

pub mod config;
pub mod correction;
pub mod fitness;
pub mod generator;
pub mod graph;
pub mod runner;
pub mod search;
pub mod surrogate;
pub mod theory;
