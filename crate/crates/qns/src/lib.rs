//! Discrete time-slot simulator for entanglement-request scheduling on a
//! small-world quantum repeater network.

pub mod cli;
pub mod config;
pub mod deepq;
pub mod engine;
pub mod metrics;
pub mod nettopo;
pub mod qlink;
pub mod rngutil;
pub mod sched;
pub mod traffic;
