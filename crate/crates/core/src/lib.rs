pub mod experiment;
pub mod forcefield;
pub mod geometry;
pub mod metrics;
pub mod simulator;
pub mod stats;
