pub mod agent;
pub mod config;
pub mod env;
pub mod error;
pub mod experiment;
pub mod fiscal;
pub mod governance;
pub mod income;
pub mod market;
pub mod metrics;
pub mod policy;
pub mod rng;
pub mod trace;
pub mod units;
pub mod world;
