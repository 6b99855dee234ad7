pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod ipa;
pub mod model;
pub mod optimizer;
pub mod sim;
