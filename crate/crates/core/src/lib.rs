pub mod analytics;
pub mod baseline;
pub mod config;
pub mod engine;
pub mod evolution;
pub mod expr;
pub mod lattice;
pub mod oracle;
pub mod repair;
pub mod run;
pub mod seed;
pub mod tasks;
