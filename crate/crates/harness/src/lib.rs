//! Experiment runner and numerical property suites for the feedback learners.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod suites;
