pub mod checkpoint;
pub mod dataset;
pub mod config;
pub mod mixture;
pub mod parallel;
pub mod plot;
pub mod report;
pub mod commands;
