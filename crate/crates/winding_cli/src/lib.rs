//! Configuration-driven front end for the winding experiments.

pub mod config;
pub mod run;
