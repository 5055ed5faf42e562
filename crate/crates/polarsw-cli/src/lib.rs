//! Batch experiment runner for the `polarsw` coding library.
//!
//! A run is described by a TOML configuration (see [`config`]), executed
//! with fully derived randomness (see [`run`]), and reported as a
//! fixed-header CSV plus a human-readable summary that echoes the
//! configuration (see [`report`]).

pub mod config;
pub mod report;
pub mod run;
