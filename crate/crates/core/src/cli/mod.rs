//! Command-line interface, configuration parsing, and deterministic data
//! emission (CSV, JSON manifests, optional SVG).

pub mod commands;
pub mod config;
pub mod output;

pub use commands::run_command;
pub use config::{merge, parse_config, render, RunSpec};
pub use output::{
    format_sig17, sha256_hex, spectrum_csv, sweep_csv, write_spectrum_csv, write_sweep_csv,
    Manifest,
};
