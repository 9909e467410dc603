//! Standard-library side of the simulator: scenario files, the epoch-parallel
//! runner, CSV/TOML outputs and the command line.

pub mod cli;
pub mod compare;
pub mod config_io;
pub mod output;
pub mod runner;
