//! Library side of the `trend` command: configuration loading and the
//! subcommand implementations, so tests can drive them without a process.

pub mod commands;
pub mod config;

use trend_core::TrendError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CHECKPOINT: i32 = 3;

/// Process exit code for an error.
pub fn exit_code(err: &TrendError) -> i32 {
    match err {
        TrendError::Checkpoint(_) => EXIT_CHECKPOINT,
        e if e.is_input_error() => EXIT_INPUT,
        _ => EXIT_FAILURE,
    }
}
