//! Library surface of the `boxpose` binary: argument types, command
//! implementations, the labeled-plane benchmark protocol, and pick-waypoint
//! geometry. Kept as a lib so integration tests drive the same code paths
//! the binary does.

pub mod args;
pub mod commands;
pub mod plane;
pub mod waypoints;

/// Exit code classes: 0 success, 2 usage (clap errors and semantically
/// invalid flag values), 3 input/parse failures, 4 pipeline ran but
/// produced no poses.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_EMPTY: i32 = 4;
