//! Library side of the `attrition-ri` command line tool: CSV/JSON I/O and
//! the simulation harness. The inference algorithms live in
//! `attrition-ri-core`; this crate packages them behind a stable CLI.

pub mod io;
pub mod sim;
