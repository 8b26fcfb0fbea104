//! Disk formats, browser drivers, the campaign service and the `qoe` command
//! line, built on `qoe-core`.

pub mod archive;
pub mod capture_out;
pub mod cdp;
pub mod filmstrip_io;
pub mod har_io;
pub mod json;
pub mod participant;
pub mod service;
