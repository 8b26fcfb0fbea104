//! Core computations for crowdsourced page-load quality-of-experience studies.
//!
//! Everything in this crate is pure and IO-free: filmstrip metrics, capture
//! orchestration over an abstract [`capture::BrowserDriver`], experiment
//! construction, response filtering and the analysis that ties responses back
//! to machine-computed load-time metrics. Only `alloc` is required.
//!
//! File formats, the HTTP service, the DevTools driver and the CLI live in the
//! `qoe-lab` companion crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod capture;
pub mod experiments;
pub mod frame;
pub mod har;
pub mod metrics;
pub mod responses;

pub use frame::{Channels, Filmstrip, Frame, FrameError, Viewport};
pub use har::{HarEntry, HarLog};
pub use metrics::{CompletenessCurve, MetricsError, PltMetrics};
