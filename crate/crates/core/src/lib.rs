//! Reduced-order simulator for distributed secondary control of islanded
//! AC microgrids protected by a hidden auxiliary control layer.
//!
//! The crate covers graph and spectral tools, the frequency and
//! power-sharing controllers, false-data-injection attack models, link-level
//! detection and isolation, a fixed-step simulator, and post-run checks of
//! the analytic steady-state error bounds.

pub mod analysis;
pub mod attacks;
pub mod batch;
pub mod cases;
pub mod controllers;
pub mod detection;
pub mod graph;
pub mod linalg;
pub mod scenario_file;
pub mod sim;
