//! Fixed-step simulation of the stacked state
//! `(omega, z_omega, m_P P, z_P, d_omega, d_P)`.
//!
//! Events (attack activations, link windows, load steps and link
//! isolations) sit on grid points. At each grid point the events are applied
//! first, the sample is recorded, and then the next step is integrated.

mod engine;
mod oracle;
mod scenario;
mod trace;

pub use engine::{apply_load_event, run, run_without_auxiliary};
pub use oracle::closed_form_oracle;
pub use scenario::{
    AuxInit, DetectionSettings, InitialConditions, Integration, LoadEvent, Scenario, ScenarioError, DEFAULT_STEP,
};
pub use trace::{format_g12, Channel, Series, SimState, Trace};

use crate::controllers::ControlError;
use crate::detection::DetectionError;
use crate::linalg::LinalgError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("state diverged at t = {time} s")]
    Diverged { time: f64 },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("{0}")]
    Unsupported(String),
}
