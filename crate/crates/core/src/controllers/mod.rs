//! Closed-loop secondary controllers with a hidden auxiliary layer.
//!
//! The frequency loop is leader-follower (pinned to the reference through
//! `A = -(L + G)`), the power-sharing loop is leaderless on `L`. Each loop
//! carries its own auxiliary state coupled through the gain `beta`.

mod bounds;
mod frequency;
mod power;

pub use bounds::{bound_epsilon_omega, bound_epsilon_p, h_beta_norm_check};
pub use frequency::{
    build_freq_system, freq_derivative, freq_derivative_baseline, freq_eigen_products, FreqSystem,
};
pub use power::{
    build_power_reduction, power_derivative, power_derivative_baseline, power_eigen_products,
    PowerSystem,
};
pub(crate) use frequency::{freq_derivative_baseline_into, freq_derivative_into};
pub(crate) use power::{power_derivative_baseline_into, power_derivative_into};

use crate::graph::Topology;
use crate::linalg::LinalgError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("invalid control parameters: {0}")]
    InvalidParams(String),
    #[error("frequency control needs at least one pinned leader")]
    NoLeader,
    #[error("communication graph is disconnected")]
    Disconnected,
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Gains shared by both loops.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlParams {
    /// Inter-layer coupling gain.
    pub beta: f64,
    /// Reference angular frequency in rad/s.
    pub omega_ref: f64,
    /// Per-node droop coefficients `m_P`.
    pub droop: Vec<f64>,
}

impl ControlParams {
    pub fn validate(&self, n: usize) -> Result<(), ControlError> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(ControlError::InvalidParams(format!(
                "beta must be > 0, got {}",
                self.beta
            )));
        }
        if !(self.omega_ref.is_finite() && self.omega_ref > 0.0) {
            return Err(ControlError::InvalidParams(format!(
                "omega_ref must be > 0, got {}",
                self.omega_ref
            )));
        }
        if self.droop.len() != n {
            return Err(ControlError::InvalidParams(format!(
                "expected {n} droop coefficients, got {}",
                self.droop.len()
            )));
        }
        if let Some((i, m)) = self
            .droop
            .iter()
            .enumerate()
            .find(|(_, m)| !(m.is_finite() && **m > 0.0))
        {
            return Err(ControlError::InvalidParams(format!(
                "droop coefficient of node {} must be > 0, got {m}",
                i + 1
            )));
        }
        Ok(())
    }
}

fn require_connected(t: &Topology) -> Result<(), ControlError> {
    if t.is_connected() {
        Ok(())
    } else {
        Err(ControlError::Disconnected)
    }
}

fn check_len(name: &str, v: &[f64], n: usize) -> Result<(), ControlError> {
    if v.len() == n {
        Ok(())
    } else {
        Err(ControlError::Shape(format!(
            "{name} has length {}, expected {n}",
            v.len()
        )))
    }
}
