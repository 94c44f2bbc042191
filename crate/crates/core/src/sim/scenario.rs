use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attacks::{Attack, AttackError, AttackTarget};
use crate::controllers::{ControlError, ControlParams};
use crate::detection::{DEFAULT_DWELL, DEFAULT_THRESHOLD};
use crate::graph::Topology;

pub const DEFAULT_STEP: f64 = 1e-3;
const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Attack(#[from] AttackError),
}

/// Initial auxiliary state: seeded uniform draw on `[-1, 1]` or explicit values.
#[derive(Debug, Clone, PartialEq)]
pub enum AuxInit {
    Random,
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialConditions {
    /// rad/s.
    pub omega: Vec<f64>,
    /// Active power per generator in W.
    pub power: Vec<f64>,
    pub z_seed: u64,
    pub z_omega: AuxInit,
    pub z_p: AuxInit,
}

impl InitialConditions {
    /// Resolves both auxiliary vectors. The random stream always draws
    /// `z_omega` first and then `z_p`, so overriding one of them does not
    /// change the other.
    pub fn auxiliary_states(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.z_seed);
        let draw_w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let draw_p: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let pick = |init: &AuxInit, drawn: Vec<f64>| match init {
            AuxInit::Random => drawn,
            AuxInit::Values(v) => v.clone(),
        };
        (pick(&self.z_omega, draw_w), pick(&self.z_p, draw_p))
    }
}

/// Additive step in generator power at `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadEvent {
    pub time: f64,
    /// W per node.
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integration {
    pub step: f64,
    pub horizon: f64,
}

impl Integration {
    pub fn steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }

    /// Grid index of `t`, assuming `t` is on the grid.
    pub fn index_of(&self, t: f64) -> usize {
        (t / self.step).round() as usize
    }

    pub fn on_grid(&self, t: f64) -> bool {
        let k = (t / self.step).round();
        (k * self.step - t).abs() <= GRID_TOL * t.abs().max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionSettings {
    pub enabled: bool,
    pub threshold: f64,
    pub dwell: f64,
    pub auto_isolate: bool,
}

impl Default for DetectionSettings {
    fn default() -> Self {
        DetectionSettings {
            enabled: false,
            threshold: DEFAULT_THRESHOLD,
            dwell: DEFAULT_DWELL,
            auto_isolate: false,
        }
    }
}

/// A complete experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub topology: Topology,
    pub control: ControlParams,
    /// Whether the hidden auxiliary layer is part of the controllers.
    pub auxiliary: bool,
    pub init: InitialConditions,
    pub attacks: Vec<Attack>,
    pub loads: Vec<LoadEvent>,
    pub integration: Integration,
    pub detection: DetectionSettings,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.topology.n()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let n = self.n();
        let invalid = |msg: String| Err(ScenarioError::Invalid(msg));
        self.control.validate(n)?;
        if !self.topology.is_connected() {
            return Err(ControlError::Disconnected.into());
        }
        if !self.topology.has_leader() {
            return Err(ControlError::NoLeader.into());
        }

        let Integration { step, horizon } = self.integration;
        if !(step.is_finite() && step > 0.0) {
            return invalid(format!("step must be > 0, got {step}"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return invalid(format!("horizon must be > 0, got {horizon}"));
        }
        if !self.integration.on_grid(horizon) {
            return invalid(format!("horizon {horizon} is not a multiple of step {step}"));
        }

        for (name, v) in [("omega", &self.init.omega), ("power", &self.init.power)] {
            if v.len() != n {
                return invalid(format!("init {name} has {} entries, expected {n}", v.len()));
            }
            if !v.iter().all(|x| x.is_finite()) {
                return invalid(format!("init {name} has non-finite entries"));
            }
        }
        for (name, aux) in [("z_omega", &self.init.z_omega), ("z_p", &self.init.z_p)] {
            if let AuxInit::Values(v) = aux {
                if v.len() != n || !v.iter().all(|x| x.is_finite()) {
                    return invalid(format!("init {name} needs {n} finite entries"));
                }
            }
        }

        let mut lti_targets = Vec::new();
        for attack in &self.attacks {
            let start = attack.start();
            if !self.integration.on_grid(start) {
                return invalid(format!("attack start {start} is not a multiple of step {step}"));
            }
            match attack {
                Attack::Link(link) => {
                    link.validate(&self.topology)?;
                    if let Some(end) = link.end {
                        if !self.integration.on_grid(end) {
                            return invalid(format!("attack end {end} is not a multiple of step {step}"));
                        }
                    }
                }
                Attack::Lti(lti) => {
                    lti.validate(n)?;
                    if lti_targets.contains(&lti.target) {
                        return invalid(format!(
                            "at most one generator attack per target ({} repeated)",
                            lti.target.as_str()
                        ));
                    }
                    lti_targets.push(lti.target);
                }
            }
        }

        let mut last = f64::NEG_INFINITY;
        for load in &self.loads {
            if load.deltas.len() != n || !load.deltas.iter().all(|x| x.is_finite()) {
                return invalid(format!("load event at {} needs {n} finite deltas", load.time));
            }
            if !(load.time >= 0.0) || !self.integration.on_grid(load.time) {
                return invalid(format!("load time {} is not a multiple of step {step}", load.time));
            }
            if load.time < last {
                return invalid("load events must be sorted by time".into());
            }
            last = load.time;
        }

        let d = &self.detection;
        if !(d.threshold.is_finite() && d.threshold > 0.0) || !(d.dwell.is_finite() && d.dwell >= 0.0) {
            return invalid("detection threshold must be > 0 and dwell >= 0".into());
        }
        Ok(())
    }

    pub fn lti_attack(&self, target: AttackTarget) -> Option<&crate::attacks::LtiAttack> {
        self.attacks.iter().find_map(|a| match a {
            Attack::Lti(l) if l.target == target => Some(l),
            _ => None,
        })
    }

    pub fn link_injections(&self) -> impl Iterator<Item = &crate::attacks::LinkInjection> {
        self.attacks.iter().filter_map(|a| match a {
            Attack::Link(l) => Some(l),
            _ => None,
        })
    }
}
