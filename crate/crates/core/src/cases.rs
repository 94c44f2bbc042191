//! Built-in four-generator study case and random scenario generators.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::attacks::{Attack, AttackTarget, LinkInjection, LtiAttack};
use crate::controllers::ControlParams;
use crate::graph::Topology;
use crate::linalg::Matrix;
use crate::sim::{AuxInit, DetectionSettings, InitialConditions, Integration, LoadEvent, Scenario, DEFAULT_STEP};

pub const OMEGA_REF: f64 = 314.0;
pub const BETA: f64 = 2.0;
pub const DROOP: [f64; 4] = [2e-3, 2e-3, 3e-3, 3e-3];
/// Steady generator powers in W before any event.
pub const POWER_0: [f64; 4] = [6700.0, 6700.0, 4500.0, 4500.0];
pub const Z_SEED: u64 = 7;

pub const FREQ_ATTACK_START: f64 = 10.0;
pub const FREQ_ATTACK_D0: [f64; 4] = [4.5, 2.5, -4.0, -2.0];
pub const POWER_ATTACK_D0: [f64; 4] = [-4.0, -2.5, 3.0, 1.5];
pub const LOAD_UP: f64 = 30.0;
pub const LOAD_DOWN: f64 = 70.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PaperCase {
    NoAttack,
    AttackNoAux,
    AttackAux,
    LoadPerturb,
    DetectIsolate,
}

impl PaperCase {
    pub const ALL: [PaperCase; 5] = [
        PaperCase::NoAttack,
        PaperCase::AttackNoAux,
        PaperCase::AttackAux,
        PaperCase::LoadPerturb,
        PaperCase::DetectIsolate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PaperCase::NoAttack => "no_attack",
            PaperCase::AttackNoAux => "attack_no_aux",
            PaperCase::AttackAux => "attack_aux",
            PaperCase::LoadPerturb => "load_perturb",
            PaperCase::DetectIsolate => "detect_isolate",
        }
    }
}

impl fmt::Display for PaperCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PaperCase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PaperCase::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = PaperCase::ALL.iter().map(|c| c.as_str()).collect();
                format!("unknown case '{s}' (expected one of {})", names.join(", "))
            })
    }
}

pub fn paper_topology() -> Topology {
    Topology::cycle(4, vec![1.0, 0.0, 0.0, 0.0]).expect("valid cycle")
}

pub fn frequency_attack_matrices() -> (Matrix, Matrix) {
    let f = Matrix::from_diag(&[-5.0, -3.0, -5.0, -3.0]);
    let g = Matrix::from_rows(&[
        [-0.001, -0.002, -0.003, -0.004],
        [-0.003, -0.001, -0.004, -0.002],
        [0.004, 0.003, 0.002, 0.001],
        [0.002, 0.004, 0.001, 0.003],
    ])
    .expect("4x4");
    (f, g)
}

pub fn power_attack_matrices() -> (Matrix, Matrix) {
    let f = Matrix::from_diag(&[-2.5, -3.0, -2.5, -3.0]);
    let g = Matrix::from_rows(&[
        [-0.035, -0.036, -0.037, -0.038],
        [-0.088, -0.085, -0.086, -0.087],
        [0.037, 0.038, 0.035, 0.036],
        [0.086, 0.087, 0.088, 0.085],
    ])
    .expect("4x4");
    (f, g)
}

pub fn frequency_attack(start: f64) -> LtiAttack {
    let (f, g) = frequency_attack_matrices();
    LtiAttack {
        target: AttackTarget::Frequency,
        f,
        g,
        d0: FREQ_ATTACK_D0.to_vec(),
        start,
    }
}

pub fn power_attack(start: f64) -> LtiAttack {
    let (f, g) = power_attack_matrices();
    LtiAttack {
        target: AttackTarget::Power,
        f,
        g,
        d0: POWER_ATTACK_D0.to_vec(),
        start,
    }
}

/// Nodes 2 and 4 step up by half their initial power at 30 s and back at 70 s.
pub fn paper_loads() -> Vec<LoadEvent> {
    let up: Vec<f64> = (0..4)
        .map(|i| if i % 2 == 1 { 0.5 * POWER_0[i] } else { 0.0 })
        .collect();
    let down = up.iter().map(|v| -v).collect();
    vec![
        LoadEvent { time: LOAD_UP, deltas: up },
        LoadEvent { time: LOAD_DOWN, deltas: down },
    ]
}

/// Case-study system at its pre-attack steady state, no events, 20 s.
pub fn paper_base() -> Scenario {
    Scenario {
        topology: paper_topology(),
        control: ControlParams {
            beta: BETA,
            omega_ref: OMEGA_REF,
            droop: DROOP.to_vec(),
        },
        auxiliary: true,
        init: InitialConditions {
            omega: vec![OMEGA_REF; 4],
            power: POWER_0.to_vec(),
            z_seed: Z_SEED,
            z_omega: AuxInit::Values(vec![0.0; 4]),
            z_p: AuxInit::Random,
        },
        attacks: Vec::new(),
        loads: Vec::new(),
        integration: Integration {
            step: DEFAULT_STEP,
            horizon: 20.0,
        },
        detection: DetectionSettings::default(),
    }
}

pub fn paper_scenario(case: PaperCase) -> Scenario {
    let mut s = paper_base();
    match case {
        PaperCase::NoAttack => {}
        PaperCase::AttackAux | PaperCase::AttackNoAux => {
            s.attacks = vec![
                Attack::Lti(frequency_attack(FREQ_ATTACK_START)),
                Attack::Lti(power_attack(30.0)),
            ];
            s.integration.horizon = 40.0;
            s.auxiliary = case == PaperCase::AttackAux;
        }
        PaperCase::LoadPerturb => {
            s.attacks = vec![
                Attack::Lti(frequency_attack(FREQ_ATTACK_START)),
                Attack::Lti(power_attack(50.0)),
            ];
            s.loads = paper_loads();
            s.integration.horizon = 90.0;
        }
        PaperCase::DetectIsolate => {
            s.attacks = vec![Attack::Link(LinkInjection {
                receiver: 0,
                sender: 3,
                target: AttackTarget::Frequency,
                value: -2.0,
                start: FREQ_ATTACK_START,
                end: None,
            })];
            s.loads = paper_loads();
            s.integration.horizon = 90.0;
            s.detection = DetectionSettings {
                enabled: true,
                auto_isolate: true,
                ..DetectionSettings::default()
            };
        }
    }
    s
}

/// Four-node star centred on the leader with one attacked spoke. Removing
/// any spoke disconnects the graph, so isolation must be refused.
pub fn star_spoke_attack() -> Scenario {
    let mut s = paper_base();
    s.topology = Topology::star(4, 0, vec![1.0, 0.0, 0.0, 0.0]).expect("valid star");
    s.attacks = vec![Attack::Link(LinkInjection {
        receiver: 0,
        sender: 1,
        target: AttackTarget::Frequency,
        value: -2.0,
        start: FREQ_ATTACK_START,
        end: None,
    })];
    s.integration.horizon = 60.0;
    s.detection = DetectionSettings {
        enabled: true,
        auto_isolate: true,
        ..DetectionSettings::default()
    };
    s
}

/// Random connected graph on `3..=8` nodes with at least one leader.
pub fn random_pinned_topology<R: Rng + ?Sized>(rng: &mut R) -> Topology {
    let n = rng.random_range(3..=8);
    let p = rng.random_range(0.1..0.6);
    Topology::random_pinned(n, p, rng)
}

/// Random frequency attack: diagonal Hurwitz `F` in `[-5, -2]`, `G` entries
/// in `[-0.1, 0.1]`, `d0` in `[-5, 5]`.
pub fn random_lti_attack<R: Rng + ?Sized>(rng: &mut R, n: usize, target: AttackTarget, start: f64) -> LtiAttack {
    let diag: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..=-2.0)).collect();
    LtiAttack {
        target,
        f: Matrix::from_diag(&diag),
        g: Matrix::from_fn(n, n, |_, _| rng.random_range(-0.1..=0.1)),
        d0: (0..n).map(|_| rng.random_range(-5.0..=5.0)).collect(),
        start,
    }
}

/// Random attacked scenario for the bound suite. Frequencies start at the
/// reference, powers near 5 kW, and both loops are attacked from `t = 1`.
/// The horizon covers about twelve time constants of the slowest mode.
pub fn random_attack_scenario<R: Rng + ?Sized>(rng: &mut R, beta: f64) -> Scenario {
    let topology = random_pinned_topology(rng);
    let n = topology.n();
    let droop: Vec<f64> = (0..n).map(|_| rng.random_range(1e-3..=4e-3)).collect();
    let power: Vec<f64> = (0..n).map(|_| rng.random_range(3000.0..=7000.0)).collect();
    let slowest = topology.lambda_min_pinned().min(topology.fiedler_value());
    let horizon = (1.0 + 12.0 / slowest).min(200.0).ceil();
    let attacks = vec![
        Attack::Lti(random_lti_attack(rng, n, AttackTarget::Frequency, 1.0)),
        Attack::Lti(random_lti_attack(rng, n, AttackTarget::Power, 1.0)),
    ];
    Scenario {
        topology,
        control: ControlParams {
            beta,
            omega_ref: OMEGA_REF,
            droop,
        },
        auxiliary: true,
        init: InitialConditions {
            omega: vec![OMEGA_REF; n],
            power,
            z_seed: rng.random(),
            z_omega: AuxInit::Values(vec![0.0; n]),
            z_p: AuxInit::Random,
        },
        attacks,
        loads: Vec::new(),
        integration: Integration {
            step: 5e-3,
            horizon,
        },
        detection: DetectionSettings::default(),
    }
}
