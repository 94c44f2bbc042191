use crate::attacks::{attack_derivative_into, AttackTarget, LinkInjection, LtiAttack};
use crate::controllers::{build_freq_system, FreqSystem};
use crate::detection::{
    estimate_neighbor, isolate, residual, IsolationOutcome, IsolationResult, LinkKey, LinkSignals, OnlineDetector,
};
use crate::graph::Topology;
use crate::linalg::norm2;

use super::scenario::Scenario;
use super::trace::{SimState, Trace};
use super::SimError;

const DIVERGENCE_NORM: f64 = 1e12;

/// Offsets of the six n-blocks in the stacked state.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub n: usize,
}

impl Layout {
    pub fn dim(self) -> usize {
        6 * self.n
    }
    pub fn omega(self) -> std::ops::Range<usize> {
        0..self.n
    }
    pub fn z_omega(self) -> std::ops::Range<usize> {
        self.n..2 * self.n
    }
    pub fn mp_p(self) -> std::ops::Range<usize> {
        2 * self.n..3 * self.n
    }
    pub fn z_p(self) -> std::ops::Range<usize> {
        3 * self.n..4 * self.n
    }
    pub fn d_omega(self) -> std::ops::Range<usize> {
        4 * self.n..5 * self.n
    }
    pub fn d_p(self) -> std::ops::Range<usize> {
        5 * self.n..6 * self.n
    }
}

/// Scenario events mapped onto grid indices.
pub(crate) struct Schedule<'a> {
    pub steps: usize,
    pub step: f64,
    lti: Vec<(usize, &'a LtiAttack)>,
    loads: Vec<(usize, &'a [f64])>,
    links: Vec<(usize, Option<usize>, &'a LinkInjection)>,
}

impl<'a> Schedule<'a> {
    pub fn new(s: &'a Scenario) -> Self {
        let grid = s.integration;
        let lti = [AttackTarget::Frequency, AttackTarget::Power]
            .into_iter()
            .filter_map(|t| s.lti_attack(t))
            .map(|a| (grid.index_of(a.start), a))
            .collect();
        let loads = s
            .loads
            .iter()
            .map(|l| (grid.index_of(l.time), l.deltas.as_slice()))
            .collect();
        let links = s
            .link_injections()
            .map(|l| (grid.index_of(l.start), l.end.map(|e| grid.index_of(e)), l))
            .collect();
        Schedule {
            steps: grid.steps(),
            step: grid.step,
            lti,
            loads,
            links,
        }
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn lti_starting(&self, k: usize) -> impl Iterator<Item = &'a LtiAttack> + '_ {
        self.lti.iter().filter(move |(i, _)| *i == k).map(|(_, a)| *a)
    }

    /// LTI attacks already switched on at sample `k`.
    pub fn lti_active(&self, k: usize, target: AttackTarget) -> Option<&'a LtiAttack> {
        self.lti
            .iter()
            .find(|(i, a)| a.target == target && *i <= k)
            .map(|(_, a)| *a)
    }

    pub fn loads_at(&self, k: usize) -> impl Iterator<Item = &'a [f64]> + '_ {
        self.loads.iter().filter(move |(i, _)| *i == k).map(|(_, d)| *d)
    }

    fn link_active(start: usize, end: Option<usize>, k: usize) -> bool {
        k >= start && end.is_none_or(|e| k < e)
    }

    /// Aggregated link injections over the edges still present in `t`.
    pub fn link_vector(&self, k: usize, target: AttackTarget, t: &Topology) -> Vec<f64> {
        let mut d = vec![0.0; t.n()];
        for &(start, end, l) in &self.links {
            if l.target == target && Self::link_active(start, end, k) && t.has_edge(l.receiver, l.sender) {
                d[l.receiver] += l.value;
            }
        }
        d
    }

    /// Total injection on the directed link `receiver <- sender` at `k`.
    pub fn injection_on(&self, k: usize, key: LinkKey) -> f64 {
        self.links
            .iter()
            .filter(|(s, e, l)| {
                l.target == key.target
                    && l.receiver == key.receiver
                    && l.sender == key.sender
                    && Self::link_active(*s, *e, k)
            })
            .map(|(_, _, l)| l.value)
            .sum()
    }

    /// Whether the piecewise-constant inputs change at sample `k`.
    pub fn boundary_at(&self, k: usize) -> bool {
        self.lti.iter().any(|(i, _)| *i == k)
            || self.loads.iter().any(|(i, _)| *i == k)
            || self
                .links
                .iter()
                .any(|(s, e, _)| *s == k || *e == Some(k))
    }
}

/// Right-hand side of the stacked system over one step.
struct Dynamics<'a> {
    layout: Layout,
    freq: FreqSystem,
    omega_ref: f64,
    auxiliary: bool,
    lti_omega: Option<&'a LtiAttack>,
    lti_p: Option<&'a LtiAttack>,
    link_omega: Vec<f64>,
    link_p: Vec<f64>,
    d_omega: Vec<f64>,
    d_p: Vec<f64>,
}

impl Dynamics<'_> {
    fn eval(&mut self, x: &[f64], out: &mut [f64]) {
        let ly = self.layout;
        let (omega, z_omega, mp_p, z_p) = (&x[ly.omega()], &x[ly.z_omega()], &x[ly.mp_p()], &x[ly.z_p()]);
        for i in 0..ly.n {
            self.d_omega[i] = x[ly.d_omega()][i] + self.link_omega[i];
            self.d_p[i] = x[ly.d_p()][i] + self.link_p[i];
        }
        let (w_part, rest) = out.split_at_mut(ly.n);
        let (zw_part, rest) = rest.split_at_mut(ly.n);
        let (mp_part, rest) = rest.split_at_mut(ly.n);
        let (zp_part, rest) = rest.split_at_mut(ly.n);
        let (dw_part, dp_part) = rest.split_at_mut(ly.n);

        let sys = &self.freq;
        if self.auxiliary {
            crate::controllers::freq_derivative_into(omega, z_omega, &self.d_omega, sys, self.omega_ref, w_part, zw_part);
            crate::controllers::power_derivative_into(mp_p, z_p, &self.d_p, &sys.laplacian, sys.beta, mp_part, zp_part);
        } else {
            crate::controllers::freq_derivative_baseline_into(omega, &self.d_omega, sys, self.omega_ref, w_part);
            crate::controllers::power_derivative_baseline_into(mp_p, &self.d_p, &sys.laplacian, mp_part);
            zw_part.fill(0.0);
            zp_part.fill(0.0);
        }
        match self.lti_omega {
            Some(a) => attack_derivative_into(&x[ly.d_omega()], omega, a, dw_part),
            None => dw_part.fill(0.0),
        }
        match self.lti_p {
            Some(a) => attack_derivative_into(&x[ly.d_p()], mp_p, a, dp_part),
            None => dp_part.fill(0.0),
        }
    }
}

struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(dim: usize) -> Self {
        Rk4 {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    fn step(&mut self, f: &mut Dynamics<'_>, x: &mut [f64], h: f64) {
        f.eval(x, &mut self.k1);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        f.eval(&self.tmp, &mut self.k2);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        f.eval(&self.tmp, &mut self.k3);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        f.eval(&self.tmp, &mut self.k4);
        for i in 0..x.len() {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Adds `m_i * delta_i` to `m_P P` (deltas in W).
pub(crate) fn add_load(mp_p: &mut [f64], deltas: &[f64], droop: &[f64]) {
    for ((x, d), m) in mp_p.iter_mut().zip(deltas).zip(droop) {
        *x += m * d;
    }
}

/// Applies a per-node power step (W) to `state`. The sharing reference
/// `Delta_P` of the result is the mean of the new `m_P P`.
pub fn apply_load_event(state: &SimState, deltas: &[f64], droop: &[f64]) -> Result<SimState, SimError> {
    let n = state.mp_p.len();
    if deltas.len() != n || droop.len() != n {
        return Err(SimError::Shape(format!(
            "load event needs {n} deltas and droop gains, got {} and {}",
            deltas.len(),
            droop.len()
        )));
    }
    let mut next = state.clone();
    add_load(&mut next.mp_p, deltas, droop);
    Ok(next)
}

/// Initial stacked state; auxiliary blocks are zero without the hidden layer.
pub(crate) fn initial_state(s: &Scenario, auxiliary: bool) -> Vec<f64> {
    let n = s.n();
    let ly = Layout { n };
    let mut x = vec![0.0; ly.dim()];
    x[ly.omega()].copy_from_slice(&s.init.omega);
    for i in 0..n {
        x[ly.mp_p()][i] = s.control.droop[i] * s.init.power[i];
    }
    if auxiliary {
        let (zw, zp) = s.init.auxiliary_states(n);
        x[ly.z_omega()].copy_from_slice(&zw);
        x[ly.z_p()].copy_from_slice(&zp);
    }
    x
}

/// Applies the events scheduled at sample `k` to `x`.
pub(crate) fn apply_events(schedule: &Schedule<'_>, k: usize, x: &mut [f64], droop: &[f64], ly: Layout) {
    for a in schedule.lti_starting(k) {
        let range = match a.target {
            AttackTarget::Frequency => ly.d_omega(),
            AttackTarget::Power => ly.d_p(),
        };
        x[range].copy_from_slice(&a.d0);
    }
    for deltas in schedule.loads_at(k) {
        add_load(&mut x[ly.mp_p()], deltas, droop);
    }
}

pub(crate) fn record(trace: &mut Trace, t: f64, x: &[f64], link_omega: &[f64], link_p: &[f64], ly: Layout) {
    let d_omega: Vec<f64> = x[ly.d_omega()].iter().zip(link_omega).map(|(a, b)| a + b).collect();
    let d_p: Vec<f64> = x[ly.d_p()].iter().zip(link_p).map(|(a, b)| a + b).collect();
    trace.push_sample(
        t,
        [&x[ly.omega()], &x[ly.z_omega()], &x[ly.mp_p()], &x[ly.z_p()], &d_omega, &d_p],
    );
}

/// Integrates the scenario with classical RK4 at the scenario step.
pub fn run(s: &Scenario) -> Result<Trace, SimError> {
    simulate(s, s.auxiliary)
}

/// Same scenario with the auxiliary layer removed from both loops.
pub fn run_without_auxiliary(s: &Scenario) -> Result<Trace, SimError> {
    simulate(s, false)
}

fn simulate(s: &Scenario, auxiliary: bool) -> Result<Trace, SimError> {
    s.validate()?;
    let n = s.n();
    let ly = Layout { n };
    let schedule = Schedule::new(s);
    let h = schedule.step;
    let beta = s.control.beta;

    let mut topology = s.topology.clone();
    let mut dynamics = Dynamics {
        layout: ly,
        freq: build_freq_system(&topology, &s.control)?,
        omega_ref: s.control.omega_ref,
        auxiliary,
        lti_omega: None,
        lti_p: None,
        link_omega: vec![0.0; n],
        link_p: vec![0.0; n],
        d_omega: vec![0.0; n],
        d_p: vec![0.0; n],
    };

    let monitoring = auxiliary && s.detection.enabled;
    let mut trace = Trace::new(n, h, topology.clone(), beta, s.control.omega_ref, s.control.droop.clone());
    let mut detector = None;
    if monitoring {
        trace.links = LinkKey::all_for(&topology).into_iter().map(LinkSignals::new).collect();
        detector = Some(OnlineDetector::new(trace.links.len(), s.detection.threshold, s.detection.dwell, h));
    }

    let mut x = initial_state(s, auxiliary);
    let mut rk4 = Rk4::new(ly.dim());
    let mut refused: Vec<(usize, usize)> = Vec::new();

    for k in 0..=schedule.steps {
        let t = schedule.time(k);
        apply_events(&schedule, k, &mut x, &s.control.droop, ly);
        dynamics.lti_omega = schedule.lti_active(k, AttackTarget::Frequency);
        dynamics.lti_p = schedule.lti_active(k, AttackTarget::Power);
        dynamics.link_omega = schedule.link_vector(k, AttackTarget::Frequency, &topology);
        dynamics.link_p = schedule.link_vector(k, AttackTarget::Power, &topology);
        record(&mut trace, t, &x, &dynamics.link_omega, &dynamics.link_p, ly);

        if let Some(det) = detector.as_mut() {
            let mut to_isolate = Vec::new();
            for (idx, sig) in trace.links.iter_mut().enumerate() {
                let key = sig.key;
                if !topology.has_edge(key.receiver, key.sender) {
                    continue;
                }
                let (xs, zs) = match key.target {
                    AttackTarget::Frequency => (&x[ly.omega()], &x[ly.z_omega()]),
                    AttackTarget::Power => (&x[ly.mp_p()], &x[ly.z_p()]),
                };
                let j = key.sender;
                let received = xs[j] + schedule.injection_on(k, key);
                let estimated = estimate_neighbor(beta * zs[j], zs[j] - beta * xs[j], beta)?;
                sig.received.push(received);
                sig.estimated.push(estimated);
                if det.update(idx, k, residual(received, estimated)) && s.detection.auto_isolate {
                    to_isolate.push(key.edge());
                }
            }
            let mut changed = false;
            for edge in to_isolate {
                if !topology.has_edge(edge.0, edge.1) || refused.contains(&edge) {
                    continue;
                }
                match isolate(&topology, edge) {
                    Ok(next) => {
                        topology = next;
                        changed = true;
                        trace.isolations.push(IsolationOutcome { edge, time: t, result: IsolationResult::Isolated });
                    }
                    Err(crate::detection::DetectionError::IsolationRefused(..)) => {
                        refused.push(edge);
                        trace.isolations.push(IsolationOutcome { edge, time: t, result: IsolationResult::Refused });
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            if changed {
                dynamics.freq = build_freq_system(&topology, &s.control)?;
                dynamics.link_omega = schedule.link_vector(k, AttackTarget::Frequency, &topology);
                dynamics.link_p = schedule.link_vector(k, AttackTarget::Power, &topology);
            }
        }

        if k == schedule.steps {
            break;
        }
        rk4.step(&mut dynamics, &mut x, h);
        let size = norm2(&x);
        if !(size.is_finite() && size <= DIVERGENCE_NORM) {
            return Err(SimError::Diverged { time: schedule.time(k + 1) });
        }
    }
    trace.final_topology = topology;
    Ok(trace)
}
