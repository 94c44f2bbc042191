//! Post-run checks: steady states, bound verification, settling times and
//! beta sweeps.

use std::fmt;

use crate::attacks::{empirical_sup_norm, AttackError};
use crate::batch::par_map;
use crate::controllers::{bound_epsilon_omega, bound_epsilon_p, ControlError};
use crate::linalg::norm2;
use crate::sim::{run, Channel, Scenario, SimError, Trace};

/// Slack allowed when comparing a measured error with its analytic bound.
pub const BOUND_SLACK: f64 = 1e-9;
pub const DEFAULT_BAND: f64 = 0.5;
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.1;
const SETTLED_REL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("window {window} s is not within (0, {horizon}] s")]
    Window { window: f64, horizon: f64 },
    #[error("trace is empty")]
    EmptyTrace,
    #[error("invalid beta list: {0}")]
    Betas(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Attack(#[from] AttackError),
}

/// Mean and spread of one channel over the final window.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub mean: Vec<f64>,
    pub max_deviation: f64,
    pub settled: bool,
}

fn window_start(trace: &Trace, window: f64) -> Result<usize, AnalysisError> {
    if trace.is_empty() {
        return Err(AnalysisError::EmptyTrace);
    }
    let horizon = trace.horizon();
    if !(window > 0.0 && window <= horizon + 1e-12) {
        return Err(AnalysisError::Window { window, horizon });
    }
    Ok(trace.index_at(horizon - window))
}

pub fn default_window(trace: &Trace) -> f64 {
    DEFAULT_WINDOW_FRACTION * trace.horizon()
}

pub fn steady_state(trace: &Trace, channel: Channel, window: f64) -> Result<SteadyState, AnalysisError> {
    let k0 = window_start(trace, window)?;
    let series = trace.channel(channel);
    let n = trace.n();
    let count = (trace.len() - k0) as f64;
    let mut mean = vec![0.0; n];
    for k in k0..trace.len() {
        for (m, v) in mean.iter_mut().zip(series.row(k)) {
            *m += v / count;
        }
    }
    let mut dev = 0.0f64;
    let mut scale = 0.0f64;
    for k in k0..trace.len() {
        for (m, v) in mean.iter().zip(series.row(k)) {
            dev = dev.max((v - m).abs());
            scale = scale.max(v.abs());
        }
    }
    Ok(SteadyState {
        mean,
        max_deviation: dev,
        settled: dev <= SETTLED_REL * scale,
    })
}

/// `omega - omega* 1` at sample `k`.
pub fn frequency_error(trace: &Trace, k: usize) -> Vec<f64> {
    let w_ref = trace.omega_ref();
    trace.channel(Channel::Omega).row(k).iter().map(|w| w - w_ref).collect()
}

/// `m_P P - Delta_P 1` at sample `k`, with `Delta_P` the mean of `m_P P`.
pub fn power_error(trace: &Trace, k: usize) -> Vec<f64> {
    let row = trace.channel(Channel::MpP).row(k);
    let mean = row.iter().sum::<f64>() / row.len() as f64;
    row.iter().map(|x| x - mean).collect()
}

/// Largest `||e_omega||` over the final window.
pub fn frequency_error_norm(trace: &Trace, window: f64) -> Result<f64, AnalysisError> {
    let k0 = window_start(trace, window)?;
    Ok((k0..trace.len()).map(|k| norm2(&frequency_error(trace, k))).fold(0.0, f64::max))
}

/// Largest `||e_P||` over the final window.
pub fn power_error_norm(trace: &Trace, window: f64) -> Result<f64, AnalysisError> {
    let k0 = window_start(trace, window)?;
    Ok((k0..trace.len()).map(|k| norm2(&power_error(trace, k))).fold(0.0, f64::max))
}

/// For each event time, how long after it every frequency enters the band
/// `omega* +- band` and stays there until the next event (or the end).
/// `None` means the band was not reached before the next event.
pub fn band_settling_times(trace: &Trace, events: &[f64], band: f64) -> Vec<(f64, Option<f64>)> {
    let mut sorted: Vec<f64> = events.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let w_ref = trace.omega_ref();
    let omega = trace.channel(Channel::Omega);
    let outside = |k: usize| omega.row(k).iter().any(|w| (w - w_ref).abs() > band);
    let mut out = Vec::with_capacity(sorted.len());
    for (idx, &t_event) in sorted.iter().enumerate() {
        let k0 = trace.index_at(t_event);
        let k1 = match sorted.get(idx + 1) {
            Some(&t) => trace.index_at(t),
            None => trace.len(),
        };
        let last_out = (k0..k1).rev().find(|&k| outside(k));
        let settle = match last_out {
            None => Some(0.0),
            Some(k) if k + 1 < k1 => Some(trace.time(k + 1) - t_event),
            Some(_) => None,
        };
        out.push((t_event, settle));
    }
    out
}

/// Largest relative drift of the mean of `m_P P` inside each interval
/// between load events.
pub fn power_mean_drift(trace: &Trace, load_times: &[f64]) -> f64 {
    let series = trace.channel(Channel::MpP);
    let mean_at = |k: usize| series.row(k).iter().sum::<f64>() / trace.n() as f64;
    let mut cuts: Vec<usize> = load_times.iter().map(|&t| trace.index_at(t)).collect();
    cuts.push(0);
    cuts.push(trace.len());
    cuts.sort_unstable();
    cuts.dedup();
    let mut drift = 0.0f64;
    for w in cuts.windows(2) {
        if w[0] >= w[1] {
            continue;
        }
        let reference = mean_at(w[0]);
        for k in w[0]..w[1] {
            drift = drift.max(((mean_at(k) - reference) / reference.abs().max(f64::MIN_POSITIVE)).abs());
        }
    }
    drift
}

/// Attack start and load times of a scenario.
pub fn event_times(s: &Scenario) -> Vec<f64> {
    let mut t: Vec<f64> = s
        .attacks
        .iter()
        .map(|a| a.start())
        .chain(s.loads.iter().map(|l| l.time))
        .collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub window: f64,
    pub e_omega: f64,
    pub e_p: f64,
    pub d_bar_omega: f64,
    pub d_bar_p: f64,
    pub epsilon_omega: f64,
    pub epsilon_p: f64,
    pub omega_pass: bool,
    pub p_pass: bool,
    pub band: f64,
    pub settling: Vec<(f64, Option<f64>)>,
    pub power_mean_drift: f64,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.omega_pass && self.p_pass
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = |p: bool| if p { "pass" } else { "fail" };
        writeln!(f, "window: {}", self.window)?;
        writeln!(f, "steady_e_omega: {:.9e}", self.e_omega)?;
        writeln!(f, "d_bar_omega: {:.9e}", self.d_bar_omega)?;
        writeln!(f, "epsilon_omega: {:.9e}", self.epsilon_omega)?;
        writeln!(f, "omega_bound: {}", verdict(self.omega_pass))?;
        writeln!(f, "steady_e_p: {:.9e}", self.e_p)?;
        writeln!(f, "d_bar_p: {:.9e}", self.d_bar_p)?;
        writeln!(f, "epsilon_p: {:.9e}", self.epsilon_p)?;
        writeln!(f, "p_bound: {}", verdict(self.p_pass))?;
        writeln!(f, "power_mean_drift: {:.3e}", self.power_mean_drift)?;
        writeln!(f, "band: {}", self.band)?;
        for (t, s) in &self.settling {
            match s {
                Some(s) => writeln!(f, "settling_after_{t}: {s:.3}")?,
                None => writeln!(f, "settling_after_{t}: not reached")?,
            }
        }
        writeln!(f, "result: {}", verdict(self.passed()))
    }
}

/// Checks the steady frequency and power-sharing errors of `trace` against
/// the analytic bounds, with `d_bar` taken as the empirical sup-norm of the
/// recorded attack signals. Bounds use the topology in force at the end of
/// the run.
pub fn verify_bounds(trace: &Trace, s: &Scenario) -> Result<VerificationReport, AnalysisError> {
    verify_bounds_with_window(trace, s, default_window(trace))
}

pub fn verify_bounds_with_window(trace: &Trace, s: &Scenario, window: f64) -> Result<VerificationReport, AnalysisError> {
    let e_omega = frequency_error_norm(trace, window)?;
    let e_p = power_error_norm(trace, window)?;
    let d_bar_omega = empirical_sup_norm(trace.channel(Channel::DOmega).rows())?;
    let d_bar_p = empirical_sup_norm(trace.channel(Channel::DP).rows())?;
    let topo = trace.final_topology();
    let beta = trace.beta();
    let epsilon_omega = bound_epsilon_omega(topo, beta, d_bar_omega)?;
    let epsilon_p = bound_epsilon_p(topo, beta, d_bar_p)?;
    let loads: Vec<f64> = s.loads.iter().map(|l| l.time).collect();
    Ok(VerificationReport {
        window,
        e_omega,
        e_p,
        d_bar_omega,
        d_bar_p,
        epsilon_omega,
        epsilon_p,
        omega_pass: e_omega <= epsilon_omega + BOUND_SLACK,
        p_pass: e_p <= epsilon_p + BOUND_SLACK,
        band: DEFAULT_BAND,
        settling: band_settling_times(trace, &event_times(s), DEFAULT_BAND),
        power_mean_drift: power_mean_drift(trace, &loads),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub beta: f64,
    pub e_omega: f64,
    pub e_p: f64,
    pub epsilon_omega: f64,
    pub epsilon_p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn bounds_strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| {
            w[1].epsilon_omega < w[0].epsilon_omega
                && (w[0].epsilon_p == 0.0 && w[1].epsilon_p == 0.0 || w[1].epsilon_p < w[0].epsilon_p)
        })
    }

    /// Measured errors never grow by more than `rel_tol` from one beta to the next.
    pub fn measured_non_increasing(&self, rel_tol: f64) -> bool {
        self.rows.windows(2).all(|w| {
            w[1].e_omega <= w[0].e_omega * (1.0 + rel_tol) + BOUND_SLACK
                && w[1].e_p <= w[0].e_p * (1.0 + rel_tol) + BOUND_SLACK
        })
    }

    pub fn to_csv(&self) -> String {
        let g = crate::sim::format_g12;
        let mut out = String::from("beta,e_omega,epsilon_omega,e_p,epsilon_p\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                g(r.beta),
                g(r.e_omega),
                g(r.epsilon_omega),
                g(r.e_p),
                g(r.epsilon_p)
            ));
        }
        out
    }
}

/// Runs `s` once per beta (concurrently when the `parallel` feature is on)
/// and tabulates measured steady errors next to the analytic bounds.
pub fn beta_sweep(s: &Scenario, betas: &[f64]) -> Result<SweepTable, AnalysisError> {
    if betas.is_empty() {
        return Err(AnalysisError::Betas("empty".into()));
    }
    if betas.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
        return Err(AnalysisError::Betas("every beta must be > 0".into()));
    }
    if betas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(AnalysisError::Betas("betas must be strictly ascending".into()));
    }
    let rows = par_map(betas, |&beta| -> Result<SweepRow, AnalysisError> {
        let mut sc = s.clone();
        sc.control.beta = beta;
        let trace = run(&sc)?;
        let report = verify_bounds(&trace, &sc)?;
        Ok(SweepRow {
            beta,
            e_omega: report.e_omega,
            e_p: report.e_p,
            epsilon_omega: report.epsilon_omega,
            epsilon_p: report.epsilon_p,
        })
    });
    Ok(SweepTable {
        rows: rows.into_iter().collect::<Result<_, _>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{paper_scenario, PaperCase};

    #[test]
    fn no_attack_steady_state() {
        let s = paper_scenario(PaperCase::NoAttack);
        let tr = run(&s).unwrap();
        let ss = steady_state(&tr, Channel::Omega, 2.0).unwrap();
        assert!(ss.settled);
        assert!(ss.mean.iter().all(|w| (w - 314.0).abs() < 1e-6));
        assert!(steady_state(&tr, Channel::Omega, 100.0).is_err());
        let rep = verify_bounds(&tr, &s).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.d_bar_omega, 0.0);
    }

    #[test]
    fn exponential_transient_window() {
        let mut s = paper_scenario(PaperCase::NoAttack);
        s.topology = crate::graph::Topology::new(1, &[], vec![1.0]).unwrap();
        s.control.droop = vec![1e-3];
        s.init.omega = vec![315.0];
        s.init.power = vec![1000.0];
        s.init.z_omega = crate::sim::AuxInit::Values(vec![0.0]);
        s.auxiliary = false;
        s.integration.horizon = 10.0;
        let tr = run(&s).unwrap();
        let ss = steady_state(&tr, Channel::Omega, 1.0).unwrap();
        assert!(ss.max_deviation <= (-9f64).exp());
    }

    #[test]
    fn settling_times() {
        let s = paper_scenario(PaperCase::AttackAux);
        let tr = run(&s).unwrap();
        let st = band_settling_times(&tr, &event_times(&s), 0.5);
        assert_eq!(st.len(), 2);
        let first = st[0].1.expect("band re-entered");
        assert!(first > 0.0 && first < 10.0, "{first}");
    }

    #[test]
    fn sweep_validation() {
        let s = paper_scenario(PaperCase::NoAttack);
        assert!(beta_sweep(&s, &[]).is_err());
        assert!(beta_sweep(&s, &[2.0, 1.0]).is_err());
        assert!(beta_sweep(&s, &[-1.0]).is_err());
    }
}
