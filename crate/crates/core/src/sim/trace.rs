use std::io::{self, Write};

use crate::detection::{IsolationOutcome, LinkSignals};
use crate::graph::Topology;

/// Recorded state channels, in CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Omega,
    ZOmega,
    MpP,
    ZP,
    DOmega,
    DP,
}

impl Channel {
    pub const ALL: [Channel; 6] = [
        Channel::Omega,
        Channel::ZOmega,
        Channel::MpP,
        Channel::ZP,
        Channel::DOmega,
        Channel::DP,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            Channel::Omega => "omega",
            Channel::ZOmega => "z_omega",
            Channel::MpP => "mp_p",
            Channel::ZP => "z_p",
            Channel::DOmega => "d_omega",
            Channel::DP => "d_p",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Row-major samples of one n-vector channel.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Series {
    n: usize,
    data: Vec<f64>,
}

impl Series {
    pub fn new(n: usize) -> Self {
        Series { n, data: Vec::new() }
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.n);
        self.data.extend_from_slice(row);
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.n).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.n..(k + 1) * self.n]
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.len().checked_sub(1).map(|k| self.row(k))
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.n.max(1))
    }
}

/// Full state of the stacked system at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub omega: Vec<f64>,
    pub z_omega: Vec<f64>,
    pub mp_p: Vec<f64>,
    pub z_p: Vec<f64>,
    /// Total node-level attack (generator state plus aggregated links).
    pub d_omega: Vec<f64>,
    pub d_p: Vec<f64>,
}

impl SimState {
    /// Generator powers in W, `P_i = (m_P P)_i / m_i`.
    pub fn power(&self, droop: &[f64]) -> Vec<f64> {
        self.mp_p.iter().zip(droop).map(|(x, m)| x / m).collect()
    }

    /// Power-sharing reference `Delta_P`, the mean of `m_P P`.
    pub fn delta_p(&self) -> f64 {
        mean(&self.mp_p)
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Output of one simulation run on a uniform grid `t_k = k * step`.
#[derive(Debug, Clone)]
pub struct Trace {
    pub(crate) n: usize,
    pub(crate) step: f64,
    pub(crate) times: Vec<f64>,
    pub(crate) channels: [Series; 6],
    pub(crate) links: Vec<LinkSignals>,
    pub(crate) isolations: Vec<IsolationOutcome>,
    pub(crate) final_topology: Topology,
    pub(crate) beta: f64,
    pub(crate) omega_ref: f64,
    pub(crate) droop: Vec<f64>,
}

impl Trace {
    pub(crate) fn new(n: usize, step: f64, topology: Topology, beta: f64, omega_ref: f64, droop: Vec<f64>) -> Self {
        Trace {
            n,
            step,
            times: Vec::new(),
            channels: std::array::from_fn(|_| Series::new(n)),
            links: Vec::new(),
            isolations: Vec::new(),
            final_topology: topology,
            beta,
            omega_ref,
            droop,
        }
    }

    pub(crate) fn push_sample(&mut self, t: f64, rows: [&[f64]; 6]) {
        self.times.push(t);
        for (series, row) in self.channels.iter_mut().zip(rows) {
            series.push(row);
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn omega_ref(&self) -> f64 {
        self.omega_ref
    }

    pub fn droop(&self) -> &[f64] {
        &self.droop
    }

    pub fn channel(&self, c: Channel) -> &Series {
        &self.channels[c.index()]
    }

    pub fn state(&self, k: usize) -> SimState {
        let row = |c: Channel| self.channel(c).row(k).to_vec();
        SimState {
            omega: row(Channel::Omega),
            z_omega: row(Channel::ZOmega),
            mp_p: row(Channel::MpP),
            z_p: row(Channel::ZP),
            d_omega: row(Channel::DOmega),
            d_p: row(Channel::DP),
        }
    }

    pub fn final_state(&self) -> SimState {
        self.state(self.len() - 1)
    }

    pub fn link_signals(&self) -> &[LinkSignals] {
        &self.links
    }

    pub fn isolations(&self) -> &[IsolationOutcome] {
        &self.isolations
    }

    /// Topology in force at the end of the run (after any isolation).
    pub fn final_topology(&self) -> &Topology {
        &self.final_topology
    }

    /// First sample index with `t_k >= t`.
    pub fn index_at(&self, t: f64) -> usize {
        let k = ((t / self.step) - 1e-9).ceil().max(0.0) as usize;
        k.min(self.len().saturating_sub(1))
    }

    /// Every CSV column name, in order.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec!["t".to_string()];
        for c in Channel::ALL {
            names.extend((1..=self.n).map(|i| format!("{}_{i}", c.prefix())));
        }
        names.extend(self.links.iter().map(residual_column));
        names
    }

    /// Writes the trace as CSV. `columns` selects a subset by name; `None`
    /// writes everything. Residual cells of isolated links are left empty.
    pub fn write_csv<W: Write>(&self, mut w: W, columns: Option<&[String]>) -> io::Result<()> {
        let all = self.column_names();
        let selected: Vec<usize> = match columns {
            None => (0..all.len()).collect(),
            Some(cols) => cols
                .iter()
                .map(|c| {
                    all.iter().position(|a| a == c).ok_or_else(|| {
                        io::Error::new(io::ErrorKind::InvalidInput, format!("unknown column '{c}'"))
                    })
                })
                .collect::<io::Result<_>>()?,
        };
        let header: Vec<&str> = selected.iter().map(|&i| all[i].as_str()).collect();
        writeln!(w, "{}", header.join(","))?;

        let state_cols = 1 + 6 * self.n;
        let mut line = String::new();
        for k in 0..self.len() {
            line.clear();
            for (pos, &col) in selected.iter().enumerate() {
                if pos > 0 {
                    line.push(',');
                }
                if col == 0 {
                    line.push_str(&format_g12(self.times[k]));
                } else if col < state_cols {
                    let c = Channel::ALL[(col - 1) / self.n];
                    line.push_str(&format_g12(self.channel(c).row(k)[(col - 1) % self.n]));
                } else if let Some(r) = self.links[col - state_cols].residual_at(k) {
                    line.push_str(&format_g12(r));
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

fn residual_column(l: &LinkSignals) -> String {
    let tag = match l.key.target {
        crate::attacks::AttackTarget::Frequency => "residual",
        crate::attacks::AttackTarget::Power => "residual_p",
    };
    format!("{tag}_{}_{}", l.key.receiver + 1, l.key.sender + 1)
}

/// `%.12g`: 12 significant digits, scientific outside `[1e-5, 1e12)`,
/// trailing zeros trimmed.
pub fn format_g12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    // rounding to 12 digits can bump the exponent (9.9999999999995 -> 10)
    let sci = format!("{:.11e}", x);
    let (mantissa, e) = sci.split_once('e').expect("exponent");
    let e: i32 = e.parse().expect("integer exponent");
    let exp = if e != exp { e } else { exp };
    if !(-5..12).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g12_formatting() {
        assert_eq!(format_g12(0.0), "0");
        assert_eq!(format_g12(314.0), "314");
        assert_eq!(format_g12(0.1), "0.1");
        assert_eq!(format_g12(-2.5), "-2.5");
        assert_eq!(format_g12(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_g12(1e-7), "1e-07");
        assert_eq!(format_g12(1.5e13), "1.5e+13");
        assert_eq!(format_g12(9.9999999999995), "10");
        assert_eq!(format_g12(123456.789), "123456.789");
        let x = 314.000_001_234_567_9;
        assert_eq!(format_g12(x).parse::<f64>().unwrap(), 314.000001235);
    }

    #[test]
    fn series_rows() {
        let mut s = Series::new(2);
        s.push(&[1.0, 2.0]);
        s.push(&[3.0, 4.0]);
        assert_eq!(s.len(), 2);
        assert_eq!(s.row(1), &[3.0, 4.0]);
        assert_eq!(s.last().unwrap(), &[3.0, 4.0]);
        assert_eq!(s.rows().count(), 2);
    }
}
