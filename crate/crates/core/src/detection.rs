//! Link-level attack detection from the hidden auxiliary layer.
//!
//! Besides the possibly corrupted value `x_j + delta_ij` that node `i`
//! hears from neighbour `j` on the control layer, node `i` also receives
//! `beta z_j` and `z_j - beta x_j` from the auxiliary layer. Those two are
//! enough to rebuild `x_j` exactly, so any persistent gap between the
//! rebuilt and the received value marks the link as corrupted.

use std::fmt;

use crate::attacks::AttackTarget;
use crate::graph::{GraphError, Topology};
use crate::sim::Trace;

pub const DEFAULT_THRESHOLD: f64 = 1e-3;
pub const DEFAULT_DWELL: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetectionError {
    #[error("beta must be > 0 to invert the inter-layer signals, got {0}")]
    InvalidBeta(f64),
    #[error("isolating link ({0}, {1}) would disconnect the control layer")]
    IsolationRefused(usize, usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// What node `receiver` learns about `sender` through the auxiliary layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterLayerSignals {
    pub receiver: usize,
    pub sender: usize,
    /// `beta z_j`.
    pub z_bar: f64,
    /// `z_j - beta x_j`.
    pub w_bar: f64,
}

impl InterLayerSignals {
    pub fn observe(receiver: usize, sender: usize, z: &[f64], x: &[f64], beta: f64) -> Self {
        InterLayerSignals {
            receiver,
            sender,
            z_bar: beta * z[sender],
            w_bar: z[sender] - beta * x[sender],
        }
    }

    pub fn estimate(&self, beta: f64) -> Result<f64, DetectionError> {
        estimate_neighbor(self.z_bar, self.w_bar, beta)
    }
}

/// `(z_bar / beta - w_bar) / beta`, which equals `x_j` for clean signals.
pub fn estimate_neighbor(z_bar: f64, w_bar: f64, beta: f64) -> Result<f64, DetectionError> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(DetectionError::InvalidBeta(beta));
    }
    Ok((z_bar / beta - w_bar) / beta)
}

pub fn residual(received: f64, estimated: f64) -> f64 {
    (received - estimated).abs()
}

/// A monitored directed link: `receiver` listening to `sender`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinkKey {
    pub receiver: usize,
    pub sender: usize,
    pub target: AttackTarget,
}

impl LinkKey {
    /// Undirected edge with the smaller node first.
    pub fn edge(&self) -> (usize, usize) {
        (self.receiver.min(self.sender), self.receiver.max(self.sender))
    }

    /// Every directed link of `t` for both targets, in a stable order.
    pub fn all_for(t: &Topology) -> Vec<LinkKey> {
        let mut keys = Vec::new();
        for target in [AttackTarget::Frequency, AttackTarget::Power] {
            for (i, j) in t.edges() {
                keys.push(LinkKey { receiver: i, sender: j, target });
                keys.push(LinkKey { receiver: j, sender: i, target });
            }
        }
        keys
    }
}

impl fmt::Display for LinkKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}<-{} ({})", self.receiver + 1, self.sender + 1, self.target.as_str())
    }
}

/// Received and rebuilt values of one link, sampled on the trace grid.
/// Samples past `received.len()` do not exist (link isolated).
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSignals {
    pub key: LinkKey,
    pub received: Vec<f64>,
    pub estimated: Vec<f64>,
}

impl LinkSignals {
    pub fn new(key: LinkKey) -> Self {
        LinkSignals {
            key,
            received: Vec::new(),
            estimated: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.received.len()
    }

    pub fn is_empty(&self) -> bool {
        self.received.is_empty()
    }

    pub fn residual_at(&self, k: usize) -> Option<f64> {
        Some(residual(*self.received.get(k)?, *self.estimated.get(k)?))
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.received
            .iter()
            .zip(&self.estimated)
            .map(|(&r, &e)| residual(r, e))
            .collect()
    }
}

/// Dwell-time test run sample by sample.
#[derive(Debug, Clone)]
pub struct OnlineDetector {
    threshold: f64,
    dwell_samples: usize,
    onset: Vec<Option<usize>>,
    flagged: Vec<Option<usize>>,
}

impl OnlineDetector {
    pub fn new(links: usize, threshold: f64, dwell: f64, step: f64) -> Self {
        // residual must stay above threshold over [onset, onset + dwell]
        let dwell_samples = (dwell / step - 1e-9).ceil().max(0.0) as usize;
        OnlineDetector {
            threshold,
            dwell_samples,
            onset: vec![None; links],
            flagged: vec![None; links],
        }
    }

    /// Feeds the residual of `link` at sample `k`; returns true on the sample
    /// where the link first becomes flagged.
    pub fn update(&mut self, link: usize, k: usize, residual: f64) -> bool {
        if self.flagged[link].is_some() {
            return false;
        }
        if residual > self.threshold {
            let onset = *self.onset[link].get_or_insert(k);
            if k - onset >= self.dwell_samples {
                self.flagged[link] = Some(k);
                return true;
            }
        } else {
            self.onset[link] = None;
        }
        false
    }

    pub fn flagged_at(&self, link: usize) -> Option<usize> {
        self.flagged[link]
    }

    pub fn onset(&self, link: usize) -> Option<usize> {
        self.onset[link]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IsolationResult {
    Isolated,
    Refused,
}

/// One isolation attempt made during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolationOutcome {
    pub edge: (usize, usize),
    pub time: f64,
    pub result: IsolationResult,
}

#[derive(Debug, Clone)]
pub struct LinkSummary {
    pub key: LinkKey,
    pub max_residual: f64,
    /// Start of the run of above-threshold samples that led to the flag.
    pub onset_time: Option<f64>,
    pub flagged_time: Option<f64>,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DetectionReport {
    pub threshold: f64,
    pub dwell: f64,
    pub links: Vec<LinkSummary>,
    pub isolations: Vec<IsolationOutcome>,
}

impl DetectionReport {
    pub fn flagged(&self) -> Vec<LinkKey> {
        self.links
            .iter()
            .filter(|l| l.flagged_time.is_some())
            .map(|l| l.key)
            .collect()
    }

    pub fn link(&self, key: LinkKey) -> Option<&LinkSummary> {
        self.links.iter().find(|l| l.key == key)
    }

    /// Largest residual over all links touching the undirected edge.
    pub fn edge_max_residual(&self, i: usize, j: usize) -> f64 {
        self.links
            .iter()
            .filter(|l| l.key.edge() == (i.min(j), i.max(j)))
            .map(|l| l.max_residual)
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for DetectionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "threshold: {}", self.threshold)?;
        writeln!(f, "dwell: {}", self.dwell)?;
        for l in &self.links {
            write!(
                f,
                "link {}-{} {}: max_residual={:.6e}",
                l.key.receiver + 1,
                l.key.sender + 1,
                l.key.target.as_str(),
                l.max_residual
            )?;
            match l.flagged_time {
                Some(t) => writeln!(f, " flagged_at={t}")?,
                None => writeln!(f)?,
            }
        }
        let flagged: Vec<String> = self.flagged().iter().map(|k| k.to_string()).collect();
        writeln!(f, "flagged: {}", if flagged.is_empty() { "none".into() } else { flagged.join(", ") })?;
        for iso in &self.isolations {
            let result = match iso.result {
                IsolationResult::Isolated => "isolated",
                IsolationResult::Refused => "refused (would disconnect)",
            };
            writeln!(
                f,
                "isolation {}-{} at {}: {result}",
                iso.edge.0 + 1,
                iso.edge.1 + 1,
                iso.time
            )?;
        }
        Ok(())
    }
}

/// Post-run detection pass over the link signals recorded in `trace`.
pub fn detect(trace: &Trace, threshold: f64, dwell: f64) -> DetectionReport {
    let signals = trace.link_signals();
    let mut det = OnlineDetector::new(signals.len(), threshold, dwell, trace.step());
    let mut links = Vec::with_capacity(signals.len());
    for (idx, sig) in signals.iter().enumerate() {
        let residuals = sig.residuals();
        let mut onset = None;
        for (k, &r) in residuals.iter().enumerate() {
            if det.update(idx, k, r) {
                onset = det.onset(idx);
            }
        }
        let max_residual = residuals.iter().copied().fold(0.0, f64::max);
        links.push(LinkSummary {
            key: sig.key,
            max_residual,
            onset_time: onset.map(|k| trace.time(k)),
            flagged_time: det.flagged_at(idx).map(|k| trace.time(k)),
            residuals,
        });
    }
    DetectionReport {
        threshold,
        dwell,
        links,
        isolations: trace.isolations().to_vec(),
    }
}

/// Removes the undirected edge `{i, j}` unless that disconnects the graph.
pub fn isolate(t: &Topology, edge: (usize, usize)) -> Result<Topology, DetectionError> {
    let candidate = t.remove_edge(edge.0, edge.1)?;
    if candidate.is_connected() {
        Ok(candidate)
    } else {
        Err(DetectionError::IsolationRefused(edge.0 + 1, edge.1 + 1))
    }
}
