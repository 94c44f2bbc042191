//! False-data-injection attack models.
//!
//! Two shapes are supported: a constant injection on one directed
//! communication link (what node `receiver` hears from `sender`), and a
//! node-level linear attack generator `d' = F d + G x` fed by the attacked
//! loop's own state.

use crate::graph::Topology;
use crate::linalg::{norm2, sym_eigen, Matrix};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AttackError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid attack: {0}")]
    Invalid(String),
    #[error("attack generator F is not verifiably Hurwitz: {0}")]
    NotHurwitz(String),
    #[error("link ({receiver}, {sender}) is not an edge of the topology")]
    MissingEdge { receiver: usize, sender: usize },
    #[error("empty trace")]
    EmptyTrace,
}

/// Which exchanged signal an attack corrupts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackTarget {
    Frequency,
    Power,
}

impl AttackTarget {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackTarget::Frequency => "frequency",
            AttackTarget::Power => "power",
        }
    }
}

impl std::str::FromStr for AttackTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "frequency" => Ok(AttackTarget::Frequency),
            "power" => Ok(AttackTarget::Power),
            other => Err(format!("unknown attack target `{other}` (frequency|power)")),
        }
    }
}

/// Constant additive corruption of the signal node `receiver` gets from
/// `sender`, active on `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkInjection {
    pub receiver: usize,
    pub sender: usize,
    pub target: AttackTarget,
    pub value: f64,
    pub start: f64,
    pub end: Option<f64>,
}

impl LinkInjection {
    pub fn is_active(&self, t: f64) -> bool {
        t >= self.start && self.end.is_none_or(|e| t < e)
    }

    pub fn validate(&self, topology: &Topology) -> Result<(), AttackError> {
        let n = topology.n();
        if self.receiver >= n || self.sender >= n {
            return Err(AttackError::Invalid(format!(
                "link ({}, {}) out of range for {n} nodes",
                self.receiver + 1,
                self.sender + 1
            )));
        }
        if !topology.has_edge(self.receiver, self.sender) {
            return Err(AttackError::MissingEdge {
                receiver: self.receiver + 1,
                sender: self.sender + 1,
            });
        }
        if !self.value.is_finite() || !self.start.is_finite() || self.start < 0.0 {
            return Err(AttackError::Invalid("link injection needs finite value and start >= 0".into()));
        }
        if let Some(end) = self.end {
            if !(end.is_finite() && end > self.start) {
                return Err(AttackError::Invalid(format!(
                    "link injection end {end} must be after start {}",
                    self.start
                )));
            }
        }
        Ok(())
    }
}

/// Node-level linear attack generator `d' = F d + G x`, switched on at
/// `start` with `d(start) = d0`. `x` is the frequency vector for frequency
/// attacks and `m_P P` for power attacks.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiAttack {
    pub target: AttackTarget,
    pub f: Matrix,
    pub g: Matrix,
    pub d0: Vec<f64>,
    pub start: f64,
}

impl LtiAttack {
    pub fn is_active(&self, t: f64) -> bool {
        t >= self.start
    }

    pub fn n(&self) -> usize {
        self.d0.len()
    }

    pub fn validate(&self, n: usize) -> Result<(), AttackError> {
        for (name, m) in [("F", &self.f), ("G", &self.g)] {
            if m.rows() != n || m.cols() != n {
                return Err(AttackError::Shape(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    m.rows(),
                    m.cols()
                )));
            }
            if !m.is_finite() {
                return Err(AttackError::Invalid(format!("{name} has non-finite entries")));
            }
        }
        if self.d0.len() != n {
            return Err(AttackError::Shape(format!(
                "d0 has length {}, expected {n}",
                self.d0.len()
            )));
        }
        if !self.d0.iter().all(|v| v.is_finite()) || !(self.start.is_finite() && self.start >= 0.0) {
            return Err(AttackError::Invalid("d0 and start must be finite, start >= 0".into()));
        }
        check_hurwitz(&self.f)
    }
}

/// Symmetric `F`: largest eigenvalue negative. Otherwise: strictly
/// diagonally dominant rows with negative diagonal (Gershgorin).
fn check_hurwitz(f: &Matrix) -> Result<(), AttackError> {
    if f.is_symmetric(1e-12) {
        let eig = sym_eigen(f).map_err(|e| AttackError::NotHurwitz(e.to_string()))?;
        return if eig.max() < 0.0 {
            Ok(())
        } else {
            Err(AttackError::NotHurwitz(format!(
                "largest eigenvalue {} is not negative",
                eig.max()
            )))
        };
    }
    for i in 0..f.rows() {
        let off: f64 = (0..f.cols()).filter(|&j| j != i).map(|j| f[(i, j)].abs()).sum();
        if !(f[(i, i)] < 0.0 && -f[(i, i)] > off) {
            return Err(AttackError::NotHurwitz(format!(
                "row {} is not strictly diagonally dominant with negative diagonal",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Either attack shape, as listed in a scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum Attack {
    Link(LinkInjection),
    Lti(LtiAttack),
}

impl Attack {
    pub fn target(&self) -> AttackTarget {
        match self {
            Attack::Link(l) => l.target,
            Attack::Lti(a) => a.target,
        }
    }

    pub fn start(&self) -> f64 {
        match self {
            Attack::Link(l) => l.start,
            Attack::Lti(a) => a.start,
        }
    }
}

/// `F d + G x` for an active generator.
pub fn attack_derivative(d: &[f64], coupled_state: &[f64], a: &LtiAttack) -> Result<Vec<f64>, AttackError> {
    let n = a.f.rows();
    if d.len() != n || coupled_state.len() != n {
        return Err(AttackError::Shape(format!(
            "attack state {} / coupled state {} against {n}x{n} generator",
            d.len(),
            coupled_state.len()
        )));
    }
    let mut out = vec![0.0; n];
    attack_derivative_into(d, coupled_state, a, &mut out);
    Ok(out)
}

pub(crate) fn attack_derivative_into(d: &[f64], x: &[f64], a: &LtiAttack, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let fr = a.f.row(i);
        let gr = a.g.row(i);
        let mut acc = 0.0;
        for j in 0..d.len() {
            acc += fr[j] * d[j] + gr[j] * x[j];
        }
        *o = acc;
    }
}

/// Node vector whose entry `i` sums the active injections received by `i`.
pub fn aggregate_links<'a>(
    links: impl IntoIterator<Item = &'a LinkInjection>,
    t: f64,
    target: AttackTarget,
    n: usize,
) -> Vec<f64> {
    let mut d = vec![0.0; n];
    for link in links {
        if link.target == target && link.is_active(t) {
            d[link.receiver] += link.value;
        }
    }
    d
}

/// Largest Euclidean norm over the samples.
pub fn empirical_sup_norm<'a>(samples: impl IntoIterator<Item = &'a [f64]>) -> Result<f64, AttackError> {
    let mut any = false;
    let mut sup = 0.0f64;
    for s in samples {
        any = true;
        sup = sup.max(norm2(s));
    }
    if any {
        Ok(sup)
    } else {
        Err(AttackError::EmptyTrace)
    }
}
