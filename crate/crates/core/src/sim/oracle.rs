use crate::attacks::AttackTarget;
use crate::graph::Topology;
use crate::linalg::{mat_exp, Matrix};

use super::engine::{apply_events, initial_state, record, Layout, Schedule};
use super::scenario::Scenario;
use super::trace::Trace;
use super::SimError;

/// Affine stacked system `x' = M x + c` written as one linear system on
/// `[x; 1]`, for the inputs in force at sample `k`.
fn augmented_matrix(s: &Scenario, schedule: &Schedule<'_>, k: usize, topology: &Topology) -> Matrix {
    let n = s.n();
    let ly = Layout { n };
    let dim = ly.dim() + 1;
    let one = ly.dim();
    let beta = s.control.beta;
    let w_ref = s.control.omega_ref;
    let aux = s.auxiliary;

    let a = topology.pinned_matrix();
    let l = topology.laplacian();
    let g = topology.pinning();
    let lu_w = l.matvec(&schedule.link_vector(k, AttackTarget::Frequency, topology)).expect("n");
    let lu_p = l.matvec(&schedule.link_vector(k, AttackTarget::Power, topology)).expect("n");

    let (w, zw, mp, zp, dw, dp) = (0, n, 2 * n, 3 * n, 4 * n, 5 * n);
    let mut m = Matrix::zeros(dim, dim);
    m.set_block(w, w, &a);
    m.set_block(w, dw, &l);
    m.set_block(mp, mp, &l.scale(-1.0));
    m.set_block(mp, dp, &l);
    for i in 0..n {
        m[(w + i, one)] = g[i] * w_ref + lu_w[i];
        m[(mp + i, one)] = lu_p[i];
    }
    if aux {
        m.set_block(w, zw, &a.scale(beta));
        m.set_block(zw, w, &a.scale(-beta));
        m.set_block(zw, zw, &a);
        m.set_block(mp, zp, &l.scale(beta));
        m.set_block(zp, mp, &l.scale(-beta));
        m.set_block(zp, zp, &l.scale(-1.0));
        for i in 0..n {
            // beta C w*, with C = -G 1
            m[(zw + i, one)] = -beta * g[i] * w_ref;
        }
    }
    if let Some(at) = schedule.lti_active(k, AttackTarget::Frequency) {
        m.set_block(dw, w, &at.g);
        m.set_block(dw, dw, &at.f);
    }
    if let Some(at) = schedule.lti_active(k, AttackTarget::Power) {
        m.set_block(dp, mp, &at.g);
        m.set_block(dp, dp, &at.f);
    }
    m
}

/// Exact solution of the piecewise-affine stacked system. Between input
/// changes the state advances with the one-step propagator `exp(M h)`.
/// Online detection is not modelled; scenarios with auto-isolation are
/// rejected.
pub fn closed_form_oracle(s: &Scenario) -> Result<Trace, SimError> {
    s.validate()?;
    if s.detection.enabled && s.detection.auto_isolate {
        return Err(SimError::Unsupported("closed-form oracle does not model link isolation".into()));
    }
    let n = s.n();
    let ly = Layout { n };
    let schedule = Schedule::new(s);
    let h = schedule.step;
    let topology = &s.topology;

    let mut trace = Trace::new(n, h, topology.clone(), s.control.beta, s.control.omega_ref, s.control.droop.clone());
    let mut x = initial_state(s, s.auxiliary);
    x.push(1.0);
    let mut propagator: Option<Matrix> = None;
    let mut next = vec![0.0; x.len()];

    for k in 0..=schedule.steps {
        apply_events(&schedule, k, &mut x[..ly.dim()], &s.control.droop, ly);
        let link_w = schedule.link_vector(k, AttackTarget::Frequency, topology);
        let link_p = schedule.link_vector(k, AttackTarget::Power, topology);
        record(&mut trace, schedule.time(k), &x[..ly.dim()], &link_w, &link_p, ly);
        if k == schedule.steps {
            break;
        }
        if propagator.is_none() || schedule.boundary_at(k) {
            let m = augmented_matrix(s, &schedule, k, topology);
            propagator = Some(mat_exp(&m, h)?);
        }
        let p = propagator.as_ref().expect("built above");
        for (i, out) in next.iter_mut().enumerate() {
            *out = crate::linalg::dot(p.row(i), &x);
        }
        std::mem::swap(&mut x, &mut next);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SimError::Diverged { time: schedule.time(k + 1) });
        }
    }
    Ok(trace)
}
