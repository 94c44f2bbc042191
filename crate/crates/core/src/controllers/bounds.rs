use super::{require_connected, ControlError};
use crate::graph::Topology;
use crate::linalg::{inverse, operator_norm, Matrix};

fn check_bound_inputs(beta: f64, d_bar: f64) -> Result<(), ControlError> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(ControlError::InvalidParams(format!("beta must be > 0, got {beta}")));
    }
    if !(d_bar.is_finite() && d_bar >= 0.0) {
        return Err(ControlError::InvalidParams(format!(
            "attack bound must be finite and >= 0, got {d_bar}"
        )));
    }
    Ok(())
}

/// Steady-state frequency error bound
/// `lambda_max(L) d_bar / (lambda_min(L + G) sqrt(1 + beta^2))`.
pub fn bound_epsilon_omega(t: &Topology, beta: f64, d_bar: f64) -> Result<f64, ControlError> {
    check_bound_inputs(beta, d_bar)?;
    if !t.has_leader() {
        return Err(ControlError::NoLeader);
    }
    require_connected(t)?;
    let lam_max = t.lambda_max_laplacian();
    let lam_min = t.lambda_min_pinned();
    Ok(lam_max * d_bar / (lam_min * (1.0 + beta * beta).sqrt()))
}

/// Steady-state power-sharing error bound
/// `lambda_max(L) d_bar / (lambda_2(L) sqrt(1 + beta^2))`.
pub fn bound_epsilon_p(t: &Topology, beta: f64, d_bar: f64) -> Result<f64, ControlError> {
    check_bound_inputs(beta, d_bar)?;
    let fiedler = t.fiedler_value();
    if t.n() < 2 || fiedler <= Topology::connectivity_tol() {
        return Err(ControlError::Disconnected);
    }
    Ok(t.lambda_max_laplacian() * d_bar / (fiedler * (1.0 + beta * beta).sqrt()))
}

/// Returns `(closed form, numeric)` for the norm of the stacked matrix
/// `[(A + beta^2 A)^{-1}; beta (A + beta^2 A)^{-1}]`.
pub fn h_beta_norm_check(t: &Topology, beta: f64) -> Result<(f64, f64), ControlError> {
    check_bound_inputs(beta, 0.0)?;
    if !t.has_leader() {
        return Err(ControlError::NoLeader);
    }
    require_connected(t)?;
    let n = t.n();
    let a = t.pinned_matrix();
    let inv = inverse(&a.scale(1.0 + beta * beta))?;
    let mut stacked = Matrix::zeros(2 * n, n);
    stacked.set_block(0, 0, &inv);
    stacked.set_block(n, 0, &inv.scale(beta));
    let numeric = operator_norm(&stacked)?;
    let analytic = 1.0 / (t.lambda_min_pinned() * (1.0 + beta * beta).sqrt());
    Ok((analytic, numeric))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper() -> Topology {
        Topology::cycle(4, vec![1.0, 0.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn zero_attack_gives_zero_bounds() {
        assert_eq!(bound_epsilon_omega(&paper(), 2.0, 0.0).unwrap(), 0.0);
        assert_eq!(bound_epsilon_p(&paper(), 2.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn case_study_bounds() {
        // lambda_min(L + G) is the smallest root of l^3 - 7 l^2 + 12 l - 2
        let cubic = |l: f64| ((l - 7.0) * l + 12.0) * l - 2.0;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cubic(lo) * cubic(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let lam_min = 0.5 * (lo + hi);
        let want = 4.0 / (lam_min * 5f64.sqrt());
        let got = bound_epsilon_omega(&paper(), 2.0, 1.0).unwrap();
        assert!((got - want).abs() < 1e-10 * want, "{got} vs {want}");

        let got_p = bound_epsilon_p(&paper(), 2.0, 1.0).unwrap();
        assert!((got_p - 4.0 / (2.0 * 5f64.sqrt())).abs() < 1e-12);

        let k4 = Topology::complete(4, vec![0.0; 4]).unwrap();
        let got_k4 = bound_epsilon_p(&k4, 2.0, 1.0).unwrap();
        assert!((got_k4 - 4.0 / (4.0 * 5f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn larger_beta_shrinks_bound() {
        let b1 = bound_epsilon_omega(&paper(), 2.0, 1.0).unwrap();
        let b2 = bound_epsilon_omega(&paper(), 4.0, 1.0).unwrap();
        assert!(b2 < b1);
    }

    #[test]
    fn h_beta_closed_form_matches_numeric() {
        for beta in [0.5, 1.0, 2.0, 5.0] {
            let (analytic, numeric) = h_beta_norm_check(&paper(), beta).unwrap();
            assert!(((analytic - numeric) / analytic).abs() < 1e-10);
        }
    }

    #[test]
    fn errors() {
        let split = Topology::new(4, &[(0, 1), (2, 3)], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(bound_epsilon_p(&split, 2.0, 1.0).unwrap_err(), ControlError::Disconnected);
        assert_eq!(
            bound_epsilon_omega(&split, 2.0, 1.0).unwrap_err(),
            ControlError::Disconnected
        );
        let unpinned = paper().with_pinning(vec![0.0; 4]).unwrap();
        assert_eq!(h_beta_norm_check(&unpinned, 2.0).unwrap_err(), ControlError::NoLeader);
        assert!(bound_epsilon_p(&paper(), -1.0, 1.0).is_err());
    }
}
