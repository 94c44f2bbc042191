use num_complex::Complex64;

use super::{check_len, require_connected, ControlError, ControlParams};
use crate::graph::Topology;
use crate::linalg::{kron, sym_eigen, Matrix};

/// Frequency loop matrices.
///
/// ```text
/// w' = A w + beta A z + B w* + L d
/// z' = A z - beta A w + beta C w*
/// ```
#[derive(Debug, Clone)]
pub struct FreqSystem {
    pub a: Matrix,
    /// `G 1`.
    pub b: Vec<f64>,
    /// `A 1`, equal to `-G 1`.
    pub c: Vec<f64>,
    pub laplacian: Matrix,
    /// `[[1, beta], [-beta, 1]]`.
    pub phi: Matrix,
    /// Error-coordinate system matrix `Phi (x) A`.
    pub k: Matrix,
    pub beta: f64,
}

impl FreqSystem {
    pub fn n(&self) -> usize {
        self.a.rows()
    }
}

pub fn build_freq_system(t: &Topology, p: &ControlParams) -> Result<FreqSystem, ControlError> {
    p.validate(t.n())?;
    if !t.has_leader() {
        return Err(ControlError::NoLeader);
    }
    require_connected(t)?;

    let a = t.pinned_matrix();
    let b = t.pinning().to_vec();
    let c = a.matvec(&vec![1.0; t.n()])?;
    let phi = Matrix::from_rows(&[[1.0, p.beta], [-p.beta, 1.0]])?;
    let k = kron(&phi, &a);
    Ok(FreqSystem {
        a,
        b,
        c,
        laplacian: t.laplacian(),
        phi,
        k,
        beta: p.beta,
    })
}

/// Right-hand side of the resilient frequency loop.
pub fn freq_derivative(
    omega: &[f64],
    z: &[f64],
    d_omega: &[f64],
    sys: &FreqSystem,
    p: &ControlParams,
) -> Result<(Vec<f64>, Vec<f64>), ControlError> {
    let n = sys.n();
    check_len("omega", omega, n)?;
    check_len("z", z, n)?;
    check_len("d_omega", d_omega, n)?;
    let mut w_dot = vec![0.0; n];
    let mut z_dot = vec![0.0; n];
    freq_derivative_into(omega, z, d_omega, sys, p.omega_ref, &mut w_dot, &mut z_dot);
    Ok((w_dot, z_dot))
}

/// Allocation-free variant used by the integrator. Lengths are not checked.
pub(crate) fn freq_derivative_into(
    omega: &[f64],
    z: &[f64],
    d_omega: &[f64],
    sys: &FreqSystem,
    omega_ref: f64,
    w_dot: &mut [f64],
    z_dot: &mut [f64],
) {
    let beta = sys.beta;
    for i in 0..sys.n() {
        let a_row = sys.a.row(i);
        let l_row = sys.laplacian.row(i);
        let mut aw = 0.0;
        let mut az = 0.0;
        let mut ld = 0.0;
        for j in 0..omega.len() {
            aw += a_row[j] * omega[j];
            az += a_row[j] * z[j];
            ld += l_row[j] * d_omega[j];
        }
        w_dot[i] = aw + beta * az + sys.b[i] * omega_ref + ld;
        z_dot[i] = az - beta * aw + beta * sys.c[i] * omega_ref;
    }
}

/// Frequency loop with the auxiliary layer removed: `w' = A w + B w* + L d`.
pub fn freq_derivative_baseline(
    omega: &[f64],
    d_omega: &[f64],
    sys: &FreqSystem,
    p: &ControlParams,
) -> Result<Vec<f64>, ControlError> {
    let n = sys.n();
    check_len("omega", omega, n)?;
    check_len("d_omega", d_omega, n)?;
    let mut w_dot = vec![0.0; n];
    freq_derivative_baseline_into(omega, d_omega, sys, p.omega_ref, &mut w_dot);
    Ok(w_dot)
}

pub(crate) fn freq_derivative_baseline_into(
    omega: &[f64],
    d_omega: &[f64],
    sys: &FreqSystem,
    omega_ref: f64,
    w_dot: &mut [f64],
) {
    for i in 0..sys.n() {
        let a_row = sys.a.row(i);
        let l_row = sys.laplacian.row(i);
        let mut acc = sys.b[i] * omega_ref;
        for j in 0..omega.len() {
            acc += a_row[j] * omega[j] + l_row[j] * d_omega[j];
        }
        w_dot[i] = acc;
    }
}

/// Eigenvalues of `K` through the Kronecker structure: every product of
/// `1 +- j beta` with an eigenvalue of the symmetric `A`.
pub fn freq_eigen_products(sys: &FreqSystem) -> Result<Vec<Complex64>, ControlError> {
    let eig = sym_eigen(&sys.a)?;
    let phi_eigs = [Complex64::new(1.0, sys.beta), Complex64::new(1.0, -sys.beta)];
    Ok(phi_eigs
        .iter()
        .flat_map(|mu| eig.eigenvalues.iter().map(move |&lam| mu * lam))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(beta: f64) -> (Topology, ControlParams) {
        let t = Topology::cycle(4, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let p = ControlParams {
            beta,
            omega_ref: 314.0,
            droop: vec![2e-3, 2e-3, 3e-3, 3e-3],
        };
        (t, p)
    }

    #[test]
    fn case_study_vectors() {
        let (t, p) = setup(2.0);
        let sys = build_freq_system(&t, &p).unwrap();
        assert_eq!(sys.b, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(sys.c, vec![-1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn k_matches_block_assembly() {
        let (t, p) = setup(2.0);
        let sys = build_freq_system(&t, &p).unwrap();
        let a = &sys.a;
        let n = 4;
        let mut direct = Matrix::zeros(2 * n, 2 * n);
        direct.set_block(0, 0, a);
        direct.set_block(0, n, &a.scale(2.0));
        direct.set_block(n, 0, &a.scale(-2.0));
        direct.set_block(n, n, a);
        assert_eq!(sys.k, direct);
    }

    #[test]
    fn reference_is_a_fixed_point() {
        let (t, p) = setup(2.0);
        let sys = build_freq_system(&t, &p).unwrap();
        let (w, z) = freq_derivative(&[314.0; 4], &[0.0; 4], &[0.0; 4], &sys, &p).unwrap();
        assert!(w.iter().chain(&z).all(|v| v.abs() < 1e-12));
        let wb = freq_derivative_baseline(&[314.0; 4], &[0.0; 4], &sys, &p).unwrap();
        assert!(wb.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn derivative_is_affine() {
        let (t, p) = setup(1.5);
        let sys = build_freq_system(&t, &p).unwrap();
        let w = [310.0, 312.0, 316.0, 318.0];
        let z = [0.5, -0.2, 0.1, 0.0];
        let d = [1.0, -2.0, 0.5, 0.25];
        let (w0, z0) = freq_derivative(&w, &z, &[0.0; 4], &sys, &p).unwrap();
        let (w1, z1) = freq_derivative(&w, &z, &d, &sys, &p).unwrap();
        let ld = sys.laplacian.matvec(&d).unwrap();
        for i in 0..4 {
            assert!((w1[i] - w0[i] - ld[i]).abs() < 1e-12);
            assert!((z1[i] - z0[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn configuration_errors() {
        let (t, p) = setup(2.0);
        let unpinned = t.with_pinning(vec![0.0; 4]).unwrap();
        assert_eq!(build_freq_system(&unpinned, &p).unwrap_err(), ControlError::NoLeader);
        let split = Topology::new(4, &[(0, 1), (2, 3)], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(build_freq_system(&split, &p).unwrap_err(), ControlError::Disconnected);
        let bad = ControlParams { beta: 0.0, ..p };
        assert!(matches!(build_freq_system(&t, &bad), Err(ControlError::InvalidParams(_))));
        let sys = build_freq_system(&t, &setup(2.0).1).unwrap();
        assert!(matches!(
            freq_derivative(&[0.0; 3], &[0.0; 4], &[0.0; 4], &sys, &setup(2.0).1),
            Err(ControlError::Shape(_))
        ));
    }

    #[test]
    fn case_study_k_is_hurwitz() {
        let (t, p) = setup(2.0);
        let sys = build_freq_system(&t, &p).unwrap();
        let prods = freq_eigen_products(&sys).unwrap();
        assert_eq!(prods.len(), 8);
        // real parts are the eigenvalues of A: -(roots of l^3 - 7l^2 + 12l - 2) and -2
        let cubic = |l: f64| ((l - 7.0) * l + 12.0) * l - 2.0;
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cubic(lo) * cubic(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let lam_min = 0.5 * (lo + hi);
        assert!(prods.iter().all(|c| c.re < 0.0));
        let slowest = prods.iter().map(|c| c.re).fold(f64::MIN, f64::max);
        assert!((slowest + lam_min).abs() < 1e-9);
    }
}
