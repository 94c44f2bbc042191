use num_complex::Complex64;

use super::{check_len, ControlError, ControlParams};
use crate::graph::Topology;
use crate::linalg::{kron, sym_eigen, Matrix};

/// Right-hand side of the leaderless power-sharing loop:
///
/// ```text
/// (m_P P)' = -L (m_P P) + beta L z + L d
/// z'       = -L z - beta L (m_P P)
/// ```
pub fn power_derivative(
    mp_p: &[f64],
    z: &[f64],
    d_p: &[f64],
    laplacian: &Matrix,
    p: &ControlParams,
) -> Result<(Vec<f64>, Vec<f64>), ControlError> {
    let n = laplacian.rows();
    if !laplacian.is_square() {
        return Err(ControlError::Shape("Laplacian must be square".into()));
    }
    check_len("mp_p", mp_p, n)?;
    check_len("z", z, n)?;
    check_len("d_p", d_p, n)?;
    let mut mp_dot = vec![0.0; n];
    let mut z_dot = vec![0.0; n];
    power_derivative_into(mp_p, z, d_p, laplacian, p.beta, &mut mp_dot, &mut z_dot);
    Ok((mp_dot, z_dot))
}

pub(crate) fn power_derivative_into(
    mp_p: &[f64],
    z: &[f64],
    d_p: &[f64],
    laplacian: &Matrix,
    beta: f64,
    mp_dot: &mut [f64],
    z_dot: &mut [f64],
) {
    for i in 0..laplacian.rows() {
        let l_row = laplacian.row(i);
        let mut lx = 0.0;
        let mut lz = 0.0;
        let mut ld = 0.0;
        for j in 0..mp_p.len() {
            lx += l_row[j] * mp_p[j];
            lz += l_row[j] * z[j];
            ld += l_row[j] * d_p[j];
        }
        mp_dot[i] = -lx + beta * lz + ld;
        z_dot[i] = -lz - beta * lx;
    }
}

/// Power loop without the auxiliary layer: `(m_P P)' = -L (m_P P) + L d`.
pub fn power_derivative_baseline(
    mp_p: &[f64],
    d_p: &[f64],
    laplacian: &Matrix,
) -> Result<Vec<f64>, ControlError> {
    let n = laplacian.rows();
    check_len("mp_p", mp_p, n)?;
    check_len("d_p", d_p, n)?;
    let mut mp_dot = vec![0.0; n];
    power_derivative_baseline_into(mp_p, d_p, laplacian, &mut mp_dot);
    Ok(mp_dot)
}

pub(crate) fn power_derivative_baseline_into(
    mp_p: &[f64],
    d_p: &[f64],
    laplacian: &Matrix,
    mp_dot: &mut [f64],
) {
    for i in 0..laplacian.rows() {
        let l_row = laplacian.row(i);
        let mut acc = 0.0;
        for j in 0..mp_p.len() {
            acc += l_row[j] * (d_p[j] - mp_p[j]);
        }
        mp_dot[i] = acc;
    }
}

/// Power loop expressed in the Laplacian eigenbasis with the consensus
/// (zero-eigenvalue) direction split off.
#[derive(Debug, Clone)]
pub struct PowerSystem {
    pub laplacian: Matrix,
    /// Orthonormal eigenvectors of `L` as columns; column 0 spans `1`.
    pub t: Matrix,
    /// Non-zero Laplacian eigenvalues, ascending (the diagonal of `R`).
    pub r: Vec<f64>,
    /// `[[-1, beta], [-beta, -1]]`.
    pub phi_tilde: Matrix,
    /// `Phi~ (x) R`, size `2(n-1)`.
    pub k_tilde: Matrix,
    pub beta: f64,
}

pub fn build_power_reduction(laplacian: &Matrix, beta: f64) -> Result<PowerSystem, ControlError> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(ControlError::InvalidParams(format!("beta must be > 0, got {beta}")));
    }
    let n = laplacian.rows();
    if n < 2 {
        return Err(ControlError::InvalidParams(
            "power reduction needs at least two nodes".into(),
        ));
    }
    let eig = sym_eigen(laplacian)?;
    if eig.eigenvalues[1] <= Topology::connectivity_tol() {
        return Err(ControlError::Disconnected);
    }
    let r = eig.eigenvalues[1..].to_vec();
    let phi_tilde = Matrix::from_rows(&[[-1.0, beta], [-beta, -1.0]])?;
    let k_tilde = kron(&phi_tilde, &Matrix::from_diag(&r));
    Ok(PowerSystem {
        laplacian: laplacian.clone(),
        t: eig.eigenvectors,
        r,
        phi_tilde,
        k_tilde,
        beta,
    })
}

impl PowerSystem {
    pub fn n(&self) -> usize {
        self.laplacian.rows()
    }

    /// `T^{-1} x = T^T x`, split into the consensus coordinate and the rest.
    pub fn reduce(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let y = self.t.transpose().matvec(x).expect("length n");
        (y[0], y[1..].to_vec())
    }

    pub fn expand(&self, bar: f64, tilde: &[f64]) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.n());
        y.push(bar);
        y.extend_from_slice(tilde);
        self.t.matvec(&y).expect("length n")
    }

    /// `T^{-1} L T`, which is `diag(0, R)` up to rounding.
    pub fn diagonalized(&self) -> Matrix {
        self.t
            .transpose()
            .matmul(&self.laplacian)
            .and_then(|m| m.matmul(&self.t))
            .expect("square")
    }
}

/// Eigenvalues of `K~`: products of `-1 +- j beta` with the non-zero
/// Laplacian eigenvalues.
pub fn power_eigen_products(sys: &PowerSystem) -> Vec<Complex64> {
    let phi_eigs = [
        Complex64::new(-1.0, sys.beta),
        Complex64::new(-1.0, -sys.beta),
    ];
    phi_eigs
        .iter()
        .flat_map(|mu| sys.r.iter().map(move |&lam| mu * lam))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ControlParams {
        ControlParams {
            beta: 2.0,
            omega_ref: 314.0,
            droop: vec![2e-3, 2e-3, 3e-3, 3e-3],
        }
    }

    fn cycle_laplacian() -> Matrix {
        Topology::cycle(4, vec![0.0; 4]).unwrap().laplacian()
    }

    #[test]
    fn consensus_is_a_fixed_point() {
        let l = cycle_laplacian();
        let (x, z) = power_derivative(&[13.45; 4], &[0.3; 4], &[0.0; 4], &l, &params()).unwrap();
        assert!(x.iter().chain(&z).all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn sums_are_conserved_under_attack() {
        let l = cycle_laplacian();
        let (x, z) = power_derivative(
            &[13.4, 13.4, 13.5, 13.5],
            &[0.9, -0.4, 0.1, 0.7],
            &[-4.0, -2.5, 3.0, 1.5],
            &l,
            &params(),
        )
        .unwrap();
        assert!(x.iter().sum::<f64>().abs() < 1e-12);
        assert!(z.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn reduction_diagonalizes_laplacian() {
        let l = cycle_laplacian();
        let ps = build_power_reduction(&l, 2.0).unwrap();
        let d = ps.diagonalized();
        let want = Matrix::from_diag(&[0.0, 2.0, 2.0, 4.0]);
        assert!(d.sub(&want).unwrap().max_abs() < 1e-9);
        assert_eq!(ps.k_tilde.rows(), 6);
        assert!(ps.r.iter().all(|&v| v > 0.0));
        assert!(power_eigen_products(&ps).iter().all(|c| c.re < 0.0));

        let x = [1.0, -2.0, 0.5, 3.0];
        let (bar, tilde) = ps.reduce(&x);
        let back = ps.expand(bar, &tilde);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn disconnected_reduction_is_rejected() {
        let split = Topology::new(4, &[(0, 1), (2, 3)], vec![0.0; 4]).unwrap();
        assert_eq!(
            build_power_reduction(&split.laplacian(), 2.0).unwrap_err(),
            ControlError::Disconnected
        );
    }
}
