use super::{LinalgError, Matrix, Result};

const SCALED_NORM_LIMIT: f64 = 0.5;
const SERIES_TOL: f64 = 1e-16;
const MAX_TERMS: usize = 60;
// beyond this e^{||Mt||} is far outside f64 range for any non-trivial M
const MAX_ARG_NORM: f64 = 700.0 * 1024.0;

/// `e^{M t}` by scaling and squaring around a truncated Taylor series.
pub fn mat_exp(m: &Matrix, t: f64) -> Result<Matrix> {
    if !m.is_square() {
        return Err(LinalgError::Shape(format!(
            "matrix exponential needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(LinalgError::Domain(format!("duration must be finite and >= 0, got {t}")));
    }
    let mt = m.scale(t);
    let norm = mt.norm_inf();
    if !norm.is_finite() || norm > MAX_ARG_NORM {
        return Err(LinalgError::Domain(format!("||M t|| = {norm:e} is too large")));
    }

    let mut squarings = 0u32;
    let mut scaled_norm = norm;
    while scaled_norm > SCALED_NORM_LIMIT {
        scaled_norm *= 0.5;
        squarings += 1;
    }
    let x = mt.scale(0.5f64.powi(squarings as i32));

    let n = m.rows();
    let mut sum = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for k in 1..=MAX_TERMS {
        term = term.matmul(&x)?.scale(1.0 / k as f64);
        sum = sum.add(&term)?;
        if term.max_abs() <= SERIES_TOL * sum.max_abs() {
            break;
        }
    }

    for _ in 0..squarings {
        sum = sum.matmul(&sum)?;
    }
    if !sum.is_finite() {
        return Err(LinalgError::Domain("matrix exponential overflowed".into()));
    }
    Ok(sum)
}

/// `e^{M t} x0`.
pub fn mat_exp_apply(m: &Matrix, t: f64, x0: &[f64]) -> Result<Vec<f64>> {
    if x0.len() != m.cols() {
        return Err(LinalgError::Shape(format!(
            "vector of length {} against {}x{} matrix",
            x0.len(),
            m.rows(),
            m.cols()
        )));
    }
    mat_exp(m, t)?.matvec(x0)
}
