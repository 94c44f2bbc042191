use super::{LinalgError, Matrix, Result};

const PIVOT_REL_TOL: f64 = 1e-12;

/// Solves `M x = b` by Gaussian elimination with partial pivoting.
pub fn solve(m: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let rhs = Matrix::from_fn(b.len(), 1, |i, _| b[i]);
    if b.is_empty() {
        return Err(LinalgError::Shape("empty right-hand side".into()));
    }
    Ok(solve_many(m, &rhs)?.column(0))
}

/// `M^{-1}`; fails with [`LinalgError::Singular`] like [`solve`].
pub fn inverse(m: &Matrix) -> Result<Matrix> {
    solve_many(m, &Matrix::identity(m.rows()))
}

fn solve_many(m: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(LinalgError::Shape(format!(
            "solve needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    if rhs.rows() != n {
        return Err(LinalgError::Shape(format!(
            "right-hand side has {} rows, matrix has {n}",
            rhs.rows()
        )));
    }
    let threshold = PIVOT_REL_TOL * m.norm_inf();
    let k = rhs.cols();
    let mut a = m.clone();
    let mut x = rhs.clone();

    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, a[(r, col)]))
            .max_by(|p, q| p.1.abs().total_cmp(&q.1.abs()))
            .unwrap();
        if !(pivot.abs() > threshold) {
            return Err(LinalgError::Singular {
                pivot: pivot.abs(),
                threshold,
            });
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = a[(col, j)];
                a[(col, j)] = a[(pivot_row, j)];
                a[(pivot_row, j)] = tmp;
            }
            for j in 0..k {
                let tmp = x[(col, j)];
                x[(col, j)] = x[(pivot_row, j)];
                x[(pivot_row, j)] = tmp;
            }
        }
        for r in (col + 1)..n {
            let factor = a[(r, col)] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[(r, j)] -= factor * a[(col, j)];
            }
            for j in 0..k {
                x[(r, j)] -= factor * x[(col, j)];
            }
        }
    }

    for col in (0..n).rev() {
        for j in 0..k {
            let mut s = x[(col, j)];
            for c in (col + 1)..n {
                s -= a[(col, c)] * x[(c, j)];
            }
            x[(col, j)] = s / a[(col, col)];
        }
    }
    Ok(x)
}
