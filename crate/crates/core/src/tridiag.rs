//! Complex tridiagonal solves (Thomas algorithm and its cyclic variant).

use num_complex::Complex64;

/// Pivots smaller than this (in modulus) are rejected as singular.
pub const PIVOT_FLOOR: f64 = 1e-300;

/// Index of the row whose pivot vanished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingularPivot(pub usize);

/// Solves `A x = rhs` for tridiagonal `A` with constant off-diagonals
/// `lower` (row i, column i-1) and `upper` (row i, column i+1).
pub fn solve_constant_offdiag(
    lower: Complex64,
    diag: &[Complex64],
    upper: Complex64,
    rhs: &[Complex64],
) -> Result<Vec<Complex64>, SingularPivot> {
    let n = diag.len();
    debug_assert_eq!(rhs.len(), n);
    let mut c_prime = vec![Complex64::new(0.0, 0.0); n];
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    let mut pivot = diag[0];
    if pivot.norm() < PIVOT_FLOOR {
        return Err(SingularPivot(0));
    }
    c_prime[0] = upper / pivot;
    x[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - lower * c_prime[i - 1];
        if pivot.norm() < PIVOT_FLOOR {
            return Err(SingularPivot(i));
        }
        c_prime[i] = upper / pivot;
        x[i] = (rhs[i] - lower * x[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= c_prime[i] * next;
    }
    Ok(x)
}

/// Cyclic version: additionally `A[0][n-1] = lower` and `A[n-1][0] = upper`.
/// Uses the Sherman–Morrison correction on top of two Thomas solves.
pub fn solve_cyclic_constant_offdiag(
    lower: Complex64,
    diag: &[Complex64],
    upper: Complex64,
    rhs: &[Complex64],
) -> Result<Vec<Complex64>, SingularPivot> {
    let n = diag.len();
    assert!(n >= 3, "cyclic solve needs at least 3 rows");
    // A = B + u vᵀ with u = (γ, 0, …, 0, upper), v = (1, 0, …, 0, lower/γ)
    let gamma = -diag[0];
    let mut b = diag.to_vec();
    b[0] = diag[0] - gamma;
    b[n - 1] = diag[n - 1] - upper * lower / gamma;
    let x = solve_constant_offdiag(lower, &b, upper, rhs)?;
    let mut u = vec![Complex64::new(0.0, 0.0); n];
    u[0] = gamma;
    u[n - 1] = upper;
    let z = solve_constant_offdiag(lower, &b, upper, &u)?;
    let vx = x[0] + lower / gamma * x[n - 1];
    let vz = z[0] + lower / gamma * z[n - 1];
    let denom = Complex64::new(1.0, 0.0) + vz;
    if denom.norm() < PIVOT_FLOOR {
        return Err(SingularPivot(n - 1));
    }
    let factor = vx / denom;
    Ok(x.iter().zip(&z).map(|(xi, zi)| xi - factor * zi).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn apply(lower: Complex64, diag: &[Complex64], upper: Complex64, x: &[Complex64], cyclic: bool) -> Vec<Complex64> {
        let n = diag.len();
        (0..n)
            .map(|i| {
                let mut s = diag[i] * x[i];
                if i > 0 {
                    s += lower * x[i - 1];
                } else if cyclic {
                    s += lower * x[n - 1];
                }
                if i + 1 < n {
                    s += upper * x[i + 1];
                } else if cyclic {
                    s += upper * x[0];
                }
                s
            })
            .collect()
    }

    #[test]
    fn thomas_round_trip() {
        let diag: Vec<_> = (0..9).map(|i| c(3.0 + i as f64 * 0.1, 0.5)).collect();
        let rhs: Vec<_> = (0..9).map(|i| c(i as f64, -(i as f64) * 0.3)).collect();
        let (lo, up) = (c(-1.0, 0.2), c(-1.0, -0.1));
        let x = solve_constant_offdiag(lo, &diag, up, &rhs).unwrap();
        for (a, b) in apply(lo, &diag, up, &x, false).iter().zip(&rhs) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn cyclic_round_trip() {
        let diag: Vec<_> = (0..7).map(|i| c(2.5, 0.3 * i as f64)).collect();
        let rhs: Vec<_> = (0..7).map(|i| c(1.0, i as f64)).collect();
        let (lo, up) = (c(0.0, -0.7), c(0.0, -0.7));
        let x = solve_cyclic_constant_offdiag(lo, &diag, up, &rhs).unwrap();
        for (a, b) in apply(lo, &diag, up, &x, true).iter().zip(&rhs) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_pivot_detected() {
        let diag = vec![c(0.0, 0.0), c(1.0, 0.0)];
        let r = solve_constant_offdiag(c(1.0, 0.0), &diag, c(1.0, 0.0), &[c(1.0, 0.0); 2]);
        assert_eq!(r, Err(SingularPivot(0)));
    }
}
