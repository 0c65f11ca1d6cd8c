//! Dense solvers for the Sylvester equation `A X + X B = C`.
//!
//! [`solve_sylvester`] is the Bartels–Stewart method on complex Schur forms,
//! `O(n³)`. [`solve_sylvester_kronecker`] vectorises the equation and is only
//! meant for small systems and tests.

use nalgebra::{DVector, Schur};

use crate::linalg::max_abs;
use crate::{CMatrix, Error, Result, C64};

fn check_shapes(a: &CMatrix, b: &CMatrix, c: &CMatrix) -> Result<()> {
    let n = a.nrows();
    let m = b.nrows();
    if a.ncols() != n || b.ncols() != m {
        return Err(Error::param("sylvester", "coefficient matrices must be square"));
    }
    if c.nrows() != n || c.ncols() != m {
        return Err(Error::LengthMismatch {
            what: "sylvester right-hand side",
            expected: n * m,
            got: c.nrows() * c.ncols(),
        });
    }
    Ok(())
}

fn schur(m: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let n = m.nrows();
    Schur::try_new(m.clone(), f64::EPSILON, 1000 * n.max(10))
        .map(|s| s.unpack())
        .ok_or(Error::EigenFailure { n, norm: max_abs(m) })
}

/// Solves `A X + X B = C`.
pub fn solve_sylvester(a: &CMatrix, b: &CMatrix, c: &CMatrix) -> Result<CMatrix> {
    check_shapes(a, b, c)?;
    let (qa, ta) = schur(a)?;
    let (qb, tb) = schur(b)?;
    let f = qa.adjoint() * c * &qb;
    let (n, m) = (a.nrows(), b.nrows());
    let scale = max_abs(&ta).max(max_abs(&tb)).max(f64::MIN_POSITIVE);
    let mut y = CMatrix::zeros(n, m);
    for j in 0..m {
        let mut rhs: DVector<C64> = f.column(j).into_owned();
        for k in 0..j {
            let s = tb[(k, j)];
            if s != C64::new(0.0, 0.0) {
                rhs -= y.column(k) * s;
            }
        }
        let shift = tb[(j, j)];
        // back substitution with the upper-triangular (T_a + shift I)
        for i in (0..n).rev() {
            let mut acc = rhs[i];
            for k in i + 1..n {
                acc -= ta[(i, k)] * y[(k, j)];
            }
            let d = ta[(i, i)] + shift;
            if d.norm() <= f64::EPSILON * scale {
                return Err(Error::Singular(format!(
                    "eigenvalues of A and -B coincide (|λ_a + λ_b| = {:.2e})",
                    d.norm()
                )));
            }
            y[(i, j)] = acc / d;
        }
    }
    Ok(&qa * y * qb.adjoint())
}

/// Solves `A X + X B = C` through `(I ⊗ A + Bᵀ ⊗ I) vec X = vec C`.
pub fn solve_sylvester_kronecker(a: &CMatrix, b: &CMatrix, c: &CMatrix) -> Result<CMatrix> {
    check_shapes(a, b, c)?;
    let (n, m) = (a.nrows(), b.nrows());
    let dim = n * m;
    // column-major vec: index (i, j) -> i + n j
    let mut k = CMatrix::zeros(dim, dim);
    for j in 0..m {
        for i in 0..n {
            let row = i + n * j;
            for p in 0..n {
                k[(row, p + n * j)] += a[(i, p)];
            }
            for q in 0..m {
                k[(row, i + n * q)] += b[(q, j)];
            }
        }
    }
    let rhs = DVector::from_column_slice(c.as_slice());
    let x = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("Kronecker system is singular".into()))?;
    Ok(CMatrix::from_column_slice(n, m, x.as_slice()))
}

/// `‖A X + X B − C‖_max`.
pub fn sylvester_residual(a: &CMatrix, b: &CMatrix, c: &CMatrix, x: &CMatrix) -> f64 {
    max_abs(&(a * x + x * b - c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        CMatrix::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn schur_and_kronecker_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 5, 9] {
            let shift = CMatrix::identity(n, n) * C64::new(2.0 * n as f64, 0.0);
            let a = random(n, &mut rng) - &shift;
            let b = random(n, &mut rng) - &shift;
            let c = random(n, &mut rng);
            let x = solve_sylvester(&a, &b, &c).unwrap();
            let y = solve_sylvester_kronecker(&a, &b, &c).unwrap();
            assert!(sylvester_residual(&a, &b, &c, &x) < 1e-12);
            assert!(max_abs(&(x - y)) < 1e-12);
        }
    }

    #[test]
    fn scalar_case() {
        let a = CMatrix::from_element(1, 1, C64::new(-1.0, 2.0));
        let b = CMatrix::from_element(1, 1, C64::new(-0.5, -1.0));
        let c = CMatrix::from_element(1, 1, C64::new(3.0, 0.0));
        let x = solve_sylvester(&a, &b, &c).unwrap();
        assert!((x[(0, 0)] - C64::new(3.0, 0.0) / C64::new(-1.5, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn singular_is_reported() {
        let a = CMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        let b = CMatrix::from_element(1, 1, C64::new(-1.0, 0.0));
        let c = CMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        assert!(matches!(solve_sylvester(&a, &b, &c), Err(Error::Singular(_))));
    }

    #[test]
    fn shape_mismatch() {
        let a = CMatrix::identity(2, 2);
        let c = CMatrix::zeros(3, 2);
        assert!(matches!(
            solve_sylvester(&a, &a, &c),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
