// Small dense helpers shared by the modules.

use crate::{CMatrix, C64};

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub(crate) fn hermiticity_residual(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub(crate) fn symmetry_residual(m: &CMatrix) -> f64 {
    max_abs(&(m - m.transpose()))
}

pub(crate) fn unitarity_residual(m: &CMatrix) -> f64 {
    let n = m.nrows();
    max_abs(&(m * m.adjoint() - CMatrix::identity(n, n)))
}

pub(crate) fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}
