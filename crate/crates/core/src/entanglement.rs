//! Two-site entanglement of Gaussian states.
//!
//! Log-negativities use the natural logarithm and the vacuum-variance-1/2
//! convention, so an ideal two-mode squeezed pair with parameter `r` gives
//! `E_N = 2r`.

use nalgebra::{DMatrix, Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};

use crate::lattice::Lattice;
use crate::steady::{CovarianceState, NoiseParams};
use crate::symmetry::SymmetryMatrix;
use crate::{Error, Result};

/// Quadrature covariance of two sites in `(x_m, p_m, x_n, p_n)` order.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoModeCovariance {
    pub matrix: Matrix4<f64>,
    pub sites: (usize, usize),
}

impl TwoModeCovariance {
    /// Ideal two-mode squeezed vacuum with parameter `r`.
    pub fn two_mode_squeezed(r: f64) -> Self {
        let (c, s) = ((2.0 * r).cosh() / 2.0, (2.0 * r).sinh() / 2.0);
        #[rustfmt::skip]
        let matrix = Matrix4::new(
            c, 0.0, s, 0.0,
            0.0, c, 0.0, -s,
            s, 0.0, c, 0.0,
            0.0, -s, 0.0, c,
        );
        TwoModeCovariance { matrix, sites: (0, 1) }
    }

    /// Smallest symplectic eigenvalue `ν̃₋` of the partial transpose
    /// (`p_n → −p_n`): the smallest singular value of `C̃^{1/2} Ω C̃^{1/2}`.
    ///
    /// The closed form through `Δ̃ = det A + det B − 2 det C_ab` loses half the
    /// digits when the two symplectic eigenvalues nearly coincide (uncorrelated
    /// pure sites), so the value is taken from the spectrum instead.
    pub fn min_pt_symplectic_eigenvalue(&self) -> Result<f64> {
        let flip = Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 1.0, -1.0));
        let transposed = flip * self.matrix * flip;
        let eig = SymmetricEigen::new(transposed);
        if let Some(bad) = eig.eigenvalues.iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::Unphysical(format!(
                "partially transposed covariance of sites {:?} has eigenvalue {bad:.3e}",
                self.sites
            )));
        }
        let root = eig.eigenvectors
            * Matrix4::from_diagonal(&eig.eigenvalues.map(f64::sqrt))
            * eig.eigenvectors.transpose();
        #[rustfmt::skip]
        let omega = Matrix4::new(
            0.0, 1.0, 0.0, 0.0,
            -1.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
            0.0, 0.0, -1.0, 0.0,
        );
        let sv = (root * omega * root).singular_values();
        Ok(sv.iter().copied().fold(f64::INFINITY, f64::min))
    }

    /// `E_N = max(0, −ln 2ν̃₋)`.
    pub fn log_negativity(&self) -> Result<f64> {
        let nu = self.min_pt_symplectic_eigenvalue()?;
        Ok((-(2.0 * nu).ln()).max(0.0))
    }
}

/// Exact marginal of sites `m` and `n`.
pub fn reduced_covariance(state: &CovarianceState, m: usize, n: usize) -> Result<TwoModeCovariance> {
    let size = state.n_sites();
    for i in [m, n] {
        if i >= size {
            return Err(Error::SiteOutOfRange { index: i, n_sites: size });
        }
    }
    if m == n {
        return Err(Error::param("sites", "a two-site reduction needs m != n"));
    }
    let rows = [2 * m, 2 * m + 1, 2 * n, 2 * n + 1];
    let normal = state.normal();
    let anomalous = state.anomalous();
    // same entries as CovarianceState::quadrature_covariance, restricted
    let entry = |r: usize, c: usize| {
        let (i, j) = (r / 2, c / 2);
        let (a, b) = (anomalous[(i, j)], normal[(i, j)]);
        let half = if i == j && r % 2 == c % 2 { 0.5 } else { 0.0 };
        match (r % 2, c % 2) {
            (0, 0) => a.re + b.re + half,
            (1, 1) => b.re - a.re + half,
            (0, 1) => a.im + b.im,
            _ => {
                let (a, b) = (anomalous[(j, i)], normal[(j, i)]);
                a.im + b.im
            }
        }
    };
    let matrix = Matrix4::from_fn(|r, c| entry(rows[r], rows[c]));
    Ok(TwoModeCovariance { matrix, sites: (m, n) })
}

/// Log-negativity between sites `m` and `n`, symmetric in its arguments.
pub fn log_negativity(state: &CovarianceState, m: usize, n: usize) -> Result<f64> {
    let (lo, hi) = if m <= n { (m, n) } else { (n, m) };
    reduced_covariance(state, lo, hi)?.log_negativity()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MirroredPairAverage {
    /// `E̅_N = ln√2/(N − √N) · Σ_{x≠y} E_N[(x,y),(y,x)]`.
    pub value: f64,
    /// `((x, y), E_N)` for every ordered pair in the sum.
    pub per_pair: Vec<((i64, i64), f64)>,
    /// `max − min` over the per-pair values.
    pub spread: f64,
}

/// Entanglement per mirrored pair of a square lattice.
pub fn mirrored_pair_average(state: &CovarianceState, lattice: &Lattice) -> Result<MirroredPairAverage> {
    let half = lattice
        .square_half_size()
        .ok_or_else(|| Error::MissingMetadata("mirrored pairs need a square lattice with (x,y) coordinates".into()))?;
    if state.n_sites() != lattice.n_sites() {
        return Err(Error::LengthMismatch {
            what: "state",
            expected: lattice.n_sites(),
            got: state.n_sites(),
        });
    }
    let m = half as i64;
    let mut per_pair = Vec::new();
    for y in -m..=m {
        for x in -m..=m {
            if x == y {
                continue;
            }
            let a = lattice.site_at(&[x, y]).expect("square lattice site");
            let b = lattice.site_at(&[y, x]).expect("square lattice site");
            per_pair.push(((x, y), log_negativity(state, a, b)?));
        }
    }
    let n = lattice.n_sites() as f64;
    let total: f64 = per_pair.iter().map(|(_, e)| e).sum();
    let value = std::f64::consts::SQRT_2.ln() / (n - n.sqrt()) * total;
    let (lo, hi) = per_pair
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, e)| (lo.min(*e), hi.max(*e)));
    Ok(MirroredPairAverage {
        value,
        per_pair,
        spread: if hi >= lo { hi - lo } else { 0.0 },
    })
}

/// Candidate nullifier matrix `Ã = (I + tanh r Re[e^{iφ}σ]) (tanh r Im[e^{iφ}σ])`.
#[derive(Clone, Debug, PartialEq)]
pub struct NullifierMatrix {
    pub matrix: DMatrix<f64>,
    pub noise: NoiseParams,
}

pub fn nullifier_matrix(sigma: &SymmetryMatrix, noise: &NoiseParams) -> NullifierMatrix {
    let t = noise.r.tanh();
    let rotated = sigma.matrix().map(|z| z * num_complex::Complex64::from_polar(1.0, noise.phi));
    let n = sigma.len();
    let left = DMatrix::identity(n, n) + rotated.map(|z| t * z.re);
    let right = rotated.map(|z| t * z.im);
    NullifierMatrix {
        matrix: left * right,
        noise: *noise,
    }
}

/// Variance of `p_m − Σ_n Ã_mn x_n` for every site `m`.
pub fn nullifier_variances(state: &CovarianceState, nullifier: &NullifierMatrix) -> Result<Vec<f64>> {
    let n = state.n_sites();
    let a = &nullifier.matrix;
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::LengthMismatch {
            what: "nullifier matrix",
            expected: n,
            got: a.nrows(),
        });
    }
    let c = state.quadrature_covariance();
    Ok((0..n)
        .map(|m| {
            let mut v = nalgebra::DVector::<f64>::zeros(2 * n);
            v[2 * m + 1] = 1.0;
            for k in 0..n {
                v[2 * k] -= a[(m, k)];
            }
            (v.transpose() * &c * &v)[(0, 0)]
        })
        .collect())
}

/// Vacuum-normalised nullifier variances: `< 1` means squeezed below vacuum.
pub fn relative_to_vacuum(variances: &[f64]) -> Vec<f64> {
    variances.iter().map(|v| v / 0.5).collect()
}
