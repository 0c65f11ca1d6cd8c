//! Particle-hole symmetry matrices `σ` with `σ† H σ = −H*`.
//!
//! A unitary symmetric `σ` that also fixes the drain (`σ_{m,n₀} = δ_{m,n₀}`)
//! is the anomalous correlation pattern of the steady state,
//! `⟨a_m a_n⟩ = 𝓜 σ_{m,n}`. This module builds the named matrices, certifies
//! them against a Hamiltonian, and provides the analytic flux-free eigenbasis
//! of the square lattice.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::lattice::{square_index, Lattice, Site};
use crate::linalg::{max_abs, real, symmetry_residual, unitarity_residual};
use crate::spectral::EigenSystem;
use crate::{CMatrix, Error, Result, C64};

/// Relative tolerance of [`check_symmetry`].
pub const CERTIFY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    FromEigenmodes,
    Bipartite,
    Inversion,
    BipartiteInversion,
    HofstadterZ0,
    #[serde(rename = "hofstadter_0z")]
    Hofstadter0Z,
    HofstadterZz,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymmetryMatrix {
    matrix: CMatrix,
    provenance: Provenance,
    drain: Option<usize>,
}

impl SymmetryMatrix {
    pub fn new(matrix: CMatrix, provenance: Provenance, drain: Option<usize>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(Error::param("sigma", "matrix must be square"));
        }
        if let Some(d) = drain {
            if d >= n {
                return Err(Error::SiteOutOfRange { index: d, n_sites: n });
            }
        }
        Ok(SymmetryMatrix {
            matrix,
            provenance,
            drain,
        })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Site the matrix is meant to leave invariant, if any.
    pub fn drain(&self) -> Option<usize> {
        self.drain
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    /// `‖σσ† − I‖_max`.
    pub fn unitarity_residual(&self) -> f64 {
        unitarity_residual(&self.matrix)
    }

    /// `‖σ − σᵀ‖_max`.
    pub fn symmetry_residual(&self) -> f64 {
        symmetry_residual(&self.matrix)
    }

    /// Rescales by a global phase so that `σ_{n₀,n₀}` is real and positive.
    ///
    /// A global phase preserves `σ†Hσ = −H*`, so this only fixes the
    /// convention. Fails when `σ` does not map the drain onto itself.
    pub fn aligned_to(&self, drain: usize) -> Result<SymmetryMatrix> {
        if drain >= self.len() {
            return Err(Error::SiteOutOfRange {
                index: drain,
                n_sites: self.len(),
            });
        }
        let pivot = self.matrix[(drain, drain)];
        if pivot.norm() < 0.5 {
            return Err(Error::param(
                "drain",
                format!("sigma does not fix site {drain} (|sigma_nn| = {:.3e})", pivot.norm()),
            ));
        }
        let phase = pivot.conj() / pivot.norm();
        Ok(SymmetryMatrix {
            matrix: self.matrix.map(|z| z * phase),
            provenance: self.provenance,
            drain: Some(drain),
        })
    }
}

/// `σ_{m,n} = (−1)^{s_n} δ_{m,n}`.
pub fn sigma_bipartite(sites: &[Site]) -> Result<SymmetryMatrix> {
    let labels = sublattice_labels(sites)?;
    let n = sites.len();
    let diag = nalgebra::DVector::from_iterator(n, labels.iter().map(|&s| real(sign(s))));
    SymmetryMatrix::new(CMatrix::from_diagonal(&diag), Provenance::Bipartite, None)
}

fn sublattice_labels(sites: &[Site]) -> Result<Vec<u8>> {
    sites
        .iter()
        .map(|s| {
            s.sublattice
                .ok_or_else(|| Error::MissingMetadata(format!("site {} has no sublattice label", s.index)))
        })
        .collect()
}

fn sign(label: u8) -> f64 {
    if label == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Inversion `n → −n` through the centre of the coordinate bounding box,
/// `σ_{m,n} = δ_{m,−n}`, optionally signed as `(−1)^{s_n} δ_{m,−n}`.
pub fn sigma_inversion(sites: &[Site], signed: bool) -> Result<SymmetryMatrix> {
    let coords: Vec<&Vec<i64>> = sites
        .iter()
        .map(|s| {
            s.coord
                .as_ref()
                .ok_or_else(|| Error::MissingMetadata(format!("site {} has no coordinates", s.index)))
        })
        .collect::<Result<_>>()?;
    let dim = coords.first().map_or(0, |c| c.len());
    if coords.iter().any(|c| c.len() != dim) {
        return Err(Error::MissingMetadata("coordinates of mixed dimension".into()));
    }
    // twice the centre, so the image of c is (lo + hi) − c
    let sum: Vec<i64> = (0..dim)
        .map(|k| {
            let lo = coords.iter().map(|c| c[k]).min().unwrap_or(0);
            let hi = coords.iter().map(|c| c[k]).max().unwrap_or(0);
            lo + hi
        })
        .collect();
    let lookup: HashMap<&Vec<i64>, usize> = coords.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let labels = if signed { Some(sublattice_labels(sites)?) } else { None };
    let n = sites.len();
    let mut m = CMatrix::zeros(n, n);
    for (j, c) in coords.iter().enumerate() {
        let image: Vec<i64> = c.iter().zip(&sum).map(|(v, s)| s - v).collect();
        let i = *lookup.get(&image).ok_or_else(|| {
            Error::param("sites", format!("site set not closed under inversion: {c:?} has no image"))
        })?;
        let s = labels.as_ref().map_or(1.0, |l| sign(l[j]));
        m[(i, j)] = real(s);
    }
    let provenance = if signed {
        Provenance::BipartiteInversion
    } else {
        Provenance::Inversion
    };
    SymmetryMatrix::new(m, provenance, None)
}

/// Drain-site families of the Hofstadter symmetry matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HofstadterVariant {
    /// Drain at `(z, 0)`: mirror `y → −y` with sign `(−1)^{x+y}`.
    #[serde(rename = "z0")]
    Z0,
    /// Drain at `(0, z)`: mirror `x → −x` with sign `(−1)^{x+y}`.
    #[serde(rename = "0z")]
    ZeroZ,
    /// Drain at `(z, z)`: transpose `(x, y) → (y, x)` with `(−1)^{x+y} e^{iΦxy}`.
    #[serde(rename = "zz")]
    Zz,
}

impl HofstadterVariant {
    /// Variant whose mirror fixes the site `(x, y)`, if any.
    pub fn for_site(x: i64, y: i64) -> Option<Self> {
        if x == y {
            Some(HofstadterVariant::Zz)
        } else if y == 0 {
            Some(HofstadterVariant::Z0)
        } else if x == 0 {
            Some(HofstadterVariant::ZeroZ)
        } else {
            None
        }
    }
}

impl FromStr for HofstadterVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "z0" => Ok(HofstadterVariant::Z0),
            "0z" => Ok(HofstadterVariant::ZeroZ),
            "zz" => Ok(HofstadterVariant::Zz),
            other => Err(Error::param("variant", format!("unknown Hofstadter variant `{other}` (z0, 0z, zz)"))),
        }
    }
}

impl fmt::Display for HofstadterVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HofstadterVariant::Z0 => "z0",
            HofstadterVariant::ZeroZ => "0z",
            HofstadterVariant::Zz => "zz",
        })
    }
}

/// Symmetry matrix of the `(2M+1)²` Hofstadter lattice in the layout of
/// [`crate::lattice::build_hofstadter`].
pub fn sigma_hofstadter(variant: HofstadterVariant, half_size: usize, flux: f64) -> Result<SymmetryMatrix> {
    if half_size < 1 {
        return Err(Error::param("half_size", "must be at least 1"));
    }
    let m = half_size as i64;
    let n = (2 * half_size + 1).pow(2);
    let mut sigma = CMatrix::zeros(n, n);
    for y in -m..=m {
        for x in -m..=m {
            let sign = if (x + y).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let (px, py, value) = match variant {
                HofstadterVariant::Z0 => (x, -y, real(sign)),
                HofstadterVariant::ZeroZ => (-x, y, real(sign)),
                HofstadterVariant::Zz => (y, x, C64::from_polar(sign, flux * (x * y) as f64)),
            };
            sigma[(square_index(half_size, x, y), square_index(half_size, px, py))] = value;
        }
    }
    let provenance = match variant {
        HofstadterVariant::Z0 => Provenance::HofstadterZ0,
        HofstadterVariant::ZeroZ => Provenance::Hofstadter0Z,
        HofstadterVariant::Zz => Provenance::HofstadterZz,
    };
    SymmetryMatrix::new(sigma, provenance, None)
}

/// Which relation a symmetry matrix is certified against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `σ†Hσ = −H*`, the relation that fixes the steady-state correlations.
    #[default]
    ParticleHole,
    /// `σ†Hσ = −H`, the unitary (sublattice) chiral symmetry. Coincides with
    /// the particle-hole relation for real `H`.
    Chiral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub provenance: Provenance,
    pub relation: Relation,
    /// `‖σ†Hσ + H*‖_max`.
    pub particle_hole_residual: f64,
    /// `‖σ†Hσ + H‖_max`.
    pub chiral_residual: f64,
    pub unitarity_residual: f64,
    pub symmetry_residual: f64,
    pub drain: Option<usize>,
    /// `‖σ[:, n₀] − e_{n₀}‖_max` when a drain is given.
    pub drain_residual: Option<f64>,
    pub threshold: f64,
    pub pass: bool,
}

/// Certifies `σ†Hσ = −H*` together with unitarity, symmetry and (optionally)
/// the drain constraint, all against `1e-9 · max(1, ‖H‖_max)`.
pub fn check_symmetry(sigma: &SymmetryMatrix, lattice: &Lattice, drain: Option<usize>) -> Result<SymmetryReport> {
    check_symmetry_with(sigma, lattice, drain, Relation::ParticleHole)
}

pub fn check_symmetry_with(
    sigma: &SymmetryMatrix,
    lattice: &Lattice,
    drain: Option<usize>,
    relation: Relation,
) -> Result<SymmetryReport> {
    let n = lattice.n_sites();
    if sigma.len() != n {
        return Err(Error::LengthMismatch {
            what: "sigma",
            expected: n,
            got: sigma.len(),
        });
    }
    let h = lattice.hamiltonian();
    let s = sigma.matrix();
    let conjugated = s.adjoint() * h * s;
    let particle_hole_residual = max_abs(&(&conjugated + h.conjugate()));
    let chiral_residual = max_abs(&(&conjugated + h));
    let drain_residual = match drain {
        Some(d) if d >= n => return Err(Error::SiteOutOfRange { index: d, n_sites: n }),
        Some(d) => Some(
            (0..n)
                .map(|m| (s[(m, d)] - if m == d { real(1.0) } else { real(0.0) }).norm())
                .fold(0.0, f64::max),
        ),
        None => None,
    };
    let threshold = CERTIFY_TOL * lattice.norm().max(1.0);
    let unitarity = sigma.unitarity_residual();
    let symmetry = sigma.symmetry_residual();
    let relation_residual = match relation {
        Relation::ParticleHole => particle_hole_residual,
        Relation::Chiral => chiral_residual,
    };
    let pass = relation_residual < threshold
        && unitarity < threshold
        && symmetry < threshold
        && drain_residual.is_none_or(|r| r < threshold);
    Ok(SymmetryReport {
        provenance: sigma.provenance(),
        relation,
        particle_hole_residual,
        chiral_residual,
        unitarity_residual: unitarity,
        symmetry_residual: symmetry,
        drain,
        drain_residual,
        threshold,
        pass,
    })
}

/// Analytic eigenbasis of the flux-free `(2M+1)²` square lattice with hopping
/// `−J`: `ψ_{k,q}(x, y) = sin(k(x+M+1)) sin(q(y+M+1))/(M+1)`,
/// `ε = −2J(cos k + cos q)`, `k, q ∈ π/(2(M+1)) · {1, …, 2M+1}`.
pub fn phi_zero_eigenmodes(half_size: usize, hopping: f64) -> Result<EigenSystem> {
    if half_size < 1 {
        return Err(Error::param("half_size", "must be at least 1"));
    }
    let m = half_size as i64;
    let side = 2 * half_size + 1;
    let n = side * side;
    let step = PI / (2.0 * (half_size + 1) as f64);
    let norm = 1.0 / (half_size + 1) as f64;
    let mut energies = Vec::with_capacity(n);
    let mut modes = CMatrix::zeros(n, n);
    let mut col = 0;
    for b in 1..=side {
        for a in 1..=side {
            let (k, q) = (step * a as f64, step * b as f64);
            energies.push(-2.0 * hopping * (k.cos() + q.cos()));
            for y in -m..=m {
                for x in -m..=m {
                    let v = norm * (k * (x + m + 1) as f64).sin() * (q * (y + m + 1) as f64).sin();
                    modes[(square_index(half_size, x, y), col)] = real(v);
                }
            }
            col += 1;
        }
    }
    EigenSystem::from_parts(energies, modes, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_bipartite_random, build_chain, build_hofstadter, BipartiteBonds, Hopping};
    use crate::spectral::{diagonalize, shell_projector_distance};
    use std::f64::consts::FRAC_PI_2;

    fn chain(n: usize) -> Lattice {
        build_chain(n, &Hopping::Uniform(real(1.0)), None).unwrap()
    }

    #[test]
    fn bipartite_chain() {
        let s = sigma_bipartite(chain(4).sites()).unwrap();
        let d: Vec<f64> = s.matrix().diagonal().iter().map(|z| z.re).collect();
        assert_eq!(d, vec![1.0, -1.0, 1.0, -1.0]);
        assert_eq!(s.matrix() * s.matrix(), CMatrix::identity(4, 4));
        assert!(check_symmetry(&s, &chain(4), Some(0)).unwrap().pass);
    }

    #[test]
    fn bipartite_needs_labels() {
        let sites: Vec<Site> = (0..3).map(Site::bare).collect();
        assert!(matches!(sigma_bipartite(&sites), Err(Error::MissingMetadata(_))));
    }

    #[test]
    fn all_a_labels_certify_imaginary_hamiltonians_only() {
        let mut sites: Vec<Site> = (0..2).map(Site::bare).collect();
        sites.iter_mut().for_each(|s| s.sublattice = Some(0));
        let s = sigma_bipartite(&sites).unwrap();
        assert_eq!(s.matrix(), &CMatrix::identity(2, 2));
        let h = CMatrix::from_row_slice(2, 2, &[real(0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0), real(0.0)]);
        let l = Lattice::new(h, sites, crate::lattice::Model::Custom).unwrap();
        assert!(check_symmetry(&s, &l, None).unwrap().pass);
    }

    #[test]
    fn uniform_potential_breaks_bipartite_symmetry() {
        let v = 0.3;
        let l = build_chain(4, &Hopping::Uniform(real(1.0)), Some(&[v; 4])).unwrap();
        let r = check_symmetry(&sigma_bipartite(l.sites()).unwrap(), &l, None).unwrap();
        assert!(!r.pass);
        assert!((r.particle_hole_residual - 2.0 * v).abs() < 1e-15);
    }

    #[test]
    fn inversion_on_odd_chain() {
        let l = chain(5);
        let s = sigma_inversion(l.sites(), false).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want = if i + j == 4 { 1.0 } else { 0.0 };
                assert_eq!(s.matrix()[(i, j)], real(want));
            }
        }
        assert_eq!(s.matrix() * s.matrix(), CMatrix::identity(5, 5));
        // unsigned inversion commutes with a real chain instead of anticommuting
        assert!(!check_symmetry(&s, &l, Some(2)).unwrap().pass);
        let signed = sigma_inversion(l.sites(), true).unwrap();
        assert!(check_symmetry(&signed, &l, Some(2)).unwrap().pass);
    }

    #[test]
    fn inversion_odd_potential_preserves_symmetry() {
        let l = build_chain(5, &Hopping::Uniform(real(1.0)), Some(&[0.4, -0.7, 0.0, 0.7, -0.4])).unwrap();
        let s = sigma_inversion(l.sites(), true).unwrap();
        assert!(check_symmetry(&s, &l, Some(2)).unwrap().pass);
        let even = build_chain(5, &Hopping::Uniform(real(1.0)), Some(&[0.4, 0.0, 0.0, 0.0, 0.4])).unwrap();
        assert!(!check_symmetry(&s, &even, Some(2)).unwrap().pass);
    }

    #[test]
    fn inversion_requires_closed_site_set() {
        let sites = vec![
            Site {
                index: 0,
                coord: Some(vec![0]),
                sublattice: None,
            },
            Site {
                index: 1,
                coord: Some(vec![2]),
                sublattice: None,
            },
            Site {
                index: 2,
                coord: Some(vec![3]),
                sublattice: None,
            },
        ];
        assert!(sigma_inversion(&sites, false).is_err());
    }

    #[test]
    fn hofstadter_variants_certify() {
        for flux in [FRAC_PI_2, 2.0 * PI / 5.0, 0.3] {
            let l = build_hofstadter(2, 1.0, flux).unwrap();
            for v in [HofstadterVariant::Z0, HofstadterVariant::ZeroZ, HofstadterVariant::Zz] {
                let s = sigma_hofstadter(v, 2, flux).unwrap();
                assert!(s.unitarity_residual() < 1e-12);
                assert!(s.symmetry_residual() < 1e-12);
                let r = check_symmetry(&s, &l, None).unwrap();
                assert!(r.pass, "{v} at flux {flux}: {}", r.particle_hole_residual);
            }
            // (−1)^{x+y} is a chiral symmetry at any flux, a particle-hole one only for real H
            let b = sigma_bipartite(l.sites()).unwrap();
            assert!(check_symmetry_with(&b, &l, None, Relation::Chiral).unwrap().pass);
            assert!(!check_symmetry(&b, &l, None).unwrap().pass);
        }
    }

    #[test]
    fn zz_maps_transpose_with_phase() {
        let m = 4;
        let s = sigma_hofstadter(HofstadterVariant::Zz, m, FRAC_PI_2).unwrap();
        let (x, y) = (1, -3);
        let want = C64::from_polar(1.0, FRAC_PI_2 * (x * y) as f64);
        assert!((s.matrix()[(square_index(m, x, y), square_index(m, y, x))] - want).norm() < 1e-15);
        let z0 = sigma_hofstadter(HofstadterVariant::Z0, m, FRAC_PI_2).unwrap();
        assert!(z0.matrix().iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("ZZ".parse::<HofstadterVariant>().unwrap(), HofstadterVariant::Zz);
        assert_eq!("0z".parse::<HofstadterVariant>().unwrap(), HofstadterVariant::ZeroZ);
        assert!("xy".parse::<HofstadterVariant>().is_err());
        assert_eq!(HofstadterVariant::for_site(2, 2), Some(HofstadterVariant::Zz));
        assert_eq!(HofstadterVariant::for_site(0, 2), Some(HofstadterVariant::ZeroZ));
        assert_eq!(HofstadterVariant::for_site(2, 0), Some(HofstadterVariant::Z0));
        assert_eq!(HofstadterVariant::for_site(2, 4), None);
    }

    #[test]
    fn alignment_sets_drain_phase() {
        let flux = 2.0 * PI / 5.0;
        let s = sigma_hofstadter(HofstadterVariant::Zz, 2, flux).unwrap();
        let d = square_index(2, 2, 2);
        let a = s.aligned_to(d).unwrap();
        assert!((a.matrix()[(d, d)] - real(1.0)).norm() < 1e-15);
        assert!(s.aligned_to(square_index(2, 1, 2)).is_err());
    }

    #[test]
    fn phi_zero_oracle() {
        for m in 1..=2 {
            let analytic = phi_zero_eigenmodes(m, 1.0).unwrap();
            assert_eq!(analytic.len(), (2 * m + 1).pow(2));
            assert!(analytic.orthonormality_residual() < 1e-13);
            let l = build_hofstadter(m, 1.0, 0.0).unwrap();
            assert!(max_abs(&(analytic.reconstruct() - l.hamiltonian())) < 1e-13);
            let (proj, energy) = shell_projector_distance(&analytic, &diagonalize(&l).unwrap()).unwrap();
            assert!(proj < 1e-9 && energy < 1e-12, "{proj} {energy}");
            let e = analytic.energies();
            for (a, b) in e.iter().zip(e.iter().rev()) {
                assert!((a + b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn random_bipartite_certifies() {
        let labels: Vec<u8> = (0..6).map(|i| (i % 2) as u8).collect();
        let l = build_bipartite_random(&labels, &BipartiteBonds::Complete, 11, 1.0).unwrap();
        assert!(check_symmetry(&sigma_bipartite(l.sites()).unwrap(), &l, Some(0)).unwrap().pass);
    }
}
