//! Eigenmodes of the lattice, their coupling to the drain, and the complex
//! spectrum of the damped dynamics.
//!
//! In the eigenmode basis `b_i = Σ_n ψ_i[n]* a_n` the drain enters through the
//! rates `Γ̄_i = |ψ_i[n₀]|² Γ` and phases `φ_i = arg ψ_i[n₀]`, and the first
//! moments evolve as `ḃ = −i A b + noise` with
//! `A_ij = δ_ij ε_i − (i/2) e^{i(φ_j − φ_i)} √(Γ̄_i Γ̄_j)`.
//! Bright eigenvalues `λ = ν − iγ/2` of `A` solve the secular equation
//! `Σ_j (Γ̄_j/2) / (γ/2 + i(ν − ε_j)) = 1`.

use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::lattice::Lattice;
use crate::linalg::{max_abs, real};
use crate::{CMatrix, Error, Result, C64};

/// Dark-mode threshold relative to the uniform weight `Γ/N`.
pub const DEFAULT_DARK_TOL: f64 = 1e-10;
/// Relative energy gap below which neighbouring modes are treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Orthonormal eigenbasis of a Hermitian `H`, sorted by energy.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenSystem {
    energies: Vec<f64>,
    modes: CMatrix,
    residual: f64,
}

impl EigenSystem {
    /// Builds an eigensystem from columns `modes[:, i]` with energies `energies[i]`,
    /// sorting by energy. The reconstruction residual is measured against
    /// `hamiltonian` when given, otherwise against `Ψ diag(ε) Ψ†` itself (zero).
    pub fn from_parts(energies: Vec<f64>, modes: CMatrix, hamiltonian: Option<&CMatrix>) -> Result<Self> {
        let n = energies.len();
        if modes.nrows() != n || modes.ncols() != n {
            return Err(Error::LengthMismatch {
                what: "modes",
                expected: n,
                got: modes.ncols(),
            });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
        let energies: Vec<f64> = order.iter().map(|&i| energies[i]).collect();
        let modes = CMatrix::from_fn(n, n, |r, c| modes[(r, order[c])]);
        let mut eig = EigenSystem {
            energies,
            modes,
            residual: 0.0,
        };
        if let Some(h) = hamiltonian {
            eig.residual = max_abs(&(h - eig.reconstruct()));
        }
        Ok(eig)
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Wavefunctions as columns: `modes()[(n, i)] = ψ_i[n]`.
    pub fn modes(&self) -> &CMatrix {
        &self.modes
    }

    /// `‖H − Ψ diag(ε) Ψ†‖_max` at construction.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Spectral norm of the Hamiltonian, `max |ε|`.
    pub fn scale(&self) -> f64 {
        self.energies.iter().fold(0.0, |a, e| a.max(e.abs()))
    }

    pub fn reconstruct(&self) -> CMatrix {
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.len(),
            self.energies.iter().map(|&e| real(e)),
        ));
        &self.modes * d * self.modes.adjoint()
    }

    /// Largest deviation of `Ψ†Ψ` from the identity.
    pub fn orthonormality_residual(&self) -> f64 {
        let n = self.len();
        max_abs(&(self.modes.adjoint() * &self.modes - CMatrix::identity(n, n)))
    }

    /// Runs of consecutive modes whose neighbouring gaps are at most
    /// `DEGENERACY_TOL · max|ε|`. Every mode belongs to exactly one shell.
    pub fn shells(&self) -> Vec<Range<usize>> {
        let tol = DEGENERACY_TOL * self.scale();
        let mut shells = Vec::new();
        let mut start = 0;
        for i in 1..=self.len() {
            if i == self.len() || self.energies[i] - self.energies[i - 1] > tol {
                shells.push(start..i);
                start = i;
            }
        }
        shells
    }

    /// Shells containing more than one mode.
    pub fn degenerate_shells(&self) -> Vec<Range<usize>> {
        self.shells().into_iter().filter(|s| s.len() > 1).collect()
    }
}

/// Diagonalizes the lattice Hamiltonian.
pub fn diagonalize(lattice: &Lattice) -> Result<EigenSystem> {
    let h = lattice.hamiltonian();
    let n = h.nrows();
    let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 100 * n.max(10)).ok_or(
        Error::EigenFailure {
            n,
            norm: lattice.norm(),
        },
    )?;
    EigenSystem::from_parts(
        eig.eigenvalues.iter().copied().collect(),
        eig.eigenvectors,
        Some(h),
    )
}

/// Largest projector mismatch `max_shell ‖P_a − P_b‖_max` between two eigensystems
/// of the same Hamiltonian, with shells taken from `a`, plus the largest
/// energy mismatch. Degenerate shells are compared through their projectors
/// since individual vectors inside them are basis-dependent.
pub fn shell_projector_distance(a: &EigenSystem, b: &EigenSystem) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            what: "eigensystem",
            expected: a.len(),
            got: b.len(),
        });
    }
    let energy = a
        .energies
        .iter()
        .zip(&b.energies)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let projector = |e: &EigenSystem, r: &Range<usize>| {
        let cols = e.modes.columns(r.start, r.len());
        cols * cols.adjoint()
    };
    let mut worst = 0.0f64;
    for shell in a.shells() {
        worst = worst.max(max_abs(&(projector(a, &shell) - projector(b, &shell))));
    }
    Ok((worst, energy))
}

/// How each eigenmode couples to the drain, in a drain-adapted basis.
///
/// Inside each degenerate shell the basis is rotated so that a single mode
/// carries the whole drain amplitude and the rest are exactly dark. Global
/// phases are then fixed so that `ψ_i[n₀]` is real and positive for bright
/// modes (dark modes: first significant component real and positive), which
/// makes every bright `φ_i` zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DrainCoupling {
    eigen: EigenSystem,
    drain: usize,
    gamma: f64,
    dark_tol: f64,
    rates: Vec<f64>,
    phases: Vec<Option<f64>>,
    dark: Vec<usize>,
}

impl DrainCoupling {
    /// Couplings of an arbitrary eigenbasis, used as given (no rotation or
    /// phase fixing). Mode phases then enter through `φ_i`.
    pub fn with_basis(eigen: EigenSystem, drain: usize, gamma: f64, dark_tol: f64) -> Result<Self> {
        let n = eigen.len();
        if drain >= n {
            return Err(Error::SiteOutOfRange {
                index: drain,
                n_sites: n,
            });
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::param("gamma", format!("must be > 0, got {gamma}")));
        }
        if !(dark_tol >= 0.0) {
            return Err(Error::param("dark_tol", "must be >= 0"));
        }
        let threshold = dark_tol * gamma / n as f64;
        let mut rates = Vec::with_capacity(n);
        let mut phases = Vec::with_capacity(n);
        let mut dark = Vec::new();
        for i in 0..n {
            let amp = eigen.modes[(drain, i)];
            let rate = amp.norm_sqr() * gamma;
            if rate < threshold {
                dark.push(i);
                rates.push(0.0);
                phases.push(None);
            } else {
                rates.push(rate);
                phases.push(Some(principal_arg(amp)));
            }
        }
        Ok(DrainCoupling {
            eigen,
            drain,
            gamma,
            dark_tol,
            rates,
            phases,
            dark,
        })
    }

    pub fn eigen(&self) -> &EigenSystem {
        &self.eigen
    }

    pub fn drain(&self) -> usize {
        self.drain
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dark_tol(&self) -> f64 {
        self.dark_tol
    }

    /// `Γ̄_i`; exactly zero for dark modes.
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// `φ_i ∈ (−π, π]`, `None` for dark modes.
    pub fn phases(&self) -> &[Option<f64>] {
        &self.phases
    }

    pub(crate) fn phase(&self, i: usize) -> f64 {
        self.phases[i].unwrap_or(0.0)
    }

    pub fn dark_modes(&self) -> &[usize] {
        &self.dark
    }

    pub fn is_dark(&self, i: usize) -> bool {
        self.phases[i].is_none()
    }

    pub fn bright_modes(&self) -> Vec<usize> {
        (0..self.rates.len()).filter(|&i| !self.is_dark(i)).collect()
    }

    /// Drain amplitude `ψ_i[n₀]`.
    pub fn amplitude(&self, i: usize) -> C64 {
        self.eigen.modes[(self.drain, i)]
    }

    /// Noise weights `w_i = e^{−iφ_i} √Γ̄_i = √Γ ψ_i[n₀]*` (zero for dark modes).
    pub fn noise_weights(&self) -> Vec<C64> {
        (0..self.rates.len())
            .map(|i| C64::from_polar(self.rates[i].sqrt(), -self.phase(i)))
            .collect()
    }
}

fn principal_arg(z: C64) -> f64 {
    let a = z.arg();
    if a <= -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        a
    }
}

/// Drain couplings with degenerate-shell rotation and the phase convention
/// described on [`DrainCoupling`].
pub fn drain_couplings(eig: &EigenSystem, drain: usize, gamma: f64, dark_tol: f64) -> Result<DrainCoupling> {
    let n = eig.len();
    if drain >= n {
        return Err(Error::SiteOutOfRange {
            index: drain,
            n_sites: n,
        });
    }
    let threshold = dark_tol * gamma / n as f64;
    let mut modes = eig.modes.clone();
    for shell in eig.degenerate_shells() {
        let amps: Vec<C64> = shell.clone().map(|i| modes[(drain, i)]).collect();
        let weight: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if weight * gamma < threshold {
            continue;
        }
        let u = bright_dark_rotation(&amps);
        let block = modes.columns(shell.start, shell.len()) * &u;
        modes.columns_mut(shell.start, shell.len()).copy_from(&block);
    }
    for i in 0..n {
        let amp = modes[(drain, i)];
        let anchor = if amp.norm_sqr() * gamma >= threshold {
            amp
        } else {
            let col = modes.column(i);
            let peak = col.iter().fold(0.0f64, |m, z| m.max(z.norm()));
            *col.iter().find(|z| z.norm() > 1e-6 * peak).unwrap_or(&real(1.0))
        };
        if anchor.norm() > 0.0 {
            let phase = anchor.conj() / anchor.norm();
            for r in 0..n {
                modes[(r, i)] *= phase;
            }
        }
        if amp.norm_sqr() * gamma >= threshold {
            // real-positive by construction; drop the rounding residue
            modes[(drain, i)] = real(modes[(drain, i)].norm());
        }
    }
    let eigen = EigenSystem {
        energies: eig.energies.clone(),
        modes,
        residual: eig.residual,
    };
    DrainCoupling::with_basis(eigen, drain, gamma, dark_tol)
}

/// Unitary `U` whose first column is `conj(a)/‖a‖`; columns `2..` are orthogonal
/// to it, so `Σ_k a_k U_kj = 0` for every `j > 0`.
fn bright_dark_rotation(amps: &[C64]) -> CMatrix {
    let m = amps.len();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let mut basis: Vec<nalgebra::DVector<C64>> = Vec::with_capacity(m);
    basis.push(nalgebra::DVector::from_iterator(m, amps.iter().map(|a| a.conj() / norm)));
    for k in 0..m {
        if basis.len() == m {
            break;
        }
        let mut v = nalgebra::DVector::from_fn(m, |r, _| if r == k { real(1.0) } else { real(0.0) });
        for _ in 0..2 {
            for b in &basis {
                let overlap = b.dotc(&v);
                v -= b * overlap;
            }
        }
        let len = v.norm();
        if len > 1e-8 {
            basis.push(v / real(len));
        }
    }
    CMatrix::from_columns(&basis)
}

/// Pairing `i ↔ −i` of modes with opposite energies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiralPairing {
    /// Partner of each mode; self-partnered for zero modes and unpaired leftovers.
    pub partner: Vec<usize>,
    /// `max |ε_i + ε_{−i}|` (unpaired modes contribute `2|ε_i|`).
    pub energy_defect: f64,
    /// `max | |ψ_i[n₀]| − |ψ_{−i}[n₀]| |`.
    pub amplitude_defect: f64,
    /// Modes that found no partner within tolerance.
    pub unpaired: Vec<usize>,
    pub tol: f64,
}

impl ChiralPairing {
    /// Every mode matched within the energy tolerance.
    pub fn is_valid(&self) -> bool {
        self.unpaired.is_empty() && self.energy_defect <= self.tol
    }

    /// Whether both defects are within `tol`.
    pub fn holds(&self, tol: f64) -> bool {
        self.unpaired.is_empty() && self.energy_defect <= tol && self.amplitude_defect <= tol
    }
}

/// Greedy matching of each mode with an unmatched mode of opposite energy.
///
/// Among candidates with `|ε_i + ε_j| < tol` the one with the closest drain
/// amplitude wins, so bright modes of degenerate shells pair with each other.
pub fn chiral_pairing(coupling: &DrainCoupling, tol: f64) -> ChiralPairing {
    let e = coupling.eigen.energies();
    let n = e.len();
    let amp: Vec<f64> = (0..n).map(|i| coupling.amplitude(i).norm()).collect();
    let mut partner = vec![usize::MAX; n];
    let mut unpaired = Vec::new();
    let mut energy_defect = 0.0f64;
    let mut amplitude_defect = 0.0f64;
    for i in 0..n {
        if partner[i] != usize::MAX {
            continue;
        }
        if e[i].abs() < tol {
            partner[i] = i;
            continue;
        }
        let best = (0..n)
            .filter(|&j| j != i && partner[j] == usize::MAX && (e[i] + e[j]).abs() < tol)
            .min_by(|&a, &b| {
                let ka = ((amp[i] - amp[a]).abs(), (e[i] + e[a]).abs());
                let kb = ((amp[i] - amp[b]).abs(), (e[i] + e[b]).abs());
                ka.partial_cmp(&kb).unwrap()
            });
        match best {
            Some(j) => {
                partner[i] = j;
                partner[j] = i;
                energy_defect = energy_defect.max((e[i] + e[j]).abs());
                amplitude_defect = amplitude_defect.max((amp[i] - amp[j]).abs());
            }
            None => {
                partner[i] = i;
                unpaired.push(i);
                energy_defect = energy_defect.max(2.0 * e[i].abs());
            }
        }
    }
    ChiralPairing {
        partner,
        energy_defect,
        amplitude_defect,
        unpaired,
        tol,
    }
}

/// The dynamical matrix `A` in the drain-adapted eigenbasis.
pub fn dynamical_matrix(coupling: &DrainCoupling) -> CMatrix {
    let e = coupling.eigen.energies();
    let n = e.len();
    let rates = coupling.rates();
    CMatrix::from_fn(n, n, |i, j| {
        let damping = C64::from_polar(
            0.5 * (rates[i] * rates[j]).sqrt(),
            coupling.phase(j) - coupling.phase(i),
        );
        let diag = if i == j { real(e[i]) } else { real(0.0) };
        diag - C64::i() * damping
    })
}

/// `Σ_j (Γ̄_j/2)/(γ/2 + i(ν − ε_j)) − 1` at `λ = ν − iγ/2`, i.e.
/// `−(i/2) Σ_j Γ̄_j/(λ − ε_j) − 1`.
pub fn secular_residual(energies: &[f64], rates: &[f64], lambda: C64) -> C64 {
    let gamma = -2.0 * lambda.im;
    let nu = lambda.re;
    energies
        .iter()
        .zip(rates)
        .filter(|(_, r)| **r > 0.0)
        .map(|(e, r)| real(0.5 * r) / C64::new(0.5 * gamma, nu - e))
        .sum::<C64>()
        - real(1.0)
}

fn secular_derivative(energies: &[f64], rates: &[f64], lambda: C64) -> C64 {
    // d/dλ of −(i/2) Σ Γ̄/(λ − ε) is (i/2) Σ Γ̄/(λ − ε)²
    energies
        .iter()
        .zip(rates)
        .filter(|(_, r)| **r > 0.0)
        .map(|(e, r)| {
            let d = lambda - e;
            real(0.5 * r) * C64::i() / (d * d)
        })
        .sum()
}

/// Newton refinement of approximate bright eigenvalues on the secular equation.
/// A refined root is kept only if it lowers the residual and does not collide
/// with another refined root.
pub(crate) fn polish_roots(energies: &[f64], rates: &[f64], guesses: &[C64]) -> Vec<C64> {
    let scale = energies.iter().fold(1.0f64, |a, e| a.max(e.abs()));
    let mut out: Vec<C64> = guesses
        .iter()
        .map(|&g| {
            let mut best = g;
            let mut best_res = secular_residual(energies, rates, g).norm();
            let mut x = g;
            for _ in 0..60 {
                let f = secular_residual(energies, rates, x);
                let df = secular_derivative(energies, rates, x);
                if !(df.norm() > 0.0) {
                    break;
                }
                let step = f / df;
                x -= step;
                if !x.re.is_finite() || !x.im.is_finite() {
                    break;
                }
                let res = secular_residual(energies, rates, x).norm();
                if res < best_res {
                    best = x;
                    best_res = res;
                }
                if step.norm() <= 1e-17 * (scale + x.norm()) {
                    break;
                }
            }
            best
        })
        .collect();
    for i in 0..out.len() {
        for j in 0..i {
            let close = (out[i] - out[j]).norm() <= 1e-12 * scale;
            let distinct = (guesses[i] - guesses[j]).norm() > 1e-9 * scale;
            if close && distinct {
                out[i] = guesses[i];
                out[j] = guesses[j];
            }
        }
    }
    out
}

/// Eigenvalues of the bright block of `A`, refined on the secular equation,
/// together with the bright mode indices.
pub(crate) fn bright_eigenvalues(a: &CMatrix, coupling: &DrainCoupling) -> Result<(Vec<usize>, Vec<C64>)> {
    let bright = coupling.bright_modes();
    if bright.is_empty() {
        return Ok((bright, Vec::new()));
    }
    let nb = bright.len();
    let block = CMatrix::from_fn(nb, nb, |r, c| a[(bright[r], bright[c])]);
    let norm = max_abs(&block);
    let schur = nalgebra::Schur::try_new(block, f64::EPSILON, 1000 * nb.max(10))
        .ok_or(Error::EigenFailure { n: nb, norm })?;
    let guesses: Vec<C64> = schur.unpack().1.diagonal().iter().copied().collect();
    let energies: Vec<f64> = bright.iter().map(|&i| coupling.eigen.energies()[i]).collect();
    let rates: Vec<f64> = bright.iter().map(|&i| coupling.rates()[i]).collect();
    Ok((bright, polish_roots(&energies, &rates, &guesses)))
}

/// Eigenvalues `λ = ν − iγ/2` of `A` with their secular residuals and left
/// eigenvectors.
#[derive(Clone, Debug)]
pub struct DynamicalSpectrum {
    /// Sorted by `ν`, then `γ`.
    pub eigenvalues: Vec<C64>,
    /// True where the eigenvalue belongs to a dark mode (`λ = ε_i` exactly).
    pub dark: Vec<bool>,
    /// Secular-equation residuals; `None` for dark eigenvalues.
    pub residuals: Vec<Option<f64>>,
    /// Rows `u_ν` with `u_ν A = λ_ν u_ν`, unit norm.
    pub left_vectors: CMatrix,
    /// Noise couplings `g_ν = Σ_j u_{ν,j} e^{−iφ_j} √Γ̄_j`.
    pub noise_couplings: Vec<C64>,
}

impl DynamicalSpectrum {
    /// Relaxation rates `γ = −2 Im λ`.
    pub fn rates(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| -2.0 * l.im).collect()
    }

    /// Smallest bright relaxation rate: the slowest approach to the steady state.
    pub fn min_bright_rate(&self) -> Option<f64> {
        self.eigenvalues
            .iter()
            .zip(&self.dark)
            .filter(|(_, d)| !**d)
            .map(|(l, _)| -2.0 * l.im)
            .reduce(f64::min)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().flatten().fold(0.0, |a, r| a.max(*r))
    }

    pub fn n_dark(&self) -> usize {
        self.dark.iter().filter(|d| **d).count()
    }
}

pub fn dynamical_spectrum(a: &CMatrix, coupling: &DrainCoupling) -> Result<DynamicalSpectrum> {
    let n = coupling.eigen.len();
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::LengthMismatch {
            what: "dynamical matrix",
            expected: n,
            got: a.nrows(),
        });
    }
    let energies = coupling.eigen.energies();
    let rates = coupling.rates();
    let weights = coupling.noise_weights();
    let (_, bright_values) = bright_eigenvalues(a, coupling)?;

    struct Entry {
        lambda: C64,
        dark: bool,
        residual: Option<f64>,
        left: Vec<C64>,
    }
    let mut entries: Vec<Entry> = Vec::with_capacity(n);
    for &i in coupling.dark_modes() {
        let mut left = vec![real(0.0); n];
        left[i] = real(1.0);
        entries.push(Entry {
            lambda: real(energies[i]),
            dark: true,
            residual: None,
            left,
        });
    }
    for lambda in bright_values {
        let residual = secular_residual(energies, rates, lambda).norm();
        // (γ/2 + i(ν − ε_j)) u_j ∝ e^{iφ_j} √Γ̄_j
        let mut left: Vec<C64> = (0..n)
            .map(|j| {
                if rates[j] > 0.0 {
                    weights[j].conj() / (C64::i() * (lambda - energies[j]))
                } else {
                    real(0.0)
                }
            })
            .collect();
        let norm = left.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        left.iter_mut().for_each(|z| *z /= norm);
        entries.push(Entry {
            lambda,
            dark: false,
            residual: Some(residual),
            left,
        });
    }
    entries.sort_by(|x, y| {
        x.lambda
            .re
            .total_cmp(&y.lambda.re)
            .then(y.lambda.im.total_cmp(&x.lambda.im))
    });
    let left_vectors = CMatrix::from_fn(n, n, |r, c| entries[r].left[c]);
    let noise_couplings = entries
        .iter()
        .map(|e| e.left.iter().zip(&weights).map(|(u, w)| u * w).sum())
        .collect();
    Ok(DynamicalSpectrum {
        eigenvalues: entries.iter().map(|e| e.lambda).collect(),
        dark: entries.iter().map(|e| e.dark).collect(),
        residuals: entries.iter().map(|e| e.residual).collect(),
        left_vectors,
        noise_couplings,
    })
}

/// Plot-ready summary of the spectral analysis at one drain site.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumExport {
    pub drain: usize,
    pub gamma: f64,
    pub energies: Vec<f64>,
    pub drain_rates: Vec<f64>,
    pub dark_modes: Vec<usize>,
    /// `(ν, γ)` for every eigenvalue of `A`.
    pub dynamical: Vec<(f64, f64)>,
    pub dark_eigenvalue: Vec<bool>,
    pub residuals: Vec<Option<f64>>,
    pub max_residual: f64,
    pub min_relaxation_rate: Option<f64>,
}

impl SpectrumExport {
    pub fn new(coupling: &DrainCoupling, spectrum: &DynamicalSpectrum) -> Self {
        SpectrumExport {
            drain: coupling.drain(),
            gamma: coupling.gamma(),
            energies: coupling.eigen().energies().to_vec(),
            drain_rates: coupling.rates().to_vec(),
            dark_modes: coupling.dark_modes().to_vec(),
            dynamical: spectrum
                .eigenvalues
                .iter()
                .map(|l| (l.re, -2.0 * l.im))
                .collect(),
            dark_eigenvalue: spectrum.dark.clone(),
            residuals: spectrum.residuals.clone(),
            max_residual: spectrum.max_residual(),
            min_relaxation_rate: spectrum.min_bright_rate(),
        }
    }
}

/// Rank of the anti-Hermitian part of `A` above `tol` (singular values).
pub fn damping_rank(a: &CMatrix, tol: f64) -> usize {
    let skew = a - a.adjoint();
    let sv = skew.singular_values();
    sv.iter().filter(|s| **s > tol).count()
}

/// Real matrix of `|ψ_i[n]|²` weights, handy for plotting mode profiles.
pub fn mode_weights(eig: &EigenSystem) -> DMatrix<f64> {
    eig.modes.map(|z| z.norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{
        build_bipartite_random, build_chain, build_hofstadter, chain_bonds, square_index, BipartiteBonds,
        Hopping,
    };
    use std::f64::consts::{FRAC_PI_2, SQRT_2};

    fn chain(n: usize) -> Lattice {
        build_chain(n, &Hopping::Uniform(real(1.0)), None).unwrap()
    }

    #[test]
    fn three_site_chain_modes() {
        let eig = diagonalize(&chain(3)).unwrap();
        let want = [-SQRT_2, 0.0, SQRT_2];
        for (e, w) in eig.energies().iter().zip(want) {
            assert!((e - w).abs() < 1e-14);
        }
        // zero mode ∝ (1, 0, −1)/√2 up to a global phase
        let zero = eig.modes().column(1);
        let phase = zero[0] / zero[0].norm();
        let expect = [1.0 / SQRT_2, 0.0, -1.0 / SQRT_2];
        for (z, w) in zero.iter().zip(expect) {
            assert!((z / phase - real(w)).norm() < 1e-12);
        }
        assert!(eig.residual() < 1e-14);
        assert!(eig.orthonormality_residual() < 1e-14);
    }

    #[test]
    fn single_site() {
        let l = build_chain(1, &Hopping::Uniform(real(1.0)), Some(&[5.0])).unwrap();
        let eig = diagonalize(&l).unwrap();
        assert_eq!(eig.energies(), &[5.0]);
        assert!((eig.modes()[(0, 0)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn center_drain_has_dark_zero_mode() {
        let eig = diagonalize(&chain(3)).unwrap();
        let c = drain_couplings(&eig, 1, 1.0, DEFAULT_DARK_TOL).unwrap();
        assert_eq!(c.dark_modes(), &[1]);
        assert!(c.phases()[1].is_none());
    }

    #[test]
    fn end_drain_rates() {
        let eig = diagonalize(&chain(3)).unwrap();
        let gamma = 2.0;
        let c = drain_couplings(&eig, 0, gamma, DEFAULT_DARK_TOL).unwrap();
        assert!(c.dark_modes().is_empty());
        for (r, w) in c.rates().iter().zip([0.25, 0.5, 0.25]) {
            assert!((r - w * gamma).abs() < 1e-14);
        }
        // phase convention: bright drain amplitudes real and positive
        for i in 0..3 {
            let a = c.amplitude(i);
            assert!(a.im == 0.0 && a.re > 0.0);
            assert_eq!(c.phases()[i], Some(0.0));
        }
        assert!((c.rates().iter().sum::<f64>() - gamma).abs() < 1e-10 * gamma);
    }

    #[test]
    fn drain_out_of_range() {
        let eig = diagonalize(&chain(3)).unwrap();
        assert!(matches!(
            drain_couplings(&eig, 3, 1.0, DEFAULT_DARK_TOL),
            Err(Error::SiteOutOfRange { .. })
        ));
    }

    #[test]
    fn degenerate_shells_have_one_bright_mode() {
        let l = build_hofstadter(2, 1.0, 0.0).unwrap();
        let eig = diagonalize(&l).unwrap();
        assert!(!eig.degenerate_shells().is_empty());
        let drain = square_index(2, 1, 2);
        let c = drain_couplings(&eig, drain, 3.0, DEFAULT_DARK_TOL).unwrap();
        let threshold = DEFAULT_DARK_TOL * 3.0 / l.n_sites() as f64;
        for shell in eig.shells() {
            let bright = shell.filter(|&i| c.rates()[i] > threshold).count();
            assert!(bright <= 1);
        }
        // rotation keeps an orthonormal eigenbasis of the same H
        assert!(c.eigen().orthonormality_residual() < 1e-12);
        assert!(max_abs(&(c.eigen().reconstruct() - l.hamiltonian())) < 1e-12);
        assert!((c.rates().iter().sum::<f64>() - 3.0).abs() < 1e-10 * 3.0);
    }

    #[test]
    fn bipartite_random_pairs_exactly() {
        let labels: Vec<u8> = (0..9).map(|i| (i % 2) as u8).collect();
        let l = build_bipartite_random(&labels, &BipartiteBonds::List(chain_bonds(9)), 5, 1.0).unwrap();
        let eig = diagonalize(&l).unwrap();
        for drain in 0..9 {
            let c = drain_couplings(&eig, drain, 1.0, DEFAULT_DARK_TOL).unwrap();
            let p = chiral_pairing(&c, 1e-9);
            assert!(p.is_valid());
            assert!(p.energy_defect < 1e-10, "{}", p.energy_defect);
            assert!(p.amplitude_defect < 1e-10, "{}", p.amplitude_defect);
            for (i, &j) in p.partner.iter().enumerate() {
                assert_eq!(p.partner[j], i);
            }
        }
    }

    #[test]
    fn two_mode_model_pairs_energies_but_not_amplitudes() {
        let (v, j) = (1.0, 1.0);
        let l = build_chain(2, &Hopping::Uniform(real(-j)), Some(&[v / 2.0, -v / 2.0])).unwrap();
        let eig = diagonalize(&l).unwrap();
        let e = (j * j + v * v / 4.0).sqrt();
        assert!((eig.energies()[0] + e).abs() < 1e-14 && (eig.energies()[1] - e).abs() < 1e-14);
        let c = drain_couplings(&eig, 0, 1.0, DEFAULT_DARK_TOL).unwrap();
        let p = chiral_pairing(&c, 1e-9);
        assert!(p.is_valid());
        assert!(p.energy_defect < 1e-14);
        // |ψ±[1]|² = (1 ± V/(2E))/2
        let want = ((0.5 * (1.0 + v / (2.0 * e))).sqrt() - (0.5 * (1.0 - v / (2.0 * e))).sqrt()).abs();
        assert!((p.amplitude_defect - want).abs() < 1e-12);
        assert!(!p.holds(1e-6));
    }

    #[test]
    fn single_zero_mode_self_pairs() {
        let eig = diagonalize(&chain(1)).unwrap();
        let c = drain_couplings(&eig, 0, 1.0, DEFAULT_DARK_TOL).unwrap();
        let p = chiral_pairing(&c, 1e-9);
        assert_eq!(p.partner, vec![0]);
        assert_eq!(p.energy_defect, 0.0);
        assert_eq!(p.amplitude_defect, 0.0);
    }

    #[test]
    fn unpairable_spectrum_reports_defect() {
        let l = build_chain(1, &Hopping::Uniform(real(1.0)), Some(&[0.75])).unwrap();
        let c = drain_couplings(&diagonalize(&l).unwrap(), 0, 1.0, DEFAULT_DARK_TOL).unwrap();
        let p = chiral_pairing(&c, 1e-9);
        assert_eq!(p.unpaired, vec![0]);
        assert!((p.energy_defect - 1.5).abs() < 1e-15);
        assert!(!p.is_valid());
    }

    #[test]
    fn dynamical_matrix_cases() {
        let l = build_chain(1, &Hopping::Uniform(real(1.0)), Some(&[0.3])).unwrap();
        let c = drain_couplings(&diagonalize(&l).unwrap(), 0, 2.0, DEFAULT_DARK_TOL).unwrap();
        let a = dynamical_matrix(&c);
        assert!((a[(0, 0)] - C64::new(0.3, -1.0)).norm() < 1e-15);

        let eig = diagonalize(&chain(3)).unwrap();
        let c = drain_couplings(&eig, 0, 1.0, DEFAULT_DARK_TOL).unwrap();
        let a = dynamical_matrix(&c);
        // A − A† = −i √Γ̄ √Γ̄ᵀ is rank one
        assert_eq!(damping_rank(&a, 1e-12), 1);
        let r = c.rates();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { real(eig.energies()[i]) } else { real(0.0) }
                    - C64::i() * 0.5 * (r[i] * r[j]).sqrt();
                assert!((a[(i, j)] - want).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn dynamical_spectrum_single_site() {
        let l = build_chain(1, &Hopping::Uniform(real(1.0)), Some(&[0.4])).unwrap();
        let c = drain_couplings(&diagonalize(&l).unwrap(), 0, 1.0, DEFAULT_DARK_TOL).unwrap();
        let s = dynamical_spectrum(&dynamical_matrix(&c), &c).unwrap();
        assert!((s.eigenvalues[0] - C64::new(0.4, -0.5)).norm() < 1e-15);
        assert!(s.residuals[0].unwrap() < 1e-15);
        assert_eq!(s.min_bright_rate(), Some(1.0));
    }

    #[test]
    fn center_drain_keeps_zero_eigenvalue() {
        let c = drain_couplings(&diagonalize(&chain(3)).unwrap(), 1, 1.0, DEFAULT_DARK_TOL).unwrap();
        let s = dynamical_spectrum(&dynamical_matrix(&c), &c).unwrap();
        assert_eq!(s.n_dark(), 1);
        let k = s.dark.iter().position(|d| *d).unwrap();
        assert!(s.eigenvalues[k].norm() < 1e-14 && s.eigenvalues[k].im == 0.0);
        assert!(s.eigenvalues.iter().zip(&s.dark).all(|(l, d)| *d || l.im < 0.0));
    }

    #[test]
    fn bright_spectrum_matches_schur_and_eigenvectors() {
        let l = build_hofstadter(2, 1.0, FRAC_PI_2).unwrap();
        let eig = diagonalize(&l).unwrap();
        let c = drain_couplings(&eig, square_index(2, 1, 1), 3.0, DEFAULT_DARK_TOL).unwrap();
        let a = dynamical_matrix(&c);
        let s = dynamical_spectrum(&a, &c).unwrap();
        assert!(s.max_residual() < 1e-8);
        let mut ours: Vec<C64> = s.eigenvalues.clone();
        let mut direct: Vec<C64> = a.clone().schur().unpack().1.diagonal().iter().copied().collect();
        let key = |z: &C64, w: &C64| z.re.total_cmp(&w.re).then(z.im.total_cmp(&w.im));
        ours.sort_by(key);
        direct.sort_by(key);
        for (x, y) in ours.iter().zip(&direct) {
            assert!((x - y).norm() < 1e-10);
        }
        for (k, lambda) in s.eigenvalues.iter().enumerate() {
            let u = s.left_vectors.row(k);
            let diff = u * &a - u * *lambda;
            assert!(diff.iter().all(|z| z.norm() < 1e-9));
            assert!(s.dark[k] || lambda.im < 0.0);
        }
    }
}
