//! Gaussian steady state of the drained lattice.
//!
//! The second moments `N_mn = ⟨a†_m a_n⟩` and `M_mn = ⟨a_m a_n⟩` obey
//!
//! ```text
//! Ṁ = D M + M Dᵀ + Γ 𝓜 P,     Ṅ = D̄ N + N Dᵀ + Γ 𝓝 P,
//! D = −iH − (Γ/2) P − (γ_loss/2) I,
//! ```
//!
//! with `P` the projector on the drain site, `𝓝 = sinh² r` and
//! `𝓜 = e^{iφ} cosh r sinh r`. Vacuum loss adds no diffusion in normal order.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::lattice::Lattice;
use crate::linalg::{max_abs, real};
use crate::lyapunov::{solve_sylvester, solve_sylvester_kronecker};
use crate::spectral::{
    bright_eigenvalues, diagonalize, drain_couplings, dynamical_matrix, ChiralPairing, DrainCoupling,
    DEFAULT_DARK_TOL,
};
use crate::symmetry::{Provenance, SymmetryMatrix};
use crate::{CMatrix, Error, Result, C64};

/// Physicality tolerance on the smallest eigenvalue of `C + (i/2)Ω`.
pub const PHYSICALITY_TOL: f64 = 1e-8;
/// Eigenframes with a worse condition number fall back to the Schur solver.
pub const MAX_FRAME_CONDITION: f64 = 1e8;
/// Largest lattice accepted by the Kronecker solver.
pub const KRONECKER_MAX_SITES: usize = 30;

/// Squeezing of the reservoir: strength `r ≥ 0` and phase `φ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub r: f64,
    pub phi: f64,
}

impl NoiseParams {
    pub fn new(r: f64, phi: f64) -> Result<Self> {
        let p = NoiseParams { r, phi };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return Err(Error::param("r", format!("must be finite and >= 0, got {}", self.r)));
        }
        if !self.phi.is_finite() {
            return Err(Error::param("phi", "must be finite"));
        }
        Ok(())
    }

    /// `𝓝 = sinh² r`.
    pub fn n(&self) -> f64 {
        self.r.sinh().powi(2)
    }

    /// `𝓜 = e^{iφ} cosh r sinh r`.
    pub fn m(&self) -> C64 {
        C64::from_polar(self.r.cosh() * self.r.sinh(), self.phi)
    }
}

/// Where and how the lattice is drained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrainSpec {
    pub drain: usize,
    pub gamma: f64,
    pub noise: NoiseParams,
    /// Uniform single-particle loss rate into vacuum.
    #[serde(default)]
    pub loss: f64,
    #[serde(default = "default_dark_tol")]
    pub dark_tol: f64,
}

fn default_dark_tol() -> f64 {
    DEFAULT_DARK_TOL
}

impl DrainSpec {
    pub fn new(drain: usize, gamma: f64, noise: NoiseParams) -> Self {
        DrainSpec {
            drain,
            gamma,
            noise,
            loss: 0.0,
            dark_tol: DEFAULT_DARK_TOL,
        }
    }

    pub fn with_loss(mut self, loss: f64) -> Self {
        self.loss = loss;
        self
    }

    pub fn validate(&self, n_sites: usize) -> Result<()> {
        if self.drain >= n_sites {
            return Err(Error::SiteOutOfRange {
                index: self.drain,
                n_sites,
            });
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::param("gamma", format!("must be > 0, got {}", self.gamma)));
        }
        if !(self.loss >= 0.0) || !self.loss.is_finite() {
            return Err(Error::param("loss", format!("must be >= 0, got {}", self.loss)));
        }
        self.noise.validate()
    }
}

/// Normal and anomalous second moments with the residual of the equation
/// they were obtained from.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceState {
    normal: CMatrix,
    anomalous: CMatrix,
    residual: f64,
}

impl CovarianceState {
    /// `N` must be Hermitian and `M` symmetric; both are symmetrised exactly.
    pub fn new(normal: CMatrix, anomalous: CMatrix, residual: f64) -> Result<Self> {
        let n = normal.nrows();
        for (what, m) in [("normal moments", &normal), ("anomalous moments", &anomalous)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::LengthMismatch {
                    what,
                    expected: n,
                    got: m.nrows().max(m.ncols()),
                });
            }
        }
        let normal = (&normal + normal.adjoint()).map(|z| z * 0.5);
        let anomalous = (&anomalous + anomalous.transpose()).map(|z| z * 0.5);
        Ok(CovarianceState {
            normal,
            anomalous,
            residual,
        })
    }

    pub fn vacuum(n_sites: usize) -> Self {
        CovarianceState {
            normal: CMatrix::zeros(n_sites, n_sites),
            anomalous: CMatrix::zeros(n_sites, n_sites),
            residual: 0.0,
        }
    }

    /// `N_mn = ⟨a†_m a_n⟩`.
    pub fn normal(&self) -> &CMatrix {
        &self.normal
    }

    /// `M_mn = ⟨a_m a_n⟩`.
    pub fn anomalous(&self) -> &CMatrix {
        &self.anomalous
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn n_sites(&self) -> usize {
        self.normal.nrows()
    }

    /// Symmetrised quadrature covariance in interleaved order
    /// `(x_0, p_0, x_1, p_1, …)`; the vacuum is `I/2`.
    pub fn quadrature_covariance(&self) -> DMatrix<f64> {
        let n = self.n_sites();
        let mut c = DMatrix::zeros(2 * n, 2 * n);
        for m in 0..n {
            for k in 0..n {
                let a = self.anomalous[(m, k)];
                let b = self.normal[(m, k)];
                let half = if m == k { 0.5 } else { 0.0 };
                c[(2 * m, 2 * k)] = a.re + b.re + half;
                c[(2 * m + 1, 2 * k + 1)] = b.re - a.re + half;
                c[(2 * m, 2 * k + 1)] = a.im + b.im;
                c[(2 * k + 1, 2 * m)] = a.im + b.im;
            }
        }
        c
    }

    /// Smallest eigenvalue of `C + (i/2)Ω`; non-negative for a physical state.
    pub fn physicality(&self) -> f64 {
        let c = self.quadrature_covariance();
        let dim = c.nrows();
        let mut h = c.map(real);
        for k in (0..dim).step_by(2) {
            h[(k, k + 1)] += C64::new(0.0, 0.5);
            h[(k + 1, k)] -= C64::new(0.0, 0.5);
        }
        SymmetricEigen::new(h)
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b))
    }

    pub fn is_physical(&self) -> bool {
        self.physicality() >= -PHYSICALITY_TOL
    }

    /// Mean occupation `⟨a†_n a_n⟩` per site.
    pub fn occupations(&self) -> Vec<f64> {
        (0..self.n_sites()).map(|i| self.normal[(i, i)].re).collect()
    }

    /// Moments in an eigenbasis `Ψ`: `(Ψᵀ N Ψ̄, Ψ† M Ψ̄)`, i.e.
    /// `⟨b†_i b_j⟩` and `⟨b_i b_j⟩` for `b_i = Σ_n ψ_i[n]* a_n`.
    pub fn in_basis(&self, modes: &CMatrix) -> (CMatrix, CMatrix) {
        let conj = modes.conjugate();
        (
            modes.transpose() * &self.normal * &conj,
            modes.adjoint() * &self.anomalous * &conj,
        )
    }

    /// Inverse of [`CovarianceState::in_basis`].
    pub fn from_basis(modes: &CMatrix, normal_b: &CMatrix, anomalous_b: &CMatrix, residual: f64) -> Result<Self> {
        let t = modes.transpose();
        CovarianceState::new(
            modes.conjugate() * normal_b * &t,
            modes * anomalous_b * &t,
            residual,
        )
    }
}

/// Site-basis drift `D = −iH − (Γ/2) P − (γ_loss/2) I`.
pub fn drift_matrix(lattice: &Lattice, spec: &DrainSpec) -> CMatrix {
    drift_from(lattice.hamiltonian(), spec)
}

fn drift_from(h: &CMatrix, spec: &DrainSpec) -> CMatrix {
    let n = h.nrows();
    let mut d = h.map(|z| -C64::i() * z);
    for i in 0..n {
        d[(i, i)] -= real(0.5 * spec.loss);
    }
    d[(spec.drain, spec.drain)] -= real(0.5 * spec.gamma);
    d
}

fn noise_terms(n: usize, spec: &DrainSpec) -> (CMatrix, CMatrix) {
    let mut qn = CMatrix::zeros(n, n);
    let mut qm = CMatrix::zeros(n, n);
    qn[(spec.drain, spec.drain)] = real(spec.gamma * spec.noise.n());
    qm[(spec.drain, spec.drain)] = spec.gamma * spec.noise.m();
    (qn, qm)
}

/// Time derivatives `(Ṅ, Ṁ)` of the moments.
fn moment_rates(d: &CMatrix, qn: &CMatrix, qm: &CMatrix, n: &CMatrix, m: &CMatrix) -> (CMatrix, CMatrix) {
    let dt = d.transpose();
    (d.conjugate() * n + n * &dt + qn, d * m + m * &dt + qm)
}

/// `max(‖Ṅ‖_max, ‖Ṁ‖_max)` for the given moments: zero exactly at the steady state.
pub fn lyapunov_residual(lattice: &Lattice, spec: &DrainSpec, state: &CovarianceState) -> f64 {
    residual_for(lattice.hamiltonian(), spec, state)
}

fn residual_for(h: &CMatrix, spec: &DrainSpec, state: &CovarianceState) -> f64 {
    let d = drift_from(h, spec);
    let (qn, qm) = noise_terms(h.nrows(), spec);
    let (rn, rm) = moment_rates(&d, &qn, &qm, &state.normal, &state.anomalous);
    max_abs(&rn).max(max_abs(&rm))
}

/// Which linear solver produces the steady state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SteadyMethod {
    /// Eigenframe of the drift with a fallback to `Schur` on ill-conditioning.
    #[default]
    Auto,
    /// Bartels–Stewart in the site basis.
    Schur,
    /// Dense vectorised solve, small lattices only.
    Kronecker,
}

/// Exact steady state. Fails with [`Error::DarkModes`] when the lossless
/// steady state is not unique.
pub fn steady_state(lattice: &Lattice, spec: &DrainSpec) -> Result<CovarianceState> {
    steady_state_with(lattice, spec, SteadyMethod::Auto)
}

pub fn steady_state_with(lattice: &Lattice, spec: &DrainSpec, method: SteadyMethod) -> Result<CovarianceState> {
    spec.validate(lattice.n_sites())?;
    let eig = diagonalize(lattice)?;
    let coupling = drain_couplings(&eig, spec.drain, spec.gamma, spec.dark_tol)?;
    if spec.loss == 0.0 && !coupling.dark_modes().is_empty() {
        return Err(Error::DarkModes {
            n: coupling.dark_modes().len(),
            indices: coupling.dark_modes().to_vec(),
        });
    }
    let (normal, anomalous) = match method {
        SteadyMethod::Auto => {
            let moments = match eigenframe_solution(&coupling, spec)? {
                Some(moments) => moments,
                None => site_basis_solution(lattice, spec, solve_sylvester)?,
            };
            refine(lattice, spec, moments)?
        }
        SteadyMethod::Schur => refine(lattice, spec, site_basis_solution(lattice, spec, solve_sylvester)?)?,
        SteadyMethod::Kronecker => {
            if lattice.n_sites() > KRONECKER_MAX_SITES {
                return Err(Error::param(
                    "method",
                    format!("kronecker solver limited to {KRONECKER_MAX_SITES} sites"),
                ));
            }
            site_basis_solution(lattice, spec, solve_sylvester_kronecker)?
        }
    };
    let mut state = CovarianceState::new(normal, anomalous, 0.0)?;
    state.residual = lyapunov_residual(lattice, spec, &state);
    if !state.normal.iter().chain(state.anomalous.iter()).all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Singular("steady state is not finite".into()));
    }
    Ok(state)
}

type Sylvester = fn(&CMatrix, &CMatrix, &CMatrix) -> Result<CMatrix>;

fn site_basis_solution(lattice: &Lattice, spec: &DrainSpec, solve: Sylvester) -> Result<(CMatrix, CMatrix)> {
    let d = drift_matrix(lattice, spec);
    let (qn, qm) = noise_terms(lattice.n_sites(), spec);
    let dt = d.transpose();
    let normal = solve(&d.conjugate(), &dt, &(-qn))?;
    let anomalous = solve(&d, &dt, &(-qm))?;
    Ok((normal, anomalous))
}

/// Iterative refinement against the site-basis equations.
///
/// Slow bright modes make the moment equations ill-conditioned (the
/// separation is the smallest relaxation rate), so a solution with a residual
/// near machine precision can still be off by `residual / γ_min`. Each step
/// solves for the correction driven by the current residual, which is accurate
/// because `D` is sparse; steps stop once the residual no longer shrinks.
fn refine(lattice: &Lattice, spec: &DrainSpec, moments: (CMatrix, CMatrix)) -> Result<(CMatrix, CMatrix)> {
    const STEPS: usize = 2;
    let d = drift_matrix(lattice, spec);
    let dt = d.transpose();
    let dc = d.conjugate();
    let (qn, qm) = noise_terms(lattice.n_sites(), spec);
    let (mut normal, mut anomalous) = moments;
    let (mut rn, mut rm) = moment_rates(&d, &qn, &qm, &normal, &anomalous);
    let mut size = max_abs(&rn).max(max_abs(&rm));
    for _ in 0..STEPS {
        if size == 0.0 {
            break;
        }
        let next_n = &normal - solve_sylvester(&dc, &dt, &rn)?;
        let next_m = &anomalous - solve_sylvester(&d, &dt, &rm)?;
        let (next_rn, next_rm) = moment_rates(&d, &qn, &qm, &next_n, &next_m);
        let next_size = max_abs(&next_rn).max(max_abs(&next_rm));
        if !(next_size < size) {
            break;
        }
        (normal, anomalous, rn, rm, size) = (next_n, next_m, next_rn, next_rm, next_size);
    }
    Ok((normal, anomalous))
}

/// Closed-form solution in the eigenbasis of the bright block of the drift.
///
/// The drift there is `K = −iA − γ_loss/2` with `A` rank-one damped, so its
/// eigenvectors are known analytically, `R_jk ∝ w_j/(ε_j − λ_k)`, once the
/// eigenvalues `λ_k` are refined on the secular equation. Returns `None` when
/// that frame is too ill-conditioned to trust.
fn eigenframe_solution(coupling: &DrainCoupling, spec: &DrainSpec) -> Result<Option<(CMatrix, CMatrix)>> {
    let a = dynamical_matrix(coupling);
    let (bright, lambdas) = bright_eigenvalues(&a, coupling)?;
    let nb = bright.len();
    let energies = coupling.eigen().energies();
    let weights = coupling.noise_weights();
    let w = DVector::from_iterator(nb, bright.iter().map(|&i| weights[i]));

    let mut frame = CMatrix::zeros(nb, nb);
    for (k, lambda) in lambdas.iter().enumerate() {
        let mut col = DVector::from_fn(nb, |j, _| w[j] / (real(energies[bright[j]]) - lambda));
        let norm = col.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Ok(None);
        }
        col /= real(norm);
        frame.set_column(k, &col);
    }
    let sv = frame.singular_values();
    let smax = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    let smin = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if !(smin > 0.0) || smax / smin > MAX_FRAME_CONDITION {
        return Ok(None);
    }
    let Some(c) = frame.clone().lu().solve(&w) else {
        return Ok(None);
    };

    let mu: Vec<C64> = lambdas
        .iter()
        .map(|l| -C64::i() * l - real(0.5 * spec.loss))
        .collect();
    let (nn, mm) = (spec.noise.n(), spec.noise.m());
    let mut x = CMatrix::zeros(nb, nb);
    let mut y = CMatrix::zeros(nb, nb);
    for k in 0..nb {
        for l in 0..nb {
            x[(k, l)] = -mm * c[k] * c[l] / (mu[k] + mu[l]);
            y[(k, l)] = -real(nn) * c[k].conj() * c[l] / (mu[k].conj() + mu[l]);
        }
    }
    let anomalous_bright = &frame * x * frame.transpose();
    let normal_bright = frame.conjugate() * y * frame.transpose();

    let n = energies.len();
    let mut mb = CMatrix::zeros(n, n);
    let mut nb_full = CMatrix::zeros(n, n);
    for (r, &i) in bright.iter().enumerate() {
        for (s, &j) in bright.iter().enumerate() {
            mb[(i, j)] = anomalous_bright[(r, s)];
            nb_full[(i, j)] = normal_bright[(r, s)];
        }
    }
    let psi = coupling.eigen().modes();
    let t = psi.transpose();
    Ok(Some((psi.conjugate() * nb_full * &t, psi * mb * &t)))
}

/// Twiddle phases `t_i = e^{i(φ − φ_i − φ_{p(i)})}` of the chiral Bogoliubov modes.
fn twiddles(coupling: &DrainCoupling, pairing: &ChiralPairing, noise: &NoiseParams) -> Vec<C64> {
    (0..pairing.partner.len())
        .map(|i| {
            let p = pairing.partner[i];
            C64::from_polar(1.0, noise.phi - coupling.phase(i) - coupling.phase(p))
        })
        .collect()
}

fn require_bright(coupling: &DrainCoupling) -> Result<()> {
    if coupling.dark_modes().is_empty() {
        Ok(())
    } else {
        Err(Error::DarkModes {
            n: coupling.dark_modes().len(),
            indices: coupling.dark_modes().to_vec(),
        })
    }
}

fn require_pairing(pairing: &ChiralPairing) -> Result<()> {
    if pairing.is_valid() {
        Ok(())
    } else {
        Err(Error::PairingDefect {
            energy_defect: pairing.energy_defect,
            amplitude_defect: pairing.amplitude_defect,
            tol: pairing.tol,
        })
    }
}

/// `σ_{m,n} = Σ_j e^{−i(φ_j + φ_{−j})} ψ_j[n] ψ_{−j}[m]` from the paired eigenmodes.
pub fn extract_sigma(coupling: &DrainCoupling, pairing: &ChiralPairing) -> Result<SymmetryMatrix> {
    require_pairing(pairing)?;
    require_bright(coupling)?;
    let psi = coupling.eigen().modes();
    let n = psi.nrows();
    let mut partnered = CMatrix::zeros(n, n);
    for j in 0..n {
        let p = pairing.partner[j];
        let phase = C64::from_polar(1.0, -(coupling.phase(j) + coupling.phase(p)));
        partnered.set_column(j, &(psi.column(p) * phase));
    }
    let sigma = &partnered * psi.transpose();
    SymmetryMatrix::new(sigma, Provenance::FromEigenmodes, Some(coupling.drain()))
}

/// Closed-form chiral steady state `N = 𝓝 I`, `M = 𝓜 σ`: the joint vacuum of
/// `β_i = cosh r · b_i − sinh r · t_i b†_{−i}`. The residual is that of the
/// lossless moment equations.
pub fn analytic_chiral_state(
    coupling: &DrainCoupling,
    pairing: &ChiralPairing,
    noise: &NoiseParams,
) -> Result<CovarianceState> {
    let sigma = extract_sigma(coupling, pairing)?;
    let n = sigma.len();
    let normal = CMatrix::identity(n, n) * real(noise.n());
    let anomalous = sigma.matrix() * noise.m();
    let mut state = CovarianceState::new(normal, anomalous, 0.0)?;
    let spec = DrainSpec {
        drain: coupling.drain(),
        gamma: coupling.gamma(),
        noise: *noise,
        loss: 0.0,
        dark_tol: coupling.dark_tol(),
    };
    state.residual = residual_for(&coupling.eigen().reconstruct(), &spec, &state);
    Ok(state)
}

/// `M / 𝓜`: the anomalous correlation pattern of a state.
pub fn sigma_from_state(state: &CovarianceState, noise: &NoiseParams) -> Result<CMatrix> {
    let m = noise.m();
    if m.norm() == 0.0 {
        return Err(Error::param("r", "the pattern is undefined without squeezing (r = 0)"));
    }
    Ok(state.anomalous.map(|z| z / m))
}

/// Purity `μ = 2^{−N} / √det C`, clamped to 1 within `1e-12`.
pub fn purity(state: &CovarianceState) -> Result<f64> {
    let c = state.quadrature_covariance();
    let eig = SymmetricEigen::new(c).eigenvalues;
    if let Some(bad) = eig.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::Unphysical(format!(
            "quadrature covariance has eigenvalue {bad:.3e}"
        )));
    }
    // log μ = −Σ_k ln(2 λ_k)/2 over the 2N eigenvalues
    let log_mu = -0.5 * eig.iter().map(|v| (2.0 * v).ln()).sum::<f64>();
    let mu = log_mu.exp();
    Ok(if (mu - 1.0).abs() <= 1e-12 { 1.0 } else { mu })
}

/// Second moments of the chiral Bogoliubov modes `β_i` in a given state.
#[derive(Clone, Debug)]
pub struct BogoliubovResiduals {
    /// `⟨β†_i β_j⟩`.
    pub normal: CMatrix,
    /// `⟨β_i β_j⟩`.
    pub anomalous: CMatrix,
    /// Largest entry over pairs of bright modes.
    pub max_bright: f64,
}

pub fn beta_occupations(
    state: &CovarianceState,
    coupling: &DrainCoupling,
    pairing: &ChiralPairing,
    noise: &NoiseParams,
) -> Result<BogoliubovResiduals> {
    let n = pairing.partner.len();
    if state.n_sites() != n {
        return Err(Error::LengthMismatch {
            what: "state",
            expected: n,
            got: state.n_sites(),
        });
    }
    let (nb, mb) = state.in_basis(coupling.eigen().modes());
    let (c, s) = (noise.r.cosh(), noise.r.sinh());
    let t = twiddles(coupling, pairing, noise);
    let p = &pairing.partner;
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let mut bn = CMatrix::zeros(n, n);
    let mut bm = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let (pi, pj) = (p[i], p[j]);
            bn[(i, j)] = c * c * nb[(i, j)]
                - c * s * t[j] * mb[(i, pj)].conj()
                - c * s * t[i].conj() * mb[(pi, j)]
                + s * s * t[i].conj() * t[j] * (real(delta(pi, pj)) + nb[(pj, pi)]);
            bm[(i, j)] = c * c * mb[(i, j)]
                - c * s * t[j] * (real(delta(i, pj)) + nb[(pj, i)])
                - c * s * t[i] * nb[(pi, j)]
                + s * s * t[i] * t[j] * mb[(pi, pj)].conj();
        }
    }
    let bright = coupling.bright_modes();
    let mut max_bright = 0.0f64;
    for &i in &bright {
        for &j in &bright {
            max_bright = max_bright.max(bn[(i, j)].norm()).max(bm[(i, j)].norm());
        }
    }
    Ok(BogoliubovResiduals {
        normal: bn,
        anomalous: bm,
        max_bright,
    })
}

/// One recorded point of a time evolution.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub state: CovarianceState,
}

/// Integrates the moment equations with fixed-step RK4 from `initial` at
/// `t = 0`, recording the state at each of `sample_times` (non-decreasing).
/// Each snapshot's residual is the distance from stationarity.
pub fn evolve(
    lattice: &Lattice,
    spec: &DrainSpec,
    initial: &CovarianceState,
    dt: f64,
    sample_times: &[f64],
) -> Result<Vec<Snapshot>> {
    spec.validate(lattice.n_sites())?;
    if initial.n_sites() != lattice.n_sites() {
        return Err(Error::LengthMismatch {
            what: "initial state",
            expected: lattice.n_sites(),
            got: initial.n_sites(),
        });
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::param("dt", "must be > 0"));
    }
    if sample_times.iter().any(|t| !(*t >= 0.0)) || sample_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("sample_times", "must be non-negative and non-decreasing"));
    }
    let d = drift_matrix(lattice, spec);
    let norm = d.singular_values().iter().fold(0.0f64, |a, &b| a.max(b));
    let ratio = dt * norm;
    if ratio >= 0.1 {
        return Err(Error::StepTooLarge { ratio });
    }
    let (qn, qm) = noise_terms(lattice.n_sites(), spec);
    let rates = |n: &CMatrix, m: &CMatrix| moment_rates(&d, &qn, &qm, n, m);

    let mut n = initial.normal.clone();
    let mut m = initial.anomalous.clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(sample_times.len());
    for &target in sample_times {
        while t < target {
            let h = dt.min(target - t);
            let (k1n, k1m) = rates(&n, &m);
            let (k2n, k2m) = rates(&(&n + &k1n * real(h / 2.0)), &(&m + &k1m * real(h / 2.0)));
            let (k3n, k3m) = rates(&(&n + &k2n * real(h / 2.0)), &(&m + &k2m * real(h / 2.0)));
            let (k4n, k4m) = rates(&(&n + &k3n * real(h)), &(&m + &k3m * real(h)));
            n += (k1n + k2n * real(2.0) + k3n * real(2.0) + k4n) * real(h / 6.0);
            m += (k1m + k2m * real(2.0) + k3m * real(2.0) + k4m) * real(h / 6.0);
            t = if target - t <= dt { target } else { t + h };
            let size = max_abs(&n).max(max_abs(&m));
            if !(size < 1e12) {
                return Err(Error::Unstable { t });
            }
        }
        let mut state = CovarianceState::new(n.clone(), m.clone(), 0.0)?;
        state.residual = lyapunov_residual(lattice, spec, &state);
        out.push(Snapshot { t, state });
    }
    Ok(out)
}
