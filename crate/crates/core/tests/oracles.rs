use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64 as C64;

use chiral_drain::entanglement::{nullifier_matrix, nullifier_variances, relative_to_vacuum};
use chiral_drain::lattice::{build_bipartite_random, build_chain, build_hofstadter, square_index, BipartiteBonds, Hopping};
use chiral_drain::spectral::{chiral_pairing, diagonalize, drain_couplings, DEFAULT_DARK_TOL};
use chiral_drain::steady::{
    drift_matrix, extract_sigma, steady_state, steady_state_with, DrainSpec, NoiseParams, SteadyMethod,
};
use chiral_drain::symmetry::{sigma_hofstadter, HofstadterVariant};
use chiral_drain::CMatrix;

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

/// Two sites at `±V/2` with hopping `−J`, drained at the first site. Returns
/// `‖D M + M Dᵀ + Γ𝓜P‖_max` for the closed-form `M/𝓜` with the given
/// drain-site numerator.
fn two_site_equation_residual(v: f64, j: f64, gamma: f64, drain_numerator: C64) -> f64 {
    let lattice = build_chain(2, &Hopping::Uniform(real(-j)), Some(&[v / 2.0, -v / 2.0])).unwrap();
    let noise = NoiseParams::new(0.6, 0.0).unwrap();
    let spec = DrainSpec::new(0, gamma, noise);
    let d = drift_matrix(&lattice, &spec);
    let den = C64::new(4.0 * j * j + v * v, -gamma * v);
    let m = CMatrix::from_row_slice(
        2,
        2,
        &[drain_numerator / den, real(2.0 * j * v) / den, real(2.0 * j * v) / den, real(-4.0 * j * j) / den],
    ) * noise.m();
    let mut q = CMatrix::zeros(2, 2);
    q[(0, 0)] = gamma * noise.m();
    max_abs(&(&d * &m + &m * d.transpose() + q))
}

#[test]
fn two_site_closed_form_solves_the_moment_equation() {
    for (v, j, gamma) in [(1.0, 1.0, 1.0), (0.5, 0.7, 3.0), (2.0, 1.3, 0.4)] {
        let corrected = two_site_equation_residual(v, j, gamma, C64::new(4.0 * j * j, -gamma * v));
        assert!(corrected < 1e-14, "corrected residual {corrected:e}");
        // the numerator as printed, 4J² − ΓV, leaves an O(1) residual
        let printed = two_site_equation_residual(v, j, gamma, real(4.0 * j * j - gamma * v));
        assert!(printed > 1e-2, "printed residual {printed:e}");
    }
}

#[test]
fn solvers_agree_on_small_lattices() {
    let noise = NoiseParams::new(0.7, 0.4).unwrap();
    let lattices = [
        build_chain(5, &Hopping::PerBond(vec![real(1.0), C64::new(0.3, 0.6), real(-0.8), real(1.1)]), Some(&[0.1, 0.0, -0.2, 0.4, 0.0])).unwrap(),
        build_bipartite_random(&[0, 1, 0, 1, 1, 0], &BipartiteBonds::Complete, 5, 1.0).unwrap(),
        build_hofstadter(1, 1.0, 0.9).unwrap(),
    ];
    for lattice in &lattices {
        let spec = DrainSpec::new(1, 2.0, noise).with_loss(0.02);
        let auto = steady_state_with(lattice, &spec, SteadyMethod::Auto).unwrap();
        for method in [SteadyMethod::Schur, SteadyMethod::Kronecker] {
            let other = steady_state_with(lattice, &spec, method).unwrap();
            assert!(max_abs(&(auto.normal() - other.normal())) < 1e-11, "{method:?}");
            assert!(max_abs(&(auto.anomalous() - other.anomalous())) < 1e-11, "{method:?}");
        }
    }
}

#[test]
fn slow_modes_still_give_the_exact_pattern() {
    // drain (2,2) leaves bright modes relaxing at ~3e-6 J
    let lattice = build_hofstadter(4, 1.0, FRAC_PI_2).unwrap();
    let drain = square_index(4, 2, 2);
    let noise = NoiseParams::new(1.0, 0.0).unwrap();
    let state = steady_state(&lattice, &DrainSpec::new(drain, 3.0, noise)).unwrap();
    let sigma = sigma_hofstadter(HofstadterVariant::Zz, 4, FRAC_PI_2)
        .unwrap()
        .aligned_to(drain)
        .unwrap();
    let pattern = state.anomalous() / noise.m();
    assert!(max_abs(&(pattern - sigma.matrix())) < 1e-12);
}

#[test]
fn printed_nullifiers_are_not_a_complete_set() {
    let lattice = build_hofstadter(4, 1.0, FRAC_PI_2).unwrap();
    let drain = square_index(4, 2, 2);
    let r = 1.0;
    let noise = NoiseParams::new(r, 0.0).unwrap();
    let coupling = drain_couplings(&diagonalize(&lattice).unwrap(), drain, 3.0, DEFAULT_DARK_TOL).unwrap();
    let pairing = chiral_pairing(&coupling, 1e-9 * coupling.eigen().scale());
    let sigma = extract_sigma(&coupling, &pairing).unwrap();
    let state = steady_state(&lattice, &DrainSpec::new(drain, 3.0, noise)).unwrap();
    let relative = relative_to_vacuum(&nullifier_variances(&state, &nullifier_matrix(&sigma, &noise)).unwrap());
    let squeezed = (-2.0 * r).exp();
    let at_limit = relative.iter().filter(|v| (*v - squeezed).abs() < 1e-9).count();
    let above_vacuum = relative.iter().filter(|v| **v > 1.0).count();
    // some candidates reach e^{−2r}, most are noisier than vacuum
    assert!(at_limit > 0 && at_limit < lattice.n_sites());
    assert!(above_vacuum > lattice.n_sites() / 2);
}
