use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use proptest::prelude::*;

use chiral_drain::entanglement::log_negativity;
use chiral_drain::io::{lattice_from_json, lattice_to_json};
use chiral_drain::lattice::{
    add_disorder, build_bipartite_random, build_chain, build_hofstadter, validate, BipartiteBonds, Hopping,
};
use chiral_drain::spectral::diagonalize;
use chiral_drain::steady::{lyapunov_residual, purity, steady_state, DrainSpec, NoiseParams};
use chiral_drain::CMatrix;

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

fn complex_bonds(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((0.2f64..1.5, -PI..PI), n - 1)
        .prop_map(|v| v.into_iter().map(|(r, t)| C64::from_polar(r, t)).collect())
}

fn chain_case() -> impl Strategy<Value = (usize, Vec<C64>, Vec<f64>)> {
    (2usize..9).prop_flat_map(|n| (Just(n), complex_bonds(n), prop::collection::vec(-1.0f64..1.0, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn built_hamiltonians_are_hermitian(half in 1usize..4, flux in -4.0f64..4.0, var in 0.0f64..0.5, seed: u64) {
        let clean = build_hofstadter(half, 1.0, flux).unwrap();
        let lattice = add_disorder(&clean, var, seed, &[0]).unwrap();
        let diag = validate(&lattice);
        prop_assert!(diag.hermiticity_residual <= 1e-12);
        let h = lattice.hamiltonian();
        prop_assert!(max_abs(&(h - h.adjoint())) == 0.0);
    }

    #[test]
    fn flux_is_two_pi_periodic(half in 1usize..4, flux in -3.0f64..3.0) {
        let a = build_hofstadter(half, 1.0, flux).unwrap();
        let b = build_hofstadter(half, 1.0, flux + 2.0 * PI).unwrap();
        prop_assert!(max_abs(&(a.hamiltonian() - b.hamiltonian())) < 1e-12);
    }

    #[test]
    fn bipartite_spectra_are_symmetric(n in 3usize..10, seed: u64) {
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let lattice = build_bipartite_random(&labels, &BipartiteBonds::Complete, seed, 1.0).unwrap();
        let e = diagonalize(&lattice).unwrap();
        let energies = e.energies();
        for (lo, hi) in energies.iter().zip(energies.iter().rev()) {
            prop_assert!((lo + hi).abs() < 1e-10);
        }
    }

    #[test]
    fn squeezing_phase_rotates_the_anomalous_moments((n, bonds, _) in chain_case(), phi in -PI..PI, r in 0.1f64..1.2) {
        let lattice = build_chain(n, &Hopping::PerBond(bonds), None).unwrap();
        let base = DrainSpec::new(0, 1.0, NoiseParams::new(r, 0.0).unwrap()).with_loss(0.05);
        let turned = DrainSpec { noise: NoiseParams::new(r, phi).unwrap(), ..base };
        let s0 = steady_state(&lattice, &base).unwrap();
        let s1 = steady_state(&lattice, &turned).unwrap();
        let rotated = s0.anomalous() * C64::from_polar(1.0, phi);
        prop_assert!(max_abs(&(s1.anomalous() - rotated)) < 1e-10);
        prop_assert!(max_abs(&(s1.normal() - s0.normal())) < 1e-10);
    }

    #[test]
    fn lossy_steady_states_are_physical((n, bonds, pots) in chain_case(), drain in 0usize..8, loss in 0.01f64..0.5, r in 0.0f64..1.0) {
        let lattice = build_chain(n, &Hopping::PerBond(bonds), Some(&pots)).unwrap();
        let spec = DrainSpec::new(drain % n, 2.0, NoiseParams::new(r, 0.3).unwrap()).with_loss(loss);
        let state = steady_state(&lattice, &spec).unwrap();
        prop_assert!(lyapunov_residual(&lattice, &spec, &state) < 1e-10);
        prop_assert!(state.is_physical());
        let mu = purity(&state).unwrap();
        prop_assert!(mu > 0.0 && mu <= 1.0 + 1e-12);
    }

    #[test]
    fn log_negativity_is_symmetric_and_nonnegative((n, bonds, pots) in chain_case(), loss in 0.01f64..0.3) {
        let lattice = build_chain(n, &Hopping::PerBond(bonds), Some(&pots)).unwrap();
        let spec = DrainSpec::new(n / 2, 1.5, NoiseParams::new(0.8, 0.0).unwrap()).with_loss(loss);
        let state = steady_state(&lattice, &spec).unwrap();
        for a in 0..n {
            for b in a + 1..n {
                let ab = log_negativity(&state, a, b).unwrap();
                prop_assert_eq!(ab, log_negativity(&state, b, a).unwrap());
                prop_assert!(ab >= 0.0);
            }
        }
    }

    #[test]
    fn lattice_files_round_trip((n, bonds, pots) in chain_case()) {
        let lattice = build_chain(n, &Hopping::PerBond(bonds), Some(&pots)).unwrap();
        let text = lattice_to_json(&lattice).unwrap();
        prop_assert_eq!(lattice_from_json(&text).unwrap(), lattice);
    }
}
