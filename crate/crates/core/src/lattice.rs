//! Tight-binding Hamiltonians on finite site sets.
//!
//! A [`Lattice`] holds the Hermitian single-particle matrix `H` (so that the
//! many-body Hamiltonian is `Σ H_{mn} a†_m a_n`) together with per-site metadata.
//! Diagonal entries are on-site potentials and off-diagonal entries are hoppings.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{hermiticity_residual, max_abs, real};
use crate::{CMatrix, Error, Result, C64};

/// Relative tolerance on `‖H − H†‖_max` accepted by [`Lattice::new`].
pub const HERMITICITY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coord: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sublattice: Option<u8>,
}

impl Site {
    pub fn bare(index: usize) -> Self {
        Site {
            index,
            coord: None,
            sublattice: None,
        }
    }
}

/// Provenance of a lattice: which builder produced it and with what parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Model {
    Chain {
        n_sites: usize,
    },
    Hofstadter {
        half_size: usize,
        hopping: f64,
        flux: f64,
    },
    BipartiteRandom {
        seed: u64,
        amplitude: f64,
    },
    Disordered {
        base: Box<Model>,
        variance: f64,
        seed: u64,
        excluded: Vec<usize>,
    },
    Custom,
}

impl Model {
    /// The underlying clean model, looking through any disorder layers.
    pub fn base(&self) -> &Model {
        match self {
            Model::Disordered { base, .. } => base.base(),
            m => m,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    hamiltonian: CMatrix,
    sites: Vec<Site>,
    model: Model,
}

impl Lattice {
    /// Checks shape, site indexing and hermiticity, then stores the exact
    /// Hermitian part of `hamiltonian`.
    pub fn new(hamiltonian: CMatrix, sites: Vec<Site>, model: Model) -> Result<Self> {
        let n = hamiltonian.nrows();
        if n == 0 {
            return Err(Error::param("hamiltonian", "lattice needs at least one site"));
        }
        if hamiltonian.ncols() != n {
            return Err(Error::param(
                "hamiltonian",
                format!("matrix is {}x{}, not square", n, hamiltonian.ncols()),
            ));
        }
        if sites.len() != n {
            return Err(Error::LengthMismatch {
                what: "sites",
                expected: n,
                got: sites.len(),
            });
        }
        if let Some(bad) = sites.iter().enumerate().find(|(i, s)| s.index != *i) {
            return Err(Error::param(
                "sites",
                format!("site at position {} has index {}", bad.0, bad.1.index),
            ));
        }
        let labelled = sites.iter().filter(|s| s.sublattice.is_some()).count();
        if labelled != 0 && labelled != n {
            return Err(Error::MissingMetadata(format!(
                "sublattice labels present on {labelled} of {n} sites"
            )));
        }
        if sites.iter().any(|s| matches!(s.sublattice, Some(l) if l > 1)) {
            return Err(Error::param("sites", "sublattice labels must be 0 or 1"));
        }
        let residual = hermiticity_residual(&hamiltonian);
        let scale = max_abs(&hamiltonian).max(1.0);
        if !(residual <= HERMITICITY_TOL * scale) {
            return Err(Error::param(
                "hamiltonian",
                format!("not Hermitian: |H - H^dag|_max = {residual:.3e}"),
            ));
        }
        let hamiltonian = (&hamiltonian + hamiltonian.adjoint()).map(|z| z * 0.5);
        Ok(Lattice {
            hamiltonian,
            sites,
            model,
        })
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.hamiltonian
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    /// Max-norm of `H`.
    pub fn norm(&self) -> f64 {
        max_abs(&self.hamiltonian)
    }

    pub fn potentials(&self) -> Vec<f64> {
        (0..self.n_sites()).map(|i| self.hamiltonian[(i, i)].re).collect()
    }

    pub fn sublattices(&self) -> Option<Vec<u8>> {
        self.sites.iter().map(|s| s.sublattice).collect()
    }

    pub fn site_at(&self, coord: &[i64]) -> Option<usize> {
        self.sites
            .iter()
            .position(|s| s.coord.as_deref() == Some(coord))
    }

    /// Label of a site for exports: `"(x,y)"` when coordinates exist, else the index.
    pub fn site_label(&self, index: usize) -> String {
        match &self.sites[index].coord {
            Some(c) => {
                let parts: Vec<String> = c.iter().map(|v| v.to_string()).collect();
                format!("({})", parts.join(","))
            }
            None => index.to_string(),
        }
    }

    /// Half size `M` of a square `(2M+1)×(2M+1)` lattice with 2D coordinates in `[−M, M]`.
    pub fn square_half_size(&self) -> Option<usize> {
        let n = self.n_sites();
        let side = (n as f64).sqrt().round() as usize;
        if side * side != n || side.is_multiple_of(2) {
            return None;
        }
        let m = (side / 2) as i64;
        let mut seen = vec![false; n];
        for s in &self.sites {
            let c = s.coord.as_ref()?;
            if c.len() != 2 || c[0].abs() > m || c[1].abs() > m {
                return None;
            }
            let slot = ((c[0] + m) + (c[1] + m) * side as i64) as usize;
            if std::mem::replace(&mut seen[slot], true) {
                return None;
            }
        }
        Some(side / 2)
    }

    /// New lattice with `delta` added to the on-site potentials.
    pub fn with_added_potentials(&self, delta: &[f64]) -> Result<Lattice> {
        if delta.len() != self.n_sites() {
            return Err(Error::LengthMismatch {
                what: "potentials",
                expected: self.n_sites(),
                got: delta.len(),
            });
        }
        let mut h = self.hamiltonian.clone();
        for (i, v) in delta.iter().enumerate() {
            h[(i, i)] += real(*v);
        }
        Lattice::new(h, self.sites.clone(), self.model.clone())
    }
}

/// Hopping amplitudes of a chain: one value for every bond or one per bond.
#[derive(Clone, Debug, PartialEq)]
pub enum Hopping {
    Uniform(C64),
    PerBond(Vec<C64>),
}

/// Open chain with `H[i+1, i] = t_i` and `H[i, i+1] = t_i*`.
///
/// Sites carry coordinate `[i]` and alternating sublattice labels `0, 1, 0, …`.
pub fn build_chain(n_sites: usize, hopping: &Hopping, potentials: Option<&[f64]>) -> Result<Lattice> {
    if n_sites == 0 {
        return Err(Error::param("n_sites", "must be at least 1"));
    }
    let bonds: Vec<C64> = match hopping {
        Hopping::Uniform(t) => vec![*t; n_sites - 1],
        Hopping::PerBond(ts) => {
            if ts.len() != n_sites - 1 {
                return Err(Error::LengthMismatch {
                    what: "hopping",
                    expected: n_sites - 1,
                    got: ts.len(),
                });
            }
            ts.clone()
        }
    };
    let mut h = CMatrix::zeros(n_sites, n_sites);
    if let Some(v) = potentials {
        if v.len() != n_sites {
            return Err(Error::LengthMismatch {
                what: "potentials",
                expected: n_sites,
                got: v.len(),
            });
        }
        for (i, vi) in v.iter().enumerate() {
            h[(i, i)] = real(*vi);
        }
    }
    for (i, t) in bonds.iter().enumerate() {
        h[(i + 1, i)] = *t;
        h[(i, i + 1)] = t.conj();
    }
    let sites = (0..n_sites)
        .map(|i| Site {
            index: i,
            coord: Some(vec![i as i64]),
            sublattice: Some((i % 2) as u8),
        })
        .collect();
    Lattice::new(h, sites, Model::Chain { n_sites })
}

/// Sites of the `(2M+1)×(2M+1)` square, row-major with `x` fastest.
pub fn square_sites(half_size: usize) -> Vec<Site> {
    let m = half_size as i64;
    let mut sites = Vec::with_capacity((2 * half_size + 1).pow(2));
    for y in -m..=m {
        for x in -m..=m {
            sites.push(Site {
                index: sites.len(),
                coord: Some(vec![x, y]),
                sublattice: Some((x + y).rem_euclid(2) as u8),
            });
        }
    }
    sites
}

/// Index of `(x, y)` in the ordering of [`square_sites`].
pub fn square_index(half_size: usize, x: i64, y: i64) -> usize {
    let m = half_size as i64;
    let side = 2 * m + 1;
    ((x + m) + (y + m) * side) as usize
}

/// Hofstadter model on the `(2M+1)×(2M+1)` open square with flux `flux` per
/// plaquette: x-hoppings `−J`, y-hoppings `−J e^{iΦx}` (Landau gauge).
pub fn build_hofstadter(half_size: usize, hopping: f64, flux: f64) -> Result<Lattice> {
    if half_size < 1 {
        return Err(Error::param("half_size", "must be at least 1"));
    }
    if !flux.is_finite() || !hopping.is_finite() {
        return Err(Error::param("flux", "hopping and flux must be finite"));
    }
    let m = half_size as i64;
    let sites = square_sites(half_size);
    let n = sites.len();
    let reduced = flux.rem_euclid(TAU);
    let mut h = CMatrix::zeros(n, n);
    for y in -m..=m {
        for x in -m..=m {
            let here = square_index(half_size, x, y);
            if x < m {
                let there = square_index(half_size, x + 1, y);
                h[(there, here)] = real(-hopping);
                h[(here, there)] = real(-hopping);
            }
            if y < m {
                let there = square_index(half_size, x, y + 1);
                let t = C64::from_polar(-hopping, (reduced * x as f64).rem_euclid(TAU));
                h[(there, here)] = t;
                h[(here, there)] = t.conj();
            }
        }
    }
    Lattice::new(
        h,
        sites,
        Model::Hofstadter {
            half_size,
            hopping,
            flux,
        },
    )
}

/// Which sublattice pairs receive random hoppings in [`build_bipartite_random`].
#[derive(Clone, Debug, PartialEq)]
pub enum BipartiteBonds {
    /// Every A–B pair.
    Complete,
    /// An explicit bond list; every bond must join opposite sublattices.
    List(Vec<(usize, usize)>),
}

/// Nearest-neighbour bonds of an open chain.
pub fn chain_bonds(n_sites: usize) -> Vec<(usize, usize)> {
    (1..n_sites).map(|i| (i - 1, i)).collect()
}

/// Random real hoppings drawn uniformly from `[−amplitude, amplitude]` on bonds
/// joining the two sublattices; no on-site terms.
pub fn build_bipartite_random(
    partition: &[u8],
    bonds: &BipartiteBonds,
    seed: u64,
    amplitude: f64,
) -> Result<Lattice> {
    let n = partition.len();
    if !partition.contains(&0) || !partition.contains(&1) {
        return Err(Error::param(
            "partition",
            "both sublattices need at least one site",
        ));
    }
    if partition.iter().any(|&l| l > 1) {
        return Err(Error::param("partition", "labels must be 0 or 1"));
    }
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::param("amplitude", "must be finite and non-negative"));
    }
    let pairs: Vec<(usize, usize)> = match bonds {
        BipartiteBonds::Complete => (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .filter(|&(a, b)| partition[a] != partition[b])
            .collect(),
        BipartiteBonds::List(list) => {
            for &(a, b) in list {
                let out = a.max(b);
                if out >= n {
                    return Err(Error::SiteOutOfRange {
                        index: out,
                        n_sites: n,
                    });
                }
                if partition[a] == partition[b] {
                    return Err(Error::param(
                        "bonds",
                        format!("bond ({a}, {b}) joins sites of the same sublattice"),
                    ));
                }
            }
            list.clone()
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = CMatrix::zeros(n, n);
    for (a, b) in pairs {
        let t = if amplitude > 0.0 {
            rng.gen_range(-amplitude..=amplitude)
        } else {
            0.0
        };
        h[(a, b)] += real(t);
        h[(b, a)] += real(t);
    }
    let sites = partition
        .iter()
        .enumerate()
        .map(|(i, &l)| Site {
            index: i,
            coord: None,
            sublattice: Some(l),
        })
        .collect();
    Lattice::new(h, sites, Model::BipartiteRandom { seed, amplitude })
}

/// Adds i.i.d. uniform on-site potentials of zero mean and the given variance,
/// drawn from `[−√(3·variance), √(3·variance)]`. Excluded sites keep their potential.
///
/// One value is drawn per site in index order (excluded sites included) so the
/// stream is independent of the exclusion set.
pub fn add_disorder(lattice: &Lattice, variance: f64, seed: u64, exclude: &[usize]) -> Result<Lattice> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(Error::param("variance", format!("must be >= 0, got {variance}")));
    }
    let n = lattice.n_sites();
    if let Some(&bad) = exclude.iter().find(|&&i| i >= n) {
        return Err(Error::SiteOutOfRange {
            index: bad,
            n_sites: n,
        });
    }
    if variance == 0.0 {
        return Ok(lattice.clone());
    }
    let mut h = lattice.hamiltonian.clone();
    for (i, v) in disorder_potentials(n, variance, seed, exclude).into_iter().enumerate() {
        h[(i, i)] += real(v);
    }
    let mut excluded = exclude.to_vec();
    excluded.sort_unstable();
    excluded.dedup();
    Lattice::new(
        h,
        lattice.sites.clone(),
        Model::Disordered {
            base: Box::new(lattice.model.clone()),
            variance,
            seed,
            excluded,
        },
    )
}

/// The potentials [`add_disorder`] adds: uniform on `[−√(3W), √(3W)]`, one draw
/// per site in index order (excluded sites still consume their draw).
pub fn disorder_potentials(n_sites: usize, variance: f64, seed: u64, exclude: &[usize]) -> Vec<f64> {
    if variance == 0.0 {
        return vec![0.0; n_sites];
    }
    let half_width = (3.0 * variance).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_sites)
        .map(|i| {
            let v = rng.gen_range(-half_width..=half_width);
            if exclude.contains(&i) {
                0.0
            } else {
                v
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `‖H − H†‖_max`.
    pub hermiticity_residual: f64,
    /// Whether the hopping graph (nonzero off-diagonal entries) is connected.
    pub connected: bool,
    pub n_components: usize,
    /// Spectral width `ε_max − ε_min` of the Hermitian part.
    pub bandwidth: f64,
}

pub fn validate(lattice: &Lattice) -> Diagnostics {
    validate_hamiltonian(&lattice.hamiltonian)
}

/// Diagnostics for a raw matrix that need not be Hermitian.
pub fn validate_hamiltonian(h: &CMatrix) -> Diagnostics {
    let n = h.nrows();
    let hermiticity_residual = hermiticity_residual(h);

    let mut component = vec![usize::MAX; n];
    let mut n_components = 0;
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        component[start] = n_components;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if j != i
                    && component[j] == usize::MAX
                    && (h[(i, j)] != C64::new(0.0, 0.0) || h[(j, i)] != C64::new(0.0, 0.0))
                {
                    component[j] = n_components;
                    queue.push_back(j);
                }
            }
        }
        n_components += 1;
    }

    let herm = (h + h.adjoint()).map(|z| z * 0.5);
    let energies = nalgebra::SymmetricEigen::new(herm).eigenvalues;
    let (lo, hi) = energies
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| (lo.min(e), hi.max(e)));

    Diagnostics {
        hermiticity_residual,
        connected: n_components <= 1,
        n_components,
        bandwidth: if n == 0 { 0.0 } else { hi - lo },
    }
}
