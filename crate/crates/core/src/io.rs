//! File formats: the lattice JSON schema, covariance exports and plot-ready CSVs.
//!
//! JSON floats use the shortest representation that parses back to the same
//! `f64`, so lattices round-trip bit for bit. CSV values carry 9 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::lattice::{Lattice, Model, Site};
use crate::steady::{CovarianceState, NoiseParams};
use crate::{CMatrix, Error, Result, C64};

/// On-disk form of a [`Lattice`]. `hoppings` lists `[m, n, Re H_mn, Im H_mn]`
/// for every nonzero entry with `m < n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeFile {
    pub n_sites: usize,
    pub sites: Vec<Site>,
    pub hoppings: Vec<(usize, usize, f64, f64)>,
    pub potentials: Vec<f64>,
    #[serde(default = "custom_model")]
    pub model: Model,
}

fn custom_model() -> Model {
    Model::Custom
}

impl From<&Lattice> for LatticeFile {
    fn from(lattice: &Lattice) -> Self {
        let h = lattice.hamiltonian();
        let n = lattice.n_sites();
        let mut hoppings = Vec::new();
        for m in 0..n {
            for k in m + 1..n {
                let z = h[(m, k)];
                if z.re != 0.0 || z.im != 0.0 {
                    hoppings.push((m, k, z.re, z.im));
                }
            }
        }
        LatticeFile {
            n_sites: n,
            sites: lattice.sites().to_vec(),
            hoppings,
            potentials: lattice.potentials(),
            model: lattice.model().clone(),
        }
    }
}

impl TryFrom<LatticeFile> for Lattice {
    type Error = Error;

    fn try_from(file: LatticeFile) -> Result<Lattice> {
        let n = file.n_sites;
        if file.potentials.len() != n {
            return Err(Error::LengthMismatch {
                what: "potentials",
                expected: n,
                got: file.potentials.len(),
            });
        }
        let mut h = CMatrix::zeros(n, n);
        for (i, v) in file.potentials.iter().enumerate() {
            h[(i, i)] = C64::new(*v, 0.0);
        }
        let mut seen = std::collections::HashSet::new();
        for &(m, k, re, im) in &file.hoppings {
            if m >= n || k >= n {
                return Err(Error::SiteOutOfRange {
                    index: m.max(k),
                    n_sites: n,
                });
            }
            if m >= k {
                return Err(Error::param("hoppings", format!("entry [{m}, {k}] must have m < n")));
            }
            if !seen.insert((m, k)) {
                return Err(Error::param("hoppings", format!("duplicate entry [{m}, {k}]")));
            }
            h[(m, k)] = C64::new(re, im);
            h[(k, m)] = C64::new(re, -im);
        }
        Lattice::new(h, file.sites, file.model)
    }
}

pub fn lattice_to_json(lattice: &Lattice) -> Result<String> {
    Ok(serde_json::to_string_pretty(&LatticeFile::from(lattice))?)
}

pub fn lattice_from_json(text: &str) -> Result<Lattice> {
    let file: LatticeFile = serde_json::from_str(text)?;
    Lattice::try_from(file)
}

pub fn write_lattice(path: &Path, lattice: &Lattice) -> Result<()> {
    std::fs::write(path, lattice_to_json(lattice)? + "\n")?;
    Ok(())
}

pub fn read_lattice(path: &Path) -> Result<Lattice> {
    lattice_from_json(&std::fs::read_to_string(path)?)
}

/// Complex matrix as nested rows of `[re, im]`.
pub fn complex_rows(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

/// JSON export of the second moments.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CovarianceExport {
    pub n_sites: usize,
    pub labels: Vec<String>,
    /// `N_mn = ⟨a†_m a_n⟩`.
    pub normal: Vec<Vec<[f64; 2]>>,
    /// `M_mn = ⟨a_m a_n⟩`.
    pub anomalous: Vec<Vec<[f64; 2]>>,
    pub residual: f64,
}

impl CovarianceExport {
    pub fn new(lattice: &Lattice, state: &CovarianceState) -> Self {
        CovarianceExport {
            n_sites: state.n_sites(),
            labels: (0..lattice.n_sites()).map(|i| lattice.site_label(i)).collect(),
            normal: complex_rows(state.normal()),
            anomalous: complex_rows(state.anomalous()),
            residual: state.residual(),
        }
    }
}

/// Fixed 9-significant-digit formatting used in every CSV.
pub fn csv_float(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x:.8e}")
    }
}

fn csv_label(label: &str) -> String {
    if label.contains(',') {
        format!("\"{label}\"")
    } else {
        label.to_string()
    }
}

/// `|M_mn| / (cosh r sinh r)` with site labels heading rows and columns.
/// All zero when `r = 0`.
pub fn heatmap_csv(lattice: &Lattice, state: &CovarianceState, noise: &NoiseParams) -> String {
    let n = state.n_sites();
    let scale = noise.m().norm();
    let labels: Vec<String> = (0..n).map(|i| csv_label(&lattice.site_label(i))).collect();
    let mut out = String::from("site");
    for l in &labels {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for (r, label) in labels.iter().enumerate() {
        out.push_str(label);
        for c in 0..n {
            let v = if scale > 0.0 {
                state.anomalous()[(r, c)].norm() / scale
            } else {
                0.0
            };
            out.push(',');
            out.push_str(&csv_float(v));
        }
        out.push('\n');
    }
    out
}

/// `|⟨a_ref a_n⟩|` for every site `n`.
pub fn correlation_slice_csv(lattice: &Lattice, state: &CovarianceState, reference: usize) -> Result<String> {
    let n = state.n_sites();
    if reference >= n {
        return Err(Error::SiteOutOfRange {
            index: reference,
            n_sites: n,
        });
    }
    let mut out = String::from("index,site,abs_correlation\n");
    for k in 0..n {
        let _ = writeln!(
            out,
            "{k},{},{}",
            csv_label(&lattice.site_label(k)),
            csv_float(state.anomalous()[(reference, k)].norm())
        );
    }
    Ok(out)
}
