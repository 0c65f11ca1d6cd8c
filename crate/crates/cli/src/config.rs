//! Run configuration: file schema, flag overrides and resolution to library inputs.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use chiral_drain::ensemble::{SweepAxis, DEFAULT_REALIZATIONS};
use chiral_drain::io::read_lattice;
use chiral_drain::lattice::{add_disorder, build_bipartite_random, build_chain, build_hofstadter, BipartiteBonds, Hopping, Lattice};
use chiral_drain::steady::{DrainSpec, NoiseParams};
use chiral_drain::symmetry::Relation;
use chiral_drain::C64;

use crate::error::CliError;

/// Parses a flux given as a multiple of π (`0.5pi`, `pi/2`, `2pi/5`, `-π`) or in radians.
pub fn parse_flux(text: &str) -> Result<f64, String> {
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect::<String>().replace('π', "pi");
    let bad = || format!("malformed flux `{text}`: expected radians or a multiple of pi such as 0.5pi or pi/2");
    let value = match t.find("pi") {
        None => t.parse::<f64>().map_err(|_| bad())?,
        Some(at) => {
            let coefficient = match t[..at].trim_end_matches('*') {
                "" | "+" => 1.0,
                "-" => -1.0,
                c => c.parse::<f64>().map_err(|_| bad())?,
            };
            let rest = &t[at + 2..];
            let divisor = match rest.strip_prefix('/') {
                Some(d) => d.parse::<f64>().map_err(|_| bad())?,
                None if rest.is_empty() => 1.0,
                None => return Err(bad()),
            };
            if divisor == 0.0 {
                return Err(bad());
            }
            coefficient * PI / divisor
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(bad())
    }
}

/// Parses a site given as comma-separated coordinates (`2,2`) or an index (`5`).
/// Site coordinates, or a single index on lattices without coordinates. The
/// alias keeps clap from treating the flag as a multi-value list.
pub type Site = Vec<i64>;

pub fn parse_site(text: &str) -> Result<Site, String> {
    text.split(',')
        .map(|p| p.trim().parse::<i64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| format!("malformed site `{text}`: expected integers separated by commas"))
}

/// Flux in a config file: radians, or a string accepted by [`parse_flux`].
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum FluxValue {
    Radians(f64),
    Text(String),
}

fn deserialize_flux<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    match FluxValue::deserialize(d)? {
        FluxValue::Radians(v) => Ok(v),
        FluxValue::Text(s) => parse_flux(&s).map_err(serde::de::Error::custom),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Hofstadter {
        half_size: usize,
        hopping: f64,
        /// Radians.
        #[serde(deserialize_with = "deserialize_flux")]
        flux: f64,
    },
    /// Uniform real hopping and on-site potential.
    Chain { sites: usize, hopping: f64, potential: f64 },
    /// Alternating sublattice labels, every A–B pair bonded, hoppings seeded by the run seed.
    BipartiteRandom { sites: usize, amplitude: f64 },
    File { path: PathBuf },
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Hofstadter {
            half_size: 4,
            hopping: 1.0,
            flux: PI / 2.0,
        }
    }
}

impl ModelConfig {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Hofstadter => ModelConfig::default(),
            ModelKind::Chain => ModelConfig::Chain {
                sites: 3,
                hopping: 1.0,
                potential: 0.0,
            },
            ModelKind::BipartiteRandom => ModelConfig::BipartiteRandom {
                sites: 8,
                amplitude: 1.0,
            },
        }
    }

    fn kind(&self) -> Option<ModelKind> {
        match self {
            ModelConfig::Hofstadter { .. } => Some(ModelKind::Hofstadter),
            ModelConfig::Chain { .. } => Some(ModelKind::Chain),
            ModelConfig::BipartiteRandom { .. } => Some(ModelKind::BipartiteRandom),
            ModelConfig::File { .. } => None,
        }
    }

    /// Drain used when none is given: `(2,2)` on square lattices, site 0 otherwise.
    fn default_drain(&self) -> Vec<i64> {
        match self {
            ModelConfig::Hofstadter { half_size, .. } if *half_size >= 2 => vec![2, 2],
            ModelConfig::Hofstadter { .. } => vec![0, 0],
            _ => vec![0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelKind {
    Hofstadter,
    Chain,
    BipartiteRandom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DrainConfig {
    /// Coordinates of the drain site, or its index on lattices without coordinates.
    pub site: Option<Vec<i64>>,
    pub gamma: f64,
    pub r: f64,
    pub phi: f64,
    pub loss: f64,
}

impl Default for DrainConfig {
    fn default() -> Self {
        DrainConfig {
            site: None,
            gamma: 3.0,
            r: 1.0,
            phi: 0.0,
            loss: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaChoice {
    /// From the paired eigenmodes at the drain.
    Eigenmodes,
    Bipartite,
    Inversion,
    SignedInversion,
    /// The Hofstadter variant fixing the drain site.
    Hofstadter,
    Z0,
    #[value(name = "0z")]
    #[serde(rename = "0z")]
    ZeroZ,
    Zz,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RelationChoice {
    ParticleHole,
    Chiral,
}

impl From<RelationChoice> for Relation {
    fn from(r: RelationChoice) -> Self {
        match r {
            RelationChoice::ParticleHole => Relation::ParticleHole,
            RelationChoice::Chiral => Relation::Chiral,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AxisChoice {
    Disorder,
    Loss,
}

impl From<AxisChoice> for SweepAxis {
    fn from(a: AxisChoice) -> Self {
        match a {
            AxisChoice::Disorder => SweepAxis::Disorder,
            AxisChoice::Loss => SweepAxis::Loss,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Reference site of the correlation slice; the drain when absent.
    pub reference: Option<Vec<i64>>,
    pub sigma: SigmaChoice,
    /// Relation certified by `check`; chiral for the bipartite σ, particle-hole otherwise.
    pub relation: Option<RelationChoice>,
    pub axis: AxisChoice,
    pub values: Vec<f64>,
    pub realizations: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            reference: None,
            sigma: SigmaChoice::Eigenmodes,
            relation: None,
            axis: AxisChoice::Loss,
            values: vec![0.0, 1e-3, 1e-2, 1e-1],
            realizations: DEFAULT_REALIZATIONS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Everything a run depends on. Written next to every output as `config.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// Variance of on-site disorder added to the model (drain excluded).
    pub disorder: f64,
    pub drain: DrainConfig,
    pub analysis: AnalysisConfig,
    pub seed: u64,
    pub format: Format,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            disorder: 0.0,
            drain: DrainConfig::default(),
            analysis: AnalysisConfig::default(),
            seed: 0,
            format: Format::Json,
            out: PathBuf::from("."),
        }
    }
}

/// Model-selection flags shared by every command.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Lattice JSON file to use instead of a builder.
    #[arg(long, conflicts_with = "model")]
    pub lattice: Option<PathBuf>,
    /// Half size M of the (2M+1)×(2M+1) Hofstadter square.
    #[arg(long)]
    pub half_size: Option<usize>,
    /// Flux per plaquette, e.g. 0.5pi, pi/2 or radians.
    #[arg(long, value_parser = parse_flux, allow_hyphen_values = true)]
    pub flux: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub hopping: Option<f64>,
    /// Number of sites (chain, bipartite-random).
    #[arg(long)]
    pub sites: Option<usize>,
    /// Uniform on-site potential (chain).
    #[arg(long, allow_hyphen_values = true)]
    pub potential: Option<f64>,
    /// Hopping amplitude bound (bipartite-random).
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Variance of on-site disorder; the drain site is left clean.
    #[arg(long)]
    pub disorder: Option<f64>,
}

/// Drain and reservoir flags.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct DrainArgs {
    /// Drain site as coordinates (2,2) or an index.
    #[arg(long, value_parser = parse_site, allow_hyphen_values = true)]
    pub drain: Option<Site>,
    /// Drain coupling Γ in units of the hopping.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Squeezing parameter r.
    #[arg(long)]
    pub r: Option<f64>,
    /// Squeezing phase φ.
    #[arg(long, allow_hyphen_values = true)]
    pub phi: Option<f64>,
    /// Uniform loss rate on every site.
    #[arg(long)]
    pub loss: Option<f64>,
}

/// Global flags.
#[derive(Clone, Debug, Default)]
pub struct GlobalArgs {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub format: Option<Format>,
}

pub fn load(globals: &GlobalArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &globals.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = globals.seed {
        cfg.seed = seed;
    }
    if let Some(format) = globals.format {
        cfg.format = format;
    }
    if let Some(out) = &globals.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn mismatch(flag: &str, model: &ModelConfig) -> CliError {
    let name = match model {
        ModelConfig::Hofstadter { .. } => "hofstadter",
        ModelConfig::Chain { .. } => "chain",
        ModelConfig::BipartiteRandom { .. } => "bipartite-random",
        ModelConfig::File { .. } => "a lattice file",
    };
    CliError::Usage(format!("--{flag} does not apply to {name}"))
}

impl RunConfig {
    pub fn apply_model(&mut self, args: &ModelArgs) -> Result<(), CliError> {
        if let Some(path) = &args.lattice {
            self.model = ModelConfig::File { path: path.clone() };
        }
        if let Some(kind) = args.model {
            if self.model.kind() != Some(kind) {
                self.model = ModelConfig::default_for(kind);
            }
        }
        if let Some(v) = args.disorder {
            self.disorder = v;
        }
        match &mut self.model {
            ModelConfig::Hofstadter { half_size, hopping, flux } => {
                if let Some(v) = args.half_size {
                    *half_size = v;
                }
                if let Some(v) = args.hopping {
                    *hopping = v;
                }
                if let Some(v) = args.flux {
                    *flux = v;
                }
                for (flag, set) in [("sites", args.sites.is_some()), ("potential", args.potential.is_some()), ("amplitude", args.amplitude.is_some())] {
                    if set {
                        return Err(mismatch(flag, &self.model));
                    }
                }
            }
            ModelConfig::Chain { sites, hopping, potential } => {
                if let Some(v) = args.sites {
                    *sites = v;
                }
                if let Some(v) = args.hopping {
                    *hopping = v;
                }
                if let Some(v) = args.potential {
                    *potential = v;
                }
                for (flag, set) in [("half-size", args.half_size.is_some()), ("flux", args.flux.is_some()), ("amplitude", args.amplitude.is_some())] {
                    if set {
                        return Err(mismatch(flag, &self.model));
                    }
                }
            }
            ModelConfig::BipartiteRandom { sites, amplitude } => {
                if let Some(v) = args.sites {
                    *sites = v;
                }
                if let Some(v) = args.amplitude {
                    *amplitude = v;
                }
                for (flag, set) in [
                    ("half-size", args.half_size.is_some()),
                    ("flux", args.flux.is_some()),
                    ("hopping", args.hopping.is_some()),
                    ("potential", args.potential.is_some()),
                ] {
                    if set {
                        return Err(mismatch(flag, &self.model));
                    }
                }
            }
            ModelConfig::File { .. } => {
                for (flag, set) in [
                    ("half-size", args.half_size.is_some()),
                    ("flux", args.flux.is_some()),
                    ("hopping", args.hopping.is_some()),
                    ("sites", args.sites.is_some()),
                    ("potential", args.potential.is_some()),
                    ("amplitude", args.amplitude.is_some()),
                ] {
                    if set {
                        return Err(mismatch(flag, &self.model));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn apply_drain(&mut self, args: &DrainArgs) {
        let d = &mut self.drain;
        if let Some(v) = &args.drain {
            d.site = Some(v.clone());
        }
        if let Some(v) = args.gamma {
            d.gamma = v;
        }
        if let Some(v) = args.r {
            d.r = v;
        }
        if let Some(v) = args.phi {
            d.phi = v;
        }
        if let Some(v) = args.loss {
            d.loss = v;
        }
    }

    /// Fills in the drain so the emitted config is explicit.
    pub fn resolve_drain(&mut self) {
        if self.drain.site.is_none() {
            self.drain.site = Some(self.model.default_drain());
        }
    }

    /// The clean lattice described by the model section.
    pub fn clean_lattice(&self) -> Result<Lattice, CliError> {
        Ok(match &self.model {
            ModelConfig::Hofstadter { half_size, hopping, flux } => build_hofstadter(*half_size, *hopping, *flux)?,
            ModelConfig::Chain { sites, hopping, potential } => {
                let pots = vec![*potential; *sites];
                build_chain(*sites, &Hopping::Uniform(C64::new(*hopping, 0.0)), Some(&pots))?
            }
            ModelConfig::BipartiteRandom { sites, amplitude } => {
                let labels: Vec<u8> = (0..*sites).map(|i| (i % 2) as u8).collect();
                build_bipartite_random(&labels, &BipartiteBonds::Complete, self.seed, *amplitude)?
            }
            ModelConfig::File { path } => read_lattice(path)?,
        })
    }

    /// The lattice with disorder applied, and the drain index.
    pub fn lattice(&self) -> Result<(Lattice, usize), CliError> {
        let clean = self.clean_lattice()?;
        let drain = self.drain_index(&clean)?;
        let lattice = if self.disorder > 0.0 {
            add_disorder(&clean, self.disorder, self.seed, &[drain])?
        } else {
            clean
        };
        Ok((lattice, drain))
    }

    pub fn drain_index(&self, lattice: &Lattice) -> Result<usize, CliError> {
        let site = self.drain.site.clone().unwrap_or_else(|| self.model.default_drain());
        site_index(lattice, &site)
    }

    pub fn drain_spec(&self, drain: usize) -> Result<DrainSpec, CliError> {
        let noise = NoiseParams::new(self.drain.r, self.drain.phi)?;
        Ok(DrainSpec::new(drain, self.drain.gamma, noise).with_loss(self.drain.loss))
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        Path::new(&self.out).join(name)
    }
}

/// Index of a site given by coordinates, or by index when the lattice has none.
pub fn site_index(lattice: &Lattice, site: &[i64]) -> Result<usize, CliError> {
    if let Some(i) = lattice.site_at(site) {
        return Ok(i);
    }
    let has_coords = lattice.sites().iter().any(|s| s.coord.is_some());
    match site {
        [i] if !has_coords && *i >= 0 && (*i as usize) < lattice.n_sites() => Ok(*i as usize),
        _ => Err(CliError::Usage(format!(
            "site {site:?} is not on the lattice ({} sites)",
            lattice.n_sites()
        ))),
    }
}
