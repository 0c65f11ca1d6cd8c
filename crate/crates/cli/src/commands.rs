//! The subcommands. Each writes its outputs and `config.json` into the output
//! directory and prints a report in the selected format.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use chiral_drain::ensemble::{run_sweep, SweepConfig};
use chiral_drain::entanglement::mirrored_pair_average;
use chiral_drain::io::{correlation_slice_csv, csv_float, heatmap_csv, write_lattice, CovarianceExport};
use chiral_drain::lattice::{validate, Diagnostics, Lattice, Model};
use chiral_drain::spectral::{
    chiral_pairing, diagonalize, drain_couplings, dynamical_matrix, dynamical_spectrum, DrainCoupling,
    DynamicalSpectrum, SpectrumExport,
};
use chiral_drain::steady::{extract_sigma, purity, steady_state};
use chiral_drain::symmetry::{
    check_symmetry_with, sigma_bipartite, sigma_hofstadter, sigma_inversion, HofstadterVariant, Relation,
    SymmetryMatrix, SymmetryReport,
};

use crate::config::{site_index, Format, RunConfig, SigmaChoice};
use crate::error::CliError;

/// Largest accepted secular-equation residual.
const SECULAR_TOL: f64 = 1e-8;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn prepare(cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.out)?;
    write_json(&cfg.out_path("config.json"), cfg)
}

fn csv_cell(v: &Value) -> String {
    let text = match v {
        Value::Null => String::new(),
        Value::Number(n) => n.as_f64().filter(|_| !n.is_u64() && !n.is_i64()).map_or(n.to_string(), csv_float),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    if text.contains(',') || text.contains('"') {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text
    }
}

/// A flat report as pretty JSON or `key,value` CSV.
fn render<T: Serialize>(format: Format, report: &T) -> Result<String, CliError> {
    Ok(match format {
        Format::Json => serde_json::to_string_pretty(report)? + "\n",
        Format::Csv => {
            let mut out = String::from("key,value\n");
            if let Value::Object(map) = serde_json::to_value(report)? {
                for (k, v) in map {
                    let _ = writeln!(out, "{k},{}", csv_cell(&v));
                }
            }
            out
        }
    })
}

fn summary_name(format: Format, stem: &str) -> String {
    match format {
        Format::Json => format!("{stem}.json"),
        Format::Csv => format!("{stem}.csv"),
    }
}

fn emit<T: Serialize>(cfg: &RunConfig, stem: &str, report: &T) -> Result<(), CliError> {
    let text = render(cfg.format, report)?;
    std::fs::write(cfg.out_path(&summary_name(cfg.format, stem)), &text)?;
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct BuildReport {
    lattice: String,
    n_sites: usize,
    #[serde(flatten)]
    diagnostics: Diagnostics,
}

pub fn build(cfg: &RunConfig) -> Result<(), CliError> {
    let (lattice, _) = cfg.lattice()?;
    prepare(cfg)?;
    let path = cfg.out_path("lattice.json");
    write_lattice(&path, &lattice)?;
    let report = BuildReport {
        lattice: path.display().to_string(),
        n_sites: lattice.n_sites(),
        diagnostics: validate(&lattice),
    };
    emit(cfg, "build", &report)
}

fn analyse(lattice: &Lattice, drain: usize, cfg: &RunConfig) -> Result<(DrainCoupling, DynamicalSpectrum), CliError> {
    let spec = cfg.drain_spec(drain)?;
    spec.validate(lattice.n_sites())?;
    let coupling = drain_couplings(&diagonalize(lattice)?, drain, spec.gamma, spec.dark_tol)?;
    let spectrum = dynamical_spectrum(&dynamical_matrix(&coupling), &coupling)?;
    Ok((coupling, spectrum))
}

/// Slowest relaxation rate of the moments including uniform loss.
fn min_relaxation_rate(coupling: &DrainCoupling, spectrum: &DynamicalSpectrum, loss: f64) -> Option<f64> {
    let bright = spectrum.min_bright_rate().map(|g| g + loss);
    if coupling.dark_modes().is_empty() {
        bright
    } else {
        Some(loss)
    }
}

#[derive(Serialize)]
struct SteadyReport {
    n_sites: usize,
    drain: String,
    purity: f64,
    dark_modes: usize,
    min_relaxation_rate: Option<f64>,
    lyapunov_residual: f64,
    mirrored_average: Option<f64>,
    reference: String,
}

pub fn steady(cfg: &RunConfig) -> Result<(), CliError> {
    let (lattice, drain) = cfg.lattice()?;
    let spec = cfg.drain_spec(drain)?;
    let reference = match &cfg.analysis.reference {
        Some(site) => site_index(&lattice, site)?,
        None => drain,
    };
    let (coupling, spectrum) = analyse(&lattice, drain, cfg)?;
    let state = steady_state(&lattice, &spec)?;
    let mirrored_average = match lattice.square_half_size() {
        Some(_) => Some(mirrored_pair_average(&state, &lattice)?.value),
        None => None,
    };
    prepare(cfg)?;
    write_json(&cfg.out_path("covariance.json"), &CovarianceExport::new(&lattice, &state))?;
    std::fs::write(cfg.out_path("heatmap.csv"), heatmap_csv(&lattice, &state, &spec.noise))?;
    std::fs::write(cfg.out_path("slice.csv"), correlation_slice_csv(&lattice, &state, reference)?)?;
    let report = SteadyReport {
        n_sites: lattice.n_sites(),
        drain: lattice.site_label(drain),
        purity: purity(&state)?,
        dark_modes: coupling.dark_modes().len(),
        min_relaxation_rate: min_relaxation_rate(&coupling, &spectrum, spec.loss),
        lyapunov_residual: state.residual(),
        mirrored_average,
        reference: lattice.site_label(reference),
    };
    emit(cfg, "summary", &report)
}

#[derive(Serialize)]
struct SpectrumReport {
    n_sites: usize,
    drain: String,
    dark_modes: usize,
    min_relaxation_rate: Option<f64>,
    max_secular_residual: f64,
}

fn spectrum_csv(export: &SpectrumExport) -> String {
    let mut out = String::from("index,energy,drain_rate,dark_mode,nu,gamma,secular_residual\n");
    for i in 0..export.energies.len() {
        let (nu, gamma) = export.dynamical[i];
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{}",
            csv_float(export.energies[i]),
            csv_float(export.drain_rates[i]),
            export.dark_modes.contains(&i),
            csv_float(nu),
            csv_float(gamma),
            export.residuals[i].map_or(String::new(), csv_float)
        );
    }
    out
}

pub fn spectrum(cfg: &RunConfig) -> Result<(), CliError> {
    let (lattice, drain) = cfg.lattice()?;
    let (coupling, spectrum) = analyse(&lattice, drain, cfg)?;
    prepare(cfg)?;
    let export = SpectrumExport::new(&coupling, &spectrum);
    match cfg.format {
        Format::Json => write_json(&cfg.out_path("spectrum.json"), &export)?,
        Format::Csv => std::fs::write(cfg.out_path("spectrum.csv"), spectrum_csv(&export))?,
    }
    let report = SpectrumReport {
        n_sites: lattice.n_sites(),
        drain: lattice.site_label(drain),
        dark_modes: coupling.dark_modes().len(),
        min_relaxation_rate: min_relaxation_rate(&coupling, &spectrum, cfg.drain.loss),
        max_secular_residual: spectrum.max_residual(),
    };
    emit(cfg, "summary", &report)
}

#[derive(Serialize)]
struct CheckLine {
    check: &'static str,
    pass: bool,
    value: f64,
    threshold: f64,
    note: String,
}

#[derive(Serialize)]
struct CheckReport {
    drain: String,
    sigma: SigmaChoice,
    pass: bool,
    checks: Vec<CheckLine>,
    symmetry: Option<SymmetryReport>,
}

fn hofstadter_params(lattice: &Lattice) -> Result<(usize, f64), CliError> {
    match lattice.model().base() {
        Model::Hofstadter { half_size, flux, .. } => Ok((*half_size, *flux)),
        _ => Err(CliError::Usage("the Hofstadter symmetry matrices need a Hofstadter lattice".into())),
    }
}

fn named_sigma(choice: SigmaChoice, lattice: &Lattice, drain: usize) -> Result<SymmetryMatrix, CliError> {
    let variant = |v: HofstadterVariant| -> Result<SymmetryMatrix, CliError> {
        let (half, flux) = hofstadter_params(lattice)?;
        Ok(sigma_hofstadter(v, half, flux)?)
    };
    Ok(match choice {
        SigmaChoice::Bipartite => sigma_bipartite(lattice.sites())?,
        SigmaChoice::Inversion => sigma_inversion(lattice.sites(), false)?,
        SigmaChoice::SignedInversion => sigma_inversion(lattice.sites(), true)?,
        SigmaChoice::Z0 => variant(HofstadterVariant::Z0)?,
        SigmaChoice::ZeroZ => variant(HofstadterVariant::ZeroZ)?,
        SigmaChoice::Zz => variant(HofstadterVariant::Zz)?,
        SigmaChoice::Hofstadter => {
            let coord = lattice.sites()[drain].coord.clone().unwrap_or_default();
            let found = match coord.as_slice() {
                [x, y] => HofstadterVariant::for_site(*x, *y),
                _ => None,
            };
            let v = found.ok_or_else(|| {
                CliError::Usage(format!(
                    "no Hofstadter symmetry matrix fixes drain {}",
                    lattice.site_label(drain)
                ))
            })?;
            variant(v)?
        }
        SigmaChoice::Eigenmodes => unreachable!("eigenmode σ is extracted from the spectrum"),
    })
}

pub fn check(cfg: &RunConfig) -> Result<(), CliError> {
    let (lattice, drain) = cfg.lattice()?;
    let (coupling, spectrum) = analyse(&lattice, drain, cfg)?;
    let tol = 1e-9 * coupling.eigen().scale().max(1.0);
    let pairing = chiral_pairing(&coupling, tol);
    let choice = cfg.analysis.sigma;
    let relation = cfg.analysis.relation.map(Relation::from).unwrap_or(match choice {
        SigmaChoice::Bipartite => Relation::Chiral,
        _ => Relation::ParticleHole,
    });
    let sigma = match choice {
        SigmaChoice::Eigenmodes => extract_sigma(&coupling, &pairing).map_err(|e| e.to_string()),
        named => {
            let raw = named_sigma(named, &lattice, drain)?;
            // a global phase puts the drain column on e_{n0} when σ fixes the drain
            Ok(raw.aligned_to(drain).unwrap_or(raw))
        }
    };

    let mut checks = Vec::new();
    let symmetry = match &sigma {
        Ok(s) => {
            let report = check_symmetry_with(s, &lattice, Some(drain), relation)?;
            let value = match relation {
                Relation::ParticleHole => report.particle_hole_residual,
                Relation::Chiral => report.chiral_residual,
            };
            checks.push(CheckLine {
                check: "symmetry",
                pass: report.pass,
                value,
                threshold: report.threshold,
                note: format!(
                    "{relation:?} relation; unitarity {:.1e}, transpose {:.1e}, drain column {:.1e}",
                    report.unitarity_residual,
                    report.symmetry_residual,
                    report.drain_residual.unwrap_or(0.0)
                ),
            });
            Some(report)
        }
        Err(message) => {
            checks.push(CheckLine {
                check: "symmetry",
                pass: false,
                value: f64::NAN,
                threshold: tol,
                note: format!("no symmetry matrix: {message}"),
            });
            None
        }
    };
    checks.push(CheckLine {
        check: "chiral_pairing",
        pass: pairing.holds(tol),
        value: pairing.energy_defect.max(pairing.amplitude_defect),
        threshold: tol,
        note: format!(
            "energy defect {:.1e}, drain amplitude defect {:.1e}, {} unpaired",
            pairing.energy_defect,
            pairing.amplitude_defect,
            pairing.unpaired.len()
        ),
    });
    let dark = coupling.dark_modes();
    checks.push(CheckLine {
        check: "dark_modes",
        pass: dark.is_empty(),
        value: dark.len() as f64,
        threshold: 0.0,
        note: if dark.is_empty() {
            "every mode reaches the drain".into()
        } else {
            format!("{} mode(s) with a node at the drain: {dark:?}", dark.len())
        },
    });
    let residual = spectrum.max_residual();
    checks.push(CheckLine {
        check: "secular_residual",
        pass: residual < SECULAR_TOL,
        value: residual,
        threshold: SECULAR_TOL,
        note: format!("{} bright eigenvalues", spectrum.eigenvalues.len() - spectrum.n_dark()),
    });

    let pass = checks.iter().all(|c| c.pass);
    let failing: Vec<String> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{} {:.3e} (limit {:.1e})", c.check, c.value, c.threshold))
        .collect();
    let report = CheckReport {
        drain: lattice.site_label(drain),
        sigma: choice,
        pass,
        checks,
        symmetry,
    };
    prepare(cfg)?;
    match cfg.format {
        Format::Json => {
            let text = serde_json::to_string_pretty(&report)? + "\n";
            std::fs::write(cfg.out_path("check.json"), &text)?;
            print!("{text}");
        }
        Format::Csv => {
            let mut text = String::from("check,pass,value,threshold,note\n");
            for c in &report.checks {
                let _ = writeln!(
                    text,
                    "{},{},{},{},{}",
                    c.check,
                    if c.pass { "PASS" } else { "FAIL" },
                    if c.value.is_nan() { String::new() } else { csv_float(c.value) },
                    csv_float(c.threshold),
                    csv_cell(&Value::String(c.note.clone()))
                );
            }
            std::fs::write(cfg.out_path("check.csv"), &text)?;
            print!("{text}");
        }
    }
    if pass {
        Ok(())
    } else {
        Err(CliError::Certification(failing.join(", ")))
    }
}

pub fn sweep(cfg: &RunConfig, jobs: Option<usize>) -> Result<(), CliError> {
    let (lattice, drain) = cfg.lattice()?;
    let config = SweepConfig {
        axis: cfg.analysis.axis.into(),
        values: cfg.analysis.values.clone(),
        realizations: cfg.analysis.realizations,
        seed: cfg.seed,
        spec: cfg.drain_spec(drain)?,
        jobs,
    };
    let result = run_sweep(&lattice, &config)?;
    prepare(cfg)?;
    std::fs::write(cfg.out_path("sweep_rows.csv"), result.rows_csv())?;
    std::fs::write(cfg.out_path("sweep_aggregates.csv"), result.aggregates_csv())?;
    write_json(&cfg.out_path("sweep_aggregates.json"), &result.aggregates)?;
    match cfg.format {
        Format::Json => print!("{}", serde_json::to_string_pretty(&result.aggregates)? + "\n"),
        Format::Csv => print!("{}", result.aggregates_csv()),
    }
    Ok(())
}
