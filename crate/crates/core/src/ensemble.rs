//! Seeded disorder and loss sweeps of the mirrored-pair entanglement.
//!
//! Realization `i` of a disorder sweep draws its potentials from a seed
//! derived from `(seed, i)`, the same for every variance, so neighbouring grid
//! points differ only in the disorder strength. Results are ordered by
//! `(value, realization)` whatever the thread count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::entanglement::mirrored_pair_average;
use crate::io::csv_float;
use crate::lattice::{add_disorder, Lattice};
use crate::steady::{purity, steady_state, DrainSpec};
use crate::{Error, Result};

/// Default ensemble size of disorder sweeps.
pub const DEFAULT_REALIZATIONS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// On-site disorder variance; the drain potential stays zero.
    Disorder,
    /// Uniform loss rate on every site (deterministic, one run per value).
    Loss,
}

impl SweepAxis {
    pub fn column(&self) -> &'static str {
        match self {
            SweepAxis::Disorder => "disorder_variance",
            SweepAxis::Loss => "loss_rate",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub realizations: usize,
    pub seed: u64,
    pub spec: DrainSpec,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub jobs: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub realization: usize,
    pub realization_seed: u64,
    pub mirrored_average: f64,
    pub purity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepAggregate {
    pub value: f64,
    pub count: usize,
    pub mean: f64,
    pub stderr: f64,
    pub mean_purity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<SweepAggregate>,
}

/// Seed of realization `index`: first word of the ChaCha stream `index` under `seed`.
pub fn realization_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.next_u64()
}

/// Solves one grid point and returns `(E̅_N, purity)`.
pub fn run_realization(base: &Lattice, axis: SweepAxis, value: f64, seed: u64, spec: &DrainSpec) -> Result<(f64, f64)> {
    let (lattice, spec) = match axis {
        SweepAxis::Disorder => (add_disorder(base, value, seed, &[spec.drain])?, *spec),
        SweepAxis::Loss => (base.clone(), spec.with_loss(value)),
    };
    let state = steady_state(&lattice, &spec)?;
    let average = mirrored_pair_average(&state, &lattice)?;
    Ok((average.value, purity(&state)?))
}

pub fn run_sweep(base: &Lattice, config: &SweepConfig) -> Result<SweepResult> {
    if base.square_half_size().is_none() {
        return Err(Error::MissingMetadata(
            "sweeps report mirrored-pair entanglement and need a square lattice".into(),
        ));
    }
    if let Some(v) = config.values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::param("values", format!("sweep values must be finite and >= 0, got {v}")));
    }
    if config.realizations == 0 {
        return Err(Error::param("realizations", "must be at least 1"));
    }
    config.spec.validate(base.n_sites())?;
    let per_value = match config.axis {
        SweepAxis::Disorder => config.realizations,
        SweepAxis::Loss => 1,
    };
    let jobs: Vec<(f64, usize, u64)> = config
        .values
        .iter()
        .flat_map(|&v| (0..per_value).map(move |i| (v, i, realization_seed(config.seed, i))))
        .collect();
    let work = || -> Vec<Result<SweepRow>> {
        jobs.par_iter()
            .map(|&(value, realization, seed)| {
                run_realization(base, config.axis, value, seed, &config.spec)
                    .map(|(mirrored_average, purity)| SweepRow {
                        value,
                        realization,
                        realization_seed: seed,
                        mirrored_average,
                        purity,
                    })
                    .map_err(|e| Error::Realization {
                        index: realization,
                        seed,
                        source: Box::new(e),
                    })
            })
            .collect()
    };
    let outcomes = match config.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::param("jobs", e.to_string()))?
            .install(work),
        None => work(),
    };
    let rows = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let aggregates = config
        .values
        .iter()
        .enumerate()
        .map(|(k, &value)| aggregate(value, &rows[k * per_value..(k + 1) * per_value]))
        .collect();
    Ok(SweepResult {
        axis: config.axis,
        rows,
        aggregates,
    })
}

fn aggregate(value: f64, rows: &[SweepRow]) -> SweepAggregate {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r.mirrored_average).sum::<f64>() / n;
    let stderr = if rows.len() > 1 {
        let var = rows.iter().map(|r| (r.mirrored_average - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    SweepAggregate {
        value,
        count: rows.len(),
        mean,
        stderr,
        mean_purity: rows.iter().map(|r| r.purity).sum::<f64>() / n,
    }
}

impl SweepResult {
    /// One row per realization.
    pub fn rows_csv(&self) -> String {
        let mut out = format!("{},realization,realization_seed,mirrored_average,purity\n", self.axis.column());
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                csv_float(r.value),
                r.realization,
                r.realization_seed,
                csv_float(r.mirrored_average),
                csv_float(r.purity)
            );
        }
        out
    }

    /// One row per grid value.
    pub fn aggregates_csv(&self) -> String {
        let mut out = format!("{},count,mean,stderr,mean_purity\n", self.axis.column());
        for a in &self.aggregates {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                csv_float(a.value),
                a.count,
                csv_float(a.mean),
                csv_float(a.stderr),
                csv_float(a.mean_purity)
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_chain, build_hofstadter, Hopping};
    use crate::linalg::real;
    use crate::steady::NoiseParams;

    fn config(axis: SweepAxis, values: Vec<f64>, realizations: usize) -> SweepConfig {
        SweepConfig {
            axis,
            values,
            realizations,
            seed: 9,
            spec: DrainSpec::new(4, 3.0, NoiseParams::new(0.5, 0.0).unwrap()),
            jobs: Some(2),
        }
    }

    fn lattice() -> Lattice {
        build_hofstadter(1, 1.0, 0.7).unwrap()
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(realization_seed(1, 0), realization_seed(1, 0));
        assert_ne!(realization_seed(1, 0), realization_seed(1, 1));
        assert_ne!(realization_seed(1, 0), realization_seed(2, 0));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let l = lattice();
        let mut c = config(SweepAxis::Disorder, vec![0.0, 1e-3], 3);
        c.spec.drain = 0;
        let a = run_sweep(&l, &c).unwrap();
        c.jobs = Some(1);
        let b = run_sweep(&l, &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows_csv(), b.rows_csv());
        assert_eq!(a.rows.len(), 6);
        // zero variance leaves every realization at the clean value
        let clean: Vec<f64> = a.rows[..3].iter().map(|r| r.mirrored_average).collect();
        assert!(clean.iter().all(|v| *v == clean[0]));
        assert!(a.aggregates[0].stderr < 1e-15);
    }

    #[test]
    fn loss_axis_is_single_run() {
        let l = lattice();
        let mut c = config(SweepAxis::Loss, vec![0.0, 0.1], 5);
        c.spec.drain = 0;
        let r = run_sweep(&l, &c).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(r.aggregates[1].mean_purity < 1.0);
        assert!(r.aggregates_csv().starts_with("loss_rate,count"));
    }

    #[test]
    fn failures_carry_the_seed() {
        let l = build_hofstadter(1, 1.0, std::f64::consts::FRAC_PI_2).unwrap();
        let c = config(SweepAxis::Disorder, vec![0.0], 1);
        match run_sweep(&l, &c) {
            Err(Error::Realization { seed, source, .. }) => {
                assert_eq!(seed, realization_seed(9, 0));
                assert!(matches!(*source, Error::DarkModes { .. }));
            }
            other => panic!("expected a realization failure, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let chain = build_chain(3, &Hopping::Uniform(real(1.0)), None).unwrap();
        assert!(run_sweep(&chain, &config(SweepAxis::Loss, vec![0.0], 1)).is_err());
        assert!(run_sweep(&lattice(), &config(SweepAxis::Loss, vec![-1.0], 1)).is_err());
    }
}
