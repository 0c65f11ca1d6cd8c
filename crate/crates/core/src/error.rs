use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("site index {index} out of range for {n_sites} sites")]
    SiteOutOfRange { index: usize, n_sites: usize },

    #[error("missing site metadata: {0}")]
    MissingMetadata(String),

    #[error("{n} dark mode(s) at the drain (mode indices {indices:?}); the lossless steady state is not unique, move the drain site or add loss")]
    DarkModes { n: usize, indices: Vec<usize> },

    #[error("chiral pairing defect too large: energy {energy_defect:.3e}, drain amplitude {amplitude_defect:.3e} (tolerance {tol:.1e})")]
    PairingDefect {
        energy_defect: f64,
        amplitude_defect: f64,
        tol: f64,
    },

    #[error("eigendecomposition did not converge for a {n}x{n} matrix (max-norm {norm:.3e})")]
    EigenFailure { n: usize, norm: f64 },

    #[error("linear solve failed: {0}")]
    Singular(String),

    #[error("unphysical covariance: {0}")]
    Unphysical(String),

    #[error("time step too large: dt*|D| = {ratio:.3} (must be < 0.1)")]
    StepTooLarge { ratio: f64 },

    #[error("integration became unstable at t = {t}")]
    Unstable { t: f64 },

    #[error("realization {index} (seed {seed}) failed: {source}")]
    Realization {
        index: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::DarkModes { .. }
            | Error::EigenFailure { .. }
            | Error::Singular(_)
            | Error::Unphysical(_)
            | Error::Unstable { .. } => true,
            Error::Realization { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
