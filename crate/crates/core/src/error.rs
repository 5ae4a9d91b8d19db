use thiserror::Error;

use crate::spectral::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid spectral data: {}", format_violations(.0))]
    InvalidSpectralData(Vec<Violation>),

    #[error("invalid boundary specification: {0}")]
    InvalidBoundary(String),

    #[error("singular evaluation of {what} at k = {re} + {im}i")]
    SingularEvaluation {
        what: &'static str,
        re: f64,
        im: f64,
    },

    #[error("ill-conditioned linear system ({what}): condition estimate {condition:.3e}")]
    IllConditioned { what: &'static str, condition: f64 },

    #[error("point (x = {x}, t = {t}) outside the overflow-safe window: exponent real part {exponent:.2} > {limit}")]
    DomainWindow {
        x: f64,
        t: f64,
        exponent: f64,
        limit: f64,
    },

    #[error("degenerate pole {re} + {im}i: Re k must be strictly positive so that k and -k* are distinct")]
    DegeneratePole { re: f64, im: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("mirror norming constants rejected for soliton {index}: residuals ({residual:.3e}, {residual_conj:.3e}) exceed {tolerance:.1e}")]
    ConstraintViolation {
        index: usize,
        residual: f64,
        residual_conj: f64,
        tolerance: f64,
    },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("peak at x = {x} lies on the edge of the scan window [{lo}, {hi}]")]
    PeakOnWindowEdge { x: f64, lo: f64, hi: f64 },

    #[error("soliton too slow for a finite measurement horizon: Re k1 = {re_k} < {threshold}")]
    HorizonTooSlow { re_k: f64, threshold: f64 },

    #[error("zero vector where a nonzero vector is required ({0})")]
    ZeroVector(&'static str),

    #[error("at grid point (x = {x}, t = {t}): {source}")]
    AtPoint {
        x: f64,
        t: f64,
        #[source]
        source: Box<Error>,
    },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
