use thiserror::Error;

/// Failures raised anywhere in the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("root refinement for J_{m} root #{n} did not converge")]
    RootConvergence { m: u32, n: usize },

    #[error("radial power must be 1 or 3, got {0}")]
    InvalidPower(u32),

    #[error("degenerate billiard geometry at tau={tau}: a={a}, b={b}")]
    DegenerateGeometry { tau: f64, a: f64, b: f64 },

    #[error("eigenpair {index} has residual {residual:e} above tolerance {tolerance:e}")]
    EigenConvergence {
        index: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("ambiguous tracking of state {state} between tau={from} and tau={to}; use a finer tau grid")]
    AmbiguousTracking { state: usize, from: f64, to: f64 },

    #[error("states {n} and {m} are nearly degenerate (gap {gap:e}) at tau={tau}")]
    NearDegenerate { n: usize, m: usize, gap: f64, tau: f64 },

    #[error("integrator step size collapsed to {step:e} at t={t}; reduce the basis cutoff")]
    StepCollapse { t: f64, step: f64 },

    #[error("integrator needed more than {steps} steps by t={t}")]
    StepBudget { t: f64, steps: u32 },

    #[error("norm drift {drift:e} exceeds the accuracy bound {bound:e}")]
    NormDrift { drift: f64, bound: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cache format mismatch: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
