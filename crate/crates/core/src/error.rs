use thiserror::Error;

/// Errors raised across the simulator, estimators, fusers and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("singular geometry: condition number {0:.3e} exceeds bound")]
    SingularGeometry(f64),
    #[error("invalid rainbow sweep: {0}")]
    InvalidSweep(String),
    #[error("angle {0} rad outside sweep range")]
    OutOfSweep(f64),
    #[error("wide-beam synthesis failed: ripple {ripple_db:.2} dB, leakage {leakage_db:.2} dB")]
    SynthesisFailed { ripple_db: f64, leakage_db: f64 },
    #[error("received sub-band has (near) zero energy")]
    ZeroSignal,
    #[error("AoA ray is tangent to the bistatic ellipse")]
    TangentRay,
    #[error("bistatic distance {d:.3} m does not exceed baseline {baseline:.3} m")]
    InfeasibleEllipse { d: f64, baseline: f64 },
    #[error("AoA rays are parallel")]
    ParallelRays,
    #[error("solver hit the iteration limit ({0})")]
    MaxItersExceeded(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient in layer {0}")]
    NonFiniteGradient(usize),
    #[error("training diverged at epoch {0}")]
    Diverged(usize),
    #[error("feature {0} is constant on the training split")]
    DegenerateFeature(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
