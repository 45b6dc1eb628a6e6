use thiserror::Error;

/// Errors raised by the laboratory.
///
/// Variant names mirror the failure modes of the individual operations so
/// that run summaries can report them verbatim (see [`LabError::name`]).
#[derive(Debug, Clone, Error, PartialEq)]
pub enum LabError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("fewer than {wanted} returns within horizon {horizon} (found {found})")]
    HorizonExhausted {
        wanted: usize,
        found: usize,
        horizon: usize,
    },
    #[error("point does not belong to the set {0}")]
    PointOutsideSet(String),
    #[error("no sampled point landed in the tower base ({0})")]
    EmptyTower(String),
    #[error("base system is not aperiodic: {0}")]
    NonAperiodicBase(String),
    #[error("unknown builtin cocycle `{0}`")]
    UnknownName(String),
    #[error("numerically singular generator at {0}")]
    SingularGenerator(String),
    #[error("orbit function window too short for the Mather operator")]
    WindowUnderflow,
    #[error("evolved frame lost numerical rank after {step} steps; shorten the re-orthonormalisation period")]
    Degenerate { step: usize },
    #[error(
        "filtrations are nearly tangent (transversality {transversality:.3e}); enlarge the window"
    )]
    IllConditioned { transversality: f64 },
    #[error("spectrum inconclusive: exponent {exponent:.3e} (stderr {stderr:.3e}) too close to zero tolerance {zero_tol:.3e}")]
    Inconclusive {
        exponent: f64,
        stderr: f64,
        zero_tol: f64,
    },
    #[error("cocycle is not hyperbolic (smallest |exponent| = {0:.3e})")]
    NotHyperbolic(f64),
    #[error(
        "generator restricted to the unstable bundle is singular (smallest singular value {0:.3e})"
    )]
    UnstableNotInvertible(f64),
    #[error("dichotomy inequality violated at sample {sample}, n = {n}: ratio {ratio:.6}")]
    Violation { sample: usize, n: usize, ratio: f64 },
    #[error("need {needed} envelope samples, got {available}")]
    WindowTooSmall { needed: usize, available: usize },
    #[error("truncation error bound {bound:.3e} exceeds tolerance {tol:.3e}")]
    TailTooLarge { bound: f64, tol: f64 },
    #[error("dense periodic system is singular (smallest singular value {0:.3e}); a Floquet multiplier lies on the unit circle")]
    SingularSystem(f64),
    #[error(
        "homogeneous solution failed to decay: residual {residual:.3e} along direction {direction}"
    )]
    NoDecay { residual: f64, direction: usize },
    #[error("no direction with defect below 0.5 (best {0:.3e}); extend the horizon")]
    NoCandidate(f64),
    #[error("cocycle has no zero exponent; the admissibility witness applies only to degenerate cocycles")]
    NotDegenerate,
    #[error("witness ratio {achieved:.4} does not exceed target {target:.4}")]
    RatioNotAchieved { achieved: f64, target: f64 },
    #[error("perturbation {norm:.6e} exceeds budget {budget:.6e} at window offset {offset}")]
    BudgetViolated { offset: i64, norm: f64, budget: f64 },
    #[error("fixed-point iteration did not converge in {iterations} iterations (last step {last_step:.3e})")]
    NoConvergence { iterations: usize, last_step: f64 },
    #[error("no artifacts to report")]
    MissingArtifact,
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl LabError {
    /// Stable short name used in run summaries.
    pub fn name(&self) -> &'static str {
        match self {
            LabError::InvalidParameter(_) => "InvalidParameter",
            LabError::HorizonExhausted { .. } => "HorizonExhausted",
            LabError::PointOutsideSet(_) => "PointOutsideSet",
            LabError::EmptyTower(_) => "EmptyTower",
            LabError::NonAperiodicBase(_) => "NonAperiodicBase",
            LabError::UnknownName(_) => "UnknownName",
            LabError::SingularGenerator(_) => "SingularGenerator",
            LabError::WindowUnderflow => "WindowUnderflow",
            LabError::Degenerate { .. } => "Degenerate",
            LabError::IllConditioned { .. } => "IllConditioned",
            LabError::Inconclusive { .. } => "Inconclusive",
            LabError::NotHyperbolic(_) => "NotHyperbolic",
            LabError::UnstableNotInvertible(_) => "UnstableNotInvertible",
            LabError::Violation { .. } => "Violation",
            LabError::WindowTooSmall { .. } => "WindowTooSmall",
            LabError::TailTooLarge { .. } => "TailTooLarge",
            LabError::SingularSystem(_) => "SingularSystem",
            LabError::NoDecay { .. } => "NoDecay",
            LabError::NoCandidate(_) => "NoCandidate",
            LabError::NotDegenerate => "NotDegenerate",
            LabError::RatioNotAchieved { .. } => "RatioNotAchieved",
            LabError::BudgetViolated { .. } => "BudgetViolated",
            LabError::NoConvergence { .. } => "NoConvergence",
            LabError::MissingArtifact => "MissingArtifact",
            LabError::Config(_) => "Config",
            LabError::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
