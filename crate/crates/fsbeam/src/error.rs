use thiserror::Error;

/// Errors raised by the beam library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parametric coordinate {u} outside the knot domain [{lo}, {hi}]")]
    Domain { u: f64, lo: f64, hi: f64 },

    #[error("derivative order {0} is not supported (maximum is 3)")]
    UnsupportedOrder(usize),

    #[error("invalid knot vector: {0}")]
    InvalidKnots(String),

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("Frenet-Serret frame is ill-defined at xi = {xi}: curvature {curvature:e} below threshold {threshold:e}")]
    IllDefinedFrame { xi: f64, curvature: f64, threshold: f64 },

    #[error("cross-section point is not admissible: shifter g0 = {0} <= 0")]
    NonAdmissiblePoint(f64),

    #[error("invalid cross section: {0}")]
    InvalidSection(String),

    #[error("invalid material: {0}")]
    InvalidMaterial(String),

    #[error("smallest rotation between antipodal tangents is undefined")]
    AntipodalTangents,

    #[error("twist increment of {0:.3} rad exceeds pi/2 within one step")]
    TwistJump(f64),

    #[error("singular tangent matrix at load factor {lpf}")]
    SingularTangent { lpf: f64 },

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
