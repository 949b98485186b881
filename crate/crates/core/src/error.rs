use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("undefined direction: magnetic field vanishes at z = {z:e} m")]
    UndefinedDirection { z: f64 },

    #[error("expected a unit vector, got norm {norm}")]
    NonUnitVector { norm: f64 },

    #[error("population {value} outside [0, 1] beyond round-off")]
    PopulationOutOfRange { value: f64 },

    #[error("euler decay step unstable: dt/tau = {ratio} >= 1, reduce dt")]
    UnstableDecay { ratio: f64 },

    #[error("{what} argument {value:e} outside the supported domain {domain}")]
    OutOfDomain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("wavepacket under-resolved: sigma = {sigma:e} m with dz = {dz:e} m")]
    UnderResolved { sigma: f64, dz: f64 },

    #[error("norm {leaked:e} reached the outer grid margin at t = {t:e} s; enlarge the domain or add an absorber")]
    BoundaryLeak { leaked: f64, t: f64 },

    #[error("unknown engine `{0}`")]
    UnknownEngine(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("schema mismatch in {file}: {reason}")]
    Schema { file: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}
