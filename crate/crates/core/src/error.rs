use thiserror::Error;

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("resource limit: {what} needs {requested} spins, cap is {cap}")]
    ResourceLimit {
        what: &'static str,
        requested: usize,
        cap: usize,
    },

    #[error("step size too large: norm deviation {deviation:.3e} exceeds {tolerance:.3e} at dt = {dt}")]
    StepSize {
        dt: f64,
        deviation: f64,
        tolerance: f64,
    },

    #[error("step size halved {halvings} times without meeting tolerance (last dt = {dt}, norm deviation {deviation:.3e})")]
    StepSizeExhausted {
        halvings: u32,
        dt: f64,
        deviation: f64,
    },

    #[error("numerical overflow: {0}")]
    NumericalOverflow(String),

    #[error("numerical consistency: {0}")]
    NumericalConsistency(String),

    #[error("ensemble member {member} at t = {time}: {source}")]
    Member {
        member: usize,
        time: f64,
        #[source]
        source: Box<SimError>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SimError::InvalidArgument(msg.into())
    }

    pub(crate) fn in_member(self, member: usize, time: f64) -> Self {
        match self {
            already @ SimError::Member { .. } => already,
            other => SimError::Member {
                member,
                time,
                source: Box::new(other),
            },
        }
    }

    /// Process exit code for the command-line driver.
    ///
    /// 2 = configuration / argument error, 3 = numerical tolerance failure,
    /// 4 = resource limit. I/O failures map to 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::InvalidArgument(_) | SimError::Config(_) => 2,
            SimError::StepSize { .. }
            | SimError::StepSizeExhausted { .. }
            | SimError::NumericalOverflow(_)
            | SimError::NumericalConsistency(_) => 3,
            SimError::ResourceLimit { .. } => 4,
            SimError::Member { source, .. } => source.exit_code(),
            SimError::Io { .. } => 1,
        }
    }
}
