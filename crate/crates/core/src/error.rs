use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("degenerate spectrum: coefficient {index} of channel {channel} has magnitude {magnitude:e}")]
    DegenerateSpectrum {
        channel: usize,
        index: usize,
        magnitude: f64,
    },

    #[error("near-singular inverse: coefficient {index} of channel {channel} has magnitude {magnitude:e}")]
    NearSingularInverse {
        channel: usize,
        index: usize,
        magnitude: f64,
    },

    #[error("conjugate-symmetry violation: max |im| = {max_im:e} against max |re| = {max_re:e}")]
    ConjugateSymmetry { max_im: f64, max_re: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("protocol error at byte {offset}: {message}")]
    Protocol { offset: usize, message: String },

    #[error("backbone spec error: {0}")]
    Spec(String),

    #[error("contract error: {0}")]
    Contract(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("remote failure: worker answered status {status}: {message}")]
    Remote { status: u8, message: String },

    #[error("training diverged at epoch {epoch}, batch {batch} (parameter norm {param_norm:e})")]
    Diverged {
        epoch: usize,
        batch: usize,
        param_norm: f64,
    },

    #[error("attack aborted at step {step}: {message}")]
    AttackAborted { step: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn format(offset: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn protocol(offset: usize, msg: impl Into<String>) -> Self {
        Error::Protocol {
            offset,
            message: msg.into(),
        }
    }
}
