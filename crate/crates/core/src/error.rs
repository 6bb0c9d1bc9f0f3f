use thiserror::Error;

pub type Result<T, E = OtfsError> = std::result::Result<T, E>;

/// Errors raised anywhere in the toolkit.
///
/// Each variant maps onto one of the CLI exit codes through [`OtfsError::exit_code`].
#[derive(Debug, Error)]
pub enum OtfsError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("complexity guard: {what} requires {required} hypotheses, cap is {cap}")]
    CapExceeded {
        what: &'static str,
        required: u128,
        cap: u128,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("duplicate delay-Doppler tap (alpha={alpha}, beta={beta})")]
    DuplicateTap { alpha: usize, beta: i64 },

    #[error("matrix is not block-circulant with circulant blocks")]
    NotBlockCirculant,

    #[error("slope estimation needs at least two points with positive BER, got {0}")]
    InsufficientPoints(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl OtfsError {
    pub fn config(msg: impl Into<String>) -> Self {
        OtfsError::Config(msg.into())
    }

    /// Process exit code used by the `otfs` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            OtfsError::CapExceeded { .. } => 3,
            OtfsError::Numerical(_) | OtfsError::NotBlockCirculant => 4,
            OtfsError::Io(_) => 1,
            _ => 2,
        }
    }
}

/// Number of hypotheses `q^len`, saturating at `u128::MAX`.
pub(crate) fn hypothesis_count(q: usize, len: usize) -> u128 {
    let mut total: u128 = 1;
    for _ in 0..len {
        total = total.saturating_mul(q as u128);
    }
    total
}

pub(crate) fn check_cap(what: &'static str, q: usize, len: usize, cap: u64) -> Result<u128> {
    let required = hypothesis_count(q, len);
    if required > cap as u128 {
        return Err(OtfsError::CapExceeded {
            what,
            required,
            cap: cap as u128,
        });
    }
    Ok(required)
}
