use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("resonance: {0}")]
    Resonance(String),
    #[error("fourier: {0}")]
    Fourier(String),
    #[error("normal form: {0}")]
    NormalForm(String),
    #[error("inadmissible parameters: {0}")]
    Inadmissible(String),
    #[error("symplectic: {0}")]
    Symplectic(String),
    #[error("dynamics: {0}")]
    Dynamics(String),
    #[error("melnikov: {0}")]
    Melnikov(String),
    #[error("action: {0}")]
    Action(String),
    #[error("weak KAM: {0}")]
    WeakKam(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status used by the CLI, one per module.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io(_) => 3,
            Error::Resonance(_) => 10,
            Error::Fourier(_) => 11,
            Error::NormalForm(_) => 12,
            Error::Inadmissible(_) => 13,
            Error::Symplectic(_) => 14,
            Error::Dynamics(_) => 15,
            Error::Melnikov(_) => 16,
            Error::Action(_) => 17,
            Error::WeakKam(_) => 18,
        }
    }
}

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(format!($($arg)*)))
    };
}
pub(crate) use bail;
