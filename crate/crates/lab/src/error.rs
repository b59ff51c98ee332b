use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_TOLERANCE: u8 = 4;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config: {0}")]
    Config(String),
    #[error("file format: {0}")]
    Format(String),
    #[error(transparent)]
    Core(#[from] dlangevin_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("tolerance violated: {0}")]
    Tolerance(String),
}

impl LabError {
    pub fn exit_code(&self) -> u8 {
        match self {
            LabError::Config(_) | LabError::Format(_) => EXIT_CONFIG,
            LabError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            LabError::Core(_) => EXIT_CONFIG,
            LabError::Io(_) => EXIT_IO,
            LabError::Tolerance(_) => EXIT_TOLERANCE,
        }
    }
}
