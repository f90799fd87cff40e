use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error(transparent)]
    Core(#[from] reveal_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// 2 for bad input or configuration, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        use reveal_core::Error as E;
        match self {
            HarnessError::Input(_) => 2,
            HarnessError::Core(
                E::Config(_)
                | E::DegenerateTarget
                | E::Format(_)
                | E::Dimension { .. }
                | E::InfeasibleAction(_)
                | E::InsufficientData(_)
                | E::DegenerateSample
                | E::DegenerateInput(_),
            ) => 2,
            _ => 1,
        }
    }
}

pub fn input(msg: impl Into<String>) -> HarnessError {
    HarnessError::Input(msg.into())
}
