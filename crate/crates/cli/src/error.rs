use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] hdhgn::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Verification(String),
}

pub type CliResult<T> = Result<T, CliError>;

/// Process exit statuses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Status {
    Ok = 0,
    Internal = 1,
    Schema = 2,
    Io = 3,
    Config = 4,
    Training = 5,
    Vocab = 6,
    Verification = 7,
}

impl From<Status> for ExitCode {
    fn from(s: Status) -> Self {
        ExitCode::from(s as u8)
    }
}

impl CliError {
    pub fn status(&self) -> Status {
        use hdhgn::Error as E;
        match self {
            CliError::Config(_) => Status::Config,
            CliError::Verification(_) => Status::Verification,
            CliError::Core(e) => match e {
                E::Schema { .. } | E::MalformedAst { .. } | E::MalformedGraph { .. } => {
                    Status::Schema
                }
                E::Io { .. } | E::Format { .. } => Status::Io,
                E::Config(_) | E::EmptyCorpus | E::EmptyDataset | E::LabelOutOfRange { .. } => {
                    Status::Config
                }
                E::TrainingAborted(_) | E::NonFiniteValue { .. } => Status::Training,
                E::VocabMismatch { .. } | E::Encoding(_) => Status::Vocab,
                E::ShapeMismatch { .. }
                | E::IdOutOfRange { .. }
                | E::VariantMismatch { .. }
                | E::EmptyBatch => Status::Internal,
            },
        }
    }
}
