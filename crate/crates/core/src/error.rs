use thiserror::Error;

use crate::cli::{CheckpointError, ConfigError, IdxError};
use crate::masks::MaskError;
use crate::numerics::NumericsError;
use crate::theory::TheoryError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("all keys dropped for head {head}, query {row}")]
    AllKeysDropped { head: usize, row: usize },
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("image {height}x{width} is not divisible into {patch}x{patch} patches")]
    NotDivisible {
        height: usize,
        width: usize,
        patch: usize,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("loss diverged to {loss} at step {step}")]
    DivergedLoss { step: usize, loss: f64 },
    #[error("unknown command '{0}'")]
    UnknownCommand(String),
    #[error("refusing to overwrite {0} (pass --force)")]
    OutputExists(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }
}
