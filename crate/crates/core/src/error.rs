use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid transform parameters: {0}")]
    InvalidParams(String),

    #[error("signal of {len} samples is shorter than one analysis window ({window} samples)")]
    SignalTooShort { len: usize, window: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("mask value {value} at bin {bin}, frame {frame} is outside [0, 1]")]
    MaskOutOfRange {
        bin: usize,
        frame: usize,
        value: f64,
    },

    #[error("negative magnitude {value} at bin {bin}, frame {frame}")]
    NegativeMagnitude {
        bin: usize,
        frame: usize,
        value: f64,
    },

    #[error("candidate pool holds {available} frames but {required} are required")]
    PoolTooSmall { available: usize, required: usize },

    #[error("neighbor set is empty")]
    EmptyNeighborSet,

    #[error("invalid separation config: {0}")]
    InvalidConfig(String),

    #[error("cannot deconvolve against an all-zero column")]
    ZeroColumn,

    #[error("dropping {drop_head} specmurt coefficients leaves none of {available}")]
    DropHeadTooLarge { drop_head: usize, available: usize },

    #[error("reference is silent on the evaluated segment")]
    SilentReference,

    #[error("scene construction failed: {0}")]
    Scene(String),

    #[error("unsupported WAV encoding: {0}")]
    UnsupportedWav(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
