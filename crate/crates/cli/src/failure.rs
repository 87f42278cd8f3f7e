//! Exit codes: 2 bad arguments, 3 I/O failure, 4 infeasible configuration,
//! 1 anything else.

use std::fmt;

use sikam_core::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Io,
    Infeasible,
    Internal,
}

impl Kind {
    pub fn code(self) -> i32 {
        match self {
            Kind::Usage => 2,
            Kind::Io => 3,
            Kind::Infeasible => 4,
            Kind::Internal => 1,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub error: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;

pub fn classify(e: &Error) -> Kind {
    match e {
        Error::Io(_) | Error::Wav(_) | Error::Csv(_) | Error::UnsupportedWav(_) => Kind::Io,
        Error::InvalidParams(_) => Kind::Usage,
        Error::PoolTooSmall { .. }
        | Error::InvalidConfig(_)
        | Error::SignalTooShort { .. }
        | Error::DropHeadTooLarge { .. }
        | Error::SilentReference
        | Error::Scene(_) => Kind::Infeasible,
        _ => Kind::Internal,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            kind: classify(&e),
            error: e.into(),
        }
    }
}

pub trait Tag<T> {
    fn tag(self, kind: Kind) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Tag<T> for std::result::Result<T, E> {
    fn tag(self, kind: Kind) -> Outcome<T> {
        self.map_err(|e| Failure {
            kind,
            error: e.into(),
        })
    }
}

/// Core errors keep their own classification, with added context.
pub trait CoreContext<T> {
    fn context(self, what: impl fmt::Display) -> Outcome<T>;
}

impl<T> CoreContext<T> for sikam_core::Result<T> {
    fn context(self, what: impl fmt::Display) -> Outcome<T> {
        self.map_err(|e| Failure {
            kind: classify(&e),
            error: anyhow::Error::new(e).context(what.to_string()),
        })
    }
}

pub fn usage(msg: impl fmt::Display) -> Failure {
    Failure {
        kind: Kind::Usage,
        error: anyhow::anyhow!("{msg}"),
    }
}
