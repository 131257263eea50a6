use anyhow::Error;

/// Command failure tagged with its exit code class.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or configuration files (exit 1).
    Usage(Error),
    /// Unreadable or inconsistent input data (exit 2).
    Data(Error),
    /// Anything else (exit 3).
    Internal(Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    pub fn error(&self) -> &Error {
        match self {
            Failure::Usage(e) | Failure::Data(e) | Failure::Internal(e) => e,
        }
    }
}

pub type Outcome<T = ()> = std::result::Result<T, Failure>;

/// Attaches a failure class to fallible results.
pub trait Classify<T> {
    fn usage(self, context: impl FnOnce() -> String) -> Outcome<T>;
    fn data(self, context: impl FnOnce() -> String) -> Outcome<T>;
    fn internal(self, context: impl FnOnce() -> String) -> Outcome<T>;
}

impl<T, E: Into<Error>> Classify<T> for std::result::Result<T, E> {
    fn usage(self, context: impl FnOnce() -> String) -> Outcome<T> {
        self.map_err(|e| Failure::Usage(e.into().context(context())))
    }

    fn data(self, context: impl FnOnce() -> String) -> Outcome<T> {
        self.map_err(|e| Failure::Data(e.into().context(context())))
    }

    fn internal(self, context: impl FnOnce() -> String) -> Outcome<T> {
        self.map_err(|e| Failure::Internal(e.into().context(context())))
    }
}
