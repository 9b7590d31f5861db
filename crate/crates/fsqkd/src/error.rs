//! Crate-wide error type.

/// Errors produced anywhere in the pipeline.
///
/// The CLI maps these onto process exit codes: usage errors exit 1,
/// transport failures exit 2, protocol aborts exit 3, and a failed final
/// key check exits 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter failed validation at construction time.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An operation was called outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A frame or payload could not be encoded or decoded.
    #[error("wire format error: {0}")]
    Wire(String),

    /// The underlying byte channel failed (connect, send, receive).
    #[error("transport error: {0}")]
    Transport(String),

    /// The peer violated the protocol; the session is torn down.
    #[error("protocol abort: {0}")]
    Abort(String),

    /// The final key comparison failed; both keys were destroyed.
    #[error("key check failed: {0}")]
    KeyCheck(String),

    /// One-time-pad key material was missing, spent, or too short.
    #[error("pad error: {0}")]
    Pad(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
