use std::io;

/// Errors produced by the correspondence pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid flow: {0}")]
    InvalidFlow(String),

    #[error("coordinate ({x}, {y}) outside {width}x{height} lattice")]
    OutOfBounds {
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },

    #[error("frame {frame} out of range for a {num_frames}-frame video")]
    FrameOutOfRange { frame: u32, num_frames: u32 },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("video has {0} frame(s); at least 2 are required")]
    DegenerateVideo(u32),

    #[error("trajectory set carries no consistency residuals")]
    MissingResiduals,

    #[error("threshold (gamma={new_gamma}, delta={new_delta}) is more permissive than build threshold (gamma={old_gamma}, delta={old_delta})")]
    Permissiveness {
        old_gamma: f32,
        old_delta: f32,
        new_gamma: f32,
        new_delta: f32,
    },

    #[error("requested {requested} frames from a {available}-frame video")]
    InsufficientFrames { requested: usize, available: usize },

    #[error("embedding row has zero norm")]
    DegenerateEmbedding,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
