use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] landseg_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    /// A core error attributed to a particular file.
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: landseg_core::Error,
    },

    /// Bad arguments or inputs that the user can fix.
    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub fn io(path: impl AsRef<Path>) -> impl FnOnce(io::Error) -> Error {
        let path = path.as_ref().to_path_buf();
        move |source| Error::Io { path, source }
    }

    pub fn file(path: impl AsRef<Path>) -> impl FnOnce(landseg_core::Error) -> Error {
        let path = path.as_ref().to_path_buf();
        move |source| Error::File { path, source }
    }

    /// Process exit status: 2 for problems the user can fix in arguments or
    /// input files, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        use io::ErrorKind as K;
        match self {
            Error::Usage(_) | Error::Image { .. } => 2,
            Error::Io { source, .. } => match source.kind() {
                K::NotFound | K::PermissionDenied | K::InvalidInput | K::InvalidData | K::UnexpectedEof => 2,
                _ => 1,
            },
            Error::Core(e) | Error::File { source: e, .. } => core_exit_code(e),
        }
    }
}

fn core_exit_code(e: &landseg_core::Error) -> u8 {
    use landseg_core::Error as E;
    match e {
        E::Stage { source, .. } => core_exit_code(source),
        E::Divergence { .. } => 1,
        _ => 2,
    }
}
