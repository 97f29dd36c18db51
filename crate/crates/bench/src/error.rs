use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum BenchError {
    Config(String),
    Io { path: PathBuf, source: std::io::Error },
    Core { context: String, source: tbeam_core::Error },
}

pub type BenchResult<T> = Result<T, BenchError>;

impl BenchError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub fn core(context: impl Into<String>, source: tbeam_core::Error) -> Self {
        Self::Core { context: context.into(), source }
    }

    /// Stable machine-readable category.
    pub fn category(&self) -> &'static str {
        use tbeam_core::Error as E;
        match self {
            Self::Config(_) => "config",
            Self::Io { .. } => "io",
            Self::Core { source, .. } => match source {
                E::Dimension(_) => "dimension",
                E::NotHermitian(_) | E::Numerical(_) => "numerical",
                E::AngleOutOfRange(_) | E::EmptyGrid | E::InvalidArgument(_) => "invalid-argument",
                E::InsufficientSnapshots(_) => "insufficient-snapshots",
                E::Parse(_) => "parse",
                E::Io(_) => "io",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 3,
            "io" => 4,
            "invalid-argument" => 5,
            "parse" => 6,
            "dimension" => 7,
            "numerical" => 8,
            _ => 9,
        }
    }
}

impl fmt::Display for BenchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "{m}"),
            Self::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Self::Core { context, source } => write!(f, "{context}: {source}"),
        }
    }
}

impl std::error::Error for BenchError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Config(_) => None,
            Self::Io { source, .. } => Some(source),
            Self::Core { source, .. } => Some(source),
        }
    }
}
