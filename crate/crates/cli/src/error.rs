use gridest_core::GridError;

/// Exit codes. Anything not listed here exits with 1.
pub const EXIT_SYNTHESIS: i32 = 2;
pub const EXIT_SCHEMA: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, message)
    }

    pub fn schema(message: impl Into<String>) -> Self {
        Self::new(EXIT_SCHEMA, message)
    }

    /// Errors raised while reading a data file: anything malformed is a
    /// schema failure.
    pub fn reading(path: &std::path::Path, e: GridError) -> Self {
        Self::schema(format!("{}: {e}", path.display()))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        let code = match e {
            GridError::Synthesis(_) => EXIT_SYNTHESIS,
            GridError::Schema(_) | GridError::Csv(_) => EXIT_SCHEMA,
            _ => 1,
        };
        Self::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(1, e.to_string())
    }
}
