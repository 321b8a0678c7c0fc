use std::fmt;

use ggseason::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Lib(Error),
    Config(String),
    Convergence(String),
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config(message.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(e) => match e {
                Error::Io(_) => EXIT_IO,
                Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => EXIT_PARSE,
                Error::Domain(_) | Error::DomainAt { .. } | Error::Singular(_) | Error::InsufficientData(_) => {
                    EXIT_CONVERGENCE
                }
                Error::Structure(_) | Error::Invalid(_) | Error::LayoutMismatch { .. } => EXIT_CONFIG,
            },
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Convergence(_) => EXIT_CONVERGENCE,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_IO => "io",
            EXIT_PARSE => "parse",
            EXIT_CONVERGENCE => "convergence",
            _ => "config",
        }
    }

    /// Single-line JSON for the error stream.
    pub fn to_json_line(&self) -> String {
        let mut obj = serde_json::json!({
            "error": self.kind(),
            "code": self.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::Lib(Error::Parse { line, .. }) = self {
            obj["line"] = serde_json::json!(line);
        }
        obj.to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Config(m) => write!(f, "invalid configuration: {m}"),
            CliError::Convergence(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_and_single_line() {
        let e = CliError::Lib(Error::Parse { line: 7, message: "bad\nvalue".into() });
        assert_eq!(e.exit_code(), 2);
        let line = e.to_json_line();
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["line"], 7);
        assert_eq!(v["error"], "parse");
        assert_eq!(CliError::config("x").exit_code(), 4);
        assert_eq!(CliError::Convergence("x".into()).exit_code(), 3);
        assert_eq!(CliError::from(std::io::Error::other("x")).exit_code(), 1);
        assert_eq!(CliError::Lib(Error::Structure("x".into())).exit_code(), 4);
    }
}
