use std::fmt;

/// Failure of a CLI run, with a stable exit code and a JSON rendering.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Run(noarb_core::Error),
    Io(String),
    /// A statistical check the run depends on rejected its hypothesis.
    Statistical(String),
    /// `reproduce` found verdicts that differ from the expected table.
    Deviation(Vec<String>),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Run(_) => "run",
            CliError::Io(_) => "io",
            CliError::Statistical(_) => "statistical",
            CliError::Deviation(_) => "deviation",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 3,
            CliError::Io(_) => 4,
            CliError::Statistical(_) => 5,
            CliError::Deviation(_) => 6,
        }
    }

    pub fn to_json(&self) -> String {
        let mut obj = serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::Deviation(d) = self {
            obj["deviations"] = serde_json::json!(d);
        }
        obj.to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "invalid configuration: {m}"),
            CliError::Run(e) => write!(f, "run failed: {e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Statistical(m) => write!(f, "statistical check failed: {m}"),
            CliError::Deviation(d) => write!(f, "{} verdict(s) differ from the expected table", d.len()),
        }
    }
}

impl std::error::Error for CliError {}

impl From<noarb_core::Error> for CliError {
    fn from(e: noarb_core::Error) -> Self {
        CliError::Run(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
