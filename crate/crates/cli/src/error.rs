use meshforge::pipeline::{ConfigError, PipelineError};
use serde::Serialize;

/// A failure reported to the user, with a stable machine-readable code.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
    pub offset: Option<usize>,
}

#[derive(Serialize)]
pub struct ErrorBody<'a> {
    pub code: &'a str,
    pub message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        CliError { code, message: message.into(), offset: None }
    }

    pub fn body(&self) -> ErrorBody<'_> {
        ErrorBody { code: self.code, message: &self.message, offset: self.offset }
    }

    pub fn exit_code(&self) -> i32 {
        match self.code {
            "invalid_config" | "usage" => 3,
            "parse_error" | "invalid_input" | "empty_query" => 4,
            "io" => 5,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let code = match e {
            ConfigError::Io(_) => "io",
            _ => "invalid_config",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(c) => c.into(),
            PipelineError::Parse { ref source, .. } => {
                let offset = source.offset();
                CliError { code: "parse_error", message: e.to_string(), offset }
            }
            PipelineError::Defragment { .. } => CliError::new("empty_query", e.to_string()),
            PipelineError::Io(_) => CliError::new("io", e.to_string()),
            PipelineError::Record { .. }
            | PipelineError::FragmentCount { .. }
            | PipelineError::Thesaurus(_)
            | PipelineError::Embed(_)
            | PipelineError::Retrieval(_)
            | PipelineError::Ltr(_) => CliError::new("invalid_input", e.to_string()),
            PipelineError::Refine(_) => CliError::new("invalid_config", e.to_string()),
            PipelineError::Suggest(_) => CliError::new("suggester_failed", e.to_string()),
            PipelineError::Eval(_) => CliError::new("invalid_input", e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new("io", e.to_string())
    }
}
