//! Report envelope and exit-code mapping.

use serde::Serialize;
use serde_json::Value;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { code: EXIT_NUMERICAL, message: message.into() }
    }
}

/// What a handler produced: the payload and whether the queried verdict holds.
pub struct Outcome {
    pub result: Value,
    pub positive: bool,
}

impl Outcome {
    pub fn new(result: impl Serialize, positive: bool) -> Result<Self, CliError> {
        let result = serde_json::to_value(result).map_err(|e| CliError::numerical(format!("serialization: {e}")))?;
        Ok(Self { result, positive })
    }
}

#[derive(Serialize)]
pub struct Report {
    pub command: Vec<String>,
    pub inputs_digest: String,
    pub seed: u64,
    pub tol: f64,
    pub status: &'static str,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

pub fn status_name(code: i32) -> &'static str {
    match code {
        EXIT_PASS => "pass",
        EXIT_NEGATIVE => "negative",
        EXIT_USAGE => "usage_error",
        _ => "numerical_error",
    }
}

