use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use awlm::io::SCHEMA_VERSION;

use crate::CliError;

/// Machine-readable output of every command. Field names are stable.
#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: &'static str,
    pub inputs_digest: String,
    pub config: Value,
    pub results: Value,
    pub diagnostics: Value,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(command: &'static str, inputs: &[&[u8]], config: impl Serialize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command,
            inputs_digest: digest(inputs),
            config: to_value(config),
            results: Value::Null,
            diagnostics: Value::Object(Default::default()),
            warnings: Vec::new(),
        }
    }

    pub fn write(&self, output: Option<&Path>) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("reports always serialize");
        text.push('\n');
        write_text(output, &text)
    }
}

pub fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

/// SHA-256 over the concatenated input bytes, hex encoded.
pub fn digest(inputs: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for bytes in inputs {
        hasher.update(bytes);
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn write_text(output: Option<&Path>, text: &str) -> Result<(), CliError> {
    match output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))
}
