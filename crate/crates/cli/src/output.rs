//! Self-describing CSV and JSON outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::config::Resolved;
use crate::CliError;

/// Everything one subcommand produces.
#[derive(Debug, Clone, Default)]
pub struct Artifact {
    /// CSV body starting with its column header.
    pub csv: String,
    pub result: Value,
    /// Human summary for the terminal.
    pub summary: String,
    /// Extra CSV bodies, written as `<subcommand>-<suffix>.csv`.
    pub extras: Vec<(&'static str, String)>,
    /// Set when a tolerance or dominance check failed.
    pub failure: Option<String>,
}

pub fn csv_document(resolved: &Resolved, body: &str) -> String {
    let mut out = String::new();
    for (k, v) in resolved.echo() {
        out.push_str(&format!("#! {k}={v}\n"));
    }
    out.push_str(body);
    out
}

pub fn json_document(resolved: &Resolved, result: &Value) -> String {
    let mut doc = Map::new();
    let mut config = Map::new();
    for (k, v) in resolved.echo() {
        match k {
            "subcommand" | "exitdom_version" | "rng" => {
                doc.insert(k.into(), json!(v));
            }
            "schema_version" => {
                doc.insert(k.into(), json!(crate::SCHEMA_VERSION));
            }
            _ => {
                config.insert(k.into(), json!(v));
            }
        }
    }
    doc.insert("config".into(), Value::Object(config));
    doc.insert("result".into(), result.clone());
    let mut text =
        serde_json::to_string_pretty(&Value::Object(doc)).expect("JSON values serialize");
    text.push('\n');
    text
}

/// Quotes a CSV field when it holds a separator, quote or newline.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes the artifact; returns the paths written (empty for stdout).
pub fn emit(
    resolved: &Resolved,
    artifact: &Artifact,
    stdout: &mut dyn Write,
) -> Result<Vec<PathBuf>, CliError> {
    let want_csv = resolved.format != "json";
    let want_json = resolved.format != "csv";
    if resolved.out_dir == "-" {
        let text = if want_csv {
            csv_document(resolved, &artifact.csv)
        } else {
            json_document(resolved, &artifact.result)
        };
        stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(format!("cannot write to stdout: {e}")))?;
        return Ok(Vec::new());
    }
    let dir = Path::new(&resolved.out_dir);
    fs::create_dir_all(dir).map_err(|e| {
        CliError::Io(format!(
            "cannot create output directory {}: {e}",
            dir.display()
        ))
    })?;
    let mut files = Vec::new();
    if want_csv {
        files.push((
            format!("{}.csv", resolved.subcommand),
            csv_document(resolved, &artifact.csv),
        ));
    }
    if want_json {
        files.push((
            format!("{}.json", resolved.subcommand),
            json_document(resolved, &artifact.result),
        ));
    }
    for (suffix, body) in &artifact.extras {
        files.push((
            format!("{}-{suffix}.csv", resolved.subcommand),
            csv_document(resolved, body),
        ));
    }
    let mut written = Vec::with_capacity(files.len());
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}
