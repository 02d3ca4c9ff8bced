//! Config files and resolution of flags > config file > defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::params::{canonical, Param, Spec, COMMON, META};
use crate::{CliError, SCHEMA_VERSION, VERSION};

pub const OUT_DIR_ENV: &str = "EXITDOM_OUT_DIR";

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    /// 1-based line, 0 for JSON sources.
    pub line: usize,
}

/// Parses a config file.
///
/// Accepted forms: plain `key = value` lines with `#` comments; an emitted
/// CSV whose `#!` header lines carry the config; an emitted JSON document.
pub fn load(path: &Path) -> Result<Vec<Entry>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    if text.trim_start().starts_with('{') {
        parse_json(&text, path)
    } else {
        parse_lines(&text, path)
    }
}

fn parse_lines(text: &str, path: &Path) -> Result<Vec<Entry>, CliError> {
    let embedded = text.lines().any(|l| l.starts_with("#!"));
    let mut entries: Vec<Entry> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = if embedded {
            match line.strip_prefix("#!") {
                Some(b) => b,
                None => continue,
            }
        } else {
            line.split('#').next().unwrap_or("")
        };
        let body = body.trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(CliError::Usage(format!(
                "config {} line {}: expected `key = value`, got {body:?}",
                path.display(),
                i + 1
            )));
        };
        push(&mut entries, key.trim(), value.trim(), i + 1, path)?;
    }
    Ok(entries)
}

fn parse_json(text: &str, path: &Path) -> Result<Vec<Entry>, CliError> {
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| CliError::Usage(format!("config {}: malformed JSON: {e}", path.display())))?;
    let mut entries = Vec::new();
    for meta in META {
        if let Some(v) = doc.get(meta) {
            push(&mut entries, meta, &json_text(v, meta, path)?, 0, path)?;
        }
    }
    let Some(config) = doc.get("config").and_then(Value::as_object) else {
        return Err(CliError::Usage(format!(
            "config {}: JSON has no `config` object",
            path.display()
        )));
    };
    for (key, v) in config {
        push(&mut entries, key, &json_text(v, key, path)?, 0, path)?;
    }
    Ok(entries)
}

fn json_text(v: &Value, key: &str, path: &Path) -> Result<String, CliError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        _ => Err(CliError::Usage(format!(
            "config {} key `{key}`: expected a string or number",
            path.display()
        ))),
    }
}

fn push(
    entries: &mut Vec<Entry>,
    key: &str,
    value: &str,
    line: usize,
    path: &Path,
) -> Result<(), CliError> {
    if entries.iter().any(|e| e.key == key) {
        return Err(CliError::Usage(format!(
            "config {} key `{key}`: given twice",
            path.display()
        )));
    }
    entries.push(Entry {
        key: key.to_string(),
        value: value.to_string(),
        line,
    });
    Ok(())
}

/// The run's settings after precedence is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub subcommand: &'static str,
    pub stochastic: bool,
    /// Echoed parameters in table order, canonical text.
    pub values: Vec<(&'static str, String)>,
    pub out_dir: String,
    pub format: String,
    pub threads: usize,
}

impl Resolved {
    pub fn get(&self, key: &str) -> &str {
        self.values
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v.as_str())
            .unwrap_or_else(|| panic!("parameter `{key}` is not defined for {}", self.subcommand))
    }

    pub fn float(&self, key: &str) -> f64 {
        self.get(key).parse().expect("validated float")
    }

    pub fn floats(&self, key: &str) -> Vec<f64> {
        self.get(key)
            .split(',')
            .map(|s| s.parse().expect("validated float"))
            .collect()
    }

    pub fn count(&self, key: &str) -> u64 {
        self.get(key).parse().expect("validated count")
    }

    /// Count that must fit a narrower integer type.
    pub fn narrow<T: TryFrom<u64>>(&self, key: &str) -> Result<T, CliError> {
        T::try_from(self.count(key))
            .map_err(|_| CliError::Usage(format!("invalid value for `--{key}`: out of range")))
    }

    pub fn switch(&self, key: &str) -> bool {
        self.get(key) == "true"
    }

    /// Header pairs: tool metadata followed by the parameters.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            ("subcommand", self.subcommand.to_string()),
            ("exitdom_version", VERSION.to_string()),
            ("schema_version", SCHEMA_VERSION.to_string()),
        ];
        if self.stochastic {
            out.push(("rng", exitdom::rng::RngStreamSpec::ALGORITHM.to_string()));
        }
        out.extend(self.values.iter().cloned());
        out
    }
}

/// Applies precedence: `flags` over `file` over `env_out_dir` (output
/// directory only) over table defaults.
pub fn resolve(
    spec: &Spec,
    flags: &BTreeMap<&'static str, String>,
    file: &[Entry],
    env_out_dir: Option<String>,
) -> Result<Resolved, CliError> {
    for e in file {
        let known = spec.params.iter().chain(&COMMON).any(|p| p.key == e.key) && e.key != "config";
        if META.contains(&e.key.as_str()) {
            check_meta(spec, e)?;
        } else if !known {
            return Err(CliError::Usage(format!(
                "config key `{}`{}: unknown key for {}",
                e.key,
                line_note(e),
                spec.name
            )));
        }
    }
    let lookup = |p: &Param| -> Result<Option<String>, CliError> {
        let raw = if let Some(v) = flags.get(p.key) {
            Some((v.clone(), String::new()))
        } else if let Some(e) = file.iter().find(|e| e.key == p.key) {
            Some((e.value.clone(), format!(" (config{})", line_note(e))))
        } else if p.key == "out-dir" && env_out_dir.is_some() {
            env_out_dir
                .clone()
                .map(|v| (v, format!(" (env {OUT_DIR_ENV})")))
        } else {
            p.default.map(|d| (d.to_string(), String::new()))
        };
        match raw {
            None => Ok(None),
            Some((raw, origin)) => canonical(p.kind, &raw).map(Some).map_err(|reason| {
                CliError::Usage(format!("invalid value for `--{}`{origin}: {reason}", p.key))
            }),
        }
    };
    let mut values = Vec::with_capacity(spec.params.len());
    for p in &spec.params {
        match lookup(p)? {
            Some(v) => values.push((p.key, v)),
            None => {
                return Err(CliError::Usage(format!(
                    "missing required `--{}` (flag or config key)",
                    p.key
                )))
            }
        }
    }
    let common = |key: &str| {
        let p = COMMON.iter().find(|p| p.key == key).expect("common flag");
        lookup(p).map(|v| v.expect("common flags have defaults"))
    };
    let out_dir = common("out-dir")?;
    let format = common("format")?;
    let threads = common("threads")?
        .parse::<usize>()
        .map_err(|_| CliError::Usage("invalid value for `--threads`: out of range".into()))?;
    if out_dir == "-" && format == "both" {
        return Err(CliError::Usage(
            "invalid value for `--format`: both needs a directory, not stdout (--out-dir -)".into(),
        ));
    }
    Ok(Resolved {
        subcommand: spec.name,
        stochastic: spec.stochastic,
        values,
        out_dir,
        format,
        threads,
    })
}

fn line_note(e: &Entry) -> String {
    if e.line > 0 {
        format!(" line {}", e.line)
    } else {
        String::new()
    }
}

fn check_meta(spec: &Spec, e: &Entry) -> Result<(), CliError> {
    let bad = |why: String| {
        Err(CliError::Usage(format!(
            "config key `{}`{}: {why}",
            e.key,
            line_note(e)
        )))
    };
    match e.key.as_str() {
        "subcommand" if e.value != spec.name => {
            bad(format!("file belongs to {}, not {}", e.value, spec.name))
        }
        "schema_version" if e.value != SCHEMA_VERSION.to_string() => bad(format!(
            "schema version {} is not supported (expected {SCHEMA_VERSION})",
            e.value
        )),
        "rng" if e.value != exitdom::rng::RngStreamSpec::ALGORITHM => {
            bad(format!("RNG algorithm {:?} is not available", e.value))
        }
        "exitdom_version" if e.value != VERSION => {
            log::warn!(
                "config was written by exitdom {}, running {VERSION}; outputs may differ",
                e.value
            );
            Ok(())
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::specs;
    use std::io::Write;

    fn spec(name: &str) -> Spec {
        specs().into_iter().find(|s| s.name == name).unwrap()
    }

    fn entry(key: &str, value: &str) -> Entry {
        Entry {
            key: key.into(),
            value: value.into(),
            line: 1,
        }
    }

    fn write_temp(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let s = spec("rw-survival");
        let mut flags = BTreeMap::new();
        flags.insert("p", "0.7".to_string());
        let file = vec![entry("p", "0.6"), entry("k", "3"), entry("horizon", "5")];
        let r = resolve(&s, &flags, &file, None).unwrap();
        assert_eq!(r.get("p"), "0.7");
        assert_eq!(r.get("k"), "3");
        assert_eq!(r.get("mode"), "float");
        assert_eq!(r.out_dir, ".");
    }

    #[test]
    fn env_only_replaces_the_default_out_dir() {
        let s = spec("bm-survival");
        let file = vec![entry("lambdas", "0"), entry("times", "1")];
        let r = resolve(&s, &BTreeMap::new(), &file, Some("env-dir".into())).unwrap();
        assert_eq!(r.out_dir, "env-dir");
        let mut with_file = file.clone();
        with_file.push(entry("out-dir", "file-dir"));
        let r = resolve(&s, &BTreeMap::new(), &with_file, Some("env-dir".into())).unwrap();
        assert_eq!(r.out_dir, "file-dir");
    }

    #[test]
    fn unknown_and_missing_keys_name_the_key() {
        let s = spec("rw-survival");
        let err = resolve(&s, &BTreeMap::new(), &[entry("colour", "red")], None).unwrap_err();
        assert!(matches!(&err, CliError::Usage(m) if m.contains("`colour`")));
        let err = resolve(&s, &BTreeMap::new(), &[entry("p", "0.6")], None).unwrap_err();
        assert!(matches!(&err, CliError::Usage(m) if m.contains("`--k`")));
        let err = resolve(&s, &BTreeMap::new(), &[entry("p", "2")], None).unwrap_err();
        assert!(matches!(&err, CliError::Usage(m) if m.contains("`--p`")));
    }

    #[test]
    fn meta_keys_are_checked() {
        let s = spec("rw-survival");
        let base = [entry("p", "0.6"), entry("k", "2"), entry("horizon", "2")];
        let mut file = base.to_vec();
        file.push(entry("subcommand", "bm-survival"));
        assert!(resolve(&s, &BTreeMap::new(), &file, None).is_err());
        let mut file = base.to_vec();
        file.push(entry("schema_version", "99"));
        assert!(resolve(&s, &BTreeMap::new(), &file, None).is_err());
        let mut file = base.to_vec();
        file.push(entry("subcommand", "rw-survival"));
        assert!(resolve(&s, &BTreeMap::new(), &file, None).is_ok());
    }

    #[test]
    fn plain_config_with_comments() {
        let f = write_temp("# walk\np = 3/5   # bias\n\nk=2\nhorizon = 4\n");
        let e = load(f.path()).unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!(
            e[0],
            Entry {
                key: "p".into(),
                value: "3/5".into(),
                line: 2
            }
        );
    }

    #[test]
    fn embedded_header_ignores_data_rows() {
        let f = write_temp("#! subcommand=rw-survival\n#! p=0.6\nn,value\n0,1\n");
        let e = load(f.path()).unwrap();
        assert_eq!(
            e.iter().map(|e| e.key.as_str()).collect::<Vec<_>>(),
            ["subcommand", "p"]
        );
    }

    #[test]
    fn json_document_config() {
        let f = write_temp(
            r#"{"schema_version": 1, "subcommand": "rw-survival", "config": {"p": "0.6", "k": "2"}, "result": {}}"#,
        );
        let e = load(f.path()).unwrap();
        let keys: Vec<_> = e.iter().map(|e| e.key.as_str()).collect();
        assert_eq!(keys, ["subcommand", "schema_version", "k", "p"]);
        assert_eq!(e[1].value, "1");
    }

    #[test]
    fn malformed_config_lines_fail() {
        let f = write_temp("p 0.6\n");
        assert!(matches!(load(f.path()), Err(CliError::Usage(m)) if m.contains("line 1")));
        let f = write_temp("p=0.6\np=0.7\n");
        assert!(matches!(load(f.path()), Err(CliError::Usage(m)) if m.contains("`p`")));
        assert!(matches!(
            load(Path::new("/nonexistent/exitdom.cfg")),
            Err(CliError::Io(_))
        ));
    }
}
