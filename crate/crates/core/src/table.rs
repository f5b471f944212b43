//! CSV tables with `# key=value` footer lines.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

fn csv_err(origin: &str, e: impl std::fmt::Display) -> Error {
    Error::Csv { origin: origin.to_string(), message: e.to_string() }
}

pub(crate) fn write_table<T: Serialize>(rows: &[T], footer: &[(&str, String)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| csv_err("output", e))?;
    }
    let bytes = w.into_inner().map_err(|e| csv_err("output", e))?;
    let mut text = String::from_utf8(bytes).map_err(|e| csv_err("output", e))?;
    if !footer.is_empty() {
        let fields: Vec<String> = footer.iter().map(|(k, v)| format!("{k}={v}")).collect();
        text.push_str(&format!("# {}\n", fields.join(" ")));
    }
    Ok(text)
}

/// Rows plus every `key=value` pair found on `#` lines.
pub(crate) fn read_table<T: DeserializeOwned>(
    text: &str,
    origin: &str,
) -> Result<(Vec<T>, BTreeMap<String, String>)> {
    let mut meta = BTreeMap::new();
    let mut body = String::new();
    for line in text.lines() {
        if let Some(rest) = line.trim_start().strip_prefix('#') {
            for kv in rest.split_whitespace() {
                if let Some((k, v)) = kv.split_once('=') {
                    meta.insert(k.to_string(), v.to_string());
                }
            }
        } else if !line.trim().is_empty() {
            body.push_str(line);
            body.push('\n');
        }
    }
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| csv_err(origin, e))?;
    Ok((rows, meta))
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
