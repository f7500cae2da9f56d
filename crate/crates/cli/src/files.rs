use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{usage_err, CliResult, UsageExt};

/// Reads one JSON value per nonempty line. Malformed lines are reported with
/// their line number as input errors.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let file = File::open(path).usage_ctx(format!("cannot read input {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.usage_ctx(format!("{}:{}", path.display(), i + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).usage_ctx(format!("{}:{}: malformed record", path.display(), i + 1))?);
    }
    Ok(out)
}

/// The first nonempty line parsed as JSON, used to tell dataset kinds apart.
pub fn first_json_line(path: &Path) -> CliResult<Option<serde_json::Value>> {
    let file = File::open(path).usage_ctx(format!("cannot read input {}", path.display()))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.usage_ctx(format!("{}:{}", path.display(), i + 1))?;
        if !line.trim().is_empty() {
            return serde_json::from_str(&line)
                .usage_ctx(format!("{}:{}: malformed record", path.display(), i + 1))
                .map(Some);
        }
    }
    Ok(None)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// File name without its last extension.
pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into())
}

/// Distinct stems for a list of inputs, since outputs are named after them.
pub fn unique_stems(paths: &[std::path::PathBuf]) -> CliResult<Vec<String>> {
    let mut seen = HashSet::new();
    paths
        .iter()
        .map(|p| {
            let s = stem(p);
            if seen.insert(s.clone()) {
                Ok(s)
            } else {
                Err(usage_err(format!("two inputs share the name {s:?}; outputs would collide")))
            }
        })
        .collect()
}

/// Endpoint names made safe for file names.
pub fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}
