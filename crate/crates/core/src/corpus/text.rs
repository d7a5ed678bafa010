//! UTF-8 line files and `id<TAB>text` manifests.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw = raw.strip_prefix('\u{feff}').unwrap_or(&raw);
    Ok(raw.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
}

/// Non-empty lines only.
pub fn read_sentences(path: &Path) -> Result<Vec<String>> {
    Ok(read_lines(path)?.into_iter().filter(|l| !l.trim().is_empty()).collect())
}

pub fn write_lines<S: AsRef<str>>(path: &Path, lines: &[S]) -> Result<()> {
    let mut out = String::new();
    for l in lines {
        out.push_str(l.as_ref());
        out.push('\n');
    }
    write_string(path, &out)
}

pub fn write_string(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// `utt_id<TAB>text` rows.
pub fn read_transcripts(path: &Path) -> Result<Vec<(String, String)>> {
    let mut rows = Vec::new();
    for (n, line) in read_lines(path)?.into_iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::format("transcript manifest", format!("line {} has no tab", n + 1)))?;
        rows.push((id.to_string(), text.to_string()));
    }
    Ok(rows)
}

pub fn write_transcripts(path: &Path, rows: &[(String, String)]) -> Result<()> {
    let lines: Vec<String> = rows.iter().map(|(id, t)| format!("{id}\t{t}")).collect();
    write_lines(path, &lines)
}
