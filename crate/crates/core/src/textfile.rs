//! Shared pieces of the comma-separated table formats.

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub(crate) struct Metadata {
    pub fingerprint: Option<String>,
}

pub(crate) fn write_metadata(out: &mut String, fingerprint: Option<&str>) {
    if let Some(fp) = fingerprint {
        out.push_str("# fingerprint=");
        out.push_str(fp);
        out.push('\n');
    }
}

/// Splits `# key=value` lines from content lines; yields 1-based line numbers.
pub(crate) fn split_metadata(text: &str) -> (Metadata, impl Iterator<Item = (usize, &str)>) {
    let mut meta = Metadata::default();
    for line in text.lines() {
        let Some(rest) = line.strip_prefix('#') else { break };
        if let Some((key, value)) = rest.trim().split_once('=') {
            if key.trim() == "fingerprint" {
                meta.fingerprint = Some(value.trim().to_string());
            }
        }
    }
    let lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    (meta, lines)
}

pub(crate) fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains([',', '\n', '\r']) || id.starts_with('#') {
        return Err(Error::Data(format!("sample id `{id}` cannot be written to a table")));
    }
    Ok(())
}
