use std::fs;
use std::io::Write;
use std::path::Path;

use crate::config::{CliError, Context};

/// Writes `name` inside `dir` by writing a temporary sibling and renaming it
/// over the target.
pub fn write_atomic(
    dir: &Path,
    name: &str,
    fill: impl FnOnce(&mut Vec<u8>) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let mut buf = Vec::new();
    fill(&mut buf)?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).context(format!("creating {}", tmp.display()))?;
    f.write_all(&buf)
        .context(format!("writing {}", tmp.display()))?;
    f.sync_all().context(format!("syncing {}", tmp.display()))?;
    drop(f);
    fs::rename(&tmp, &target).context(format!("renaming to {}", target.display()))?;
    log::info!("wrote {}", target.display());
    Ok(())
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    write_atomic(dir, name, |buf| {
        buf.extend_from_slice(text.as_bytes());
        Ok(())
    })
}

pub fn json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CliError::Core {
            context: "serializing output".into(),
            source: sdrf::Error::Format(e.to_string()),
        })
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).context(format!("creating {}", dir.display()))
}
