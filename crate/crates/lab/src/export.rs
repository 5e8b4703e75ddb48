//! Deterministic archives of run directories.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{LabError, Result};
use crate::manifest::{sha256_hex, RunManifest, CONFIG_FILE, MANIFEST_FILE};

pub const CHECKSUMS_FILE: &str = "SHA256SUMS";

#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub path: PathBuf,
    pub sha256: String,
    /// Archive members in order.
    pub members: Vec<String>,
}

fn incomplete(dir: &Path, reason: String) -> LabError {
    LabError::IncompleteRun {
        dir: dir.to_path_buf(),
        reason,
    }
}

fn read(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(incomplete(dir, format!("missing file `{name}`")));
    }
    fs::read(&path).map_err(|e| LabError::io(&path, e))
}

/// Archive members of a complete run directory, in archive order:
/// the manifest, the config, the checksum list, then reports by name.
pub fn bundle_members(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let manifest_bytes = read(dir, MANIFEST_FILE)?;
    let text = String::from_utf8(manifest_bytes.clone()).map_err(|_| incomplete(dir, "manifest is not UTF-8".into()))?;
    let manifest = RunManifest::parse(&text).map_err(|e| incomplete(dir, e.to_string()))?;
    let config = read(dir, CONFIG_FILE)?;
    let mut reports = Vec::new();
    for f in &manifest.files {
        let body = read(dir, &f.name)?;
        if sha256_hex(&body) != f.sha256 {
            return Err(incomplete(dir, format!("checksum mismatch for `{}`", f.name)));
        }
        reports.push((f.name.clone(), body));
    }
    reports.sort_by(|a, b| a.0.cmp(&b.0));

    let mut sums = String::new();
    for (name, body) in std::iter::once((CONFIG_FILE, &config))
        .chain(reports.iter().map(|(n, b)| (n.as_str(), b)))
        .chain(std::iter::once((MANIFEST_FILE, &manifest_bytes)))
    {
        sums.push_str(&format!("{}  {name}\n", sha256_hex(body)));
    }
    let mut out = vec![
        (MANIFEST_FILE.to_string(), manifest_bytes),
        (CONFIG_FILE.to_string(), config),
        (CHECKSUMS_FILE.to_string(), sums.into_bytes()),
    ];
    out.extend(reports);
    Ok(out)
}

/// Tar bytes with zeroed metadata so equal inputs give equal archives.
pub fn archive_bytes(prefix: &str, members: &[(String, Vec<u8>)]) -> Result<Vec<u8>> {
    let mut builder = tar::Builder::new(Vec::new());
    builder.mode(tar::HeaderMode::Deterministic);
    for (name, body) in members {
        let mut header = tar::Header::new_ustar();
        header.set_size(body.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(0);
        header.set_uid(0);
        header.set_gid(0);
        header.set_entry_type(tar::EntryType::Regular);
        builder
            .append_data(&mut header, format!("{prefix}/{name}"), body.as_slice())
            .map_err(|e| LabError::io(name, e))?;
    }
    builder.into_inner().map_err(|e| LabError::io(prefix, e))
}

/// Writes `<out>` (default `<dir>.tar`) from the complete run in `dir`.
pub fn export_bundle(dir: &Path, out: Option<&Path>) -> Result<Bundle> {
    let members = bundle_members(dir)?;
    let prefix = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let bytes = archive_bytes(&prefix, &members)?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| dir.with_extension("tar"));
    let tmp = path.with_extension("tar.partial");
    fs::write(&tmp, &bytes).map_err(|e| LabError::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        LabError::io(&path, e)
    })?;
    Ok(Bundle {
        path,
        sha256: sha256_hex(&bytes),
        members: members.into_iter().map(|(n, _)| n).collect(),
    })
}
