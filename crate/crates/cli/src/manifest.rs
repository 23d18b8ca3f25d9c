use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.txt";

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// Relative paths of every regular file under `root`, sorted, with `/`
/// separators.
pub fn list_files(root: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(root) {
        let entry = entry.with_context(|| format!("listing {}", root.display()))?;
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(root).expect("under root");
            out.push(
                rel.components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/"),
            );
        }
    }
    out.sort();
    Ok(out)
}

/// Hash over the names and contents of every file in a directory.
pub fn fingerprint(root: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    for rel in list_files(root)? {
        let data = std::fs::read(root.join(&rel)).with_context(|| format!("reading {rel}"))?;
        hasher.update(rel.as_bytes());
        hasher.update([0]);
        hasher.update((data.len() as u64).to_le_bytes());
        hasher.update(&data);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// `<sha256>  <path>` for each listed file, sorted by path, written to
/// `root/manifest.txt`.
pub fn write_manifest(root: &Path, files: &[String]) -> Result<String> {
    let mut files: Vec<&String> = files.iter().filter(|f| *f != MANIFEST_FILE).collect();
    files.sort();
    files.dedup();
    let mut text = String::new();
    for rel in files {
        let data = std::fs::read(root.join(rel)).with_context(|| format!("reading {rel}"))?;
        let _ = writeln!(text, "{}  {rel}", sha256_hex(&data));
    }
    std::fs::write(root.join(MANIFEST_FILE), &text).context("writing manifest")?;
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_lists_files_sorted() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("sub")).unwrap();
        std::fs::write(dir.path().join("b.txt"), "b").unwrap();
        std::fs::write(dir.path().join("sub/a.txt"), "a").unwrap();
        let files = list_files(dir.path()).unwrap();
        assert_eq!(files, ["b.txt", "sub/a.txt"]);
        let text = write_manifest(dir.path(), &files).unwrap();
        let paths: Vec<&str> = text.lines().map(|l| l.split("  ").nth(1).unwrap()).collect();
        assert_eq!(paths, ["b.txt", "sub/a.txt"]);
        let again = write_manifest(dir.path(), &list_files(dir.path()).unwrap()).unwrap();
        assert_eq!(again, text);
    }

    #[test]
    fn fingerprint_sees_content_and_names() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a"), "1").unwrap();
        let first = fingerprint(dir.path()).unwrap();
        std::fs::write(dir.path().join("a"), "2").unwrap();
        assert_ne!(fingerprint(dir.path()).unwrap(), first);
    }
}
