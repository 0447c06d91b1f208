//! Run directories: every invocation gets a fresh directory holding the
//! resolved configuration, content hashes of its inputs, and whatever
//! artifacts the command produces. Existing run directories are never
//! touched again.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Environment variable overriding the default `runs/` root.
pub const RUNS_DIR_ENV: &str = "CAMA_RUNS_DIR";

/// A freshly created, uniquely named run directory.
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    /// Creates `<root>/<timestamp>-<subcommand>/` (or `<root>/<name>/` when a
    /// fixed name is given), suffixing `-2`, `-3`, … on collision so no prior
    /// run is ever reused. The root is `runs/` unless [`RUNS_DIR_ENV`] is set.
    pub fn create(subcommand: &str, name: Option<&str>) -> Result<RunDir> {
        let root = std::env::var_os(RUNS_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        fs::create_dir_all(&root)
            .with_context(|| format!("creating run root {}", root.display()))?;
        let base = match name {
            Some(n) => n.to_string(),
            None => format!(
                "{}-{subcommand}",
                chrono::Local::now().format("%Y%m%d-%H%M%S")
            ),
        };
        let mut candidate = root.join(&base);
        let mut k = 1usize;
        loop {
            match fs::create_dir(&candidate) {
                Ok(()) => break,
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    k += 1;
                    candidate = root.join(format!("{base}-{k}"));
                }
                Err(e) => {
                    return Err(e)
                        .with_context(|| format!("creating run dir {}", candidate.display()));
                }
            }
        }
        log::info!("run directory: {}", candidate.display());
        Ok(RunDir { path: candidate })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Archives the fully resolved configuration as pretty JSON.
    pub fn write_config<T: Serialize>(&self, cfg: &T) -> Result<()> {
        write_json(&self.file("resolved_config.json"), cfg)
    }

    /// Records a content hash per named input so a run can be audited
    /// against the exact files it consumed. Directories hash recursively.
    pub fn log_inputs(&self, inputs: &[(&str, &Path)]) -> Result<()> {
        let mut map = serde_json::Map::new();
        for (name, path) in inputs {
            map.insert(
                (*name).to_string(),
                serde_json::json!({
                    "path": path.display().to_string(),
                    "sha256": sha256_path(path)?,
                }),
            );
        }
        write_json(&self.file("inputs.json"), &map)
    }

    /// Appends human-readable outcome lines to the run log.
    pub fn log_lines(&self, lines: &[String]) -> Result<()> {
        let path = self.file("log.txt");
        let mut text = lines.join("\n");
        text.push('\n');
        if path.exists() {
            let prev = fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            text = prev + &text;
        }
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Serializes `value` as pretty JSON at `path`.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// SHA-256 of a file's bytes, lowercase hex.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf).with_context(|| format!("reading {}", path.display()))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// SHA-256 over a directory tree: relative paths and file contents in
/// sorted order, so identical trees hash identically wherever they live.
pub fn sha256_dir(root: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect_files(root, root, &mut files)?;
    files.sort();
    let mut hasher = Sha256::new();
    for rel in files {
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0u8]);
        hasher.update(sha256_file(&root.join(&rel))?.as_bytes());
        hasher.update([0u8]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Hash of a file or of a directory tree.
pub fn sha256_path(path: &Path) -> Result<String> {
    if path.is_dir() {
        sha256_dir(path)
    } else {
        sha256_file(path)
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry
            .with_context(|| format!("listing {}", dir.display()))?
            .path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).unwrap_or(&path).to_path_buf());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dir_hash_ignores_location_but_not_content() {
        let tmp = tempfile::tempdir().unwrap();
        let a = tmp.path().join("a");
        let b = tmp.path().join("b");
        for d in [&a, &b] {
            fs::create_dir_all(d.join("sub")).unwrap();
            fs::write(d.join("x.txt"), "hello").unwrap();
            fs::write(d.join("sub/y.txt"), "world").unwrap();
        }
        assert_eq!(sha256_dir(&a).unwrap(), sha256_dir(&b).unwrap());
        fs::write(b.join("sub/y.txt"), "WORLD").unwrap();
        assert_ne!(sha256_dir(&a).unwrap(), sha256_dir(&b).unwrap());
    }

    #[test]
    fn run_dirs_never_collide() {
        let tmp = tempfile::tempdir().unwrap();
        // No other test in this binary touches the variable, so there is no
        // cross-thread interleaving to worry about.
        std::env::set_var(RUNS_DIR_ENV, tmp.path());
        let r1 = RunDir::create("synth", Some("fixed")).unwrap();
        let r2 = RunDir::create("synth", Some("fixed")).unwrap();
        assert_ne!(r1.path(), r2.path());
        assert!(r1.path().ends_with("fixed"));
        assert!(r2.path().ends_with("fixed-2"));
        std::env::remove_var(RUNS_DIR_ENV);
    }
}
