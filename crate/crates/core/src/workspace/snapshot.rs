//! Content-addressed base snapshots.
//!
//! Layout under the store root:
//!
//! ```text
//! snapshots/<snapshot_id>/manifest
//! snapshots/objects/<sha256>
//! ```
//!
//! A manifest is one `"<sha256> <size> <relative path>"` line per regular
//! file, sorted by path; the snapshot id is the sha256 of the manifest text.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use super::WorkspaceError;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative path with `/` separators.
    pub path: String,
    pub digest: String,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseSnapshot {
    pub snapshot_id: String,
    pub root_manifest: Vec<ManifestEntry>,
}

impl BaseSnapshot {
    pub fn is_empty(&self) -> bool {
        self.root_manifest.is_empty()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> WorkspaceError + '_ {
    move |source| WorkspaceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Walks `dir` and returns the manifest of its regular files.
pub fn manifest_of(dir: &Path) -> Result<Vec<ManifestEntry>, WorkspaceError> {
    let mut out = Vec::new();
    for entry in WalkDir::new(dir).follow_links(false) {
        let entry = entry.map_err(|e| WorkspaceError::Unreadable {
            path: dir.to_path_buf(),
            reason: e.to_string(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(dir)
            .expect("walkdir yields children of root");
        let bytes = fs::read(entry.path()).map_err(io_err(entry.path()))?;
        out.push(ManifestEntry {
            path: rel_string(rel),
            digest: sha256_hex(&bytes),
            size: bytes.len() as u64,
        });
    }
    out.sort();
    Ok(out)
}

pub(crate) fn rel_string(rel: &Path) -> String {
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn manifest_text(entries: &[ManifestEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        s.push_str(&format!("{} {} {}\n", e.digest, e.size, e.path));
    }
    s
}

fn parse_manifest(text: &str) -> Option<Vec<ManifestEntry>> {
    text.lines()
        .map(|line| {
            let mut parts = line.splitn(3, ' ');
            let digest = parts.next()?.to_string();
            let size = parts.next()?.parse().ok()?;
            let path = parts.next()?.to_string();
            Some(ManifestEntry { path, digest, size })
        })
        .collect()
}

/// Append-only store of snapshots and their file objects.
#[derive(Debug, Clone)]
pub struct SnapshotStore {
    root: PathBuf,
}

impl SnapshotStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, WorkspaceError> {
        let root = root.into();
        let objects = root.join("snapshots").join("objects");
        fs::create_dir_all(&objects).map_err(io_err(&objects))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn object_path(&self, digest: &str) -> PathBuf {
        self.root.join("snapshots").join("objects").join(digest)
    }

    pub fn manifest_path(&self, snapshot_id: &str) -> PathBuf {
        self.root
            .join("snapshots")
            .join(snapshot_id)
            .join("manifest")
    }

    /// Records the current contents of `base_dir`. The base tree is only read.
    pub fn snapshot(&self, base_dir: &Path) -> Result<BaseSnapshot, WorkspaceError> {
        if !base_dir.is_dir() {
            return Err(WorkspaceError::Unreadable {
                path: base_dir.to_path_buf(),
                reason: "not a readable directory".into(),
            });
        }
        let manifest = manifest_of(base_dir)?;
        if manifest.is_empty() {
            log::warn!("snapshot of empty directory {}", base_dir.display());
        }
        for entry in &manifest {
            let object = self.object_path(&entry.digest);
            if object.exists() {
                continue;
            }
            let src = base_dir.join(&entry.path);
            let bytes = fs::read(&src).map_err(io_err(&src))?;
            if sha256_hex(&bytes) != entry.digest {
                return Err(WorkspaceError::Unreadable {
                    path: src,
                    reason: "file changed while snapshotting".into(),
                });
            }
            write_atomic(&object, &bytes)?;
        }
        let text = manifest_text(&manifest);
        let snapshot_id = sha256_hex(text.as_bytes());
        let mpath = self.manifest_path(&snapshot_id);
        if !mpath.exists() {
            write_atomic(&mpath, text.as_bytes())?;
        }
        Ok(BaseSnapshot {
            snapshot_id,
            root_manifest: manifest,
        })
    }

    pub fn load(&self, snapshot_id: &str) -> Result<BaseSnapshot, WorkspaceError> {
        let mpath = self.manifest_path(snapshot_id);
        let text = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
        let root_manifest = parse_manifest(&text).ok_or_else(|| WorkspaceError::Unreadable {
            path: mpath.clone(),
            reason: "corrupt manifest".into(),
        })?;
        Ok(BaseSnapshot {
            snapshot_id: snapshot_id.to_string(),
            root_manifest,
        })
    }

    /// Copies the snapshot's files into `dest`, which must not exist yet.
    pub(crate) fn materialize(
        &self,
        snapshot: &BaseSnapshot,
        dest: &Path,
    ) -> Result<(), WorkspaceError> {
        fs::create_dir_all(dest).map_err(io_err(dest))?;
        for entry in &snapshot.root_manifest {
            let target = dest.join(&entry.path);
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent).map_err(io_err(parent))?;
            }
            let object = self.object_path(&entry.digest);
            fs::copy(&object, &target).map_err(io_err(&object))?;
        }
        Ok(())
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), WorkspaceError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let tmp = path.with_extension(format!(
        "tmp-{}-{:?}",
        std::process::id(),
        std::thread::current().id()
    ));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}
