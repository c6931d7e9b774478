//! Isolated, disposable per-candidate workspaces.
//!
//! A base tree is snapshotted once into a content-addressed store; each
//! candidate gets its own materialized copy, mutated by declarative patches,
//! executed, harvested into the run archive and destroyed. Workspace
//! lifecycles only move forward:
//! `Created -> Mutated -> Executed -> Harvested -> Destroyed`
//! (destroy is allowed from any live state).

mod patch;
mod snapshot;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use globset::{Glob, GlobSetBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use patch::{instantiate, AppliedPatch, PatchOp};
pub use snapshot::{manifest_of, sha256_hex, BaseSnapshot, ManifestEntry, SnapshotStore};

use crate::model::CandidateId;

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("i/o error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot read {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
    #[error("cannot {op} a workspace in state {state:?}")]
    InvalidState { op: &'static str, state: WorkspaceState },
    #[error("workspace path {0} already in use")]
    Collision(PathBuf),
    #[error("anchor {anchor:?} not found in {file}")]
    AnchorNotFound { file: String, anchor: String },
    #[error("key {key:?} not found in {file}")]
    KeyNotFound { file: String, key: String },
    #[error("value {value:?} of key {key:?} in {file} is not numeric")]
    NotNumeric {
        file: String,
        key: String,
        value: String,
    },
    #[error("patch targets missing file {0}")]
    FileMissing(String),
    #[error("patch path {0:?} escapes the workspace")]
    UnsafePath(String),
    #[error("patch template error: {0}")]
    Template(String),
    #[error("invalid artifact glob: {0}")]
    Glob(String),
}

impl WorkspaceError {
    /// True for errors where the mutation could not be mapped onto the code.
    pub fn is_mapping_failure(&self) -> bool {
        matches!(
            self,
            WorkspaceError::AnchorNotFound { .. }
                | WorkspaceError::KeyNotFound { .. }
                | WorkspaceError::NotNumeric { .. }
                | WorkspaceError::FileMissing(_)
                | WorkspaceError::UnsafePath(_)
                | WorkspaceError::Template(_)
        )
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> WorkspaceError + '_ {
    move |source| WorkspaceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkspaceState {
    Created,
    Mutated,
    Executed,
    Harvested,
    Destroyed,
}

#[derive(Debug)]
pub struct Workspace {
    pub workspace_id: String,
    pub candidate_id: CandidateId,
    path: PathBuf,
    state: WorkspaceState,
    pub snapshot_id: String,
    pub applied_patch: Option<AppliedPatch>,
}

impl Workspace {
    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn state(&self) -> WorkspaceState {
        self.state
    }

    fn require(&self, op: &'static str, state: WorkspaceState) -> Result<(), WorkspaceError> {
        if self.state == state {
            Ok(())
        } else {
            Err(WorkspaceError::InvalidState {
                op,
                state: self.state,
            })
        }
    }

    /// Applies all ops or none. On success the state becomes `Mutated` and
    /// the diff against the snapshot is recorded.
    pub fn apply_mutation(&mut self, ops: &[PatchOp]) -> Result<&AppliedPatch, WorkspaceError> {
        self.require("mutate", WorkspaceState::Created)?;
        let mut before = BTreeMap::new();
        for op in ops {
            patch::check_relative(op.file())?;
            let file = op.file().to_string();
            if before.contains_key(&file) {
                continue;
            }
            let full = self.path.join(&file);
            if !full.is_file() {
                return Err(WorkspaceError::FileMissing(file));
            }
            let text = fs::read_to_string(&full).map_err(io_err(&full))?;
            before.insert(file, text);
        }
        let mut after = before.clone();
        patch::apply_ops(&mut after, ops)?;

        for (file, text) in &after {
            if before.get(file) != Some(text) {
                let full = self.path.join(file);
                fs::write(&full, text).map_err(io_err(&full))?;
            }
        }
        let (diff, hunks, files) = patch::diff_files(&before, &after);
        self.applied_patch = Some(AppliedPatch {
            ops: ops.to_vec(),
            diff,
            hunks,
            files,
        });
        self.state = WorkspaceState::Mutated;
        Ok(self.applied_patch.as_ref().expect("just set"))
    }

    /// Called by an executor once the candidate has run.
    pub fn mark_executed(&mut self) -> Result<(), WorkspaceError> {
        self.require("execute", WorkspaceState::Mutated)?;
        self.state = WorkspaceState::Executed;
        Ok(())
    }

    /// Copies matching artifacts, the diff and `logs` into `archive_dir`.
    /// Globs matching nothing are recorded in the bundle, not treated as
    /// errors.
    pub fn harvest(
        &mut self,
        archive_dir: &Path,
        artifact_globs: &[String],
        logs: &[(String, String)],
    ) -> Result<ArtifactBundle, WorkspaceError> {
        self.require("harvest", WorkspaceState::Executed)?;
        let artifacts_dir = archive_dir.join("artifacts");
        let logs_dir = archive_dir.join("logs");
        fs::create_dir_all(&artifacts_dir).map_err(io_err(&artifacts_dir))?;
        fs::create_dir_all(&logs_dir).map_err(io_err(&logs_dir))?;

        let mut matchers = Vec::new();
        for g in artifact_globs {
            let glob = Glob::new(g).map_err(|e| WorkspaceError::Glob(e.to_string()))?;
            let mut b = GlobSetBuilder::new();
            b.add(glob);
            matchers.push((g.clone(), b.build().map_err(|e| WorkspaceError::Glob(e.to_string()))?));
        }
        let mut collected = BTreeSet::new();
        let mut hit = vec![false; matchers.len()];
        for entry in manifest_of(&self.path)? {
            for (i, (_, set)) in matchers.iter().enumerate() {
                if set.is_match(&entry.path) {
                    hit[i] = true;
                    collected.insert(entry.path.clone());
                }
            }
        }
        for rel in &collected {
            let src = self.path.join(rel);
            let dst = artifacts_dir.join(rel);
            if let Some(parent) = dst.parent() {
                fs::create_dir_all(parent).map_err(io_err(parent))?;
            }
            fs::copy(&src, &dst).map_err(io_err(&src))?;
        }
        let missing: Vec<String> = matchers
            .iter()
            .zip(&hit)
            .filter(|(_, h)| !**h)
            .map(|((g, _), _)| g.clone())
            .collect();
        if collected.is_empty() {
            log::warn!(
                "workspace {} produced no declared artifacts",
                self.workspace_id
            );
        }

        let diff = self
            .applied_patch
            .as_ref()
            .map(|p| p.diff.clone())
            .unwrap_or_default();
        let diff_path = archive_dir.join("diff.patch");
        fs::write(&diff_path, &diff).map_err(io_err(&diff_path))?;
        let mut log_names = Vec::new();
        for (name, content) in logs {
            patch::check_relative(name)?;
            let p = logs_dir.join(name);
            fs::write(&p, content).map_err(io_err(&p))?;
            log_names.push(name.clone());
        }
        self.state = WorkspaceState::Harvested;
        Ok(ArtifactBundle {
            archive_dir: archive_dir.to_path_buf(),
            artifacts: collected.into_iter().collect(),
            diff_path,
            logs: log_names,
            missing,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactBundle {
    pub archive_dir: PathBuf,
    pub artifacts: Vec<String>,
    pub diff_path: PathBuf,
    pub logs: Vec<String>,
    /// Declared globs that matched nothing.
    pub missing: Vec<String>,
}

/// Creates and tears down workspaces under one work root.
#[derive(Debug)]
pub struct WorkspaceManager {
    store: SnapshotStore,
    work_root: PathBuf,
    live: Mutex<BTreeSet<PathBuf>>,
}

impl WorkspaceManager {
    pub fn new(store: SnapshotStore, work_root: impl Into<PathBuf>) -> Result<Self, WorkspaceError> {
        let work_root = work_root.into();
        fs::create_dir_all(&work_root).map_err(io_err(&work_root))?;
        Ok(Self {
            store,
            work_root,
            live: Mutex::new(BTreeSet::new()),
        })
    }

    pub fn store(&self) -> &SnapshotStore {
        &self.store
    }

    pub fn work_root(&self) -> &Path {
        &self.work_root
    }

    /// Materializes a fresh copy of `snapshot` for `candidate`.
    pub fn create_workspace(
        &self,
        snapshot: &BaseSnapshot,
        candidate: &CandidateId,
    ) -> Result<Workspace, WorkspaceError> {
        let workspace_id = format!("ws-{candidate}");
        let path = self.work_root.join(&workspace_id);
        {
            let mut live = self.live.lock().expect("live set lock");
            if live.contains(&path) || path.exists() {
                return Err(WorkspaceError::Collision(path));
            }
            live.insert(path.clone());
        }
        if let Err(e) = self.store.materialize(snapshot, &path) {
            let _ = fs::remove_dir_all(&path);
            self.live.lock().expect("live set lock").remove(&path);
            return Err(e);
        }
        Ok(Workspace {
            workspace_id,
            candidate_id: candidate.clone(),
            path,
            state: WorkspaceState::Created,
            snapshot_id: snapshot.snapshot_id.clone(),
            applied_patch: None,
        })
    }

    /// Removes the workspace directory. Idempotent; the workspace is
    /// logically destroyed even when removal fails.
    pub fn destroy(&self, ws: &mut Workspace) -> Result<(), WorkspaceError> {
        if ws.state == WorkspaceState::Destroyed {
            return Ok(());
        }
        ws.state = WorkspaceState::Destroyed;
        self.live.lock().expect("live set lock").remove(&ws.path);
        match fs::remove_dir_all(&ws.path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(()),
            Err(e) => {
                log::error!("failed to remove workspace {}: {e}", ws.path.display());
                Err(WorkspaceError::Io {
                    path: ws.path.clone(),
                    source: e,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("base");
        fs::create_dir_all(base.join("conf")).unwrap();
        fs::write(base.join("conf/train.cfg"), "use_adv=true\nhidden=128\n").unwrap();
        fs::write(base.join("model.py"), "x = Encoder()\n").unwrap();
        fs::write(base.join("README"), "hello\n").unwrap();
        (dir, base)
    }

    fn manager(dir: &Path) -> WorkspaceManager {
        let store = SnapshotStore::open(dir.join("store")).unwrap();
        WorkspaceManager::new(store, dir.join("work")).unwrap()
    }

    #[test]
    fn snapshot_counts_files_and_is_stable() {
        let (dir, base) = base();
        let m = manager(dir.path());
        let a = m.store().snapshot(&base).unwrap();
        let b = m.store().snapshot(&base).unwrap();
        assert_eq!(a.root_manifest.len(), 3);
        assert_eq!(a.snapshot_id, b.snapshot_id);
        fs::write(base.join("README"), "changed\n").unwrap();
        let c = m.store().snapshot(&base).unwrap();
        assert_ne!(a.snapshot_id, c.snapshot_id);
        assert_eq!(m.store().load(&a.snapshot_id).unwrap(), a);
    }

    #[test]
    fn toggle_patch_one_hunk() {
        let (dir, base) = base();
        let m = manager(dir.path());
        let snap = m.store().snapshot(&base).unwrap();
        let mut ws = m.create_workspace(&snap, &"c1".into()).unwrap();
        let applied = ws
            .apply_mutation(&[PatchOp::SetKey {
                file: "conf/train.cfg".into(),
                key: "use_adv".into(),
                value: "false".into(),
            }])
            .unwrap()
            .clone();
        assert_eq!(applied.hunks, 1);
        let text = fs::read_to_string(ws.path().join("conf/train.cfg")).unwrap();
        assert!(text.contains("use_adv=false"));
        assert_eq!(ws.state(), WorkspaceState::Mutated);
    }

    #[test]
    fn failed_patch_is_atomic() {
        let (dir, base) = base();
        let m = manager(dir.path());
        let snap = m.store().snapshot(&base).unwrap();
        let mut ws = m.create_workspace(&snap, &"c1".into()).unwrap();
        let err = ws
            .apply_mutation(&[
                PatchOp::SetKey {
                    file: "conf/train.cfg".into(),
                    key: "use_adv".into(),
                    value: "false".into(),
                },
                PatchOp::ReplaceAnchored {
                    file: "model.py".into(),
                    anchor: "Decoder()".into(),
                    replacement: "Identity()".into(),
                },
            ])
            .unwrap_err();
        assert!(err.is_mapping_failure());
        assert_eq!(manifest_of(ws.path()).unwrap(), snap.root_manifest);
        assert_eq!(ws.state(), WorkspaceState::Created);
    }

    #[test]
    fn harvest_state_machine() {
        let (dir, base) = base();
        let m = manager(dir.path());
        let snap = m.store().snapshot(&base).unwrap();
        let mut ws = m.create_workspace(&snap, &"c1".into()).unwrap();
        let archive = dir.path().join("archive");
        assert!(ws.harvest(&archive, &[], &[]).is_err());
        ws.apply_mutation(&[]).unwrap();
        ws.mark_executed().unwrap();
        fs::write(ws.path().join("ablate_metrics.json"), "{}").unwrap();
        let bundle = ws
            .harvest(
                &archive,
                &["ablate_metrics.json".into(), "*.log".into()],
                &[("stdout.log".into(), "ok".into())],
            )
            .unwrap();
        assert_eq!(bundle.artifacts, vec!["ablate_metrics.json".to_string()]);
        assert_eq!(bundle.missing, vec!["*.log".to_string()]);
        assert!(archive.join("diff.patch").exists());
        assert!(archive.join("logs/stdout.log").exists());
        assert!(matches!(
            ws.harvest(&archive, &[], &[]),
            Err(WorkspaceError::InvalidState { .. })
        ));
    }

    #[test]
    fn destroy_is_idempotent_and_allows_recreate() {
        let (dir, base) = base();
        let m = manager(dir.path());
        let snap = m.store().snapshot(&base).unwrap();
        let mut ws = m.create_workspace(&snap, &"c1".into()).unwrap();
        assert!(matches!(
            m.create_workspace(&snap, &"c1".into()),
            Err(WorkspaceError::Collision(_))
        ));
        m.destroy(&mut ws).unwrap();
        m.destroy(&mut ws).unwrap();
        assert!(!ws.path().exists());
        let again = m.create_workspace(&snap, &"c1".into()).unwrap();
        assert_eq!(manifest_of(again.path()).unwrap(), snap.root_manifest);
    }

    #[test]
    fn destroy_error_is_surfaced() {
        let (dir, base) = base();
        let m = manager(dir.path());
        let snap = m.store().snapshot(&base).unwrap();
        let mut ws = m.create_workspace(&snap, &"c1".into()).unwrap();
        // a file squatting on the workspace path makes removal fail
        fs::remove_dir_all(ws.path()).unwrap();
        fs::write(ws.path(), "busy").unwrap();
        assert!(m.destroy(&mut ws).is_err());
        assert_eq!(ws.state(), WorkspaceState::Destroyed);
    }
}
