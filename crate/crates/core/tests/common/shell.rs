//! Fixture repository for the shell executor.

use std::path::Path;
use std::time::Duration;

use ablate::executor::{execute_in_workspace, MetricsRecord, ShellExecutor};
use ablate::model::{ArmId, CandidateSpec, Mutation, Target};
use ablate::workspace::{manifest_of, BaseSnapshot, PatchOp, SnapshotStore, WorkspaceManager};

use super::write_tree;

pub const SUCCESS: &str = "printf '{\"pearson\": 0.91, \"mse\": 0.03}' > ablate_metrics.json\n";
pub const EXIT_1: &str = "echo boom >&2\nexit 1\n";
pub const TIMEOUT: &str = "sleep 30\n";
pub const MISSING: &str = "echo done\n";
pub const BAD_JSON: &str = "echo 'not json' > ablate_metrics.json\n";
pub const NO_PRIMARY: &str = "printf '{\"mse\": 0.03}' > ablate_metrics.json\n";

pub struct Fixture {
    pub base: std::path::PathBuf,
    pub snap: BaseSnapshot,
    pub manager: WorkspaceManager,
    counter: std::cell::Cell<usize>,
}

impl Fixture {
    /// A repo with one script per behaviour under `scripts/`.
    pub fn new(root: &Path) -> Fixture {
        let base = root.join("repo");
        write_tree(
            &base,
            &[
                ("model.cfg", "dropout = 0.1\n"),
                ("scripts/success.sh", SUCCESS),
                ("scripts/exit1.sh", EXIT_1),
                ("scripts/timeout.sh", TIMEOUT),
                ("scripts/missing.sh", MISSING),
                ("scripts/bad_json.sh", BAD_JSON),
                ("scripts/no_primary.sh", NO_PRIMARY),
            ],
        );
        let store = SnapshotStore::open(root.join("store")).unwrap();
        let snap = store.snapshot(&base).unwrap();
        let manager = WorkspaceManager::new(store, root.join("work")).unwrap();
        Fixture {
            base,
            snap,
            manager,
            counter: std::cell::Cell::new(0),
        }
    }

    /// Runs `scripts/<name>.sh` in a fresh mutated workspace.
    pub fn run(&self, name: &str, timeout: Duration) -> MetricsRecord {
        let n = self.counter.get();
        self.counter.set(n + 1);
        let cand = CandidateSpec::new(
            vec![Target {
                component: "dropout".into(),
                mutation: Mutation::Scale { factor: n as f64 + 1.0 },
            }],
            ArmId::new("dropout"),
            String::new(),
            0.25,
        );
        let mut ws = self.manager.create_workspace(&self.snap, &cand.candidate_id).unwrap();
        ws.apply_mutation(&[PatchOp::ScaleKey {
            file: "model.cfg".into(),
            key: "dropout".into(),
            factor: Some(n as f64 + 1.0),
        }])
        .unwrap();
        let exec = ShellExecutor::new(format!("sh scripts/{name}.sh"), timeout);
        let out = execute_in_workspace(&exec, &cand, &mut ws, 0, "pearson").unwrap();
        self.manager.destroy(&mut ws).unwrap();
        out.metrics
    }

    pub fn base_unchanged(&self) -> bool {
        manifest_of(&self.base).unwrap() == self.snap.root_manifest
    }
}
