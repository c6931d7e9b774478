//! Randomized workspace isolation trials shared by the workspace suite and
//! the acceptance runner.

use std::collections::BTreeSet;
use std::path::Path;
use std::thread;

use ablate::workspace::{manifest_of, PatchOp, SnapshotStore, WorkspaceManager, WorkspaceState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::write_tree;

const FILES: &[(&str, &str)] = &[
    ("conf/train.cfg", "lr = 0.01\nhidden: 128\nuse_adv = true\nname = base\n"),
    ("model.py", "enc = Encoder()\ndec = Decoder()\n# dropout layer\nhead = Linear()\n"),
    ("README", "fixture repository\n"),
];

fn random_op(rng: &mut ChaCha8Rng) -> PatchOp {
    let file = |rng: &mut ChaCha8Rng, real: &str| -> String {
        match rng.gen_range(0..10) {
            0 => "missing.cfg".into(),
            1 => "../escape.cfg".into(),
            _ => real.into(),
        }
    };
    match rng.gen_range(0..4) {
        0 => PatchOp::SetKey {
            file: file(rng, "conf/train.cfg"),
            key: ["lr", "hidden", "use_adv", "nokey"][rng.gen_range(0..4)].into(),
            value: format!("v{}", rng.gen_range(0..100)),
        },
        1 => PatchOp::ScaleKey {
            file: file(rng, "conf/train.cfg"),
            key: ["lr", "hidden", "name"][rng.gen_range(0..3)].into(),
            factor: Some([0.5, 2.0, 3.0][rng.gen_range(0..3)]),
        },
        2 => PatchOp::ReplaceAnchored {
            file: file(rng, "model.py"),
            anchor: ["Encoder()", "Decoder()", "Transformer()"][rng.gen_range(0..3)].into(),
            replacement: "Identity()".into(),
        },
        _ => PatchOp::DeleteLines {
            file: file(rng, "model.py"),
            anchor: ["dropout", "head", "attention"][rng.gen_range(0..3)].into(),
        },
    }
}

#[derive(Debug, Default)]
pub struct IsolationStats {
    pub sequences: usize,
    pub applied: usize,
    pub rejected: usize,
}

/// Runs `sequences` random mutation sequences, `concurrency` workspaces at
/// a time. Returns the first isolation violation found.
pub fn run_isolation(
    root: &Path,
    seed: u64,
    sequences: usize,
    concurrency: usize,
) -> Result<IsolationStats, String> {
    let base = root.join("base");
    write_tree(&base, FILES);
    let store = SnapshotStore::open(root.join("store")).map_err(|e| e.to_string())?;
    let snap = store.snapshot(&base).map_err(|e| e.to_string())?;
    let manager = WorkspaceManager::new(store, root.join("work")).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = IsolationStats::default();

    let mut next = 0usize;
    while next < sequences {
        let batch: Vec<(usize, Vec<PatchOp>)> = (next..sequences.min(next + concurrency))
            .map(|i| {
                let n = rng.gen_range(1..=4);
                (i, (0..n).map(|_| random_op(&mut rng)).collect())
            })
            .collect();
        next += batch.len();

        let results: Vec<Result<(ablate::workspace::Workspace, bool, _), String>> =
            thread::scope(|s| {
                let handles: Vec<_> = batch
                    .iter()
                    .map(|(i, ops)| {
                        let (manager, snap) = (&manager, &snap);
                        s.spawn(move || {
                            let mut ws = manager
                                .create_workspace(snap, &format!("seq{i:05}").as_str().into())
                                .map_err(|e| e.to_string())?;
                            let ok = match ws.apply_mutation(ops) {
                                Ok(_) => true,
                                Err(e) if e.is_mapping_failure() => false,
                                Err(e) => return Err(e.to_string()),
                            };
                            let after = manifest_of(ws.path()).map_err(|e| e.to_string())?;
                            if !ok {
                                if after != snap.root_manifest {
                                    return Err(format!("seq{i}: failed patch changed the workspace"));
                                }
                                if ws.state() != WorkspaceState::Created {
                                    return Err(format!("seq{i}: failed patch changed state"));
                                }
                            } else {
                                let touched: BTreeSet<&str> = ops.iter().map(PatchOp::file).collect();
                                for (a, b) in after.iter().zip(&snap.root_manifest) {
                                    if a.path != b.path {
                                        return Err(format!("seq{i}: file set changed"));
                                    }
                                    if a.digest != b.digest && !touched.contains(a.path.as_str()) {
                                        return Err(format!("seq{i}: untouched file {} changed", a.path));
                                    }
                                }
                            }
                            Ok((ws, ok, after))
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().unwrap()).collect()
            });

        let mut done = Vec::new();
        for r in results {
            done.push(r?);
        }
        // no workspace observed another's writes after all of them finished
        for (ws, ok, after) in &done {
            let now = manifest_of(ws.path()).map_err(|e| e.to_string())?;
            if &now != after {
                return Err(format!("{} changed after its own mutation", ws.workspace_id));
            }
            if *ok {
                stats.applied += 1;
            } else {
                stats.rejected += 1;
            }
        }
        let base_now = manifest_of(&base).map_err(|e| e.to_string())?;
        if base_now != snap.root_manifest {
            return Err("base tree changed".into());
        }
        for (mut ws, _, _) in done {
            manager.destroy(&mut ws).map_err(|e| e.to_string())?;
        }
        stats.sequences += batch.len();
    }
    let reloaded = manager.store().load(&snap.snapshot_id).map_err(|e| e.to_string())?;
    if reloaded != snap {
        return Err("stored snapshot changed".into());
    }
    Ok(stats)
}
