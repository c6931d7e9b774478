//! Runs a configured command inside a workspace.
//!
//! The command is run through `sh -c` with the workspace as working
//! directory. On exit 0 it must have written [`METRICS_FILE`] at the
//! workspace root: a flat JSON object of metric name to number, optionally
//! including `cost_gpu_hours`.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use super::{ExecRequest, ExecutionOutcome, Executor, ExecutorError, FailureCategory, MetricsRecord};

pub const METRICS_FILE: &str = "ablate_metrics.json";

const COST_KEY: &str = "cost_gpu_hours";

#[derive(Debug, Clone)]
pub struct ShellExecutor {
    /// Template; may reference `{workspace}`, `{candidate_id}` and `{seed}`.
    pub command: String,
    pub timeout: Duration,
}

impl ShellExecutor {
    pub fn new(command: impl Into<String>, timeout: Duration) -> Self {
        Self {
            command: command.into(),
            timeout,
        }
    }

    pub fn render(&self, workspace: &Path, candidate_id: &str, seed: u64) -> String {
        self.command
            .replace("{workspace}", &workspace.to_string_lossy())
            .replace("{candidate_id}", candidate_id)
            .replace("{seed}", &seed.to_string())
    }
}

/// Parsed metrics file: metric map plus the optional reported cost.
pub fn parse_metrics_file(text: &str) -> Result<(BTreeMap<String, f64>, Option<f64>), String> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
    let obj = value
        .as_object()
        .ok_or_else(|| "metrics file must be a JSON object".to_string())?;
    let mut metrics = BTreeMap::new();
    let mut cost = None;
    for (k, v) in obj {
        let x = v
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| format!("metric {k:?} is not a finite number"))?;
        if k == COST_KEY {
            if x < 0.0 {
                return Err("cost_gpu_hours must be non-negative".into());
            }
            cost = Some(x);
        } else {
            metrics.insert(k.clone(), x);
        }
    }
    Ok((metrics, cost))
}

fn drain<R: Read + Send + 'static>(reader: Option<R>) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut r) = reader {
            let _ = r.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

#[cfg(unix)]
fn kill_tree(child: &mut Child) {
    // the child leads its own process group, so this reaches grandchildren
    let pgid = child.id() as libc::pid_t;
    unsafe {
        libc::kill(-pgid, libc::SIGKILL);
    }
    let _ = child.kill();
}

#[cfg(not(unix))]
fn kill_tree(child: &mut Child) {
    let _ = child.kill();
}

impl Executor for ShellExecutor {
    fn uses_workspace(&self) -> bool {
        true
    }

    fn execute(&self, req: &ExecRequest<'_>) -> Result<ExecutionOutcome, ExecutorError> {
        let ws = req.workspace.ok_or(ExecutorError::NoWorkspace)?;
        let cid = req.candidate.candidate_id.as_str();
        let rendered = self.render(ws, cid, req.seed);
        let declared_cost = req.candidate.estimated_cost;

        let mut cmd = Command::new("sh");
        cmd.arg("-c")
            .arg(&rendered)
            .current_dir(ws)
            .env("ABLATE_CANDIDATE_ID", cid)
            .env("ABLATE_SEED", req.seed.to_string())
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        #[cfg(unix)]
        {
            use std::os::unix::process::CommandExt;
            cmd.process_group(0);
        }
        let started = Instant::now();
        let mut child = cmd.spawn().map_err(ExecutorError::Spawn)?;
        let out = drain(child.stdout.take());
        let err = drain(child.stderr.take());

        let status = loop {
            match child.try_wait().map_err(ExecutorError::Spawn)? {
                Some(status) => break Some(status),
                None if started.elapsed() >= self.timeout => {
                    kill_tree(&mut child);
                    let _ = child.wait();
                    break None;
                }
                None => thread::sleep(Duration::from_millis(5)),
            }
        };
        let wall = started.elapsed().as_secs_f64();
        let logs = vec![
            ("stdout.log".to_string(), out.join().unwrap_or_default()),
            ("stderr.log".to_string(), err.join().unwrap_or_default()),
        ];

        let metrics = match status {
            None => MetricsRecord::failed(
                FailureCategory::RuntimeFailure,
                format!("timed out after {:.3}s", self.timeout.as_secs_f64()),
                wall,
                declared_cost,
            ),
            Some(s) if !s.success() => MetricsRecord::failed(
                FailureCategory::RuntimeFailure,
                format!("command exited with {s}"),
                wall,
                declared_cost,
            ),
            Some(_) => {
                let path = ws.join(METRICS_FILE);
                match std::fs::read_to_string(&path) {
                    Err(e) => MetricsRecord::failed(
                        FailureCategory::EnvironmentFailure,
                        format!("cannot read {METRICS_FILE}: {e}"),
                        wall,
                        declared_cost,
                    ),
                    Ok(text) => match parse_metrics_file(&text) {
                        Err(reason) => MetricsRecord::failed(
                            FailureCategory::EnvironmentFailure,
                            reason,
                            wall,
                            declared_cost,
                        ),
                        Ok((metrics, cost)) => MetricsRecord::success(
                            metrics,
                            req.primary_metric,
                            wall,
                            cost.unwrap_or(wall / 3600.0),
                        ),
                    },
                }
            }
        };
        Ok(ExecutionOutcome { metrics, logs })
    }
}
