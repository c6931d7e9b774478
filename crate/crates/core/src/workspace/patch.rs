//! Declarative patches applied inside a workspace.

use std::collections::BTreeMap;
use std::path::{Component as PathComponent, Path};

use serde::{Deserialize, Serialize};
use similar::TextDiff;

use super::WorkspaceError;
use crate::model::Mutation;

/// One patch operation. File paths are relative to the workspace root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PatchOp {
    /// Rewrites the value of a `key = value` or `key: value` line.
    SetKey {
        file: String,
        key: String,
        value: String,
    },
    /// Multiplies the numeric value of a key line. Without an explicit
    /// factor the candidate's scale factor is used.
    ScaleKey {
        file: String,
        key: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        factor: Option<f64>,
    },
    /// Replaces the first occurrence of `anchor`.
    ReplaceAnchored {
        file: String,
        anchor: String,
        replacement: String,
    },
    /// Deletes every line containing `anchor`.
    DeleteLines { file: String, anchor: String },
}

impl PatchOp {
    pub fn file(&self) -> &str {
        match self {
            PatchOp::SetKey { file, .. }
            | PatchOp::ScaleKey { file, .. }
            | PatchOp::ReplaceAnchored { file, .. }
            | PatchOp::DeleteLines { file, .. } => file,
        }
    }
}

/// The diff of a mutation against the snapshot.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AppliedPatch {
    pub ops: Vec<PatchOp>,
    /// Unified diff, files in path order.
    pub diff: String,
    pub hunks: usize,
    pub files: Vec<String>,
}

/// Substitutes mutation placeholders into a patch template.
pub fn instantiate(template: &[PatchOp], mutation: &Mutation) -> Result<Vec<PatchOp>, WorkspaceError> {
    let mut vars: BTreeMap<&str, String> = BTreeMap::new();
    match mutation {
        Mutation::Toggle => {}
        Mutation::Scale { factor } => {
            vars.insert("factor", factor.to_string());
        }
        Mutation::Replace { alternative } => {
            vars.insert("alternative", alternative.clone());
        }
        Mutation::ParamGrid { param, value } => {
            vars.insert("param", param.clone());
            let v = match value {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            vars.insert("value", v);
        }
    }
    let subst = |s: &str| -> String {
        let mut out = s.to_string();
        for (k, v) in &vars {
            out = out.replace(&format!("{{{k}}}"), v);
        }
        out
    };
    template
        .iter()
        .map(|op| {
            Ok(match op {
                PatchOp::SetKey { file, key, value } => PatchOp::SetKey {
                    file: file.clone(),
                    key: subst(key),
                    value: subst(value),
                },
                PatchOp::ScaleKey { file, key, factor } => {
                    let factor = match (factor, mutation) {
                        (Some(f), _) => *f,
                        (None, Mutation::Scale { factor }) => *factor,
                        (None, other) => {
                            return Err(WorkspaceError::Template(format!(
                                "scale_key without factor used for {other} mutation"
                            )))
                        }
                    };
                    PatchOp::ScaleKey {
                        file: file.clone(),
                        key: subst(key),
                        factor: Some(factor),
                    }
                }
                PatchOp::ReplaceAnchored {
                    file,
                    anchor,
                    replacement,
                } => PatchOp::ReplaceAnchored {
                    file: file.clone(),
                    anchor: anchor.clone(),
                    replacement: subst(replacement),
                },
                PatchOp::DeleteLines { file, anchor } => PatchOp::DeleteLines {
                    file: file.clone(),
                    anchor: anchor.clone(),
                },
            })
        })
        .collect()
}

/// Rejects absolute paths and paths escaping the workspace.
pub(crate) fn check_relative(file: &str) -> Result<(), WorkspaceError> {
    let p = Path::new(file);
    let ok = !file.is_empty()
        && p.components()
            .all(|c| matches!(c, PathComponent::Normal(_) | PathComponent::CurDir));
    if ok {
        Ok(())
    } else {
        Err(WorkspaceError::UnsafePath(file.to_string()))
    }
}

/// Applies `ops` to in-memory file contents. Nothing is written; the caller
/// commits the result only if every op succeeded.
pub(crate) fn apply_ops(
    files: &mut BTreeMap<String, String>,
    ops: &[PatchOp],
) -> Result<(), WorkspaceError> {
    for op in ops {
        let file = op.file().to_string();
        let text = files
            .get_mut(&file)
            .ok_or_else(|| WorkspaceError::FileMissing(file.clone()))?;
        match op {
            PatchOp::SetKey { key, value, .. } => {
                *text = rewrite_key(text, &file, key, |_| Ok(value.clone()))?;
            }
            PatchOp::ScaleKey { key, factor, .. } => {
                let factor = factor.ok_or_else(|| {
                    WorkspaceError::Template("scale_key factor unresolved".into())
                })?;
                *text = rewrite_key(text, &file, key, |old| scale_value(&file, key, old, factor))?;
            }
            PatchOp::ReplaceAnchored {
                anchor,
                replacement,
                ..
            } => {
                if anchor.is_empty() || !text.contains(anchor.as_str()) {
                    return Err(WorkspaceError::AnchorNotFound {
                        file,
                        anchor: anchor.clone(),
                    });
                }
                *text = text.replacen(anchor.as_str(), replacement, 1);
            }
            PatchOp::DeleteLines { anchor, .. } => {
                if anchor.is_empty() || !text.contains(anchor.as_str()) {
                    return Err(WorkspaceError::AnchorNotFound {
                        file,
                        anchor: anchor.clone(),
                    });
                }
                *text = text
                    .split_inclusive('\n')
                    .filter(|line| !line.contains(anchor.as_str()))
                    .collect();
            }
        }
    }
    Ok(())
}

fn rewrite_key<F>(text: &str, file: &str, key: &str, new_value: F) -> Result<String, WorkspaceError>
where
    F: FnOnce(&str) -> Result<String, WorkspaceError>,
{
    let mut new_value = Some(new_value);
    let mut out = String::with_capacity(text.len());
    let mut found = false;
    for line in text.split_inclusive('\n') {
        if !found {
            if let Some((prefix, value, ending)) = split_key_line(line, key) {
                let f = new_value.take().expect("rewritten once");
                out.push_str(prefix);
                out.push_str(&f(value)?);
                out.push_str(ending);
                found = true;
                continue;
            }
        }
        out.push_str(line);
    }
    if found {
        Ok(out)
    } else {
        Err(WorkspaceError::KeyNotFound {
            file: file.to_string(),
            key: key.to_string(),
        })
    }
}

/// Splits `  key = value\n` into (`  key = `, `value`, `\n`).
fn split_key_line<'a>(line: &'a str, key: &str) -> Option<(&'a str, &'a str, &'a str)> {
    let body_len = line.trim_end_matches(['\n', '\r']).len();
    let (body, ending) = line.split_at(body_len);
    let indent = body.len() - body.trim_start().len();
    let rest = body[indent..].strip_prefix(key)?;
    let after_key = rest.trim_start();
    let sep = after_key.chars().next()?;
    if sep != '=' && sep != ':' {
        return None;
    }
    let after_sep = &after_key[1..];
    let value = after_sep.trim_start();
    let prefix_len = body.len() - value.len();
    Some((&body[..prefix_len], value, ending))
}

fn scale_value(file: &str, key: &str, old: &str, factor: f64) -> Result<String, WorkspaceError> {
    let trimmed = old.trim();
    let not_numeric = || WorkspaceError::NotNumeric {
        file: file.to_string(),
        key: key.to_string(),
        value: trimmed.to_string(),
    };
    if let Ok(int) = trimmed.parse::<i64>() {
        let scaled = int as f64 * factor;
        if scaled.fract() == 0.0 && scaled.abs() < 9.0e15 {
            return Ok(format!("{}", scaled as i64));
        }
        return Ok(format!("{scaled}"));
    }
    let x: f64 = trimmed.parse().map_err(|_| not_numeric())?;
    if !x.is_finite() {
        return Err(not_numeric());
    }
    Ok(format!("{}", x * factor))
}

/// Unified diff between two file maps, plus the number of hunks.
pub(crate) fn diff_files(
    before: &BTreeMap<String, String>,
    after: &BTreeMap<String, String>,
) -> (String, usize, Vec<String>) {
    let mut diff = String::new();
    let mut hunks = 0;
    let mut files = Vec::new();
    for (path, new) in after {
        let old = before.get(path).map(String::as_str).unwrap_or("");
        if old == new {
            continue;
        }
        let td = TextDiff::from_lines(old, new.as_str());
        let mut unified = td.unified_diff();
        unified.header(&format!("a/{path}"), &format!("b/{path}"));
        hunks += unified.iter_hunks().count();
        diff.push_str(&unified.to_string());
        files.push(path.clone());
    }
    (diff, hunks, files)
}
