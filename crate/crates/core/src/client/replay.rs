use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChatProvider, ClientError, GenerationRequest};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayAnswer {
    pub slot: String,
    pub text: String,
}

/// Stored answers for one trial, in generation order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub trial_id: String,
    pub answers: Vec<ReplayAnswer>,
}

/// Answers generation requests from recorded fixtures.
///
/// The fixture directory holds `<trial_id>.json` files (one [`ReplayEntry`]
/// each) and/or `*.jsonl` bundles (one entry per line).
#[derive(Debug, Clone, Default)]
pub struct ReplayProvider {
    answers: HashMap<String, HashMap<String, String>>,
}

impl ReplayProvider {
    pub fn from_entries(entries: impl IntoIterator<Item = ReplayEntry>) -> Self {
        let mut answers: HashMap<String, HashMap<String, String>> = HashMap::new();
        for e in entries {
            let slots = answers.entry(e.trial_id).or_default();
            for a in e.answers {
                slots.insert(a.slot, a.text);
            }
        }
        ReplayProvider { answers }
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

pub fn make_replay_provider(dir: &Path) -> Result<ReplayProvider, ClientError> {
    let load_err = |reason: String| ClientError::Load {
        path: dir.to_path_buf(),
        reason,
    };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| load_err(e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    paths.sort();
    let mut entries = Vec::new();
    for path in paths {
        let ext = path.extension().and_then(|e| e.to_str());
        let bad = |reason: String| ClientError::Load {
            path: path.clone(),
            reason,
        };
        match ext {
            Some("json") => {
                let text = std::fs::read_to_string(&path).map_err(|e| bad(e.to_string()))?;
                entries.push(serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?);
            }
            Some("jsonl") => {
                let text = std::fs::read_to_string(&path).map_err(|e| bad(e.to_string()))?;
                for (i, line) in text
                    .lines()
                    .enumerate()
                    .filter(|(_, l)| !l.trim().is_empty())
                {
                    entries.push(
                        serde_json::from_str(line)
                            .map_err(|e| bad(format!("line {}: {e}", i + 1)))?,
                    );
                }
            }
            _ => {}
        }
    }
    Ok(ReplayProvider::from_entries(entries))
}

impl ChatProvider for ReplayProvider {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String, ClientError> {
        let err = |reason: String| ClientError::Replay {
            trial_id: request.trial_id.to_string(),
            reason,
        };
        let slots = self
            .answers
            .get(request.trial_id)
            .ok_or_else(|| err("no fixture for this trial".into()))?;
        slots
            .get(request.slot)
            .cloned()
            .ok_or_else(|| err(format!("fixture has no answer for slot `{}`", request.slot)))
    }
}
