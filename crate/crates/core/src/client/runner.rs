use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{execute_trial, ChatProvider, ClientError, RetryPolicy};
use crate::materials::Corpus;
use crate::protocol::TrialSpec;
use crate::records::{latest_by_trial, read_records, JsonlWriter, RunRecord, TrialStatus};

/// Provider handle per model id.
pub type ProviderSet = HashMap<String, Arc<dyn ChatProvider>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub parallelism: usize,
    /// Skip trials whose latest record is completed or invalid.
    pub resume: bool,
    pub retry: RetryPolicy,
    /// Stop after this many newly executed trials (used to simulate
    /// interrupted runs).
    pub limit: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            parallelism: 1,
            resume: false,
            retry: RetryPolicy::default(),
            limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub planned: usize,
    pub skipped: usize,
    pub completed: usize,
    pub invalid: usize,
    pub failed: usize,
}

impl RunSummary {
    pub fn executed(&self) -> usize {
        self.completed + self.invalid + self.failed
    }
}

/// Executes `specs` and appends one record per trial to `records_path`.
///
/// Up to `parallelism` trials run at once; records are written by a single
/// writer in plan order, so replay runs produce identical files.
pub fn run_trials(
    corpus: &Corpus,
    specs: &[TrialSpec],
    providers: &ProviderSet,
    options: &RunOptions,
    records_path: &Path,
    sleep: &(dyn Fn(Duration) + Sync),
) -> Result<RunSummary, ClientError> {
    let io = |e: crate::records::RecordError| ClientError::Io(e.to_string());
    if let Some(missing) = specs.iter().find(|s| !providers.contains_key(&s.model_id)) {
        return Err(ClientError::Config(format!(
            "no provider for model `{}`",
            missing.model_id
        )));
    }
    let done: HashSet<String> = if options.resume && records_path.exists() {
        latest_by_trial(read_records(records_path).map_err(io)?)
            .into_values()
            .filter(|r| r.status != TrialStatus::Failed)
            .map(|r| r.spec.trial_id)
            .collect()
    } else {
        HashSet::new()
    };
    let mut todo: Vec<&TrialSpec> = specs
        .iter()
        .filter(|s| !done.contains(&s.trial_id))
        .collect();
    let mut summary = RunSummary {
        planned: specs.len(),
        skipped: specs.len() - todo.len(),
        ..RunSummary::default()
    };
    if let Some(limit) = options.limit {
        todo.truncate(limit);
    }
    let mut writer = if options.resume {
        JsonlWriter::append(records_path)
    } else {
        JsonlWriter::create(records_path)
    }
    .map_err(io)?;

    let next = AtomicUsize::new(0);
    let workers = options.parallelism.clamp(1, todo.len().max(1));
    let (tx, rx) = mpsc::channel::<(usize, RunRecord)>();
    let todo = &todo;
    let next = &next;
    std::thread::scope(|scope| -> Result<(), ClientError> {
        for _ in 0..workers {
            let tx = tx.clone();
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(spec) = todo.get(i) else { break };
                let provider = &providers[&spec.model_id];
                let record = execute_trial(corpus, spec, provider.as_ref(), &options.retry, sleep);
                if tx.send((i, record)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending = BTreeMap::new();
        let mut emit = 0;
        for (i, record) in rx {
            pending.insert(i, record);
            while let Some(record) = pending.remove(&emit) {
                match record.status {
                    TrialStatus::Completed => summary.completed += 1,
                    TrialStatus::Invalid => summary.invalid += 1,
                    TrialStatus::Failed => {
                        tracing::warn!(trial = %record.spec.trial_id, error = ?record.error, "trial failed");
                        summary.failed += 1;
                    }
                }
                if let Err(e) = writer.write(&record) {
                    // Stop handing out work; running trials finish and are dropped.
                    next.store(usize::MAX / 2, Ordering::Relaxed);
                    return Err(io(e));
                }
                emit += 1;
            }
        }
        Ok(())
    })?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{GenerationRequest, ReplayAnswer, ReplayEntry, ReplayProvider};
    use crate::materials::builtin_personas;
    use crate::protocol::{build_trial_matrix, ChainCondition, InfoCondition, MatrixSpec, Mode};
    use std::sync::atomic::AtomicU32;

    fn specs() -> Vec<TrialSpec> {
        build_trial_matrix(&MatrixSpec {
            models: vec!["claude-3".into()],
            personas: builtin_personas()[..5].to_vec(),
            stories: vec!["term_paper".into(), "supermarket".into()],
            mode: Mode::Forced,
            info: vec![InfoCondition::P1],
            chain: vec![ChainCondition::R1, ChainCondition::R3],
        })
        .unwrap()
    }

    fn replay(specs: &[TrialSpec], skip: Option<&str>) -> ProviderSet {
        let entries = specs
            .iter()
            .filter(|s| Some(s.trial_id.as_str()) != skip)
            .map(|s| ReplayEntry {
                trial_id: s.trial_id.clone(),
                answers: ["answer", "direct_answer"]
                    .iter()
                    .map(|slot| ReplayAnswer {
                        slot: slot.to_string(),
                        text: format!("{slot} for {}", s.trial_id),
                    })
                    .collect(),
            });
        let p: Arc<dyn ChatProvider> = Arc::new(ReplayProvider::from_entries(entries));
        HashMap::from([("claude-3".to_string(), p)])
    }

    fn content(path: &Path) -> Vec<String> {
        read_records(path)
            .unwrap()
            .iter()
            .map(RunRecord::content_hash)
            .collect()
    }

    #[test]
    fn parallel_output_is_in_plan_order_and_reproducible() {
        let specs = specs();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        let providers = replay(&specs, None);
        let opts = RunOptions {
            parallelism: 4,
            ..RunOptions::default()
        };
        let s = run_trials(Corpus::builtin(), &specs, &providers, &opts, &a, &|_| {}).unwrap();
        assert_eq!(s.completed, specs.len());
        run_trials(
            Corpus::builtin(),
            &specs,
            &providers,
            &RunOptions::default(),
            &b,
            &|_| {},
        )
        .unwrap();
        assert_eq!(content(&a), content(&b));
        let ids: Vec<String> = read_records(&a)
            .unwrap()
            .into_iter()
            .map(|r| r.spec.trial_id)
            .collect();
        let planned: Vec<String> = specs.iter().map(|s| s.trial_id.clone()).collect();
        assert_eq!(ids, planned);
    }

    #[test]
    fn resume_runs_only_the_remainder_and_retries_failures() {
        let specs = specs();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let providers = replay(&specs, Some(&specs[1].trial_id));
        let opts = RunOptions {
            limit: Some(7),
            retry: RetryPolicy::none(),
            ..RunOptions::default()
        };
        let s = run_trials(Corpus::builtin(), &specs, &providers, &opts, &path, &|_| {}).unwrap();
        assert_eq!((s.completed, s.failed), (6, 1));

        let providers = replay(&specs, None);
        let opts = RunOptions {
            resume: true,
            parallelism: 3,
            ..RunOptions::default()
        };
        let s = run_trials(Corpus::builtin(), &specs, &providers, &opts, &path, &|_| {}).unwrap();
        assert_eq!(s.skipped, 6);
        assert_eq!(s.completed, specs.len() - 6);
        let all = read_records(&path).unwrap();
        assert_eq!(all.len(), 7 + specs.len() - 6);
        let latest = latest_by_trial(all);
        assert!(latest.values().all(|r| r.status == TrialStatus::Completed));

        let s = run_trials(Corpus::builtin(), &specs, &providers, &opts, &path, &|_| {}).unwrap();
        assert_eq!((s.skipped, s.executed()), (specs.len(), 0));
    }

    struct Flaky(AtomicU32);

    impl ChatProvider for Flaky {
        fn generate(&self, _: &GenerationRequest<'_>) -> Result<String, ClientError> {
            if self.0.fetch_add(1, Ordering::SeqCst).is_multiple_of(2) {
                Err(ClientError::Transport("reset".into()))
            } else {
                Ok("Individual paper: 50%, Group paper: 50%".into())
            }
        }
    }

    #[test]
    fn transient_errors_are_retried() {
        let specs: Vec<TrialSpec> = specs()
            .into_iter()
            .filter(|s| s.chain == ChainCondition::R1)
            .take(3)
            .collect();
        let p: Arc<dyn ChatProvider> = Arc::new(Flaky(AtomicU32::new(0)));
        let providers = HashMap::from([("claude-3".to_string(), p)]);
        let dir = tempfile::tempdir().unwrap();
        let slept = std::sync::Mutex::new(0);
        let s = run_trials(
            Corpus::builtin(),
            &specs,
            &providers,
            &RunOptions::default(),
            &dir.path().join("r.jsonl"),
            &|_| *slept.lock().unwrap() += 1,
        )
        .unwrap();
        assert_eq!(s.completed, 3);
        assert_eq!(*slept.lock().unwrap(), 3);
    }

    #[test]
    fn unknown_model_is_rejected_up_front() {
        let specs = specs();
        let dir = tempfile::tempdir().unwrap();
        let err = run_trials(
            Corpus::builtin(),
            &specs,
            &HashMap::new(),
            &RunOptions::default(),
            &dir.path().join("r"),
            &|_| {},
        );
        assert!(matches!(err, Err(ClientError::Config(_))));
    }
}
