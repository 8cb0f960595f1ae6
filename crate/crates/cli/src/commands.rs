use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use fce_core::analysis::{
    parse_records, run_hypothesis, AnalysisBundle, ExclusionRow, Hypothesis, TrialRecord,
};
use fce_core::client::{run_trials, ChatProvider, ProviderKind, ProviderSet, RunOptions};
use fce_core::config::RunConfig;
use fce_core::materials::Corpus;
use fce_core::parsing::ParseStatus;
use fce_core::protocol::{build_trial_matrix, TrialSpec};
use fce_core::records::{read_records, JsonlWriter, TrialStatus};
use fce_core::reporting::{bundle_heatmaps, bundle_tables, render_table, Format};
use fce_stats::verify::{run_all, VerifyConfig};

/// Failure classes mapped to the process exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad config, flags or environment (exit 1).
    Validation(anyhow::Error),
    /// Trials failed or outputs could not be written (exit 2).
    Execution(anyhow::Error),
    /// A statistics suite failed (exit 3).
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Execution(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(e) | CliError::Execution(e) => write!(f, "{e:#}"),
            CliError::Verification(s) => f.write_str(s),
        }
    }
}

fn invalid(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Validation(e.into())
}

fn failed(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Execution(e.into())
}

#[derive(Debug, Clone, Copy)]
pub struct Formats {
    pub markdown: bool,
    pub csv: bool,
}

pub struct RunArgs {
    pub resume: bool,
    pub live: bool,
    pub parallelism: Option<usize>,
    pub limit: Option<usize>,
}

struct Loaded {
    cfg: RunConfig,
    corpus: Corpus,
    specs: Vec<TrialSpec>,
}

fn load(config: &Path, out: Option<&Path>) -> Result<Loaded, CliError> {
    let mut cfg = RunConfig::load(config).map_err(invalid)?;
    if let Some(out) = out {
        cfg.output_dir = out.to_path_buf();
    }
    let corpus = cfg.corpus().map_err(invalid)?;
    let matrix = cfg.matrix_spec(&corpus).map_err(invalid)?;
    let specs = build_trial_matrix(&matrix).map_err(invalid)?;
    Ok(Loaded { cfg, corpus, specs })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(failed)
}

fn write_plan(loaded: &Loaded) -> Result<PathBuf, CliError> {
    create_dir(&loaded.cfg.output_dir)?;
    let path = loaded.cfg.plan_path();
    let mut w = JsonlWriter::create(&path).map_err(failed)?;
    for s in &loaded.specs {
        w.write(s).map_err(failed)?;
    }
    Ok(path)
}

pub fn plan(config: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let loaded = load(config, out)?;
    let path = write_plan(&loaded)?;
    let mut per_model: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &loaded.specs {
        *per_model.entry(s.model_id.as_str()).or_default() += 1;
    }
    for (model, n) in &per_model {
        println!("{model}: {n} trials");
    }
    println!("total: {} trials -> {}", loaded.specs.len(), path.display());
    Ok(())
}

pub fn run(config: &Path, out: Option<&Path>, args: RunArgs) -> Result<(), CliError> {
    let loaded = load(config, out)?;
    let kind = if args.live {
        ProviderKind::HttpChat
    } else {
        ProviderKind::Replay
    };
    // Every provider is constructed (and credentials checked) before the
    // first request.
    let mut providers = ProviderSet::new();
    for m in &loaded.cfg.models {
        let pc = loaded.cfg.provider_config(&m.id, kind).map_err(invalid)?;
        let provider: Arc<dyn ChatProvider> = Arc::from(pc.build().map_err(invalid)?);
        providers.insert(m.id.clone(), provider);
    }
    let parallelism = args.parallelism.unwrap_or(loaded.cfg.parallelism);
    if parallelism == 0 {
        return Err(invalid(anyhow!("--parallelism must be at least 1")));
    }
    write_plan(&loaded)?;
    let options = RunOptions {
        parallelism,
        resume: args.resume,
        retry: loaded.cfg.retry,
        limit: args.limit,
    };
    let records = loaded.cfg.records_path();
    let summary = run_trials(
        &loaded.corpus,
        &loaded.specs,
        &providers,
        &options,
        &records,
        &std::thread::sleep,
    )
    .map_err(failed)?;
    println!(
        "planned {}, skipped {}, completed {}, invalid {}, failed {} -> {}",
        summary.planned,
        summary.skipped,
        summary.completed,
        summary.invalid,
        summary.failed,
        records.display()
    );
    if summary.failed > 0 {
        return Err(failed(anyhow!(
            "{} trial(s) failed; rerun with --resume to retry them",
            summary.failed
        )));
    }
    Ok(())
}

fn parsed_records(loaded: &Loaded) -> Result<Vec<TrialRecord>, CliError> {
    let path = loaded.cfg.records_path();
    if !path.exists() {
        return Err(invalid(anyhow!(
            "no records at {}; run `fce run` first",
            path.display()
        )));
    }
    let records = read_records(&path).map_err(failed)?;
    Ok(parse_records(&loaded.corpus, &records))
}

pub fn parse(config: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let loaded = load(config, out)?;
    let parsed = parsed_records(&loaded)?;
    let path = loaded.cfg.parsed_path();
    let mut w = JsonlWriter::create(&path).map_err(failed)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &parsed {
        w.write(r).map_err(failed)?;
        let key = match (r.run_status, r.outcome.as_ref().map(|o| o.status)) {
            (TrialStatus::Failed, _) => "failed",
            (TrialStatus::Invalid, _) => "invalid_choice",
            (_, Some(ParseStatus::Ok)) => "ok",
            (_, Some(ParseStatus::Refusal)) => "refusal",
            (_, Some(ParseStatus::Ambiguous)) => "ambiguous",
            (_, Some(ParseStatus::NonNumeric) | None) => "non_numeric",
        };
        *counts.entry(key).or_default() += 1;
    }
    let summary: Vec<String> = counts.iter().map(|(k, v)| format!("{k} {v}")).collect();
    println!(
        "{} trials: {} -> {}",
        parsed.len(),
        summary.join(", "),
        path.display()
    );
    Ok(())
}

fn analysis_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("analysis")
}

fn reports_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("reports")
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(failed)
}

fn render_bundle(
    bundle: &AnalysisBundle,
    dir: &Path,
    formats: Formats,
) -> Result<Vec<PathBuf>, CliError> {
    create_dir(dir)?;
    let mut written = Vec::new();
    for (name, doc) in bundle_tables(bundle) {
        for (on, format) in [
            (formats.markdown, Format::Markdown),
            (formats.csv, Format::Csv),
        ] {
            if on {
                let path = dir.join(format!("{name}.{}", format.extension()));
                write_file(&path, &render_table(&doc, format))?;
                written.push(path);
            }
        }
    }
    for (stem, svg) in bundle_heatmaps(bundle) {
        let path = dir.join(format!("{stem}.svg"));
        write_file(&path, &svg)?;
        written.push(path);
    }
    Ok(written)
}

fn exclusion_line(rows: &[ExclusionRow]) -> String {
    let sum = |f: fn(&ExclusionRow) -> usize| rows.iter().map(f).sum::<usize>();
    format!(
        "planned {}, ok {}, excluded {} (not run {}, failed {}, invalid choice {}, refusal {}, ambiguous {}, non-numeric {})",
        sum(|r| r.planned),
        sum(|r| r.ok),
        sum(ExclusionRow::excluded),
        sum(|r| r.not_run),
        sum(|r| r.failed),
        sum(|r| r.invalid_choice),
        sum(|r| r.refusal),
        sum(|r| r.ambiguous),
        sum(|r| r.non_numeric),
    )
}

fn default_study(cfg: &RunConfig) -> u8 {
    if cfg.info.len() > 1 || cfg.chain.len() > 1 {
        2
    } else {
        1
    }
}

pub fn analyze(
    config: &Path,
    out: Option<&Path>,
    study: Option<u8>,
    hypotheses: &[Hypothesis],
    formats: Formats,
) -> Result<(), CliError> {
    let loaded = load(config, out)?;
    let mut selected: Vec<Hypothesis> = hypotheses.to_vec();
    if let Some(s) = study {
        selected.extend(Hypothesis::for_study(s));
    }
    if selected.is_empty() {
        selected.extend(Hypothesis::for_study(default_study(&loaded.cfg)));
    }
    let mut seen = Vec::new();
    selected.retain(|h| {
        let new = !seen.contains(h);
        seen.push(*h);
        new
    });

    let records = parsed_records(&loaded)?;
    let adir = analysis_dir(&loaded.cfg);
    let rdir = reports_dir(&loaded.cfg);
    create_dir(&adir)?;
    let mut warnings = 0;
    for h in selected {
        let bundle = run_hypothesis(&records, Some(&loaded.specs), h);
        let json = serde_json::to_string_pretty(&bundle).map_err(failed)?;
        write_file(&adir.join(format!("{}.json", h.key())), &(json + "\n"))?;
        let written = render_bundle(&bundle, &rdir, formats)?;
        println!(
            "{}: {} file(s) in {}",
            h.key(),
            written.len(),
            rdir.display()
        );
        for e in &bundle.errors {
            eprintln!("warning: {}: {e}", h.key());
        }
        warnings += bundle.errors.len();
        println!("  {}", exclusion_line(&bundle.exclusions));
    }
    println!("{warnings} warning(s)");
    Ok(())
}

pub fn report(config: &Path, out: Option<&Path>, formats: Formats) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(config).map_err(invalid)?;
    if let Some(out) = out {
        cfg.output_dir = out.to_path_buf();
    }
    let adir = analysis_dir(&cfg);
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&adir)
        .with_context(|| format!("no analyses in {}; run `fce analyze` first", adir.display()))
        .map_err(invalid)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    let rdir = reports_dir(&cfg);
    let mut total = 0;
    for path in paths {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read {}", path.display()))
            .map_err(failed)?;
        let bundle: AnalysisBundle = serde_json::from_str(&text)
            .with_context(|| format!("invalid analysis {}", path.display()))
            .map_err(invalid)?;
        total += render_bundle(&bundle, &rdir, formats)?.len();
    }
    println!("{total} file(s) in {}", rdir.display());
    Ok(())
}

pub fn verify_stats(seed: Option<u64>) -> Result<(), CliError> {
    let mut config = VerifyConfig::default();
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let report = run_all(&config);
    println!("{report}");
    if report.passed() {
        println!("all suites passed");
        Ok(())
    } else {
        Err(CliError::Verification(
            "statistics verification failed".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(invalid(anyhow!("x")).exit_code(), 1);
        assert_eq!(failed(anyhow!("x")).exit_code(), 2);
        assert_eq!(CliError::Verification("x".into()).exit_code(), 3);
    }
}
