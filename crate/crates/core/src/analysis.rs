//! FCE quantities and hypothesis pipelines over parsed trial records.
//!
//! Strengths use the answer margin `d = on_option1 - on_option2`:
//! `strength = (mean(d | fed opt1) - mean(d | fed opt2)) / 2`. For pairs
//! summing to 100 this is exactly `mu1 - mu2`, and relabeling the answer
//! options (which negates every `d`) negates it bit for bit.

use std::collections::{BTreeMap, HashMap, HashSet};

use fce_stats::{
    dunn_posthoc, kruskal_wallis, mann_whitney_u_with, MannWhitneyOptions, PAdjust, Sidedness,
    StatsError, TestResult64,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::materials::{Corpus, Culture, Gender, OptionId, StoryId};
use crate::parsing::{extract_agreement, AgreementPair, ParseOutcome, ParseStatus};
use crate::protocol::{ChainCondition, InfoCondition, Mode, TrialSpec, SLOT_ANSWER};
use crate::records::{RunRecord, TrialStatus};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("insufficient data in {cell}: {reason}")]
    InsufficientData { cell: String, reason: String },
    #[error("statistics error in {cell}: {source}")]
    Stats { cell: String, source: StatsError },
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

fn insufficient(cell: &str, reason: impl Into<String>) -> AnalysisError {
    AnalysisError::InsufficientData {
        cell: cell.to_string(),
        reason: reason.into(),
    }
}

fn stats_err(cell: &str) -> impl Fn(StatsError) -> AnalysisError + '_ {
    move |source| AnalysisError::Stats {
        cell: cell.to_string(),
        source,
    }
}

/// A trial after parsing: the unit every analysis consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub spec: TrialSpec,
    pub run_status: TrialStatus,
    /// Absent when the run did not complete.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<ParseOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_option: Option<OptionId>,
}

impl TrialRecord {
    pub fn pair(&self) -> Option<AgreementPair> {
        self.outcome.as_ref().and_then(|o| o.pair)
    }

    /// Fed option in forced mode, the model's own choice in free-choice mode.
    pub fn group_option(&self) -> Option<OptionId> {
        match self.spec.mode {
            Mode::Forced => self.spec.fed_option,
            Mode::FreeChoice => self.chosen_option,
        }
    }

    fn in_cell(
        &self,
        model: &str,
        story: &StoryId,
        info: InfoCondition,
        chain: ChainCondition,
    ) -> bool {
        self.spec.model_id == model
            && &self.spec.story_id == story
            && self.spec.info == info
            && self.spec.chain == chain
    }
}

/// Parses the answer slot of one run record.
pub fn parse_record(corpus: &Corpus, record: &RunRecord) -> TrialRecord {
    let outcome = (record.status == TrialStatus::Completed).then(|| {
        let answer = record.transcript.slot_text(SLOT_ANSWER).unwrap_or("");
        match corpus.story(&record.spec.story_id) {
            Ok(story) => extract_agreement(answer, story),
            Err(_) => ParseOutcome {
                status: ParseStatus::Ambiguous,
                pair: None,
                evidence: Vec::new(),
            },
        }
    });
    TrialRecord {
        spec: record.spec.clone(),
        run_status: record.status,
        outcome,
        chosen_option: record.chosen_option,
    }
}

/// Parses the latest record of every trial, keeping first-seen order.
pub fn parse_records(corpus: &Corpus, records: &[RunRecord]) -> Vec<TrialRecord> {
    let mut order: Vec<&str> = Vec::new();
    let mut latest: HashMap<&str, &RunRecord> = HashMap::new();
    for r in records {
        if latest.insert(r.trial_id(), r).is_none() {
            order.push(r.trial_id());
        }
    }
    order
        .into_iter()
        .map(|id| parse_record(corpus, latest[id]))
        .collect()
}

/// Relabels the answer options of every record (swaps each pair).
pub fn swap_options(records: &[TrialRecord]) -> Vec<TrialRecord> {
    records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if let Some(o) = r.outcome.as_mut() {
                o.pair = o.pair.map(|p| p.swapped());
            }
            r
        })
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn margin(p: &AgreementPair) -> f64 {
    p.on_option1 - p.on_option2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FceSummary {
    pub mu1: f64,
    pub mu2: f64,
    pub strength: f64,
    pub n1: usize,
    pub n2: usize,
    pub test: TestResult64,
}

pub fn group_means(cell: &str, records: &[&TrialRecord]) -> Result<FceSummary> {
    group_means_with(cell, records, Sidedness::TwoSided)
}

/// μ₁, μ₂, strength and the Mann-Whitney test on agreement with option 1.
pub fn group_means_with(
    cell: &str,
    records: &[&TrialRecord],
    sidedness: Sidedness,
) -> Result<FceSummary> {
    let mut on1 = [Vec::new(), Vec::new()];
    let mut d = [Vec::new(), Vec::new()];
    for r in records {
        if let (Some(pair), Some(group)) = (r.pair(), r.group_option()) {
            on1[group as usize].push(pair.on_option1);
            d[group as usize].push(margin(&pair));
        }
    }
    for opt in OptionId::BOTH {
        if on1[opt as usize].is_empty() {
            return Err(insufficient(
                cell,
                format!("no valid answers in the {opt} group"),
            ));
        }
    }
    let test = mann_whitney_u_with(
        &on1[0],
        &on1[1],
        MannWhitneyOptions {
            sidedness,
            continuity_correction: true,
        },
    )
    .map_err(stats_err(cell))?;
    Ok(FceSummary {
        mu1: mean(&on1[0]),
        mu2: mean(&on1[1]),
        strength: (mean(&d[0]) - mean(&d[1])) / 2.0,
        n1: on1[0].len(),
        n2: on1[1].len(),
        test,
    })
}

/// Per-persona paired differences Δ_p within one cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FceSample {
    pub personas: Vec<String>,
    pub values: Vec<f64>,
    /// Personas present in the cell without a valid answer for both options.
    pub excluded: usize,
}

pub fn per_persona_fce(cell: &str, records: &[&TrialRecord]) -> Result<FceSample> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_persona: HashMap<&str, [Option<f64>; 2]> = HashMap::new();
    for r in records {
        let name = r.spec.persona.name.as_str();
        let slot = by_persona.entry(name).or_insert_with(|| {
            order.push(name);
            [None, None]
        });
        if let (Some(pair), Some(group)) = (r.pair(), r.group_option()) {
            slot[group as usize] = Some(margin(&pair));
        }
    }
    let mut sample = FceSample::default();
    for name in order {
        match by_persona[name] {
            [Some(d1), Some(d2)] => {
                sample.personas.push(name.to_string());
                sample.values.push((d1 - d2) / 2.0);
            }
            _ => sample.excluded += 1,
        }
    }
    if sample.values.is_empty() {
        return Err(insufficient(
            cell,
            "no persona has valid answers under both fed options",
        ));
    }
    Ok(sample)
}

fn cell_label(model: &str, story: &StoryId, info: InfoCondition, chain: ChainCondition) -> String {
    format!("{model}/{story}/{info}{chain}")
}

fn cell_records<'a>(
    records: &'a [TrialRecord],
    model: &str,
    story: &StoryId,
    info: InfoCondition,
    chain: ChainCondition,
) -> Vec<&'a TrialRecord> {
    records
        .iter()
        .filter(|r| r.in_cell(model, story, info, chain))
        .collect()
}

/// Distinct (model, story) pairs in first-seen order.
pub fn model_story_pairs(records: &[TrialRecord]) -> Vec<(String, StoryId)> {
    let mut out: Vec<(String, StoryId)> = Vec::new();
    for r in records {
        if !out
            .iter()
            .any(|(m, s)| m == &r.spec.model_id && s == &r.spec.story_id)
        {
            out.push((r.spec.model_id.clone(), r.spec.story_id.clone()));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H1Row {
    pub model: String,
    pub story: StoryId,
    pub summary: FceSummary,
}

/// H1-1: μ₁ vs μ₂ on the baseline (P1, R1) cell.
pub fn h1_fce_report(records: &[TrialRecord], model: &str, story: &StoryId) -> Result<H1Row> {
    let (info, chain) = (InfoCondition::P1, ChainCondition::R1);
    let cell = cell_label(model, story, info, chain);
    let summary = group_means(&cell, &cell_records(records, model, story, info, chain))?;
    Ok(H1Row {
        model: model.to_string(),
        story: story.clone(),
        summary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Culture,
    Gender,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: String,
    pub summary: FceSummary,
    pub sample: FceSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicReport {
    pub model: String,
    pub story: StoryId,
    pub factor: Factor,
    pub levels: Vec<LevelSummary>,
    /// Strength of the first level minus the second.
    pub diff: f64,
    pub test: TestResult64,
}

type LevelFilter = Box<dyn Fn(&TrialRecord) -> bool>;

/// H1-2 / H1-3: FCE per culture or gender level and Kruskal-Wallis across
/// the levels' Δ_p samples.
pub fn demographic_report(
    records: &[TrialRecord],
    model: &str,
    story: &StoryId,
    factor: Factor,
) -> Result<DemographicReport> {
    let (info, chain) = (InfoCondition::P1, ChainCondition::R1);
    let base = cell_label(model, story, info, chain);
    let cell = cell_records(records, model, story, info, chain);
    let levels: Vec<(String, LevelFilter)> = match factor {
        Factor::Culture => Culture::ALL
            .iter()
            .map(|&c| {
                let f: LevelFilter = Box::new(move |r| r.spec.persona.culture == c);
                (c.word().to_string(), f)
            })
            .collect(),
        Factor::Gender => Gender::ALL
            .iter()
            .map(|&g| {
                let f: LevelFilter = Box::new(move |r| r.spec.persona.gender == g);
                (g.word().to_string(), f)
            })
            .collect(),
    };
    let mut out = Vec::new();
    for (level, admits) in levels {
        let label = format!("{base}/{level}");
        let subset: Vec<&TrialRecord> = cell.iter().copied().filter(|r| admits(r)).collect();
        if subset.is_empty() {
            return Err(insufficient(&label, "level has no records"));
        }
        out.push(LevelSummary {
            summary: group_means(&label, &subset)?,
            sample: per_persona_fce(&label, &subset)?,
            level,
        });
    }
    let samples: Vec<&[f64]> = out.iter().map(|l| l.sample.values.as_slice()).collect();
    let test = kruskal_wallis(&samples).map_err(stats_err(&base))?;
    Ok(DemographicReport {
        model: model.to_string(),
        story: story.clone(),
        factor,
        diff: out[0].summary.strength - out[1].summary.strength,
        levels: out,
        test,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Info,
    Chain,
}

impl Axis {
    /// The four cells along the axis, with the other condition held at
    /// its baseline (R1 for the info axis, P1 for the chain axis).
    pub fn cells(self) -> [(InfoCondition, ChainCondition); 4] {
        match self {
            Axis::Info => InfoCondition::ALL.map(|p| (p, ChainCondition::R1)),
            Axis::Chain => ChainCondition::ALL.map(|r| (InfoCondition::P1, r)),
        }
    }

    fn level_name(self, cell: (InfoCondition, ChainCondition)) -> String {
        match self {
            Axis::Info => cell.0.to_string(),
            Axis::Chain => cell.1.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosthocRow {
    pub first: String,
    pub second: String,
    pub dunn_z: f64,
    pub dunn_p_raw: f64,
    pub dunn_p_adjusted: f64,
    pub mann_whitney: TestResult64,
    /// `">"` when the first level's Δ_p tend to be larger, `"<"` otherwise.
    pub relation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub model: String,
    pub story: StoryId,
    pub axis: Axis,
    pub levels: Vec<LevelSummary>,
    pub omnibus: TestResult64,
    /// Dunn-significant pairs with their Mann-Whitney follow-up; empty
    /// unless the omnibus test is significant.
    pub posthoc: Vec<PosthocRow>,
}

pub const ALPHA: f64 = 0.05;

/// H2-1 / H2-2: Kruskal-Wallis over the four conditions of one axis, then
/// Dunn (Holm) and Mann-Whitney on the pairs Dunn flags.
pub fn condition_sweep_report(
    records: &[TrialRecord],
    model: &str,
    story: &StoryId,
    axis: Axis,
) -> Result<SweepReport> {
    let mut levels = Vec::new();
    for c in axis.cells() {
        let label = cell_label(model, story, c.0, c.1);
        let cell = cell_records(records, model, story, c.0, c.1);
        if cell.is_empty() {
            return Err(insufficient(&label, "condition level has no records"));
        }
        levels.push(LevelSummary {
            level: axis.level_name(c),
            summary: group_means(&label, &cell)?,
            sample: per_persona_fce(&label, &cell)?,
        });
    }
    let sweep = format!("{model}/{story}/{axis:?}");
    let samples: Vec<&[f64]> = levels.iter().map(|l| l.sample.values.as_slice()).collect();
    let omnibus = kruskal_wallis(&samples).map_err(stats_err(&sweep))?;
    let mut posthoc = Vec::new();
    if omnibus.is_significant(ALPHA) {
        for pair in dunn_posthoc(&samples, PAdjust::Holm).map_err(stats_err(&sweep))? {
            if !pair.result.is_significant(ALPHA) {
                continue;
            }
            let (a, b) = (samples[pair.first], samples[pair.second]);
            let mw = mann_whitney_u_with(a, b, MannWhitneyOptions::default())
                .map_err(stats_err(&sweep))?;
            let half = (a.len() * b.len()) as f64 / 2.0;
            let relation = if mw.statistic > half {
                ">"
            } else if mw.statistic < half {
                "<"
            } else {
                "="
            };
            posthoc.push(PosthocRow {
                first: levels[pair.first].level.clone(),
                second: levels[pair.second].level.clone(),
                dunn_z: pair.result.statistic,
                dunn_p_raw: pair.raw_p,
                dunn_p_adjusted: pair.result.p_value,
                mann_whitney: mw,
                relation: relation.to_string(),
            });
        }
    }
    Ok(SweepReport {
        model: model.to_string(),
        story: story.clone(),
        axis,
        levels,
        omnibus,
        posthoc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionGrid {
    pub model: String,
    pub story: StoryId,
    /// `cells[p][r]` is the strength for (P{p+1}, R{r+1}).
    pub cells: [[f64; 4]; 4],
}

pub fn interaction_grid(
    records: &[TrialRecord],
    model: &str,
    story: &StoryId,
) -> Result<InteractionGrid> {
    let mut cells = [[0.0; 4]; 4];
    for p in InfoCondition::ALL {
        for r in ChainCondition::ALL {
            let label = cell_label(model, story, p, r);
            let cell = cell_records(records, model, story, p, r);
            if cell.is_empty() {
                return Err(insufficient(&label, "cell has no records"));
            }
            cells[p.index()][r.index()] = group_means(&label, &cell)?.strength;
        }
    }
    Ok(InteractionGrid {
        model: model.to_string(),
        story: story.clone(),
        cells,
    })
}

/// Lower edges of buckets 2..7; bucket `i` is `[edge[i-1], edge[i])` and the
/// last bucket is closed above at 100.
pub const BUCKET_EDGES: [f64; 6] = [10.0, 20.0, 30.0, 70.0, 80.0, 90.0];
pub const BUCKET_LABELS: [&str; 7] = ["<10", "10-20", "20-30", "30-70", "70-80", "80-90", ">=90"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeHistogram {
    pub counts: [usize; 7],
}

impl RangeHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn bucket_index(value: f64) -> usize {
    BUCKET_EDGES.iter().take_while(|&&e| value >= e).count()
}

/// Bucket counts of agreement with option 1 over all valid answers.
pub fn range_histogram<'a>(records: impl IntoIterator<Item = &'a TrialRecord>) -> RangeHistogram {
    let mut h = RangeHistogram::default();
    for p in records.into_iter().filter_map(TrialRecord::pair) {
        h.counts[bucket_index(p.on_option1)] += 1;
    }
    h
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionRow {
    pub model: String,
    pub story: StoryId,
    pub info: Option<InfoCondition>,
    pub chain: Option<ChainCondition>,
    pub planned: usize,
    pub ok: usize,
    pub not_run: usize,
    pub failed: usize,
    pub invalid_choice: usize,
    pub refusal: usize,
    pub ambiguous: usize,
    pub non_numeric: usize,
}

impl ExclusionRow {
    pub fn excluded(&self) -> usize {
        self.not_run
            + self.failed
            + self.invalid_choice
            + self.refusal
            + self.ambiguous
            + self.non_numeric
    }
}

type CellKey = (String, StoryId, InfoCondition, ChainCondition);

fn exclusion_row<'m>(
    rows: &'m mut BTreeMap<CellKey, ExclusionRow>,
    s: &TrialSpec,
) -> &'m mut ExclusionRow {
    rows.entry((s.model_id.clone(), s.story_id.clone(), s.info, s.chain))
        .or_insert_with(|| ExclusionRow {
            model: s.model_id.clone(),
            story: s.story_id.clone(),
            info: Some(s.info),
            chain: Some(s.chain),
            ..ExclusionRow::default()
        })
}

/// Valid and excluded counts per (model, story, P, R) cell. When `plan`
/// is given, planned trials without a record count as `not_run`.
pub fn exclusion_counts(records: &[TrialRecord], plan: Option<&[TrialSpec]>) -> Vec<ExclusionRow> {
    let mut rows = BTreeMap::new();
    for r in records {
        let e = exclusion_row(&mut rows, &r.spec);
        e.planned += 1;
        match (r.run_status, r.outcome.as_ref().map(|o| o.status)) {
            (TrialStatus::Failed, _) => e.failed += 1,
            (TrialStatus::Invalid, _) => e.invalid_choice += 1,
            (_, Some(ParseStatus::Ok)) => e.ok += 1,
            (_, Some(ParseStatus::Refusal)) => e.refusal += 1,
            (_, Some(ParseStatus::NonNumeric)) => e.non_numeric += 1,
            (_, _) => e.ambiguous += 1,
        }
    }
    if let Some(plan) = plan {
        let recorded: HashSet<&str> = records.iter().map(|r| r.spec.trial_id.as_str()).collect();
        for s in plan
            .iter()
            .filter(|s| !recorded.contains(s.trial_id.as_str()))
        {
            let e = exclusion_row(&mut rows, s);
            e.planned += 1;
            e.not_run += 1;
        }
    }
    rows.into_values().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hypothesis {
    /// μ₁ vs μ₂ per (model, story).
    H1_1,
    /// Culture levels.
    H1_2,
    /// Gender levels.
    H1_3,
    /// Information conditions P1..P4 at R1.
    H2_1,
    /// Reasoning chains R1..R4 at P1.
    H2_2,
    /// 4x4 (P, R) strength grid.
    Grid,
    /// Answer-range histogram per model.
    Range,
}

impl Hypothesis {
    pub const ALL: [Hypothesis; 7] = [
        Self::H1_1,
        Self::H1_2,
        Self::H1_3,
        Self::H2_1,
        Self::H2_2,
        Self::Grid,
        Self::Range,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Self::H1_1 => "h1-1",
            Self::H1_2 => "h1-2",
            Self::H1_3 => "h1-3",
            Self::H2_1 => "h2-1",
            Self::H2_2 => "h2-2",
            Self::Grid => "grid",
            Self::Range => "range",
        }
    }

    /// Default hypothesis set for a study number.
    pub fn for_study(study: u8) -> &'static [Hypothesis] {
        match study {
            1 => &[Self::H1_1, Self::H1_2, Self::H1_3],
            _ => &[Self::H2_1, Self::H2_2, Self::Grid, Self::Range],
        }
    }
}

impl std::str::FromStr for Hypothesis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|h| h.key() == s)
            .ok_or_else(|| format!("unknown hypothesis `{s}`"))
    }
}

/// Everything one hypothesis run produced, including per-cell failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisBundle {
    pub hypothesis: Hypothesis,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub h1: Vec<H1Row>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub demographic: Vec<DemographicReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweeps: Vec<SweepReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grids: Vec<InteractionGrid>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub histograms: Vec<(String, RangeHistogram)>,
    pub exclusions: Vec<ExclusionRow>,
    pub errors: Vec<String>,
}

/// Runs one hypothesis over every (model, story) pair in `records`.
/// Cells with insufficient data are reported in `errors` and skipped.
pub fn run_hypothesis(
    records: &[TrialRecord],
    plan: Option<&[TrialSpec]>,
    hypothesis: Hypothesis,
) -> AnalysisBundle {
    let mut b = AnalysisBundle {
        hypothesis,
        h1: Vec::new(),
        demographic: Vec::new(),
        sweeps: Vec::new(),
        grids: Vec::new(),
        histograms: Vec::new(),
        exclusions: exclusion_counts(records, plan),
        errors: Vec::new(),
    };
    if hypothesis == Hypothesis::Range {
        let mut models: Vec<&str> = Vec::new();
        for r in records {
            if !models.contains(&r.spec.model_id.as_str()) {
                models.push(&r.spec.model_id);
            }
        }
        for m in models {
            let h = range_histogram(records.iter().filter(|r| r.spec.model_id == m));
            b.histograms.push((m.to_string(), h));
        }
        return b;
    }
    for (model, story) in model_story_pairs(records) {
        let res = match hypothesis {
            Hypothesis::H1_1 => h1_fce_report(records, &model, &story).map(|r| b.h1.push(r)),
            Hypothesis::H1_2 => demographic_report(records, &model, &story, Factor::Culture)
                .map(|r| b.demographic.push(r)),
            Hypothesis::H1_3 => demographic_report(records, &model, &story, Factor::Gender)
                .map(|r| b.demographic.push(r)),
            Hypothesis::H2_1 => condition_sweep_report(records, &model, &story, Axis::Info)
                .map(|r| b.sweeps.push(r)),
            Hypothesis::H2_2 => condition_sweep_report(records, &model, &story, Axis::Chain)
                .map(|r| b.sweeps.push(r)),
            Hypothesis::Grid => interaction_grid(records, &model, &story).map(|r| b.grids.push(r)),
            Hypothesis::Range => unreachable!("handled above"),
        };
        if let Err(e) = res {
            b.errors.push(e.to_string());
        }
    }
    b
}
