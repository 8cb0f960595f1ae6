//! Regenerates the synthetic replay fixtures shipped under `fixtures/replay`.
//!
//! ```text
//! cargo run -p fce-core --example make_fixtures -- [fixtures-dir]
//! ```
//!
//! Every generated answer is checked against the parser before it is
//! written, and the cell targets below are asserted after generation.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use fce_core::analysis::{bucket_index, RangeHistogram};
use fce_core::client::{ReplayAnswer, ReplayEntry};
use fce_core::materials::{Corpus, OptionId, Story, StoryId};
use fce_core::parsing::{extract_agreement, ParseStatus};
use fce_core::protocol::{
    build_conversation, build_trial_matrix, ChainCondition, InfoCondition, MatrixSpec, Mode,
    TrialSpec, SLOT_DIRECT_ANSWER, SLOT_REASONING,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STUDY1_MODELS: [&str; 4] = ["gpt-4", "claude-3", "llama-2", "mixtral"];
const STUDY2_MODELS: [&str; 2] = ["gpt-4", "claude-3"];

/// GPT-4 supermarket strengths along the info axis at R1.
const SUPERMARKET_INFO_R1: [f64; 4] = [8.3, 20.0, -9.5, 19.5];
/// GPT-4 supermarket strengths along the chain axis at P1 (R1 shared above).
const SUPERMARKET_CHAIN_P1: [f64; 4] = [8.3, 10.0, 6.5, 12.0];
/// Target on-option-1 histogram for the GPT-4 Study-2 fixture.
const GPT4_HISTOGRAM: [usize; 7] = [0, 0, 4, 5030, 86, 0, 0];

fn natural_names(story: &StoryId) -> (&'static str, &'static str) {
    match story.as_str() {
        "term_paper" => ("individual paper", "group paper"),
        "supermarket" => ("signing the release", "not signing"),
        "traffic_ticket" => ("pay the fine", "contest the charge"),
        "space_rnd" => ("vote for the cutback", "vote against the cutback"),
        other => panic!("no natural names for story {other}"),
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

/// A varied, parser-checked rendering of the pair `(x, 100 - x)`.
fn phrase(rng: &mut ChaCha8Rng, story: &Story, x: i64) -> String {
    let y = 100 - x;
    let (n1, n2) = natural_names(&story.id);
    let (l1, l2) = (story.label(OptionId::Opt1), story.label(OptionId::Opt2));
    let text = match rng.random_range(0..8) {
        0 => format!("{}: {x}%, {}: {y}%", capitalize(n1), capitalize(n2)),
        1 => format!("I estimate that {x}% would choose \"{l1}\" and {y}% would choose \"{l2}\"."),
        2 => format!("Option 1: {x}%\nOption 2: {y}%"),
        3 => format!("{y}% would prefer \"{l2}\", while {x}% would prefer \"{l1}\"."),
        4 => format!("My estimate is {x}% for {n1} and {y}% for {n2}."),
        5 => format!("{}: {x}%\n{}: {y}%", capitalize(n1), capitalize(n2)),
        6 => format!("Among the other participants, I think {x}% lean toward {n1}; the remaining {y}% toward {n2}."),
        _ => format!("Perceived agreement:\n- {l1}: {x}%\n- {l2}: {y}%\nThese add up to 100%."),
    };
    let out = extract_agreement(&text, story);
    let pair = out
        .pair
        .unwrap_or_else(|| panic!("template does not parse ({:?}): {text}", out.status));
    assert_eq!(
        (pair.on_option1, pair.on_option2),
        (x as f64, y as f64),
        "template misparsed: {text}"
    );
    text
}

fn refusal(rng: &mut ChaCha8Rng, story: &Story) -> (String, ParseStatus) {
    let (n1, n2) = natural_names(&story.id);
    let (text, status) = match rng.random_range(0..3) {
        0 => (
            "As an AI, I don't have the ability to know how other people would decide.".to_string(),
            ParseStatus::Refusal,
        ),
        1 => (
            format!("Somewhere between 40% and 60% would pick {n1}."),
            ParseStatus::Ambiguous,
        ),
        _ => (
            format!("Opinions would be split: many would choose {n1} and many {n2}."),
            ParseStatus::NonNumeric,
        ),
    };
    assert_eq!(extract_agreement(&text, story).status, status, "{text}");
    (text, status)
}

fn intermediate(slot: &str, story: &Story, rng: &mut ChaCha8Rng) -> String {
    let (n1, n2) = natural_names(&story.id);
    match slot {
        s if s == SLOT_DIRECT_ANSWER => {
            let x = rng.random_range(40..=60);
            format!(
                "My first guess: about {x}% for {n1} and {}% for {n2}.",
                100 - x
            )
        }
        s if s == SLOT_REASONING => format!(
            "Let me think step by step. People who value fairness may prefer to {n1}, \
             while others worry about the cost and would rather {n2}. Both groups are sizeable."
        ),
        other => panic!("unexpected intermediate slot {other}"),
    }
}

/// Per-persona on-option-1 values `(fed opt1, fed opt2)` whose mean
/// difference is exactly `strength`.
fn cell_values(rng: &mut ChaCha8Rng, n: usize, strength: f64, center: i64) -> Vec<(i64, i64)> {
    let total = strength * n as f64;
    assert!(
        (total - total.round()).abs() < 1e-9,
        "strength {strength} not representable with n={n}"
    );
    let total = total.round() as i64;
    let base = (strength.round()) as i64;
    let mut deltas: Vec<i64> = (0..n).map(|_| base + rng.random_range(-5..=5)).collect();
    let mut gap = total - deltas.iter().sum::<i64>();
    let mut i = 0;
    while gap != 0 {
        let step = gap.signum();
        deltas[i % n] += step;
        gap -= step;
        i += 1;
    }
    deltas
        .into_iter()
        .map(|d| {
            let a = center + (d as f64 / 2.0).ceil() as i64 + rng.random_range(-3..=3);
            let b = a - d;
            assert!(
                (31..70).contains(&a) && (31..70).contains(&b),
                "value out of range: {a} {b}"
            );
            (a, b)
        })
        .collect()
}

#[derive(Clone)]
enum Planned {
    Pair(i64),
    Excluded,
}

type CellKey = (String, InfoCondition, ChainCondition);

struct Study {
    specs: Vec<TrialSpec>,
    answers: BTreeMap<String, Planned>,
}

fn study(models: &[&str], info: &[InfoCondition], chain: &[ChainCondition]) -> Vec<TrialSpec> {
    build_trial_matrix(&MatrixSpec {
        models: models.iter().map(|m| m.to_string()).collect(),
        personas: Corpus::builtin().personas().to_vec(),
        stories: Corpus::builtin()
            .stories()
            .iter()
            .map(|s| s.id.clone())
            .collect(),
        mode: Mode::Forced,
        info: info.to_vec(),
        chain: chain.to_vec(),
    })
    .expect("valid matrix")
}

/// Fills `answers` for every cell of one model from `strength_of`.
fn fill_model(
    rng: &mut ChaCha8Rng,
    study: &mut Study,
    model: &str,
    strength_of: &dyn Fn(&CellKey, &mut ChaCha8Rng) -> f64,
) {
    let mut cells: BTreeMap<(String, usize, usize), Vec<&TrialSpec>> = BTreeMap::new();
    for s in study.specs.iter().filter(|s| s.model_id == model) {
        cells
            .entry((s.story_id.to_string(), s.info.index(), s.chain.index()))
            .or_default()
            .push(s);
    }
    for ((story, p, r), specs) in cells {
        let key = (story.clone(), InfoCondition::ALL[p], ChainCondition::ALL[r]);
        let strength = strength_of(&key, rng);
        let center = 50 + rng.random_range(-3..=3);
        let mut personas: Vec<&str> = specs.iter().map(|s| s.persona.name.as_str()).collect();
        personas.sort_unstable();
        personas.dedup();
        let values = cell_values(rng, personas.len(), strength, center);
        for s in specs {
            let k = personas
                .iter()
                .position(|n| *n == s.persona.name)
                .expect("persona in cell");
            let (a, b) = values[k];
            let x = if s.fed_option == Some(OptionId::Opt1) {
                a
            } else {
                b
            };
            study.answers.insert(s.trial_id.clone(), Planned::Pair(x));
        }
    }
}

fn write_study(dir: &Path, study: &Study, rng: &mut ChaCha8Rng) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let corpus = Corpus::builtin();
    let mut files: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for spec in &study.specs {
        let story = corpus.story(&spec.story_id).expect("story");
        let plan = build_conversation(corpus, spec).expect("plan");
        let mut answers = Vec::new();
        for slot in plan.generated_slots() {
            let text = if slot == plan.answer_slot {
                match &study.answers[&spec.trial_id] {
                    Planned::Pair(x) => phrase(rng, story, *x),
                    Planned::Excluded => refusal(rng, story).0,
                }
            } else {
                intermediate(slot, story, rng)
            };
            answers.push(ReplayAnswer {
                slot: slot.to_string(),
                text,
            });
        }
        let entry = ReplayEntry {
            trial_id: spec.trial_id.clone(),
            answers,
        };
        let buf = files.entry(spec.model_id.as_str()).or_default();
        serde_json::to_writer(&mut *buf, &entry)?;
        buf.push(b'\n');
    }
    for (model, bytes) in files {
        let path = dir.join(format!("{model}.jsonl"));
        std::fs::File::create(&path)?.write_all(&bytes)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn half_steps(rng: &mut ChaCha8Rng, lo: i64, hi: i64) -> f64 {
    rng.random_range(lo * 2..=hi * 2) as f64 / 2.0
}

fn study1(rng: &mut ChaCha8Rng) -> Study {
    let specs = study(&STUDY1_MODELS, &[InfoCondition::P1], &[ChainCondition::R1]);
    let mut s = Study {
        specs,
        answers: BTreeMap::new(),
    };
    for model in STUDY1_MODELS {
        fill_model(rng, &mut s, model, &|_, rng| half_steps(rng, 0, 18));
    }
    // Claude-3 on the term paper story: every fed-opt1 answer is 60/40 and
    // every fed-opt2 answer 40/60.
    for spec in s
        .specs
        .iter()
        .filter(|t| t.model_id == "claude-3" && t.story_id.as_str() == "term_paper")
    {
        let x = if spec.fed_option == Some(OptionId::Opt1) {
            60
        } else {
            40
        };
        s.answers.insert(spec.trial_id.clone(), Planned::Pair(x));
    }
    // A handful of unusable answers for the open-weight models.
    let mut n = 0;
    for spec in s
        .specs
        .iter()
        .filter(|t| t.model_id == "llama-2" || t.model_id == "mixtral")
    {
        if rng.random_range(0..40) == 0 {
            s.answers.insert(spec.trial_id.clone(), Planned::Excluded);
            n += 1;
        }
    }
    println!("study 1: {n} excluded answers");
    s
}

fn study2(rng: &mut ChaCha8Rng) -> Study {
    let specs = study(&STUDY2_MODELS, &InfoCondition::ALL, &ChainCondition::ALL);
    let mut s = Study {
        specs,
        answers: BTreeMap::new(),
    };
    fill_model(rng, &mut s, "gpt-4", &|(story, p, r), rng| {
        if story == "supermarket" && *r == ChainCondition::R1 {
            SUPERMARKET_INFO_R1[p.index()]
        } else if story == "supermarket" && *p == InfoCondition::P1 {
            SUPERMARKET_CHAIN_P1[r.index()]
        } else {
            half_steps(rng, -6, 18)
        }
    });
    fill_model(rng, &mut s, "claude-3", &|_, rng| half_steps(rng, -4, 16));

    // Move a few GPT-4 answers into the outer buckets, away from the
    // supermarket cells used by the sweeps.
    let outer: Vec<&TrialSpec> = s
        .specs
        .iter()
        .filter(|t| {
            t.model_id == "gpt-4" && matches!(t.story_id.as_str(), "traffic_ticket" | "space_rnd")
        })
        .collect();
    let high = outer
        .iter()
        .filter(|t| t.fed_option == Some(OptionId::Opt1))
        .step_by(7)
        .take(86);
    for (k, t) in high.enumerate() {
        s.answers
            .insert(t.trial_id.clone(), Planned::Pair(70 + (k as i64 % 10)));
    }
    let low = outer
        .iter()
        .filter(|t| t.fed_option == Some(OptionId::Opt2))
        .step_by(101)
        .take(4);
    for (k, t) in low.enumerate() {
        s.answers
            .insert(t.trial_id.clone(), Planned::Pair(25 + k as i64));
    }

    let mut hist = RangeHistogram::default();
    for t in s.specs.iter().filter(|t| t.model_id == "gpt-4") {
        if let Planned::Pair(x) = s.answers[&t.trial_id] {
            hist.counts[bucket_index(x as f64)] += 1;
        }
    }
    assert_eq!(hist.counts, GPT4_HISTOGRAM, "GPT-4 histogram target");

    let mut n = 0;
    for spec in s.specs.iter().filter(|t| t.model_id == "claude-3") {
        if rng.random_range(0..200) == 0 {
            s.answers.insert(spec.trial_id.clone(), Planned::Excluded);
            n += 1;
        }
    }
    println!("study 2: {n} excluded claude-3 answers");
    s
}

fn main() -> std::io::Result<()> {
    let root = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"));
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let s1 = study1(&mut rng);
    write_study(&root.join("replay/study1"), &s1, &mut rng)?;
    let s2 = study2(&mut rng);
    write_study(&root.join("replay/study2"), &s2, &mut rng)?;
    Ok(())
}
