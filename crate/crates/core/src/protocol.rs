//! Trial matrix expansion and the per-trial conversation state machine.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::materials::{Corpus, MaterialsError, OptionId, Persona, StoryId};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Materials(#[from] MaterialsError),
    #[error("free-choice mode cannot use {0}: it needs a fed option")]
    FreeChoiceCondition(InfoCondition),
    #[error("forced mode requires a fed option (trial {0})")]
    MissingFedOption(String),
    #[error("history diverges from plan at step {step}: {reason}")]
    Divergence { step: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

/// Information injected after the fed option.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InfoCondition {
    /// Nothing.
    P1,
    /// Reasoning for the fed option.
    P2,
    /// Reasoning for the other option.
    P3,
    /// The shared irrelevant paragraph.
    P4,
}

impl InfoCondition {
    pub const ALL: [InfoCondition; 4] = [Self::P1, Self::P2, Self::P3, Self::P4];

    pub fn tag(self) -> &'static str {
        match self {
            Self::P1 => "P1",
            Self::P2 => "P2",
            Self::P3 => "P3",
            Self::P4 => "P4",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for InfoCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// How the agreement question is asked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChainCondition {
    /// Answer only.
    R1,
    /// Answer plus reasoning.
    R2,
    /// Direct answer, then a step-by-step follow-up.
    R3,
    /// Step-by-step reasoning, then a reflection turn.
    R4,
}

impl ChainCondition {
    pub const ALL: [ChainCondition; 4] = [Self::R1, Self::R2, Self::R3, Self::R4];

    pub fn tag(self) -> &'static str {
        match self {
            Self::R1 => "R1",
            Self::R2 => "R2",
            Self::R3 => "R3",
            Self::R4 => "R4",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ChainCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Forced,
    FreeChoice,
}

impl Mode {
    pub fn key(self) -> &'static str {
        match self {
            Mode::Forced => "forced",
            Mode::FreeChoice => "free_choice",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrialSpec {
    pub trial_id: String,
    pub model_id: String,
    pub persona: Persona,
    pub story_id: StoryId,
    pub mode: Mode,
    pub fed_option: Option<OptionId>,
    pub info: InfoCondition,
    pub chain: ChainCondition,
}

impl TrialSpec {
    pub fn new(
        model_id: &str,
        persona: &Persona,
        story_id: &StoryId,
        mode: Mode,
        fed_option: Option<OptionId>,
        info: InfoCondition,
        chain: ChainCondition,
    ) -> Self {
        TrialSpec {
            trial_id: trial_id(
                model_id,
                &persona.name,
                story_id,
                mode,
                fed_option,
                info,
                chain,
            ),
            model_id: model_id.to_string(),
            persona: persona.clone(),
            story_id: story_id.clone(),
            mode,
            fed_option,
            info,
            chain,
        }
    }
}

/// First 16 hex digits of SHA-256 over `model|persona|story|mode|fed|P|R`.
pub fn trial_id(
    model_id: &str,
    persona_name: &str,
    story_id: &StoryId,
    mode: Mode,
    fed_option: Option<OptionId>,
    info: InfoCondition,
    chain: ChainCondition,
) -> String {
    let fed = fed_option.map_or("none", OptionId::key);
    let key = format!(
        "{model_id}|{persona_name}|{story_id}|{}|{fed}|{info}|{chain}",
        mode.key()
    );
    Sha256::digest(key.as_bytes())[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Axes of a trial matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSpec {
    pub models: Vec<String>,
    pub personas: Vec<Persona>,
    pub stories: Vec<StoryId>,
    pub mode: Mode,
    pub info: Vec<InfoCondition>,
    pub chain: Vec<ChainCondition>,
}

/// Expands the Cartesian product per model: personas, stories, fed options
/// (forced mode only), info conditions, chain conditions, in that nesting.
pub fn build_trial_matrix(matrix: &MatrixSpec) -> Result<Vec<TrialSpec>> {
    let axes = [
        ("models", matrix.models.is_empty()),
        ("personas", matrix.personas.is_empty()),
        ("stories", matrix.stories.is_empty()),
        ("info conditions", matrix.info.is_empty()),
        ("chain conditions", matrix.chain.is_empty()),
    ];
    if let Some((axis, _)) = axes.iter().find(|(_, empty)| *empty) {
        return Err(ProtocolError::Config(format!("{axis} must not be empty")));
    }
    if matrix.mode == Mode::FreeChoice {
        if let Some(&p) = matrix
            .info
            .iter()
            .find(|p| matches!(p, InfoCondition::P2 | InfoCondition::P3))
        {
            return Err(ProtocolError::FreeChoiceCondition(p));
        }
    }
    let fed: Vec<Option<OptionId>> = match matrix.mode {
        Mode::Forced => OptionId::BOTH.iter().copied().map(Some).collect(),
        Mode::FreeChoice => vec![None],
    };
    let mut specs = Vec::with_capacity(
        matrix.models.len()
            * matrix.personas.len()
            * matrix.stories.len()
            * fed.len()
            * matrix.info.len()
            * matrix.chain.len(),
    );
    for model in &matrix.models {
        for persona in &matrix.personas {
            for story in &matrix.stories {
                for &fed_option in &fed {
                    for &info in &matrix.info {
                        for &chain in &matrix.chain {
                            specs.push(TrialSpec::new(
                                model,
                                persona,
                                story,
                                matrix.mode,
                                fed_option,
                                info,
                                chain,
                            ));
                        }
                    }
                }
            }
        }
    }
    Ok(specs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum PlanStep {
    FixedSystem(String),
    FixedUser(String),
    FixedAssistant(String),
    GeneratedAssistant(String),
}

impl PlanStep {
    pub fn role(&self) -> Role {
        match self {
            PlanStep::FixedSystem(_) => Role::System,
            PlanStep::FixedUser(_) => Role::User,
            PlanStep::FixedAssistant(_) | PlanStep::GeneratedAssistant(_) => Role::Assistant,
        }
    }
}

pub const SLOT_CHOICE: &str = "choice";
pub const SLOT_ANSWER: &str = "answer";
pub const SLOT_DIRECT_ANSWER: &str = "direct_answer";
pub const SLOT_REASONING: &str = "reasoning";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationPlan {
    pub steps: Vec<PlanStep>,
    pub answer_slot: String,
    /// Slot holding the model's own choice in free-choice mode.
    pub choice_slot: Option<String>,
}

impl ConversationPlan {
    pub fn generated_slots(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().filter_map(|s| match s {
            PlanStep::GeneratedAssistant(slot) => Some(slot.as_str()),
            _ => None,
        })
    }

    pub fn fixed_count(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| !matches!(s, PlanStep::GeneratedAssistant(_)))
            .count()
    }
}

/// Builds the transcript layout for one trial.
///
/// After the system and story turns the plan holds the fed option (or a
/// generated choice), the optional information turn, and then the
/// chain-specific questions. The information turn is a second consecutive
/// assistant message, as if the model had explained its choice.
pub fn build_conversation(corpus: &Corpus, spec: &TrialSpec) -> Result<ConversationPlan> {
    let story = corpus.story(&spec.story_id)?;
    let prompts = corpus.prompts();
    let mut steps = vec![
        PlanStep::FixedSystem(prompts.render_system(&spec.persona)),
        PlanStep::FixedUser(prompts.render_story(story)),
    ];
    let mut choice_slot = None;
    match (spec.mode, spec.fed_option) {
        (Mode::Forced, Some(opt)) => {
            steps.push(PlanStep::FixedAssistant(story.label(opt).to_string()))
        }
        (Mode::Forced, None) => return Err(ProtocolError::MissingFedOption(spec.trial_id.clone())),
        (Mode::FreeChoice, _) => {
            steps.push(PlanStep::GeneratedAssistant(SLOT_CHOICE.to_string()));
            choice_slot = Some(SLOT_CHOICE.to_string());
        }
    }

    let info_text = match (spec.info, spec.fed_option) {
        (InfoCondition::P1, _) => None,
        (InfoCondition::P4, _) => Some(corpus.irrelevant_text().text.clone()),
        (p @ (InfoCondition::P2 | InfoCondition::P3), None) => {
            return Err(ProtocolError::FreeChoiceCondition(p))
        }
        (InfoCondition::P2, Some(opt)) => Some(
            corpus
                .reasoning_text(&spec.model_id, &spec.story_id, opt)?
                .text
                .clone(),
        ),
        (InfoCondition::P3, Some(opt)) => Some(
            corpus
                .reasoning_text(&spec.model_id, &spec.story_id, opt.other())?
                .text
                .clone(),
        ),
    };
    if let Some(text) = info_text {
        steps.push(PlanStep::FixedAssistant(text));
    }

    let gen = |slot: &str| PlanStep::GeneratedAssistant(slot.to_string());
    match spec.chain {
        ChainCondition::R1 => {
            steps.push(PlanStep::FixedUser(prompts.direct_question()));
            steps.push(gen(SLOT_ANSWER));
        }
        ChainCondition::R2 => {
            steps.push(PlanStep::FixedUser(prompts.reasoned_question()));
            steps.push(gen(SLOT_ANSWER));
        }
        ChainCondition::R3 => {
            steps.push(PlanStep::FixedUser(prompts.cot_direct.clone()));
            steps.push(gen(SLOT_DIRECT_ANSWER));
            steps.push(PlanStep::FixedUser(prompts.step_by_step_question()));
            steps.push(gen(SLOT_ANSWER));
        }
        ChainCondition::R4 => {
            steps.push(PlanStep::FixedUser(prompts.step_by_step_question()));
            steps.push(gen(SLOT_REASONING));
            steps.push(PlanStep::FixedUser(prompts.reflect_question()));
            steps.push(gen(SLOT_ANSWER));
        }
    }
    Ok(ConversationPlan {
        steps,
        answer_slot: SLOT_ANSWER.to_string(),
        choice_slot,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Fixed,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    SendFixed { role: Role, text: String },
    AwaitGeneration { slot: String },
    Done,
}

/// Next driver action for a partially realized plan.
///
/// `history` must match the plan step by step: fixed messages byte for
/// byte, generated messages by role and slot.
pub fn next_message(plan: &ConversationPlan, history: &[Message]) -> Result<Action> {
    if history.len() > plan.steps.len() {
        return Err(ProtocolError::Divergence {
            step: plan.steps.len(),
            reason: format!(
                "history has {} messages, plan has {} steps",
                history.len(),
                plan.steps.len()
            ),
        });
    }
    for (i, (step, msg)) in plan.steps.iter().zip(history).enumerate() {
        if msg.role != step.role() {
            return Err(ProtocolError::Divergence {
                step: i,
                reason: format!("expected {:?} message, found {:?}", step.role(), msg.role),
            });
        }
        match step {
            PlanStep::FixedSystem(t) | PlanStep::FixedUser(t) | PlanStep::FixedAssistant(t) => {
                if msg.origin != Origin::Fixed || &msg.text != t {
                    return Err(ProtocolError::Divergence {
                        step: i,
                        reason: "fixed message does not match the plan".into(),
                    });
                }
            }
            PlanStep::GeneratedAssistant(slot) => {
                if msg.origin != Origin::Generated || msg.slot.as_deref() != Some(slot) {
                    return Err(ProtocolError::Divergence {
                        step: i,
                        reason: format!("expected generation for slot {slot:?}"),
                    });
                }
            }
        }
    }
    Ok(match plan.steps.get(history.len()) {
        None => Action::Done,
        Some(PlanStep::GeneratedAssistant(slot)) => Action::AwaitGeneration { slot: slot.clone() },
        Some(
            step
            @ (PlanStep::FixedSystem(t) | PlanStep::FixedUser(t) | PlanStep::FixedAssistant(t)),
        ) => Action::SendFixed {
            role: step.role(),
            text: t.clone(),
        },
    })
}
