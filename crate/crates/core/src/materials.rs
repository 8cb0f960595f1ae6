//! Experimental corpus: personas, stories, prompt templates and the
//! per-model reasoning texts.
//!
//! The built-in corpus ships as TOML files embedded at compile time and is
//! checked against `manifest.toml` on load. [`Corpus::load_dir`] reads the
//! same layout from disk so new stories, personas or models can be added.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaterialsError {
    #[error("checksum mismatch for {file}: expected {expected}, found {found}")]
    Checksum {
        file: String,
        expected: String,
        found: String,
    },
    #[error("{file} is listed in the manifest but missing")]
    MissingFile { file: String },
    #[error("failed to parse {file}: {message}")]
    Parse { file: String, message: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid corpus: {0}")]
    Invalid(String),
    #[error("no reasoning text for model {model:?}, story {story}, option {option}")]
    MissingReasoning {
        model: String,
        story: StoryId,
        option: OptionId,
    },
    #[error("unknown story {0:?}")]
    UnknownStory(String),
}

pub type Result<T> = std::result::Result<T, MaterialsError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Man,
    Woman,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Man, Gender::Woman];

    pub fn word(self) -> &'static str {
        match self {
            Gender::Man => "man",
            Gender::Woman => "woman",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Culture {
    Korean,
    EuropeanAmerican,
}

impl Culture {
    pub const ALL: [Culture; 2] = [Culture::Korean, Culture::EuropeanAmerican];

    /// Text used in the system prompt.
    pub fn word(self) -> &'static str {
        match self {
            Culture::Korean => "Korean",
            Culture::EuropeanAmerican => "European American",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Culture::Korean => "korean",
            Culture::EuropeanAmerican => "european_american",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Persona {
    pub name: String,
    pub gender: Gender,
    pub culture: Culture,
}

/// Story identifier such as `term_paper`. Kept as text so corpus
/// directories can add stories beyond the four built-in ones.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StoryId(pub String);

impl StoryId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for StoryId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

pub const BUILTIN_STORY_IDS: [&str; 4] =
    ["term_paper", "supermarket", "traffic_ticket", "space_rnd"];
pub const BUILTIN_MODEL_IDS: [&str; 4] = ["gpt-4", "claude-3", "llama-2", "mixtral"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionId {
    Opt1,
    Opt2,
}

impl OptionId {
    pub const BOTH: [OptionId; 2] = [OptionId::Opt1, OptionId::Opt2];

    pub fn other(self) -> Self {
        match self {
            OptionId::Opt1 => OptionId::Opt2,
            OptionId::Opt2 => OptionId::Opt1,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            OptionId::Opt1 => "opt1",
            OptionId::Opt2 => "opt2",
        }
    }
}

impl fmt::Display for OptionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryOption {
    pub label: String,
    /// Lower-case phrases that refer to this option in free text.
    #[serde(default)]
    pub aliases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Story {
    pub id: StoryId,
    pub number: u32,
    pub title: String,
    pub body: String,
    pub option1: StoryOption,
    pub option2: StoryOption,
}

impl Story {
    pub fn option(&self, which: OptionId) -> &StoryOption {
        match which {
            OptionId::Opt1 => &self.option1,
            OptionId::Opt2 => &self.option2,
        }
    }

    pub fn label(&self, which: OptionId) -> &str {
        &self.option(which).label
    }

    pub fn choice_question(&self) -> String {
        format!(
            "What should you do, {} or {}?",
            self.option1.label, self.option2.label
        )
    }

    /// The same story with its two options exchanged.
    pub fn swapped(&self) -> Story {
        Story {
            option1: self.option2.clone(),
            option2: self.option1.clone(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningText {
    pub model_id: String,
    pub story_id: StoryId,
    pub option: OptionId,
    pub text: String,
    pub token_count_hint: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrrelevantText {
    pub text: String,
    pub token_count_hint: u32,
}

/// Prompt fragments; see `corpus/prompts.toml` for the placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplates {
    pub system: String,
    pub story: String,
    pub agreement: String,
    pub direct_suffix: String,
    pub reasoned_suffix: String,
    pub cot_direct: String,
    pub step_by_step: String,
    pub reflect: String,
}

impl PromptTemplates {
    pub fn render_system(&self, persona: &Persona) -> String {
        self.system
            .replace("{name}", &persona.name)
            .replace("{gender}", persona.gender.word())
            .replace("{culture}", persona.culture.word())
    }

    pub fn render_story(&self, story: &Story) -> String {
        self.story
            .replace("{body}", &story.body)
            .replace("{option1}", &story.option1.label)
            .replace("{option2}", &story.option2.label)
    }

    /// Agreement question with the short "no reasoning" suffix.
    pub fn direct_question(&self) -> String {
        format!("{}\n{}", self.agreement, self.direct_suffix)
    }

    /// Agreement question asking for an answer plus reasoning.
    pub fn reasoned_question(&self) -> String {
        format!("{}\n{}", self.agreement, self.reasoned_suffix)
    }

    pub fn step_by_step_question(&self) -> String {
        format!("{}\n{}", self.step_by_step, self.agreement)
    }

    pub fn reflect_question(&self) -> String {
        format!(
            "{}\n{}\n{}",
            self.reflect, self.agreement, self.reasoned_suffix
        )
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    personas: Vec<Persona>,
    stories: Vec<Story>,
    reasoning: BTreeMap<(String, StoryId, OptionId), ReasoningText>,
    irrelevant: IrrelevantText,
    prompts: PromptTemplates,
}

macro_rules! corpus_file {
    ($path:literal) => {
        ($path, include_str!(concat!("../corpus/", $path)))
    };
}

const BUILTIN_MANIFEST: &str = include_str!("../corpus/manifest.toml");
const BUILTIN_FILES: [(&str, &str); 10] = [
    corpus_file!("personas/korean_man.toml"),
    corpus_file!("personas/korean_woman.toml"),
    corpus_file!("personas/european_american_man.toml"),
    corpus_file!("personas/european_american_woman.toml"),
    corpus_file!("stories/term_paper.toml"),
    corpus_file!("stories/supermarket.toml"),
    corpus_file!("stories/traffic_ticket.toml"),
    corpus_file!("stories/space_rnd.toml"),
    corpus_file!("reasoning.toml"),
    corpus_file!("prompts.toml"),
];

#[derive(Deserialize)]
struct ManifestFile {
    sha256: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct PersonaGroupFile {
    gender: Gender,
    culture: Culture,
    names: Vec<String>,
}

#[derive(Deserialize)]
struct ReasoningFile {
    irrelevant: IrrelevantEntry,
    #[serde(default)]
    entry: Vec<ReasoningEntry>,
}

#[derive(Deserialize)]
struct IrrelevantEntry {
    tokens: u32,
    text: String,
}

#[derive(Deserialize)]
struct ReasoningEntry {
    model: String,
    story: StoryId,
    option: OptionId,
    tokens: u32,
    text: String,
}

fn normalize_newlines(text: &str) -> String {
    text.replace("\r\n", "\n")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn parse_toml<T: for<'de> Deserialize<'de>>(file: &str, text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| MaterialsError::Parse {
        file: file.to_string(),
        message: e.to_string(),
    })
}

fn verify_checksums(manifest: &ManifestFile, files: &BTreeMap<String, String>) -> Result<()> {
    for (file, expected) in &manifest.sha256 {
        let text = files
            .get(file)
            .ok_or_else(|| MaterialsError::MissingFile { file: file.clone() })?;
        let found = sha256_hex(text.as_bytes());
        if !found.eq_ignore_ascii_case(expected) {
            return Err(MaterialsError::Checksum {
                file: file.clone(),
                expected: expected.clone(),
                found,
            });
        }
    }
    Ok(())
}

impl Corpus {
    /// The embedded corpus, verified once per process.
    ///
    /// Panics if the embedded files do not match their manifest, which can
    /// only happen if the crate was built from modified corpus files.
    pub fn builtin() -> &'static Corpus {
        static BUILTIN: OnceLock<Corpus> = OnceLock::new();
        BUILTIN.get_or_init(|| Corpus::load_builtin().expect("embedded corpus is consistent"))
    }

    pub fn load_builtin() -> Result<Corpus> {
        let files: BTreeMap<String, String> = BUILTIN_FILES
            .iter()
            .map(|(name, text)| (name.to_string(), normalize_newlines(text)))
            .collect();
        let manifest: ManifestFile =
            parse_toml("manifest.toml", &normalize_newlines(BUILTIN_MANIFEST))?;
        Corpus::from_files(Some(&manifest), &files)
    }

    /// Loads a corpus directory with the built-in layout: `stories/*.toml`,
    /// `personas/*.toml`, `reasoning.toml`, `prompts.toml`, and optionally
    /// `manifest.toml`, whose checksums are enforced when present.
    pub fn load_dir(dir: &Path) -> Result<Corpus> {
        let mut files = BTreeMap::new();
        for sub in ["stories", "personas"] {
            let path = dir.join(sub);
            let entries = std::fs::read_dir(&path).map_err(|source| MaterialsError::Io {
                path: path.clone(),
                source,
            })?;
            for entry in entries {
                let entry = entry.map_err(|source| MaterialsError::Io {
                    path: path.clone(),
                    source,
                })?;
                let p = entry.path();
                if p.extension().is_some_and(|e| e == "toml") {
                    let name = format!("{sub}/{}", entry.file_name().to_string_lossy());
                    files.insert(name, read_text(&p)?);
                }
            }
        }
        for name in ["reasoning.toml", "prompts.toml"] {
            files.insert(name.to_string(), read_text(&dir.join(name))?);
        }
        let manifest_path = dir.join("manifest.toml");
        let manifest = if manifest_path.exists() {
            Some(parse_toml::<ManifestFile>(
                "manifest.toml",
                &read_text(&manifest_path)?,
            )?)
        } else {
            None
        };
        Corpus::from_files(manifest.as_ref(), &files)
    }

    fn from_files(
        manifest: Option<&ManifestFile>,
        files: &BTreeMap<String, String>,
    ) -> Result<Corpus> {
        if let Some(m) = manifest {
            verify_checksums(m, files)?;
        }

        let mut groups = Vec::new();
        for (name, text) in files.iter().filter(|(n, _)| n.starts_with("personas/")) {
            let g: PersonaGroupFile = parse_toml(name, text)?;
            groups.push((name.clone(), g));
        }
        groups
            .sort_by(|a, b| (a.1.culture, a.1.gender, &a.0).cmp(&(b.1.culture, b.1.gender, &b.0)));
        let personas: Vec<Persona> = groups
            .into_iter()
            .flat_map(|(_, g)| {
                g.names.into_iter().map(move |name| Persona {
                    name,
                    gender: g.gender,
                    culture: g.culture,
                })
            })
            .collect();

        let mut stories = Vec::new();
        for (name, text) in files.iter().filter(|(n, _)| n.starts_with("stories/")) {
            let mut s: Story = parse_toml(name, text)?;
            for opt in [&mut s.option1, &mut s.option2] {
                for alias in &mut opt.aliases {
                    *alias = alias.to_lowercase();
                }
            }
            stories.push(s);
        }
        stories.sort_by(|a, b| (a.number, &a.id).cmp(&(b.number, &b.id)));

        let reasoning_file: ReasoningFile = parse_toml(
            "reasoning.toml",
            files
                .get("reasoning.toml")
                .ok_or_else(|| MaterialsError::MissingFile {
                    file: "reasoning.toml".into(),
                })?,
        )?;
        let prompts: PromptTemplates = parse_toml(
            "prompts.toml",
            files
                .get("prompts.toml")
                .ok_or_else(|| MaterialsError::MissingFile {
                    file: "prompts.toml".into(),
                })?,
        )?;

        let mut reasoning = BTreeMap::new();
        for e in reasoning_file.entry {
            let key = (e.model.clone(), e.story.clone(), e.option);
            let text = ReasoningText {
                model_id: e.model,
                story_id: e.story,
                option: e.option,
                text: e.text,
                token_count_hint: e.tokens,
            };
            if reasoning.insert(key.clone(), text).is_some() {
                return Err(MaterialsError::Invalid(format!(
                    "duplicate reasoning entry for {} / {} / {}",
                    key.0, key.1, key.2
                )));
            }
        }

        let corpus = Corpus {
            personas,
            stories,
            reasoning,
            irrelevant: IrrelevantText {
                text: reasoning_file.irrelevant.text,
                token_count_hint: reasoning_file.irrelevant.tokens,
            },
            prompts,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for p in &self.personas {
            if p.name.trim().is_empty() {
                return Err(MaterialsError::Invalid("empty persona name".into()));
            }
            if !names.insert(p.name.as_str()) {
                return Err(MaterialsError::Invalid(format!(
                    "duplicate persona {:?}",
                    p.name
                )));
            }
        }
        let mut ids = HashSet::new();
        for s in &self.stories {
            if !ids.insert(&s.id) {
                return Err(MaterialsError::Invalid(format!("duplicate story {}", s.id)));
            }
            if s.option1.label == s.option2.label {
                return Err(MaterialsError::Invalid(format!(
                    "story {} has identical option labels",
                    s.id
                )));
            }
        }
        for key in self.reasoning.keys() {
            if !ids.contains(&key.1) {
                return Err(MaterialsError::Invalid(format!(
                    "reasoning entry refers to unknown story {}",
                    key.1
                )));
            }
        }
        Ok(())
    }

    pub fn personas(&self) -> &[Persona] {
        &self.personas
    }

    pub fn persona(&self, name: &str) -> Option<&Persona> {
        self.personas.iter().find(|p| p.name == name)
    }

    pub fn stories(&self) -> &[Story] {
        &self.stories
    }

    pub fn story(&self, id: &StoryId) -> Result<&Story> {
        self.stories
            .iter()
            .find(|s| &s.id == id)
            .ok_or_else(|| MaterialsError::UnknownStory(id.0.clone()))
    }

    pub fn prompts(&self) -> &PromptTemplates {
        &self.prompts
    }

    pub fn reasoning_text(
        &self,
        model_id: &str,
        story: &StoryId,
        option: OptionId,
    ) -> Result<&ReasoningText> {
        self.reasoning
            .get(&(model_id.to_string(), story.clone(), option))
            .ok_or_else(|| MaterialsError::MissingReasoning {
                model: model_id.to_string(),
                story: story.clone(),
                option,
            })
    }

    pub fn reasoning_entries(&self) -> impl Iterator<Item = &ReasoningText> {
        self.reasoning.values()
    }

    /// Model ids that have reasoning texts.
    pub fn reasoning_models(&self) -> Vec<&str> {
        let mut models: Vec<&str> = self.reasoning.keys().map(|k| k.0.as_str()).collect();
        models.dedup();
        models
    }

    pub fn irrelevant_text(&self) -> &IrrelevantText {
        &self.irrelevant
    }

    pub fn render_system_prompt(&self, persona: &Persona) -> String {
        self.prompts.render_system(persona)
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map(|t| normalize_newlines(&t))
        .map_err(|source| MaterialsError::Io {
            path: path.to_path_buf(),
            source,
        })
}

pub fn builtin_personas() -> Vec<Persona> {
    Corpus::builtin().personas().to_vec()
}

pub fn render_system_prompt(persona: &Persona) -> String {
    Corpus::builtin().render_system_prompt(persona)
}

pub fn reasoning_text(
    model_id: &str,
    story: &StoryId,
    option: OptionId,
) -> Result<&'static ReasoningText> {
    Corpus::builtin().reasoning_text(model_id, story, option)
}

pub fn irrelevant_text() -> &'static IrrelevantText {
    Corpus::builtin().irrelevant_text()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_loads_and_checksums_hold() {
        let corpus = Corpus::load_builtin().unwrap();
        assert_eq!(corpus.personas().len(), 40);
        assert_eq!(corpus.stories().len(), 4);
        assert_eq!(corpus.reasoning_entries().count(), 32);
    }

    #[test]
    fn tampered_file_is_rejected() {
        let mut files: BTreeMap<String, String> = BUILTIN_FILES
            .iter()
            .map(|(n, t)| (n.to_string(), normalize_newlines(t)))
            .collect();
        let manifest: ManifestFile = parse_toml("manifest.toml", BUILTIN_MANIFEST).unwrap();
        files
            .get_mut("prompts.toml")
            .unwrap()
            .push_str("# edited\n");
        let err = Corpus::from_files(Some(&manifest), &files).unwrap_err();
        assert!(matches!(err, MaterialsError::Checksum { ref file, .. } if file == "prompts.toml"));
    }

    #[test]
    fn crlf_is_normalized_before_hashing() {
        let lf = "a = 1\nb = 2\n";
        let crlf = "a = 1\r\nb = 2\r\n";
        assert_eq!(
            sha256_hex(normalize_newlines(lf).as_bytes()),
            sha256_hex(normalize_newlines(crlf).as_bytes())
        );
    }

    #[test]
    fn registry_order_and_cells() {
        let p = builtin_personas();
        assert_eq!(p[0].name, "Jong-Soo Kim");
        assert_eq!((p[0].gender, p[0].culture), (Gender::Man, Culture::Korean));
        assert_eq!(p[10].culture, Culture::Korean);
        assert_eq!(p[10].gender, Gender::Woman);
        assert_eq!(p[30].name, "Mary Smith");
        for g in Gender::ALL {
            for c in Culture::ALL {
                assert_eq!(
                    p.iter().filter(|x| x.gender == g && x.culture == c).count(),
                    10
                );
            }
        }
    }

    #[test]
    fn system_prompt_is_verbatim() {
        let p = &builtin_personas()[0];
        assert_eq!(
            render_system_prompt(p),
            "Your name is Jong-Soo Kim.\nYou are a undergraduate student.\nYou are a man.\nYou are a Korean."
        );
        let mary = Corpus::builtin().persona("Mary Smith").unwrap();
        assert_eq!(
            render_system_prompt(mary),
            "Your name is Mary Smith.\nYou are a undergraduate student.\nYou are a woman.\nYou are a European American."
        );
        for p in builtin_personas() {
            assert_eq!(render_system_prompt(&p).lines().count(), 4);
        }
    }

    #[test]
    fn story_labels() {
        let c = Corpus::builtin();
        let labels: Vec<(&str, &str)> = c
            .stories()
            .iter()
            .map(|s| (s.option1.label.as_str(), s.option2.label.as_str()))
            .collect();
        assert_eq!(
            labels,
            vec![
                ("individual paper", "Choose group paper"),
                ("Sign release", "Not sign release"),
                ("Pay speeding fine", "Contest charge"),
                ("Vote for cutback", "Vote against cutback"),
            ]
        );
        let ids: Vec<&str> = c.stories().iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, BUILTIN_STORY_IDS);
    }

    #[test]
    fn reasoning_lookup() {
        let t = reasoning_text("gpt-4", &"term_paper".into(), OptionId::Opt1).unwrap();
        assert!(t
            .text
            .starts_with("I chose 'individual paper' because it allows you to have full control"));
        let t = reasoning_text("claude-3", &"supermarket".into(), OptionId::Opt2).unwrap();
        assert!(t
            .text
            .starts_with("I would not sign the release because I value my privacy"));
        let err =
            reasoning_text("unknown-model", &"term_paper".into(), OptionId::Opt1).unwrap_err();
        assert!(err.to_string().contains("unknown-model"));
        for e in Corpus::builtin().reasoning_entries() {
            assert!((65..=70).contains(&e.token_count_hint), "{e:?}");
        }
        assert_eq!(Corpus::builtin().reasoning_models(), {
            let mut m = BUILTIN_MODEL_IDS.to_vec();
            m.sort();
            m
        });
    }

    #[test]
    fn irrelevant_paragraph() {
        let t = irrelevant_text();
        assert!(t.text.contains("magical rainbow across the Milky Way"));
        assert_eq!(t.token_count_hint, 68);
        assert!(std::ptr::eq(irrelevant_text(), irrelevant_text()));
    }

    #[test]
    fn dollar_sign_unescaped() {
        let s = Corpus::builtin().story(&"traffic_ticket".into()).unwrap();
        assert!(s.body.contains("pay a $20 fine"));
        assert!(!s.body.contains('\\'));
    }
}
