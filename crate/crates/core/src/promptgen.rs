//! Reading-comprehension task categories and the meta-prompt template registry.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CONVERSATION_START: &str = "=== Conversation Starts ===";
pub const CONVERSATION_END: &str = "=== Conversation Ends ===";
pub const DEFAULT_CLOSING: &str = "Do not include the example output in your response.";

const BUNDLED_REGISTRY: &str = include_str!("../assets/registry.toml");

#[derive(Debug, Error, PartialEq)]
pub enum RegistryError {
    #[error("registry file: {0}")]
    Parse(String),
    #[error("duplicate template id {0:?}")]
    DuplicateId(String),
    #[error("template {template_id:?}: unknown category {category:?}")]
    UnknownCategory {
        template_id: String,
        category: String,
    },
    #[error("template {template_id:?}: {message}")]
    InvalidTemplate {
        template_id: String,
        message: String,
    },
    #[error("registry is empty")]
    EmptyRegistry,
    #[error("no template has positive weight")]
    NoEligibleTemplate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskCategory {
    /// Big-picture understanding of the conversation.
    Skimming,
    /// Extracting specific details.
    Scanning,
    /// Notes, summaries, questions, retrieval.
    ActiveReading,
    /// Assumptions, biases, evidence, speaker perspectives.
    AnalyticalReading,
    /// Turn-taking, utterance organization and intent.
    ConversationAnalytic,
    /// Terminology, structure and composition.
    VocabularyStructure,
    /// Industry- and genre-specific text generation.
    Writing,
}

impl TaskCategory {
    pub const ALL: [TaskCategory; 7] = [
        TaskCategory::Skimming,
        TaskCategory::Scanning,
        TaskCategory::ActiveReading,
        TaskCategory::AnalyticalReading,
        TaskCategory::ConversationAnalytic,
        TaskCategory::VocabularyStructure,
        TaskCategory::Writing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskCategory::Skimming => "skimming",
            TaskCategory::Scanning => "scanning",
            TaskCategory::ActiveReading => "active_reading",
            TaskCategory::AnalyticalReading => "analytical_reading",
            TaskCategory::ConversationAnalytic => "conversation_analytic",
            TaskCategory::VocabularyStructure => "vocabulary_structure",
            TaskCategory::Writing => "writing",
        }
    }
}

impl fmt::Display for TaskCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// Shape the generator is asked to return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedSchema {
    /// `[{"question", "answer"}, ...]`
    QaList,
    /// `[{"task", "output"}, ...]`
    OrderedTaskList,
    /// Any JSON value, kept whole.
    FreeJson,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetaPromptTemplate {
    pub template_id: String,
    pub category: TaskCategory,
    pub meta_instruction: String,
    pub output_requirements: String,
    pub output_example: String,
    pub expected_schema: ExpectedSchema,
    pub tasks_min: u32,
    pub tasks_max: u32,
    pub conversation_start: String,
    pub conversation_end: String,
    pub closing: String,
}

#[derive(Debug, Deserialize)]
struct RawTemplate {
    template_id: String,
    category: String,
    meta_instruction: String,
    output_requirements: String,
    output_example: String,
    expected_schema: ExpectedSchema,
    tasks_min: u32,
    tasks_max: u32,
    conversation_start: Option<String>,
    conversation_end: Option<String>,
    closing: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RawRegistry {
    #[serde(rename = "template", default)]
    templates: Vec<RawTemplate>,
}

impl TryFrom<RawTemplate> for MetaPromptTemplate {
    type Error = RegistryError;

    fn try_from(raw: RawTemplate) -> Result<Self, Self::Error> {
        let category = raw.category.parse::<TaskCategory>().map_err(|category| {
            RegistryError::UnknownCategory {
                template_id: raw.template_id.clone(),
                category,
            }
        })?;
        let t = MetaPromptTemplate {
            template_id: raw.template_id,
            category,
            meta_instruction: raw.meta_instruction,
            output_requirements: raw.output_requirements,
            output_example: raw.output_example,
            expected_schema: raw.expected_schema,
            tasks_min: raw.tasks_min,
            tasks_max: raw.tasks_max,
            conversation_start: raw
                .conversation_start
                .unwrap_or_else(|| CONVERSATION_START.into()),
            conversation_end: raw
                .conversation_end
                .unwrap_or_else(|| CONVERSATION_END.into()),
            closing: raw.closing.unwrap_or_else(|| DEFAULT_CLOSING.into()),
        };
        t.check()?;
        Ok(t)
    }
}

impl MetaPromptTemplate {
    fn check(&self) -> Result<(), RegistryError> {
        let invalid = |message: &str| RegistryError::InvalidTemplate {
            template_id: self.template_id.clone(),
            message: message.to_string(),
        };
        let fields = [
            ("template_id", &self.template_id),
            ("meta_instruction", &self.meta_instruction),
            ("output_requirements", &self.output_requirements),
            ("output_example", &self.output_example),
            ("conversation_start", &self.conversation_start),
            ("conversation_end", &self.conversation_end),
        ];
        for (name, value) in fields {
            if value.trim().is_empty() {
                return Err(invalid(&format!("{name} is empty")));
            }
        }
        if self.tasks_min < 1 || self.tasks_max < self.tasks_min {
            return Err(invalid("tasks_min must be >= 1 and <= tasks_max"));
        }
        Ok(())
    }
}

/// Generation prompt for one transcript and template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub transcript_id: String,
    pub template_id: String,
    pub text: String,
}

/// Immutable set of templates, addressable by id and by category.
#[derive(Debug, Clone)]
pub struct Registry {
    templates: Vec<MetaPromptTemplate>,
    by_id: HashMap<String, usize>,
}

impl Registry {
    pub fn new(templates: Vec<MetaPromptTemplate>) -> Result<Self, RegistryError> {
        let mut by_id = HashMap::with_capacity(templates.len());
        for (i, t) in templates.iter().enumerate() {
            t.check()?;
            if by_id.insert(t.template_id.clone(), i).is_some() {
                return Err(RegistryError::DuplicateId(t.template_id.clone()));
            }
        }
        Ok(Self { templates, by_id })
    }

    pub fn from_toml(text: &str) -> Result<Self, RegistryError> {
        let raw: RawRegistry =
            toml::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))?;
        let templates = raw
            .templates
            .into_iter()
            .map(MetaPromptTemplate::try_from)
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(templates)
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RegistryError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// The registry shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_toml(BUNDLED_REGISTRY).expect("bundled registry is valid")
    }

    pub fn get(&self, template_id: &str) -> Option<&MetaPromptTemplate> {
        self.by_id.get(template_id).map(|&i| &self.templates[i])
    }

    pub fn templates(&self) -> &[MetaPromptTemplate] {
        &self.templates
    }

    pub fn by_category(&self, category: TaskCategory) -> impl Iterator<Item = &MetaPromptTemplate> {
        self.templates
            .iter()
            .filter(move |t| t.category == category)
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    fn weights(&self, category_weights: Option<&BTreeMap<TaskCategory, f64>>) -> Vec<f64> {
        self.templates
            .iter()
            .map(|t| {
                category_weights
                    .and_then(|w| w.get(&t.category).copied())
                    .unwrap_or(1.0)
                    .max(0.0)
            })
            .collect()
    }

    /// One categorical draw. Each template weighs its category's weight (1 when absent).
    pub fn sample_template<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        category_weights: Option<&BTreeMap<TaskCategory, f64>>,
    ) -> Result<&MetaPromptTemplate, RegistryError> {
        if self.templates.is_empty() {
            return Err(RegistryError::EmptyRegistry);
        }
        let dist = WeightedIndex::new(self.weights(category_weights))
            .map_err(|_| RegistryError::NoEligibleTemplate)?;
        Ok(&self.templates[dist.sample(rng)])
    }

    /// Up to `k` distinct templates, drawn one at a time without replacement.
    pub fn sample_distinct<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        category_weights: Option<&BTreeMap<TaskCategory, f64>>,
        k: usize,
    ) -> Result<Vec<&MetaPromptTemplate>, RegistryError> {
        if self.templates.is_empty() {
            return Err(RegistryError::EmptyRegistry);
        }
        let mut weights = self.weights(category_weights);
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            let Ok(dist) = WeightedIndex::new(&weights) else {
                break;
            };
            let i = dist.sample(rng);
            weights[i] = 0.0;
            out.push(&self.templates[i]);
        }
        if out.is_empty() && k > 0 {
            return Err(RegistryError::NoEligibleTemplate);
        }
        Ok(out)
    }
}

/// Transcript between delimiters, then instruction, requirements, example and closing.
pub fn render_meta_prompt(
    template: &MetaPromptTemplate,
    transcript_id: &str,
    transcript_text: &str,
) -> RenderedPrompt {
    let text = format!(
        "{start}\n\n{transcript}\n\n{end}\n\n{instruction} {requirements}\n\nExample output:\n\n{example}\n\n{closing}",
        start = template.conversation_start,
        transcript = transcript_text,
        end = template.conversation_end,
        instruction = template.meta_instruction,
        requirements = template.output_requirements,
        example = template.output_example,
        closing = template.closing,
    );
    RenderedPrompt {
        transcript_id: transcript_id.to_string(),
        template_id: template.template_id.clone(),
        text,
    }
}
