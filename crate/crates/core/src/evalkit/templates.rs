use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;

pub const SUMMARY_LENGTHS: [&str; 3] = ["long", "medium", "short"];

pub const CALL_OUTCOME_LABELS: [&str; 8] = [
    "Call back",
    "Unsuccessful contact",
    "Voicemail Success",
    "Payment / Billing",
    "Status update",
    "Scheduled appointment",
    "Cancellation",
    "Other",
];

pub const PURPOSE_OF_CALL_LABELS: [&str; 7] = [
    "Account Management",
    "Appointment",
    "Billing Questions",
    "Callback",
    "Cancellation",
    "Claim",
    "Complaint",
];

const SUMMARIZATION: &str = "Generate a summary of the {length} following conversation {format} without assessing its quality.\nTranscript: {transcript}";

const ACTION_ITEMS: &str = "For the conversation given below, generate a newline-separated list of work, business, or service-related TODO tasks that should be completed after the conversation. Each task is a one-sentence summary of the action to be taken.\nTranscript: {transcript}";

const CALL_OUTCOME: &str = "For the conversation below, apply the appropriate category from the list provided below to describe the outcome of the conversation (respond with 'Other' if no category applies): Call back,\nUnsuccessful contact,\nVoicemail Success,\nPayment / Billing,\nStatus update,\nScheduled appointment,\nCancellation.\nTranscript: {transcript}";

const PURPOSE_OF_CALL: &str = "For the conversation below, identify a single category for the purpose of the conversation chosen from this list: Account Management,\nAppointment,\nBilling Questions,\nCallback,\nCancellation,\nClaim,\nComplaint.\nTranscript: {transcript}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTaskId {
    Summarization,
    ActionItems,
    CallOutcome,
    PurposeOfCall,
}

impl EvalTaskId {
    pub const ALL: [EvalTaskId; 4] = [
        EvalTaskId::Summarization,
        EvalTaskId::ActionItems,
        EvalTaskId::CallOutcome,
        EvalTaskId::PurposeOfCall,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalTaskId::Summarization => "summarization",
            EvalTaskId::ActionItems => "action_items",
            EvalTaskId::CallOutcome => "call_outcome",
            EvalTaskId::PurposeOfCall => "purpose_of_call",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvalTaskTemplate {
    pub task_id: EvalTaskId,
    pub prompt_template: &'static str,
    pub label_set: Option<Vec<&'static str>>,
}

impl EvalTaskTemplate {
    pub fn bundled(task_id: EvalTaskId) -> Self {
        let (prompt_template, label_set) = match task_id {
            EvalTaskId::Summarization => (SUMMARIZATION, None),
            EvalTaskId::ActionItems => (ACTION_ITEMS, None),
            EvalTaskId::CallOutcome => (CALL_OUTCOME, Some(CALL_OUTCOME_LABELS.to_vec())),
            EvalTaskId::PurposeOfCall => (PURPOSE_OF_CALL, Some(PURPOSE_OF_CALL_LABELS.to_vec())),
        };
        Self {
            task_id,
            prompt_template,
            label_set,
        }
    }

    pub fn is_classification(&self) -> bool {
        self.label_set.is_some()
    }
}

/// Fills a downstream task prompt. Summarization takes a required `length`
/// and an optional `format`; the other tasks take no options.
pub fn render_eval_prompt(
    task: &EvalTaskTemplate,
    transcript_text: &str,
    options: &BTreeMap<String, String>,
) -> Result<String, EvalError> {
    let allowed: &[&str] = match task.task_id {
        EvalTaskId::Summarization => &["length", "format"],
        _ => &[],
    };
    if let Some(unknown) = options.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(EvalError::UnknownOption(unknown.clone()));
    }
    let mut text = task.prompt_template.to_string();
    if task.task_id == EvalTaskId::Summarization {
        let length = options
            .get("length")
            .map(|s| s.trim().to_lowercase())
            .unwrap_or_default();
        if !SUMMARY_LENGTHS.contains(&length.as_str()) {
            return Err(EvalError::UnknownOption(format!("length={length}")));
        }
        text = text.replace("{length}", &length);
        text = match options
            .get("format")
            .map(|f| f.trim())
            .filter(|f| !f.is_empty())
        {
            Some(format) => text.replace("{format}", &format!("in {format}")),
            None => text.replace(" {format}", ""),
        };
    }
    Ok(text.replace("{transcript}", transcript_text))
}
