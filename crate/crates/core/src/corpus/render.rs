use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Transcript;

/// Metadata key prefix carrying a speaker's role, e.g. `role:A = Client`.
pub const ROLE_KEY_PREFIX: &str = "role:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeakerTagScheme {
    /// `Speaker 1`, `Speaker 2`, ... by first appearance.
    GenericNumbered,
    /// Roles from transcript metadata, numbered fallback for speakers without one.
    RoleBased,
    /// Initials of the speaker label.
    Initials,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestampFormat {
    MmSs,
    HhMmSs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnSeparator {
    SingleNewline,
    BlankLine,
}

impl TurnSeparator {
    fn as_str(self) -> &'static str {
        match self {
            TurnSeparator::SingleNewline => "\n",
            TurnSeparator::BlankLine => "\n\n",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RenderStyle {
    pub speaker_tag_scheme: SpeakerTagScheme,
    pub include_timestamps: bool,
    /// Only consulted when `include_timestamps` is set.
    pub timestamp_format: TimestampFormat,
    pub turn_separator: TurnSeparator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub header: Option<String>,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            speaker_tag_scheme: SpeakerTagScheme::GenericNumbered,
            include_timestamps: false,
            timestamp_format: TimestampFormat::MmSs,
            turn_separator: TurnSeparator::SingleNewline,
            header: None,
        }
    }
}

/// Every header-less style, in a fixed order.
pub fn style_grid() -> Vec<RenderStyle> {
    let schemes = [
        SpeakerTagScheme::GenericNumbered,
        SpeakerTagScheme::RoleBased,
        SpeakerTagScheme::Initials,
    ];
    let mut grid = Vec::with_capacity(24);
    for scheme in schemes {
        for include_timestamps in [false, true] {
            for timestamp_format in [TimestampFormat::MmSs, TimestampFormat::HhMmSs] {
                for turn_separator in [TurnSeparator::SingleNewline, TurnSeparator::BlankLine] {
                    grid.push(RenderStyle {
                        speaker_tag_scheme: scheme,
                        include_timestamps,
                        timestamp_format,
                        turn_separator,
                        header: None,
                    });
                }
            }
        }
    }
    grid
}

/// Uniform draw over [`style_grid`].
pub fn sample_style<R: Rng + ?Sized>(rng: &mut R) -> RenderStyle {
    let mut grid = style_grid();
    let idx = rng.gen_range(0..grid.len());
    grid.swap_remove(idx)
}

fn initials(label: &str) -> String {
    let parts: Vec<&str> = label
        .split(|c: char| c.is_whitespace() || c == '_' || c == '-')
        .filter(|p| !p.is_empty())
        .collect();
    if parts.len() <= 1 {
        return label.trim().to_uppercase();
    }
    parts
        .iter()
        .filter_map(|p| p.chars().next())
        .flat_map(char::to_uppercase)
        .collect()
}

fn speaker_tags(t: &Transcript, scheme: SpeakerTagScheme) -> HashMap<&str, String> {
    let speakers = t.speakers_in_order();
    let mut tags: HashMap<&str, String> = HashMap::new();
    let mut used: HashMap<String, usize> = HashMap::new();
    for (i, &speaker) in speakers.iter().enumerate() {
        let numbered = format!("Speaker {}", i + 1);
        let base = match scheme {
            SpeakerTagScheme::GenericNumbered => numbered,
            SpeakerTagScheme::RoleBased => t
                .metadata
                .get(&format!("{ROLE_KEY_PREFIX}{speaker}"))
                .cloned()
                .unwrap_or(numbered),
            SpeakerTagScheme::Initials => initials(speaker),
        };
        // two speakers sharing a role or initials get a numeric suffix
        let n = used.entry(base.clone()).or_insert(0);
        *n += 1;
        let tag = if *n == 1 { base } else { format!("{base} {n}") };
        tags.insert(speaker, tag);
    }
    tags
}

fn timestamp(seconds: f64, format: TimestampFormat) -> String {
    let total = seconds.max(0.0).floor() as u64;
    match format {
        TimestampFormat::MmSs => format!("[{:02}:{:02}]", total / 60, total % 60),
        TimestampFormat::HhMmSs => format!(
            "[{:02}:{:02}:{:02}]",
            total / 3600,
            (total / 60) % 60,
            total % 60
        ),
    }
}

/// Renders a transcript as plain text. Turn text is emitted verbatim and in order.
pub fn render_transcript(t: &Transcript, style: &RenderStyle) -> String {
    let tags = speaker_tags(t, style.speaker_tag_scheme);
    let lines: Vec<String> = t
        .turns
        .iter()
        .map(|turn| {
            let tag = &tags[turn.speaker_label.as_str()];
            match turn.start_seconds {
                Some(start) if style.include_timestamps => {
                    format!(
                        "{} {tag}: {}",
                        timestamp(start, style.timestamp_format),
                        turn.text
                    )
                }
                _ => format!("{tag}: {}", turn.text),
            }
        })
        .collect();
    let body = lines.join(style.turn_separator.as_str());
    match &style.header {
        Some(h) => format!("{h}\n\n{body}"),
        None => body,
    }
}
