//! Prompt templates with `{name}` placeholders and their rendering against
//! tier targets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{NoteSpec, SoundClassSpec, SpeechWordSpec, Tier};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("no value bound for placeholder {{{0}}}")]
    MissingBinding(String),
    #[error("placeholder {{{0}}} is not provided by this tier")]
    UnknownPlaceholder(String),
    #[error("template is for tier {template}, target is {target}")]
    TierMismatch { template: Tier, target: Tier },
    #[error("template body is empty")]
    EmptyBody,
    #[error("unknown prompt method {0:?}")]
    UnknownMethod(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NotesDefault,
    EnvDetailed,
    EnvDetailedPlusDescription,
    SpeechDefault,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::NotesDefault,
        Method::EnvDetailed,
        Method::EnvDetailedPlusDescription,
        Method::SpeechDefault,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::NotesDefault => "notes_default",
            Method::EnvDetailed => "env_detailed",
            Method::EnvDetailedPlusDescription => "env_detailed_plus_description",
            Method::SpeechDefault => "speech_default",
        }
    }

    pub fn tier(self) -> Tier {
        match self {
            Method::NotesDefault => Tier::Notes,
            Method::EnvDetailed | Method::EnvDetailedPlusDescription => Tier::Environment,
            Method::SpeechDefault => Tier::Speech,
        }
    }

    /// The method used when only a tier is given.
    pub fn default_for(tier: Tier) -> Method {
        match tier {
            Tier::Notes => Method::NotesDefault,
            Tier::Environment => Method::EnvDetailed,
            Tier::Speech => Method::SpeechDefault,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| PromptError::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub tier: Tier,
    pub method: Method,
    pub body: String,
    pub required_placeholders: BTreeSet<String>,
    pieces: Vec<Piece>,
}

impl PromptTemplate {
    pub fn new(method: Method, body: impl Into<String>) -> Result<Self, PromptError> {
        let body = body.into();
        if body.is_empty() {
            return Err(PromptError::EmptyBody);
        }
        let pieces = tokenize(&body);
        let required_placeholders = pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Slot(name) => Some(name.clone()),
                Piece::Text(_) => None,
            })
            .collect();
        Ok(PromptTemplate {
            tier: method.tier(),
            method,
            body,
            required_placeholders,
            pieces,
        })
    }

    pub fn builtin(method: Method) -> PromptTemplate {
        let body = match method {
            Method::NotesDefault => NOTES_DEFAULT,
            Method::EnvDetailed => ENV_DETAILED,
            Method::EnvDetailedPlusDescription => ENV_DETAILED_PLUS_DESCRIPTION,
            Method::SpeechDefault => SPEECH_DEFAULT,
        };
        PromptTemplate::new(method, body).expect("builtin templates are well-formed")
    }

    /// Substitutes `bindings` into the body. Every required placeholder must
    /// be bound; extra bindings are ignored.
    pub fn fill(&self, bindings: &BTreeMap<String, String>) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.body.len());
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => out.push_str(
                    bindings
                        .get(name)
                        .ok_or_else(|| PromptError::MissingBinding(name.clone()))?,
                ),
            }
        }
        Ok(out)
    }
}

pub const NOTES_DEFAULT: &str = include_str!("../../../templates/notes_default.txt");
pub const ENV_DETAILED: &str = include_str!("../../../templates/env_detailed.txt");
pub const ENV_DETAILED_PLUS_DESCRIPTION: &str =
    include_str!("../../../templates/env_detailed_plus_description.txt");
pub const SPEECH_DEFAULT: &str = include_str!("../../../templates/speech_default.txt");

pub fn builtin_templates() -> Vec<PromptTemplate> {
    Method::ALL.into_iter().map(PromptTemplate::builtin).collect()
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

// `{{` and `}}` are literal braces; `{ident}` is a slot; any other brace is
// literal text.
fn tokenize(body: &str) -> Vec<Piece> {
    let mut pieces = Vec::new();
    let mut text = String::new();
    let mut rest = body;
    while let Some(pos) = rest.find(['{', '}']) {
        text.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if tail.starts_with("{{") || tail.starts_with("}}") {
            text.push_str(&tail[..1]);
            rest = &tail[2..];
            continue;
        }
        if let Some(inner) = tail.strip_prefix('{') {
            if let Some(end) = inner.find('}') {
                let name = &inner[..end];
                if is_ident(name) {
                    if !text.is_empty() {
                        pieces.push(Piece::Text(std::mem::take(&mut text)));
                    }
                    pieces.push(Piece::Slot(name.to_string()));
                    rest = &tail[end + 2..];
                    continue;
                }
            }
        }
        text.push_str(&tail[..1]);
        rest = &tail[1..];
    }
    text.push_str(rest);
    if !text.is_empty() {
        pieces.push(Piece::Text(text));
    }
    pieces
}

/// A generation target of any tier.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Note(&'a NoteSpec),
    Class(&'a SoundClassSpec),
    Word(&'a SpeechWordSpec),
}

impl Target<'_> {
    pub fn tier(&self) -> Tier {
        match self {
            Target::Note(_) => Tier::Notes,
            Target::Class(_) => Tier::Environment,
            Target::Word(_) => Tier::Speech,
        }
    }

    pub fn id(&self) -> &str {
        match self {
            Target::Note(n) => &n.sound_id,
            Target::Class(c) => &c.label,
            Target::Word(w) => &w.word,
        }
    }

    /// Placeholder names this target kind can ever provide.
    pub fn known_placeholders(&self) -> &'static [&'static str] {
        match self {
            Target::Note(_) => &[
                "pitch",
                "velocity",
                "note",
                "amplitude",
                "instrument",
                "production",
                "quality_des",
                "sound_id",
            ],
            Target::Class(_) => &["input", "description"],
            Target::Word(_) => &["word", "description"],
        }
    }

    /// Value for `name`, if this target has one.
    pub fn value(&self, name: &str) -> Option<String> {
        match self {
            Target::Note(n) => match name {
                "pitch" => Some(n.pitch.to_string()),
                "velocity" => Some(n.velocity.to_string()),
                "note" => Some(n.note_name.clone()),
                // f64 Display never uses exponent notation
                "amplitude" => Some(n.amplitude.to_string()),
                "instrument" => Some(n.instrument.as_str().to_string()),
                "production" => Some(n.source.as_str().to_string()),
                "quality_des" => Some(n.quality_description.clone()),
                "sound_id" => Some(n.sound_id.clone()),
                _ => None,
            },
            Target::Class(c) => match name {
                "input" => Some(c.label.clone()),
                "description" => c.description.clone(),
                _ => None,
            },
            Target::Word(w) => match name {
                "word" => Some(w.word.clone()),
                "description" => Some(w.phonetic_description.clone()),
                _ => None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub sample_id: String,
    pub tier: Tier,
    pub method: Method,
    pub text: String,
    pub bindings: BTreeMap<String, String>,
}

pub fn render(template: &PromptTemplate, target: Target<'_>) -> Result<RenderedPrompt, PromptError> {
    render_as(template, target, target.id())
}

/// Like [`render`] but records `sample_id` instead of the target's own id.
pub fn render_as(
    template: &PromptTemplate,
    target: Target<'_>,
    sample_id: &str,
) -> Result<RenderedPrompt, PromptError> {
    if template.tier != target.tier() {
        return Err(PromptError::TierMismatch {
            template: template.tier,
            target: target.tier(),
        });
    }
    let known = target.known_placeholders();
    let mut bindings = BTreeMap::new();
    for name in &template.required_placeholders {
        if !known.contains(&name.as_str()) {
            return Err(PromptError::UnknownPlaceholder(name.clone()));
        }
        let value = target
            .value(name)
            .ok_or_else(|| PromptError::MissingBinding(name.clone()))?;
        bindings.insert(name.clone(), value);
    }
    let text = template.fill(&bindings)?;
    Ok(RenderedPrompt {
        sample_id: sample_id.to_string(),
        tier: template.tier,
        method: template.method,
        text,
        bindings,
    })
}
