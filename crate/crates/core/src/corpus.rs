//! Dataset manifests for the three tiers and balanced sampling of note targets.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::rng::Pcg32;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("field {field} out of range: {value}")]
    FieldOutOfRange { field: &'static str, value: String },
    #[error("no records to sample from")]
    EmptyInput,
    #[error("cap_per_class must be at least 1")]
    InvalidCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Notes,
    Environment,
    Speech,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Notes => "notes",
            Tier::Environment => "environment",
            Tier::Speech => "speech",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "notes" => Ok(Tier::Notes),
            "environment" | "env" => Ok(Tier::Environment),
            "speech" => Ok(Tier::Speech),
            other => Err(format!("unknown tier {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Instrument {
    Bass,
    Brass,
    Flute,
    Guitar,
    Keyboard,
    Mallet,
    Organ,
    Reed,
    String,
    Vocal,
}

impl Instrument {
    pub const ALL: [Instrument; 10] = [
        Instrument::Bass,
        Instrument::Brass,
        Instrument::Flute,
        Instrument::Guitar,
        Instrument::Keyboard,
        Instrument::Mallet,
        Instrument::Organ,
        Instrument::Reed,
        Instrument::String,
        Instrument::Vocal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Instrument::Bass => "bass",
            Instrument::Brass => "brass",
            Instrument::Flute => "flute",
            Instrument::Guitar => "guitar",
            Instrument::Keyboard => "keyboard",
            Instrument::Mallet => "mallet",
            Instrument::Organ => "organ",
            Instrument::Reed => "reed",
            Instrument::String => "string",
            Instrument::Vocal => "vocal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Acoustic,
    Electronic,
    Synthetic,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Acoustic => "acoustic",
            Source::Electronic => "electronic",
            Source::Synthetic => "synthetic",
        }
    }
}

/// One musical-note target with its dataset annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteSpec {
    pub sound_id: String,
    pub instrument: Instrument,
    pub source: Source,
    pub pitch: u8,
    pub velocity: u8,
    pub amplitude: f64,
    #[serde(rename = "note")]
    pub note_name: String,
    pub quality_description: String,
}

impl NoteSpec {
    pub fn class(&self) -> (Instrument, Source) {
        (self.instrument, self.source)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoundClassSpec {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeechWordSpec {
    pub word: String,
    pub phonetic_description: String,
}

/// A tier's ordered list of targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tier", content = "entries", rename_all = "lowercase")]
pub enum Entries {
    Notes(Vec<NoteSpec>),
    Environment(Vec<SoundClassSpec>),
    Speech(Vec<SpeechWordSpec>),
}

impl Entries {
    pub fn tier(&self) -> Tier {
        match self {
            Entries::Notes(_) => Tier::Notes,
            Entries::Environment(_) => Tier::Environment,
            Entries::Speech(_) => Tier::Speech,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Entries::Notes(v) => v.len(),
            Entries::Environment(v) => v.len(),
            Entries::Speech(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Identifier of each entry in order: sound id, class label, or word.
    pub fn ids(&self) -> Vec<&str> {
        match self {
            Entries::Notes(v) => v.iter().map(|n| n.sound_id.as_str()).collect(),
            Entries::Environment(v) => v.iter().map(|c| c.label.as_str()).collect(),
            Entries::Speech(v) => v.iter().map(|w| w.word.as_str()).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap_per_class: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    #[serde(flatten)]
    pub entries: Entries,
    pub seed: u64,
    pub provenance: Provenance,
}

impl SampleManifest {
    pub fn tier(&self) -> Tier {
        self.entries.tier()
    }

    /// Writes the entries as one JSON object per line, readable by
    /// [`load_manifest`].
    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let io = |source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = Vec::new();
        fn push<T: Serialize>(out: &mut Vec<u8>, items: &[T]) {
            for item in items {
                serde_json::to_writer(&mut *out, item).expect("manifest entries serialize");
                out.push(b'\n');
            }
        }
        match &self.entries {
            Entries::Notes(v) => push(&mut out, v),
            Entries::Environment(v) => push(&mut out, v),
            Entries::Speech(v) => push(&mut out, v),
        }
        let mut f = fs::File::create(path).map_err(io)?;
        f.write_all(&out).map_err(io)
    }
}

pub fn load_manifest(path: &Path, tier: Tier) -> Result<SampleManifest, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let entries = parse_manifest(&text, tier)?;
    Ok(SampleManifest {
        entries,
        seed: 0,
        provenance: Provenance {
            source_path: Some(path.display().to_string()),
            cap_per_class: None,
        },
    })
}

/// Parses line-delimited records for `tier`. Blank lines are skipped.
pub fn parse_manifest(text: &str, tier: Tier) -> Result<Entries, CorpusError> {
    let mut seen = HashSet::new();
    let mut notes = Vec::new();
    let mut classes = Vec::new();
    let mut words = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| CorpusError::Parse {
            line,
            reason: e.to_string(),
        })?;
        let obj = value.as_object().ok_or(CorpusError::Parse {
            line,
            reason: "record is not a JSON object".into(),
        })?;
        let id = match tier {
            Tier::Notes => {
                let note = parse_note(obj, line)?;
                let id = note.sound_id.clone();
                notes.push(note);
                id
            }
            Tier::Environment => {
                let label = req_str(obj, "label", line)?;
                if label.trim().is_empty() {
                    return Err(CorpusError::Parse {
                        line,
                        reason: "label is empty".into(),
                    });
                }
                let description = opt_str(obj, "description", line)?;
                classes.push(SoundClassSpec {
                    label: label.clone(),
                    description,
                });
                label
            }
            Tier::Speech => {
                let word = req_str(obj, "word", line)?;
                if word.trim().is_empty() {
                    return Err(CorpusError::Parse {
                        line,
                        reason: "word is empty".into(),
                    });
                }
                let phonetic_description = req_str(obj, "phonetic_description", line)?;
                words.push(SpeechWordSpec {
                    word: word.clone(),
                    phonetic_description,
                });
                word
            }
        };
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId(id));
        }
    }
    let entries = match tier {
        Tier::Notes => Entries::Notes(notes),
        Tier::Environment => Entries::Environment(classes),
        Tier::Speech => Entries::Speech(words),
    };
    if entries.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    Ok(entries)
}

type Object = serde_json::Map<String, Value>;

fn req_str(obj: &Object, key: &str, line: usize) -> Result<String, CorpusError> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(CorpusError::Parse {
            line,
            reason: format!("{key} must be a string"),
        }),
        None => Err(CorpusError::Parse {
            line,
            reason: format!("missing key {key}"),
        }),
    }
}

fn opt_str(obj: &Object, key: &str, line: usize) -> Result<Option<String>, CorpusError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(_) => req_str(obj, key, line).map(Some),
    }
}

fn midi_field(obj: &Object, key: &'static str, line: usize) -> Result<u8, CorpusError> {
    let v = obj.get(key).ok_or(CorpusError::Parse {
        line,
        reason: format!("missing key {key}"),
    })?;
    let n = v.as_i64().ok_or(CorpusError::Parse {
        line,
        reason: format!("{key} must be an integer"),
    })?;
    u8::try_from(n)
        .ok()
        .filter(|&n| n <= 127)
        .ok_or(CorpusError::FieldOutOfRange {
            field: key,
            value: n.to_string(),
        })
}

fn enum_field<T: serde::de::DeserializeOwned>(
    obj: &Object,
    key: &str,
    line: usize,
) -> Result<T, CorpusError> {
    let v = obj.get(key).ok_or(CorpusError::Parse {
        line,
        reason: format!("missing key {key}"),
    })?;
    serde_json::from_value(v.clone()).map_err(|_| CorpusError::Parse {
        line,
        reason: format!("unknown {key} {v}"),
    })
}

fn parse_note(obj: &Object, line: usize) -> Result<NoteSpec, CorpusError> {
    let amplitude = obj
        .get("amplitude")
        .ok_or(CorpusError::Parse {
            line,
            reason: "missing key amplitude".into(),
        })?
        .as_f64()
        .ok_or(CorpusError::Parse {
            line,
            reason: "amplitude must be a number".into(),
        })?;
    if !(0.0..=1.0).contains(&amplitude) {
        return Err(CorpusError::FieldOutOfRange {
            field: "amplitude",
            value: amplitude.to_string(),
        });
    }
    Ok(NoteSpec {
        sound_id: req_str(obj, "sound_id", line)?,
        instrument: enum_field(obj, "instrument", line)?,
        source: enum_field(obj, "source", line)?,
        pitch: midi_field(obj, "pitch", line)?,
        velocity: midi_field(obj, "velocity", line)?,
        amplitude,
        note_name: req_str(obj, "note", line)?,
        quality_description: req_str(obj, "quality_description", line)?,
    })
}

/// Draws up to `cap_per_class` notes from every (instrument, source) class.
///
/// Classes are visited in (instrument, source) order and each draws from a
/// single generator seeded with `seed`, so the output depends only on the
/// inputs. Within a class the draw order is kept.
pub fn stratified_sample(
    records: &[NoteSpec],
    cap_per_class: usize,
    seed: u64,
) -> Result<SampleManifest, CorpusError> {
    if cap_per_class == 0 {
        return Err(CorpusError::InvalidCap);
    }
    if records.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let mut classes: BTreeMap<(Instrument, Source), Vec<&NoteSpec>> = BTreeMap::new();
    for r in records {
        classes.entry(r.class()).or_default().push(r);
    }
    let mut rng = Pcg32::from_seed(seed);
    let mut out = Vec::new();
    for members in classes.values() {
        for i in rng.choose_indices(members.len(), cap_per_class) {
            out.push(members[i].clone());
        }
    }
    Ok(SampleManifest {
        entries: Entries::Notes(out),
        seed,
        provenance: Provenance {
            source_path: None,
            cap_per_class: Some(cap_per_class),
        },
    })
}

/// Per-class counts of a note list, in class order.
pub fn class_counts(notes: &[NoteSpec]) -> BTreeMap<(Instrument, Source), usize> {
    let mut counts = BTreeMap::new();
    for n in notes {
        *counts.entry(n.class()).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn note_line(id: &str, pitch: i64) -> String {
        format!(
            r#"{{"sound_id":"{id}","instrument":"guitar","source":"acoustic","pitch":{pitch},"velocity":100,"amplitude":0.8,"note":"C4","quality_description":"bright"}}"#
        )
    }

    #[test]
    fn accepts_in_range_note() {
        let entries = parse_manifest(&note_line("a", 60), Tier::Notes).unwrap();
        let Entries::Notes(notes) = entries else {
            panic!("wrong tier")
        };
        assert_eq!(notes[0].pitch, 60);
        assert_eq!(notes[0].velocity, 100);
        assert_eq!(notes[0].amplitude, 0.8);
        assert_eq!(notes[0].note_name, "C4");
    }

    #[test]
    fn rejects_pitch_140() {
        let err = parse_manifest(&note_line("a", 140), Tier::Notes).unwrap_err();
        match err {
            CorpusError::FieldOutOfRange { field, value } => {
                assert_eq!(field, "pitch");
                assert_eq!(value, "140");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_manifest(&note_line("a", -1), Tier::Notes),
            Err(CorpusError::FieldOutOfRange { field: "pitch", .. })
        ));
    }

    #[test]
    fn rejects_duplicates_and_reports_line() {
        let text = format!("{}\n{}\n", note_line("a", 1), note_line("a", 2));
        assert!(matches!(
            parse_manifest(&text, Tier::Notes),
            Err(CorpusError::DuplicateId(id)) if id == "a"
        ));
        let err = parse_manifest("{\"label\":\"x\"}\nnot json\n", Tier::Environment).unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 2, .. }));
    }

    #[test]
    fn amplitude_checked() {
        let text = note_line("a", 60).replace("0.8", "1.5");
        assert!(matches!(
            parse_manifest(&text, Tier::Notes),
            Err(CorpusError::FieldOutOfRange {
                field: "amplitude",
                ..
            })
        ));
    }

    #[test]
    fn class_description_optional() {
        let text = "{\"label\":\"Alarm\",\"description\":\"A loud sound\"}\n{\"label\":\"Bell\"}\n";
        let Entries::Environment(c) = parse_manifest(text, Tier::Environment).unwrap() else {
            panic!()
        };
        assert_eq!(c[0].description.as_deref(), Some("A loud sound"));
        assert_eq!(c[1].description, None);
    }

    #[test]
    fn empty_label_rejected() {
        assert!(parse_manifest("{\"label\":\"\"}", Tier::Environment).is_err());
        assert!(matches!(
            parse_manifest("\n\n", Tier::Speech),
            Err(CorpusError::EmptyInput)
        ));
    }

    #[test]
    fn sample_cap_exceeds_availability() {
        let text = (0..3).map(|i| note_line(&format!("n{i}"), 60)).collect::<Vec<_>>().join("\n");
        let Entries::Notes(notes) = parse_manifest(&text, Tier::Notes).unwrap() else {
            panic!()
        };
        let m = stratified_sample(&notes, 110, 3).unwrap();
        assert_eq!(m.entries.len(), 3);
        assert!(matches!(stratified_sample(&notes, 0, 3), Err(CorpusError::InvalidCap)));
        assert!(matches!(stratified_sample(&[], 1, 3), Err(CorpusError::EmptyInput)));
    }
}
