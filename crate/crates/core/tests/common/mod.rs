//! Offline fixtures: target manifests, a replay cassette with stub
//! programs, and file-provider embeddings.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use wavecode::corpus::{Entries, Instrument, NoteSpec, Provenance, SampleManifest, SoundClassSpec, Source};
use wavecode::embed::{EmbeddingSet, Granularity};
use wavecode::gateway::{Cassette, CassetteEntry, ChatRequest, ExchangeStatus, ModelEndpoint};
use wavecode::pipeline::sample_id;
use wavecode::prompt::{render, Method, PromptTemplate, Target};
use wavecode::rng::Pcg32;

pub const MODEL: &str = "stub-model";
pub const BASE_URL: &str = "http://127.0.0.1:9/v1";

pub fn unit(rng: &mut Pcg32) -> f64 {
    rng.next_u32() as f64 / 4_294_967_296.0
}

pub fn signed(rng: &mut Pcg32) -> f64 {
    2.0 * unit(rng) - 1.0
}

pub fn python3_available() -> bool {
    std::process::Command::new("python3")
        .arg("--version")
        .output()
        .is_ok_and(|o| o.status.success())
}

/// A Python program writing a mono 16-bit sine to `<stem>.wav`.
pub fn sine_program(stem: &str, freq: f64, sample_rate: u32, seconds: f64) -> String {
    format!(
        r#"import math
import struct
import wave

sr = {sample_rate}
n = int(sr * {seconds})
with wave.open("{stem}.wav", "wb") as w:
    w.setnchannels(1)
    w.setsampwidth(2)
    w.setframerate(sr)
    w.writeframes(b"".join(struct.pack("<h", int(16000 * math.sin(2 * math.pi * {freq} * i / sr))) for i in range(n)))
"#
    )
}

pub fn fenced(code: &str) -> String {
    format!("Here is the program:\n\n```python\n{code}```\n")
}

/// What the stub model answers for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reply {
    Good,
    MissingModule,
    NoArtifact,
}

pub fn reply_for(index: usize, failing: &[usize]) -> Reply {
    if !failing.contains(&index) {
        Reply::Good
    } else if index.is_multiple_of(2) {
        Reply::MissingModule
    } else {
        Reply::NoArtifact
    }
}

pub fn endpoint() -> ModelEndpoint {
    ModelEndpoint::new(MODEL, BASE_URL)
}

pub fn record(cassette: &Cassette, prompt: &str, response: String) {
    let request = ChatRequest::new(&endpoint(), endpoint().messages_for(prompt));
    cassette
        .append(CassetteEntry {
            fingerprint: request.fingerprint(),
            request,
            response_text: response,
            status: ExchangeStatus::Ok,
        })
        .unwrap();
}

pub fn write_targets(path: &Path, entries: Entries) {
    let manifest = SampleManifest {
        entries,
        seed: 0,
        provenance: Provenance::default(),
    };
    manifest.write_jsonl(path).unwrap();
}

pub struct Fixture {
    pub root: PathBuf,
    pub config: PathBuf,
    pub good: usize,
    pub failed: usize,
}

fn frames(rng: &mut Pcg32, center: &[f64], spread: f64, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| center.iter().map(|c| c + spread * signed(rng)).collect())
        .collect()
}

pub fn notes(n: usize) -> Vec<NoteSpec> {
    let instruments = [Instrument::Mallet, Instrument::Guitar, Instrument::Organ];
    (0..n)
        .map(|i| {
            let instrument = instruments[i % instruments.len()];
            let pitch = 48 + (i as u8 * 5) % 36;
            NoteSpec {
                sound_id: format!("{}_acoustic_{:03}-{:03}-100", instrument.as_str(), i, pitch),
                instrument,
                source: Source::Acoustic,
                pitch,
                velocity: 100,
                amplitude: 0.8,
                note_name: format!("N{i}"),
                quality_description: "bright".into(),
            }
        })
        .collect()
}

fn midi_hz(pitch: u8) -> f64 {
    440.0 * 2f64.powf((pitch as f64 - 69.0) / 12.0)
}

fn config_text(run_id: &str, tier: &str, extra_embedding: &str, audio_model: &str) -> String {
    format!(
        r#"run_id = "{run_id}"
runs_dir = "runs"
tier = "{tier}"
seed = 7

[sample]
manifest = "targets.jsonl"

[endpoint]
name = "{MODEL}"
base_url = "{BASE_URL}"

[transport]
mode = "replay"
cassette = "cassette.jsonl"

[sandbox]
runner = "python3 {{script_path}}"
timeout_secs = 20
workers = 4

[embedding]
audio = "file:emb/generated.jsonl"
audio_model = "{audio_model}"
{extra_embedding}
"#
    )
}

/// Notes tier: `n` targets across three instruments; indices in `failing`
/// get a broken program.
pub fn notes_fixture(root: &Path, n: usize, failing: &[usize]) -> Fixture {
    fs::create_dir_all(root.join("emb")).unwrap();
    let targets = notes(n);
    write_targets(&root.join("targets.jsonl"), Entries::Notes(targets.clone()));

    let template = PromptTemplate::builtin(Method::NotesDefault);
    let cassette = Cassette::open(&root.join("cassette.jsonl")).unwrap();
    let mut rng = Pcg32::new(99, 3);
    let dim = 8;
    let mut generated = EmbeddingSet::new("vggish", dim, Granularity::Frame);
    let mut reference = EmbeddingSet::new("vggish", dim, Granularity::Frame);
    for (i, note) in targets.iter().enumerate() {
        let prompt = render(&template, Target::Note(note)).unwrap().text;
        let code = match reply_for(i, failing) {
            Reply::Good => sine_program(&note.sound_id, midi_hz(note.pitch), 16_000, 4.0),
            Reply::MissingModule => "import midutil\n".to_string(),
            Reply::NoArtifact => "print('rendering skipped')\n".to_string(),
        };
        record(&cassette, &prompt, fenced(&code));

        let center: Vec<f64> = (0..dim).map(|_| signed(&mut rng)).collect();
        reference
            .insert(note.sound_id.clone(), frames(&mut rng, &center, 0.5, 5))
            .unwrap();
        // later samples drift further from their reference
        let shifted: Vec<f64> = center.iter().map(|c| c + 0.4 * i as f64).collect();
        generated
            .insert(sample_id(i, &note.sound_id), frames(&mut rng, &shifted, 0.5, 5))
            .unwrap();
    }
    generated.write_jsonl(&root.join("emb/generated.jsonl")).unwrap();
    reference.write_jsonl(&root.join("emb/reference.jsonl")).unwrap();

    let config = root.join("config.toml");
    fs::write(
        &config,
        config_text("notes-e2e", "notes", "reference = \"file:emb/reference.jsonl\"", "vggish"),
    )
    .unwrap();
    let failed = (0..n).filter(|i| failing.contains(i)).count();
    Fixture {
        root: root.to_path_buf(),
        config,
        good: n - failed,
        failed,
    }
}

pub const CLASSES: [&str; 7] = ["Alarm", "Bell", "Dog", "Rain", "Siren", "Thunder", "Whistle"];

/// Environment tier over [`CLASSES`]; generated audio of even indices sits
/// on its own label's text vector, odd ones on a neighbour's.
pub fn env_fixture(root: &Path, failing: &[usize]) -> Fixture {
    fs::create_dir_all(root.join("emb")).unwrap();
    let targets: Vec<SoundClassSpec> = CLASSES
        .iter()
        .map(|l| SoundClassSpec {
            label: l.to_string(),
            description: None,
        })
        .collect();
    write_targets(&root.join("targets.jsonl"), Entries::Environment(targets.clone()));

    let template = PromptTemplate::builtin(Method::EnvDetailed);
    let cassette = Cassette::open(&root.join("cassette.jsonl")).unwrap();
    let dim = CLASSES.len();
    let mut text = EmbeddingSet::new("clap-text", dim, Granularity::Clip);
    let mut audio = EmbeddingSet::new("clap-audio", dim, Granularity::Clip);
    for (i, class) in targets.iter().enumerate() {
        let prompt = render(&template, Target::Class(class)).unwrap().text;
        let code = match reply_for(i, failing) {
            Reply::Good => sine_program(&class.label, 300.0 + 50.0 * i as f64, 44_100, 2.5),
            Reply::MissingModule => "import pydsmid\n".to_string(),
            Reply::NoArtifact => "x = 1\n".to_string(),
        };
        record(&cassette, &prompt, fenced(&code));

        let mut e = vec![0.05; dim];
        e[i] = 1.0;
        text.insert(class.label.clone(), vec![e]).unwrap();
        let mut a = vec![0.05; dim];
        a[if i % 2 == 0 { i } else { (i + 1) % dim }] = 1.0;
        audio.insert(sample_id(i, &class.label), vec![a]).unwrap();
    }
    text.write_jsonl(&root.join("emb/text.jsonl")).unwrap();
    audio.write_jsonl(&root.join("emb/generated.jsonl")).unwrap();

    let config = root.join("config.toml");
    fs::write(
        &config,
        config_text("env-e2e", "environment", "text = \"file:emb/text.jsonl\"\nscale = 1.0", "clap-audio"),
    )
    .unwrap();
    let failed = failing.iter().filter(|&&i| i < CLASSES.len()).count();
    Fixture {
        root: root.to_path_buf(),
        config,
        good: CLASSES.len() - failed,
        failed,
    }
}
