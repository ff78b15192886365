//! Invariants checked over generated inputs.

use proptest::prelude::*;

use wavecode::corpus::{class_counts, stratified_sample, Entries, Instrument, NoteSpec, Source};
use wavecode::embed::{parse_embedding_jsonl, EmbeddingSet, Granularity};
use wavecode::metrics::{
    candidate_set, fit_gaussian, forced_choice, frechet_distance, summarize_confidence, DEFAULT_EPS,
};
use wavecode::pipeline::{GenerationRecord, RunManifest, Stage, StageStatus};
use wavecode::corpus::Tier;
use wavecode::prompt::Method;
use wavecode::sandbox::wav::{decode_bytes, encode_wave, SampleFormat, WavSpec};

fn point_cloud(d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0..5.0f64, d), 12..40)
}

fn two_clouds() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    (1usize..6).prop_flat_map(|d| (point_cloud(d), point_cloud(d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fad_is_symmetric_and_nonnegative((a, b) in two_clouds()) {
        let ga = fit_gaussian(&a).unwrap();
        let gb = fit_gaussian(&b).unwrap();
        let ab = frechet_distance(&ga, &gb, DEFAULT_EPS).unwrap().value;
        let ba = frechet_distance(&gb, &ga, DEFAULT_EPS).unwrap().value;
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-6 * (1.0 + ab));
    }

    #[test]
    fn common_translation_leaves_fad_unchanged((a, b) in two_clouds(), shift in -10.0..10.0f64) {
        let moved = |s: &[Vec<f64>]| -> Vec<Vec<f64>> {
            s.iter().map(|v| v.iter().map(|x| x + shift).collect()).collect()
        };
        let before = frechet_distance(&fit_gaussian(&a).unwrap(), &fit_gaussian(&b).unwrap(), DEFAULT_EPS).unwrap();
        let after = frechet_distance(&fit_gaussian(&moved(&a)).unwrap(), &fit_gaussian(&moved(&b)).unwrap(), DEFAULT_EPS).unwrap();
        prop_assert!((before.value - after.value).abs() <= 1e-6 * (1.0 + before.value));
    }

    #[test]
    fn mean_shift_adds_its_squared_length(a in point_cloud(3), delta in prop::collection::vec(-4.0..4.0f64, 3)) {
        let g = fit_gaussian(&a).unwrap();
        let shifted: Vec<Vec<f64>> = a.iter().map(|v| v.iter().zip(&delta).map(|(x, d)| x + d).collect()).collect();
        let r = frechet_distance(&g, &fit_gaussian(&shifted).unwrap(), DEFAULT_EPS).unwrap();
        let want: f64 = delta.iter().map(|d| d * d).sum();
        prop_assert!((r.value - want).abs() <= 1e-7 * (1.0 + want), "{} vs {}", r.value, want);
    }

    #[test]
    fn forced_choice_probabilities_form_a_distribution(
        audio in prop::collection::vec(0.01..1.0f64, 6),
        texts in prop::collection::vec(prop::collection::vec(0.01..1.0f64, 6), 5),
        target in 0usize..5,
        scale in 0.1..50.0f64,
    ) {
        let cands: Vec<(String, Vec<f64>)> = texts.into_iter().enumerate().map(|(i, v)| (format!("l{i}"), v)).collect();
        let r = forced_choice("s", &audio, &cands, &format!("l{target}"), scale).unwrap();
        prop_assert!((r.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let max = r.probabilities.iter().copied().fold(0.0, f64::max);
        prop_assert_eq!(r.confidence, max);
        prop_assert!(r.confidence >= 0.2 - 1e-12);
        prop_assert_eq!(r.correct, r.predicted_label == r.target_label);
    }

    #[test]
    fn candidate_sets_are_deterministic(n in 5usize..60, t in 0usize..60, seed in any::<u64>()) {
        let universe: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
        let target = &universe[t % n];
        let a = candidate_set(&universe, target, seed).unwrap();
        prop_assert_eq!(&a, &candidate_set(&universe, target, seed).unwrap());
        let mut sorted = a.clone();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), 5);
        prop_assert!(a.contains(target));
    }

    #[test]
    fn confidence_bins_partition(values in prop::collection::vec(0.0..=1.0f64, 1..200)) {
        let s = summarize_confidence(&values).unwrap();
        prop_assert_eq!(s.bins.iter().map(|b| b.count).sum::<usize>(), values.len());
        prop_assert!((s.bins.iter().map(|b| b.percent).sum::<f64>() - 100.0).abs() < 1e-9);
        prop_assert!(s.min <= s.median && s.median <= s.max);
        prop_assert!(s.min <= s.mean && s.mean <= s.max + 1e-12);
    }

    #[test]
    fn sampling_is_seeded_and_capped(
        sizes in prop::collection::vec(0usize..30, 4),
        cap in 1usize..20,
        seed in any::<u64>(),
    ) {
        let classes = [
            (Instrument::Bass, Source::Acoustic),
            (Instrument::Bass, Source::Synthetic),
            (Instrument::Organ, Source::Electronic),
            (Instrument::Vocal, Source::Acoustic),
        ];
        let notes: Vec<NoteSpec> = classes
            .iter()
            .zip(&sizes)
            .flat_map(|(&(i, s), &n)| (0..n).map(move |k| NoteSpec {
                sound_id: format!("{}_{}_{k:03}", i.as_str(), s.as_str()),
                instrument: i,
                source: s,
                pitch: (k % 128) as u8,
                velocity: 80,
                amplitude: 0.5,
                note_name: String::new(),
                quality_description: String::new(),
            }))
            .collect();
        prop_assume!(!notes.is_empty());
        let a = stratified_sample(&notes, cap, seed).unwrap();
        prop_assert_eq!(&a, &stratified_sample(&notes, cap, seed).unwrap());
        let Entries::Notes(picked) = &a.entries else { unreachable!() };
        let counts = class_counts(picked);
        for (class, &n) in classes.iter().zip(&sizes) {
            prop_assert_eq!(counts.get(class).copied().unwrap_or(0), n.min(cap));
        }
        let mut ids: Vec<&str> = picked.iter().map(|n| n.sound_id.as_str()).collect();
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), picked.len());
    }

    #[test]
    fn manifest_survives_json(n in 0usize..20, failed in prop::collection::vec(any::<bool>(), 20), seed in any::<u64>()) {
        let mut m = RunManifest::new("p", Tier::Notes, Method::NotesDefault, Some("m".into()), seed);
        m.stages.insert(Stage::Sampled, StageStatus::Done);
        m.samples = (0..n)
            .map(|i| {
                let mut r = GenerationRecord::new(format!("{i:04}_x{i}"), format!("x{i}"), i);
                r.group = Some("bass".into());
                if failed[i] {
                    r.fail(Stage::Generated, "HTTP 500");
                } else {
                    r.reached = Stage::Prompted;
                }
                r
            })
            .collect();
        let text = serde_json::to_string(&m).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(back.pending(Stage::Generated).len(), failed[..n].iter().filter(|f| !**f).count());
    }

    #[test]
    fn embedding_files_round_trip_exactly(
        rows in prop::collection::vec(prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, 4), 1..10),
    ) {
        let mut set = EmbeddingSet::new("m", 4, Granularity::Frame);
        set.insert("clip", rows).unwrap();
        let back = parse_embedding_jsonl(&set.to_jsonl()).unwrap();
        prop_assert_eq!(back, set);
    }

    #[test]
    fn wav_frames_survive_encoding(
        frames in 1usize..400,
        channels in 1u16..3,
        pick in 0usize..6,
        rate in prop::sample::select(vec![8_000u32, 16_000, 22_050, 44_100, 48_000]),
    ) {
        let (bits, format) = [
            (8, SampleFormat::Int), (16, SampleFormat::Int), (24, SampleFormat::Int),
            (32, SampleFormat::Int), (32, SampleFormat::Float), (64, SampleFormat::Float),
        ][pick];
        let spec = WavSpec { sample_rate: rate, channels, bits_per_sample: bits, format };
        let samples: Vec<f64> = (0..frames * channels as usize).map(|i| ((i * 37 % 200) as f64 - 100.0) / 128.0).collect();
        let decoded = decode_bytes(&encode_wave(spec, &samples).unwrap()).unwrap();
        prop_assert_eq!(decoded.spec, spec);
        prop_assert_eq!(decoded.frame_count, frames as u64);
        prop_assert_eq!(decoded.mono.len(), frames);
    }
}
