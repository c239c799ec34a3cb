use std::path::PathBuf;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sensorcode::codebook::{average_length, build_fibonacci_codebook, build_tcode_codebook, FrequencyTable};
use sensorcode::codec::CodecKind;
use sensorcode::experiment::{compare, run_experiment, ExperimentConfig, OutputFormat, SourceInput};
use sensorcode::metrics::entropy_report;
use sensorcode::sources::{CorrelatedPair, CorrelationModel, PairSource, PseudoSource, SampleSource};

fn table(counts: &[(u8, u64)]) -> FrequencyTable {
    let mut full = vec![0u64; 256];
    for &(s, c) in counts {
        full[usize::from(s)] += c;
    }
    FrequencyTable::from_counts(&full).unwrap()
}

fn sparse_counts() -> impl Strategy<Value = Vec<(u8, u64)>> {
    prop::collection::vec((any::<u8>(), 1u64..200), 1..40)
}

fn model() -> impl Strategy<Value = CorrelationModel> {
    prop_oneof![
        (0u32..=3, 3u32..=8).prop_map(|(t, w)| CorrelationModel::BitFlip { max_flips: t, width: w }),
        prop::sample::select(vec![1u16, 2, 4, 8, 16, 64]).prop_map(|n| CorrelationModel::SameBin { n }),
        (0u8..=20).prop_map(|d| CorrelationModel::AdditiveDelta { max_delta: d }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pseudo_period_matches_apportioned_counts(counts in sparse_counts(), period in 1usize..600) {
        let hist = table(&counts);
        let mut src = PseudoSource::new(&hist, period).unwrap();
        let mut seen = vec![0u64; 256];
        for _ in 0..period {
            seen[usize::from(src.next_sample())] += 1;
        }
        prop_assert_eq!(seen.iter().sum::<u64>(), period as u64);
        prop_assert_eq!(&seen[..], src.period_counts());
        for (s, &n) in seen.iter().enumerate() {
            let quota = hist.probability(s as u16) * period as f64;
            prop_assert!((n as f64 - quota).abs() < 1.0);
        }
        // the second period repeats the first
        let again: Vec<u8> = (0..period).map(|_| src.next_sample()).collect();
        prop_assert_eq!(&again[..], src.schedule());
    }

    #[test]
    fn correlated_pairs_satisfy_their_model(m in model(), seed: u64, start: u8) {
        let hist = table(&[(start, 3), (start.wrapping_add(90), 1)]);
        let base = PseudoSource::new(&hist, 16).unwrap();
        let mut a = PairSource::new(Box::new(base.clone()), m, seed).unwrap();
        let mut b = PairSource::new(Box::new(base), m, seed).unwrap();
        for _ in 0..300 {
            let p = a.next_pair();
            prop_assert_eq!(p, b.next_pair());
            prop_assert!(m.admits(p.x, p.y), "{m}: {p:?}");
        }
    }

    #[test]
    fn matched_books_never_lose_to_identity(counts in sparse_counts()) {
        let hist = table(&counts);
        let identity = FrequencyTable::uniform(256).unwrap();
        for tcode in [false, true] {
            let build = if tcode { build_tcode_codebook } else { build_fibonacci_codebook };
            let matched = average_length(&build(&hist).unwrap(), &hist).unwrap();
            let ranked_by_value = average_length(&build(&identity).unwrap(), &hist).unwrap();
            prop_assert!(matched <= ranked_by_value + 1e-12, "{matched} > {ranked_by_value}");
        }
    }

    #[test]
    fn entropy_chain_holds(pairs in prop::collection::vec((any::<u8>(), any::<u8>()), 1..400)) {
        let pairs: Vec<_> = pairs.into_iter().map(|(x, y)| CorrelatedPair { x, y }).collect();
        let h = entropy_report(&pairs, 0.0).unwrap();
        prop_assert!(h.h_xy <= h.h_x + h.h_y + 1e-9);
        prop_assert!(h.h_y_given_x >= -1e-9);
        prop_assert!(h.h_xy + 1e-9 >= h.h_x.max(h.h_y));
    }

    #[test]
    fn config_render_parse_identity(
        codec in prop::sample::select(CodecKind::ALL.to_vec()),
        trace: bool,
        m in model(),
        rate in 2u32..=125,
        samples in 0usize..100_000,
        frame in 1usize..64,
        modulo_exp in 1u32..=8,
        seed: u64,
        period in 1usize..1000,
        cost in 0u32..20,
        fmt in prop::sample::select(vec![OutputFormat::Csv, OutputFormat::Json, OutputFormat::Table]),
    ) {
        let path = PathBuf::from("data/some trace.csv");
        let source = if trace { SourceInput::Trace(path) } else { SourceInput::Pseudo(path) };
        let mut cfg = ExperimentConfig::new(codec, source);
        cfg.correlation = m;
        cfg.rate_hz = rate;
        cfg.samples = samples;
        cfg.frame_length = frame;
        cfg.modulo_n = 1 << modulo_exp;
        cfg.seed = seed;
        cfg.period = period;
        cfg.cost_per_op_us = cost;
        cfg.out = PathBuf::from("runs/out");
        cfg.format = fmt;
        let text = cfg.render();
        prop_assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
    }
}

#[test]
fn bitflip_one_enumerates_admissible_outputs() {
    let m = CorrelationModel::BitFlip { max_flips: 1, width: 7 };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut seen = std::collections::BTreeSet::new();
    for _ in 0..4000 {
        seen.insert(m.correlate(0b0000000, &mut rng));
    }
    assert_eq!(seen.len(), 8);
    assert!(seen.iter().all(|y| y.count_ones() <= 1 && *y < 128));
}

fn fixture_dir() -> (tempfile::TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("walk.csv");
    let text: String = (0..300).map(|i| format!("{}\n", 90 + (i * 7 % 23))).collect();
    std::fs::write(&trace, text).unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    (dir, trace, empty)
}

#[test]
fn compare_keeps_config_order_and_isolates_failures() {
    let (_dir, trace, _) = fixture_dir();
    let mut configs: Vec<_> = CodecKind::ALL
        .iter()
        .map(|&k| {
            let mut c = ExperimentConfig::new(k, SourceInput::Trace(trace.clone()));
            c.samples = 64;
            c
        })
        .collect();
    configs.insert(3, ExperimentConfig::new(CodecKind::Dpcm, SourceInput::Trace("/missing/trace".into())));
    let rows = compare(&configs);
    assert_eq!(rows.len(), 11);
    assert!(rows[3].is_err());
    let names: Vec<String> = rows
        .iter()
        .map(|r| match r {
            Ok(rep) => rep.codec.clone(),
            Err((name, _)) => name.clone(),
        })
        .collect();
    let want: Vec<String> = configs.iter().map(|c| c.codec.to_string()).collect();
    assert_eq!(names, want);

    // a single config reproduces its own report
    let solo = compare(&configs[..1]);
    assert_eq!(solo[0].as_ref().unwrap(), &run_experiment(&configs[0]).unwrap().report);
}

#[test]
fn empty_trace_is_a_zero_length_run() {
    let (_dir, _, empty) = fixture_dir();
    let out = run_experiment(&ExperimentConfig::new(CodecKind::Fibonacci, SourceInput::Trace(empty))).unwrap();
    assert_eq!(out.report.sample_count, 0);
    assert_eq!(out.log.sensor_packets.len(), 0);
    assert_eq!(out.log.broadcasts.len(), 1);
}

#[test]
fn lossy_codecs_report_plausible_error() {
    let (_dir, trace, _) = fixture_dir();
    for kind in [CodecKind::MuLaw, CodecKind::ALaw] {
        let mut cfg = ExperimentConfig::new(kind, SourceInput::Trace(trace.clone()));
        cfg.samples = 200;
        let out = run_experiment(&cfg).unwrap();
        // decoding picks the smallest preimage, so errors are never positive
        assert!(out.series.iter().all(|p| p.error <= 0 && p.error > -8), "{kind}");
        assert!(out.report.avg_bits > 0.0 && out.report.avg_bits <= 8.0);
    }
}
