mod common;

use std::fs;

use hvcpcb::experiments::*;
use hvcpcb::geometry::{PerspectiveRing, RingDistance, RotationLabel};
use hvcpcb::network::{Head, ModelConfig};
use hvcpcb::synthgen::{generate_dataset, make_board_library, GenerationConfig, LabeledSample};
use proptest::prelude::*;

use common::grid_dataset;

fn tiny_settings(classes: usize) -> RunSettings {
    RunSettings {
        model: ModelConfig {
            head: Head::Hvc,
            input_size: 16,
            input_channels: 3,
            channels: vec![4, 8],
            stem_stride: 1,
            capsule_dim: 4,
            num_classes: classes,
        },
        epochs: 4,
        batch_size: 16,
        parallel: true,
    }
}

fn small_dataset() -> Vec<LabeledSample> {
    let lib = make_board_library(2, 21).unwrap();
    let cfg = GenerationConfig {
        out_size: 16,
        seed: 21,
        ..GenerationConfig::default()
    };
    generate_dataset(&lib, &cfg).unwrap()
}

fn fake_results(id: &str, head: Head, accs: &[f64]) -> Vec<TrialResult> {
    accs.iter()
        .enumerate()
        .map(|(i, &a)| TrialResult {
            spec_id: id.into(),
            model: head,
            trial: i,
            seed: 100 + i as u64,
            accuracy: a,
            wall_time_s: 1.5,
        })
        .collect()
}

#[test]
fn zero_trials_give_no_results() {
    let data = grid_dataset(2);
    let spec = lookup("E1").unwrap().with_trials(0);
    let out = run_experiment(&spec, &data, 0, &tiny_settings(2)).unwrap();
    assert!(out.is_empty());
}

#[test]
fn runs_are_deterministic_and_seeded_per_trial() {
    let data = small_dataset();
    let settings = RunSettings {
        epochs: 2,
        ..tiny_settings(2)
    };
    for head in Head::BOTH {
        let spec = lookup("E5").unwrap().with_model(head).with_trials(2);
        let a = run_experiment(&spec, &data, 40, &settings).unwrap();
        let b = run_experiment(&spec, &data, 40, &RunSettings { parallel: false, ..settings.clone() })
            .unwrap();
        let acc = |r: &[TrialResult]| r.iter().map(|t| t.accuracy).collect::<Vec<_>>();
        assert_eq!(acc(&a), acc(&b));
        assert_eq!(a.iter().map(|t| t.seed).collect::<Vec<_>>(), vec![40, 41]);
        assert!(a.iter().all(|t| t.model == head && t.spec_id == "E5"));
        assert!(a.iter().all(|t| (0.0..=1.0).contains(&t.accuracy)));
    }
}

#[test]
fn full_coverage_beats_neutral_only_training() {
    let data = small_dataset();
    let settings = tiny_settings(2);
    let run = |id: &str| {
        let spec = lookup(id).unwrap().with_trials(3);
        let r = run_experiment(&spec, &data, 7, &settings).unwrap();
        mean(&r.iter().map(|t| t.accuracy).collect::<Vec<_>>())
    };
    let (e1, e9) = (run("E1"), run("E9"));
    assert!(e1 > e9, "E1 {e1} vs E9 {e9}");
}

#[test]
fn e5_counterparts_are_a4_to_a6() {
    let ids: Vec<String> = counterparts("E5").into_iter().map(|s| s.id).collect();
    assert_eq!(ids, ["A4", "A5", "A6"]);
    for spec in counterparts("E5") {
        let e5 = lookup("E5").unwrap();
        assert_eq!(spec.included_rotations, e5.included_rotations);
        assert_eq!(spec.included_rings, e5.included_rings);
    }
    assert!(counterparts("E1").is_empty());
    assert!(counterparts("ALL").is_empty());
}

#[test]
fn unknown_id_names_the_valid_ones() {
    let err = lookup("E10").unwrap_err().to_string();
    for needle in ["E10", "E1-E9", "A1-A16", "ALL"] {
        assert!(err.contains(needle), "{err}");
    }
    assert_eq!(lookup("all").unwrap().id, "ALL");
    assert_eq!(valid_ids().len(), 26);
}

#[test]
fn every_spec_sees_the_same_test_set() {
    let data = grid_dataset(3);
    let hashes: Vec<String> = catalog()
        .iter()
        .map(|s| build_split(&data, s).unwrap().test_hash())
        .collect();
    assert!(hashes.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(build_split(&data, &catalog()[0]).unwrap().test.len(), 3 * 125);
}

#[test]
fn e1_split_contains_every_other_split() {
    let data = grid_dataset(2);
    let key = |e: &hvcpcb::network::Example<'_>| (e.class, e.rotation, e.ring);
    let full: Vec<_> = build_split(&data, &lookup("E1").unwrap()).unwrap().train;
    for spec in e_series() {
        let part = build_split(&data, &spec).unwrap().train;
        for ex in &part {
            assert!(full.iter().any(|f| key(f) == key(ex)), "{}", spec.id);
        }
        assert!(part.len() <= full.len());
    }
}

fn spec_with(rotations: Vec<RotationLabel>, rings: Vec<RingDistance>) -> ExperimentSpec {
    ExperimentSpec {
        included_rotations: rotations,
        included_rings: rings,
        ..lookup("E9").unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adding_a_category_never_removes_samples(
        rot_mask in 0u8..16,
        ring_mask in 0u8..4,
        extra_rot in 0usize..4,
        extra_ring in 0usize..2,
    ) {
        let rot_pool = [
            RotationLabel::LeftWide,
            RotationLabel::LeftShallow,
            RotationLabel::RightShallow,
            RotationLabel::RightWide,
        ];
        let ring_pool = [RingDistance::Near, RingDistance::Far];
        let pick_rot = |mask: u8| -> Vec<RotationLabel> {
            (0..4).filter(|i| mask & (1 << i) != 0).map(|i| rot_pool[i]).collect()
        };
        let pick_ring = |mask: u8| -> Vec<RingDistance> {
            (0..2).filter(|i| mask & (1 << i) != 0).map(|i| ring_pool[i]).collect()
        };
        let data = grid_dataset(1);
        let base = spec_with(pick_rot(rot_mask), pick_ring(ring_mask));
        let wider_rot = spec_with(pick_rot(rot_mask | 1 << extra_rot), pick_ring(ring_mask));
        let wider_ring = spec_with(pick_rot(rot_mask), pick_ring(ring_mask | 1 << extra_ring));

        let count = |s: &ExperimentSpec| build_split(&data, s).unwrap().train.len();
        let n = count(&base);
        prop_assert!(count(&wider_rot) >= n);
        prop_assert!(count(&wider_ring) >= n);
        // Closed form: 4 copies x (1 + rotations) x (1 + 8 near + 16 far).
        let rings = 1 + pick_ring(ring_mask)
            .iter()
            .map(|d| if *d == RingDistance::Near { 8 } else { 16 })
            .sum::<usize>();
        prop_assert_eq!(n, 4 * (1 + pick_rot(rot_mask).len()) * rings);
        let included = build_split(&data, &base).unwrap().train;
        prop_assert!(included.iter().all(|e| base.includes_rotation(e.rotation)
            && base.includes_ring(e.ring)));
        prop_assert!(included.iter().any(|e| e.rotation == RotationLabel::Neutral
            && e.ring == PerspectiveRing::Neutral));
    }

    #[test]
    fn summary_rows_satisfy_invariants(
        a in prop::collection::vec(0.0f64..=1.0, 1..7),
        b in prop::collection::vec(0.0f64..=1.0, 1..7),
    ) {
        let mut results = fake_results("E3", Head::FullyConnected, &a);
        results.extend(fake_results("E3", Head::Hvc, &b));
        let rows = summary_rows(&results).unwrap();
        prop_assert_eq!(rows.len(), 2);
        for row in &rows {
            prop_assert!(row.stats.mean <= row.stats.max + 1e-12);
            prop_assert!(row.stats.sd >= 0.0);
            if let Some(p) = row.p_value {
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
        prop_assert_eq!(rows[0].p_value, rows[1].p_value);
        prop_assert_eq!(rows[0].p_value.is_some(), a.len() >= 2 && b.len() >= 2);
    }
}

#[test]
fn identical_result_sets_compare_equal() {
    let accs = [0.8, 0.85, 0.9];
    let report = summarize(&accs, &accs).unwrap();
    assert_eq!(report.first.mean, report.second.mean);
    assert_eq!(report.p_value(), Some(1.0));
}

#[test]
fn emit_table_writes_all_artifacts() {
    let mut results = Vec::new();
    for (id, m1, m2) in [
        ("E5", [0.80, 0.82, 0.81], [0.86, 0.88, 0.87]),
        ("A5", [0.84, 0.85, 0.83], [0.90, 0.91, 0.92]),
        ("ALL", [0.923, 0.923, 0.923], [0.95, 0.96, 0.97]),
    ] {
        results.extend(fake_results(id, Head::Hvc, &m2));
        results.extend(fake_results(id, Head::FullyConnected, &m1));
    }
    let dir = tempfile::tempdir().unwrap();
    emit_table(&results, dir.path()).unwrap();

    let res = fs::read_to_string(dir.path().join(RESULTS_NAME)).unwrap();
    let mut lines = res.lines();
    assert_eq!(lines.next().unwrap(), "spec_id,model,trial,seed,accuracy,wall_time_s");
    assert_eq!(lines.next().unwrap(), "E5,M1,0,100,0.800000,1.500000");
    assert_eq!(res.lines().count(), 1 + results.len());

    let summary = fs::read_to_string(dir.path().join(SUMMARY_NAME)).unwrap();
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows[0], "spec_id,model,mean,max,sd,p_value_vs_other_model");
    assert_eq!(rows.len(), 7);
    let order: Vec<&str> = rows[1..].iter().map(|r| &r[..r.find(',').unwrap() + 3]).collect();
    assert_eq!(order, ["E5,M1", "E5,M2", "A5,M1", "A5,M2", "ALL,M1", "ALL,M2"]);
    assert!(rows[5].starts_with("ALL,M1,0.923000,0.923000,0.000000,"));

    let tables = fs::read_to_string(dir.path().join(TABLES_NAME)).unwrap();
    for heading in ["Exclusion", "Augmented", "Exclusion versus augmented", "No exclusions"] {
        assert!(tables.contains(heading), "missing {heading}");
    }

    let back = read_results(&dir.path().join(RESULTS_NAME)).unwrap();
    assert_eq!(back.len(), results.len());
    let mut sorted = results.clone();
    sort_results(&mut sorted);
    for (x, y) in sorted.iter().zip(&back) {
        assert_eq!((&x.spec_id, x.model, x.trial, x.seed), (&y.spec_id, y.model, y.trial, y.seed));
        assert!((x.accuracy - y.accuracy).abs() < 1e-6);
    }
}

#[test]
fn e_versus_a_groups_counterparts() {
    let mut results = Vec::new();
    for id in ["E5", "A4", "A5", "A6", "E1"] {
        for head in Head::BOTH {
            results.extend(fake_results(id, head, &[0.5, 0.6, 0.7]));
        }
    }
    let pairs: Vec<(String, String)> = e_vs_a(&results)
        .unwrap()
        .into_iter()
        .filter(|(_, _, head, _)| *head == Head::Hvc)
        .map(|(e, a, _, _)| (e, a))
        .collect();
    let want: Vec<(String, String)> = ["A4", "A5", "A6"]
        .iter()
        .map(|a| ("E5".to_string(), a.to_string()))
        .collect();
    assert_eq!(pairs, want);
}
