use std::collections::BTreeMap;

use holmes_core::data::*;
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = PromptKind> {
    prop_oneof![
        Just(PromptKind::GeneralPositive),
        Just(PromptKind::GeneralNegative),
        proptest::sample::select(DefectTag::ALL.to_vec()).prop_map(PromptKind::Specialist),
    ]
}

fn sft_record() -> impl Strategy<Value = SftRecord> {
    (
        "[a-z0-9-]{1,12}",
        "[a-z0-9]{1,8}",
        kind(),
        "[a-z]{1,6}( [a-z\u{e9}\"\\\\]{1,6}){0,8}",
        proptest::collection::btree_map("[a-z]{1,5}", 1.0f64..=5.0, 1..5),
    )
        .prop_map(|(id, image_id, prompt_kind, annotation, judge_scores): (_, _, _, _, BTreeMap<String, f64>)| {
            let consensus_score = judge_scores.values().sum::<f64>() / judge_scores.len() as f64;
            let annotator = judge_scores.keys().next().unwrap().clone();
            SftRecord { id, image_id, prompt_kind, annotation, annotator, judge_scores, consensus_score }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sft_records_round_trip_through_jsonl(records in proptest::collection::vec(sft_record(), 0..8)) {
        let mut seen = std::collections::HashSet::new();
        let records: Vec<SftRecord> = records.into_iter().filter(|r| seen.insert(r.id.clone())).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sft.jsonl");
        save_jsonl(&records, &path).unwrap();
        let back: Vec<SftRecord> = load_jsonl(&path).unwrap();
        prop_assert_eq!(back, records);
    }

    #[test]
    fn split_partitions_every_record(n in 3usize..200, seed in any::<u64>()) {
        let s = split_dataset((0..n).collect::<Vec<_>>(), SplitFractions::new(0.7, 0.1, 0.2), seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
}

#[test]
fn dpo_pairs_round_trip() {
    let pair = DpoPair {
        id: "d1:x".into(),
        image_id: "x".into(),
        prompt: "why".into(),
        chosen: "fake the grid".into(),
        rejected: "real the noise".into(),
        origin: Origin::D1,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d1.jsonl");
    save_jsonl(&[pair.clone()], &path).unwrap();
    assert_eq!(load_jsonl::<DpoPair>(&path).unwrap(), vec![pair]);
    assert!(std::fs::read_to_string(&path).unwrap().contains("\"origin\":\"d1\""));
}

#[test]
fn config_files_load_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("holmes.toml");
    std::fs::write(&path, "consensus_threshold = 3.5\nseed = 11\n[fusion]\nalpha = 1.0\nbeta = 0.5\ngamma = 0.0\n").unwrap();
    let cfg = PipelineConfig::load(&path).unwrap();
    assert_eq!(cfg.consensus_threshold, 3.5);
    assert_eq!(cfg.fusion.beta, 0.5);
    assert_eq!(cfg.dpo_beta, 0.1);
    std::fs::write(&path, "consensus_threshold = 7.0\n").unwrap();
    assert!(PipelineConfig::load(&path).is_err());
}
