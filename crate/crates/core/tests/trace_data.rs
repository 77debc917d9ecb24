mod common;

use goblend::env::feature;
use goblend::trace::csvio::{read_sessions, write_sessions};
use goblend::trace::{load_sessions, normalize_trace, save_sessions, truncate_to_laps};
use goblend::Tier;
use proptest::prelude::*;

#[test]
fn cohort_shape() {
    let c = common::cohort();
    assert_eq!(c.data.len(), 108);
    for s in &c.data.sessions {
        s.validate().unwrap();
        assert!(s.arousal.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(s.windows.last().unwrap().features.get(feature::SCORE) <= 16.0);
    }
    let experts = c.data.sessions.iter().filter(|s| s.tier == Some(Tier::Expert)).count();
    assert_eq!(experts, 27);
    let f = c.data.action_frequencies();
    assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn file_round_trip() {
    let c = common::cohort();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    save_sessions(&path, &c.data).unwrap();
    assert_eq!(load_sessions(&path).unwrap(), c.data);
    let mut buf = Vec::new();
    write_sessions(&mut buf, &c.data).unwrap();
    assert_eq!(read_sessions(std::str::from_utf8(&buf).unwrap()).unwrap(), c.data);
}

#[test]
fn truncation_keeps_lengths_paired() {
    for s in &common::cohort().data.sessions {
        let one = truncate_to_laps(s, 1).unwrap();
        assert_eq!(one.windows.len(), one.arousal.len());
        assert!(one.len() <= s.len());
    }
}

proptest! {
    #[test]
    fn normalization_is_idempotent(raw in prop::collection::vec(-1e6f64..1e6, 1..480)) {
        let once = normalize_trace(&raw).unwrap();
        prop_assert!(once.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(normalize_trace(&once).unwrap(), once);
    }
}
