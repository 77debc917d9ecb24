mod common;

use goblend::persona::{adjusted_rand_index, member_sessions, ward_cluster, PersonaSet};
use goblend::Tier;

#[test]
fn default_cohort_recovers_tiers() {
    let c = &common::cohort().clustering;
    let truth: Vec<usize> = common::cohort().data.sessions.iter().map(|s| s.tier.unwrap() as usize).collect();
    assert!(adjusted_rand_index(&c.assignment, &truth) >= 0.9);
    assert_eq!(c.dendrogram.cluster_count(160.0), 4);
    let p = &c.personas;
    let members: usize = p.personas.iter().map(|x| x.member_count).sum();
    assert_eq!(members, 108);
    for w in Tier::BY_RANK.windows(2) {
        assert!(p.get(w[0]).unwrap().mean_final_score >= p.get(w[1]).unwrap().mean_final_score);
    }
}

#[test]
fn persona_targets_are_bounded_and_held() {
    let c = common::cohort();
    for p in &c.clustering.personas.personas {
        assert_eq!(p.target_score.len(), 480);
        assert!(p.target_score.windows(2).all(|w| w[0] <= w[1]));
        assert!(p.target_arousal.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(member_sessions(&c.data, p).unwrap().len(), p.member_count);
    }
}

#[test]
fn merge_distances_do_not_decrease() {
    let std = &common::cohort().clustering.standardized;
    let d = ward_cluster(std).unwrap();
    assert!(d.merges.windows(2).all(|w| w[1].distance >= w[0].distance * (1.0 - 1e-9)));
    assert_eq!(d.merges.len(), std.len() - 1);
    assert_eq!(d.merges.last().unwrap().size, std.len());
}

#[test]
fn persona_set_json_round_trip() {
    let p = &common::cohort().clustering.personas;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    p.save(&path).unwrap();
    assert_eq!(&PersonaSet::load(&path).unwrap(), p);
}
