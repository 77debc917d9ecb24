mod common;

use goblend::affect::{build_index, AffectIndex, Weighting};
use goblend::env::CellKey;
use goblend::explore::dump::{actions_from_text, write_archive};
use goblend::explore::{
    explore, reward_similarity, Engine, ExplorationConfig, ExploreError, Mode, Offer,
};
use goblend::persona::PersonaModel;
use goblend::Tier;
use proptest::prelude::*;

fn naive(h: &[f64], t: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, hv) in h.iter().enumerate() {
        let tv = t.get(i).or(t.last()).unwrap();
        let s = 1.0 - (hv - tv).abs();
        acc += s * s;
    }
    acc / h.len() as f64
}

proptest! {
    #[test]
    fn reward_matches_naive_sum(
        h in prop::collection::vec(0.0f64..=1.0, 1..480),
        t in prop::collection::vec(0.0f64..=1.0, 1..480),
    ) {
        prop_assert!((reward_similarity(&h, &t).unwrap() - naive(&h, &t)).abs() <= 1e-12);
    }
}

fn setup(tier: Tier) -> (&'static PersonaModel, AffectIndex) {
    let c = common::cohort();
    let p = c.clustering.personas.get(tier).unwrap();
    (p, build_index(&c.data, p, 5, Weighting::Dudani).unwrap())
}

fn config(iterations: u64, lambda: f64, seed: u64) -> ExplorationConfig {
    ExplorationConfig { iterations, lambda, seed, progress_every: 50, ..Default::default() }
}

#[test]
fn first_iteration_bookkeeping() {
    let c = common::cohort();
    let (p, idx) = setup(Tier::Advanced);
    let cfg = config(1, 0.5, 3);
    let engine = Engine::new(&c.env, &cfg, Some(p), Some(&idx), &c.data.action_frequencies()).unwrap();
    let r = explore(&engine, &cfg).unwrap();
    let k = r.archive.counters;
    assert_eq!(k.iterations, 1);
    assert!(r.archive.len() >= 1);
    assert_eq!(k.inserted as usize, r.archive.len());
    // the seed cell plus one candidate per action
    assert_eq!(k.candidates, 21);
    assert!(k.inserted + k.replaced + k.shortened <= k.candidates);
}

#[test]
fn same_seed_same_best_and_replayable_archive() {
    let c = common::cohort();
    let (p, idx) = setup(Tier::Expert);
    let cfg = config(400, 0.5, 8);
    let engine = Engine::new(&c.env, &cfg, Some(p), Some(&idx), &c.data.action_frequencies()).unwrap();
    let a = explore(&engine, &cfg).unwrap();
    let b = explore(&engine, &cfg).unwrap();
    assert_eq!(a.best, b.best);
    assert_eq!(a.archive.entries(), b.archive.entries());
    for e in a.archive.entries() {
        engine.verify_entry(e).unwrap();
        for v in [e.r_b, e.r_e, e.fitness] {
            assert!((0.0..=1.0).contains(&v));
        }
    }
    let rows: Vec<u64> = a.progress.iter().map(|r| r.iteration).collect();
    assert_eq!(rows, (1..=8).map(|i| i * 50).collect::<Vec<_>>());
    assert!(a.progress.windows(2).all(|w| w[0].cells <= w[1].cells));
}

#[test]
fn injected_candidates_follow_replacement_rules() {
    let c = common::cohort();
    let (p, idx) = setup(Tier::Intermediate);
    let cfg = config(200, 0.0, 5);
    let engine = Engine::new(&c.env, &cfg, Some(p), Some(&idx), &c.data.action_frequencies()).unwrap();
    let mut r = explore(&engine, &cfg).unwrap();
    let e = r.archive.entries().iter().find(|e| e.trajectory.len() >= 4).unwrap().clone();

    let mut longer = e.clone();
    longer.trajectory.actions.push(longer.trajectory.actions[0]);
    assert_eq!(r.archive.offer(longer), Offer::Rejected);

    let mut shorter = e.clone();
    shorter.trajectory.actions.pop();
    assert_eq!(r.archive.offer(shorter), Offer::Shortened);
    assert_eq!(r.archive.get(&e.key).unwrap().trajectory.len(), e.trajectory.len() - 1);
    assert_eq!(r.archive.get(&e.key).unwrap().discovered, e.discovered);

    let mut worse = e.clone();
    worse.fitness -= 0.1;
    assert_eq!(r.archive.offer(worse), Offer::Rejected);
    assert_eq!(r.archive.counters.decreases, 0);
}

#[test]
fn parallel_workers_keep_invariants() {
    let c = common::cohort();
    let (p, idx) = setup(Tier::Beginner);
    let cfg = ExplorationConfig { workers: 3, ..config(300, 1.0, 6) };
    let engine = Engine::new(&c.env, &cfg, Some(p), Some(&idx), &c.data.action_frequencies()).unwrap();
    let r = explore(&engine, &cfg).unwrap();
    assert_eq!(r.archive.counters.iterations, 300);
    assert_eq!(r.archive.counters.decreases, 0);
    assert!(r.archive.len() <= CellKey::key_space(c.env.layout().subsegment_count()));
    for e in r.archive.entries() {
        engine.verify_entry(e).unwrap();
    }
}

#[test]
fn winner_mode_ignores_persona_rewards() {
    let c = common::cohort();
    let cfg = ExplorationConfig { mode: Mode::Winner, ..config(300, 0.0, 2) };
    let engine = Engine::new(&c.env, &cfg, None, None, &c.data.action_frequencies()).unwrap();
    let r = explore(&engine, &cfg).unwrap();
    for e in r.archive.entries() {
        assert_eq!((e.r_b, e.r_e), (0.0, 0.0));
        assert_eq!(e.fitness, e.raw_score as f64 / 16.0);
    }
}

#[test]
fn bad_frequency_table_is_rejected() {
    let c = common::cohort();
    let cfg = ExplorationConfig { mode: Mode::Winner, ..config(10, 0.0, 2) };
    let mut f = c.data.action_frequencies();
    f[0] += 0.5;
    assert!(matches!(Engine::new(&c.env, &cfg, None, None, &f), Err(ExploreError::Frequencies(_))));
}

#[test]
fn archive_dump_has_one_action_file_per_entry() {
    let c = common::cohort();
    let cfg = ExplorationConfig { mode: Mode::Winner, ..config(100, 0.0, 4) };
    let engine = Engine::new(&c.env, &cfg, None, None, &c.data.action_frequencies()).unwrap();
    let r = explore(&engine, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_archive(dir.path(), &r).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("archive.csv")).unwrap();
    assert_eq!(csv.lines().count(), r.archive.len() + 1);
    let files = std::fs::read_dir(dir.path().join("actions")).unwrap().count();
    assert_eq!(files, r.archive.len());
    let e = r.archive.entry(r.archive.len() - 1);
    let text = std::fs::read_to_string(dir.path().join(format!("actions/{}.txt", r.archive.len() - 1))).unwrap();
    assert_eq!(actions_from_text(&text).unwrap(), e.trajectory.actions);
}
