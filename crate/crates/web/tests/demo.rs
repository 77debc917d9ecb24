use goblend_web::{cut_dendrogram, explore_persona, simulate};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn simulate_returns_svg_and_score() {
    let v = parse(simulate("expert", 3).unwrap());
    assert_eq!(v["tier"], "expert");
    let windows = v["windows"].as_u64().unwrap() as usize;
    let svg = v["svg"].as_str().unwrap();
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches("<circle").count(), windows);
    assert!(simulate("pro", 3).is_err());
}

#[test]
fn dendrogram_cut_recovers_tiers_at_default_threshold() {
    let v = parse(cut_dendrogram(160.0).unwrap());
    assert_eq!(v["clusters"], 4);
    assert!(v["ari"].as_f64().unwrap() >= 0.9);
    let sizes: u64 = v["sizes"].as_array().unwrap().iter().map(|s| s.as_u64().unwrap()).sum();
    assert_eq!(sizes, 108);
    assert_eq!(parse(cut_dendrogram(1e9).unwrap())["clusters"], 1);
    assert!(cut_dendrogram(0.0).is_err());
}

#[test]
fn small_exploration_is_reproducible() {
    let a = explore_persona("beginner", 0.5, 60, 9).unwrap();
    assert_eq!(a, explore_persona("beginner", 0.5, 60, 9).unwrap());
    let v = parse(a);
    assert!(v["cells"].as_u64().unwrap() >= 1);
    let r_e = v["r_e"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&r_e));
    assert!(explore_persona("expert", 2.0, 10, 1).is_err());
}
