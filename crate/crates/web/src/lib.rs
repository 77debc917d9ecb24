//! Browser bindings: every export returns a JSON string (or an SVG inside
//! one) so the page needs no glue beyond `JSON.parse`.

use std::cell::OnceCell;

use serde_json::json;
use wasm_bindgen::prelude::*;

use goblend::affect::{build_index, AffectIndex, Weighting};
use goblend::env::{feature, RacingEnv, Vec2};
use goblend::explore::{explore, Engine, ExplorationConfig, Mode};
use goblend::harness::{render_trace, stats};
use goblend::persona::{adjusted_rand_index, cluster_dataset, ClusterConfig, Clustering};
use goblend::trace::{generate_cohort, generate_session, GeneratorConfig};
use goblend::Tier;

/// Largest exploration budget the page may request.
pub const MAX_DEMO_ITERATIONS: u64 = 5_000;

struct Demo {
    env: RacingEnv,
    clustering: Clustering,
    truth: Vec<usize>,
    data: goblend::trace::Dataset,
}

thread_local! {
    static DEMO: OnceCell<Demo> = const { OnceCell::new() };
}

fn with_demo<T>(f: impl FnOnce(&Demo) -> Result<T, String>) -> Result<T, String> {
    DEMO.with(|cell| {
        if cell.get().is_none() {
            let env = RacingEnv::with_default_track();
            let data = generate_cohort(&env, &GeneratorConfig::default()).map_err(|e| e.to_string())?;
            let clustering = cluster_dataset(&data, &ClusterConfig::default()).map_err(|e| e.to_string())?;
            let truth = data
                .sessions
                .iter()
                .map(|s| s.tier.map_or(0, |t| t as usize))
                .collect();
            let _ = cell.set(Demo { env, clustering, truth, data });
        }
        f(cell.get().expect("initialized above"))
    })
}

fn parse_tier(tier: &str) -> Result<Tier, String> {
    tier.parse()
}

/// Drives one scripted session of `tier` and draws it colored by its
/// annotated arousal.
pub fn simulate(tier: &str, seed: u64) -> Result<String, String> {
    let tier = parse_tier(tier)?;
    let env = RacingEnv::with_default_track();
    let s = generate_session(&env, &GeneratorConfig::default(), tier, "demo".into(), seed)
        .map_err(|e| e.to_string())?;
    let pos: Vec<Vec2> = s
        .windows
        .iter()
        .map(|w| Vec2::new(w.features.get(feature::POS_X), w.features.get(feature::POS_Y)))
        .collect();
    Ok(json!({
        "tier": tier.to_string(),
        "windows": s.len(),
        "final_score": s.final_score(),
        "svg": render_trace(env.layout(), &pos, &s.arousal),
    })
    .to_string())
}

/// A short exploration imitating `tier` at blend weight `lambda`.
pub fn explore_persona(tier: &str, lambda: f64, iterations: u64, seed: u64) -> Result<String, String> {
    let tier = parse_tier(tier)?;
    let cfg = ExplorationConfig {
        iterations: iterations.clamp(1, MAX_DEMO_ITERATIONS),
        lambda,
        seed,
        mode: Mode::Blend,
        progress_every: 100,
        ..Default::default()
    };
    with_demo(|d| {
        let personas = &d.clustering.personas;
        let persona = personas.get(tier).map_err(|e| e.to_string())?;
        let index: AffectIndex =
            build_index(&d.data, persona, cfg.k, Weighting::Dudani).map_err(|e| e.to_string())?;
        let engine = Engine::new(&d.env, &cfg, Some(persona), Some(&index), &personas.population_frequencies)
            .map_err(|e| e.to_string())?;
        let r = explore(&engine, &cfg).map_err(|e| e.to_string())?;
        let states = stats::replay(&d.env, seed, &r.best.trajectory.actions).map_err(|e| e.to_string())?;
        let (_, h_e) = stats::traces(&d.env, &states, &index);
        let pos: Vec<Vec2> = states.iter().map(|s| s.player.position).collect();
        let last = r.progress.last().copied();
        Ok(json!({
            "persona": tier.to_string(),
            "lambda": lambda,
            "iterations": cfg.iterations,
            "cells": r.archive.len(),
            "key_space_pct": last.map_or(0.0, |p| p.key_space_pct),
            "completed": r.best_completed,
            "final_score": r.best.raw_score,
            "windows": r.best.trajectory.len(),
            "r_b": r.best.r_b,
            "r_e": r.best.r_e,
            "svg": render_trace(d.env.layout(), &pos, &h_e),
        })
        .to_string())
    })
}

/// Cuts the cohort's dendrogram at `threshold` and scores the partition
/// against the generating tiers.
pub fn cut_dendrogram(threshold: f64) -> Result<String, String> {
    if !(threshold > 0.0) {
        return Err(format!("threshold must be positive, got {threshold}"));
    }
    with_demo(|d| {
        let dg = &d.clustering.dendrogram;
        let labels = dg.cut(threshold);
        let mut sizes = vec![0usize; labels.iter().max().map_or(0, |m| m + 1)];
        for &l in &labels {
            sizes[l] += 1;
        }
        let top: Vec<f64> = dg.merges.iter().rev().take(8).map(|m| m.distance).collect();
        Ok(json!({
            "threshold": threshold,
            "clusters": sizes.len(),
            "sizes": sizes,
            "ari": adjusted_rand_index(&labels, &d.truth),
            "top_merge_distances": top,
        })
        .to_string())
    })
}

#[wasm_bindgen(js_name = simulate)]
pub fn simulate_js(tier: &str, seed: u32) -> Result<String, JsValue> {
    simulate(tier, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = explorePersona)]
pub fn explore_persona_js(tier: &str, lambda: f64, iterations: u32, seed: u32) -> Result<String, JsValue> {
    explore_persona(tier, lambda, iterations as u64, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = cutDendrogram)]
pub fn cut_dendrogram_js(threshold: f64) -> Result<String, JsValue> {
    cut_dendrogram(threshold).map_err(|e| JsValue::from_str(&e))
}
