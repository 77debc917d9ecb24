//! Archive-based exploration: select a cell, return to it from its snapshot,
//! take sampled actions, and keep the best trajectory per cell under the
//! blended behavior/experience reward.

pub mod archive;
pub mod dump;
pub mod reward;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use archive::{Archive, ArchiveCounters, ArchiveEntry, Offer, Trajectory, FITNESS_TOLERANCE};
pub use reward::{blend, reward_similarity};

use crate::affect::{AffectError, AffectIndex, Weighting};
use crate::env::{
    restore, snapshot, Action, CellKey, EnvError, GameState, RacingEnv, Snapshot, MAX_SCORE,
};
use crate::persona::PersonaModel;

#[derive(Debug, Error, PartialEq)]
pub enum ExploreError {
    #[error("empty {0}")]
    EmptyTrace(&'static str),
    #[error("value outside [0, 1]: {0}")]
    OutOfRange(String),
    #[error("cannot select from an empty archive")]
    EmptyArchive,
    #[error("invalid action frequency table: {0}")]
    Frequencies(String),
    #[error("invalid exploration config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Affect(#[from] AffectError),
    #[error("{0}")]
    Io(String),
}

/// What the archive optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Objective {
    /// `lambda * R_e + (1 - lambda) * R_b` against a persona.
    Blend { lambda: f64 },
    /// Raw score / 16; no persona involved.
    Score,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Blend,
    Winner,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplorationConfig {
    pub iterations: u64,
    pub actions_per_iteration: usize,
    pub mode: Mode,
    pub lambda: f64,
    pub k: usize,
    pub weighting: Weighting,
    pub seed: u64,
    /// Restores whose iteration is a multiple of this are checked against a
    /// replay from reset.
    pub replay_check_every: u64,
    pub progress_every: u64,
    /// Worker threads; 1 is the deterministic mode.
    pub workers: usize,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            iterations: 50_000,
            actions_per_iteration: 20,
            mode: Mode::Blend,
            lambda: 0.0,
            k: 5,
            weighting: Weighting::Dudani,
            seed: 0,
            replay_check_every: 100,
            progress_every: 1_000,
            workers: 1,
        }
    }
}

impl ExplorationConfig {
    pub fn objective(&self) -> Objective {
        match self.mode {
            Mode::Blend => Objective::Blend { lambda: self.lambda },
            Mode::Winner => Objective::Score,
        }
    }

    pub fn validate(&self) -> Result<(), ExploreError> {
        let bad = |m: &str| Err(ExploreError::Config(m.to_string()));
        if self.iterations == 0 {
            return bad("iterations must be >= 1");
        }
        if self.actions_per_iteration == 0 {
            return bad("actions_per_iteration must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if self.k == 0 {
            return bad("k must be >= 1");
        }
        if self.replay_check_every == 0 || self.progress_every == 0 {
            return bad("check and progress intervals must be >= 1");
        }
        if self.workers == 0 {
            return bad("workers must be >= 1");
        }
        Ok(())
    }
}

/// Categorical sampler over the nine (steer, gas) combinations.
#[derive(Debug, Clone)]
pub struct ActionSampler {
    dist: WeightedIndex<f64>,
}

impl ActionSampler {
    pub fn new(table: &[f64; Action::COUNT]) -> Result<Self, ExploreError> {
        if let Some(v) = table.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(ExploreError::Frequencies(format!("bad weight {v}")));
        }
        let sum: f64 = table.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ExploreError::Frequencies(format!("weights sum to {sum}, not 1")));
        }
        let dist = WeightedIndex::new(table).map_err(|e| ExploreError::Frequencies(e.to_string()))?;
        Ok(Self { dist })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Action {
        Action::from_index(self.dist.sample(rng))
    }
}

pub fn sample_action(table: &[f64; Action::COUNT], rng: &mut impl Rng) -> Result<Action, ExploreError> {
    Ok(ActionSampler::new(table)?.sample(rng))
}

/// Uniform choice over archive entries; returns the entry's position.
pub fn select_cell(archive: &Archive, rng: &mut impl Rng) -> Result<usize, ExploreError> {
    if archive.is_empty() {
        return Err(ExploreError::EmptyArchive);
    }
    Ok(rng.gen_range(0..archive.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgressRow {
    pub iteration: u64,
    pub cells: usize,
    pub key_space_pct: f64,
    pub lap2_key_space_pct: f64,
    pub best_fitness: f64,
    pub completed_episodes: u64,
}

/// Orders candidates for "best": fitness, then raw score, then shorter.
fn better(a: &ArchiveEntry, b: &ArchiveEntry) -> bool {
    a.fitness
        .total_cmp(&b.fitness)
        .then(a.raw_score.cmp(&b.raw_score))
        .then(b.trajectory.len().cmp(&a.trajectory.len()))
        .is_gt()
}

/// Everything an exploration step needs besides the archive and the RNG.
pub struct Engine<'a> {
    pub env: &'a RacingEnv,
    pub objective: Objective,
    /// Persona targets `(t_b, t_e)`; required for [`Objective::Blend`].
    pub targets: Option<(&'a [f64], &'a [f64])>,
    pub index: Option<&'a AffectIndex>,
    pub sampler: ActionSampler,
    pub actions_per_iteration: usize,
    pub env_seed: u64,
    pub replay_check_every: u64,
}

/// One evaluated window of a rollout.
pub struct Candidate<'c> {
    pub key: CellKey,
    pub fitness: f64,
    pub state: &'c GameState,
    pub trajectory: &'c Trajectory,
}

impl Candidate<'_> {
    pub fn to_entry(&self, iteration: u64) -> ArchiveEntry {
        ArchiveEntry {
            key: self.key,
            trajectory: self.trajectory.clone(),
            snapshot: snapshot(self.state),
            r_b: self.trajectory.r_b(),
            r_e: self.trajectory.r_e(),
            fitness: self.fitness,
            raw_score: self.state.score,
            finished: self.state.finished,
            discovered: iteration,
            updated: iteration,
        }
    }
}

impl<'a> Engine<'a> {
    pub fn new(
        env: &'a RacingEnv,
        config: &ExplorationConfig,
        persona: Option<&'a PersonaModel>,
        index: Option<&'a AffectIndex>,
        frequencies: &[f64; Action::COUNT],
    ) -> Result<Self, ExploreError> {
        config.validate()?;
        let objective = config.objective();
        let targets = persona.map(|p| (p.target_score.as_slice(), p.target_arousal.as_slice()));
        if let Objective::Blend { .. } = objective {
            if targets.is_none() || index.is_none() {
                return Err(ExploreError::Config(
                    "blend mode needs a persona and an affect index".into(),
                ));
            }
        }
        let (targets, index) = match objective {
            Objective::Blend { .. } => (targets, index),
            Objective::Score => (None, None),
        };
        Ok(Self {
            env,
            objective,
            targets,
            index,
            sampler: ActionSampler::new(frequencies)?,
            actions_per_iteration: config.actions_per_iteration,
            env_seed: config.seed,
            replay_check_every: config.replay_check_every,
        })
    }

    fn fitness(&self, state: &GameState, traj: &Trajectory) -> f64 {
        match self.objective {
            Objective::Blend { lambda } => blend(traj.r_e(), traj.r_b(), lambda),
            Objective::Score => state.score as f64 / MAX_SCORE as f64,
        }
    }

    /// Appends one window to `traj` for the state reached by `action`.
    fn extend(&self, traj: &mut Trajectory, state: &GameState, action: Action, hint: &mut Vec<usize>) {
        let h_b = state.score as f64 / MAX_SCORE as f64;
        let h_e = match self.index {
            Some(idx) => {
                let nb = idx.neighbors_with_hint(&self.env.features(state), hint);
                hint.clear();
                hint.extend(nb.iter().map(|n| n.row));
                idx.weighted(&nb)
            }
            None => 0.0,
        };
        traj.push(action, h_b, h_e, self.targets.map(|t| t.0), self.targets.map(|t| t.1));
    }

    /// The seed cell at reset.
    pub fn root(&self) -> ArchiveEntry {
        let state = self.env.reset(self.env_seed);
        let traj = Trajectory::default();
        Candidate {
            key: self.env.discretize(&state),
            fitness: self.fitness(&state, &traj),
            state: &state,
            trajectory: &traj,
        }
        .to_entry(0)
    }

    /// Restores a cell, checking the snapshot against a replay on sampled
    /// iterations.
    pub fn restore_cell(
        &self,
        snap: &Snapshot,
        actions: &[Action],
        iteration: u64,
    ) -> Result<GameState, ExploreError> {
        let state = restore(snap)?;
        if iteration.is_multiple_of(self.replay_check_every) {
            let replayed = self.env.replay_final(self.env_seed, actions)?;
            if snapshot(&replayed) != *snap {
                return Err(EnvError::ReplayDivergence {
                    window: replayed.window_index as usize,
                    detail: format!("restored snapshot differs from replay at iteration {iteration}"),
                }
                .into());
            }
        }
        Ok(state)
    }

    /// Takes up to `actions_per_iteration` sampled actions from `state`,
    /// reporting every reached window to `sink`.
    pub fn rollout(
        &self,
        mut state: GameState,
        mut traj: Trajectory,
        rng: &mut impl Rng,
        mut sink: impl FnMut(&Candidate<'_>),
    ) -> Result<(), ExploreError> {
        let mut hint = Vec::new();
        for _ in 0..self.actions_per_iteration {
            if state.finished {
                break;
            }
            let action = self.sampler.sample(rng);
            state = self.env.step(&state, action)?;
            self.extend(&mut traj, &state, action, &mut hint);
            sink(&Candidate {
                key: self.env.discretize(&state),
                fitness: self.fitness(&state, &traj),
                state: &state,
                trajectory: &traj,
            });
        }
        Ok(())
    }

    /// Replays an entry's actions from reset and checks that its key, score,
    /// rewards and traces come out identical.
    pub fn verify_entry(&self, entry: &ArchiveEntry) -> Result<(), String> {
        let mut state = self.env.reset(self.env_seed);
        let mut traj = Trajectory::default();
        let mut hint = Vec::new();
        for &a in &entry.trajectory.actions {
            state = self.env.step(&state, a).map_err(|e| e.to_string())?;
            self.extend(&mut traj, &state, a, &mut hint);
        }
        let key = self.env.discretize(&state);
        let checks = [
            (key == entry.key, "cell key"),
            (state.score == entry.raw_score, "raw score"),
            (traj.r_b().to_bits() == entry.r_b.to_bits(), "R_b"),
            (traj.r_e().to_bits() == entry.r_e.to_bits(), "R_e"),
            (self.fitness(&state, &traj).to_bits() == entry.fitness.to_bits(), "fitness"),
            (traj == entry.trajectory, "trajectory traces"),
            (snapshot(&state) == entry.snapshot, "snapshot"),
        ];
        match checks.iter().find(|c| !c.0) {
            Some((_, what)) => Err(format!("{what} differs after replay of {:?}", entry.key)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExplorationResult {
    pub archive: Archive,
    /// Best completed episode, or the best archive entry if none completed.
    pub best: ArchiveEntry,
    pub best_completed: bool,
    pub completed_episodes: u64,
    pub progress: Vec<ProgressRow>,
    pub key_space: usize,
    pub lap_key_space: usize,
}

struct Tracker {
    best: Option<ArchiveEntry>,
    completed: u64,
}

impl Tracker {
    fn consider(&mut self, c: &Candidate<'_>, iteration: u64) {
        if !c.state.finished {
            return;
        }
        self.completed += 1;
        let entry = c.to_entry(iteration);
        if self.best.as_ref().is_none_or(|b| better(&entry, b)) {
            self.best = Some(entry);
        }
    }
}

fn progress_row(archive: &Archive, iteration: u64, env: &RacingEnv, completed: u64) -> ProgressRow {
    let s = env.layout().subsegment_count();
    let lap2 = archive.entries().iter().filter(|e| e.key.lap == 2).count();
    ProgressRow {
        iteration,
        cells: archive.len(),
        key_space_pct: 100.0 * archive.len() as f64 / CellKey::key_space(s) as f64,
        lap2_key_space_pct: 100.0 * lap2 as f64 / CellKey::lap_key_space(s) as f64,
        best_fitness: archive.entries().iter().map(|e| e.fitness).fold(0.0, f64::max),
        completed_episodes: completed,
    }
}

fn finish(archive: Archive, tracker: Tracker, progress: Vec<ProgressRow>, env: &RacingEnv) -> ExplorationResult {
    let s = env.layout().subsegment_count();
    let (best, best_completed) = match tracker.best {
        Some(b) => (b, true),
        None => {
            let mut best = archive.entry(0);
            for e in archive.entries() {
                if better(e, best) {
                    best = e;
                }
            }
            (best.clone(), false)
        }
    };
    ExplorationResult {
        archive,
        best,
        best_completed,
        completed_episodes: tracker.completed,
        progress,
        key_space: CellKey::key_space(s),
        lap_key_space: CellKey::lap_key_space(s),
    }
}

/// Runs `config.iterations` iterations against `engine`. With one worker the
/// run is fully determined by `config.seed`.
pub fn explore(engine: &Engine<'_>, config: &ExplorationConfig) -> Result<ExplorationResult, ExploreError> {
    config.validate()?;
    if config.workers > 1 {
        return explore_parallel(engine, config);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut archive = Archive::new();
    archive.offer(engine.root());
    let mut tracker = Tracker { best: None, completed: 0 };
    let mut progress = Vec::new();
    for iteration in 1..=config.iterations {
        explore_step(engine, &mut archive, &mut tracker, &mut rng, iteration)?;
        if iteration % config.progress_every == 0 || iteration == config.iterations {
            let row = progress_row(&archive, iteration, engine.env, tracker.completed);
            log::debug!(
                "iteration {iteration}: {} cells ({:.1}% of key space)",
                row.cells,
                row.key_space_pct
            );
            progress.push(row);
        }
    }
    Ok(finish(archive, tracker, progress, engine.env))
}

fn explore_step(
    engine: &Engine<'_>,
    archive: &mut Archive,
    tracker: &mut Tracker,
    rng: &mut ChaCha8Rng,
    iteration: u64,
) -> Result<(), ExploreError> {
    archive.counters.iterations += 1;
    let i = select_cell(archive, rng)?;
    let entry = archive.entry(i);
    let state = engine.restore_cell(&entry.snapshot, &entry.trajectory.actions, iteration)?;
    let traj = entry.trajectory.clone();
    engine.rollout(state, traj, rng, |c| {
        archive.offer_with(c.key, c.fitness, c.trajectory.len(), || c.to_entry(iteration));
        tracker.consider(c, iteration);
    })
}

fn explore_parallel(engine: &Engine<'_>, config: &ExplorationConfig) -> Result<ExplorationResult, ExploreError> {
    let archive = Mutex::new({
        let mut a = Archive::new();
        a.offer(engine.root());
        a
    });
    let tracker = Mutex::new(Tracker { best: None, completed: 0 });
    let progress = Mutex::new(Vec::new());
    let next = AtomicU64::new(1);
    let result: Result<(), ExploreError> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.workers)
            .map(|w| {
                let (archive, tracker, progress, next) = (&archive, &tracker, &progress, &next);
                scope.spawn(move || -> Result<(), ExploreError> {
                    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (w as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                    loop {
                        let iteration = next.fetch_add(1, Ordering::Relaxed);
                        if iteration > config.iterations {
                            return Ok(());
                        }
                        let (snap, traj) = {
                            let mut a = archive.lock().expect("archive lock");
                            a.counters.iterations += 1;
                            let i = select_cell(&a, &mut rng)?;
                            let e = a.entry(i);
                            (e.snapshot.clone(), e.trajectory.clone())
                        };
                        let state = engine.restore_cell(&snap, &traj.actions, iteration)?;
                        engine.rollout(state, traj, &mut rng, |c| {
                            let mut a = archive.lock().expect("archive lock");
                            a.offer_with(c.key, c.fitness, c.trajectory.len(), || c.to_entry(iteration));
                            drop(a);
                            if c.state.finished {
                                tracker.lock().expect("tracker lock").consider(c, iteration);
                            }
                        })?;
                        if iteration % config.progress_every == 0 {
                            let a = archive.lock().expect("archive lock");
                            let done = tracker.lock().expect("tracker lock").completed;
                            progress.lock().expect("progress lock").push(progress_row(&a, iteration, engine.env, done));
                        }
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    result?;
    let archive = archive.into_inner().expect("archive lock");
    let tracker = tracker.into_inner().expect("tracker lock");
    let mut progress = progress.into_inner().expect("progress lock");
    progress.sort_by_key(|r| r.iteration);
    Ok(finish(archive, tracker, progress, engine.env))
}

/// Builds the affect index for `persona` and runs an exploration.
pub fn run_exploration(
    env: &RacingEnv,
    config: &ExplorationConfig,
    persona: Option<&PersonaModel>,
    data: &crate::trace::Dataset,
) -> Result<ExplorationResult, ExploreError> {
    config.validate()?;
    let index = match (config.mode, persona) {
        (Mode::Blend, Some(p)) => Some(crate::affect::build_index(data, p, config.k, config.weighting)?),
        (Mode::Blend, None) => {
            return Err(ExploreError::Config("blend mode needs a persona".into()));
        }
        (Mode::Winner, _) => None,
    };
    let freq = data.action_frequencies();
    let engine = Engine::new(env, config, persona, index.as_ref(), &freq)?;
    explore(&engine, config)
}
