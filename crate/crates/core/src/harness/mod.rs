//! Experiment runner: persona x lambda matrix, random and winner baselines,
//! seeded repeats, aggregate statistics, exports and trace rendering.

pub mod render;
pub mod report;
pub mod stats;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use render::render_trace;
pub use report::{export, load_results, write_table};
pub use stats::{compare_rewards, compute_stats, mean_ci, InGameStatistics, MeanCi};

use crate::affect::{build_index, AffectError, AffectIndex};
use crate::env::{Action, EnvError, RacingEnv, TrackError, TrackLayout};
use crate::explore::{
    explore, ActionSampler, Engine, ExplorationConfig, ExploreError, Mode,
};
use crate::persona::{cluster_dataset, ClusterConfig, PersonaError, PersonaSet};
use crate::trace::{generate_cohort, Dataset, GeneratorConfig, TraceError};
use crate::Tier;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Explore(#[from] ExploreError),
    #[error(transparent)]
    Persona(#[from] PersonaError),
    #[error(transparent)]
    Affect(#[from] AffectError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("invalid harness config: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

pub(crate) fn io_err(e: impl fmt::Display) -> HarnessError {
    HarnessError::Io(e.to_string())
}

/// Every parameter of a full run. Loaded from TOML; missing keys take
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    /// Track file; the bundled track when absent.
    pub track: Option<PathBuf>,
    pub generator: GeneratorConfig,
    pub cluster: ClusterConfig,
    /// Budget and kNN settings shared by every experiment; `mode`, `lambda`
    /// and `seed` are set per run.
    pub exploration: ExplorationConfig,
    pub personas: Vec<Tier>,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            track: None,
            generator: GeneratorConfig::default(),
            cluster: ClusterConfig::default(),
            exploration: ExplorationConfig::default(),
            personas: Tier::BY_RANK.to_vec(),
            lambdas: vec![0.0, 0.5, 1.0],
            seeds: vec![1, 2, 3],
        }
    }
}

impl HarnessConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| io_err(format!("{}: {e}", path.display())))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Writes the fully resolved config next to a run's outputs.
    pub fn write_resolved(&self, dir: impl AsRef<Path>) -> Result<(), HarnessError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(io_err)?;
        std::fs::write(dir.join("config.resolved.toml"), self.to_toml()).map_err(io_err)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.len() < 2 {
            return Err(HarnessError::Config("at least two seeds are needed for a CI".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(HarnessError::Config(format!("lambda {l} outside [0, 1]")));
        }
        self.exploration.validate()?;
        Ok(())
    }

    pub fn env(&self) -> Result<RacingEnv, HarnessError> {
        let layout = match &self.track {
            Some(p) => TrackLayout::load(p)?,
            None => TrackLayout::default_track(),
        };
        Ok(RacingEnv::new(Arc::new(layout), Default::default()))
    }
}

/// Row identity in the results table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExperimentId {
    Persona { persona: Tier, lambda: f64 },
    Random,
    Winner,
}

impl ExperimentId {
    pub fn persona(&self) -> Option<Tier> {
        match self {
            ExperimentId::Persona { persona, .. } => Some(*persona),
            _ => None,
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExperimentId::Persona { persona, lambda } => write!(f, "{persona}-{lambda:.1}"),
            ExperimentId::Random => f.write_str("random"),
            ExperimentId::Winner => f.write_str("winner"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonaRewards {
    pub persona: Tier,
    pub r_b: f64,
    pub r_e: f64,
}

/// The best trajectory of one seeded run and everything measured on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub actions: Vec<Action>,
    pub stats: InGameStatistics,
    /// Rewards of the replayed trajectory against every persona.
    pub rewards: Vec<PersonaRewards>,
    /// Whether the best trajectory is a finished episode.
    pub completed: bool,
    pub cells: usize,
    pub key_space_pct: f64,
    pub lap2_key_space_pct: f64,
}

impl SeedRun {
    pub fn rewards_for(&self, persona: Tier) -> Option<PersonaRewards> {
        self.rewards.iter().copied().find(|r| r.persona == persona)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardAggregate {
    pub persona: Tier,
    pub r_b: MeanCi,
    pub r_e: MeanCi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub final_score: MeanCi,
    /// Over the seeds that completed lap 1; `None` if none did.
    pub lap1_time_s: Option<MeanCi>,
    pub average_speed: MeanCi,
    pub nearest_car: MeanCi,
    pub off_road_pct: MeanCi,
    pub crash_pct: MeanCi,
    pub length: MeanCi,
    pub rewards: Vec<RewardAggregate>,
}

impl Aggregate {
    pub fn from_runs(runs: &[SeedRun]) -> Result<Self, HarnessError> {
        let col = |f: &dyn Fn(&SeedRun) -> f64| {
            let v: Vec<f64> = runs.iter().map(f).collect();
            mean_ci(&v).ok_or_else(|| HarnessError::Config("no runs to aggregate".into()))
        };
        let lap1: Vec<f64> = runs.iter().filter_map(|r| r.stats.lap1_time_s).collect();
        let personas: Vec<Tier> = runs.first().map(|r| r.rewards.iter().map(|p| p.persona).collect()).unwrap_or_default();
        let rewards = personas
            .into_iter()
            .map(|p| {
                let pick = |f: fn(&PersonaRewards) -> f64| -> Result<MeanCi, HarnessError> {
                    let v = runs
                        .iter()
                        .map(|r| r.rewards_for(p).map(|x| f(&x)))
                        .collect::<Option<Vec<f64>>>()
                        .ok_or_else(|| HarnessError::Config(format!("a run lacks rewards for {p}")))?;
                    mean_ci(&v).ok_or_else(|| HarnessError::Config("no runs".into()))
                };
                Ok(RewardAggregate { persona: p, r_b: pick(|x| x.r_b)?, r_e: pick(|x| x.r_e)? })
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        Ok(Self {
            final_score: col(&|r| r.stats.final_score as f64)?,
            lap1_time_s: mean_ci(&lap1),
            average_speed: col(&|r| r.stats.average_speed)?,
            nearest_car: col(&|r| r.stats.nearest_car)?,
            off_road_pct: col(&|r| r.stats.off_road_pct)?,
            crash_pct: col(&|r| r.stats.crash_pct)?,
            length: col(&|r| r.stats.length as f64)?,
            rewards,
        })
    }

    pub fn rewards_for(&self, persona: Tier) -> Option<&RewardAggregate> {
        self.rewards.iter().find(|r| r.persona == persona)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub id: ExperimentId,
    pub seeds: Vec<u64>,
    /// Exploration settings of the row (`None` for the random baseline).
    pub exploration: Option<ExplorationConfig>,
    pub runs: Vec<SeedRun>,
    pub aggregate: Aggregate,
}

impl ExperimentResult {
    fn new(id: ExperimentId, exploration: Option<ExplorationConfig>, runs: Vec<SeedRun>) -> Result<Self, HarnessError> {
        Ok(Self {
            id,
            seeds: runs.iter().map(|r| r.seed).collect(),
            exploration,
            aggregate: Aggregate::from_runs(&runs)?,
            runs,
        })
    }
}

/// Environment, cohort, personas and one affect index per persona.
pub struct Context {
    pub env: RacingEnv,
    pub data: Dataset,
    pub personas: PersonaSet,
    pub indexes: BTreeMap<Tier, AffectIndex>,
}

impl Context {
    /// Generates the cohort and clusters it as configured.
    pub fn build(config: &HarnessConfig) -> Result<Self, HarnessError> {
        let env = config.env()?;
        let data = generate_cohort(&env, &config.generator)?;
        let personas = cluster_dataset(&data, &config.cluster)?.personas;
        Self::from_parts(env, data, personas, &config.exploration)
    }

    pub fn from_parts(
        env: RacingEnv,
        data: Dataset,
        personas: PersonaSet,
        exploration: &ExplorationConfig,
    ) -> Result<Self, HarnessError> {
        let indexes = personas
            .personas
            .iter()
            .map(|p| Ok((p.label, build_index(&data, p, exploration.k, exploration.weighting)?)))
            .collect::<Result<_, HarnessError>>()?;
        Ok(Self { env, data, personas, indexes })
    }

    fn index(&self, persona: Tier) -> Result<&AffectIndex, HarnessError> {
        self.indexes
            .get(&persona)
            .ok_or(HarnessError::Persona(PersonaError::MissingPersona(persona)))
    }

    /// Statistics and per-persona rewards of a trajectory, from a fresh replay.
    pub fn measure(&self, seed: u64, actions: &[Action]) -> Result<(InGameStatistics, Vec<PersonaRewards>), HarnessError> {
        let states = stats::replay(&self.env, seed, actions)?;
        let st = stats::stats_from_states(&self.env, &states);
        let mut rewards = Vec::new();
        if !states.is_empty() {
            for p in &self.personas.personas {
                let (h_b, h_e) = stats::traces(&self.env, &states, self.index(p.label)?);
                rewards.push(PersonaRewards {
                    persona: p.label,
                    r_b: crate::explore::reward_similarity(&h_b, &p.target_score)?,
                    r_e: crate::explore::reward_similarity(&h_e, &p.target_arousal)?,
                });
            }
        }
        Ok((st, rewards))
    }

    /// One seeded exploration; reports on its best entry.
    pub fn explore_once(&self, persona: Option<Tier>, config: &ExplorationConfig) -> Result<SeedRun, HarnessError> {
        let (model, index) = match (config.mode, persona) {
            (Mode::Blend, Some(t)) => (Some(self.personas.get(t)?), Some(self.index(t)?)),
            (Mode::Blend, None) => return Err(HarnessError::Config("blend run without a persona".into())),
            (Mode::Winner, _) => (None, None),
        };
        let engine = Engine::new(&self.env, config, model, index, &self.personas.population_frequencies)?;
        let result = explore(&engine, config)?;
        let last = result.progress.last().copied();
        let actions = result.best.trajectory.actions.clone();
        let (stats, rewards) = self.measure(config.seed, &actions)?;
        log::info!(
            "{} seed {}: score {} in {} windows, {} cells",
            persona.map_or("winner".to_string(), |t| format!("{t} lambda {}", config.lambda)),
            config.seed,
            stats.final_score,
            stats.length,
            result.archive.len()
        );
        Ok(SeedRun {
            seed: config.seed,
            actions,
            stats,
            rewards,
            completed: result.best_completed,
            cells: result.archive.len(),
            key_space_pct: last.map_or(0.0, |r| r.key_space_pct),
            lap2_key_space_pct: last.map_or(0.0, |r| r.lap2_key_space_pct),
        })
    }

    pub fn run_experiment(&self, id: ExperimentId, base: &ExplorationConfig, seeds: &[u64]) -> Result<ExperimentResult, HarnessError> {
        if id == ExperimentId::Random {
            return self.random_run(seeds);
        }
        let mut cfg = *base;
        match id {
            ExperimentId::Persona { lambda, .. } => {
                cfg.mode = Mode::Blend;
                cfg.lambda = lambda;
            }
            _ => {
                cfg.mode = Mode::Winner;
                cfg.lambda = 0.0;
            }
        }
        let runs = seeds
            .iter()
            .map(|&seed| self.explore_once(id.persona(), &ExplorationConfig { seed, ..cfg }))
            .collect::<Result<Vec<_>, _>>()?;
        ExperimentResult::new(id, Some(cfg), runs)
    }

    pub fn winner_run(&self, base: &ExplorationConfig, seeds: &[u64]) -> Result<ExperimentResult, HarnessError> {
        self.run_experiment(ExperimentId::Winner, base, seeds)
    }

    /// One rollout per seed with actions drawn from the cohort frequency
    /// table until the episode ends; no archive.
    pub fn random_run(&self, seeds: &[u64]) -> Result<ExperimentResult, HarnessError> {
        let sampler = ActionSampler::new(&self.personas.population_frequencies)?;
        let runs = seeds
            .iter()
            .map(|&seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut state = self.env.reset(seed);
                let mut actions = Vec::new();
                while !state.finished {
                    let a = sampler.sample(&mut rng);
                    state = self.env.step(&state, a)?;
                    actions.push(a);
                }
                let (stats, rewards) = self.measure(seed, &actions)?;
                Ok(SeedRun {
                    seed,
                    actions,
                    stats,
                    rewards,
                    completed: true,
                    cells: 0,
                    key_space_pct: 0.0,
                    lap2_key_space_pct: 0.0,
                })
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        ExperimentResult::new(ExperimentId::Random, None, runs)
    }

    /// Every configured persona x lambda row, then the random and winner
    /// baselines.
    pub fn run_matrix(&self, config: &HarnessConfig) -> Result<Vec<ExperimentResult>, HarnessError> {
        config.validate()?;
        let mut ids: Vec<ExperimentId> = config
            .personas
            .iter()
            .flat_map(|&persona| config.lambdas.iter().map(move |&lambda| ExperimentId::Persona { persona, lambda }))
            .collect();
        ids.push(ExperimentId::Random);
        ids.push(ExperimentId::Winner);
        ids.into_iter()
            .map(|id| {
                log::info!("experiment {id}");
                self.run_experiment(id, &config.exploration, &config.seeds)
            })
            .collect()
    }
}
