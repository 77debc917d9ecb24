use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use clap::{Parser, Subcommand};

use goblend::affect::Weighting;
use goblend::explore::{dump, explore, Engine, ExplorationConfig, Mode};
use goblend::harness::{self, stats, Context, HarnessConfig};
use goblend::persona::{cluster_dataset, PersonaSet};
use goblend::trace::{generate_cohort, load_sessions, save_sessions};
use goblend::Tier;

#[derive(Parser)]
#[command(name = "goblend", version, about = "Persona-imitating archive exploration on a racing micro-environment")]
struct Cli {
    /// TOML config; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Inputs {
    /// Session CSV from `generate` (regenerated from the config if absent).
    #[arg(long)]
    sessions: Option<PathBuf>,
    /// Persona JSON from `cluster` (re-clustered if absent).
    #[arg(long)]
    personas: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic cohort.
    Generate {
        #[arg(long, default_value = "out/sessions.csv")]
        out: PathBuf,
    },
    /// Cluster sessions into personas.
    Cluster {
        #[arg(long)]
        sessions: Option<PathBuf>,
        #[arg(long, default_value = "out/personas")]
        out: PathBuf,
    },
    /// Run a single exploration and dump its archive.
    Explore {
        #[command(flatten)]
        inputs: Inputs,
        /// Persona to imitate; omit with --winner.
        #[arg(long)]
        persona: Option<Tier>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        weighting: Option<Weighting>,
        /// Maximize score instead of imitating a persona.
        #[arg(long)]
        winner: bool,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value = "out/explore")]
        out: PathBuf,
    },
    /// Run every persona x lambda experiment plus both baselines.
    Matrix {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long, default_value = "out/matrix")]
        out: PathBuf,
    },
    /// Recompute aggregates of a matrix run and print its table.
    Report {
        #[arg(long, default_value = "out/matrix")]
        results: PathBuf,
        /// Re-export into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw an experiment's best trajectory colored by estimated arousal.
    Render {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value = "out/matrix")]
        results: PathBuf,
        /// Row name, e.g. `expert-0.5` or `winner`.
        #[arg(long)]
        experiment: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Persona whose affect model estimates arousal (default: the row's).
        #[arg(long)]
        persona: Option<Tier>,
        #[arg(long, default_value = "out/trace.svg")]
        out: PathBuf,
    },
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn context(cfg: &HarnessConfig, inputs: &Inputs) -> Result<Context> {
    let env = cfg.env()?;
    let data = match &inputs.sessions {
        Some(p) => load_sessions(p)?,
        None => generate_cohort(&env, &cfg.generator)?,
    };
    let personas = match &inputs.personas {
        Some(p) => PersonaSet::load(p)?,
        None => cluster_dataset(&data, &cfg.cluster)?.personas,
    };
    Ok(Context::from_parts(env, data, personas, &cfg.exploration)?)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => HarnessConfig::load(p)?,
        None => HarnessConfig::default(),
    };

    match cli.command {
        Command::Generate { out } => {
            let env = cfg.env()?;
            let data = generate_cohort(&env, &cfg.generator)?;
            ensure_parent(&out)?;
            save_sessions(&out, &data)?;
            cfg.write_resolved(out.parent().unwrap_or(Path::new(".")))?;
            println!("{} sessions, {} windows -> {}", data.len(), data.total_windows(), out.display());
        }
        Command::Cluster { sessions, out } => {
            let env = cfg.env()?;
            let data = match sessions {
                Some(p) => load_sessions(p)?,
                None => generate_cohort(&env, &cfg.generator)?,
            };
            let c = cluster_dataset(&data, &cfg.cluster)?;
            fs::create_dir_all(&out)?;
            c.personas.save(out.join("personas.json"))?;
            fs::write(out.join("dendrogram.csv"), c.dendrogram.to_csv())?;
            let mut w = csv::Writer::from_path(out.join("assignment.csv"))?;
            w.write_record(["session_id", "tier", "persona"])?;
            for (s, &cluster) in data.sessions.iter().zip(&c.assignment) {
                let label = c.personas.personas.iter().find(|p| p.members.contains(&s.session_id));
                w.write_record([
                    s.session_id.clone(),
                    s.tier.map_or(String::new(), |t| t.to_string()),
                    label.map_or(cluster.to_string(), |p| p.label.to_string()),
                ])?;
            }
            w.flush()?;
            cfg.write_resolved(&out)?;
            for p in &c.personas.personas {
                println!(
                    "{:<12} {:>3} sessions, mean final score {:.2}, mean length {:.1}",
                    p.label.to_string(),
                    p.member_count,
                    p.mean_final_score,
                    p.mean_length
                );
            }
        }
        Command::Explore { inputs, persona, lambda, seed, iterations, k, weighting, winner, workers, out } => {
            let x = &mut cfg.exploration;
            x.mode = if winner { Mode::Winner } else { Mode::Blend };
            x.lambda = lambda.unwrap_or(x.lambda);
            x.seed = seed.unwrap_or(x.seed);
            x.iterations = iterations.unwrap_or(x.iterations);
            x.k = k.unwrap_or(x.k);
            x.weighting = weighting.unwrap_or(x.weighting);
            x.workers = workers.unwrap_or(x.workers);
            if !winner && persona.is_none() {
                bail!("--persona is required unless --winner is given");
            }
            let xcfg: ExplorationConfig = *x;
            let ctx = context(&cfg, &inputs)?;
            let model = persona.map(|t| ctx.personas.get(t)).transpose()?;
            let index = persona.and_then(|t| ctx.indexes.get(&t));
            let engine = Engine::new(&ctx.env, &xcfg, model, index, &ctx.personas.population_frequencies)?;
            let result = explore(&engine, &xcfg)?;
            fs::create_dir_all(&out)?;
            dump::write_archive(&out, &result)?;
            dump::write_progress(out.join("progress.csv"), &result.progress)?;
            let (st, rewards) = ctx.measure(xcfg.seed, &result.best.trajectory.actions)?;
            fs::write(
                out.join("best.json"),
                serde_json::to_string_pretty(&serde_json::json!({
                    "seed": xcfg.seed,
                    "completed": result.best_completed,
                    "statistics": st,
                    "rewards": rewards,
                }))?,
            )?;
            cfg.write_resolved(&out)?;
            let last = result.progress.last().expect("at least one progress row");
            println!(
                "{} cells ({:.1}% of key space, {:.1}% of lap-2 keys); best: score {} in {} windows, R_b {:.3}, R_e {:.3}",
                last.cells,
                last.key_space_pct,
                last.lap2_key_space_pct,
                result.best.raw_score,
                result.best.trajectory.len(),
                result.best.r_b,
                result.best.r_e
            );
        }
        Command::Matrix { inputs, iterations, out } => {
            if let Some(n) = iterations {
                cfg.exploration.iterations = n;
            }
            cfg.validate()?;
            let ctx = context(&cfg, &inputs)?;
            let results = ctx.run_matrix(&cfg)?;
            harness::export(&results, &out)?;
            cfg.write_resolved(&out)?;
            harness::write_table(std::io::stdout().lock(), &results)?;
        }
        Command::Report { results, out } => {
            let rows = harness::load_results(&results)?;
            if let Some(out) = out {
                harness::export(&rows, &out)?;
            }
            harness::write_table(std::io::stdout().lock(), &rows)?;
        }
        Command::Render { inputs, results, experiment, seed, persona, out } => {
            let rows = harness::load_results(&results)?;
            let row = rows
                .iter()
                .find(|r| r.id.to_string() == experiment)
                .with_context(|| format!("no experiment named {experiment:?}"))?;
            let run = match seed {
                Some(s) => row.runs.iter().find(|r| r.seed == s).with_context(|| format!("no seed {s}"))?,
                None => row.runs.first().context("experiment has no runs")?,
            };
            let tier = persona.or(row.id.persona()).unwrap_or(Tier::Expert);
            let ctx = context(&cfg, &inputs)?;
            let states = stats::replay(&ctx.env, run.seed, &run.actions)?;
            let index = ctx.indexes.get(&tier).with_context(|| format!("no persona {tier}"))?;
            let (_, h_e) = stats::traces(&ctx.env, &states, index);
            let pos: Vec<_> = states.iter().map(|s| s.player.position).collect();
            ensure_parent(&out)?;
            fs::write(&out, harness::render_trace(ctx.env.layout(), &pos, &h_e))?;
            println!("{} windows -> {}", pos.len(), out.display());
        }
    }
    Ok(())
}
