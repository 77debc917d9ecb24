use std::fs;
use std::path::Path;

use super::{io_err, Aggregate, ExperimentResult, HarnessError, MeanCi};

fn fmt_ci(m: Option<&MeanCi>) -> [String; 2] {
    match m {
        None => ["N/A".into(), String::new()],
        Some(m) => [
            format!("{:.2}", m.mean),
            m.half_width.map_or(String::new(), |h| format!("{h:.2}")),
        ],
    }
}

/// Results table: one row per experiment, `mean` and `ci95` columns per
/// statistic. `r_b`/`r_e` are against the row's own persona and blank for
/// baselines.
pub fn write_table<W: std::io::Write>(out: W, results: &[ExperimentResult]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["experiment".to_string(), "seeds".to_string()];
    for c in ["final_score", "lap1_time_s", "average_speed", "nearest_car", "off_road_pct", "crash_pct", "length", "r_b", "r_e"] {
        header.push(format!("{c}_mean"));
        header.push(format!("{c}_ci95"));
    }
    w.write_record(&header).map_err(io_err)?;
    for r in results {
        let a = &r.aggregate;
        let own = r.id.persona().and_then(|p| a.rewards_for(p));
        let mut row = vec![
            r.id.to_string(),
            r.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" "),
        ];
        for m in [
            Some(&a.final_score),
            a.lap1_time_s.as_ref(),
            Some(&a.average_speed),
            Some(&a.nearest_car),
            Some(&a.off_road_pct),
            Some(&a.crash_pct),
            Some(&a.length),
            own.map(|o| &o.r_b),
            own.map(|o| &o.r_e),
        ] {
            row.extend(fmt_ci(m));
        }
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Rewards of every experiment's best trajectories against every persona.
pub fn write_rewards<W: std::io::Write>(out: W, results: &[ExperimentResult]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["experiment", "persona", "r_b_mean", "r_b_ci95", "r_e_mean", "r_e_ci95"])
        .map_err(io_err)?;
    for r in results {
        for p in &r.aggregate.rewards {
            let [bm, bc] = fmt_ci(Some(&p.r_b));
            let [em, ec] = fmt_ci(Some(&p.r_e));
            w.write_record([r.id.to_string(), p.persona.to_string(), bm, bc, em, ec])
                .map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

/// Writes `table.csv`, `rewards.csv`, `results.json` and one
/// `runs/<experiment>.json` per row into `dir`.
pub fn export(results: &[ExperimentResult], dir: impl AsRef<Path>) -> Result<(), HarnessError> {
    let dir = dir.as_ref();
    let runs = dir.join("runs");
    fs::create_dir_all(&runs).map_err(io_err)?;
    write_table(fs::File::create(dir.join("table.csv")).map_err(io_err)?, results)?;
    write_rewards(fs::File::create(dir.join("rewards.csv")).map_err(io_err)?, results)?;
    for r in results {
        let text = serde_json::to_string_pretty(r).map_err(io_err)?;
        fs::write(runs.join(format!("{}.json", r.id)), text).map_err(io_err)?;
    }
    let text = serde_json::to_string_pretty(results).map_err(io_err)?;
    fs::write(dir.join("results.json"), text).map_err(io_err)
}

/// Reads `results.json` back, recomputing every aggregate from its per-seed
/// rows.
pub fn load_results(dir: impl AsRef<Path>) -> Result<Vec<ExperimentResult>, HarnessError> {
    let path = dir.as_ref().join("results.json");
    let text = fs::read_to_string(&path).map_err(|e| io_err(format!("{}: {e}", path.display())))?;
    let mut results: Vec<ExperimentResult> = serde_json::from_str(&text).map_err(io_err)?;
    for r in &mut results {
        r.aggregate = Aggregate::from_runs(&r.runs)?;
    }
    Ok(results)
}
