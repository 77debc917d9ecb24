use std::fs;
use std::path::Path;

use super::{ExplorationResult, ExploreError, ProgressRow};
use crate::env::Action;

fn io(e: impl std::fmt::Display) -> ExploreError {
    ExploreError::Io(e.to_string())
}

/// Compact action log: one `steer,gas` pair per line.
pub fn actions_to_text(actions: &[Action]) -> String {
    actions.iter().map(|a| format!("{},{}\n", a.steer(), a.gas())).collect()
}

pub fn actions_from_text(text: &str) -> Result<Vec<Action>, ExploreError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (s, g) = l.split_once(',').ok_or_else(|| io(format!("bad action line {l:?}")))?;
            let s: i8 = s.trim().parse().map_err(io)?;
            let g: i8 = g.trim().parse().map_err(io)?;
            Ok(Action::new(s, g)?)
        })
        .collect()
}

pub fn write_progress(path: impl AsRef<Path>, rows: &[ProgressRow]) -> Result<(), ExploreError> {
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_progress(path: impl AsRef<Path>) -> Result<Vec<ProgressRow>, ExploreError> {
    let mut r = csv::Reader::from_path(path).map_err(io)?;
    r.deserialize().map(|row| row.map_err(io)).collect()
}

/// Writes `archive.csv` (one row per cell) and `actions/<n>.txt` per entry
/// into `dir`, plus `best.txt` for the best trajectory.
pub fn write_archive(dir: impl AsRef<Path>, result: &ExplorationResult) -> Result<(), ExploreError> {
    let dir = dir.as_ref();
    let actions_dir = dir.join("actions");
    fs::create_dir_all(&actions_dir).map_err(io)?;
    let mut w = csv::Writer::from_path(dir.join("archive.csv")).map_err(io)?;
    w.write_record([
        "entry", "lap", "sub_segment", "speed_bucket", "rotation_bucket", "opponent_near",
        "length", "raw_score", "r_b", "r_e", "fitness", "finished", "discovered", "updated",
    ])
    .map_err(io)?;
    for (i, e) in result.archive.entries().iter().enumerate() {
        let k = e.key;
        w.write_record([
            i.to_string(),
            k.lap.to_string(),
            k.sub_segment.to_string(),
            format!("{:?}", k.speed_bucket).to_lowercase(),
            k.rotation_bucket.to_string(),
            k.opponent_proximity.to_string(),
            e.trajectory.len().to_string(),
            e.raw_score.to_string(),
            e.r_b.to_string(),
            e.r_e.to_string(),
            e.fitness.to_string(),
            e.finished.to_string(),
            e.discovered.to_string(),
            e.updated.to_string(),
        ])
        .map_err(io)?;
        fs::write(actions_dir.join(format!("{i}.txt")), actions_to_text(&e.trajectory.actions)).map_err(io)?;
    }
    w.flush().map_err(io)?;
    fs::write(dir.join("best.txt"), actions_to_text(&result.best.trajectory.actions)).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_text_round_trip() {
        let acts: Vec<Action> = Action::all().chain((0..9).rev().map(Action::from_index)).collect();
        assert_eq!(actions_from_text(&actions_to_text(&acts)).unwrap(), acts);
        assert!(actions_from_text("2,0\n").is_err());
        assert!(actions_from_text("x").is_err());
    }

    #[test]
    fn progress_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![ProgressRow {
            iteration: 10,
            cells: 4,
            key_space_pct: 0.1,
            lap2_key_space_pct: 0.0,
            best_fitness: 0.75,
            completed_episodes: 0,
        }];
        let p = dir.path().join("p.csv");
        write_progress(&p, &rows).unwrap();
        assert_eq!(read_progress(&p).unwrap(), rows);
    }
}
