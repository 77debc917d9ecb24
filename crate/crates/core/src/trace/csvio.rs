//! Playtrace CSV: one row per 250 ms window.
//!
//! The first line is a version marker (`# goblend-playtrace v1`), followed by
//! a header row: `session_id, window_index`, the 24 feature columns, `steer`,
//! `gas`, `arousal`, then the optional metadata columns `tier`, `seed`,
//! `generator`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{Dataset, PlaySession, SessionMeta, TraceError, WindowRecord};
use crate::env::{Action, FeatureVector, FEATURE_COUNT, FEATURE_NAMES};
use crate::tier::Tier;

pub const PLAYTRACE_MARKER: &str = "# goblend-playtrace v1";

fn header() -> Vec<String> {
    let mut h = vec!["session_id".to_string(), "window_index".to_string()];
    h.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
    h.extend(["steer", "gas", "arousal", "tier", "seed", "generator"].map(String::from));
    h
}

pub fn write_sessions<W: std::io::Write>(mut out: W, data: &Dataset) -> Result<(), TraceError> {
    let io = |e: std::io::Error| TraceError::Io(e.to_string());
    writeln!(out, "{PLAYTRACE_MARKER}").map_err(io)?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| TraceError::Io(e.to_string());
    w.write_record(header()).map_err(csv_err)?;
    for s in &data.sessions {
        s.validate()?;
        for (i, (win, a)) in s.windows.iter().zip(&s.arousal).enumerate() {
            let mut rec = Vec::with_capacity(FEATURE_COUNT + 8);
            rec.push(s.session_id.clone());
            rec.push(i.to_string());
            rec.extend(win.features.0.iter().map(|v| v.to_string()));
            rec.push(win.action.steer().to_string());
            rec.push(win.action.gas().to_string());
            rec.push(a.to_string());
            rec.push(s.tier.map(|t| t.to_string()).unwrap_or_default());
            rec.push(s.meta.seed.to_string());
            rec.push(s.meta.generator.clone());
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush().map_err(io)?;
    Ok(())
}

pub fn save_sessions(path: impl AsRef<Path>, data: &Dataset) -> Result<(), TraceError> {
    let file = fs::File::create(path.as_ref()).map_err(|e| TraceError::Io(e.to_string()))?;
    write_sessions(std::io::BufWriter::new(file), data)
}

pub fn load_sessions(path: impl AsRef<Path>) -> Result<Dataset, TraceError> {
    let text = fs::read_to_string(path.as_ref()).map_err(|e| TraceError::Io(e.to_string()))?;
    read_sessions(&text)
}

pub fn read_sessions(text: &str) -> Result<Dataset, TraceError> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    if first.trim_end() != PLAYTRACE_MARKER {
        return Err(TraceError::Row {
            row: 1,
            message: format!("expected version marker {PLAYTRACE_MARKER:?}"),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_reader(rest.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| TraceError::Row { row: 2, message: e.to_string() })?
        .clone();
    let col: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let find = |name: &str| {
        col.get(name)
            .copied()
            .ok_or_else(|| TraceError::MissingColumn(name.to_string()))
    };
    let c_session = find("session_id")?;
    let c_window = find("window_index")?;
    let c_features = FEATURE_NAMES
        .iter()
        .map(|n| find(n))
        .collect::<Result<Vec<_>, _>>()?;
    let c_steer = find("steer")?;
    let c_gas = find("gas")?;
    let c_arousal = find("arousal")?;
    let c_tier = col.get("tier").copied();
    let c_seed = col.get("seed").copied();
    let c_generator = col.get("generator").copied();

    let mut sessions: Vec<PlaySession> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (n, rec) in reader.records().enumerate() {
        // marker line + header line + 1-based data row
        let row = n + 3;
        let rec = rec.map_err(|e| TraceError::Row { row, message: e.to_string() })?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let num = |c: usize, what: &str| -> Result<f64, TraceError> {
            let v: f64 = field(c).trim().parse().map_err(|_| TraceError::Row {
                row,
                message: format!("cannot parse {what} {:?}", field(c)),
            })?;
            if !v.is_finite() {
                return Err(TraceError::NonFinite { what: what.to_string(), row });
            }
            Ok(v)
        };
        let int = |c: usize, what: &str| -> Result<i64, TraceError> {
            field(c).trim().parse().map_err(|_| TraceError::Row {
                row,
                message: format!("cannot parse {what} {:?}", field(c)),
            })
        };

        let id = field(c_session).to_string();
        let window = int(c_window, "window_index")?;
        let mut f = [0.0; FEATURE_COUNT];
        for (k, &c) in c_features.iter().enumerate() {
            f[k] = num(c, FEATURE_NAMES[k])?;
        }
        let action = Action::new(int(c_steer, "steer")? as i8, int(c_gas, "gas")? as i8)
            .map_err(|e| TraceError::Row { row, message: e.to_string() })?;
        let arousal = num(c_arousal, "arousal")?;

        let slot = match index.get(&id) {
            Some(&i) => i,
            None => {
                let tier = match c_tier.map(field).filter(|t| !t.is_empty()) {
                    Some(t) => Some(t.parse::<Tier>().map_err(|m| TraceError::Row { row, message: m })?),
                    None => None,
                };
                let seed = match c_seed.map(field).filter(|t| !t.is_empty()) {
                    Some(t) => t.parse().map_err(|_| TraceError::Row {
                        row,
                        message: format!("cannot parse seed {t:?}"),
                    })?,
                    None => 0,
                };
                sessions.push(PlaySession {
                    session_id: id.clone(),
                    tier,
                    windows: Vec::new(),
                    arousal: Vec::new(),
                    meta: SessionMeta {
                        seed,
                        generator: c_generator.map(field).unwrap_or("").to_string(),
                    },
                });
                index.insert(id.clone(), sessions.len() - 1);
                sessions.len() - 1
            }
        };
        let s = &mut sessions[slot];
        if window != s.windows.len() as i64 {
            return Err(TraceError::Row {
                row,
                message: format!(
                    "session {id}: window_index {window}, expected {}",
                    s.windows.len()
                ),
            });
        }
        s.windows.push(WindowRecord { features: FeatureVector(f), action });
        s.arousal.push(arousal);
    }
    for s in &sessions {
        s.validate()?;
    }
    Ok(Dataset::new(sessions))
}
