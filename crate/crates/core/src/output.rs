//! Files written by a run: the sampled series as CSV, the classification
//! summary as JSON and, optionally, state snapshots as JSON lines.
//!
//! Floats are written with the shortest representation that round-trips,
//! so the files are byte-identical for identical runs.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{arrival_exponent, GrowthClassification, GrowthMode, GrowthSeries};
use crate::error::{Error, Result};
use crate::scenarios::{ScenarioKind, ScenarioSpec};
use crate::transport::{RunOutcome, Sample, SimulationState};

pub const SERIES_FILE: &str = "series.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SNAPSHOT_FILE: &str = "snapshots.jsonl";

/// Classification summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub kind: ScenarioKind,
    /// Opening angle of the full corner.
    pub theta: f64,
    pub beta: f64,
    pub mode: GrowthMode,
    pub rate: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub windowed_slopes: Vec<f64>,
    /// Per marker, in the order of `marker_starts`.
    pub arrival_times: Vec<Option<f64>>,
    /// Fitted exponent of arrival time against starting distance, when every
    /// marker arrived.
    pub arrival_exponent: Option<f64>,
    pub arrival_threshold: f64,
    pub stop_time: Option<f64>,
    pub final_time: f64,
    pub steps: usize,
    pub warnings: Vec<String>,
}

impl Summary {
    pub fn new(spec: &ScenarioSpec, outcome: &RunOutcome, class: &GrowthClassification) -> Self {
        let markers = &outcome.final_state.markers;
        let arrival_times: Vec<Option<f64>> = markers.iter().map(|m| m.arrival).collect();
        let arrival_exponent = arrival_times
            .iter()
            .copied()
            .collect::<Option<Vec<f64>>>()
            .and_then(|times| {
                let starts: Vec<f64> = markers.iter().map(|m| m.start).collect();
                arrival_exponent(&starts, &times).ok()
            })
            .map(|a| a.exponent);
        Summary {
            kind: spec.kind,
            theta: spec.theta,
            beta: std::f64::consts::PI / spec.theta,
            mode: class.mode,
            rate: class.rate,
            r_squared: class.r_squared,
            window: class.window,
            windowed_slopes: class.windowed_slopes.clone(),
            arrival_times,
            arrival_exponent,
            arrival_threshold: outcome.arrival_threshold,
            stop_time: outcome.stop_time,
            final_time: outcome.final_state.time,
            steps: outcome.final_state.step_count,
            warnings: outcome.warnings.clone(),
        }
    }
}

fn series_header(markers: usize) -> Vec<String> {
    let mut h = vec!["time".to_string(), "L".to_string()];
    h.extend((0..markers).map(|i| format!("marker_{i}_x1")));
    h.extend(["circulation", "omega_min", "omega_max"].map(String::from));
    h
}

/// Writes `time,L,marker_0_x1,...,circulation,omega_min,omega_max`.
pub fn write_series_csv(path: &Path, samples: &[Sample]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let markers = samples.first().map_or(0, |s| s.marker_x1.len());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(series_header(markers)).map_err(csv_err)?;
    for s in samples {
        let mut row = vec![s.time.to_string(), s.lipschitz.to_string()];
        row.extend(s.marker_x1.iter().map(f64::to_string));
        row.extend([s.circulation, s.omega_min, s.omega_max].map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads the `time` and `L` columns of a series CSV. The first time at which
/// `L` is infinite is returned as the arrival time; the series stops there.
pub fn read_growth_csv(path: &Path) -> Result<GrowthSeries> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = r.headers().map_err(csv_err)?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Config(format!("{}: missing column {name}", path.display())))
    };
    let (ti, li) = (column("time")?, column("L")?);
    let (mut times, mut values, mut arrival) = (Vec::new(), Vec::new(), None);
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let parse = |i: usize| -> Result<f64> {
            let field = rec.get(i).unwrap_or("").trim();
            field
                .parse()
                .map_err(|_| Error::Config(format!("{}: row {}: bad number {field:?}", path.display(), line + 2)))
        };
        let (t, l) = (parse(ti)?, parse(li)?);
        if l.is_infinite() {
            arrival = Some(t);
            break;
        }
        times.push(t);
        values.push(l);
    }
    Ok(GrowthSeries::new(times, values, path.display().to_string())?.with_arrival(arrival))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// One JSON document per line.
pub fn write_snapshots(path: &Path, states: &[SimulationState]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in states {
        serde_json::to_writer(&mut w, s).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Last state of a snapshot file.
pub fn read_last_snapshot(path: &Path) -> Result<SimulationState> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut last = None;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            last = Some(line);
        }
    }
    let line = last.ok_or_else(|| Error::Config(format!("{}: no snapshot found", path.display())))?;
    serde_json::from_str(&line).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the series, the summary and, if the run kept any, the snapshots
/// into `dir`. Returns the paths written.
pub fn write_outputs(dir: &Path, outcome: &RunOutcome, summary: &Summary) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = vec![dir.join(SERIES_FILE), dir.join(SUMMARY_FILE)];
    write_series_csv(&written[0], &outcome.samples)?;
    write_json(&written[1], summary)?;
    if !outcome.snapshots.is_empty() {
        let p = dir.join(SNAPSHOT_FILE);
        write_snapshots(&p, &outcome.snapshots)?;
        written.push(p);
    }
    Ok(written)
}
