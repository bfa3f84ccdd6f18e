//! Trajectory CSV and event JSON files.
//!
//! The CSV starts with a `# ` line holding a JSON header (config echo,
//! program version, seed), followed by `t,x1,…,xn,mode,gap` rows. Numbers are
//! written with 17 significant digits so that they round-trip exactly.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sliding_core::integrator::{EventKind, Mode, Trajectory};
use sliding_core::{gap, SurfaceChart};

use crate::config::ScenarioConfig;
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub config: ScenarioConfig,
    pub version: String,
    pub seed: u64,
}

impl Header {
    pub fn new(config: &ScenarioConfig) -> Self {
        Self {
            config: config.clone(),
            version: VERSION.to_string(),
            seed: config.seed.unwrap_or(0),
        }
    }
}

pub fn mode_label(mode: Mode) -> &'static str {
    match mode {
        Mode::FreeG1 => "1",
        Mode::FreeG2 => "2",
        Mode::Sliding => "S",
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write the trajectory CSV. Segment boundaries repeat the switching point
/// under the new mode; a repeated point with an unchanged mode is dropped.
pub fn write_csv<W: Write>(
    mut w: W,
    header: &Header,
    surface: &SurfaceChart,
    traj: &Trajectory,
) -> std::io::Result<()> {
    let n = header.config.x0.len();
    writeln!(
        w,
        "# {}",
        serde_json::to_string(header).expect("header serializes")
    )?;
    let cols: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=n).map(|i| format!("x{i}")))
        .chain(["mode".to_string(), "gap".to_string()])
        .collect();
    writeln!(w, "{}", cols.join(","))?;
    let mut last: Option<(f64, Mode)> = None;
    for seg in &traj.segments {
        for (t, x) in seg.times.iter().zip(&seg.states) {
            if last == Some((*t, seg.mode)) {
                continue;
            }
            last = Some((*t, seg.mode));
            let mut row: Vec<String> = std::iter::once(num(*t))
                .chain(x.iter().map(|v| num(*v)))
                .collect();
            row.push(mode_label(seg.mode).to_string());
            row.push(num(gap(surface, x)));
            writeln!(w, "{}", row.join(","))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventEntry {
    pub time: f64,
    pub kind: EventKind,
    pub state: Vec<f64>,
    /// `[X1N, X2N]` for events on the surface.
    pub normals: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventsFile {
    pub version: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub events: Vec<EventEntry>,
}

impl EventsFile {
    pub fn new(traj: &Trajectory, error: Option<String>) -> Self {
        Self {
            version: VERSION.to_string(),
            status: if error.is_some() { "error" } else { "ok" }.to_string(),
            error,
            events: traj
                .events
                .iter()
                .map(|e| EventEntry {
                    time: e.time,
                    kind: e.kind,
                    state: e.state.as_slice().to_vec(),
                    normals: e.normals.map(|(a, b)| [a, b]),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("events serialize")
    }
}

/// A trajectory CSV read back into memory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub header: Header,
    /// Numeric columns, in file order (`t`, `x1`, …, `gap`).
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub values: Vec<f64>,
    pub mode: String,
}

impl TrajectoryTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let file = std::fs::File::open(path).map_err(|source| CliError::Input {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader(file)
    }

    /// Parse and validate: mode labels in `{1, 2, S}`, times non-decreasing,
    /// and strictly increasing between consecutive rows of the same mode.
    pub fn from_reader<R: Read>(r: R) -> Result<Self, CliError> {
        let bad = |msg: String| CliError::Config(format!("trajectory file: {msg}"));
        let mut reader = BufReader::new(r);
        let mut first = String::new();
        reader
            .read_line(&mut first)
            .map_err(|e| bad(e.to_string()))?;
        let json = first
            .trim_end()
            .strip_prefix("# ")
            .ok_or_else(|| bad("missing '# ' header line".into()))?;
        let header: Header =
            serde_json::from_str(json).map_err(|e| bad(format!("bad header: {e}")))?;

        let mut csv = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let names: Vec<String> = csv
            .headers()
            .map_err(|e| bad(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mode_idx = names
            .iter()
            .position(|c| c == "mode")
            .ok_or_else(|| bad("no mode column".into()))?;
        if names.first().map(String::as_str) != Some("t") {
            return Err(bad("first column must be t".into()));
        }
        let columns: Vec<String> = names
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != mode_idx)
            .map(|(_, c)| c.clone())
            .collect();

        let mut rows: Vec<TableRow> = Vec::new();
        for (line, record) in csv.records().enumerate() {
            let record = record.map_err(|e| bad(e.to_string()))?;
            let mut values = Vec::with_capacity(columns.len());
            for (i, field) in record.iter().enumerate() {
                if i == mode_idx {
                    continue;
                }
                values.push(
                    field
                        .parse::<f64>()
                        .map_err(|e| bad(format!("row {}: {e}", line + 1)))?,
                );
            }
            let mode = record[mode_idx].to_string();
            if !matches!(mode.as_str(), "1" | "2" | "S") {
                return Err(bad(format!("row {}: unknown mode {mode:?}", line + 1)));
            }
            if let Some(prev) = rows.last() {
                let (t0, t1) = (prev.values[0], values[0]);
                if t1 < t0 || (t1 == t0 && prev.mode == mode) {
                    return Err(bad(format!("row {}: time does not advance", line + 1)));
                }
            }
            rows.push(TableRow { values, mode });
        }
        Ok(Self {
            header,
            columns,
            rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use sliding_core::integrator::{integrate, IntegratorOptions};
    use sliding_core::{GeneratingMap, PiecewiseField};

    fn config() -> ScenarioConfig {
        ScenarioConfig::from_json(
            r#"{"schema_version": 1, "scenario": "flat",
                "params": {"lower_x": 1.0, "lower_y": 1.5, "upper_x": 1.0, "upper_y": -0.5},
                "x0": [0.0, -1.0], "t_end": 2.0, "step": 0.1, "seed": 5}"#,
        )
        .unwrap()
    }

    fn run() -> (PiecewiseField, Trajectory) {
        let pf = PiecewiseField::constant(
            SurfaceChart::flat(2),
            dvector![1.0, 1.5],
            dvector![1.0, -0.5],
        );
        let traj = integrate(
            &pf,
            &GeneratingMap::filippov(),
            &dvector![0.0, -1.0],
            0.0,
            &IntegratorOptions::new(0.1, 2.0),
        )
        .unwrap();
        (pf, traj)
    }

    #[test]
    fn csv_round_trip() {
        let (pf, traj) = run();
        let header = Header::new(&config());
        let mut buf = Vec::new();
        write_csv(&mut buf, &header, pf.surface(), &traj).unwrap();
        let table = TrajectoryTable::from_reader(&buf[..]).unwrap();
        assert_eq!(table.header, header);
        assert_eq!(table.header.seed, 5);
        assert_eq!(table.columns, ["t", "x1", "x2", "gap"]);
        let last = table.rows.last().unwrap();
        assert_eq!(last.mode, "S");
        let (t, x) = traj.final_state().unwrap();
        assert_eq!(last.values[0], t);
        assert_eq!(last.values[1], x[0]);
        assert!(table.rows.iter().any(|r| r.mode == "1"));
    }

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(num(std::f64::consts::PI), "3.1415926535897931e0");
        assert_eq!(
            num(std::f64::consts::PI).parse::<f64>().unwrap(),
            std::f64::consts::PI
        );
    }

    #[test]
    fn rejects_invalid_tables() {
        let header = format!(
            "# {}\n",
            serde_json::to_string(&Header::new(&config())).unwrap()
        );
        for body in [
            "t,x1,x2,mode,gap\n0,0,0,Q,0\n",
            "t,x1,x2,mode,gap\n1,0,0,1,0\n0.5,0,0,1,0\n",
            "t,x1,x2,mode,gap\n1,0,0,1,0\n1,0,0,1,0\n",
            "t,x1,x2,mode,gap\n1,zero,0,1,0\n",
            "x1,t,mode\n0,0,1\n",
        ] {
            assert!(
                TrajectoryTable::from_reader(format!("{header}{body}").as_bytes()).is_err(),
                "{body}"
            );
        }
        assert!(TrajectoryTable::from_reader("t,x1\n".as_bytes()).is_err());
        let ok = format!("{header}t,x1,x2,mode,gap\n1,0,0,1,0\n1,0,0,S,0\n");
        assert_eq!(
            TrajectoryTable::from_reader(ok.as_bytes())
                .unwrap()
                .rows
                .len(),
            2
        );
    }

    #[test]
    fn events_file_shape() {
        let (_, traj) = run();
        let json: serde_json::Value =
            serde_json::from_str(&EventsFile::new(&traj, None).to_json()).unwrap();
        assert_eq!(json["status"], "ok");
        assert_eq!(json["events"][0]["kind"], "SurfaceHit");
        assert_eq!(json["events"][1]["kind"], "SlidingEntry");
        assert_eq!(json["events"][1]["normals"][0], 1.5);
    }
}
