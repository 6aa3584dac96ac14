//! CSV ingestion of survival data and CSV output of curve summaries.

use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curves::CurveSummary;
use crate::dataset::{Record, SurvivalDataset};
use crate::error::{Error, Result};
use crate::special::Grid;

/// Time unit used in files. Everything in memory is in months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeUnit {
    #[default]
    Months,
    Years,
}

impl TimeUnit {
    pub fn to_months(self, t: f64) -> f64 {
        match self {
            TimeUnit::Months => t,
            TimeUnit::Years => t * 12.0,
        }
    }

    pub fn from_months(self, t: f64) -> f64 {
        match self {
            TimeUnit::Months => t,
            TimeUnit::Years => t / 12.0,
        }
    }
}

fn parse_event(raw: &str) -> Option<bool> {
    match raw {
        "1" => Some(true),
        "0" => Some(false),
        _ => None,
    }
}

/// Parses `time,event[,arm]` CSV text. Returns one dataset per arm, in
/// order of first appearance; without an arm column there is a single
/// dataset with an empty arm label. Every malformed row is reported.
pub fn parse_datasets<R: Read>(input: R, unit: TimeUnit) -> Result<Vec<SurvivalDataset>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header: {e}")))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(time_col), Some(event_col)) = (column("time"), column("event")) else {
        return Err(Error::Data(format!(
            "header must contain 'time' and 'event' columns, found '{}'",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    };
    let arm_col = column("arm");

    let mut problems = Vec::new();
    let mut arms: Vec<(String, Vec<Record>)> = Vec::new();
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        if row.iter().all(str::is_empty) {
            continue;
        }
        let field = |i: usize| row.get(i).filter(|v| !v.is_empty());
        let time = match field(time_col).map(str::parse::<f64>) {
            Some(Ok(t)) if t > 0.0 && t.is_finite() => unit.to_months(t),
            Some(_) => {
                problems.push(format!("line {line}: time must be a positive number"));
                continue;
            }
            None => {
                problems.push(format!("line {line}: missing time"));
                continue;
            }
        };
        let event = match field(event_col).map(parse_event) {
            Some(Some(e)) => e,
            Some(None) => {
                problems.push(format!("line {line}: event must be 0 or 1"));
                continue;
            }
            None => {
                problems.push(format!("line {line}: missing event"));
                continue;
            }
        };
        let arm = match arm_col {
            Some(i) => match field(i) {
                Some(a) => a.to_string(),
                None => {
                    problems.push(format!("line {line}: missing arm"));
                    continue;
                }
            },
            None => String::new(),
        };
        let record = Record { time, event };
        match arms.iter_mut().find(|(name, _)| *name == arm) {
            Some((_, recs)) => recs.push(record),
            None => arms.push((arm, vec![record])),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Data(format!("malformed rows:\n  {}", problems.join("\n  "))));
    }
    if arms.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    arms.into_iter()
        .map(|(arm, recs)| SurvivalDataset::new(recs, arm))
        .collect()
}

/// Reads a survival CSV file.
pub fn load_datasets(path: &Path, unit: TimeUnit) -> Result<Vec<SurvivalDataset>> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    parse_datasets(file, unit).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Reads a survival CSV file and returns one arm: the named one, or the
/// only one present.
pub fn load_dataset(path: &Path, arm: Option<&str>, unit: TimeUnit) -> Result<SurvivalDataset> {
    select_arm(load_datasets(path, unit)?, arm)
}

pub fn select_arm(datasets: Vec<SurvivalDataset>, arm: Option<&str>) -> Result<SurvivalDataset> {
    let labels: Vec<String> = datasets.iter().map(|d| d.arm().to_string()).collect();
    match arm {
        Some(name) => datasets
            .into_iter()
            .find(|d| d.arm() == name)
            .ok_or_else(|| Error::Data(format!("arm '{name}' not found (have {labels:?})"))),
        None if datasets.len() == 1 => Ok(datasets.into_iter().next().expect("one dataset")),
        None => Err(Error::Data(format!("several arms present {labels:?}; choose one"))),
    }
}

/// A curve summary with its time points, as written to and read from
/// CSV and returned by the service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveTable {
    #[serde(rename = "t")]
    pub time: Vec<f64>,
    pub median: Vec<f64>,
    #[serde(rename = "lo")]
    pub lo95: Vec<f64>,
    #[serde(rename = "hi")]
    pub hi95: Vec<f64>,
}

impl CurveTable {
    pub fn new(grid: &Grid, summary: &CurveSummary) -> Self {
        CurveTable {
            time: grid.points().to_vec(),
            median: summary.median.clone(),
            lo95: summary.lo95.clone(),
            hi95: summary.hi95.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// CSV text with columns time, median, lo95, hi95. Values use the
    /// shortest representation that parses back to the same f64.
    pub fn to_csv(&self, unit: TimeUnit) -> String {
        let mut out = String::from("time,median,lo95,hi95\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                unit.from_months(self.time[i]),
                self.median[i],
                self.lo95[i],
                self.hi95[i]
            ));
        }
        out
    }

    pub fn from_csv(text: &str, unit: TimeUnit) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut table = CurveTable {
            time: vec![],
            median: vec![],
            lo95: vec![],
            hi95: vec![],
        };
        for row in reader.records() {
            let row = row.map_err(|e| Error::Data(format!("curve file: {e}")))?;
            let line = row.position().map_or(0, |p| p.line());
            let values = row
                .iter()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Data(format!("curve file line {line}: {e}")))?;
            if values.len() != 4 {
                return Err(Error::Data(format!("curve file line {line}: expected 4 columns")));
            }
            table.time.push(unit.to_months(values[0]));
            table.median.push(values[1]);
            table.lo95.push(values[2]);
            table.hi95.push(values[3]);
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path, unit: TimeUnit) -> Result<()> {
        fs::write(path, self.to_csv(unit))?;
        Ok(())
    }

    pub fn read(path: &Path, unit: TimeUnit) -> Result<Self> {
        Self::from_csv(&fs::read_to_string(path)?, unit)
    }
}
