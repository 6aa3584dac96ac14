use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One individual: follow-up time in months and whether the event was observed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub time: f64,
    pub event: bool,
}

/// Right-censored individual-level survival data for one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDataset {
    records: Vec<Record>,
    arm: String,
}

impl SurvivalDataset {
    pub fn new(records: Vec<Record>, arm: impl Into<String>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Data("dataset has no records".into()));
        }
        if let Some((i, r)) = records
            .iter()
            .enumerate()
            .find(|(_, r)| !(r.time > 0.0 && r.time.is_finite()))
        {
            return Err(Error::Data(format!(
                "record {} has non-positive or non-finite time {}",
                i + 1,
                r.time
            )));
        }
        Ok(SurvivalDataset {
            records,
            arm: arm.into(),
        })
    }

    /// Builds a dataset from parallel time and event slices.
    pub fn from_columns(times: &[f64], events: &[bool]) -> Result<Self> {
        if times.len() != events.len() {
            return Err(Error::Usage(format!(
                "{} times but {} event indicators",
                times.len(),
                events.len()
            )));
        }
        let records = times
            .iter()
            .zip(events)
            .map(|(&time, &event)| Record { time, event })
            .collect();
        Self::new(records, "")
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn arm(&self) -> &str {
        &self.arm
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }

    pub fn total_time(&self) -> f64 {
        self.records.iter().map(|r| r.time).sum()
    }

    pub fn max_time(&self) -> f64 {
        self.records.iter().map(|r| r.time).fold(0.0, f64::max)
    }

    /// Sorted event times, with repeats.
    pub fn event_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.records.iter().filter(|r| r.event).map(|r| r.time).collect();
        t.sort_by(f64::total_cmp);
        t
    }

    /// Censor every record at `cutoff`, as at an earlier data cut.
    pub fn censor_at(&self, cutoff: f64) -> Result<Self> {
        let records = self
            .records
            .iter()
            .map(|r| {
                if r.time > cutoff {
                    Record { time: cutoff, event: false }
                } else {
                    *r
                }
            })
            .collect();
        Self::new(records, self.arm.clone())
    }

    pub fn with_arm(mut self, arm: impl Into<String>) -> Self {
        self.arm = arm.into();
        self
    }
}
