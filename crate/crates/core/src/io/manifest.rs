//! Provenance record written next to every set of artifacts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use crate::controllers::ControllerKind;
use crate::error::Result;
use crate::race::{RaceRun, TimingStats};

#[derive(Debug, Clone, Serialize)]
pub struct RaceSummary {
    pub race: String,
    pub front: char,
    pub rear: char,
    pub records: usize,
    pub overtake_time: Option<f64>,
    pub krylov_breakdowns: [usize; 2],
    /// Solve-time statistics, `[rear, front]`.
    pub timing: [TimingStats; 2],
}

impl RaceSummary {
    pub fn new(run: &RaceRun, overtake_time: Option<f64>) -> Self {
        Self {
            race: format!("Race({},{})", run.front.letter(), run.rear.letter()),
            front: run.front.letter(),
            rear: run.rear.letter(),
            records: run.log.records.len(),
            overtake_time,
            krylov_breakdowns: run.krylov_breakdowns,
            timing: run.timing,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub platform: String,
    pub config: ExperimentConfig,
    pub races: Vec<RaceSummary>,
    /// Solve-time statistics pooled per controller over all races.
    pub timing: BTreeMap<String, TimingStats>,
    /// Files produced alongside this manifest, relative to it.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            platform: format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
            config: config.clone(),
            races: Vec::new(),
            timing: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn add_race(&mut self, run: &RaceRun, overtake_time: Option<f64>) {
        for (kind, stats) in [(run.rear, run.timing[0]), (run.front, run.timing[1])] {
            if kind == ControllerKind::Hover {
                continue;
            }
            let entry = self.timing.entry(controller_name(kind)).or_default();
            *entry = entry.merge(&stats);
        }
        self.races.push(RaceSummary::new(run, overtake_time));
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

pub fn controller_name(kind: ControllerKind) -> String {
    match kind {
        ControllerKind::Nmpc => "NMPC",
        ControllerKind::Nrhdg => "NRHDG",
        ControllerKind::Hover => "hover",
    }
    .to_string()
}
