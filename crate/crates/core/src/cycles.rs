//! Cycle files: a versioned JSON serialization of [`CoolingCycle`] with all
//! durations in units of `1/ν`, plus the cycles shipped with the crate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{CoolingCycle, CoolingSequence};
use crate::error::{Error, Result};
use crate::pulse::PulseSpec;

pub const CYCLE_SCHEMA: &str = "ioncool-cycle/1";
pub const TIME_UNIT: &str = "1/nu";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleFile {
    pub schema: String,
    pub label: String,
    pub time_unit: String,
    /// Free-form record of how the cycle was produced.
    #[serde(default)]
    pub provenance: BTreeMap<String, serde_json::Value>,
    /// Pulses with durations in units of `1/ν`.
    pub sequences: Vec<CoolingSequence>,
}

impl CycleFile {
    /// Convert a cycle (durations in seconds) for a trap frequency `nu`.
    pub fn from_cycle(cycle: &CoolingCycle, nu: f64, provenance: BTreeMap<String, serde_json::Value>) -> Self {
        CycleFile {
            schema: CYCLE_SCHEMA.into(),
            label: cycle.label.clone(),
            time_unit: TIME_UNIT.into(),
            provenance,
            sequences: rescale(&cycle.sequences, nu),
        }
    }

    /// The cycle in seconds for trap frequency `nu`.
    pub fn to_cycle(&self, nu: f64) -> Result<CoolingCycle> {
        if self.schema != CYCLE_SCHEMA {
            return Err(Error::CycleFormat(format!(
                "unsupported schema `{}` (expected `{CYCLE_SCHEMA}`)",
                self.schema
            )));
        }
        if self.time_unit != TIME_UNIT {
            return Err(Error::CycleFormat(format!(
                "unsupported time unit `{}` (expected `{TIME_UNIT}`)",
                self.time_unit
            )));
        }
        let cycle = CoolingCycle::new(self.label.clone(), rescale(&self.sequences, 1.0 / nu));
        cycle
            .validate()
            .map_err(|e| Error::CycleFormat(format!("cycle `{}`: {e}", self.label)))?;
        Ok(cycle)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::CycleFormat(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cycle files always serialize")
    }
}

fn rescale(sequences: &[CoolingSequence], factor: f64) -> Vec<CoolingSequence> {
    sequences
        .iter()
        .map(|s| CoolingSequence {
            pulses: s.pulses.iter().map(|p: &PulseSpec| p.scale_durations(factor)).collect(),
        })
        .collect()
}

const SHIPPED: [(&str, &str); 3] = [
    ("A", include_str!("../cycles/A.json")),
    ("B", include_str!("../cycles/B.json")),
    ("C", include_str!("../cycles/C.json")),
];

/// Names of the shipped cycles.
pub fn shipped_names() -> Vec<&'static str> {
    SHIPPED.iter().map(|(name, _)| *name).collect()
}

/// One of the shipped cycle files, by name (`"A"`, `"B"`, `"C"`).
pub fn shipped(name: &str) -> Result<CycleFile> {
    let (_, text) = SHIPPED
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::CycleFormat(format!("no shipped cycle named `{name}`")))?;
    CycleFile::from_json(text)
}
