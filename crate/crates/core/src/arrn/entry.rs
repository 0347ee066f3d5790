use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{GridSpec, ResolutionLadder};

/// How to pick a ladder level for an input that falls between levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryPolicy {
    /// Interpolate up to the nearest finer level. Exact under the skip identity.
    #[default]
    PreferFiner,
    /// Downsample to the nearest coarser level.
    PreferCoarser,
}

impl fmt::Display for EntryPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntryPolicy::PreferFiner => "prefer-finer",
            EntryPolicy::PreferCoarser => "prefer-coarser",
        })
    }
}

impl FromStr for EntryPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prefer-finer" | "finer" => Ok(EntryPolicy::PreferFiner),
            "prefer-coarser" | "coarser" => Ok(EntryPolicy::PreferCoarser),
            _ => Err(Error::InvalidArgument(format!("unknown entry policy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntryPlan {
    pub level: usize,
    pub grid: GridSpec,
    /// Whether the input must be resampled onto `grid`.
    pub resample: bool,
}

fn all_ge(a: &GridSpec, b: &GridSpec) -> bool {
    a.extents().iter().zip(b.extents()).all(|(x, y)| x >= y)
}

/// Chooses the entry level for `input`. When no level satisfies the coarser
/// policy (input below the coarsest level) the coarsest level is used.
pub fn entry_level(ladder: &ResolutionLadder, input: &GridSpec, policy: EntryPolicy) -> Result<EntryPlan> {
    if input.dims() != ladder.dims() {
        return Err(Error::Shape(format!("{}-D input for a {}-D ladder", input.dims(), ladder.dims())));
    }
    if !all_ge(ladder.level(0), input) {
        return Err(Error::Shape(format!("input {input} exceeds the finest level {}", ladder.level(0))));
    }
    let levels = ladder.levels();
    let level = match policy {
        EntryPolicy::PreferFiner => (0..levels.len()).rev().find(|&n| all_ge(&levels[n], input)).unwrap_or(0),
        EntryPolicy::PreferCoarser => {
            (0..levels.len()).find(|&n| all_ge(input, &levels[n])).unwrap_or(levels.len() - 1)
        }
    };
    let grid = levels[level].clone();
    Ok(EntryPlan { level, resample: &grid != input, grid })
}
