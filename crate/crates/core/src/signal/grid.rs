use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A regular sampling grid over the periodic unit domain `[0, 1)^dims`.
///
/// Sample `i` along an axis with extent `E` sits at `i / E`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct GridSpec {
    extents: Vec<usize>,
}

impl GridSpec {
    pub fn new(extents: Vec<usize>) -> Result<Self> {
        if extents.is_empty() || extents.len() > 2 {
            return Err(Error::InvalidArgument(format!(
                "grids have 1 or 2 axes, got {}",
                extents.len()
            )));
        }
        if extents.contains(&0) {
            return Err(Error::InvalidArgument(format!("grid extents must be positive: {extents:?}")));
        }
        Ok(Self { extents })
    }

    pub fn line(extent: usize) -> Result<Self> {
        Self::new(vec![extent])
    }

    pub fn square(extent: usize) -> Result<Self> {
        Self::new(vec![extent, extent])
    }

    pub fn dims(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    /// Total number of samples.
    pub fn len(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Per-axis integer ratio `self / coarser`, if `coarser` divides `self`
    /// on every axis.
    pub fn factors_to(&self, coarser: &GridSpec) -> Option<Vec<usize>> {
        if self.dims() != coarser.dims() {
            return None;
        }
        self.extents
            .iter()
            .zip(&coarser.extents)
            .map(|(&f, &c)| (c <= f && f % c == 0).then_some(f / c))
            .collect()
    }

    /// Resampling factors from `self` down to `coarser`, or an
    /// incomparable-grid error.
    pub fn require_coarser(&self, coarser: &GridSpec) -> Result<Vec<usize>> {
        self.factors_to(coarser).ok_or_else(|| {
            Error::IncomparableGrids(format!("{coarser} is not an integer subdivision of {self}"))
        })
    }

    /// True when one grid subdivides the other on every axis.
    pub fn comparable(&self, other: &GridSpec) -> bool {
        self.factors_to(other).is_some() || other.factors_to(self).is_some()
    }

    /// Every axis extent `<=` the corresponding axis of `other`.
    pub fn fits_within(&self, other: &GridSpec) -> bool {
        self.dims() == other.dims() && self.extents.iter().zip(&other.extents).all(|(a, b)| a <= b)
    }
}

impl TryFrom<Vec<usize>> for GridSpec {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        GridSpec::new(v)
    }
}

impl From<GridSpec> for Vec<usize> {
    fn from(g: GridSpec) -> Self {
        g.extents
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.extents.iter().map(|e| e.to_string()).collect();
        f.write_str(&parts.join("x"))
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    /// Parses `64` or `32x32`.
    fn from_str(s: &str) -> Result<Self> {
        let extents = s
            .trim()
            .split('x')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("bad grid extent `{p}` in `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        GridSpec::new(extents)
    }
}

/// Grids ordered from finest (index 0) to coarsest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<GridSpec>", into = "Vec<GridSpec>")]
pub struct ResolutionLadder {
    levels: Vec<GridSpec>,
}

impl ResolutionLadder {
    pub fn new(levels: Vec<GridSpec>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a resolution ladder needs at least 2 levels, got {}",
                levels.len()
            )));
        }
        for pair in levels.windows(2) {
            let (fine, coarse) = (&pair[0], &pair[1]);
            let factors = fine.factors_to(coarse).ok_or_else(|| {
                Error::IncomparableGrids(format!("ladder level {coarse} does not divide {fine}"))
            })?;
            if factors.iter().any(|&f| f < 2) {
                return Err(Error::InvalidArgument(format!(
                    "ladder extents must strictly decrease per axis: {fine} -> {coarse}"
                )));
            }
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[GridSpec] {
        &self.levels
    }

    pub fn level(&self, n: usize) -> &GridSpec {
        &self.levels[n]
    }

    /// Number of levels, `m + 1`.
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the coarsest level, `m`.
    pub fn coarsest(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn dims(&self) -> usize {
        self.levels[0].dims()
    }

    pub fn position(&self, grid: &GridSpec) -> Option<usize> {
        self.levels.iter().position(|g| g == grid)
    }
}

impl TryFrom<Vec<GridSpec>> for ResolutionLadder {
    type Error = Error;

    fn try_from(v: Vec<GridSpec>) -> Result<Self> {
        ResolutionLadder::new(v)
    }
}

impl From<ResolutionLadder> for Vec<GridSpec> {
    fn from(l: ResolutionLadder) -> Self {
        l.levels
    }
}

impl fmt::Display for ResolutionLadder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.levels.iter().map(|g| g.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for ResolutionLadder {
    type Err = Error;

    /// Parses comma-separated levels, e.g. `32,16,8` or `32x32,16x16,8x8`.
    fn from_str(s: &str) -> Result<Self> {
        let levels = s.split(',').map(str::parse).collect::<Result<Vec<GridSpec>>>()?;
        ResolutionLadder::new(levels)
    }
}
