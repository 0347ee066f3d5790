use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-residual drop probabilities, finest residual first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoutConfig {
    pub p: Vec<f64>,
}

impl DropoutConfig {
    pub fn uniform(residuals: usize, p: f64) -> Self {
        Self { p: vec![p; residuals] }
    }

    pub fn none(residuals: usize) -> Self {
        Self::uniform(residuals, 0.0)
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn is_active(&self) -> bool {
        self.p.iter().any(|&p| p > 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        match self.p.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            Some(p) => Err(Error::InvalidArgument(format!("dropout probability {p} outside [0, 1]"))),
            None => Ok(()),
        }
    }
}

/// Independent keep draws and their OR-chain. `chain[n]` gates residual `n`;
/// once a residual is kept every coarser one is kept as well.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropoutMask {
    indep: Vec<bool>,
    chain: Vec<bool>,
}

impl DropoutMask {
    pub fn from_indep(indep: Vec<bool>) -> Self {
        let mut on = false;
        let chain = indep
            .iter()
            .map(|&d| {
                on |= d;
                on
            })
            .collect();
        Self { indep, chain }
    }

    pub fn all_on(residuals: usize) -> Self {
        Self::from_indep(vec![true; residuals])
    }

    /// Residuals `0..k` dropped, the rest kept.
    pub fn skip_first(residuals: usize, k: usize) -> Self {
        Self::from_indep((0..residuals).map(|n| n >= k).collect())
    }

    /// One draw per residual, finest first: `indep[n]` is 1 with probability
    /// `1 - p[n]`.
    pub fn sample<R: Rng + ?Sized>(config: &DropoutConfig, rng: &mut R) -> Self {
        Self::from_indep(config.p.iter().map(|&p| rng.random::<f64>() >= p).collect())
    }

    pub fn indep(&self) -> &[bool] {
        &self.indep
    }

    pub fn gates(&self) -> &[bool] {
        &self.chain
    }

    pub fn len(&self) -> usize {
        self.chain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chain.is_empty()
    }

    /// Number of leading residuals gated off.
    pub fn dropped(&self) -> usize {
        self.chain.iter().take_while(|g| !**g).count()
    }
}
