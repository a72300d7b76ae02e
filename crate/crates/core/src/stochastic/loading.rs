use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::substream;
use crate::error::{domain, Result};

/// Independent per-site loading of a tweezer array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadingModel {
    pub p_load: f64,
    pub n_tweezers: usize,
    /// Per-site multipliers on `p_load`; empty means all ones.
    pub edge_overlap: Vec<f64>,
}

impl Default for LoadingModel {
    fn default() -> Self {
        Self {
            p_load: 0.57,
            n_tweezers: 11,
            edge_overlap: Vec::new(),
        }
    }
}

impl LoadingModel {
    pub fn new(p_load: f64, n_tweezers: usize) -> Result<Self> {
        let m = Self {
            p_load,
            n_tweezers,
            edge_overlap: Vec::new(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_load) {
            return Err(domain(format!(
                "loading probability {} outside [0, 1]",
                self.p_load
            )));
        }
        if !self.edge_overlap.is_empty() && self.edge_overlap.len() != self.n_tweezers {
            return Err(domain(format!(
                "{} overlap factors for {} tweezers",
                self.edge_overlap.len(),
                self.n_tweezers
            )));
        }
        for p in self.site_probabilities() {
            if !(0.0..=1.0).contains(&p) {
                return Err(domain(format!(
                    "site loading probability {p} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn site_probabilities(&self) -> Vec<f64> {
        (0..self.n_tweezers)
            .map(|i| self.p_load * self.edge_overlap.get(i).copied().unwrap_or(1.0))
            .collect()
    }

    pub fn expected_mean(&self) -> f64 {
        self.site_probabilities().iter().sum()
    }
}

/// Result of a loading Monte Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingRun {
    /// Occupancy pattern of every trial.
    pub occupancy: Vec<Vec<bool>>,
    /// `histogram[k]` counts trials with exactly k loaded atoms.
    pub histogram: Vec<u64>,
    pub mean: f64,
}

impl LoadingRun {
    pub fn atom_counts(&self) -> impl Iterator<Item = usize> + '_ {
        self.occupancy
            .iter()
            .map(|t| t.iter().filter(|&&o| o).count())
    }
}

pub fn simulate_loading(m: &LoadingModel, trials: usize, seed: u64) -> Result<LoadingRun> {
    m.validate()?;
    if trials == 0 {
        return Err(domain("at least one trial is required"));
    }
    let probs = m.site_probabilities();
    let occupancy: Vec<Vec<bool>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            probs
                .iter()
                .enumerate()
                .map(|(site, &p)| substream(seed, trial as u64, site as u64).random::<f64>() < p)
                .collect()
        })
        .collect();
    let mut histogram = vec![0u64; m.n_tweezers + 1];
    let mut total = 0usize;
    for trial in &occupancy {
        let k = trial.iter().filter(|&&o| o).count();
        histogram[k] += 1;
        total += k;
    }
    Ok(LoadingRun {
        occupancy,
        histogram,
        mean: total as f64 / trials as f64,
    })
}
