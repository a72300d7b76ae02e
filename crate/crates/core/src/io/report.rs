use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fit::FitResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub value: f64,
    pub sigma: f64,
}

/// JSON form of a fit: parameter name → {value, sigma} plus fit quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub parameters: BTreeMap<String, ParamEstimate>,
    pub chi2: f64,
    pub dof: usize,
    pub converged: bool,
    pub n_iter: usize,
}

impl From<&FitResult> for FitReport {
    fn from(f: &FitResult) -> Self {
        let parameters = f
            .names
            .iter()
            .zip(f.params.iter().zip(&f.sigmas))
            .map(|(n, (&value, &sigma))| (n.clone(), ParamEstimate { value, sigma }))
            .collect();
        Self {
            parameters,
            chi2: f.chi2,
            dof: f.dof,
            converged: f.converged,
            n_iter: f.n_iter,
        }
    }
}

impl FitReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.parameters.get(name).map(|p| p.value)
    }
}
