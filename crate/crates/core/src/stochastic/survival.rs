use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Exponential single-atom loss during a hold window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurvivalModel {
    /// 1/e lifetime (s).
    pub lifetime_tau: f64,
    /// Time between the spectroscopy and the atom-number image (s).
    pub hold_window: f64,
}

impl Default for SurvivalModel {
    fn default() -> Self {
        Self {
            lifetime_tau: 4.8,
            hold_window: 0.003,
        }
    }
}

impl SurvivalModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.lifetime_tau > 0.0) || !(self.hold_window >= 0.0) {
            return Err(domain(
                "lifetime must be positive and the hold window non-negative",
            ));
        }
        Ok(())
    }

    /// e^(−window/τ).
    pub fn per_atom_survival(&self) -> f64 {
        survival(self.hold_window, self)
    }

    /// Per-atom loss rounded to one significant figure, the precision at
    /// which it is usually quoted (6.25×10⁻⁴ becomes 6×10⁻⁴).
    pub fn quoted_loss(&self) -> f64 {
        let loss = 1.0 - self.per_atom_survival();
        if loss <= 0.0 {
            return 0.0;
        }
        let scale = 10f64.powf(loss.log10().floor());
        (loss / scale).round() * scale
    }

    /// Atom-number error for `n` atoms from the quoted per-atom loss.
    pub fn atom_number_error(&self, n: u32, scaling: ErrorScaling) -> f64 {
        atom_number_error(n, self.quoted_loss(), scaling)
    }
}

pub fn survival(t: f64, m: &SurvivalModel) -> f64 {
    (-t / m.lifetime_tau).exp()
}

/// How an N-atom error budget is built from the per-atom loss `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorScaling {
    /// N·(1 − (1−q)^N): N times the chance that any atom is lost.
    Table,
    /// N²·q.
    Quadratic,
    /// 1 − (1−q)^N: the chance that any atom is lost.
    AnyLoss,
}

pub fn atom_number_error(n: u32, per_atom_loss: f64, scaling: ErrorScaling) -> f64 {
    let n_f = n as f64;
    let any_loss = 1.0 - (1.0 - per_atom_loss).powi(n as i32);
    match scaling {
        ErrorScaling::Table => n_f * any_loss,
        ErrorScaling::Quadratic => n_f * n_f * per_atom_loss,
        ErrorScaling::AnyLoss => any_loss,
    }
}
