use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng::{substream, LIGHT_SHIFT_STREAM};
use crate::error::{domain, Result};

/// Per-tweezer differential light shift, uniform within ±`half_range_fraction`
/// of `mean_shift`.
///
/// The default mean of 6.25 MHz with a 3.2% half range gives a 0.4 MHz full
/// spread of cavity−atom detunings across the array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LightShiftModel {
    pub mean_shift: f64,
    pub half_range_fraction: f64,
    pub n_sites: usize,
}

impl Default for LightShiftModel {
    fn default() -> Self {
        Self {
            mean_shift: 6.25,
            half_range_fraction: 0.032,
            n_sites: 11,
        }
    }
}

/// Light shift (MHz) of tweezer `site` under `seed`.
pub fn fluorescence_spectrum_shift(site: usize, m: &LightShiftModel, seed: u64) -> Result<f64> {
    if site >= m.n_sites {
        return Err(domain(format!(
            "site {site} outside an array of {}",
            m.n_sites
        )));
    }
    if !(0.0..1.0).contains(&m.half_range_fraction) {
        return Err(domain("half-range fraction must lie in [0, 1)"));
    }
    if m.half_range_fraction == 0.0 {
        return Ok(m.mean_shift);
    }
    let u: f64 = substream(seed, LIGHT_SHIFT_STREAM, site as u64).random_range(-1.0..=1.0);
    Ok(m.mean_shift * (1.0 + m.half_range_fraction * u))
}

/// Shifts for every site of the array.
pub fn array_shifts(m: &LightShiftModel, seed: u64) -> Result<Vec<f64>> {
    (0..m.n_sites)
        .map(|s| fluorescence_spectrum_shift(s, m, seed))
        .collect()
}
