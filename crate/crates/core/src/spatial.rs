//! Position dependence of the atom-cavity coupling.
//!
//! Positions are in μm with Z along the cavity axis measured from the point
//! where a lattice node coincides with a probe-mode antinode. Wavelengths are
//! in nm.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::qed::CavityParams;
use crate::stochastic::rng::substream;

/// Standing-wave and transverse geometry of the probe mode and lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeGeometry {
    lambda_probe: f64,
    lambda_lattice: f64,
    beat_period: f64,
    waist_x: f64,
    waist_y: f64,
}

impl ModeGeometry {
    pub fn new(lambda_probe: f64, lambda_lattice: f64, waist_x: f64, waist_y: f64) -> Result<Self> {
        if !(waist_x > 0.0 && waist_y > 0.0) {
            return Err(domain(format!(
                "waists must be positive, got {waist_x}, {waist_y}"
            )));
        }
        Ok(Self {
            lambda_probe,
            lambda_lattice,
            beat_period: beat_period(lambda_probe, lambda_lattice)?,
            waist_x,
            waist_y,
        })
    }

    pub fn from_cavity(p: &CavityParams) -> Result<Self> {
        Self::new(p.lambda_probe, p.lambda_lattice, p.waist, p.waist)
    }

    pub fn lambda_probe(&self) -> f64 {
        self.lambda_probe
    }

    pub fn lambda_lattice(&self) -> f64 {
        self.lambda_lattice
    }

    /// Distance (μm) after which lattice nodes realign with probe antinodes.
    pub fn beat_period(&self) -> f64 {
        self.beat_period
    }

    pub fn waist_x(&self) -> f64 {
        self.waist_x
    }

    pub fn waist_y(&self) -> f64 {
        self.waist_y
    }

    /// Geometric mean of the two transverse waists (μm).
    pub fn mean_waist(&self) -> f64 {
        (self.waist_x * self.waist_y).sqrt()
    }

    /// Probe wave number 2π/λ in rad/μm.
    pub fn probe_wavenumber(&self) -> f64 {
        2.0 * PI / (self.lambda_probe * 1e-3)
    }
}

/// Beat period (μm) of two standing waves with node spacings λ/2.
pub fn beat_period(lambda_probe: f64, lambda_lattice: f64) -> Result<f64> {
    if !(lambda_probe > 0.0 && lambda_lattice > 0.0) {
        return Err(domain("wavelengths must be positive"));
    }
    if lambda_probe == lambda_lattice {
        return Err(Error::Divergence(format!(
            "probe and lattice wavelengths are both {lambda_probe} nm"
        )));
    }
    let a = 0.5 * lambda_lattice;
    let b = 0.5 * lambda_probe;
    Ok(a * b / (b - a).abs() * 1e-3)
}

/// Standing-wave coupling g0·|cos(kz)| at axial position `z` (μm).
pub fn microscopic_coupling(z: f64, geom: &ModeGeometry, g0: f64) -> f64 {
    g0 * (geom.probe_wavenumber() * z).cos().abs()
}

/// Relative coupling of an atom pinned to the lattice node nearest `z`.
pub fn envelope(z: f64, geom: &ModeGeometry) -> f64 {
    (PI * z / geom.beat_period).cos().abs()
}

/// A trapped atom and its coupling to the cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomSite {
    pub index: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Coupling at this site (MHz).
    pub local_g: f64,
    /// Cavity−atom detuning at this site (MHz).
    pub local_delta_ca: f64,
}

impl AtomSite {
    pub fn at(index: usize, x: f64, y: f64, z: f64) -> Self {
        Self {
            index,
            x,
            y,
            z,
            local_g: 0.0,
            local_delta_ca: 0.0,
        }
    }
}

/// g0 · envelope(z) · exp(−(x² + y²)/w²), with w the mean waist.
pub fn local_coupling(site: &AtomSite, geom: &ModeGeometry, g0: f64) -> f64 {
    let w = geom.mean_waist();
    let r2 = site.x * site.x + site.y * site.y;
    g0 * envelope(site.z, geom) * (-r2 / (w * w)).exp()
}

/// Equally spaced tweezer sites along the cavity axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayLayout {
    pub sites: Vec<AtomSite>,
    pub spacing: f64,
    pub center_offset: f64,
}

pub const DEFAULT_SPACING: f64 = 8.52;
pub const DEFAULT_SITES: usize = 11;

/// Lays out `n` sites centred on `center_offset` along Z and assigns their couplings.
pub fn array_layout(
    n: usize,
    spacing: f64,
    center_offset: f64,
    geom: &ModeGeometry,
    g0: f64,
) -> Result<ArrayLayout> {
    if n == 0 {
        return Err(domain("an array needs at least one site"));
    }
    if !(spacing > 0.0) {
        return Err(domain(format!("spacing must be positive, got {spacing}")));
    }
    let mid = (n as f64 - 1.0) / 2.0;
    let sites = (0..n)
        .map(|i| {
            let mut s = AtomSite::at(i, 0.0, 0.0, center_offset + (i as f64 - mid) * spacing);
            s.local_g = local_coupling(&s, geom, g0);
            s
        })
        .collect();
    Ok(ArrayLayout {
        sites,
        spacing,
        center_offset,
    })
}

impl ArrayLayout {
    pub fn couplings(&self) -> Vec<f64> {
        self.sites.iter().map(|s| s.local_g).collect()
    }

    pub fn detunings(&self) -> Vec<f64> {
        self.sites.iter().map(|s| s.local_delta_ca).collect()
    }

    /// Cavity−atom detunings from per-site light shifts (MHz): the least shifted
    /// atom is resonant and more strongly shifted atoms sit above the cavity.
    pub fn with_light_shift_detunings(&self, shifts: &[f64]) -> Result<ArrayLayout> {
        if shifts.len() != self.sites.len() {
            return Err(domain(format!(
                "{} light shifts for {} sites",
                shifts.len(),
                self.sites.len()
            )));
        }
        let min = shifts.iter().copied().fold(f64::INFINITY, f64::min);
        let mut out = self.clone();
        for (s, shift) in out.sites.iter_mut().zip(shifts) {
            s.local_delta_ca = -(shift - min);
        }
        Ok(out)
    }
}

/// Mean coupling and relative half range across an array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uniformity {
    pub mean: f64,
    pub spread: f64,
}

pub fn coupling_uniformity(layout: &ArrayLayout) -> Uniformity {
    let g = layout.couplings();
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    let max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = g.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if mean > 0.0 {
        0.5 * (max - min) / mean
    } else {
        0.0
    };
    Uniformity { mean, spread }
}

/// Default width (MHz) of the cavity−atom detuning spread across the array.
pub const DEFAULT_DETUNING_SPREAD: f64 = 0.4;

/// Assigns each site a cavity−atom detuning drawn uniformly from
/// `[-max_shift, 0]`. A zero `max_shift` disables the spread.
pub fn detuning_spread(layout: &ArrayLayout, seed: u64, max_shift: f64) -> ArrayLayout {
    let mut out = layout.clone();
    let values = sample_detunings(out.sites.len(), seed, max_shift);
    for (s, d) in out.sites.iter_mut().zip(values) {
        s.local_delta_ca = d;
    }
    out
}

/// `n` draws uniform on `[-max_shift, 0]`, one independent substream per site.
pub fn sample_detunings(n: usize, seed: u64, max_shift: f64) -> Vec<f64> {
    use rand::Rng;
    if max_shift == 0.0 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let u: f64 = substream(seed, 0, i as u64).random();
            -max_shift * u
        })
        .collect()
}
