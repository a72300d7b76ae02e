//! Thermal average of the axial coupling for an atom oscillating in a lattice well.
//!
//! Axial motion is treated as a harmonic oscillator with Bose-distributed level
//! populations. Lengths are in nm inside this module.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::spatial::ModeGeometry;

pub const HBAR: f64 = 1.054_571_817e-34;
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const CESIUM_MASS: f64 = 2.206_95e-25;

/// Highest oscillator level the wavefunction recurrence accepts.
pub const MAX_LEVEL: usize = 60;
pub const DEFAULT_N_MAX: usize = 10;
pub const DEFAULT_INTERVALS: usize = 2048;

/// Lattice trap seen by the atom along the cavity axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapParams {
    temperature: f64,
    lattice_depth: f64,
    atom_mass: f64,
    lambda_lattice: f64,
    omega_z: f64,
    osc_length: f64,
}

impl TrapParams {
    /// `temperature` in μK, `lattice_depth` in mK (U0/k_B), mass in kg,
    /// `lambda_lattice` in nm.
    pub fn new(
        temperature: f64,
        lattice_depth: f64,
        atom_mass: f64,
        lambda_lattice: f64,
    ) -> Result<Self> {
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(domain(format!(
                "temperature must be non-negative, got {temperature}"
            )));
        }
        for (name, v) in [
            ("lattice depth", lattice_depth),
            ("atom mass", atom_mass),
            ("lattice wavelength", lambda_lattice),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(domain(format!("{name} must be positive, got {v}")));
            }
        }
        let u0 = BOLTZMANN * lattice_depth * 1e-3;
        let omega_z = 2.0 * 2f64.sqrt() * PI / (lambda_lattice * 1e-9) * (u0 / atom_mass).sqrt();
        let osc_length = (HBAR / (atom_mass * omega_z)).sqrt() * 1e9;
        Ok(Self {
            temperature,
            lattice_depth,
            atom_mass,
            lambda_lattice,
            omega_z,
            osc_length,
        })
    }

    /// Cesium at 15 μK in a 0.29 mK lattice at the given wavelength.
    pub fn cesium(lambda_lattice: f64) -> Self {
        Self::new(15.0, 0.29, CESIUM_MASS, lambda_lattice).expect("valid constants")
    }

    pub fn with_temperature(&self, temperature: f64) -> Result<Self> {
        Self::new(
            temperature,
            self.lattice_depth,
            self.atom_mass,
            self.lambda_lattice,
        )
    }

    pub fn with_lattice_depth(&self, lattice_depth: f64) -> Result<Self> {
        Self::new(
            self.temperature,
            lattice_depth,
            self.atom_mass,
            self.lambda_lattice,
        )
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn lattice_depth(&self) -> f64 {
        self.lattice_depth
    }

    pub fn lambda_lattice(&self) -> f64 {
        self.lambda_lattice
    }

    /// Axial trap frequency (rad/s).
    pub fn omega_z(&self) -> f64 {
        self.omega_z
    }

    /// Oscillator length √(ħ/mω) in nm.
    pub fn osc_length(&self) -> f64 {
        self.osc_length
    }
}

/// k_B T / ħω_z.
pub fn mean_phonon(t: &TrapParams) -> f64 {
    BOLTZMANN * t.temperature * 1e-6 / (HBAR * t.omega_z)
}

/// Bose populations truncated at `n_max` and renormalised.
#[derive(Debug, Clone, PartialEq)]
pub struct PhononDistribution {
    pub mean_n: f64,
    pub weights: Vec<f64>,
    /// Probability mass above `n_max` before renormalisation.
    pub tail_mass: f64,
}

impl PhononDistribution {
    pub fn bose(mean_n: f64, n_max: usize) -> Self {
        let ratio = mean_n / (1.0 + mean_n);
        let mut weights: Vec<f64> = (0..=n_max)
            .map(|n| ratio.powi(n as i32) / (1.0 + mean_n))
            .collect();
        let kept: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= kept;
        }
        Self {
            mean_n,
            weights,
            tail_mass: ratio.powi(n_max as i32 + 1),
        }
    }
}

/// Normalised oscillator eigenfunctions ψ_0..=ψ_n_max at dimensionless
/// coordinate `xi`, in units of 1/√length.
fn eigenfunctions(xi: f64, n_max: usize, out: &mut Vec<f64>) {
    out.clear();
    let psi0 = PI.powf(-0.25) * (-0.5 * xi * xi).exp();
    out.push(psi0);
    if n_max == 0 {
        return;
    }
    out.push(2f64.sqrt() * xi * psi0);
    for n in 1..n_max {
        let k = n as f64;
        let next = (2.0 / (k + 1.0)).sqrt() * xi * out[n] - (k / (k + 1.0)).sqrt() * out[n - 1];
        out.push(next);
    }
}

/// |Ψ_n(z)|² (1/nm) for the oscillator centred at `z0`.
pub fn phonon_density(n: usize, z: f64, t: &TrapParams, z0: f64) -> Result<f64> {
    if n > MAX_LEVEL {
        return Err(domain(format!(
            "oscillator level {n} exceeds the supported maximum {MAX_LEVEL}"
        )));
    }
    let a = t.osc_length;
    let mut psi = Vec::with_capacity(n + 1);
    eigenfunctions((z - z0) / a, n, &mut psi);
    Ok(psi[n] * psi[n] / a)
}

/// Composite Simpson rule over `[lo, hi]` with an even number of intervals.
pub fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (hi - lo) / n as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h);
    }
    acc * h / 3.0
}

/// Thermally averaged coupling (MHz) of an atom trapped at `z0` (nm).
pub fn thermal_coupling(
    z0: f64,
    t: &TrapParams,
    geom: &ModeGeometry,
    g0: f64,
    n_max: usize,
) -> Result<f64> {
    thermal_coupling_with(z0, t, geom, g0, n_max, DEFAULT_INTERVALS)
}

/// As [`thermal_coupling`] with an explicit number of Simpson intervals.
pub fn thermal_coupling_with(
    z0: f64,
    t: &TrapParams,
    geom: &ModeGeometry,
    g0: f64,
    n_max: usize,
    intervals: usize,
) -> Result<f64> {
    Ok(level_couplings(z0, t, geom, g0, n_max, intervals)?
        .iter()
        .zip(PhononDistribution::bose(mean_phonon(t), n_max).weights)
        .map(|(g, p)| g * p)
        .sum())
}

/// ∫ g0|cos(kz)| |Ψ_n|² dz for each level n ≤ `n_max` over z0 ± λ_lattice/4.
pub fn level_couplings(
    z0: f64,
    t: &TrapParams,
    geom: &ModeGeometry,
    g0: f64,
    n_max: usize,
    intervals: usize,
) -> Result<Vec<f64>> {
    if n_max > MAX_LEVEL {
        return Err(domain(format!(
            "n_max {n_max} exceeds the supported maximum {MAX_LEVEL}"
        )));
    }
    if intervals < 2 {
        return Err(domain("quadrature needs at least two intervals"));
    }
    let a = t.osc_length;
    let k = 2.0 * PI / geom.lambda_probe();
    let half = t.lambda_lattice / 4.0;
    let (lo, hi) = (z0 - half, z0 + half);
    let n = intervals + intervals % 2;
    let h = (hi - lo) / n as f64;
    let mut sums = vec![0.0; n_max + 1];
    let mut psi = Vec::with_capacity(n_max + 1);
    for i in 0..=n {
        let z = lo + i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let coupling = g0 * (k * z).cos().abs();
        eigenfunctions((z - z0) / a, n_max, &mut psi);
        for (s, p) in sums.iter_mut().zip(&psi) {
            *s += w * coupling * p * p;
        }
    }
    Ok(sums.into_iter().map(|s| s * h / 3.0 / a).collect())
}
