//! Weak-drive model of N two-level atoms coupled to one cavity mode.
//!
//! Frequencies are stored as ν = ω/2π in MHz throughout. The transmission
//! formula is homogeneous of degree zero in frequency, so no factor of 2π
//! is ever needed.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::optimize::golden_section_max;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Physical constants of the cavity-atom system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CavityParams {
    /// Peak single-atom coupling (MHz).
    pub g0: f64,
    /// Cavity field decay rate, half width (MHz).
    pub kappa: f64,
    /// Atomic dipole decay rate, half width (MHz).
    pub gamma: f64,
    /// Probe wavelength (nm).
    pub lambda_probe: f64,
    /// Intracavity lattice wavelength (nm).
    pub lambda_lattice: f64,
    /// Mirror separation (mm).
    pub cavity_length: f64,
    /// TEM00 mode waist (μm).
    pub waist: f64,
    pub finesse: f64,
}

impl Default for CavityParams {
    fn default() -> Self {
        let lambda_probe = 852.356;
        Self {
            g0: 3.2,
            kappa: 1.0,
            gamma: 2.6,
            lambda_probe,
            lambda_lattice: shifted_wavelength(lambda_probe, 354.3),
            cavity_length: 1.27,
            waist: 46.0,
            finesse: 5.7e4,
        }
    }
}

impl CavityParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("g0", self.g0),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("lambda_probe", self.lambda_probe),
            ("lambda_lattice", self.lambda_lattice),
            ("cavity_length", self.cavity_length),
            ("waist", self.waist),
            ("finesse", self.finesse),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(domain(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        if self.lambda_lattice >= self.lambda_probe {
            return Err(domain(format!(
                "lattice wavelength {} nm must be shorter than probe wavelength {} nm",
                self.lambda_lattice, self.lambda_probe
            )));
        }
        Ok(())
    }

    pub fn linewidths(&self) -> Linewidths {
        Linewidths {
            kappa: self.kappa,
            gamma: self.gamma,
        }
    }

    pub fn cooperativity(&self) -> Result<f64> {
        cooperativity(self.g0, self.kappa, self.gamma)
    }

    /// Free spectral range c/2L in GHz.
    pub fn free_spectral_range_ghz(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.cavity_length * 1e-3) * 1e-9
    }

    /// Field decay half width implied by the finesse, FSR/(2F), in MHz.
    pub fn kappa_from_finesse(&self) -> f64 {
        self.free_spectral_range_ghz() * 1e3 / (2.0 * self.finesse)
    }
}

/// Wavelength (nm) of light shifted up in frequency by `offset_ghz`.
pub fn shifted_wavelength(lambda_nm: f64, offset_ghz: f64) -> f64 {
    let nu = SPEED_OF_LIGHT / (lambda_nm * 1e-9) + offset_ghz * 1e9;
    SPEED_OF_LIGHT / nu * 1e9
}

/// Cavity and atomic half widths (MHz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linewidths {
    pub kappa: f64,
    pub gamma: f64,
}

/// Probe, cavity and atom detunings; always satisfies Δpc = Δpa − Δca.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detunings {
    delta_pa: f64,
    delta_ca: f64,
    delta_pc: f64,
}

impl Detunings {
    /// From probe−atom and cavity−atom detunings.
    pub fn from_pa_ca(delta_pa: f64, delta_ca: f64) -> Self {
        Self {
            delta_pa,
            delta_ca,
            delta_pc: delta_pa - delta_ca,
        }
    }

    /// From probe−cavity and cavity−atom detunings.
    pub fn from_pc_ca(delta_pc: f64, delta_ca: f64) -> Self {
        Self {
            delta_pa: delta_pc + delta_ca,
            delta_ca,
            delta_pc,
        }
    }

    pub fn delta_pa(&self) -> f64 {
        self.delta_pa
    }

    pub fn delta_ca(&self) -> f64 {
        self.delta_ca
    }

    pub fn delta_pc(&self) -> f64 {
        self.delta_pc
    }
}

pub fn cooperativity(g0: f64, kappa: f64, gamma: f64) -> Result<f64> {
    if !(kappa > 0.0 && gamma > 0.0) {
        return Err(domain(format!(
            "cooperativity needs positive decay rates, got kappa={kappa}, gamma={gamma}"
        )));
    }
    if !(g0 >= 0.0) {
        return Err(domain(format!("coupling must be non-negative, got {g0}")));
    }
    Ok(g0 * g0 / (2.0 * kappa * gamma))
}

/// Effective coupling of an ensemble to the cavity mode.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveCoupling {
    pub omega_eff: f64,
    pub n_atoms: usize,
    pub per_atom_g: Vec<f64>,
}

/// Ω_eff = √(Σ g_k²). For N identical couplings this is g√N.
pub fn collective_coupling(per_atom_g: &[f64]) -> Result<CollectiveCoupling> {
    if per_atom_g.is_empty() {
        return Err(domain("collective coupling of an empty ensemble"));
    }
    if let Some(g) = per_atom_g.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
        return Err(domain(format!(
            "per-atom coupling must be non-negative, got {g}"
        )));
    }
    let first = per_atom_g[0];
    let omega_eff = if per_atom_g.iter().all(|&g| g == first) {
        first * (per_atom_g.len() as f64).sqrt()
    } else {
        per_atom_g.iter().map(|g| g * g).sum::<f64>().sqrt()
    };
    Ok(CollectiveCoupling {
        omega_eff,
        n_atoms: per_atom_g.len(),
        per_atom_g: per_atom_g.to_vec(),
    })
}

/// Steady-state intracavity field ⟨a⟩ of the linearised cavity/collective-dipole pair
/// under a probe of strength `eta` (MHz).
pub fn steady_state_field(
    d: Detunings,
    omega_eff: f64,
    lw: Linewidths,
    eta: f64,
) -> Result<Complex64> {
    if !(eta > 0.0) {
        return Err(domain(format!(
            "drive strength must be positive, got {eta}"
        )));
    }
    let atom = Complex64::new(d.delta_pa, lw.gamma);
    let cavity = Complex64::new(d.delta_pc, lw.kappa);
    let denom = cavity * atom - omega_eff * omega_eff;
    if denom == Complex64::new(0.0, 0.0) {
        return Err(Error::Singular(format!(
            "steady-state denominator vanishes at {d:?}, omega_eff={omega_eff}"
        )));
    }
    Ok(eta * atom / denom)
}

/// Normalised probe transmission; equals 1 for the empty cavity on resonance.
pub fn transmission(d: Detunings, omega_eff: f64, lw: Linewidths) -> f64 {
    let Linewidths { kappa, gamma } = lw;
    let dpa = d.delta_pa;
    let dca = d.delta_ca;
    let re = omega_eff * omega_eff - dpa * dpa + dca * dpa + gamma * kappa;
    let im = kappa * dpa + gamma * dpa - gamma * dca;
    kappa * kappa * (gamma * gamma + dpa * dpa) / (re * re + im * im)
}

/// Ordered (probe−atom detuning, transmission) samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectrumScan {
    points: Vec<(f64, f64)>,
}

impl SpectrumScan {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        for (i, w) in points.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return Err(domain(format!(
                    "detunings must be strictly increasing (index {} -> {})",
                    i,
                    i + 1
                )));
            }
        }
        if let Some((x, t)) = points
            .iter()
            .find(|(x, t)| !x.is_finite() || !t.is_finite() || *t < 0.0)
        {
            return Err(domain(format!("invalid sample ({x}, {t})")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn detunings(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.0).collect()
    }

    pub fn transmissions(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }
}

pub(crate) fn check_increasing(grid: &[f64]) -> Result<()> {
    match grid.windows(2).position(|w| !(w[1] > w[0])) {
        Some(i) => Err(domain(format!(
            "grid is not strictly increasing at index {}",
            i + 1
        ))),
        None => Ok(()),
    }
}

/// Evenly spaced grid `start, start+step, ..., stop` built from integer multiples of `step`.
pub fn uniform_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as i64;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

/// Grid symmetric about zero with exact mirror values, `[-half_span, half_span]`.
pub fn symmetric_grid(half_span: f64, step: f64) -> Vec<f64> {
    let n = (half_span / step + 1e-9).floor() as i64;
    (-n..=n).map(|i| i as f64 * step).collect()
}

pub fn spectrum(
    grid: &[f64],
    omega_eff: f64,
    delta_ca: f64,
    lw: Linewidths,
) -> Result<SpectrumScan> {
    check_increasing(grid)?;
    let points = grid
        .iter()
        .map(|&x| {
            (
                x,
                transmission(Detunings::from_pa_ca(x, delta_ca), omega_eff, lw),
            )
        })
        .collect();
    Ok(SpectrumScan { points })
}

/// A local transmission maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub delta_pa: f64,
    pub transmission: f64,
}

/// Transmission maxima of the analytic spectrum, sorted by detuning.
///
/// Maxima are bracketed on a coarse grid over ±`half_span` and then refined by
/// golden-section search.
pub fn transmission_peaks(
    omega_eff: f64,
    delta_ca: f64,
    lw: Linewidths,
    half_span: f64,
) -> Vec<Peak> {
    let f = |x: f64| transmission(Detunings::from_pa_ca(x, delta_ca), omega_eff, lw);
    refine_maxima(&f, -half_span, half_span, 4000, 1e-10)
}

/// Locates every interior local maximum of `f` on `[lo, hi]`.
pub(crate) fn refine_maxima(
    f: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    samples: usize,
    xtol: f64,
) -> Vec<Peak> {
    let step = (hi - lo) / samples as f64;
    let xs: Vec<f64> = (0..=samples).map(|i| lo + i as f64 * step).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut peaks = Vec::new();
    for i in 1..samples {
        if ys[i] > ys[i - 1] && ys[i] >= ys[i + 1] {
            let (x, y) = golden_section_max(f, xs[i - 1], xs[i + 1], xtol);
            peaks.push(Peak {
                delta_pa: x,
                transmission: y,
            });
        }
    }
    peaks
}

/// Separation between the outermost pair of maxima, or `None` for a single peak.
pub fn splitting(peaks: &[Peak]) -> Option<f64> {
    match (peaks.first(), peaks.last()) {
        (Some(a), Some(b)) if peaks.len() >= 2 => Some(b.delta_pa - a.delta_pa),
        _ => None,
    }
}

/// Ratio of the higher to the lower of the outermost two peaks.
pub fn peak_height_ratio(peaks: &[Peak]) -> Option<f64> {
    match (peaks.first(), peaks.last()) {
        (Some(a), Some(b)) if peaks.len() >= 2 => {
            let (hi, lo) = if a.transmission >= b.transmission {
                (a.transmission, b.transmission)
            } else {
                (b.transmission, a.transmission)
            };
            Some(hi / lo)
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LW: Linewidths = Linewidths {
        kappa: 1.0,
        gamma: 2.6,
    };

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn cooperativity_examples() {
        assert!((cooperativity(3.2, 1.0, 2.6).unwrap() - 1.969_230_769).abs() < 1e-8);
        assert_eq!(cooperativity(0.0, 1.0, 1.0).unwrap(), 0.0);
        assert!((cooperativity(1.0, 0.5, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(cooperativity(1.0, 0.0, 1.0).is_err());
        assert!(cooperativity(1.0, 1.0, -2.0).is_err());
    }

    #[test]
    fn collective_coupling_examples() {
        let c = collective_coupling(&[2.74; 8]).unwrap();
        let direct = (8.0 * 2.74f64 * 2.74).sqrt();
        assert!((c.omega_eff - 7.750_0).abs() < 5e-4);
        assert!(rel(c.omega_eff, direct) < 1e-12);
        assert_eq!(c.n_atoms, 8);
        assert_eq!(collective_coupling(&[1.7]).unwrap().omega_eff, 1.7);
        assert!((collective_coupling(&[3.0, 4.0]).unwrap().omega_eff - 5.0).abs() < 1e-15);
        assert!(collective_coupling(&[]).is_err());
        assert!(collective_coupling(&[1.0, -0.1]).is_err());
    }

    #[test]
    fn field_examples() {
        let eta = 0.01;
        let a = steady_state_field(Detunings::from_pc_ca(0.0, 0.0), 0.0, LW, eta).unwrap();
        assert!((a - Complex64::new(0.0, -eta / LW.kappa)).norm() < 1e-15);

        let a = steady_state_field(Detunings::from_pc_ca(LW.kappa, 0.0), 0.0, LW, eta).unwrap();
        assert!(rel(a.norm_sqr(), eta * eta / (2.0 * LW.kappa * LW.kappa)) < 1e-12);

        // Δpa = Δca = 0: |a|² = γ²/(γκ + Ω²)²
        let a = steady_state_field(Detunings::from_pa_ca(0.0, 0.0), 2.76, LW, 1.0).unwrap();
        let expected = 2.6f64.powi(2) / (2.6 + 2.76f64 * 2.76).powi(2);
        assert!(rel(a.norm_sqr(), expected) < 1e-12);
        assert!((a.norm_sqr() - 0.0647).abs() < 1e-4);

        let zero = Linewidths {
            kappa: 0.0,
            gamma: 0.0,
        };
        let err = steady_state_field(Detunings::from_pa_ca(0.0, 0.0), 0.0, zero, 1.0);
        assert!(matches!(err, Err(Error::Singular(_))));
        assert!(steady_state_field(Detunings::from_pa_ca(0.0, 0.0), 0.0, LW, 0.0).is_err());
    }

    #[test]
    fn transmission_examples() {
        assert_eq!(transmission(Detunings::from_pa_ca(0.0, 0.0), 0.0, LW), 1.0);
        assert!((transmission(Detunings::from_pa_ca(1.0, 0.0), 0.0, LW) - 0.5).abs() < 1e-15);
        let omega: f64 = 2.76;
        let t = transmission(Detunings::from_pa_ca(omega, 0.0), omega, LW);
        let (k, g) = (1.0f64, 2.6f64);
        let closed =
            k * k * (g * g + omega * omega) / ((g * k).powi(2) + ((k + g) * omega).powi(2));
        assert!(rel(t, closed) < 1e-14);
        assert!((t - 0.1363).abs() < 1e-4);
    }

    #[test]
    fn detunings_are_consistent() {
        let d = Detunings::from_pa_ca(1.5, -0.3);
        assert_eq!(d.delta_pc(), 1.8);
        let e = Detunings::from_pc_ca(d.delta_pc(), d.delta_ca());
        assert!((e.delta_pa() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn empty_cavity_lorentzian_has_fwhm_two_kappa() {
        let grid = uniform_grid(-10.0, 10.0, 0.1);
        let scan = spectrum(&grid, 0.0, 0.0, LW).unwrap();
        let (imax, _) = scan
            .points()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .unwrap();
        assert!(scan.points()[imax].0.abs() < 1e-12);
        let peaks = transmission_peaks(0.0, 0.0, LW, 10.0);
        assert_eq!(peaks.len(), 1);
        let half = crate::optimize::bisect(
            |x| transmission(Detunings::from_pa_ca(x, 0.0), 0.0, LW) - 0.5,
            0.0,
            10.0,
            1e-14,
        );
        assert!((2.0 * half - 2.0 * LW.kappa).abs() < 1e-6);
    }

    #[test]
    fn resonant_peaks_sit_near_plus_minus_omega() {
        let peaks = transmission_peaks(2.76, 0.0, LW, 15.0);
        assert_eq!(peaks.len(), 2);
        for p in &peaks {
            assert!((p.delta_pa.abs() - 2.76).abs() < 0.2, "{p:?}");
        }
        // numeric maximisation with an independent optimiser gives ±2.72110
        assert!((peaks[1].delta_pa - 2.721_096_7).abs() < 1e-6);
        assert!((peaks[0].delta_pa + peaks[1].delta_pa).abs() < 1e-6);
    }

    #[test]
    fn detuned_cavity_makes_peaks_uneven() {
        let peaks = transmission_peaks(2.76, -0.4, LW, 15.0);
        assert_eq!(peaks.len(), 2);
        // negative Δca: the cavity-like peak on the negative side is higher
        assert!(peaks[0].transmission > peaks[1].transmission);
        assert!((peaks[0].transmission - 0.156_154).abs() < 1e-5);
        assert!((peaks[1].transmission - 0.118_729).abs() < 1e-5);
        assert!(peak_height_ratio(&peaks).unwrap() > 1.3);
    }

    #[test]
    fn spectrum_rejects_unsorted_grid() {
        assert!(spectrum(&[0.0, 1.0, 0.5], 1.0, 0.0, LW).is_err());
        assert!(spectrum(&[0.0, 0.0], 1.0, 0.0, LW).is_err());
    }

    #[test]
    fn scan_validation() {
        assert!(SpectrumScan::new(vec![(0.0, 0.1), (1.0, -0.1)]).is_err());
        assert!(SpectrumScan::new(vec![(0.0, f64::NAN)]).is_err());
        assert!(SpectrumScan::new(vec![(1.0, 0.1), (0.0, 0.1)]).is_err());
        assert_eq!(
            SpectrumScan::new(vec![(0.0, 0.1), (1.0, 0.2)])
                .unwrap()
                .len(),
            2
        );
    }

    #[test]
    fn symmetric_scan_at_zero_cavity_detuning() {
        let grid = symmetric_grid(15.0, 0.1);
        let scan = spectrum(&grid, 2.74 * 3f64.sqrt(), 0.0, LW).unwrap();
        let pts = scan.points();
        let n = pts.len();
        for i in 0..n {
            let (a, b) = (pts[i].1, pts[n - 1 - i].1);
            assert!((a - b).abs() <= 1e-12 * a.max(b));
        }
    }

    #[test]
    fn cavity_defaults() {
        let p = CavityParams::default();
        p.validate().unwrap();
        assert!((p.lambda_lattice - 851.498_26).abs() < 1e-4);
        // three free spectral ranges separate lattice and probe
        // the length is quoted to three figures, i.e. ±0.4% in the FSR
        assert!((p.free_spectral_range_ghz() * 3.0 - 354.3).abs() < 1.4);
        assert!((p.kappa_from_finesse() - p.kappa).abs() < 0.05);
        let mut bad = p;
        bad.lambda_lattice = 853.0;
        assert!(bad.validate().is_err());
        bad = p;
        bad.kappa = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn field_identity_over_ten_thousand_draws() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let lw = Linewidths {
                kappa: rng.random_range(0.01..10.0),
                gamma: rng.random_range(0.01..10.0),
            };
            let d =
                Detunings::from_pa_ca(rng.random_range(-30.0..30.0), rng.random_range(-5.0..5.0));
            let omega = rng.random_range(0.0..15.0);
            let eta = 0.01 * lw.kappa;
            let t = transmission(d, omega, lw);
            let a = steady_state_field(d, omega, lw, eta).unwrap();
            worst = worst.max(rel((lw.kappa * a / eta).norm_sqr(), t));
        }
        assert!(worst <= 1e-10, "worst relative error {worst}");
    }

    proptest! {
        #[test]
        fn transmission_equals_field_modulus(
            dpa in -20.0f64..20.0, dca in -5.0f64..5.0, omega in 0.0f64..10.0,
            kappa in 0.05f64..5.0, gamma in 0.05f64..5.0, eta in 1e-3f64..1.0,
        ) {
            let lw = Linewidths { kappa, gamma };
            let d = Detunings::from_pa_ca(dpa, dca);
            let t = transmission(d, omega, lw);
            let a = steady_state_field(d, omega, lw, eta).unwrap();
            let via_field = (kappa * a / eta).norm_sqr();
            prop_assert!((t - via_field).abs() <= 1e-10 * t.max(1e-300));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&t));
        }

        #[test]
        fn even_in_detuning_when_cavity_resonant(
            dpa in -20.0f64..20.0, omega in 0.0f64..10.0,
            kappa in 0.05f64..5.0, gamma in 0.05f64..5.0,
        ) {
            let lw = Linewidths { kappa, gamma };
            let a = transmission(Detunings::from_pa_ca(dpa, 0.0), omega, lw);
            let b = transmission(Detunings::from_pa_ca(-dpa, 0.0), omega, lw);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn empty_cavity_is_lorentzian(dpa in -20.0f64..20.0, kappa in 0.05f64..5.0, gamma in 0.05f64..5.0) {
            let t = transmission(Detunings::from_pa_ca(dpa, 0.0), 0.0, Linewidths { kappa, gamma });
            let lorentz = kappa * kappa / (kappa * kappa + dpa * dpa);
            prop_assert!((t - lorentz).abs() <= 1e-12);
        }

        #[test]
        fn scale_invariant(
            dpa in -20.0f64..20.0, dca in -5.0f64..5.0, omega in 0.0f64..10.0,
            kappa in 0.05f64..5.0, gamma in 0.05f64..5.0, s in 0.01f64..100.0,
        ) {
            let t = transmission(Detunings::from_pa_ca(dpa, dca), omega, Linewidths { kappa, gamma });
            let ts = transmission(
                Detunings::from_pa_ca(s * dpa, s * dca),
                s * omega,
                Linewidths { kappa: s * kappa, gamma: s * gamma },
            );
            prop_assert!((t - ts).abs() <= 1e-12 * t.max(1e-300));
        }
    }
}
