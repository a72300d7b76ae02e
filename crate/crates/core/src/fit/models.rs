//! Curve models: vacuum-Rabi spectra, Gaussian mode profiles, lifetime decays,
//! Rabi flopping, bimodal count histograms and collective √N scaling.

use std::f64::consts::PI;

use serde::Serialize;

use super::lm::{fit_least_squares, Dataset, FitResult, ModelSpec};
use crate::error::{domain, Result};
use crate::qed::{transmission, CavityParams, Detunings, Linewidths, SpectrumScan};
use crate::stochastic::detection::{optimal_threshold, DetectionModel};

fn require_points(n: usize, min: usize, what: &str) -> Result<()> {
    if n < min {
        return Err(domain(format!(
            "{what} needs at least {min} points, got {n}"
        )));
    }
    Ok(())
}

fn vrs_model(lw: Linewidths) -> ModelSpec<'static> {
    ModelSpec::new(&["omega_eff", "delta_ca", "amplitude"], move |p, x| {
        p[2] * transmission(Detunings::from_pa_ca(x, p[1]), p[0], lw)
    })
    .with_bounds(&[
        (0.0, f64::INFINITY),
        (f64::NEG_INFINITY, f64::INFINITY),
        (0.0, f64::INFINITY),
    ])
    .expect("ordered bounds")
}

/// Centred moving average; the window shrinks at the ends.
pub fn moving_average(y: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..y.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(y.len());
            y[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Indices of the outermost pair of prominent local maxima of a 5-point
/// smoothed curve. Maxima below 30% of the tallest one are ignored.
pub fn outer_peak_pair(y: &[f64]) -> Option<(usize, usize)> {
    let s = moving_average(y, 5);
    let maxima: Vec<usize> = (1..s.len().saturating_sub(1))
        .filter(|&i| s[i] > s[i - 1] && s[i] >= s[i + 1])
        .collect();
    let top = maxima
        .iter()
        .map(|&i| s[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let prominent: Vec<usize> = maxima.into_iter().filter(|&i| s[i] >= 0.3 * top).collect();
    match (prominent.first(), prominent.last()) {
        (Some(&a), Some(&b)) if a != b => Some((a, b)),
        _ => None,
    }
}

/// Fits A·T(Δpa; Ω, Δca) with κ and γ held at the cavity values.
///
/// Ω starts from half the distance between the outermost smoothed peaks; a
/// scan without two resolvable peaks is retried from Ω = 0.5, 1, 2 and 4 MHz
/// and the best fit kept.
pub fn fit_vrs(scan: &SpectrumScan, p: &CavityParams) -> Result<FitResult> {
    require_points(scan.len(), 3, "a vacuum-Rabi fit")?;
    let lw = p.linewidths();
    let x = scan.detunings();
    let y = scan.transmissions();
    let model = vrs_model(lw);
    let data = Dataset::new(x.clone(), y.clone());
    let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let start = |omega: f64, delta_ca: f64| {
        let peak = x
            .iter()
            .map(|&d| transmission(Detunings::from_pa_ca(d, delta_ca), omega, lw))
            .fold(0.0, f64::max);
        let amp = if peak > 0.0 { ymax / peak } else { 1.0 };
        vec![omega, delta_ca, amp.max(1e-6)]
    };

    let starts: Vec<Vec<f64>> = match outer_peak_pair(&y) {
        Some((i, j)) => {
            let omega = 0.5 * (x[j] - x[i]);
            vec![start(omega, 0.0)]
        }
        None => [0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|&o| start(o, 0.0))
            .collect(),
    };
    let mut best: Option<FitResult> = None;
    let mut last_err = None;
    for init in starts {
        match fit_least_squares(&model, &data, &init) {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.chi2 < b.chi2) {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| domain("no vacuum-Rabi fit succeeded")))
}

/// Fits A·exp(−(x−x0)²/w²) + B; parameters `amplitude, center, waist, offset`.
pub fn fit_gaussian_profile(data: &Dataset) -> Result<FitResult> {
    require_points(data.len(), 5, "a Gaussian profile fit")?;
    let model = ModelSpec::new(&["amplitude", "center", "waist", "offset"], |p, x| {
        p[0] * (-(x - p[1]).powi(2) / (p[2] * p[2])).exp() + p[3]
    });
    let (imax, &ymax) = argmax(&data.y);
    let ymin = data.y.iter().copied().fold(f64::INFINITY, f64::min);
    let half = ymin + 0.5 * (ymax - ymin);
    let above: Vec<f64> = data
        .x
        .iter()
        .zip(&data.y)
        .filter(|(_, &y)| y >= half)
        .map(|(&x, _)| x)
        .collect();
    let fwhm = above.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - above.iter().copied().fold(f64::INFINITY, f64::min);
    let span = data.x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - data.x.iter().copied().fold(f64::INFINITY, f64::min);
    let waist = if fwhm > 0.0 {
        0.5 * fwhm / 2f64.ln().sqrt()
    } else {
        0.1 * span
    };
    fit_least_squares(&model, data, &[ymax - ymin, data.x[imax], waist, ymin])
}

/// Fits A·exp(−t/τ) + B; parameters `amplitude, tau, offset`.
pub fn fit_exponential(data: &Dataset) -> Result<FitResult> {
    require_points(data.len(), 4, "an exponential fit")?;
    let model = ModelSpec::new(&["amplitude", "tau", "offset"], |p, t| {
        p[0] * (-t / p[1]).exp() + p[2]
    });
    let (t0, y0) = (data.x[0], data.y[0]);
    let offset = data
        .y
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .min(0.0);
    let target = offset + (y0 - offset) / std::f64::consts::E;
    let t_e = data
        .x
        .iter()
        .zip(&data.y)
        .find(|(_, &y)| y <= target)
        .map(|(&t, _)| t - t0)
        .filter(|dt| *dt > 0.0)
        .unwrap_or_else(|| data.x.last().copied().unwrap_or(1.0) - t0);
    let amp = (y0 - offset) * (t0 / t_e).exp();
    fit_least_squares(&model, data, &[amp, t_e.max(1e-12), offset])
}

/// Fits A·sin²(π f t + φ); parameters `amplitude, frequency, phase`.
///
/// The frequency is seeded from the strongest component of a periodogram.
pub fn fit_rabi(data: &Dataset) -> Result<FitResult> {
    require_points(data.len(), 8, "a Rabi fit")?;
    let model = ModelSpec::new(&["amplitude", "frequency", "phase"], |p, t| {
        p[0] * (PI * p[1] * t + p[2]).sin().powi(2)
    });
    let t_min = data.x.iter().copied().fold(f64::INFINITY, f64::min);
    let t_max = data.x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = t_max - t_min;
    if !(span > 0.0) {
        return Err(domain("Rabi data need a non-zero time span"));
    }
    let mean = data.y.iter().sum::<f64>() / data.len() as f64;
    let nyquist = 0.5 * (data.len() - 1) as f64 / span;
    let trials = 2000;
    let (mut best_f, mut best_power) = (1.0 / span, f64::NEG_INFINITY);
    for k in 1..=trials {
        let f = 0.5 / span + (nyquist - 0.5 / span) * k as f64 / trials as f64;
        let (mut c, mut s) = (0.0, 0.0);
        for (&t, &y) in data.x.iter().zip(&data.y) {
            let arg = 2.0 * PI * f * t;
            c += (y - mean) * arg.cos();
            s += (y - mean) * arg.sin();
        }
        let power = c * c + s * s;
        if power > best_power {
            best_power = power;
            best_f = f;
        }
    }
    // y − ȳ ≈ −(A/2)·cos(2πft + 2φ)
    let (mut c, mut s) = (0.0, 0.0);
    for (&t, &y) in data.x.iter().zip(&data.y) {
        let arg = 2.0 * PI * best_f * t;
        c += (y - mean) * arg.cos();
        s += (y - mean) * arg.sin();
    }
    let phase = 0.5 * s.atan2(-c);
    let amp = 2.0 * mean;
    let mut best: Option<FitResult> = None;
    for dphi in [0.0, 0.25 * PI, 0.5 * PI, 0.75 * PI] {
        if let Ok(fit) = fit_least_squares(&model, data, &[amp, best_f, phase + dphi]) {
            if best.as_ref().is_none_or(|b| fit.chi2 < b.chi2) {
                best = Some(fit);
            }
        }
    }
    let mut fit = best.ok_or_else(|| domain("no Rabi fit succeeded"))?;
    // sin² is invariant under A → A, f → −f, φ → −φ and φ → φ + π
    if fit.params[1] < 0.0 {
        fit.params[1] = -fit.params[1];
        fit.params[2] = -fit.params[2];
    }
    fit.params[2] = fit.params[2].rem_euclid(PI);
    Ok(fit)
}

/// Occupancy fraction and peak parameters from a count histogram.
#[derive(Debug, Clone, Serialize)]
pub struct BimodalFit {
    pub p_load: f64,
    pub detection: DetectionModel,
    pub fit: FitResult,
}

/// Fits a two-Gaussian mixture to histogram bins (`x` = bin centres, `y` =
/// counts). Parameters `p_load, mu0, sigma0, mu1, sigma1`; the total count and
/// bin width are fixed by the data.
pub fn fit_bimodal(histogram: &Dataset) -> Result<BimodalFit> {
    require_points(histogram.len(), 10, "a bimodal histogram fit")?;
    let x = &histogram.x;
    let y = &histogram.y;
    let width = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    let total: f64 = y.iter().sum();
    if !(total > 0.0 && width > 0.0) {
        return Err(domain(
            "histogram must have positive counts and increasing bins",
        ));
    }
    let norm = total * width / (2.0 * PI).sqrt();
    let model = ModelSpec::new(
        &["p_load", "mu0", "sigma0", "mu1", "sigma1"],
        move |p, x| {
            let g0 = (-(x - p[1]).powi(2) / (2.0 * p[2] * p[2])).exp() / p[2];
            let g1 = (-(x - p[3]).powi(2) / (2.0 * p[4] * p[4])).exp() / p[4];
            norm * ((1.0 - p[0]) * g0 + p[0] * g1)
        },
    )
    .with_bounds(&[
        (0.0, 1.0),
        (f64::NEG_INFINITY, f64::INFINITY),
        (1e-9, f64::INFINITY),
        (f64::NEG_INFINITY, f64::INFINITY),
        (1e-9, f64::INFINITY),
    ])?;

    let split = otsu_split(x, y);
    let moments = |range: std::ops::Range<usize>| {
        let w: f64 = y[range.clone()].iter().sum();
        let mu = range.clone().map(|i| x[i] * y[i]).sum::<f64>() / w;
        let var = range.map(|i| (x[i] - mu).powi(2) * y[i]).sum::<f64>() / w;
        (w, mu, var.sqrt().max(width))
    };
    let (w0, mu0, s0) = moments(0..split);
    let (w1, mu1, s1) = moments(split..x.len());
    let fit = fit_least_squares(&model, histogram, &[w1 / (w0 + w1), mu0, s0, mu1, s1])?;
    let p = &fit.params;
    let (p_load, mut det) = (
        p[0],
        DetectionModel {
            mu0: p[1],
            sigma0: p[2],
            mu1: p[3],
            sigma1: p[4],
            amp0: 1.0 - p[0],
            amp1: p[0],
            threshold: 0.5 * (p[1] + p[3]),
        },
    );
    if det.mu1 < det.mu0 {
        return Err(domain(
            "fitted single-atom peak lies below the background peak",
        ));
    }
    det.threshold = optimal_threshold(&det, p_load)?.0;
    Ok(BimodalFit {
        p_load,
        detection: det,
        fit,
    })
}

/// Split index maximising the between-class variance of a histogram.
fn otsu_split(x: &[f64], y: &[f64]) -> usize {
    let total: f64 = y.iter().sum();
    let sum_all: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let mut best = (1, f64::NEG_INFINITY);
    for k in 1..x.len() {
        w0 += y[k - 1];
        sum0 += x[k - 1] * y[k - 1];
        let w1 = total - w0;
        if w0 <= 0.0 || w1 <= 0.0 {
            continue;
        }
        let d = sum0 / w0 - (sum_all - sum0) / w1;
        let between = w0 * w1 * d * d;
        if between > best.1 {
            best = (k, between);
        }
    }
    best.0
}

/// Single-atom coupling from collective couplings Ω_N = g′√N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SqrtNFit {
    pub g_prime: f64,
    pub sigma: f64,
}

/// Closed-form least squares g′ = Σ(Ω_N√N)/ΣN.
pub fn fit_sqrt_n(points: &[(f64, f64)]) -> Result<SqrtNFit> {
    if points.is_empty() {
        return Err(domain("√N fit needs at least one point"));
    }
    if let Some((n, _)) = points.iter().find(|(n, _)| !(*n >= 1.0)) {
        return Err(domain(format!("atom number must be at least 1, got {n}")));
    }
    let sum_n: f64 = points.iter().map(|p| p.0).sum();
    let g = points.iter().map(|(n, o)| o * n.sqrt()).sum::<f64>() / sum_n;
    let sigma = if points.len() > 1 {
        let rss: f64 = points.iter().map(|(n, o)| (o - g * n.sqrt()).powi(2)).sum();
        (rss / (points.len() - 1) as f64 / sum_n).sqrt()
    } else {
        0.0
    };
    Ok(SqrtNFit { g_prime: g, sigma })
}

fn argmax(v: &[f64]) -> (usize, &f64) {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qed::{spectrum, uniform_grid};
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn noisy(y: &[f64], rel: f64, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, rel).unwrap();
        let scale = y.iter().copied().fold(0.0, f64::max);
        y.iter().map(|v| v + scale * n.sample(&mut rng)).collect()
    }

    fn synthetic_scan(omega: f64, delta_ca: f64, noise: f64, seed: u64) -> SpectrumScan {
        let p = CavityParams::default();
        let grid = uniform_grid(-15.0, 15.0, 0.1);
        let clean = spectrum(&grid, omega, delta_ca, p.linewidths()).unwrap();
        let y = noisy(&clean.transmissions(), noise, seed);
        SpectrumScan::new(
            grid.into_iter()
                .zip(y.into_iter().map(|v| v.max(0.0)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn vrs_recovers_single_atom_coupling() {
        let fit = fit_vrs(
            &synthetic_scan(2.76, 0.0, 0.01, 1),
            &CavityParams::default(),
        )
        .unwrap();
        let omega = fit.param("omega_eff").unwrap();
        assert!((omega - 2.76).abs() / 2.76 < 0.01, "{omega}");
        assert!(fit.converged);
    }

    #[test]
    fn vrs_handles_eight_atoms_with_detuning() {
        let truth = 2.74 * 8f64.sqrt();
        let fit = fit_vrs(
            &synthetic_scan(truth, -0.2, 0.01, 2),
            &CavityParams::default(),
        )
        .unwrap();
        let omega = fit.param("omega_eff").unwrap();
        assert!((omega - truth).abs() / truth < 0.01, "{omega}");
        assert!((fit.param("delta_ca").unwrap() + 0.2).abs() < 0.1);
    }

    #[test]
    fn vrs_noiseless_recovery_is_exact() {
        let fit = fit_vrs(
            &synthetic_scan(5.52 / 2.0, -0.3, 0.0, 0),
            &CavityParams::default(),
        )
        .unwrap();
        assert!((fit.params[0] - 2.76).abs() < 1e-6 * 2.76);
        assert!((fit.params[1] + 0.3).abs() < 1e-6);
        assert!((fit.params[2] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn vrs_single_peak_uses_multistart() {
        let scan = synthetic_scan(0.3, 0.0, 0.0, 0);
        assert!(outer_peak_pair(&scan.transmissions()).is_none());
        let fit = fit_vrs(&scan, &CavityParams::default()).unwrap();
        assert!((fit.params[0] - 0.3).abs() < 1e-4, "{:?}", fit.params);
    }

    #[test]
    fn peak_pair_ignores_small_wiggles() {
        let mut y: Vec<f64> = (0..200)
            .map(|i| {
                (-((i as f64 - 60.0) / 8.0).powi(2)).exp()
                    + (-((i as f64 - 140.0) / 8.0).powi(2)).exp()
            })
            .collect();
        y[5] += 0.05;
        y[195] += 0.05;
        let (a, b) = outer_peak_pair(&y).unwrap();
        assert!((a as i64 - 60).abs() <= 1 && (b as i64 - 140).abs() <= 1);
    }

    #[test]
    fn gaussian_waist_recovery() {
        let x: Vec<f64> = (0..41).map(|i| -120.0 + 6.0 * i as f64).collect();
        let clean: Vec<f64> = x
            .iter()
            .map(|v| 2.7 * (-(v - 3.0) * (v - 3.0) / (46.0 * 46.0)).exp() + 0.1)
            .collect();
        let fit = fit_gaussian_profile(&Dataset::new(x, noisy(&clean, 0.03, 5))).unwrap();
        let w = fit.param("waist").unwrap().abs();
        assert!((w - 46.0).abs() < 2.0, "{w}");
    }

    #[test]
    fn exponential_lifetime_recovery() {
        let t: Vec<f64> = (0..30).map(|i| i as f64 * 0.5).collect();
        let clean: Vec<f64> = t.iter().map(|v| 0.95 * (-v / 4.8).exp()).collect();
        let fit = fit_exponential(&Dataset::new(t, noisy(&clean, 0.01, 6))).unwrap();
        let tau = fit.param("tau").unwrap();
        assert!((tau - 4.8).abs() / 4.8 < 0.02, "{tau}");
    }

    #[test]
    fn rabi_amplitude_recovery() {
        let t: Vec<f64> = (0..60).map(|i| i as f64 * 2.0).collect();
        let clean: Vec<f64> = t
            .iter()
            .map(|v| 0.912 * (PI * 0.0123 * v + 0.1).sin().powi(2))
            .collect();
        let fit = fit_rabi(&Dataset::new(t, noisy(&clean, 0.01, 7))).unwrap();
        let a = fit.param("amplitude").unwrap();
        assert!((a - 0.912).abs() / 0.912 < 0.01, "{a}");
        assert!((fit.param("frequency").unwrap() - 0.0123).abs() < 2e-4);
    }

    #[test]
    fn bimodal_recovers_loading_fraction() {
        let truth = DetectionModel::default();
        let x: Vec<f64> = (0..80).map(|i| 100.0 + 15.0 * i as f64).collect();
        let total = 5000.0;
        let clean: Vec<f64> = x
            .iter()
            .map(|&c| {
                let g = |mu: f64, s: f64| {
                    (-(c - mu).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt())
                };
                total
                    * 15.0
                    * (0.43 * g(truth.mu0, truth.sigma0) + 0.57 * g(truth.mu1, truth.sigma1))
            })
            .collect();
        let fit = fit_bimodal(&Dataset::new(x, noisy(&clean, 0.02, 8))).unwrap();
        assert!((fit.p_load - 0.57).abs() / 0.57 < 0.02, "{}", fit.p_load);
        assert!(
            fit.detection.threshold > fit.detection.mu0
                && fit.detection.threshold < fit.detection.mu1
        );
    }

    #[test]
    fn minimum_point_counts() {
        let d = |n: usize| Dataset::new((0..n).map(|i| i as f64).collect(), vec![1.0; n]);
        assert!(fit_gaussian_profile(&d(4)).is_err());
        assert!(fit_exponential(&d(3)).is_err());
        assert!(fit_rabi(&d(7)).is_err());
        assert!(fit_bimodal(&d(9)).is_err());
    }

    #[test]
    fn sqrt_n_examples() {
        let exact: Vec<(f64, f64)> = (1..=8)
            .map(|n| (n as f64, 2.74 * (n as f64).sqrt()))
            .collect();
        assert!((fit_sqrt_n(&exact).unwrap().g_prime - 2.74).abs() < 1e-12);
        assert!((fit_sqrt_n(&[(4.0, 5.48)]).unwrap().g_prime - 2.74).abs() < 1e-12);
        let wobble = [1.02, 0.98, 1.01, 0.99, 1.02, 0.98, 1.0, 1.01];
        let pts: Vec<(f64, f64)> = (1..=8)
            .zip(wobble)
            .map(|(n, w)| (n as f64, 2.74 * w * (n as f64).sqrt()))
            .collect();
        assert!((fit_sqrt_n(&pts).unwrap().g_prime - 2.74).abs() < 0.03);
        assert!(fit_sqrt_n(&[]).is_err());
        assert!(fit_sqrt_n(&[(0.0, 1.0)]).is_err());
    }

    #[test]
    fn sqrt_n_closed_form_matches_engine() {
        let wobble = [1.02, 0.98, 1.01, 0.99, 1.02, 0.98, 1.0, 1.01];
        let pts: Vec<(f64, f64)> = (1..=8)
            .zip(wobble)
            .map(|(n, w)| (n as f64, 2.74 * w * (n as f64).sqrt()))
            .collect();
        let closed = fit_sqrt_n(&pts).unwrap().g_prime;
        let m = ModelSpec::new(&["g"], |p, n| p[0] * n.sqrt());
        let data = Dataset::new(
            pts.iter().map(|p| p.0).collect(),
            pts.iter().map(|p| p.1).collect(),
        );
        let engine = fit_least_squares(&m, &data, &[2.0]).unwrap();
        assert!((engine.params[0] - closed).abs() < 1e-8);
    }
}
