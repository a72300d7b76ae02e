use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::rng::{substream, DETECTION_STREAM};
use crate::error::{domain, Result};
use crate::stats::{normal_cdf, normal_sf};

/// Two-Gaussian model of fluorescence counts for empty and occupied tweezers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionModel {
    pub mu0: f64,
    pub sigma0: f64,
    pub mu1: f64,
    pub sigma1: f64,
    /// Histogram weight of the background peak.
    pub amp0: f64,
    /// Histogram weight of the single-atom peak.
    pub amp1: f64,
    pub threshold: f64,
}

impl Default for DetectionModel {
    /// Peaks separated by 9.3 single-atom widths with σ0/σ1 chosen so the
    /// optimal-threshold read error at equal priors is 8.9×10⁻⁷.
    fn default() -> Self {
        let mut m = Self {
            mu0: 400.0,
            sigma0: 56.813_559,
            mu1: 958.0,
            sigma1: 60.0,
            amp0: 0.43,
            amp1: 0.57,
            threshold: 0.0,
        };
        m.threshold = optimal_threshold(&m, 0.5).map(|t| t.0).unwrap_or(679.0);
        m
    }
}

impl DetectionModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0 > 0.0 && self.sigma1 > 0.0) {
            return Err(domain("detection peak widths must be positive"));
        }
        if !(self.mu1 >= self.mu0) {
            return Err(domain(
                "single-atom peak must lie above the background peak",
            ));
        }
        Ok(())
    }

    /// Fraction of histogram weight in the single-atom peak.
    pub fn occupied_fraction(&self) -> f64 {
        self.amp1 / (self.amp0 + self.amp1)
    }

    /// Peak separation in units of the wider peak's width.
    pub fn separation(&self) -> f64 {
        (self.mu1 - self.mu0) / self.sigma0.max(self.sigma1)
    }
}

/// One camera read of a tweezer; `read` indexes independent reads under `seed`.
pub fn simulate_counts(occupied: bool, d: &DetectionModel, seed: u64, read: u64) -> f64 {
    let (mu, sigma) = if occupied {
        (d.mu1, d.sigma1)
    } else {
        (d.mu0, d.sigma0)
    };
    let normal = Normal::new(mu, sigma).expect("validated widths");
    normal.sample(&mut substream(seed, DETECTION_STREAM, read))
}

pub fn classify(counts: f64, d: &DetectionModel) -> bool {
    counts > d.threshold
}

/// Prior-weighted probability of misreading a tweezer with threshold `threshold`.
pub fn misclassification_rate(d: &DetectionModel, threshold: f64, prior: f64) -> f64 {
    let false_positive = if threshold == f64::INFINITY {
        0.0
    } else {
        normal_sf((threshold - d.mu0) / d.sigma0)
    };
    let false_negative = if threshold == f64::NEG_INFINITY {
        0.0
    } else {
        normal_cdf((threshold - d.mu1) / d.sigma1)
    };
    (1.0 - prior) * false_positive + prior * false_negative
}

/// Threshold minimising the prior-weighted misclassification and the error it achieves.
///
/// The optimum is where the weighted densities cross, a quadratic in the
/// threshold; the root between the two peaks is taken when there is one.
pub fn optimal_threshold(d: &DetectionModel, prior: f64) -> Result<(f64, f64)> {
    d.validate()?;
    if !(0.0..=1.0).contains(&prior) {
        return Err(domain(format!("prior {prior} outside [0, 1]")));
    }
    if prior == 0.0 {
        return Ok((f64::INFINITY, 0.0));
    }
    if prior == 1.0 {
        return Ok((f64::NEG_INFINITY, 0.0));
    }
    let (m0, s0, m1, s1) = (d.mu0, d.sigma0, d.mu1, d.sigma1);
    let a = 0.5 / (s1 * s1) - 0.5 / (s0 * s0);
    let b = m0 / (s0 * s0) - m1 / (s1 * s1);
    let c = 0.5 * m1 * m1 / (s1 * s1) - 0.5 * m0 * m0 / (s0 * s0)
        + ((1.0 - prior) * s1 / (prior * s0)).ln();
    let candidates: Vec<f64> = if a.abs() < 1e-12 / (s0 * s0) {
        if b == 0.0 {
            // identical peaks: any threshold in between gives the prior's minority error
            vec![0.5 * (m0 + m1)]
        } else {
            vec![-c / b]
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            Vec::new()
        } else {
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            vec![q / a, c / q]
        }
    };
    let mut best: Option<(f64, f64)> = None;
    for t in candidates.into_iter().filter(|t| t.is_finite()) {
        let e = misclassification_rate(d, t, prior);
        let between = t >= m0 && t <= m1;
        let better = match best {
            None => true,
            Some((bt, be)) => {
                let best_between = bt >= m0 && bt <= m1;
                (between && !best_between) || (between == best_between && e < be)
            }
        };
        if better {
            best = Some((t, e));
        }
    }
    // no crossing: one weighted density dominates everywhere
    let edge = [f64::NEG_INFINITY, f64::INFINITY]
        .into_iter()
        .map(|t| (t, misclassification_rate(d, t, prior)))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap();
    Ok(match best {
        Some(b) if b.1 <= edge.1 => b,
        _ => edge,
    })
}
