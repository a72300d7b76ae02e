//! Small statistical helpers used by the Monte Carlo checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::error::{domain, Result};

/// Upper tail P(X > x) of the standard normal distribution.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Lower tail P(X ≤ x) of the standard normal distribution.
pub fn normal_cdf(x: f64) -> f64 {
    normal_sf(-x)
}

/// Outcome of a Pearson chi-square goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness of fit of observed counts against model probabilities.
///
/// Adjacent categories are pooled from the tails inward until every pooled
/// expectation reaches `min_expected`.
pub fn chi_square_gof(
    observed: &[u64],
    probabilities: &[f64],
    min_expected: f64,
) -> Result<ChiSquareTest> {
    if observed.len() != probabilities.len() || observed.is_empty() {
        return Err(domain(
            "observed counts and probabilities must have equal, non-zero length",
        ));
    }
    let total: u64 = observed.iter().sum();
    let total = total as f64;
    let mut cells: Vec<(f64, f64)> = observed
        .iter()
        .zip(probabilities)
        .map(|(&o, &p)| (o as f64, p * total))
        .collect();
    pool_tail(&mut cells, min_expected);
    cells.reverse();
    pool_tail(&mut cells, min_expected);
    if cells.len() < 2 {
        return Err(domain("fewer than two categories after pooling"));
    }
    let statistic = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| domain(e.to_string()))?;
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value: dist.sf(statistic),
    })
}

fn pool_tail(cells: &mut Vec<(f64, f64)>, min_expected: f64) {
    while cells.len() > 1 && cells[0].1 < min_expected {
        let (o, e) = cells.remove(0);
        cells[0].0 += o;
        cells[0].1 += e;
    }
}

/// Kolmogorov-Smirnov p-value for samples against the uniform distribution on [0, 1].
pub fn ks_uniform_pvalue(samples: &[f64]) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = x - i as f64 / n;
            let hi = (i as f64 + 1.0) / n - x;
            lo.max(hi)
        })
        .fold(0.0, f64::max);
    kolmogorov_sf((n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d)
}

fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Binomial(n, p) probability mass function for k = 0..=n.
pub fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut ln_choose = 0.0;
    for k in 0..=n {
        if k > 0 {
            ln_choose += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        let v = if p == 0.0 {
            if k == 0 {
                1.0
            } else {
                0.0
            }
        } else if p == 1.0 {
            if k == n {
                1.0
            } else {
                0.0
            }
        } else {
            (ln_choose + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
        };
        out.push(v);
    }
    out
}
