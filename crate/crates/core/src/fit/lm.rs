use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{domain, Error, Result};

type ModelFn<'a> = Box<dyn Fn(&[f64], f64) -> f64 + Send + Sync + 'a>;

/// A parametric curve `y = f(x; p)` with named, optionally bounded parameters.
pub struct ModelSpec<'a> {
    pub names: Vec<String>,
    pub bounds: Vec<(f64, f64)>,
    model: ModelFn<'a>,
}

impl<'a> ModelSpec<'a> {
    pub fn new(names: &[&str], model: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'a) -> Self {
        Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); names.len()],
            model: Box::new(model),
        }
    }

    pub fn with_bounds(mut self, bounds: &[(f64, f64)]) -> Result<Self> {
        if bounds.len() != self.names.len() {
            return Err(domain("one bound pair per parameter is required"));
        }
        if let Some((lo, hi)) = bounds.iter().find(|(lo, hi)| !(lo <= hi)) {
            return Err(domain(format!("bounds ({lo}, {hi}) are not ordered")));
        }
        self.bounds = bounds.to_vec();
        Ok(self)
    }

    pub fn eval(&self, params: &[f64], x: f64) -> f64 {
        (self.model)(params, x)
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    fn clamp(&self, p: &mut [f64]) {
        for (v, (lo, hi)) in p.iter_mut().zip(&self.bounds) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

/// Abscissae, ordinates and optional 1σ ordinate errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y, sigma: None }
    }

    pub fn with_sigma(mut self, sigma: Vec<f64>) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() {
            return Err(domain("x and y lengths differ"));
        }
        if self.x.iter().chain(&self.y).any(|v| !v.is_finite()) {
            return Err(domain("data contain non-finite values"));
        }
        if let Some(s) = &self.sigma {
            if s.len() != self.x.len() {
                return Err(domain("sigma length differs from data length"));
            }
            if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(domain("sigma values must be positive"));
            }
        }
        Ok(())
    }

    fn weight(&self, i: usize) -> f64 {
        self.sigma.as_ref().map_or(1.0, |s| 1.0 / s[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Cosine between residual and Jacobian columns at which iteration stops.
    pub gtol: f64,
    /// Relative χ² reduction below which an accepted step ends iteration.
    pub ftol: f64,
    /// Relative parameter step below which iteration ends.
    pub xtol: f64,
    /// Gradient cosine a result must reach to be reported as converged.
    pub converged_gtol: f64,
    pub initial_lambda: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            gtol: 1e-12,
            ftol: 1e-15,
            xtol: 1e-13,
            converged_gtol: 1e-6,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    /// 1σ errors from the covariance scaled by the reduced χ².
    pub sigmas: Vec<f64>,
    pub chi2: f64,
    pub dof: usize,
    pub converged: bool,
    pub n_iter: usize,
    /// χ² after every accepted step, starting with the initial guess.
    pub trace: Vec<f64>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.params[i])
    }

    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.sigmas[i])
    }

    pub fn reduced_chi2(&self) -> f64 {
        if self.dof > 0 {
            self.chi2 / self.dof as f64
        } else {
            f64::NAN
        }
    }
}

pub fn fit_least_squares(m: &ModelSpec, data: &Dataset, init: &[f64]) -> Result<FitResult> {
    fit_least_squares_with(m, data, init, &FitOptions::default())
}

/// Central-difference Jacobian ∂f(x_i; p)/∂p_j with steps `step_scale·max(|p_j|, 1e-3)`.
pub fn numeric_jacobian(m: &ModelSpec, params: &[f64], x: &[f64], step_scale: f64) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(x.len(), params.len());
    let mut p = params.to_vec();
    for j in 0..params.len() {
        let h = step_scale * params[j].abs().max(1e-3);
        p[j] = params[j] + h;
        let up: Vec<f64> = x.iter().map(|&xi| m.eval(&p, xi)).collect();
        p[j] = params[j] - h;
        for (i, &xi) in x.iter().enumerate() {
            jac[(i, j)] = (up[i] - m.eval(&p, xi)) / (2.0 * h);
        }
        p[j] = params[j];
    }
    jac
}

const JACOBIAN_STEP: f64 = 6.055_454_452_393_343e-6; // ε^(1/3)

fn residuals(m: &ModelSpec, data: &Dataset, p: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        data.len(),
        (0..data.len()).map(|i| (data.y[i] - m.eval(p, data.x[i])) * data.weight(i)),
    )
}

fn weighted_jacobian(m: &ModelSpec, data: &Dataset, p: &[f64]) -> DMatrix<f64> {
    let mut jac = numeric_jacobian(m, p, &data.x, JACOBIAN_STEP);
    for i in 0..data.len() {
        let w = data.weight(i);
        jac.row_mut(i).scale_mut(w);
    }
    jac
}

/// Largest cosine between the residual and a Jacobian column, ignoring
/// parameters pinned at a bound by a gradient that points outward.
fn gradient_cosine(m: &ModelSpec, p: &[f64], jac: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
    let rnorm = r.norm();
    if rnorm == 0.0 {
        return 0.0;
    }
    let g = jac.transpose() * r;
    (0..p.len())
        .map(|j| {
            let (lo, hi) = m.bounds[j];
            if (p[j] <= lo && g[j] < 0.0) || (p[j] >= hi && g[j] > 0.0) {
                return 0.0;
            }
            let cn = jac.column(j).norm();
            if cn == 0.0 {
                0.0
            } else {
                g[j].abs() / (cn * rnorm)
            }
        })
        .fold(0.0, f64::max)
}

/// Levenberg-Marquardt minimisation of Σ((y − f(x; p))/σ)² with Marquardt
/// diagonal scaling and a numeric central-difference Jacobian.
pub fn fit_least_squares_with(
    m: &ModelSpec,
    data: &Dataset,
    init: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    data.validate()?;
    let n = m.n_params();
    if n == 0 {
        return Err(domain("model has no parameters"));
    }
    if init.len() != n {
        return Err(domain(format!(
            "{} initial values for {n} parameters",
            init.len()
        )));
    }
    if data.len() < n {
        return Err(domain(format!(
            "{} data points cannot determine {n} parameters",
            data.len()
        )));
    }
    let mut p = init.to_vec();
    m.clamp(&mut p);
    let mut r = residuals(m, data, &p);
    let mut chi2 = r.norm_squared();
    if !chi2.is_finite() {
        return Err(domain("model is not finite at the initial guess"));
    }
    // residuals at rounding level of the data count as an exact fit
    let exact = 1e-26
        * (0..data.len())
            .map(|i| (data.y[i] * data.weight(i)).powi(2))
            .sum::<f64>();
    let mut trace = vec![chi2];
    let mut lambda = opts.initial_lambda;
    let mut n_iter = 0;
    let mut finished = false;

    let mut jac = weighted_jacobian(m, data, &p);
    if let Some(j) = (0..n).find(|&j| jac.column(j).iter().all(|v| *v == 0.0)) {
        return Err(Error::DegenerateFit(format!(
            "parameter '{}' has no effect on the model at the initial guess",
            m.names[j]
        )));
    }

    while n_iter < opts.max_iter {
        if chi2 <= exact || gradient_cosine(m, &p, &jac, &r) <= opts.gtol {
            finished = true;
            break;
        }
        n_iter += 1;
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * &r;
        let diag_floor = jtj.diagonal().max() * 1e-15;
        let mut accepted = false;
        while lambda < 1e16 {
            let mut lhs = jtj.clone();
            for j in 0..n {
                lhs[(j, j)] += lambda * jtj[(j, j)].max(diag_floor);
            }
            let Some(step) = lhs.lu().solve(&g) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            m.clamp(&mut trial);
            let r_new = residuals(m, data, &trial);
            let chi2_new = r_new.norm_squared();
            if chi2_new.is_finite() && chi2_new < chi2 {
                let moved = p
                    .iter()
                    .zip(&trial)
                    .map(|(a, b)| (a - b).abs() / (a.abs() + opts.xtol))
                    .fold(0.0, f64::max);
                let reduction = (chi2 - chi2_new) / chi2;
                p = trial;
                r = r_new;
                chi2 = chi2_new;
                trace.push(chi2);
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                if reduction <= opts.ftol || moved <= opts.xtol {
                    finished = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        jac = weighted_jacobian(m, data, &p);
        if !accepted || finished {
            // no downhill step exists at machine precision
            finished = true;
            break;
        }
    }

    let converged =
        finished && (chi2 <= exact || gradient_cosine(m, &p, &jac, &r) <= opts.converged_gtol);
    let dof = data.len() - n;
    let jtj = jac.transpose() * &jac;
    let cov = jtj.clone().try_inverse().ok_or_else(|| {
        Error::DegenerateFit("normal equations are singular at the optimum".to_string())
    })?;
    let scale = if dof > 0 { chi2 / dof as f64 } else { 1.0 };
    let sigmas = (0..n)
        .map(|j| (cov[(j, j)] * scale).max(0.0).sqrt())
        .collect();
    Ok(FitResult {
        names: m.names.clone(),
        params: p,
        sigmas,
        chi2,
        dof,
        converged,
        n_iter,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn exp_model() -> ModelSpec<'static> {
        ModelSpec::new(&["a", "tau", "b"], |p, t| p[0] * (-t / p[1]).exp() + p[2])
    }

    #[test]
    fn recovers_noiseless_parameters() {
        let truth = [2.0, 4.8, 0.1];
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.5).collect();
        let m = exp_model();
        let y = x.iter().map(|&t| m.eval(&truth, t)).collect();
        let fit = fit_least_squares(&m, &Dataset::new(x, y), &[2.3, 4.0, 0.12]).unwrap();
        assert!(fit.converged, "{fit:?}");
        for (p, t) in fit.params.iter().zip(truth) {
            assert!((p - t).abs() / t < 1e-6, "{p} vs {t}");
        }
        assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn linear_model_matches_closed_form() {
        let x: Vec<f64> = (1..=20).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| 1.7 * v + 0.05 * ((i * 7 % 5) as f64 - 2.0))
            .collect();
        let closed = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>()
            / x.iter().map(|a| a * a).sum::<f64>();
        let m = ModelSpec::new(&["a"], |p, x| p[0] * x);
        let fit = fit_least_squares(&m, &Dataset::new(x, y), &[1.0]).unwrap();
        assert!((fit.params[0] - closed).abs() < 1e-10);
    }

    #[test]
    fn coverage_of_one_sigma_intervals() {
        let truth = [2.0, 4.8, 0.1];
        let x: Vec<f64> = (0..30).map(|i| i as f64 * 0.5).collect();
        let m = exp_model();
        let noise = Normal::new(0.0, 0.02).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let mut inside = 0;
        for _ in 0..200 {
            let y = x
                .iter()
                .map(|&t| m.eval(&truth, t) + noise.sample(&mut rng))
                .collect();
            let fit = fit_least_squares(&m, &Dataset::new(x.clone(), y), &[2.2, 4.0, 0.0]).unwrap();
            if (fit.params[1] - truth[1]).abs() <= fit.sigmas[1] {
                inside += 1;
            }
        }
        let frac = inside as f64 / 200.0;
        assert!((0.60..=0.76).contains(&frac), "coverage {frac}");
    }

    #[test]
    fn sigma_scaling_leaves_argmin_unchanged() {
        let x: Vec<f64> = (0..25).map(|i| i as f64 * 0.4).collect();
        let m = exp_model();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &t)| m.eval(&[1.5, 3.0, 0.2], t) + 0.01 * (((i * 13) % 7) as f64 - 3.0))
            .collect();
        let s: Vec<f64> = (0..25).map(|i| 0.01 + 0.001 * i as f64).collect();
        let base = fit_least_squares(
            &m,
            &Dataset::new(x.clone(), y.clone()).with_sigma(s.clone()),
            &[1.0, 2.0, 0.0],
        )
        .unwrap();
        let c = 7.5;
        let ys = y.iter().map(|v| v * c).collect();
        let ss = s.iter().map(|v| v * c).collect();
        let scaled =
            fit_least_squares(&m, &Dataset::new(x, ys).with_sigma(ss), &[c, 2.0, 0.0]).unwrap();
        assert!((scaled.params[1] - base.params[1]).abs() / base.params[1] < 1e-10);
        assert!((scaled.params[0] / c - base.params[0]).abs() / base.params[0] < 1e-10);
        assert!((scaled.chi2 - base.chi2).abs() / base.chi2 < 1e-8);
    }

    #[test]
    fn jacobian_is_stable_under_step_refinement() {
        let m = ModelSpec::new(&["a", "w", "x0"], |p, x| {
            p[0] * (-(x - p[2]).powi(2) / (p[1] * p[1])).exp()
        });
        let x: Vec<f64> = (0..50).map(|i| -100.0 + 4.0 * i as f64).collect();
        let p = [3.0, 46.0, 2.0];
        let coarse = numeric_jacobian(&m, &p, &x, JACOBIAN_STEP);
        let fine = numeric_jacobian(&m, &p, &x, JACOBIAN_STEP / 4.0);
        let scale = fine.amax();
        assert!((coarse - fine).amax() / scale < 1e-5);
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let m = ModelSpec::new(&["a", "unused"], |p, x| p[0] * x);
        let d = Dataset::new(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            fit_least_squares(&m, &d, &[1.0, 1.0]),
            Err(Error::DegenerateFit(_))
        ));
        let m = exp_model();
        assert!(
            fit_least_squares(&m, &Dataset::new(vec![1.0], vec![1.0]), &[1.0, 1.0, 0.0]).is_err()
        );
        assert!(fit_least_squares(
            &m,
            &Dataset::new(vec![1.0, 2.0, f64::NAN], vec![1.0; 3]),
            &[1.0, 1.0, 0.0]
        )
        .is_err());
        assert!(m
            .with_bounds(&[(1.0, 0.0), (0.0, 1.0), (0.0, 1.0)])
            .is_err());
    }

    #[test]
    fn iteration_cap_returns_best_so_far() {
        let truth = [2.0, 4.8, 0.1];
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.5).collect();
        let m = exp_model();
        let y = x.iter().map(|&t| m.eval(&truth, t)).collect();
        let opts = FitOptions {
            max_iter: 2,
            ..FitOptions::default()
        };
        let fit = fit_least_squares_with(&m, &Dataset::new(x, y), &[1.0, 1.0, 1.0], &opts).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.n_iter, 2);
        assert!(fit.chi2 < fit.trace[0]);
    }

    #[test]
    fn bounds_are_respected() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| -0.5 * v).collect();
        let m = ModelSpec::new(&["a"], |p, x| p[0] * x)
            .with_bounds(&[(0.0, 10.0)])
            .unwrap();
        let fit = fit_least_squares(&m, &Dataset::new(x, y), &[1.0]).unwrap();
        assert_eq!(fit.params[0], 0.0);
        assert!(fit.converged);
    }
}
