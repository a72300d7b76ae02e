//! One-dimensional search helpers.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section maximisation of a unimodal function on `[lo, hi]`.
/// Returns the abscissa and value of the maximum.
pub fn golden_section_max(
    f: &dyn Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    xtol: f64,
) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > xtol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (lo + hi);
    let fx = f(x);
    // the midpoint can lose to an interior probe by rounding
    [(x, fx), (x1, f1), (x2, f2)]
        .into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

/// Bisection root of `f` on `[lo, hi]`; `f(lo)` and `f(hi)` must differ in sign.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, xtol: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        if hi - lo <= xtol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_vertex() {
        let (x, y) = golden_section_max(&|x| -(x - 0.3) * (x - 0.3) + 2.0, -1.0, 4.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-6);
        assert!((y - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bisects_sqrt_two() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-15);
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
    }
}
