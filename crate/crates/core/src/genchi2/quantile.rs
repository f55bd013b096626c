use crate::error::{Error, Result};

/// Default quantile tolerance on the CDF value.
pub const QUANTILE_TOL: f64 = 1e-6;

const MAX_DOUBLINGS: usize = 60;
const MAX_ITERATIONS: usize = 200;

/// Finds `x` with `|cdf(x) − p| ≤ tol` for a nondecreasing `cdf`.
///
/// The bracket starts at `[support_min, mean + 10 sd]`; the upper end is
/// pushed out by doubling its distance from the lower end until the CDF
/// exceeds `p`. When the support is unbounded below the lower end is found
/// the same way. Refinement is Illinois-modified regula falsi, falling back
/// to bisection whenever the secant step stalls.
pub fn quantile_by_root<F>(mut cdf: F, p: f64, tol: f64, support_min: f64, mean: f64, sd: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("probability {p} outside (0, 1)")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("quantile tolerance must be positive"));
    }
    let scale = if sd > 0.0 { sd } else { 1.0 };
    let failure = |achieved| Error::NumericalFailure { method: "quantile bracketing", achieved };

    let mut lo = if support_min.is_finite() { support_min } else { mean - 10.0 * scale };
    let mut f_lo = cdf(lo)? - p;
    let mut step = 10.0 * scale;
    let mut n = 0;
    while f_lo > 0.0 {
        if support_min.is_finite() || n == MAX_DOUBLINGS {
            return Err(failure(f_lo));
        }
        step *= 2.0;
        lo = mean - step;
        f_lo = cdf(lo)? - p;
        n += 1;
    }
    if f_lo.abs() <= tol {
        return Ok(lo);
    }
    let mut hi = (mean + 10.0 * scale).max(lo + scale);
    let mut f_hi = cdf(hi)? - p;
    let mut n = 0;
    while f_hi < 0.0 {
        if n == MAX_DOUBLINGS {
            return Err(failure(f_hi));
        }
        hi = lo + 2.0 * (hi - lo);
        f_hi = cdf(hi)? - p;
        n += 1;
    }

    let target = 0.5 * tol;
    let mut side = 0i8;
    for it in 0..MAX_ITERATIONS {
        if f_hi.abs() <= target {
            return Ok(hi);
        }
        if f_lo.abs() <= target {
            return Ok(lo);
        }
        let width = hi - lo;
        let mut x = if it % 4 == 3 { 0.5 * (lo + hi) } else { hi - f_hi * width / (f_hi - f_lo) };
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let fx = cdf(x)? - p;
        if fx.abs() <= target {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
            f_lo = fx;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            f_hi = fx;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
        if (hi - lo) <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(1e-300) {
            // CDF jumps across a representable gap; both ends are as good as it gets
            let f_mid = cdf(0.5 * (lo + hi))? - p;
            if f_mid.abs() <= tol {
                return Ok(0.5 * (lo + hi));
            }
            return Err(failure(f_mid.abs()));
        }
    }
    Err(failure(f_lo.abs().min(f_hi.abs())))
}
