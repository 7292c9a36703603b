//! Shared scalar numerics: bracketed bisection, golden-section minimization,
//! and clamped piecewise-linear interpolation.

/// Bisect a continuous function to a root inside `[lo, hi]`.
///
/// The bracket must satisfy `f(lo) * f(hi) <= 0`. Returns the midpoint of the
/// final bracket once its width falls below `xtol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, xtol: f64) -> f64 {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return lo;
    }
    if fhi == 0.0 {
        return hi;
    }
    debug_assert!(
        flo * fhi <= 0.0,
        "bisect: bracket does not straddle a root (f({lo})={flo}, f({hi})={fhi})"
    );
    while hi - lo > xtol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // bracket at floating-point resolution
        }
        let fmid = f(mid);
        if fmid == 0.0 {
            return mid;
        }
        if flo * fmid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fmid;
        }
    }
    0.5 * (lo + hi)
}

/// Golden-section search for a local minimum of `f` on `[lo, hi]`.
///
/// Returns `(argmin, min)`. Exact for unimodal `f`; for general continuous
/// functions it refines whatever basin the bracket isolates.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, xtol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > xtol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let xm = 0.5 * (lo + hi);
    (xm, f(xm))
}

/// Evaluate a piecewise-linear function given by `knots` (strictly increasing
/// abscissae) at `x`, clamping outside the knot range.
pub fn pwl_eval(knots: &[(f64, f64)], x: f64) -> f64 {
    debug_assert!(!knots.is_empty());
    if x <= knots[0].0 {
        return knots[0].1;
    }
    if x >= knots[knots.len() - 1].0 {
        return knots[knots.len() - 1].1;
    }
    // binary search for the bracketing segment
    let mut lo = 0;
    let mut hi = knots.len() - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if knots[mid].0 <= x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (x0, y0) = knots[lo];
    let (x1, y1) = knots[hi];
    if x1 == x0 {
        return 0.5 * (y0 + y1);
    }
    y0 + (x - x0) * (y1 - y0) / (x1 - x0)
}

/// Format with nine significant digits for console reports.
pub fn sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.9}");
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (8 - mag).clamp(0, 17) as usize;
    format!("{x:.decimals$}")
}
