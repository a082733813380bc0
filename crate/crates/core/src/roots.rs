use crate::error::{Error, Result};

const MAX_HALVINGS: usize = 200;

/// Bisection for a root of a monotone `g` on `[lo, hi]`, to absolute
/// tolerance `tol` on the argument.
///
/// An endpoint whose value is zero up to rounding (relative to the larger of
/// the two endpoint values) is returned as the root.
pub(crate) fn bisect<G>(g: G, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    G: Fn(f64) -> Result<f64>,
{
    let (mut lo, mut hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let g_lo = g(lo)?;
    let g_hi = g(hi)?;
    if !(g_lo.is_finite() && g_hi.is_finite()) {
        return Err(Error::NonFinite(format!("g({lo}) = {g_lo}, g({hi}) = {g_hi}")));
    }
    let zero = 1e-13 * g_lo.abs().max(g_hi.abs()).max(1.0);
    if g_lo.abs() <= zero {
        return Ok(lo);
    }
    if g_hi.abs() <= zero {
        return Ok(hi);
    }
    if g_lo.signum() == g_hi.signum() {
        return Err(Error::NotBracketed { lo, hi, g_lo, g_hi });
    }
    let lo_negative = g_lo < 0.0;
    for _ in 0..MAX_HALVINGS {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let g_mid = g(mid)?;
        if g_mid == 0.0 {
            return Ok(mid);
        }
        if (g_mid < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
