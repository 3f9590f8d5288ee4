//! Scalar special functions and one-dimensional maximization.
//!
//! Everything here is a pure function of its arguments and safe for
//! unrestricted concurrent use.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Width of the band around [0, 1] inside which probability inputs are
/// clamped rather than rejected.
pub const PROB_CLAMP_BAND: f64 = 1e-12;

/// A probability in [0, 1].
///
/// Construction rejects values outside `[-1e-12, 1 + 1e-12]`; values inside
/// that band are clamped onto the unit interval, which absorbs floating-point
/// dust from upstream arithmetic.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const ONE: Probability = Probability(1.0);
    pub const HALF: Probability = Probability(0.5);

    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value < -PROB_CLAMP_BAND || value > 1.0 + PROB_CLAMP_BAND {
            return Err(Error::OutOfRange {
                name: "probability",
                value,
                expected: "[0, 1]",
            });
        }
        Ok(Self(value.clamp(0.0, 1.0)))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// Complement `1 - p`.
    #[inline]
    pub fn complement(self) -> Probability {
        Probability(1.0 - self.0)
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// A finite interval with `lo < hi`, used to bracket scalar searches.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BracketedInterval {
    lo: f64,
    hi: f64,
}

impl BracketedInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || !(lo < hi) {
            return Err(Error::OutOfRange {
                name: "interval",
                value: hi - lo,
                expected: "finite lo < hi",
            });
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    pub fn hi(self) -> f64 {
        self.hi
    }
}

#[inline]
fn neg_x_log2_x(x: f64) -> f64 {
    // 0 log 0 := 0, the usual entropy convention.
    if x <= 0.0 {
        0.0
    } else {
        -x * x.log2()
    }
}

/// Binary entropy h(x) = -x log2 x - (1-x) log2 (1-x) in bits.
///
/// The two branches are evaluated from `x` and `1 - x` symmetrically, so
/// `h(x)` and `h(1 - x)` agree bitwise whenever `1 - (1 - x)` round-trips.
pub fn binary_entropy(x: Probability) -> f64 {
    let v = x.value();
    neg_x_log2_x(v) + neg_x_log2_x(1.0 - v)
}

/// Shannon entropy of a four-outcome distribution, in bits (range [0, 2]).
///
/// Entries must be nonnegative and sum to 1 within 1e-9.
pub fn shannon_entropy4(p: [f64; 4]) -> Result<f64> {
    let mut sum = 0.0;
    for &v in &p {
        if !v.is_finite() || v < -PROB_CLAMP_BAND {
            return Err(Error::OutOfRange {
                name: "entropy weight",
                value: v,
                expected: "[0, 1]",
            });
        }
        sum += v;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Normalization { sum });
    }
    Ok(p.iter().map(|&v| neg_x_log2_x(v.max(0.0))).sum())
}

/// Principal-branch Lambert W on the nonnegative axis: the `w >= 0` solving
/// `w e^w = x`.
///
/// The initial guess is `ln(1 + x)` for small arguments and
/// `ln x - ln ln x` for large ones, refined by Halley iteration. The residual
/// `|w e^w - x|` is driven below `1e-13 * max(x, 1)`.
pub fn lambert_w(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::OutOfRange {
            name: "lambert_w argument",
            value: x,
            expected: ">= 0 (principal branch only)",
        });
    }
    if x == 0.0 {
        return Ok(0.0);
    }

    let mut w = if x < std::f64::consts::E {
        (1.0 + x).ln()
    } else {
        let l = x.ln();
        l - l.ln()
    };

    let target = 1e-13 * x.max(1.0);
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        if f.abs() <= target {
            break;
        }
        // Halley update for f(w) = w e^w - x.
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if step.abs() <= f64::EPSILON * w.abs() {
            break;
        }
    }
    Ok(w)
}

const GOLDEN_RATIO_STEP: f64 = 0.381_966_011_250_105_2; // 2 - phi

/// Maximize `f` on a bracketed interval.
///
/// A coarse deterministic grid (at least 200 points per decade in log scale,
/// 512 intervals in linear scale) locates the best cell, followed by
/// golden-section refinement to a relative x-tolerance of 1e-6. Ties on the
/// grid break toward the lowest probed `x`. Returns `(argmax, max)`.
pub fn maximize_scalar<F>(f: F, interval: BracketedInterval, log_scale: bool) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let (lo, hi) = (interval.lo(), interval.hi());
    if log_scale && lo <= 0.0 {
        return Err(Error::OutOfRange {
            name: "interval lower bound",
            value: lo,
            expected: "> 0 for log-scale search",
        });
    }

    let to_x = |t: f64| if log_scale { t.exp() } else { t };
    let (t_lo, t_hi) = if log_scale {
        (lo.ln(), hi.ln())
    } else {
        (lo, hi)
    };

    let n_points = if log_scale {
        let decades = (hi.log10() - lo.log10()).abs();
        ((decades * 200.0).ceil() as usize + 1).max(65)
    } else {
        513
    };

    let eval = |x: f64| -> Result<f64> {
        let y = f(x);
        if !y.is_finite() {
            return Err(Error::NonFinite {
                context: "maximize_scalar probe",
            });
        }
        Ok(y)
    };

    let step = (t_hi - t_lo) / (n_points - 1) as f64;
    let mut best_idx = 0usize;
    let mut best_x = to_x(t_lo);
    let mut best_f = eval(best_x)?;
    for i in 1..n_points {
        let t = if i == n_points - 1 {
            t_hi
        } else {
            t_lo + step * i as f64
        };
        let x = to_x(t);
        let y = eval(x)?;
        if y > best_f {
            best_f = y;
            best_x = x;
            best_idx = i;
        }
    }

    // Refine inside the cells adjacent to the best grid point.
    let mut a = t_lo + step * best_idx.saturating_sub(1) as f64;
    let mut b = (t_lo + step * (best_idx + 1) as f64).min(t_hi);
    let tol = if log_scale {
        1e-6
    } else {
        1e-6 * lo.abs().max(hi.abs())
    };

    let mut x1 = a + GOLDEN_RATIO_STEP * (b - a);
    let mut x2 = b - GOLDEN_RATIO_STEP * (b - a);
    let mut f1 = eval(to_x(x1))?;
    let mut f2 = eval(to_x(x2))?;
    while b - a > tol {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = a + GOLDEN_RATIO_STEP * (b - a);
            f1 = eval(to_x(x1))?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = b - GOLDEN_RATIO_STEP * (b - a);
            f2 = eval(to_x(x2))?;
        }
    }
    let (xr, fr) = if f1 > f2 {
        (to_x(x1), f1)
    } else {
        (to_x(x2), f2)
    };

    // Never report worse than the best grid probe; break exact ties toward
    // the lower x.
    if fr > best_f || (fr == best_f && xr < best_x) {
        Ok((xr, fr))
    } else {
        Ok((best_x, best_f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prob(x: f64) -> Probability {
        Probability::new(x).unwrap()
    }

    /// Independent entropy evaluation through ln/ln_1p rather than log2.
    fn entropy_oracle(x: f64) -> f64 {
        if x == 0.0 || x == 1.0 {
            return 0.0;
        }
        (-x * x.ln() - (1.0 - x) * (-x).ln_1p()) / std::f64::consts::LN_2
    }

    #[test]
    fn probability_rejects_outside_clamp_band() {
        assert!(Probability::new(1.2).is_err());
        assert!(Probability::new(-0.001).is_err());
        assert!(Probability::new(f64::NAN).is_err());
        assert_eq!(Probability::new(1.0 + 5e-13).unwrap().value(), 1.0);
        assert_eq!(Probability::new(-5e-13).unwrap().value(), 0.0);
    }

    #[test]
    fn binary_entropy_reference_points() {
        assert_eq!(binary_entropy(prob(0.5)), 1.0);
        assert_eq!(binary_entropy(prob(0.0)), 0.0);
        assert_eq!(binary_entropy(prob(1.0)), 0.0);
        let h = binary_entropy(prob(0.0198));
        assert!((h - entropy_oracle(0.0198)).abs() < 1e-14);
        assert!((h - 0.140316123604).abs() < 1e-9, "h(0.0198) = {h}");
        assert!((h - 0.14027).abs() < 1e-4);
    }

    #[test]
    fn shannon_entropy4_reference_points() {
        assert_eq!(shannon_entropy4([1.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(shannon_entropy4([0.25; 4]).unwrap(), 2.0);
        let h = shannon_entropy4([0.9802, 0.0, 0.0, 0.0198]).unwrap();
        assert!((h - binary_entropy(prob(0.0198))).abs() < 1e-14);
    }

    #[test]
    fn shannon_entropy4_rejects_unnormalized() {
        assert!(matches!(
            shannon_entropy4([0.5, 0.5, 0.1, 0.0]),
            Err(Error::Normalization { .. })
        ));
        assert!(shannon_entropy4([0.5, 0.6, -0.1, 0.0]).is_err());
    }

    /// Bisection oracle for w e^w = x on [0, max(1, x)].
    fn lambert_oracle(x: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, x.max(1.0));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() > x {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn lambert_w_reference_points() {
        assert_eq!(lambert_w(0.0).unwrap(), 0.0);
        assert!((lambert_w(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-12);
        let w1 = lambert_w(1.0).unwrap();
        assert!((w1 - lambert_oracle(1.0)).abs() < 1e-9);
        assert!((w1 - 0.567143).abs() < 1e-6);
    }

    #[test]
    fn lambert_w_rejects_negative() {
        assert!(lambert_w(-0.1).is_err());
        assert!(lambert_w(f64::NAN).is_err());
    }

    #[test]
    fn lambert_w_residual_over_decades() {
        let mut x = 1e-3;
        while x <= 1e9 {
            let w = lambert_w(x).unwrap();
            let res = (w * w.exp() - x).abs();
            assert!(res <= 1e-12 * x.max(1.0), "residual {res} at x = {x}");
            x *= 10.0;
        }
    }

    #[test]
    fn maximize_scalar_quadratic() {
        let (x, _) = maximize_scalar(
            |x| -(x - 2.0) * (x - 2.0),
            BracketedInterval::new(0.0, 5.0).unwrap(),
            false,
        )
        .unwrap();
        assert!((x - 2.0).abs() < 1e-5, "x* = {x}");
    }

    #[test]
    fn maximize_scalar_log_scale() {
        // f(x) = x e^-x has its maximum at x = 1.
        let (x, _) = maximize_scalar(
            |x| x * (-x).exp(),
            BracketedInterval::new(1e-3, 50.0).unwrap(),
            true,
        )
        .unwrap();
        assert!((x - 1.0).abs() < 1e-4, "x* = {x}");
    }

    #[test]
    fn maximize_scalar_constant_ties_to_lowest_probe() {
        let (x, f) =
            maximize_scalar(|_| 3.5, BracketedInterval::new(1.0, 2.0).unwrap(), false).unwrap();
        assert_eq!(x, 1.0);
        assert_eq!(f, 3.5);
    }

    #[test]
    fn maximize_scalar_rejects_non_finite_probe() {
        let r = maximize_scalar(
            |x| if x > 3.0 { f64::NAN } else { x },
            BracketedInterval::new(0.0, 5.0).unwrap(),
            false,
        );
        assert!(matches!(r, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn interval_requires_ordered_finite_bounds() {
        assert!(BracketedInterval::new(2.0, 1.0).is_err());
        assert!(BracketedInterval::new(0.0, f64::INFINITY).is_err());
    }
}
