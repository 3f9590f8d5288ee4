//! Weak-noise closed forms for the Z-keyed four-state BBM92 protocol:
//! approximate key fraction, the composite noise parameter Xi, continuous
//! optimal coding order, optimal pair production probability, approximate
//! PKE and per-basis QBERs.
//!
//! Everything in this module assumes symmetric arms
//! (`eta_A = eta_B = eta`, `n_A = n_B = n_b`). The other protocols go
//! through the numeric optimizer only.

use serde::{Deserialize, Serialize};

use crate::channels::DisturbanceProfile;
use crate::numerics::{binary_entropy, lambert_w, Probability};
use crate::{Error, Result};

use std::f64::consts::{E, LN_2};

/// Second-order expansion of the two-entropy key fraction in the QBER
/// difference: `q [1 - 2 h(e_av)] + (e_X - e_Z)^2 / (4 e_av (1 - e_av) ln 2)`
/// with `e_av = (e_X + e_Z)/2`.
///
/// At `e_X = e_Z = 0` the correction term is singular but the limit is `q`,
/// which is returned by convention.
pub fn key_fraction_approx(e_x: Probability, e_z: Probability, q: Probability) -> f64 {
    let (ex, ez) = (e_x.value(), e_z.value());
    let e_av = 0.5 * (ex + ez);
    if e_av == 0.0 {
        return q.value();
    }
    let leading = q.value()
        * (1.0 - 2.0 * binary_entropy(Probability::new(e_av).expect("average of probabilities")));
    let diff = ex - ez;
    leading + diff * diff / (4.0 * e_av * (1.0 - e_av) * LN_2)
}

/// The composite noise parameter
/// `Xi = (e eta / 2 n_b) * (2 h(D) - 1) / log2[2 D (1 - D)]`.
///
/// With `p_pair = 0` the average disturbance `d` enters directly (the
/// simplified form). With `p_pair > 0` the full form is evaluated: the
/// entropy argument becomes `e_av = [p_pair + d (1 - p_pair)] / 2` and the
/// result picks up a `(1 + 2 p_pair)` prefactor.
///
/// The result is negative once the disturbance argument passes 1/2 (no key
/// possible); callers decide how to flag that.
pub fn compute_xi(eta: f64, n_b: f64, d: Probability, p_pair: f64) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::OutOfRange {
            name: "eta",
            value: eta,
            expected: "(0, 1]",
        });
    }
    if !(n_b > 0.0) {
        return Err(Error::AsymptoticRegime {
            reason: "n_b = 0: no background noise, PKE grows without bound".into(),
        });
    }
    if !(0.0..=0.5).contains(&p_pair) {
        return Err(Error::OutOfRange {
            name: "p_pair",
            value: p_pair,
            expected: "[0, 0.5]",
        });
    }
    let (arg, prefactor) = if p_pair > 0.0 {
        (
            0.5 * (p_pair + d.value() * (1.0 - p_pair)),
            1.0 + 2.0 * p_pair,
        )
    } else {
        (d.value(), 1.0)
    };
    if arg == 0.0 {
        return Err(Error::AsymptoticRegime {
            reason: "D = 0: disturbance-free channel, PKE grows without bound".into(),
        });
    }
    let h = binary_entropy(Probability::new(arg)?);
    let denom = (2.0 * arg * (1.0 - arg)).log2();
    Ok(prefactor * (E * eta / (2.0 * n_b)) * (2.0 * h - 1.0) / denom)
}

/// Closed-form optimum of the weak-noise expansion.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AsymptoticResult {
    pub xi: f64,
    pub w_xi: f64,
    /// Continuous optimal coding order `(W(Xi) - 1) / ln 2`.
    pub m_star_cont: f64,
    /// Nearest physical coding order, floored at 1.
    pub m_star_round: u32,
    pub p_pair_star: Probability,
    pub pke_approx: f64,
    pub e_star_x: Probability,
    pub e_star_z: Probability,
    /// Expansion parameter `2^m* n_b / (2 eta p*)` at the returned optimum.
    pub xi_check: f64,
    /// Set when `xi_check` exceeds 0.2 and the first-order expansion is
    /// stretched.
    pub expansion_warning: bool,
    pub d_avg: Probability,
    pub d_minus: f64,
}

/// Evaluate the closed-form optimum with the simplified (p-independent) Xi.
pub fn asymptotic_optimum(
    eta: f64,
    n_b: f64,
    profile: &DisturbanceProfile,
    q: Probability,
) -> Result<AsymptoticResult> {
    optimum_inner(eta, n_b, profile, q, 0.0)
}

/// Evaluate the closed-form optimum with the full Xi, made self-consistent
/// by iterating Xi(p*) -> p* to a fixed point (the Lambert factor changes
/// slowly, so this settles in a few rounds).
pub fn asymptotic_optimum_full(
    eta: f64,
    n_b: f64,
    profile: &DisturbanceProfile,
    q: Probability,
) -> Result<AsymptoticResult> {
    let mut result = optimum_inner(eta, n_b, profile, q, 0.0)?;
    for _ in 0..64 {
        let next = optimum_inner(eta, n_b, profile, q, result.p_pair_star.value())?;
        let delta = (next.p_pair_star.value() - result.p_pair_star.value()).abs();
        result = next;
        if delta <= 1e-14 * result.p_pair_star.value() {
            break;
        }
    }
    Ok(result)
}

fn optimum_inner(
    eta: f64,
    n_b: f64,
    profile: &DisturbanceProfile,
    q: Probability,
    xi_p_pair: f64,
) -> Result<AsymptoticResult> {
    let d_avg = profile.d_avg();
    let d = d_avg.value();
    if d >= 0.5 {
        return Err(Error::AsymptoticRegime {
            reason: format!("average disturbance {d} >= 1/2: no key possible"),
        });
    }
    let xi = compute_xi(eta, n_b, d_avg, xi_p_pair)?;
    if xi <= 0.0 {
        return Err(Error::AsymptoticRegime {
            reason: format!("Xi = {xi} <= 0: key impossible in this regime"),
        });
    }
    let w = lambert_w(xi)?;
    if w <= 1.0 {
        return Err(Error::AsymptoticRegime {
            reason: format!("W(Xi) = {w} <= 1: even a single qubit is too many"),
        });
    }

    let m_star_cont = (w - 1.0) / LN_2;
    let m_star_round = (m_star_cont.round() as i64).max(1) as u32;

    // p* = 1/2 * (e eta W / (2 n_b Xi) - 1)^-1; the parenthesis equals
    // eta / (2 n_b 2^m*) since 2^m* = e^(W-1) and Xi = W e^W.
    let a = E * eta * w / (2.0 * n_b * xi);
    if a <= 1.0 {
        return Err(Error::AsymptoticRegime {
            reason: format!("signal-to-background margin {a} <= 1 at the optimum"),
        });
    }
    let p_star = 0.5 / (a - 1.0);

    let h_arg = Probability::new(d + 0.5 * p_star)?;
    let pke_approx =
        q.value() * (1.0 - 2.0 * binary_entropy(h_arg)) * (w - 1.0) * (w - 1.0) / (w * LN_2);

    // Per-basis QBER expansion at the optimum; 2^m* n_b / eta = e^(W-1) n_b / eta.
    let slots_cont = (w - 1.0).exp();
    let bg = slots_cont * n_b / eta;
    let e_star = |d_i: f64| -> Result<Probability> {
        Probability::new(
            0.5 * p_star + d_i * (1.0 - p_star) + (1.0 - 3.0 * p_star) * bg * (1.0 - 2.0 * d_i),
        )
    };
    let xi_check = slots_cont * n_b / (2.0 * eta * p_star);

    Ok(AsymptoticResult {
        xi,
        w_xi: w,
        m_star_cont,
        m_star_round,
        p_pair_star: Probability::new(p_star)?,
        pke_approx,
        e_star_x: e_star(profile.d_x.value())?,
        e_star_z: e_star(profile.d_z.value())?,
        xi_check,
        expansion_warning: xi_check > 0.2,
        d_avg,
        d_minus: profile.d_minus(),
    })
}
