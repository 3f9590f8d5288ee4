//! Self-contained invariant battery behind the `validate` CLI subcommand.
//!
//! Each check is fast (the whole battery runs in seconds) and returns a
//! one-line failure description instead of panicking, so the CLI can print
//! a pass/fail line per check and exit nonzero on the first broken
//! invariant.

use crate::asymptotics::asymptotic_optimum;
use crate::channels::{
    apply_two_sided, bell_projections, disturbance, disturbance_profile, measurement_joint,
    qber_from_bell, BellDiagonal, BellState, KrausSet, MeasBasis,
};
use crate::link::{error_rate, event_rate, pke, ChannelParams, LinkPoint};
use crate::numerics::{binary_entropy, lambert_w, maximize_scalar, BracketedInterval, Probability};
use crate::optimizer::{optimize_pm, LinkTemplate, OptimizerSettings};
use crate::protocols::{key_fraction_bell, key_fraction_biterr, ProtocolId, ProtocolSpec};

type CheckResult = Result<(), String>;

/// Small deterministic generator for the randomized checks.
struct Rng(u64);

impl Rng {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

fn prob(x: f64) -> Probability {
    Probability::new(x).expect("check values stay in range")
}

fn check_entropy_symmetry() -> CheckResult {
    let mut rng = Rng(11);
    for _ in 0..10_000 {
        let x = rng.next_f64();
        let h = binary_entropy(prob(x));
        let h_sym = binary_entropy(prob(1.0 - x));
        if h.to_bits() != h_sym.to_bits() {
            return Err(format!("h({x}) != h(1-{x}) bitwise"));
        }
        if !(0.0..=1.0).contains(&h) {
            return Err(format!("h({x}) = {h} outside [0, 1]"));
        }
    }
    Ok(())
}

fn check_lambert_residuals() -> CheckResult {
    let probe = |x: f64| -> CheckResult {
        let w = lambert_w(x).map_err(|e| e.to_string())?;
        let res = (w * w.exp() - x).abs();
        if res > 1e-12 * x.max(1.0) {
            return Err(format!("residual {res} at x = {x}"));
        }
        Ok(())
    };
    let mut x = 1e-3;
    while x <= 1e9 {
        probe(x)?;
        x *= 10.0;
    }
    let mut rng = Rng(23);
    for _ in 0..10_000 {
        probe(10f64.powf(rng.uniform(-3.0, 9.0)))?;
    }
    Ok(())
}

fn check_maximizer_on_unimodal_functions() -> CheckResult {
    let cases: [(fn(f64) -> f64, f64, f64, bool, f64); 3] = [
        (|x| -(x - 2.0) * (x - 2.0), 0.0, 5.0, false, 2.0),
        (|x| x * (-x).exp(), 1e-3, 50.0, true, 1.0),
        (
            |x| -(x.ln() - 1.0).powi(2),
            0.1,
            20.0,
            true,
            std::f64::consts::E,
        ),
    ];
    for (f, lo, hi, log, expected) in cases {
        let (x, _) = maximize_scalar(f, BracketedInterval::new(lo, hi).unwrap(), log)
            .map_err(|e| e.to_string())?;
        if (x - expected).abs() / expected > 1e-4 {
            return Err(format!("argmax {x}, expected {expected}"));
        }
    }
    Ok(())
}

fn check_channel_closed_forms() -> CheckResult {
    let mut rng = Rng(37);
    for _ in 0..1000 {
        let va = rng.uniform(0.5, 1.0);
        let vb = rng.uniform(0.5, 1.0);
        let d = (1.0 - va * vb) / 2.0;

        let a = KrausSet::dephasing(va).map_err(|e| e.to_string())?;
        let b = KrausSet::dephasing(vb).map_err(|e| e.to_string())?;
        let p = disturbance_profile(&a, &b).map_err(|e| e.to_string())?;
        if (p.d_x.value() - d).abs() > 1e-12
            || (p.d_y.value() - d).abs() > 1e-12
            || p.d_z.value() > 1e-12
        {
            return Err(format!("dephasing profile mismatch at V_A={va}, V_B={vb}"));
        }

        let a = KrausSet::depolarizing(1.0 - va).map_err(|e| e.to_string())?;
        let b = KrausSet::depolarizing(1.0 - vb).map_err(|e| e.to_string())?;
        let p = disturbance_profile(&a, &b).map_err(|e| e.to_string())?;
        for basis in MeasBasis::ALL {
            if (p.d(basis).value() - d).abs() > 1e-12 {
                return Err(format!(
                    "depolarizing profile mismatch at V_A={va}, V_B={vb}, basis {basis:?}"
                ));
            }
        }
    }
    Ok(())
}

fn check_kraus_completeness() -> CheckResult {
    let mut rng = Rng(41);
    for _ in 0..200 {
        let p = rng.next_f64();
        for set in [KrausSet::dephasing(p), KrausSet::depolarizing(p)] {
            let defect = set.map_err(|e| e.to_string())?.completeness_defect();
            if defect > 1e-12 {
                return Err(format!("completeness defect {defect} at parameter {p}"));
            }
        }
    }
    Ok(())
}

fn random_bell(rng: &mut Rng) -> BellDiagonal {
    let raw = [
        rng.next_f64(),
        rng.next_f64(),
        rng.next_f64(),
        rng.next_f64(),
    ];
    let total: f64 = raw.iter().sum();
    BellDiagonal::new(
        raw[0] / total,
        raw[1] / total,
        raw[2] / total,
        raw[3] / total,
    )
    .expect("normalized by construction")
}

fn check_key_formula_identity() -> CheckResult {
    let mut rng = Rng(53);
    for _ in 0..10_000 {
        let p = random_bell(&mut rng);
        let [_, px, py, pz] = p.as_array();
        let via_bell = key_fraction_bell(&p);
        let via_biterr = key_fraction_biterr(px + py, pz + py, &p).map_err(|e| e.to_string())?;
        if (via_bell - via_biterr).abs() > 1e-12 {
            return Err(format!(
                "key formula identity broken: {via_bell} vs {via_biterr}"
            ));
        }
    }
    Ok(())
}

fn check_bell_roundtrip() -> CheckResult {
    let mut rng = Rng(59);
    for _ in 0..10_000 {
        let p = random_bell(&mut rng);
        let (ex, ey, ez) = qber_from_bell(&p);
        let back = bell_projections(ex, ey, ez).map_err(|e| e.to_string())?;
        for (a, b) in p.as_array().iter().zip(back.as_array().iter()) {
            if (a - b).abs() > 1e-12 {
                return Err(format!("roundtrip drift {}", (a - b).abs()));
            }
        }
    }
    Ok(())
}

fn check_y_basis_anticorrelation() -> CheckResult {
    let probs = measurement_joint(&BellState::PhiPlus.density(), MeasBasis::Y, MeasBasis::Y)
        .map_err(|e| e.to_string())?;
    if probs[0].abs() > 1e-12 || probs[3].abs() > 1e-12 {
        return Err(format!("aligned Y mass {:?}", probs));
    }
    if (probs[1] - 0.5).abs() > 1e-12 || (probs[2] - 0.5).abs() > 1e-12 {
        return Err(format!("anti-aligned Y mass {:?}", probs));
    }
    Ok(())
}

fn check_measurement_normalization() -> CheckResult {
    let k = KrausSet::dephasing(0.93).map_err(|e| e.to_string())?;
    let rho = apply_two_sided(&BellState::PhiPlus.density(), &k, &k).map_err(|e| e.to_string())?;
    for ba in MeasBasis::ALL {
        for bb in MeasBasis::ALL {
            let p = measurement_joint(&rho, ba, bb).map_err(|e| e.to_string())?;
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(format!("outcome sum {sum} for {ba:?} x {bb:?}"));
            }
        }
    }
    let d = disturbance(&rho, MeasBasis::X).map_err(|e| e.to_string())?;
    if (d.value() - (1.0 - 0.93 * 0.93) / 2.0).abs() > 1e-12 {
        return Err("disturbance functional mismatch".into());
    }
    Ok(())
}

fn dephasing_template(eta: f64, n_b: f64) -> LinkTemplate {
    LinkTemplate {
        channel: ChannelParams::new(eta, eta, n_b, n_b).expect("valid"),
        protocol: ProtocolSpec::new(ProtocolId::Bbm92Four, 1.0).expect("valid"),
        decoherence: crate::channels::DisturbanceProfile::new(
            prob(0.0198),
            prob(0.0198),
            prob(0.0),
        ),
    }
}

fn check_link_swap_symmetry() -> CheckResult {
    let tpl = dephasing_template(1e-3, 1e-8);
    let swapped = LinkTemplate {
        channel: ChannelParams::new(2e-3, 1e-3, 5e-8, 1e-8).expect("valid"),
        ..tpl.clone()
    };
    let original = LinkTemplate {
        channel: ChannelParams::new(1e-3, 2e-3, 1e-8, 5e-8).expect("valid"),
        ..tpl
    };
    for (m, p) in [(1u32, 1e-3), (4, 0.01), (8, 0.05)] {
        let a = pke(&original.at(m, p).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let b = pke(&swapped.at(m, p).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        if (a.pke - b.pke).abs() > 1e-12 {
            return Err(format!("swap asymmetry at m={m}, p={p}"));
        }
    }
    Ok(())
}

fn check_qber_range_and_part_ordering() -> CheckResult {
    let mut rng = Rng(61);
    for trial in 0..500 {
        // The SARG04 conclusive probability uses the average disturbance, so
        // a basis sitting far above the average can exceed QBER 1/2; the
        // half bound is guaranteed for BBM92 over the full range and for
        // SARG04 when each D_i stays within [0, 1/3].
        let sarg = trial % 2 == 0;
        let (protocol, d_max) = if sarg {
            (
                ProtocolSpec::new(ProtocolId::Sarg04Four, 0.5).map_err(|e| e.to_string())?,
                1.0 / 3.0,
            )
        } else {
            (
                ProtocolSpec::new(ProtocolId::Bbm92Four, 1.0).map_err(|e| e.to_string())?,
                0.5,
            )
        };
        let point = LinkPoint::new(
            1 + (rng.next_u64() % 10) as u32,
            10f64.powf(rng.uniform(-6.0, -0.5)),
            ChannelParams::new(
                10f64.powf(rng.uniform(-4.0, 0.0)),
                10f64.powf(rng.uniform(-4.0, 0.0)),
                10f64.powf(rng.uniform(-9.0, -3.0)),
                10f64.powf(rng.uniform(-9.0, -3.0)),
            )
            .map_err(|e| e.to_string())?,
            protocol,
            crate::channels::DisturbanceProfile::new(
                prob(rng.uniform(0.0, d_max)),
                prob(0.0),
                prob(rng.uniform(0.0, d_max)),
            ),
        )
        .map_err(|e| e.to_string())?;
        let e = point.conclusive_probability();
        let evt = event_rate(&point, e);
        for basis in [MeasBasis::X, MeasBasis::Z] {
            let err = error_rate(&point, point.decoherence.d(basis));
            let parts_ok = err.signal_signal <= evt.signal_signal
                && err.signal_background <= evt.signal_background
                && err.background_background <= evt.background_background
                && err.double_pair <= evt.double_pair;
            if !parts_ok {
                return Err("error bracket part exceeds event part".into());
            }
            let q = crate::link::qber(&point, basis).map_err(|e| e.to_string())?;
            if q.value() > 0.5 + 1e-12 {
                return Err(format!("QBER {} above 1/2", q.value()));
            }
        }
    }
    Ok(())
}

fn check_optimizer_monotonicity() -> CheckResult {
    let settings = OptimizerSettings::default();
    let mut last = f64::INFINITY;
    for n_b in [1e-7, 1e-6, 1e-5] {
        let r =
            optimize_pm(&dephasing_template(1e-3, n_b), &settings).map_err(|e| e.to_string())?;
        if r.pke_star > last {
            return Err(format!("optimal PKE increased with noise at n_b = {n_b}"));
        }
        last = r.pke_star;
    }
    Ok(())
}

fn check_asymptotics_consistency() -> CheckResult {
    // Numeric optimizer against the Lambert closed forms in the weak-noise
    // window where the approximation is declared valid.
    let settings = OptimizerSettings::default();
    for ratio in [1e-6, 1e-5] {
        let eta = 1e-3;
        let n_b = ratio * eta;
        let tpl = dephasing_template(eta, n_b);
        let profile =
            crate::channels::DisturbanceProfile::new(prob(0.0198), prob(0.0198), prob(0.0));
        let closed =
            asymptotic_optimum(eta, n_b, &profile, prob(1.0)).map_err(|e| e.to_string())?;
        let numeric = optimize_pm(&tpl, &settings).map_err(|e| e.to_string())?;
        if (numeric.m_star as i64 - closed.m_star_round as i64).abs() > 1 {
            return Err(format!(
                "m* mismatch at ratio {ratio}: {} vs {}",
                numeric.m_star, closed.m_star_round
            ));
        }
        let dev = (closed.pke_approx - numeric.pke_star).abs() / numeric.pke_star;
        if dev > 0.10 {
            return Err(format!("PKE deviation {dev} at ratio {ratio}"));
        }
    }
    Ok(())
}

/// Run the whole battery, returning `(name, result)` per check.
pub fn run_all() -> Vec<(&'static str, Result<(), String>)> {
    vec![
        ("entropy symmetry and range", check_entropy_symmetry()),
        ("lambert residuals", check_lambert_residuals()),
        ("scalar maximizer", check_maximizer_on_unimodal_functions()),
        ("kraus completeness", check_kraus_completeness()),
        ("channel closed forms", check_channel_closed_forms()),
        ("key formula identity", check_key_formula_identity()),
        ("bell roundtrip", check_bell_roundtrip()),
        ("y-basis anticorrelation", check_y_basis_anticorrelation()),
        (
            "measurement normalization",
            check_measurement_normalization(),
        ),
        ("link swap symmetry", check_link_swap_symmetry()),
        ("qber range", check_qber_range_and_part_ordering()),
        ("optimizer monotonicity", check_optimizer_monotonicity()),
        ("asymptotics consistency", check_asymptotics_consistency()),
    ]
}
