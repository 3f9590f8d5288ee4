//! Closed-form link model: event and error rate brackets, per-basis QBER,
//! key rate and photon key efficiency (PKE).
//!
//! Rates are normalized by `R_source * eta_A * eta_B` (the received pair
//! rate); each bracket is the sum of four contributions: signal-signal
//! coincidences, signal-background, background-background and double-pair
//! events. Background counts are per temporal slot, so a frame of `M = 2^m`
//! slots picks up the `M` and `M^2` enhancement factors.

use serde::{Deserialize, Serialize};

use crate::channels::{DisturbanceProfile, MeasBasis};
use crate::numerics::Probability;
use crate::protocols::{ProtocolSpec, QberSet};
use crate::{Error, Result};

/// Transmission and background parameters of the two arms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Transmission probability per photon, Alice's arm.
    pub eta_a: f64,
    /// Transmission probability per photon, Bob's arm.
    pub eta_b: f64,
    /// Background count probability per slot per frame, Alice's side.
    pub n_a: f64,
    /// Background count probability per slot per frame, Bob's side.
    pub n_b: f64,
    /// Frame duration in seconds; only used for absolute rates.
    pub dt: f64,
}

impl ChannelParams {
    pub fn new(eta_a: f64, eta_b: f64, n_a: f64, n_b: f64) -> Result<Self> {
        Self::with_dt(eta_a, eta_b, n_a, n_b, 1.0)
    }

    pub fn with_dt(eta_a: f64, eta_b: f64, n_a: f64, n_b: f64, dt: f64) -> Result<Self> {
        for (name, eta) in [("eta_a", eta_a), ("eta_b", eta_b)] {
            if !eta.is_finite() || !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::OutOfRange {
                    name,
                    value: eta,
                    expected: "(0, 1]",
                });
            }
        }
        for (name, n) in [("n_a", n_a), ("n_b", n_b)] {
            if !n.is_finite() || !(0.0..1.0).contains(&n) {
                return Err(Error::OutOfRange {
                    name,
                    value: n,
                    expected: "[0, 1)",
                });
            }
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::OutOfRange {
                name: "dt",
                value: dt,
                expected: "> 0",
            });
        }
        Ok(Self {
            eta_a,
            eta_b,
            n_a,
            n_b,
            dt,
        })
    }

    /// Noise-to-transmission ratios `(n_A / eta_A, n_B / eta_B)`.
    pub fn noise_ratios(&self) -> (f64, f64) {
        (self.n_a / self.eta_a, self.n_b / self.eta_b)
    }
}

/// One operating point of the link.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinkPoint {
    /// Coding order: qubits per photon. The frame has `M = 2^m` slots.
    pub m: u32,
    /// Pair production probability per frame.
    pub p_pair: f64,
    pub channel: ChannelParams,
    pub protocol: ProtocolSpec,
    pub decoherence: DisturbanceProfile,
}

impl LinkPoint {
    pub fn new(
        m: u32,
        p_pair: f64,
        channel: ChannelParams,
        protocol: ProtocolSpec,
        decoherence: DisturbanceProfile,
    ) -> Result<Self> {
        if m < 1 || m > 40 {
            return Err(Error::OutOfRange {
                name: "m",
                value: m as f64,
                expected: "1..=40",
            });
        }
        if !p_pair.is_finite() || !(p_pair > 0.0 && p_pair <= 0.5) {
            return Err(Error::OutOfRange {
                name: "p_pair",
                value: p_pair,
                expected: "(0, 0.5]",
            });
        }
        Ok(Self {
            m,
            p_pair,
            channel,
            protocol,
            decoherence,
        })
    }

    /// Number of temporal slots per frame, `M = 2^m`.
    pub fn slot_count(&self) -> f64 {
        (1u64 << self.m) as f64
    }

    /// Conclusive-event probability for this point's protocol, evaluated at
    /// the average disturbance `(D_X + D_Z)/2`.
    pub fn conclusive_probability(&self) -> Probability {
        self.protocol
            .conclusive_probability(self.decoherence.d_avg())
    }
}

/// The four additive contributions to an event or error rate bracket,
/// normalized by `R_source * eta_A * eta_B`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateBreakdown {
    pub signal_signal: f64,
    pub signal_background: f64,
    pub background_background: f64,
    pub double_pair: f64,
    pub total: f64,
}

impl RateBreakdown {
    fn new(
        signal_signal: f64,
        signal_background: f64,
        background_background: f64,
        double_pair: f64,
    ) -> Self {
        Self {
            signal_signal,
            signal_background,
            background_background,
            double_pair,
            total: signal_signal + signal_background + background_background + double_pair,
        }
    }
}

/// Detection-event bracket for conclusive probability `e`:
/// `[E, M (n_A/eta_A + n_B/eta_B), (M^2/p_pair)(n_A n_B)/(eta_A eta_B), (E+1) p_pair]`.
pub fn event_rate(point: &LinkPoint, e: Probability) -> RateBreakdown {
    let m_slots = point.slot_count();
    let (ra, rb) = point.channel.noise_ratios();
    let e = e.value();
    RateBreakdown::new(
        e,
        m_slots * (ra + rb),
        m_slots * m_slots / point.p_pair * (ra * rb),
        (e + 1.0) * point.p_pair,
    )
}

/// Error-event bracket for disturbance `d`:
/// `[D, M (n_A/eta_A + n_B/eta_B)/2, (M^2/p_pair)(n_A n_B)/(2 eta_A eta_B), (D + 1/2) p_pair]`.
pub fn error_rate(point: &LinkPoint, d: Probability) -> RateBreakdown {
    let m_slots = point.slot_count();
    let (ra, rb) = point.channel.noise_ratios();
    let d = d.value();
    RateBreakdown::new(
        d,
        0.5 * m_slots * (ra + rb),
        0.5 * m_slots * m_slots / point.p_pair * (ra * rb),
        (d + 0.5) * point.p_pair,
    )
}

/// QBER in one basis: the ratio of the error bracket at that basis'
/// disturbance to the event bracket at the protocol's conclusive
/// probability.
pub fn qber(point: &LinkPoint, basis: MeasBasis) -> Result<Probability> {
    let event = event_rate(point, point.conclusive_probability()).total;
    if !(event > 0.0) {
        return Err(Error::NonFinite {
            context: "event rate",
        });
    }
    let error = error_rate(point, point.decoherence.d(basis)).total;
    Probability::new(error / event)
}

/// Per-basis QBERs for the point's protocol bases.
pub fn qber_set(point: &LinkPoint) -> Result<QberSet> {
    let e_x = qber(point, MeasBasis::X)?;
    let e_z = qber(point, MeasBasis::Z)?;
    if point.protocol.id.uses_y() {
        Ok(QberSet::three_basis(e_x, qber(point, MeasBasis::Y)?, e_z))
    } else {
        Ok(QberSet::two_basis(e_x, e_z))
    }
}

/// Photon key efficiency and the quantities it is assembled from.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PkeReport {
    /// Secret bits per received photon pair, clamped at zero.
    pub pke: f64,
    /// Unclamped key fraction (may be negative).
    pub key_fraction: f64,
    pub qbers: QberSet,
    /// Conclusive-event probability used in the event bracket.
    pub conclusive: f64,
    pub event: RateBreakdown,
}

/// Photon key efficiency `m * R_event * max(0, K)` in units of the received
/// pair rate `eta_A eta_B R_source`.
pub fn pke(point: &LinkPoint) -> Result<PkeReport> {
    let conclusive = point.conclusive_probability();
    let event = event_rate(point, conclusive);
    let qbers = qber_set(point)?;
    let key_fraction = point.protocol.key_fraction(&qbers)?;
    Ok(PkeReport {
        pke: point.m as f64 * event.total * key_fraction.max(0.0),
        key_fraction,
        qbers,
        conclusive: conclusive.value(),
        event,
    })
}

/// Absolute key rate in bits per second:
/// `PKE * eta_A * eta_B * p_pair / dt`.
pub fn absolute_key_rate(point: &LinkPoint) -> Result<f64> {
    let report = pke(point)?;
    let ch = &point.channel;
    Ok(report.pke * ch.eta_a * ch.eta_b * point.p_pair / ch.dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::ProtocolId;

    fn prob(x: f64) -> Probability {
        Probability::new(x).unwrap()
    }

    fn dephasing_profile(v_total: f64) -> DisturbanceProfile {
        let d = (1.0 - v_total) / 2.0;
        DisturbanceProfile::new(prob(d), prob(d), prob(0.0))
    }

    fn example_point(protocol: ProtocolSpec) -> LinkPoint {
        LinkPoint::new(
            2, // M = 4
            0.01,
            ChannelParams::new(1e-2, 1e-2, 1e-6, 1e-6).unwrap(),
            protocol,
            dephasing_profile(0.9604),
        )
        .unwrap()
    }

    #[test]
    fn event_rate_bracket_arithmetic() {
        let point = example_point(ProtocolSpec::new(ProtocolId::Bbm92Four, 1.0).unwrap());
        let b = event_rate(&point, prob(1.0));
        assert!((b.signal_signal - 1.0).abs() < 1e-15);
        assert!((b.signal_background - 8e-4).abs() < 1e-15);
        assert!((b.background_background - 1.6e-5).abs() < 1e-15);
        assert!((b.double_pair - 0.02).abs() < 1e-15);
        assert!((b.total - 1.020816).abs() < 1e-12);
    }

    #[test]
    fn event_rate_sarg_conclusive() {
        let point = example_point(ProtocolSpec::new(ProtocolId::Sarg04Four, 0.5).unwrap());
        let e = point.conclusive_probability();
        assert!((e.value() - 0.5099).abs() < 1e-15); // D_avg = 0.0099
        let b = event_rate(&point, prob(0.5198));
        assert!((b.total - 0.535814).abs() < 1e-12);
    }

    #[test]
    fn event_rate_noiseless_limit() {
        let point = LinkPoint::new(
            2,
            1e-9,
            ChannelParams::new(1e-2, 1e-2, 0.0, 0.0).unwrap(),
            ProtocolSpec::new(ProtocolId::Bbm92Four, 1.0).unwrap(),
            dephasing_profile(1.0),
        )
        .unwrap();
        let b = event_rate(&point, prob(1.0));
        assert!((b.total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn error_rate_bracket_arithmetic() {
        let point = example_point(ProtocolSpec::new(ProtocolId::Bbm92Four, 1.0).unwrap());
        let b = error_rate(&point, prob(0.0198));
        assert!((b.total - 0.025406).abs() < 1e-12);

        let zero = LinkPoint::new(
            2,
            1e-9,
            ChannelParams::new(1e-2, 1e-2, 0.0, 0.0).unwrap(),
            point.protocol,
            dephasing_profile(1.0),
        )
        .unwrap();
        let b = error_rate(&zero, prob(0.0));
        assert!(b.total < 1e-9);
    }

    #[test]
    fn error_rate_uncorrelated_identity() {
        // At D = 1/2 every error part is exactly half the matching event
        // part with E = 1.
        let point = example_point(ProtocolSpec::new(ProtocolId::Bbm92Four, 1.0).unwrap());
        let err = error_rate(&point, prob(0.5));
        let evt = event_rate(&point, prob(1.0));
        assert!((err.total - 0.5 * evt.total).abs() < 1e-15);
    }

    #[test]
    fn qber_reference_point() {
        let point = example_point(ProtocolSpec::new(ProtocolId::Bbm92Four, 1.0).unwrap());
        let e = qber(&point, MeasBasis::X).unwrap().value();
        assert!((e - 0.025406 / 1.020816).abs() < 1e-10);
        assert!((e - 0.02489).abs() < 1e-5);
    }

    #[test]
    fn qber_noiseless_and_background_dominated_limits() {
        let noiseless = LinkPoint::new(
            1,
            1e-8,
            ChannelParams::new(1e-2, 1e-2, 0.0, 0.0).unwrap(),
            ProtocolSpec::new(ProtocolId::Bbm92Four, 1.0).unwrap(),
            dephasing_profile(1.0),
        )
        .unwrap();
        assert!(qber(&noiseless, MeasBasis::Z).unwrap().value() < 1e-8);

        // Background-dominated: uncorrelated clicks give QBER 1/2.
        let noisy = LinkPoint::new(
            2,
            1e-8,
            ChannelParams::new(1e-3, 1e-3, 1e-3, 1e-3).unwrap(),
            ProtocolSpec::new(ProtocolId::Bbm92Four, 1.0).unwrap(),
            dephasing_profile(1.0),
        )
        .unwrap();
        let e = qber(&noisy, MeasBasis::Z).unwrap().value();
        assert!(e <= 0.5 && (e - 0.5).abs() < 1e-3, "e = {e}");
    }

    #[test]
    fn qber_in_noiseless_small_p_limit_approaches_disturbance() {
        let point = LinkPoint::new(
            3,
            1e-10,
            ChannelParams::new(1e-3, 1e-3, 0.0, 0.0).unwrap(),
            ProtocolSpec::new(ProtocolId::Bbm92Four, 1.0).unwrap(),
            dephasing_profile(0.9604),
        )
        .unwrap();
        for basis in [MeasBasis::X, MeasBasis::Z] {
            let e = qber(&point, basis).unwrap().value();
            let d = point.decoherence.d(basis).value();
            assert!((e - d).abs() < 1e-9, "{basis:?}: {e} vs {d}");
        }
    }

    #[test]
    fn pke_reference_points() {
        // One perfect bit per received pair in the noiseless single-qubit
        // limit.
        let ideal = LinkPoint::new(
            1,
            1e-8,
            ChannelParams::new(1.0, 1.0, 0.0, 0.0).unwrap(),
            ProtocolSpec::new(ProtocolId::Bbm92Four, 1.0).unwrap(),
            dephasing_profile(1.0),
        )
        .unwrap();
        let r = pke(&ideal).unwrap();
        assert!((r.pke - 1.0).abs() < 1e-6, "pke = {}", r.pke);

        // Above-threshold QBER clamps to zero key.
        let hopeless = LinkPoint::new(
            1,
            0.01,
            ChannelParams::new(1e-2, 1e-2, 0.0, 0.0).unwrap(),
            ProtocolSpec::new(ProtocolId::Bbm92Four, 1.0).unwrap(),
            DisturbanceProfile::new(prob(0.3), prob(0.3), prob(0.3)),
        )
        .unwrap();
        let r = pke(&hopeless).unwrap();
        assert_eq!(r.pke, 0.0);
        assert!(r.key_fraction < 0.0);
    }

    #[test]
    fn pke_symmetric_under_arm_swap() {
        let protocol = ProtocolSpec::new(ProtocolId::Bbm92Four, 1.0).unwrap();
        let profile = dephasing_profile(0.9604);
        let a = LinkPoint::new(
            3,
            0.005,
            ChannelParams::new(1e-3, 2e-2, 1e-7, 3e-6).unwrap(),
            protocol,
            profile,
        )
        .unwrap();
        let b = LinkPoint::new(
            3,
            0.005,
            ChannelParams::new(2e-2, 1e-3, 3e-6, 1e-7).unwrap(),
            protocol,
            profile,
        )
        .unwrap();
        let (ra, rb) = (pke(&a).unwrap().pke, pke(&b).unwrap().pke);
        assert!((ra - rb).abs() < 1e-15, "{ra} vs {rb}");
    }

    #[test]
    fn absolute_key_rate_scaling() {
        let point = |dt: f64| {
            LinkPoint::new(
                1,
                0.01,
                ChannelParams::with_dt(1.0, 1.0, 0.0, 0.0, dt).unwrap(),
                ProtocolSpec::new(ProtocolId::Bbm92Four, 1.0).unwrap(),
                dephasing_profile(1.0),
            )
            .unwrap()
        };
        let r1 = absolute_key_rate(&point(1e-9)).unwrap();
        let pke_val = pke(&point(1e-9)).unwrap().pke;
        assert!((r1 - pke_val * 0.01 / 1e-9).abs() / r1 < 1e-12);

        // Doubling the frame duration halves the rate, PKE unchanged.
        let r2 = absolute_key_rate(&point(2e-9)).unwrap();
        assert!((r1 - 2.0 * r2).abs() / r1 < 1e-12);
        assert_eq!(pke_val, pke(&point(2e-9)).unwrap().pke);
    }

    #[test]
    fn link_point_validation() {
        let ch = ChannelParams::new(1e-2, 1e-2, 0.0, 0.0).unwrap();
        let proto = ProtocolSpec::new(ProtocolId::Bbm92Four, 1.0).unwrap();
        let prof = dephasing_profile(1.0);
        assert!(LinkPoint::new(0, 0.01, ch, proto, prof).is_err());
        assert!(LinkPoint::new(1, 0.6, ch, proto, prof).is_err());
        assert!(LinkPoint::new(1, 0.0, ch, proto, prof).is_err());
        assert!(ChannelParams::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(ChannelParams::new(1.0, 1.0, 1.0, 0.0).is_err());
    }
}
