//! Two-qubit state algebra: Kraus decoherence channels, disturbance
//! functionals and Bell-diagonal <-> QBER conversions.
//!
//! The dimensions are fixed (2x2 single-qubit operators, 4x4 two-photon
//! states), so the complex matrix arithmetic is implemented in-module on
//! plain arrays instead of pulling in a general linear-algebra backend.
//!
//! Source states are pair states produced in `|Phi+>`; decoherence is applied
//! independently on Alice's and Bob's arm and the resulting state stays
//! Bell-diagonal for the channel kinds in scope.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::numerics::{shannon_entropy4, Probability, PROB_CLAMP_BAND};
use crate::{Error, Result};

const HERMITICITY_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const MINOR_TOL: f64 = 1e-10;
const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

// ---------------------------------------------------------------------------
// Fixed-size complex matrices
// ---------------------------------------------------------------------------

/// Dense 2x2 complex matrix (row major).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix2(pub [[Complex64; 2]; 2]);

impl Matrix2 {
    pub fn zero() -> Self {
        Matrix2([[Complex64::ZERO; 2]; 2])
    }

    pub fn identity() -> Self {
        Matrix2([[cr(1.0), cr(0.0)], [cr(0.0), cr(1.0)]])
    }

    pub fn pauli_x() -> Self {
        Matrix2([[cr(0.0), cr(1.0)], [cr(1.0), cr(0.0)]])
    }

    pub fn pauli_y() -> Self {
        Matrix2([[cr(0.0), c(0.0, -1.0)], [c(0.0, 1.0), cr(0.0)]])
    }

    pub fn pauli_z() -> Self {
        Matrix2([[cr(1.0), cr(0.0)], [cr(0.0), cr(-1.0)]])
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        for row in out.0.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        let a = &self.0;
        Matrix2([
            [a[0][0].conj(), a[1][0].conj()],
            [a[0][1].conj(), a[1][1].conj()],
        ])
    }

    pub fn mul(&self, rhs: &Matrix2) -> Self {
        let mut out = Matrix2::zero();
        for i in 0..2 {
            for j in 0..2 {
                let mut s = Complex64::ZERO;
                for k in 0..2 {
                    s += self.0[i][k] * rhs.0[k][j];
                }
                out.0[i][j] = s;
            }
        }
        out
    }

    pub fn add(&self, rhs: &Matrix2) -> Self {
        let mut out = *self;
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] += rhs.0[i][j];
            }
        }
        out
    }

    /// Largest absolute entry of `self - rhs`.
    pub fn max_abs_diff(&self, rhs: &Matrix2) -> f64 {
        let mut m = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                m = m.max((self.0[i][j] - rhs.0[i][j]).norm());
            }
        }
        m
    }
}

/// Dense 4x4 complex matrix (row major); two-qubit operators and states.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix4(pub [[Complex64; 4]; 4]);

impl Matrix4 {
    pub fn zero() -> Self {
        Matrix4([[Complex64::ZERO; 4]; 4])
    }

    pub fn identity() -> Self {
        let mut out = Matrix4::zero();
        for i in 0..4 {
            out.0[i][i] = cr(1.0);
        }
        out
    }

    /// Kronecker product of two single-qubit operators (first factor acts on
    /// Alice's qubit, second on Bob's).
    pub fn kron(a: &Matrix2, b: &Matrix2) -> Self {
        let mut out = Matrix4::zero();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        out.0[2 * i + k][2 * j + l] = a.0[i][j] * b.0[k][l];
                    }
                }
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        for row in out.0.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    pub fn add(&self, rhs: &Matrix4) -> Self {
        let mut out = *self;
        for i in 0..4 {
            for j in 0..4 {
                out.0[i][j] += rhs.0[i][j];
            }
        }
        out
    }

    pub fn mul(&self, rhs: &Matrix4) -> Self {
        let mut out = Matrix4::zero();
        for i in 0..4 {
            for j in 0..4 {
                let mut s = Complex64::ZERO;
                for k in 0..4 {
                    s += self.0[i][k] * rhs.0[k][j];
                }
                out.0[i][j] = s;
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Matrix4::zero();
        for i in 0..4 {
            for j in 0..4 {
                out.0[i][j] = self.0[j][i].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        (0..4).map(|i| self.0[i][i]).sum()
    }

    /// Real part of `<v| M |v>`.
    pub fn expectation(&self, v: &[Complex64; 4]) -> f64 {
        let mut s = Complex64::ZERO;
        for i in 0..4 {
            let mut row = Complex64::ZERO;
            for j in 0..4 {
                row += self.0[i][j] * v[j];
            }
            s += v[i].conj() * row;
        }
        s.re
    }

    /// Largest absolute entry of `self - rhs`.
    pub fn max_abs_diff(&self, rhs: &Matrix4) -> f64 {
        let mut m = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                m = m.max((self.0[i][j] - rhs.0[i][j]).norm());
            }
        }
        m
    }

    /// Outer product `|v><v|`.
    pub fn projector(v: &[Complex64; 4]) -> Self {
        let mut out = Matrix4::zero();
        for i in 0..4 {
            for j in 0..4 {
                out.0[i][j] = v[i] * v[j].conj();
            }
        }
        out
    }

    /// Check the density-matrix invariants: Hermitian within 1e-12, unit
    /// trace within 1e-12 and positive semidefiniteness through its testable
    /// surrogate (all 1x1 and 2x2 principal minors nonnegative within 1e-10).
    pub fn validate_density(&self) -> Result<()> {
        for i in 0..4 {
            for j in 0..4 {
                let v = self.0[i][j];
                if !v.re.is_finite() || !v.im.is_finite() {
                    return Err(Error::InvalidDensity {
                        detail: format!("non-finite entry at ({i}, {j})"),
                    });
                }
                let d = (v - self.0[j][i].conj()).norm();
                if d > HERMITICITY_TOL {
                    return Err(Error::InvalidDensity {
                        detail: format!("Hermiticity violated at ({i}, {j}): defect {d:.3e}"),
                    });
                }
            }
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidDensity {
                detail: format!("trace = {} + {}i", tr.re, tr.im),
            });
        }
        for i in 0..4 {
            if self.0[i][i].re < -MINOR_TOL {
                return Err(Error::InvalidDensity {
                    detail: format!("negative diagonal entry at {i}"),
                });
            }
            for j in (i + 1)..4 {
                let minor = self.0[i][i].re * self.0[j][j].re - (self.0[i][j] * self.0[j][i]).re;
                if minor < -MINOR_TOL {
                    return Err(Error::InvalidDensity {
                        detail: format!("negative 2x2 principal minor ({i}, {j})"),
                    });
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Bell states
// ---------------------------------------------------------------------------

/// The four maximally entangled two-qubit states.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BellState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellState {
    /// State vector in the computational product basis |00>, |01>, |10>, |11>.
    pub fn vector(self) -> [Complex64; 4] {
        let r = cr(FRAC_1_SQRT_2);
        match self {
            BellState::PhiPlus => [r, cr(0.0), cr(0.0), r],
            BellState::PhiMinus => [r, cr(0.0), cr(0.0), -r],
            BellState::PsiPlus => [cr(0.0), r, r, cr(0.0)],
            BellState::PsiMinus => [cr(0.0), r, -r, cr(0.0)],
        }
    }

    pub fn density(self) -> Matrix4 {
        Matrix4::projector(&self.vector())
    }
}

// ---------------------------------------------------------------------------
// Kraus channels
// ---------------------------------------------------------------------------

/// Decoherence channel families supported by the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    /// Interferometer visibility loss; parameter is the visibility V.
    Dephasing,
    /// Uniform Bloch-ball contraction; parameter is the strength lambda.
    Depolarizing,
}

/// A single-arm decoherence channel as an explicit Kraus operator set.
#[derive(Clone, Debug)]
pub struct KrausSet {
    kind: ChannelKind,
    parameter: f64,
    operators: Vec<Matrix2>,
}

/// Build a Kraus set for the given channel kind.
///
/// Dephasing with visibility `V`: `{sqrt((1+V)/2) I, sqrt((1-V)/2) Z}`.
/// Depolarizing with strength `lambda`:
/// `{sqrt(1 - 3 lambda/4) I, sqrt(lambda/4) X, sqrt(lambda/4) Y, sqrt(lambda/4) Z}`.
pub fn make_kraus(kind: ChannelKind, parameter: f64) -> Result<KrausSet> {
    KrausSet::new(kind, parameter)
}

impl KrausSet {
    pub fn new(kind: ChannelKind, parameter: f64) -> Result<Self> {
        if !parameter.is_finite() || !(0.0..=1.0).contains(&parameter) {
            return Err(Error::OutOfRange {
                name: "channel parameter",
                value: parameter,
                expected: "[0, 1]",
            });
        }
        let operators = match kind {
            ChannelKind::Dephasing => vec![
                Matrix2::identity().scale(((1.0 + parameter) / 2.0).sqrt()),
                Matrix2::pauli_z().scale(((1.0 - parameter) / 2.0).sqrt()),
            ],
            ChannelKind::Depolarizing => vec![
                Matrix2::identity().scale((1.0 - 3.0 * parameter / 4.0).sqrt()),
                Matrix2::pauli_x().scale((parameter / 4.0).sqrt()),
                Matrix2::pauli_y().scale((parameter / 4.0).sqrt()),
                Matrix2::pauli_z().scale((parameter / 4.0).sqrt()),
            ],
        };
        let set = Self {
            kind,
            parameter,
            operators,
        };
        debug_assert!(set.completeness_defect() < 1e-12);
        Ok(set)
    }

    pub fn dephasing(visibility: f64) -> Result<Self> {
        Self::new(ChannelKind::Dephasing, visibility)
    }

    pub fn depolarizing(lambda: f64) -> Result<Self> {
        Self::new(ChannelKind::Depolarizing, lambda)
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn parameter(&self) -> f64 {
        self.parameter
    }

    pub fn operators(&self) -> &[Matrix2] {
        &self.operators
    }

    /// Largest absolute entry of `sum_i K_i^dag K_i - I`.
    pub fn completeness_defect(&self) -> f64 {
        let mut sum = Matrix2::zero();
        for k in &self.operators {
            sum = sum.add(&k.adjoint().mul(k));
        }
        sum.max_abs_diff(&Matrix2::identity())
    }
}

/// Apply independent Kraus channels to the two arms of a pair state:
/// `rho -> sum_ij (K_i^A x K_j^B) rho (K_i^A x K_j^B)^dag`.
pub fn apply_two_sided(rho: &Matrix4, a: &KrausSet, b: &KrausSet) -> Result<Matrix4> {
    rho.validate_density()?;
    let mut out = Matrix4::zero();
    for ka in a.operators() {
        for kb in b.operators() {
            let op = Matrix4::kron(ka, kb);
            out = out.add(&op.mul(rho).mul(&op.adjoint()));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Measurement bases and disturbance
// ---------------------------------------------------------------------------

/// Measurement basis: the eigenbasis of one of the Pauli operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasBasis {
    X,
    Y,
    Z,
}

impl MeasBasis {
    pub const ALL: [MeasBasis; 3] = [MeasBasis::X, MeasBasis::Y, MeasBasis::Z];

    /// The orthonormal state pair for this basis, indexed by outcome bit.
    pub fn states(self) -> [[Complex64; 2]; 2] {
        let r = FRAC_1_SQRT_2;
        match self {
            MeasBasis::X => [[cr(r), cr(r)], [cr(r), cr(-r)]],
            MeasBasis::Y => [[cr(r), c(0.0, r)], [cr(r), c(0.0, -r)]],
            MeasBasis::Z => [[cr(1.0), cr(0.0)], [cr(0.0), cr(1.0)]],
        }
    }

    /// Bob's outcome that is perfectly correlated with Alice's outcome `a`
    /// on an ideal `|Phi+>` pair.
    ///
    /// In the Y basis the ideal correlation is anti-aligned (`|Phi+>` carries
    /// mass only on opposite Y outcomes), so agreement is defined after
    /// flipping Bob's bit; X and Z are aligned as-is.
    pub fn ideal_partner(self, a: u8) -> u8 {
        match self {
            MeasBasis::Y => 1 - a,
            _ => a,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MeasBasis::X => "X",
            MeasBasis::Y => "Y",
            MeasBasis::Z => "Z",
        }
    }
}

fn kron_vec(a: &[Complex64; 2], b: &[Complex64; 2]) -> [Complex64; 4] {
    [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]
}

/// Joint outcome probabilities for projective measurements on both arms.
///
/// Returns raw probabilities for outcomes (a, b) in the order
/// (0,0), (0,1), (1,0), (1,1); no bit relabelling is applied, so an ideal
/// `|Phi+>` measured Y x Y puts all mass on the anti-aligned outcomes.
pub fn measurement_joint(
    rho: &Matrix4,
    basis_a: MeasBasis,
    basis_b: MeasBasis,
) -> Result<[f64; 4]> {
    rho.validate_density()?;
    let sa = basis_a.states();
    let sb = basis_b.states();
    let mut out = [0.0f64; 4];
    for a in 0..2 {
        for b in 0..2 {
            out[2 * a + b] = rho.expectation(&kron_vec(&sa[a], &sb[b]));
        }
    }
    Ok(out)
}

/// Disturbance of a two-photon state in the given basis: the conditional
/// probability that Bob's outcome disagrees with the ideal `|Phi+>`
/// correlation, given Alice observed the basis reference state.
pub fn disturbance(rho: &Matrix4, basis: MeasBasis) -> Result<Probability> {
    rho.validate_density()?;
    let states = basis.states();
    let alice = &states[0];
    let partner = basis.ideal_partner(0) as usize;
    let agree = rho.expectation(&kron_vec(alice, &states[partner]));
    let disagree = rho.expectation(&kron_vec(alice, &states[1 - partner]));
    let denom = agree + disagree; // P(Alice observes the reference state)
    if denom <= 1e-15 {
        return Err(Error::DegenerateDenominator);
    }
    Probability::new(disagree / denom)
}

/// Per-basis error probabilities induced by receiver decoherence alone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceProfile {
    pub d_x: Probability,
    pub d_y: Probability,
    pub d_z: Probability,
}

impl DisturbanceProfile {
    pub fn new(d_x: Probability, d_y: Probability, d_z: Probability) -> Self {
        Self { d_x, d_y, d_z }
    }

    pub fn d(&self, basis: MeasBasis) -> Probability {
        match basis {
            MeasBasis::X => self.d_x,
            MeasBasis::Y => self.d_y,
            MeasBasis::Z => self.d_z,
        }
    }

    /// Average disturbance `(D_X + D_Z) / 2` used by the conclusive-event
    /// rule and the weak-noise closed forms.
    pub fn d_avg(&self) -> Probability {
        Probability::new(0.5 * (self.d_x.value() + self.d_z.value()))
            .expect("average of probabilities")
    }

    /// Differential disturbance `D_X - D_Z`.
    pub fn d_minus(&self) -> f64 {
        self.d_x.value() - self.d_z.value()
    }
}

/// Disturbance in all three bases of the `|Phi+>` state decohered by the
/// two given single-arm channels.
pub fn disturbance_profile(a: &KrausSet, b: &KrausSet) -> Result<DisturbanceProfile> {
    let rho = apply_two_sided(&BellState::PhiPlus.density(), a, b)?;
    Ok(DisturbanceProfile::new(
        disturbance(&rho, MeasBasis::X)?,
        disturbance(&rho, MeasBasis::Y)?,
        disturbance(&rho, MeasBasis::Z)?,
    ))
}

// ---------------------------------------------------------------------------
// Bell-diagonal weights and QBER conversions
// ---------------------------------------------------------------------------

/// Weights of a Bell-diagonal two-qubit state: no error, bit flip, combined
/// bit-phase flip and phase flip respectively.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellDiagonal {
    pub p_i: Probability,
    pub p_x: Probability,
    pub p_y: Probability,
    pub p_z: Probability,
}

impl BellDiagonal {
    pub fn new(p_i: f64, p_x: f64, p_y: f64, p_z: f64) -> Result<Self> {
        let sum = p_i + p_x + p_y + p_z;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Normalization { sum });
        }
        Ok(Self {
            p_i: Probability::new(p_i)?,
            p_x: Probability::new(p_x)?,
            p_y: Probability::new(p_y)?,
            p_z: Probability::new(p_z)?,
        })
    }

    pub fn as_array(&self) -> [f64; 4] {
        [
            self.p_i.value(),
            self.p_x.value(),
            self.p_y.value(),
            self.p_z.value(),
        ]
    }

    /// Shannon entropy of the weight vector, in bits.
    pub fn entropy(&self) -> f64 {
        shannon_entropy4(self.as_array()).expect("validated on construction")
    }

    /// The corresponding two-qubit density matrix (mixture of Bell
    /// projectors, with the bit-flip weight on `|Psi+>` and the phase-flip
    /// weight on `|Phi->`).
    pub fn density(&self) -> Matrix4 {
        BellState::PhiPlus
            .density()
            .scale(self.p_i.value())
            .add(&BellState::PsiPlus.density().scale(self.p_x.value()))
            .add(&BellState::PsiMinus.density().scale(self.p_y.value()))
            .add(&BellState::PhiMinus.density().scale(self.p_z.value()))
    }
}

/// Bell-diagonal weights from the per-basis QBER triple:
/// `p_X = (e_Z - e_X + e_Y)/2`, `p_Y = (e_Z + e_X - e_Y)/2`,
/// `p_Z = (e_X + e_Y - e_Z)/2`, `p_I = 1 - p_X - p_Y - p_Z`.
///
/// Fails when the triple violates the triangle-like feasibility conditions
/// (some weight would be negative).
pub fn bell_projections(
    e_x: Probability,
    e_y: Probability,
    e_z: Probability,
) -> Result<BellDiagonal> {
    let (ex, ey, ez) = (e_x.value(), e_y.value(), e_z.value());
    let p_x = 0.5 * (ez - ex + ey);
    let p_y = 0.5 * (ez + ex - ey);
    let p_z = 0.5 * (ex + ey - ez);
    let p_i = 1.0 - p_x - p_y - p_z;
    for p in [p_i, p_x, p_y, p_z] {
        if p < -PROB_CLAMP_BAND {
            return Err(Error::InfeasibleQber {
                e_x: ex,
                e_y: ey,
                e_z: ez,
            });
        }
    }
    BellDiagonal::new(p_i.max(0.0), p_x.max(0.0), p_y.max(0.0), p_z.max(0.0))
}

/// Invert [`bell_projections`]: per-basis QBERs of a Bell-diagonal state,
/// returned in (e_X, e_Y, e_Z) order.
pub fn qber_from_bell(p: &BellDiagonal) -> (Probability, Probability, Probability) {
    let [_, px, py, pz] = p.as_array();
    let e = |v: f64| Probability::new(v).expect("sum of weights stays in [0, 1]");
    (e(py + pz), e(px + pz), e(px + py))
}

/// Projections of an arbitrary two-photon state onto the four Bell states.
pub fn bell_weights(rho: &Matrix4) -> Result<BellDiagonal> {
    rho.validate_density()?;
    BellDiagonal::new(
        rho.expectation(&BellState::PhiPlus.vector()),
        rho.expectation(&BellState::PsiPlus.vector()),
        rho.expectation(&BellState::PsiMinus.vector()),
        rho.expectation(&BellState::PhiMinus.vector()),
    )
}
