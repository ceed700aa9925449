//! Single-qubit state algebra in the {|+>, |->} basis.
//!
//! A rotation state is |θ> = cos θ |+> + i sin θ |->. In this basis the
//! Pauli X is diag(1, -1) and Z swaps |+> and |->, so X|θ> = |-θ> and
//! Z|θ> = -i|θ + π/2>.

use std::f64::consts::{PI, TAU};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};

/// Tolerance used for every invariant check on states.
pub const TOL: f64 = 1e-12;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// A rotation angle in radians, normalized to (-π, π].
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);

    pub fn new(radians: f64) -> Result<Self> {
        if !radians.is_finite() {
            return Err(Error::invalid(format!(
                "angle must be finite, got {radians}"
            )));
        }
        let mut r = radians.rem_euclid(TAU);
        if r > PI {
            r -= TAU;
        }
        Ok(Angle(r))
    }

    /// π / 2^l, the rotation angle at Clifford-hierarchy level `l`.
    pub fn clifford(l: u32) -> Self {
        Angle(PI / 2f64.powi(l as i32))
    }

    pub fn radians(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Angle {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Angle::new(v)
    }
}

impl From<Angle> for f64 {
    fn from(a: Angle) -> f64 {
        a.0
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// 2x2 density matrix in the {|+>, |->} basis. `rho_mp` is the conjugate of
/// `rho_pm` and is not stored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix2 {
    rho_pp: f64,
    rho_mm: f64,
    rho_pm: Complex64,
}

/// Components of a state in the frame {|θ>, Z|θ>}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameComponents {
    /// Weight on Z|θ>, i.e. the infidelity with |θ>.
    pub eps: f64,
    /// Coherence <θ|ρ Z|θ>.
    pub coherence: Complex64,
}

impl DensityMatrix2 {
    /// Builds a state, clipping last-digit PSD drift and rejecting anything
    /// further than [`TOL`] from a valid density matrix.
    pub fn new(rho_pp: f64, rho_mm: f64, rho_pm: Complex64) -> Result<Self> {
        if !(rho_pp.is_finite()
            && rho_mm.is_finite()
            && rho_pm.re.is_finite()
            && rho_pm.im.is_finite())
        {
            return Err(Error::invalid("density matrix entries must be finite"));
        }
        if (rho_pp + rho_mm - 1.0).abs() > TOL {
            return Err(Error::invalid(format!(
                "trace {} differs from one",
                rho_pp + rho_mm
            )));
        }
        if rho_pp < -TOL || rho_mm < -TOL {
            return Err(Error::NotPsd {
                det: rho_pp * rho_mm - rho_pm.norm_sqr(),
            });
        }
        let pp = rho_pp.clamp(0.0, 1.0);
        let mm = rho_mm.clamp(0.0, 1.0);
        let det = pp * mm - rho_pm.norm_sqr();
        let mut pm = rho_pm;
        // Rounding of a pure state leaves det ~ -1e-17; only rescale real drift.
        if det < -1e-15 {
            if det < -TOL {
                return Err(Error::NotPsd { det });
            }
            let n = pm.norm();
            if n > 0.0 {
                pm *= (pp * mm).sqrt() / n;
            }
        }
        Ok(DensityMatrix2 {
            rho_pp: pp,
            rho_mm: mm,
            rho_pm: pm,
        })
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix2 {
            rho_pp: 0.5,
            rho_mm: 0.5,
            rho_pm: Complex64::new(0.0, 0.0),
        }
    }

    /// Diagonal state with weight `pp` on |+>.
    pub fn diagonal(pp: f64) -> Result<Self> {
        check_probability("rho_pp", pp)?;
        Self::new(pp, 1.0 - pp, Complex64::new(0.0, 0.0))
    }

    pub fn rho_pp(&self) -> f64 {
        self.rho_pp
    }

    pub fn rho_mm(&self) -> f64 {
        self.rho_mm
    }

    pub fn rho_pm(&self) -> Complex64 {
        self.rho_pm
    }

    pub fn rho_mp(&self) -> Complex64 {
        self.rho_pm.conj()
    }

    pub fn det(&self) -> f64 {
        self.rho_pp * self.rho_mm - self.rho_pm.norm_sqr()
    }

    pub fn is_pure(&self) -> bool {
        self.det().abs() <= TOL
    }

    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        [
            [Complex64::new(self.rho_pp, 0.0), self.rho_pm],
            [self.rho_pm.conj(), Complex64::new(self.rho_mm, 0.0)],
        ]
    }

    /// X ρ X: flips the sign of the coherence.
    pub fn conj_x(&self) -> Self {
        DensityMatrix2 {
            rho_pm: -self.rho_pm,
            ..*self
        }
    }

    /// Z ρ Z: swaps the populations and conjugates the coherence.
    pub fn conj_z(&self) -> Self {
        DensityMatrix2 {
            rho_pp: self.rho_mm,
            rho_mm: self.rho_pp,
            rho_pm: self.rho_pm.conj(),
        }
    }

    /// Convex combination (1 - w)·self + w·other.
    pub fn mix(&self, other: &Self, w: f64) -> Result<Self> {
        check_probability("mixing weight", w)?;
        let a = 1.0 - w;
        Self::new(
            a * self.rho_pp + w * other.rho_pp,
            a * self.rho_mm + w * other.rho_mm,
            self.rho_pm * a + other.rho_pm * w,
        )
    }

    /// U ρ U† for a 2x2 unitary given in the {|+>, |->} basis.
    pub fn apply_unitary(&self, u: &[[Complex64; 2]; 2]) -> Result<Self> {
        let r = self.matrix();
        let mut ur = [[Complex64::new(0.0, 0.0); 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                ur[a][b] = u[a][0] * r[0][b] + u[a][1] * r[1][b];
            }
        }
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                out[a][b] = ur[a][0] * u[b][0].conj() + ur[a][1] * u[b][1].conj();
            }
        }
        Self::new(out[0][0].re, out[1][1].re, out[0][1])
    }

    /// Decomposes the state in the frame {|θ>, Z|θ>}.
    pub fn frame_components(&self, theta: Angle) -> FrameComponents {
        let (v, w) = frame_vectors(theta);
        let r = self.matrix();
        let sandwich = |x: &[Complex64; 2], y: &[Complex64; 2]| {
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..2 {
                for b in 0..2 {
                    acc += x[a].conj() * r[a][b] * y[b];
                }
            }
            acc
        };
        FrameComponents {
            eps: sandwich(&w, &w).re,
            coherence: sandwich(&v, &w),
        }
    }

    /// Inverse of [`frame_components`](Self::frame_components):
    /// (1-ε)|θ><θ| + ε Z|θ><θ|Z + b |θ><θ|Z + b* Z|θ><θ|.
    pub fn from_frame(theta: Angle, eps: f64, coherence: Complex64) -> Result<Self> {
        check_probability("eps", eps)?;
        let (v, w) = frame_vectors(theta);
        let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                m[a][b] = v[a] * v[b].conj() * (1.0 - eps)
                    + w[a] * w[b].conj() * eps
                    + v[a] * w[b].conj() * coherence
                    + w[a] * v[b].conj() * coherence.conj();
            }
        }
        Self::new(m[0][0].re, m[1][1].re, m[0][1])
    }
}

/// (|θ>, Z|θ>) as coefficient vectors in the {|+>, |->} basis.
fn frame_vectors(theta: Angle) -> ([Complex64; 2], [Complex64; 2]) {
    let (s, c) = theta.radians().sin_cos();
    (
        [Complex64::new(c, 0.0), I * s],
        [I * s, Complex64::new(c, 0.0)],
    )
}

/// The pure rotation state |θ>.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PureRotationState {
    pub angle: Angle,
}

impl PureRotationState {
    pub fn new(angle: Angle) -> Self {
        PureRotationState { angle }
    }

    pub fn density(&self) -> DensityMatrix2 {
        make_rotation_density(self.angle)
    }
}

/// |θ><θ|: ρ++ = cos²θ, ρ-- = sin²θ, ρ+- = -i cosθ sinθ.
pub fn make_rotation_density(theta: Angle) -> DensityMatrix2 {
    let (s, c) = theta.radians().sin_cos();
    DensityMatrix2 {
        rho_pp: c * c,
        rho_mm: s * s,
        rho_pm: Complex64::new(0.0, -c * s),
    }
}

/// <θ|ρ|θ>.
pub fn fidelity_with(rho: &DensityMatrix2, theta: Angle) -> f64 {
    let (s, c) = theta.radians().sin_cos();
    let f = c * c * rho.rho_pp + s * s * rho.rho_mm + 2.0 * (I * c * s * rho.rho_pm).re;
    f.clamp(0.0, 1.0)
}

/// ½‖ρ - |θ><θ|‖₁. The difference is traceless Hermitian, so its
/// eigenvalues are ±sqrt(a² + |c|²).
pub fn trace_distance_to(rho: &DensityMatrix2, theta: Angle) -> f64 {
    let pure = make_rotation_density(theta);
    let a = rho.rho_pp - pure.rho_pp;
    let c = rho.rho_pm - pure.rho_pm;
    (a * a + c.norm_sqr()).sqrt().min(1.0)
}

/// (1 - p_x - p_z)ρ + p_x XρX + p_z ZρZ.
pub fn apply_pauli_channel(rho: &DensityMatrix2, p_x: f64, p_z: f64) -> Result<DensityMatrix2> {
    check_probability("p_x", p_x)?;
    check_probability("p_z", p_z)?;
    if p_x + p_z > 1.0 + TOL {
        return Err(Error::Probability(format!("p_x + p_z = {} > 1", p_x + p_z)));
    }
    let keep = 1.0 - p_x - p_z;
    DensityMatrix2::new(
        (1.0 - p_z) * rho.rho_pp + p_z * rho.rho_mm,
        (1.0 - p_z) * rho.rho_mm + p_z * rho.rho_pp,
        rho.rho_pm * (keep - p_x) + rho.rho_pm.conj() * p_z,
    )
}

/// e^{iφZ} in the {|+>, |->} basis; maps |θ> to |θ + φ>.
pub fn rz(phi: f64) -> [[Complex64; 2]; 2] {
    let (s, c) = phi.sin_cos();
    [
        [Complex64::new(c, 0.0), I * s],
        [I * s, Complex64::new(c, 0.0)],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ang(x: f64) -> Angle {
        Angle::new(x).unwrap()
    }

    #[test]
    fn angle_normalization() {
        assert_eq!(ang(PI).radians(), PI);
        assert!((ang(-PI).radians() - PI).abs() < 1e-15);
        assert!((ang(3.0 * PI / 2.0).radians() + PI / 2.0).abs() < 1e-15);
        assert!(Angle::new(f64::NAN).is_err());
        assert!(Angle::new(f64::INFINITY).is_err());
    }

    #[test]
    fn rotation_density_examples() {
        let r = make_rotation_density(Angle::ZERO);
        assert_eq!((r.rho_pp(), r.rho_mm()), (1.0, 0.0));
        assert_eq!(r.rho_pm().norm(), 0.0);

        let r = make_rotation_density(ang(PI / 4.0));
        assert!((r.rho_pp() - 0.5).abs() < 1e-15);
        assert!((r.rho_pm() - Complex64::new(0.0, -0.5)).norm() < 1e-15);

        let r = make_rotation_density(ang(PI / 8.0));
        assert!((r.rho_pp() - 0.853_553_390_593_273_7).abs() < 1e-15);
        assert!((r.rho_mm() - 0.146_446_609_406_726_24).abs() < 1e-15);
        assert!((r.rho_pm().im + 0.353_553_390_593_273_7).abs() < 1e-15);
        assert!(r.is_pure());
    }

    #[test]
    fn fidelity_examples() {
        let t = ang(0.3);
        assert!((fidelity_with(&make_rotation_density(t), t) - 1.0).abs() < 1e-15);
        let orth = make_rotation_density(ang(0.3 + PI / 2.0));
        assert!(fidelity_with(&orth, t) < 1e-15);
        assert_eq!(fidelity_with(&DensityMatrix2::maximally_mixed(), t), 0.5);
    }

    #[test]
    fn trace_distance_examples() {
        let t = ang(-0.7);
        assert!(trace_distance_to(&make_rotation_density(t), t) < 1e-15);
        let orth = make_rotation_density(ang(-0.7 + PI / 2.0));
        assert!((trace_distance_to(&orth, t) - 1.0).abs() < 1e-14);
    }

    /// Eigenvalue oracle for ½‖A‖₁ of a 2x2 Hermitian matrix, independent of
    /// the closed form used by the implementation.
    fn half_trace_norm(m: [[Complex64; 2]; 2]) -> f64 {
        let a = m[0][0].re;
        let d = m[1][1].re;
        let b = m[0][1];
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        0.5 * ((mean + rad).abs() + (mean - rad).abs())
    }

    #[test]
    fn diagonal_frame_state_has_trace_distance_eps() {
        let t = ang(0.41);
        let eps = 0.0123;
        let rho = DensityMatrix2::from_frame(t, eps, Complex64::new(0.0, 0.0)).unwrap();
        let pure = make_rotation_density(t).matrix();
        let m = rho.matrix();
        let mut diff = [[Complex64::new(0.0, 0.0); 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                diff[a][b] = m[a][b] - pure[a][b];
            }
        }
        assert!((half_trace_norm(diff) - eps).abs() < 1e-15);
        assert!((trace_distance_to(&rho, t) - eps).abs() < 1e-15);
    }

    #[test]
    fn pauli_channel_examples() {
        let t = ang(0.1);
        let rho = make_rotation_density(t);
        assert_eq!(apply_pauli_channel(&rho, 0.0, 0.0).unwrap(), rho);
        let mixed = DensityMatrix2::maximally_mixed();
        let out = apply_pauli_channel(&mixed, 0.1, 0.2).unwrap();
        assert!((out.rho_pp() - 0.5).abs() < 1e-16 && out.rho_pm().norm() == 0.0);
        let out = apply_pauli_channel(&rho, 0.0, 1e-3).unwrap();
        assert!((1.0 - fidelity_with(&out, t) - 1e-3).abs() < 1e-15);
        assert!(apply_pauli_channel(&rho, 0.6, 0.6).is_err());
        assert!(apply_pauli_channel(&rho, -0.1, 0.0).is_err());
    }

    #[test]
    fn psd_clipping() {
        let ok = DensityMatrix2::new(0.5, 0.5, Complex64::new(0.5 + 1e-13, 0.0)).unwrap();
        assert!(ok.det() >= 0.0 && ok.det() < 1e-15);
        assert!(DensityMatrix2::new(0.5, 0.5, Complex64::new(0.51, 0.0)).is_err());
        assert!(DensityMatrix2::new(0.6, 0.5, Complex64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn rz_shifts_angle() {
        let rho = make_rotation_density(ang(0.2));
        let out = rho.apply_unitary(&rz(-PI / 8.0)).unwrap();
        assert!((fidelity_with(&out, ang(0.2 - PI / 8.0)) - 1.0).abs() < 1e-14);
        assert!((fidelity_with(&rho.conj_x(), ang(-0.2)) - 1.0).abs() < 1e-14);
    }

    fn arb_state() -> impl Strategy<Value = DensityMatrix2> {
        (0.0..1.0f64, 0.0..1.0f64, 0.0..TAU).prop_map(|(pp, r, ph)| {
            let max = (pp * (1.0 - pp)).sqrt();
            DensityMatrix2::new(pp, 1.0 - pp, Complex64::from_polar(r * max, ph)).unwrap()
        })
    }

    proptest! {
        #[test]
        fn rotation_states_are_pure(t in -10.0..10.0f64) {
            prop_assert!(make_rotation_density(ang(t)).det().abs() <= TOL);
        }

        #[test]
        fn fidelities_with_orthogonal_pair_sum_to_one(rho in arb_state(), t in -PI..PI) {
            let f = fidelity_with(&rho, ang(t)) + fidelity_with(&rho, ang(t + PI / 2.0));
            prop_assert!((f - 1.0).abs() <= TOL);
        }

        #[test]
        fn diagonal_frame_distance_equals_infidelity(eps in 0.0..1.0f64, t in -PI..PI) {
            let rho = DensityMatrix2::from_frame(ang(t), eps, Complex64::new(0.0, 0.0)).unwrap();
            let d = trace_distance_to(&rho, ang(t));
            prop_assert!((d - (1.0 - fidelity_with(&rho, ang(t)))).abs() <= TOL);
        }

        #[test]
        fn pauli_channel_keeps_state_valid(rho in arb_state(), px in 0.0..0.5f64, pz in 0.0..0.5f64) {
            let out = apply_pauli_channel(&rho, px, pz).unwrap();
            prop_assert!((out.rho_pp() + out.rho_mm() - 1.0).abs() <= TOL);
            prop_assert!(out.det() >= -TOL);
        }

        #[test]
        fn frame_round_trip(rho in arb_state(), t in -PI..PI) {
            let fc = rho.frame_components(ang(t));
            let back = DensityMatrix2::from_frame(ang(t), fc.eps.clamp(0.0, 1.0), fc.coherence).unwrap();
            prop_assert!((back.rho_pp() - rho.rho_pp()).abs() < 1e-12);
            prop_assert!((back.rho_pm() - rho.rho_pm()).norm() < 1e-12);
        }
    }
}
