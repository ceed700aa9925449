//! Transversal injection: the post-selected channel, its angle maps and
//! acceptance rates, and the analytic level-1 infidelity.
//!
//! Injecting k copies of |α> transversally and post-selecting on trivial
//! syndromes projects onto span{|+_L>, |-_L>}. In that subspace every matrix
//! entry of the k-fold product is the k-th power of the single-copy entry, so
//! the whole channel is an entrywise power followed by normalization.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::qstate::{
    fidelity_with, make_rotation_density, Angle, DensityMatrix2, PureRotationState,
};

/// Acceptance below this is treated as an infeasible operating point.
pub const UNDERFLOW: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionOutcome {
    pub state: DensityMatrix2,
    pub accept_rate: f64,
}

fn check_k(k: u32) -> Result<()> {
    if k == 0 {
        Err(Error::invalid("k must be at least 1"))
    } else {
        Ok(())
    }
}

fn check_half_open(name: &str, a: Angle) -> Result<()> {
    if a.radians().abs() >= FRAC_PI_2 {
        Err(Error::invalid(format!(
            "|{name}| = {} must be below pi/2",
            a.radians().abs()
        )))
    } else {
        Ok(())
    }
}

/// β = arctan(tan^k α). For even k the power is taken of |tan α|, so the
/// result is non-negative; callers fix the sign with a free logical X.
pub fn output_angle(alpha: Angle, k: u32) -> Result<Angle> {
    check_k(k)?;
    check_half_open("alpha", alpha)?;
    let t = alpha.radians().tan();
    let tk = if k % 2 == 1 {
        t.powi(k as i32)
    } else {
        t.abs().powi(k as i32)
    };
    Angle::new(tk.atan())
}

/// α = sign(β)·arctan(|tan β|^{1/k}).
pub fn input_angle(beta: Angle, k: u32) -> Result<Angle> {
    check_k(k)?;
    check_half_open("beta", beta)?;
    let b = beta.radians();
    let a = b.tan().abs().powf(1.0 / k as f64).atan();
    Angle::new(a.copysign(b))
}

/// p_s^(0) = cos^{2k}α + sin^{2k}α.
pub fn accept_rate_ideal(alpha: Angle, k: u32) -> f64 {
    let (s, c) = alpha.radians().sin_cos();
    (c * c).powi(k as i32) + (s * s).powi(k as i32)
}

/// p_s^(m) = cos^{2(k-m)}α sin^{2m}α + sin^{2(k-m)}α cos^{2m}α, the
/// acceptance when m of the k copies carry a Z error.
pub fn accept_rate_m(alpha: Angle, k: u32, m: u32) -> Result<f64> {
    check_k(k)?;
    if m > k {
        return Err(Error::invalid(format!("m = {m} exceeds k = {k}")));
    }
    let (s, c) = alpha.radians().sin_cos();
    let (c2, s2) = (c * c, s * s);
    let (km, m) = ((k - m) as i32, m as i32);
    Ok(c2.powi(km) * s2.powi(m) + s2.powi(km) * c2.powi(m))
}

/// Post-selected pure output when m copies carry a Z error.
///
/// Amplitudes are ∝ (cos^{k-m}α sin^m α, i·(-1)^m sin^{k-m}α cos^m α) after
/// the same phase fix that makes the m = 0 branch exactly |β>. `phase_flipped`
/// records the (-1)^m: the branch is the mirror image |-φ> of the rotation
/// state |φ> its magnitudes describe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasedRotationState {
    pub state: PureRotationState,
    /// Normalized (|+>, |->) magnitudes before the phase is applied.
    pub coefficients: (f64, f64),
    pub phase_flipped: bool,
}

pub fn psi_m(alpha: Angle, k: u32, m: u32) -> Result<PhasedRotationState> {
    check_k(k)?;
    if m > k {
        return Err(Error::invalid(format!("m = {m} exceeds k = {k}")));
    }
    let (s, c) = alpha.radians().sin_cos();
    let (km, mi) = ((k - m) as i32, m as i32);
    let a = c.powi(km) * s.powi(mi);
    let b = s.powi(km) * c.powi(mi);
    let n = a.hypot(b);
    if n == 0.0 {
        return Err(Error::Underflow(0.0));
    }
    let flipped = m % 2 == 1;
    let signed_b = if flipped { -b } else { b };
    // (a, i b') ∝ (cos θ, i sin θ) up to a global sign.
    let mut theta = signed_b.atan2(a);
    if theta > FRAC_PI_2 {
        theta -= std::f64::consts::PI;
    } else if theta <= -FRAC_PI_2 {
        theta += std::f64::consts::PI;
    }
    Ok(PhasedRotationState {
        state: PureRotationState::new(Angle::new(theta)?),
        coefficients: (a / n, b / n),
        phase_flipped: flipped,
    })
}

/// The post-selected k-copy channel: entrywise k-th power, normalized, with
/// the coherence multiplied by i^{k-1} (the free phase fix).
pub fn ti_channel(rho_in: &DensityMatrix2, k: u32) -> Result<InjectionOutcome> {
    check_k(k)?;
    let ki = k as i32;
    let pp = rho_in.rho_pp().powi(ki);
    let mm = rho_in.rho_mm().powi(ki);
    let norm = pp + mm;
    if !(norm > UNDERFLOW) {
        return Err(Error::Underflow(norm));
    }
    let phase = Complex64::new(0.0, 1.0).powi(ki - 1);
    let pm = rho_in.rho_pm().powi(ki) * phase / norm;
    let state = DensityMatrix2::new(pp / norm, mm / norm, pm)?;
    Ok(InjectionOutcome {
        state,
        accept_rate: norm.min(1.0),
    })
}

/// Infidelity of the level-1 output with |output_angle(α, k)> when each copy
/// independently suffers a Z error with probability `p_group_z`.
///
/// Computed as the binomial mixture over the number of flipped copies m,
/// each branch weighted by p_s^(m) and contributing |ψ_m><ψ_m|.
pub fn level1_infidelity_analytic(alpha: Angle, k: u32, p_group_z: f64) -> Result<f64> {
    check_probability("p_group_z", p_group_z)?;
    let beta = output_angle(alpha, k)?;
    if p_group_z == 0.0 {
        return Ok(0.0);
    }
    let q = p_group_z;
    let mut total = 0.0;
    let mut wrong = 0.0;
    let mut binom = 1.0f64;
    for m in 0..=k {
        if m > 0 {
            binom = binom * (k - m + 1) as f64 / m as f64;
        }
        let w = binom * q.powi(m as i32) * (1.0 - q).powi((k - m) as i32);
        if w == 0.0 {
            continue;
        }
        let ps = accept_rate_m(alpha, k, m)?;
        let branch = psi_m(alpha, k, m)?;
        let f = fidelity_with(&make_rotation_density(branch.state.angle), beta);
        total += w * ps;
        wrong += w * ps * (1.0 - f);
    }
    if !(total > UNDERFLOW) {
        return Err(Error::Underflow(total));
    }
    Ok(wrong / total)
}

/// k²·|β|^{2(1-1/k)}·ε.
pub fn theorem1_bound(k: u32, beta: Angle, eps_in: f64) -> f64 {
    let kf = k as f64;
    kf * kf * beta.radians().abs().powf(2.0 * (1.0 - 1.0 / kf)) * eps_in
}

/// Input state (1-ε)|α><α| + ε Z|α><α|Z + b(|α><α|Z + Z|α><α|) with
/// α = input_angle(β, k).
pub fn theorem1_input_state(k: u32, beta: Angle, eps_in: f64, b: f64) -> Result<DensityMatrix2> {
    let alpha = input_angle(beta, k)?;
    DensityMatrix2::from_frame(alpha, eps_in, Complex64::new(b, 0.0))
}

/// Exact infidelity of ti_channel applied to the level-1 bound input state.
pub fn theorem1_exact(k: u32, beta: Angle, eps_in: f64, b: f64) -> Result<f64> {
    let rho = theorem1_input_state(k, beta, eps_in, b)?;
    let out = ti_channel(&rho, k)?;
    Ok(1.0 - fidelity_with(&out.state, output_angle(input_angle(beta, k)?, k)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{apply_pauli_channel, TOL};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn ang(x: f64) -> Angle {
        Angle::new(x).unwrap()
    }

    #[test]
    fn output_angle_examples() {
        assert_eq!(output_angle(ang(0.3), 1).unwrap(), ang(0.3));
        assert_eq!(output_angle(Angle::ZERO, 5).unwrap().radians(), 0.0);
        // arctan(tan³(π/8)) = arctan((√2-1)³) = arctan(5√2 - 7).
        let expected = (5.0 * 2f64.sqrt() - 7.0).atan();
        let got = output_angle(ang(PI / 8.0), 3).unwrap().radians();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.070_948_527_3).abs() < 1e-10);
        assert!((got - 0.070_948_2).abs() < 1e-6);
        assert!(output_angle(ang(PI / 2.0), 3).is_err());
    }

    #[test]
    fn input_angle_examples() {
        assert_eq!(input_angle(ang(0.2), 1).unwrap(), ang(0.2));
        let b = output_angle(ang(PI / 8.0), 3).unwrap();
        assert!((input_angle(b, 3).unwrap().radians() - PI / 8.0).abs() < 1e-12);
        let a = input_angle(ang(PI / 1024.0), 7).unwrap().radians();
        assert!((a - 0.41241).abs() < 5e-6);
    }

    #[test]
    fn accept_rate_examples() {
        assert_eq!(accept_rate_ideal(Angle::ZERO, 4), 1.0);
        for k in 1..8 {
            let v = accept_rate_ideal(ang(PI / 4.0), k);
            assert!((v - 2f64.powi(1 - k as i32)).abs() < 1e-15);
        }
        assert!((accept_rate_ideal(ang(PI / 8.0), 3) - 0.625).abs() < 1e-12);
        let a = ang(PI / 8.0);
        assert_eq!(accept_rate_m(a, 3, 0).unwrap(), accept_rate_ideal(a, 3));
        assert!((accept_rate_m(a, 3, 1).unwrap() - 0.125).abs() < 1e-15);
        for m in 0..=5 {
            let x = accept_rate_m(ang(0.2), 5, m).unwrap();
            let y = accept_rate_m(ang(0.2), 5, 5 - m).unwrap();
            assert!((x - y).abs() < 1e-16);
        }
        assert!(accept_rate_m(a, 3, 4).is_err());
    }

    #[test]
    fn psi_m_examples() {
        let a = ang(PI / 8.0);
        let b = output_angle(a, 3).unwrap();
        let p0 = psi_m(a, 3, 0).unwrap();
        assert!((p0.state.angle.radians() - b.radians()).abs() < 1e-14);
        assert!(!p0.phase_flipped);

        let (s, c) = (PI / 8.0).sin_cos();
        let p1 = psi_m(a, 3, 1).unwrap();
        let n = (c * c * s).hypot(s * s * c);
        assert!((p1.coefficients.0 - c * c * s / n).abs() < 1e-15);
        assert!((p1.coefficients.1 - s * s * c / n).abs() < 1e-15);
        assert!(p1.phase_flipped);

        let pk = psi_m(a, 3, 3).unwrap();
        assert!((pk.coefficients.0 - p0.coefficients.1).abs() < 1e-15);
        assert!((pk.coefficients.1 - p0.coefficients.0).abs() < 1e-15);
    }

    #[test]
    fn ti_channel_examples() {
        let rho = make_rotation_density(ang(0.3));
        let out = ti_channel(&rho, 1).unwrap();
        assert_eq!(out.accept_rate, 1.0);
        assert!((out.state.rho_pm() - rho.rho_pm()).norm() < 1e-16);

        let out = ti_channel(&DensityMatrix2::maximally_mixed(), 4).unwrap();
        assert_eq!(out.state, DensityMatrix2::maximally_mixed());
        assert!((out.accept_rate - 0.125).abs() < 1e-16);

        let out = ti_channel(&DensityMatrix2::diagonal(0.9).unwrap(), 2).unwrap();
        assert!((out.accept_rate - 0.82).abs() < 1e-15);
        assert!((out.state.rho_pp() - 0.81 / 0.82).abs() < 1e-15);
        assert!((out.state.rho_mm() - 0.01 / 0.82).abs() < 1e-15);
    }

    #[test]
    fn analytic_level1_matches_channel() {
        let a = ang(PI / 8.0);
        let q = 1.3333e-4;
        let rho = apply_pauli_channel(&make_rotation_density(a), 0.0, q).unwrap();
        let out = ti_channel(&rho, 3).unwrap();
        let via_channel = 1.0 - fidelity_with(&out.state, output_angle(a, 3).unwrap());
        let analytic = level1_infidelity_analytic(a, 3, q).unwrap();
        assert!((via_channel - analytic).abs() < 1e-10);
        assert_eq!(level1_infidelity_analytic(a, 3, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn analytic_level1_linear_in_p() {
        // Linear while q is small against α², where the first-order branch dominates.
        let a = ang(PI / 8.0);
        let lo = level1_infidelity_analytic(a, 3, 1e-4).unwrap();
        let hi = level1_infidelity_analytic(a, 3, 1e-3).unwrap();
        assert!((hi / lo / 10.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn theorem1_bound_examples() {
        assert_eq!(theorem1_bound(4, ang(0.1), 0.0), 0.0);
        assert!((theorem1_bound(1, ang(0.1), 1e-3) - 1e-3).abs() < 1e-18);
        let v = theorem1_bound(3, ang(0.070_948_2), 1e-4);
        assert!((v - 2.6434e-5).abs() < 1e-9);
    }

    #[test]
    fn theorem1_holds_on_dephased_grid() {
        for k in 2..=8 {
            for &beta in &[1e-3, 1e-2, 0.1, 0.3] {
                for &eps in &[1e-6, 1e-5, 1e-4, 1e-3] {
                    let exact = theorem1_exact(k, ang(beta), eps, 0.0).unwrap();
                    let bound = theorem1_bound(k, ang(beta), eps) * (1.0 + 10.0 * eps.sqrt());
                    assert!(
                        exact <= bound,
                        "k={k} beta={beta} eps={eps}: {exact} > {bound}"
                    );
                }
            }
        }
    }

    #[test]
    fn theorem1_first_order_coefficient() {
        // Dephased input: the ratio to the bound is below one and already
        // independent of ε, i.e. the bound's linear term is the leading one.
        let (k, beta) = (4, ang(0.01));
        let r1 = theorem1_exact(k, beta, 1e-5, 0.0).unwrap() / theorem1_bound(k, beta, 1e-5);
        let r2 = theorem1_exact(k, beta, 1e-6, 0.0).unwrap() / theorem1_bound(k, beta, 1e-6);
        assert!(r1 < 1.0 && (r1 / r2 - 1.0).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn pure_inputs_map_to_output_angle(a in 1e-6..(PI / 4.0), k in 1u32..=15) {
            let alpha = ang(a);
            let out = ti_channel(&make_rotation_density(alpha), k).unwrap();
            let f = fidelity_with(&out.state, output_angle(alpha, k).unwrap());
            prop_assert!(f >= 1.0 - TOL);
            prop_assert!((out.accept_rate - accept_rate_ideal(alpha, k)).abs() <= TOL);
        }

        #[test]
        fn negative_angles_keep_their_sign_for_odd_k(a in 1e-6..(PI / 4.0), j in 0u32..7) {
            let k = 2 * j + 1;
            let alpha = ang(-a);
            let out = ti_channel(&make_rotation_density(alpha), k).unwrap();
            let beta = output_angle(alpha, k).unwrap();
            prop_assert!(beta.radians() <= 0.0);
            prop_assert!(fidelity_with(&out.state, beta) >= 1.0 - TOL);
        }

        #[test]
        fn output_angle_monotone(a in 1e-4..(PI / 4.0 - 1e-3), k in 2u32..12) {
            let lo = output_angle(ang(a), k).unwrap().radians();
            let hi = output_angle(ang(a + 1e-4), k).unwrap().radians();
            let next = output_angle(ang(a), k + 1).unwrap().radians();
            prop_assert!(hi > lo);
            prop_assert!(next < lo);
        }

        #[test]
        fn round_trip(b in -1.5..1.5f64, k in 1u32..20) {
            let a = input_angle(ang(b), k).unwrap();
            let back = output_angle(a, k).unwrap().radians();
            if k % 2 == 1 {
                prop_assert!((back - b).abs() < 1e-12);
            } else {
                prop_assert!((back - b.abs()).abs() < 1e-12);
            }
        }

        #[test]
        fn channel_output_is_a_state(pp in 0.0..1.0f64, r in 0.0..1.0f64, ph in 0.0..std::f64::consts::TAU, k in 1u32..12) {
            let max = (pp * (1.0 - pp)).sqrt();
            let rho = DensityMatrix2::new(pp, 1.0 - pp, Complex64::from_polar(r * max, ph)).unwrap();
            if let Ok(out) = ti_channel(&rho, k) {
                prop_assert!(out.state.det() >= -TOL);
                prop_assert!(out.accept_rate > 0.0 && out.accept_rate <= 1.0);
            }
        }
    }
}
