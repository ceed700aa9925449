//! The MLTI protocol: backward angle derivation, magic-state pumping, and
//! the forward noisy evaluation of a multi-level plan.

use std::f64::consts::{FRAC_PI_8, PI};

use serde::{Deserialize, Serialize};

use crate::costs::{protocol_volume, LevelVolumeInput, MagicCatalog, VolumeReport};
use crate::error::{check_probability, Error, Result};
use crate::exec::{map_reduce, Execution};
use crate::injection::{input_angle, level1_infidelity_analytic, output_angle, ti_channel};
use crate::level1mc::{level1_discard_probability, GROUP_SIZE};
use crate::noise::{
    is_valid_distance, logical_rate_rect, undetected_group_z_rate, LogicalRates, PhysicalNoise,
};
use crate::qstate::{
    apply_pauli_channel, fidelity_with, make_rotation_density, rz, Angle, DensityMatrix2,
};

/// Pumping needs the lower level's output angle below this in magnitude.
pub const PUMP_WINDOW: f64 = PI / 16.0;

/// Largest k tried when scanning for pump-feasible injection sizes.
pub const MAX_K: u32 = 64;

/// Largest number of levels ideal_optimum and the optimizer handle.
pub const MAX_LEVELS: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSpec {
    pub k: u32,
    pub d_x: u32,
    pub d_z: u32,
    /// Magic state consumed by the pump feeding this level; unused at level 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magic_label: Option<String>,
}

/// Final rotation angle of a plan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Angle(Angle),
    /// γ = π/2^l.
    Clifford(u32),
}

impl Target {
    pub fn angle(&self) -> Angle {
        match *self {
            Target::Angle(a) => a,
            Target::Clifford(l) => Angle::clifford(l),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plan {
    pub levels: Vec<LevelSpec>,
    pub target: Target,
}

impl Plan {
    pub fn ks(&self) -> Vec<u32> {
        self.levels.iter().map(|l| l.k).collect()
    }

    /// Structural checks; angle feasibility is left to [`derive_angles`].
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.levels.first() else {
            return Err(Error::invalid("plan has no levels"));
        };
        if first.d_z == 0 || first.d_z % GROUP_SIZE != 0 {
            return Err(Error::invalid(format!(
                "level 1: d_z = {} must be a positive multiple of {GROUP_SIZE}",
                first.d_z
            )));
        }
        if first.k != first.d_z / GROUP_SIZE {
            return Err(Error::invalid(format!(
                "level 1: k = {} must equal d_z/{GROUP_SIZE} = {}",
                first.k,
                first.d_z / GROUP_SIZE
            )));
        }
        if !is_valid_distance(first.d_x) {
            return Err(Error::invalid(format!(
                "level 1: d_x = {} is not a supported distance",
                first.d_x
            )));
        }
        for (i, lv) in self.levels.iter().enumerate().skip(1) {
            let r = i + 1;
            if lv.k < 2 {
                return Err(Error::invalid(format!(
                    "level {r}: k = {} (need k >= 2)",
                    lv.k
                )));
            }
            for (name, d) in [("d_x", lv.d_x), ("d_z", lv.d_z)] {
                if !is_valid_distance(d) {
                    return Err(Error::invalid(format!(
                        "level {r}: {name} = {d} is not a supported distance"
                    )));
                }
            }
            if lv.magic_label.is_none() {
                return Err(Error::invalid(format!(
                    "level {r}: magic_label is required"
                )));
            }
        }
        if let Target::Clifford(l) = self.target {
            if l > 60 {
                return Err(Error::invalid(format!(
                    "Clifford level {l} is out of range"
                )));
            }
        }
        if self.target.angle().radians() == 0.0 {
            return Err(Error::invalid("target angle must be non-zero"));
        }
        Ok(())
    }
}

/// Input and output angle of one level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelAngles {
    pub alpha: Angle,
    pub beta: Angle,
}

fn sign(a: Angle) -> f64 {
    if a.radians() < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Output angle the pump needs from the level below so that level r sees
/// input α: sgn(α)·π/8 − α.
pub fn pump_source_angle(alpha: Angle) -> Result<Angle> {
    Angle::new(sign(alpha) * FRAC_PI_8 - alpha.radians())
}

/// Backward recursion from the target: α_r = input_angle(β_r, k_r) and
/// β_{r−1} = sgn(α_r)·π/8 − α_r, requiring |β_{r−1}| < π/16.
pub fn derive_angles(target: Angle, ks: &[u32]) -> Result<Vec<LevelAngles>> {
    if ks.is_empty() {
        return Err(Error::invalid("no levels"));
    }
    let mut out = vec![
        LevelAngles {
            alpha: Angle::ZERO,
            beta: Angle::ZERO
        };
        ks.len()
    ];
    let mut beta = target;
    for r in (0..ks.len()).rev() {
        let alpha = input_angle(beta, ks[r])?;
        out[r] = LevelAngles { alpha, beta };
        if r > 0 {
            beta = pump_source_angle(alpha)?;
            if beta.radians().abs() >= PUMP_WINDOW {
                return Err(Error::PumpInfeasible {
                    level: r,
                    beta: beta.radians(),
                });
            }
        }
    }
    Ok(out)
}

/// k ≥ 2 (up to [`MAX_K`]) for which the input angle of a level with output
/// `beta` is within `window` of ±π/8.
pub fn pump_feasible_ks(beta: Angle, window: f64) -> Vec<u32> {
    (2..=MAX_K)
        .filter(|&k| {
            input_angle(beta, k)
                .map(|a| (FRAC_PI_8 - a.radians().abs()).abs() < window)
                .unwrap_or(false)
        })
        .collect()
}

/// Sign of a pump: the rotation is R_z(−s·π/8) followed by a frame X,
/// taking |β> to |s·π/8 − β>.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PumpSign {
    Positive,
    Negative,
}

impl PumpSign {
    /// Sign needed to feed a level whose input angle is `alpha`.
    pub fn toward(alpha: Angle) -> Self {
        if alpha.radians() < 0.0 {
            PumpSign::Negative
        } else {
            PumpSign::Positive
        }
    }

    fn value(self) -> f64 {
        match self {
            PumpSign::Positive => 1.0,
            PumpSign::Negative => -1.0,
        }
    }
}

/// Pauli channel with each rate capped at 1/2 (full dephasing).
fn pauli(rho: &DensityMatrix2, rates: LogicalRates) -> Result<DensityMatrix2> {
    apply_pauli_channel(rho, rates.p_x.min(0.5), rates.p_z.min(0.5))
}

/// Rotates by −s·π/8, applies the frame X, then a Pauli channel whose Z rate
/// is `magic_infidelity` plus the surgery Z rate.
pub fn pump(
    rho: &DensityMatrix2,
    sign: PumpSign,
    magic_infidelity: f64,
    surgery: LogicalRates,
) -> Result<DensityMatrix2> {
    check_probability("magic_infidelity", magic_infidelity)?;
    let rotated = rho.apply_unitary(&rz(-sign.value() * FRAC_PI_8))?.conj_x();
    pauli(
        &rotated,
        LogicalRates {
            p_x: surgery.p_x,
            p_z: surgery.p_z + magic_infidelity,
        },
    )
}

/// Logical error of pumping a d_x × d_z output: merge memory and an equal
/// measurement term over d_z cycles on the merged patch, plus the average of
/// the Y-measurement idle (d_z/2 cycles) and the plain idle (2.5·d_z/2).
pub fn pump_rates(d_x: u32, d_z: u32, noise: PhysicalNoise) -> Result<LogicalRates> {
    let dz = d_z as f64;
    let merged = logical_rate_rect(d_x + d_z + 1, d_z, noise)?;
    let idle = logical_rate_rect(d_x, d_z, noise)?;
    Ok(merged
        .scaled(2.0 * dz)
        .plus(idle.scaled(0.5 * dz / 2.0))
        .plus(idle.scaled(0.5 * 2.5 * dz / 2.0)))
}

/// Memory error of a level-r surgery round: (d_z + 2) cycles on the merged
/// (d_x + d_z + 1) × d_z patch.
pub fn surgery_rates(d_x: u32, d_z: u32, noise: PhysicalNoise) -> Result<LogicalRates> {
    Ok(logical_rate_rect(d_x + d_z + 1, d_z, noise)?.scaled((d_z + 2) as f64))
}

/// Memory error of the two level-1 syndrome cycles.
pub fn level1_memory_rates(d_x: u32, d_z: u32, noise: PhysicalNoise) -> Result<LogicalRates> {
    Ok(logical_rate_rect(d_x, d_z, noise)?.scaled(2.0))
}

/// Level-1 physical error model: per-group undetected Z rate and the
/// probability the two-round post-selection discards the run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level1Rates {
    pub p_group_z: f64,
    pub p_discard: f64,
}

impl Level1Rates {
    /// 2/15·p and the independent-fault discard probability of the circuit.
    pub fn model(d_x: u32, d_z: u32, noise: PhysicalNoise) -> Result<Self> {
        Ok(Level1Rates {
            p_group_z: undetected_group_z_rate(noise),
            p_discard: level1_discard_probability(d_x, d_z, noise)?,
        })
    }

    fn validate(&self) -> Result<()> {
        check_probability("p_group_z", self.p_group_z)?;
        check_probability("p_discard", self.p_discard)?;
        if self.p_discard >= 1.0 {
            return Err(Error::Underflow(1.0 - self.p_discard));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    pub k: u32,
    pub alpha: Angle,
    pub beta: Angle,
    pub accept_rate: f64,
    pub state: DensityMatrix2,
    /// Infidelity of this level's output with |β>.
    pub infidelity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub target: Angle,
    pub levels: Vec<LevelReport>,
    pub level1_rates: Level1Rates,
    pub infidelity: f64,
    /// Product of the per-level acceptance rates.
    pub accept_rate: f64,
    pub volume: VolumeReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Level r consumes k outputs of level r−1 (volume bookkeeping).
    pub consume_k: bool,
    /// Replaces the level-1 error model (e.g. with Monte Carlo estimates).
    pub level1: Option<Level1Rates>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            consume_k: true,
            level1: None,
        }
    }
}

/// Applies the free logical X when the channel's output sign is not the
/// intended one (even k always returns a non-negative angle).
fn fix_sign(state: DensityMatrix2, alpha: Angle, k: u32, beta: Angle) -> Result<DensityMatrix2> {
    let produced = output_angle(alpha, k)?;
    if (produced.radians() < 0.0) != (beta.radians() < 0.0) && produced.radians() != 0.0 {
        Ok(state.conj_x())
    } else {
        Ok(state)
    }
}

/// Level-1 injection of k copies of |α₁> with Z rate q, before memory noise.
fn level1_state(alpha: Angle, k: u32, beta: Angle, q: f64) -> Result<(DensityMatrix2, f64)> {
    let input = apply_pauli_channel(&make_rotation_density(alpha), 0.0, q)?;
    let out = ti_channel(&input, k)?;
    Ok((fix_sign(out.state, alpha, k, beta)?, out.accept_rate))
}

/// Forward noisy evaluation of a plan with default options.
pub fn evaluate_plan(
    plan: &Plan,
    noise: PhysicalNoise,
    catalog: &MagicCatalog,
    level1_rates: Option<Level1Rates>,
) -> Result<EvalReport> {
    evaluate_plan_with(
        plan,
        noise,
        catalog,
        &EvalOptions {
            level1: level1_rates,
            ..EvalOptions::default()
        },
    )
}

pub fn evaluate_plan_with(
    plan: &Plan,
    noise: PhysicalNoise,
    catalog: &MagicCatalog,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    plan.validate()?;
    let rates = PlanRates::of(plan, noise)?;
    evaluate_with_rates(plan, noise, catalog, opts, &rates)
}

/// Logical Pauli rates entering a forward evaluation. Index r of `pump` and
/// `surgery` belongs to level r + 1; index 0 is unused.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct PlanRates {
    pub memory1: LogicalRates,
    pub pump: Vec<LogicalRates>,
    pub surgery: Vec<LogicalRates>,
}

impl PlanRates {
    pub(crate) fn of(plan: &Plan, noise: PhysicalNoise) -> Result<Self> {
        let first = &plan.levels[0];
        let mut pump = vec![LogicalRates::ZERO];
        let mut surgery = vec![LogicalRates::ZERO];
        for w in plan.levels.windows(2) {
            pump.push(pump_rates(w[0].d_x, w[0].d_z, noise)?);
            surgery.push(surgery_rates(w[1].d_x, w[1].d_z, noise)?);
        }
        Ok(PlanRates {
            memory1: level1_memory_rates(first.d_x, first.d_z, noise)?,
            pump,
            surgery,
        })
    }
}

/// Forward evaluation with explicit logical rates; the distances in `plan`
/// only enter the volume.
pub(crate) fn evaluate_with_rates(
    plan: &Plan,
    noise: PhysicalNoise,
    catalog: &MagicCatalog,
    opts: &EvalOptions,
    rates: &PlanRates,
) -> Result<EvalReport> {
    let gamma = plan.target.angle();
    let angles = derive_angles(gamma, &plan.ks())?;
    let first = &plan.levels[0];
    let l1 = match opts.level1 {
        Some(r) => r,
        None => Level1Rates::model(first.d_x, first.d_z, noise)?,
    };
    l1.validate()?;

    let mut reports = Vec::with_capacity(plan.levels.len());
    let mut vol_in = Vec::with_capacity(plan.levels.len());

    let a1 = angles[0];
    let (state, norm) = level1_state(a1.alpha, first.k, a1.beta, l1.p_group_z)?;
    let mut state = pauli(&state, rates.memory1)?;
    let accept = norm * (1.0 - l1.p_discard);
    reports.push(LevelReport {
        level: 1,
        k: first.k,
        alpha: a1.alpha,
        beta: a1.beta,
        accept_rate: accept,
        state,
        infidelity: 1.0 - fidelity_with(&state, a1.beta),
    });
    vol_in.push(LevelVolumeInput {
        k: first.k,
        d_x: first.d_x,
        d_z: first.d_z,
        accept,
        magic_volume: 0.0,
    });

    for r in 1..plan.levels.len() {
        let (lv, ang) = (&plan.levels[r], angles[r]);
        let label = lv.magic_label.as_deref().expect("validated");
        let magic = catalog.get(label)?;
        let pumped = pump(
            &state,
            PumpSign::toward(ang.alpha),
            magic.infidelity,
            rates.pump[r],
        )?;
        let input = pauli(&pumped, rates.surgery[r])?;
        let out = ti_channel(&input, lv.k)?;
        state = fix_sign(out.state, ang.alpha, lv.k, ang.beta)?;
        reports.push(LevelReport {
            level: r + 1,
            k: lv.k,
            alpha: ang.alpha,
            beta: ang.beta,
            accept_rate: out.accept_rate,
            state,
            infidelity: 1.0 - fidelity_with(&state, ang.beta),
        });
        vol_in.push(LevelVolumeInput {
            k: lv.k,
            d_x: lv.d_x,
            d_z: lv.d_z,
            accept: out.accept_rate,
            magic_volume: magic.volume,
        });
    }

    let accept_rate = reports.iter().map(|l| l.accept_rate).product();
    let volume = protocol_volume(&vol_in, opts.consume_k)?;
    Ok(EvalReport {
        target: gamma,
        infidelity: 1.0 - fidelity_with(&state, gamma),
        levels: reports,
        level1_rates: l1,
        accept_rate,
        volume,
    })
}

/// Output infidelity with only level-1 physical noise: every logical rate
/// and magic-state error is zero. `ks[0]` is the level-1 group count.
pub fn ideal_logical_infidelity(target: Angle, ks: &[u32], q: f64) -> Result<f64> {
    let angles = derive_angles(target, ks)?;
    if ks.len() == 1 {
        return level1_infidelity_analytic(angles[0].alpha, ks[0], q);
    }
    let (mut state, _) = level1_state(angles[0].alpha, ks[0], angles[0].beta, q)?;
    for r in 1..ks.len() {
        let a = angles[r];
        let pumped = pump(&state, PumpSign::toward(a.alpha), 0.0, LogicalRates::ZERO)?;
        state = fix_sign(ti_channel(&pumped, ks[r])?.state, a.alpha, ks[r], a.beta)?;
    }
    Ok(1.0 - fidelity_with(&state, target))
}

/// Best k per level under [`ideal_logical_infidelity`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdealOptimum {
    pub ks: Vec<u32>,
    pub infidelity: f64,
}

/// Level-1 k values scanned by [`ideal_optimum`].
pub const IDEAL_MAX_K1: u32 = 60;

/// All k tuples (level 1 first) whose angles derive: pump-feasible k at
/// every level ≥ 2 and k₁ in 1..=IDEAL_MAX_K1.
fn feasible_k_tuples(target: Angle, level_count: usize) -> Vec<Vec<u32>> {
    fn rec(beta: Angle, remaining: usize, suffix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if remaining == 1 {
            for k1 in 1..=IDEAL_MAX_K1 {
                let mut ks = vec![k1];
                ks.extend(suffix.iter().rev());
                out.push(ks);
            }
            return;
        }
        for k in pump_feasible_ks(beta, PUMP_WINDOW) {
            let Ok(alpha) = input_angle(beta, k) else {
                continue;
            };
            let Ok(next) = pump_source_angle(alpha) else {
                continue;
            };
            suffix.push(k);
            rec(next, remaining - 1, suffix, out);
            suffix.pop();
        }
    }
    let mut out = Vec::new();
    rec(target, level_count, &mut Vec::new(), &mut out);
    out
}

/// Minimal achievable infidelity with `level_count` levels when only the
/// level-1 physical noise acts (distances and magic states ideal).
pub fn ideal_optimum(
    level_count: usize,
    noise: PhysicalNoise,
    target: Angle,
) -> Result<IdealOptimum> {
    ideal_optimum_with(level_count, noise, target, Execution::default())
}

pub fn ideal_optimum_with(
    level_count: usize,
    noise: PhysicalNoise,
    target: Angle,
    exec: Execution,
) -> Result<IdealOptimum> {
    if level_count == 0 || level_count > MAX_LEVELS {
        return Err(Error::invalid(format!(
            "level count {level_count} outside 1..={MAX_LEVELS}"
        )));
    }
    if target.radians() == 0.0 || target.radians().abs() >= PI / 2.0 {
        return Err(Error::invalid(
            "target angle must be non-zero with |gamma| < pi/2",
        ));
    }
    let q = undetected_group_z_rate(noise);
    let tuples = feasible_k_tuples(target, level_count);
    let best = map_reduce(
        tuples.len(),
        exec,
        None,
        |i| {
            ideal_logical_infidelity(target, &tuples[i], q)
                .ok()
                .map(|e| (e, tuples[i].clone()))
        },
        |a: Option<(f64, Vec<u32>)>, b| match (a, b) {
            (None, x) | (x, None) => x,
            (Some(a), Some(b)) => {
                if b.0.total_cmp(&a.0).then_with(|| b.1.cmp(&a.1)).is_lt() {
                    Some(b)
                } else {
                    Some(a)
                }
            }
        },
    );
    let (infidelity, ks) = best.ok_or_else(|| Error::Infeasible {
        reason: format!("no feasible k tuple for {level_count} levels"),
        best_infidelity: None,
    })?;
    Ok(IdealOptimum { ks, infidelity })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::injection::theorem1_bound;
    use crate::qstate::PureRotationState;

    fn n(p: f64) -> PhysicalNoise {
        PhysicalNoise::new(p).unwrap()
    }

    fn ang(x: f64) -> Angle {
        Angle::new(x).unwrap()
    }

    fn level(k: u32, d_x: u32, d_z: u32) -> LevelSpec {
        LevelSpec {
            k,
            d_x,
            d_z,
            magic_label: Some("ideal".into()),
        }
    }

    fn ideal_catalog() -> MagicCatalog {
        MagicCatalog::ideal(1000.0).unwrap()
    }

    #[test]
    fn derive_examples() {
        let g = ang(0.3);
        let one = derive_angles(g, &[5]).unwrap();
        assert_eq!(one[0].alpha, input_angle(g, 5).unwrap());
        assert_eq!(one[0].beta, g);

        // Frozen from an independent double-precision evaluation of the
        // recursion.
        let two = derive_angles(Angle::clifford(10), &[3, 7]).unwrap();
        assert!((two[1].alpha.radians() - 0.412_411_030_713_031_65).abs() < 1e-12);
        assert!((two[0].beta.radians() + 0.019_711_949_014_307_506).abs() < 1e-12);
        assert!((two[0].alpha.radians() + 0.263_846_015_092_530_64).abs() < 1e-12);

        // input_angle(γ, k) = π/8 exactly: the lower level outputs angle 0.
        let gamma = ang(FRAC_PI_8.tan().powi(3).atan());
        let edge = derive_angles(gamma, &[3, 3]).unwrap();
        assert!(edge[0].beta.radians().abs() < 1e-15);

        assert!(matches!(
            derive_angles(ang(0.3), &[3, 12]),
            Err(Error::PumpInfeasible { level: 1, .. })
        ));
    }

    #[test]
    fn ideal_pump() {
        for b in [-0.15, 0.0, 0.05, 0.19] {
            let rho = make_rotation_density(ang(b));
            let out = pump(&rho, PumpSign::Positive, 0.0, LogicalRates::ZERO).unwrap();
            assert!(1.0 - fidelity_with(&out, ang(FRAC_PI_8 - b)) < 1e-15);
            let neg = pump(&rho, PumpSign::Negative, 0.0, LogicalRates::ZERO).unwrap();
            assert!(1.0 - fidelity_with(&neg, ang(-FRAC_PI_8 - b)) < 1e-15);
        }
        let eps = 3e-4;
        let out = pump(
            &make_rotation_density(ang(0.02)),
            PumpSign::Positive,
            eps,
            LogicalRates::ZERO,
        )
        .unwrap();
        assert!((1.0 - fidelity_with(&out, ang(FRAC_PI_8 - 0.02)) - eps).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_pipeline_is_exact() {
        let cat = ideal_catalog();
        for (ks, target) in [
            (vec![3u32], Target::Angle(ang(0.2))),
            (vec![3, 7], Target::Clifford(10)),
            (vec![4, 4, 6], Target::Clifford(12)),
        ] {
            let mut levels = vec![level(ks[0], 3, 3 * ks[0])];
            levels.extend(ks[1..].iter().map(|&k| level(k, 5, 5)));
            let plan = Plan { levels, target };
            let Ok(_) = derive_angles(target.angle(), &ks) else {
                continue;
            };
            let rep = evaluate_plan(&plan, PhysicalNoise::noiseless(), &cat, None).unwrap();
            assert!(rep.infidelity <= 1e-12, "{ks:?}: {}", rep.infidelity);
            let last = rep.levels.last().unwrap();
            let produced = PureRotationState::new(last.beta);
            assert!(1.0 - fidelity_with(&rep.levels.last().unwrap().state, produced.angle) < 1e-12);
            assert!((last.beta.radians() - target.angle().radians()).abs() < 1e-9);
            let prod: f64 = rep.levels.iter().map(|l| l.accept_rate).product();
            assert_eq!(rep.accept_rate, prod);
        }
    }

    #[test]
    fn single_level_matches_analytic() {
        let plan = Plan {
            levels: vec![level(4, 31, 12)],
            target: Target::Angle(ang(0.02)),
        };
        let noise = n(1e-4);
        let rep = evaluate_plan(&plan, noise, &ideal_catalog(), None).unwrap();
        let alpha = input_angle(ang(0.02), 4).unwrap();
        let analytic =
            level1_infidelity_analytic(alpha, 4, undetected_group_z_rate(noise)).unwrap();
        assert!(
            (rep.infidelity - analytic).abs() < 1e-10,
            "{} vs {analytic}",
            rep.infidelity
        );
    }

    #[test]
    fn two_level_obeys_theorem1_with_level1_noise_only() {
        // Large distances make every logical rate negligible.
        let plan = Plan {
            levels: vec![level(3, 31, 9), level(7, 31, 31)],
            target: Target::Clifford(10),
        };
        let rep = evaluate_plan(&plan, n(1e-4), &ideal_catalog(), None).unwrap();
        let eps1 = rep.levels[0].infidelity;
        let bound = theorem1_bound(7, rep.levels[1].beta, eps1) * (1.0 + 10.0 * eps1.sqrt());
        assert!(rep.infidelity <= bound, "{} > {bound}", rep.infidelity);
    }

    #[test]
    fn override_and_validation() {
        let cat = ideal_catalog();
        let mut plan = Plan {
            levels: vec![level(3, 3, 9), level(7, 5, 5)],
            target: Target::Clifford(10),
        };
        let ovr = Level1Rates {
            p_group_z: 1e-4,
            p_discard: 0.1,
        };
        let rep = evaluate_plan(&plan, n(1e-3), &cat, Some(ovr)).unwrap();
        assert_eq!(rep.level1_rates, ovr);
        plan.levels[0].d_z = 10;
        assert!(matches!(plan.validate(), Err(Error::Invalid(m)) if m.contains("level 1")));
        plan.levels[0].d_z = 9;
        plan.levels[1].magic_label = Some("missing".into());
        assert!(matches!(
            evaluate_plan(&plan, n(1e-3), &cat, None),
            Err(Error::CatalogMiss(_))
        ));
    }

    #[test]
    fn plan_json_round_trip() {
        let plan = Plan {
            levels: vec![
                LevelSpec {
                    k: 3,
                    d_x: 3,
                    d_z: 9,
                    magic_label: None,
                },
                level(7, 5, 5),
            ],
            target: Target::Clifford(10),
        };
        let s = serde_json::to_string(&plan).unwrap();
        assert_eq!(serde_json::from_str::<Plan>(&s).unwrap(), plan);
        let a: Plan =
            serde_json::from_str(r#"{"levels":[{"k":1,"d_x":3,"d_z":3}],"target":{"angle":0.25}}"#)
                .unwrap();
        assert_eq!(a.target.angle(), ang(0.25));
    }

    #[test]
    fn ideal_optimum_level1_matches_brute_force() {
        let noise = n(5e-4);
        let target = ang(0.3);
        let got = ideal_optimum(1, noise, target).unwrap();
        let q = undetected_group_z_rate(noise);
        let mut best = (f64::INFINITY, 0);
        for k in 1..=60 {
            let e = level1_infidelity_analytic(input_angle(target, k).unwrap(), k, q).unwrap();
            if e < best.0 {
                best = (e, k);
            }
        }
        assert_eq!(got.ks, vec![best.1]);
        assert_eq!(got.infidelity, best.0);
        assert_eq!(
            ideal_optimum(2, PhysicalNoise::noiseless(), Angle::clifford(4))
                .unwrap()
                .infidelity,
            0.0
        );
    }

    #[test]
    fn ideal_optimum_decreases_with_levels() {
        for p in [5e-4, 1e-3] {
            let vals: Vec<f64> = (1..=4)
                .map(|r| {
                    ideal_optimum(r, n(p), Angle::clifford(4))
                        .unwrap()
                        .infidelity
                })
                .collect();
            assert!(vals.windows(2).all(|w| w[1] < w[0]), "{p}: {vals:?}");
        }
    }

    #[test]
    fn ideal_optimum_strategies_agree() {
        let a = ideal_optimum_with(3, n(1e-3), Angle::clifford(4), Execution::Parallel).unwrap();
        let b = ideal_optimum_with(3, n(1e-3), Angle::clifford(4), Execution::Sequential).unwrap();
        assert_eq!(a, b);
    }
}
