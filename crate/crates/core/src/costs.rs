//! Space-time volume accounting (qubit·cycles) for MLTI, rotation-state
//! distillation and gate synthesis.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix4, SMatrix, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{logical_rate_square, PhysicalNoise};
use crate::qstate::Angle;

/// Volume of one ideal magic state in the placeholder catalog. Not a
/// measured value: replace the catalog for quantitative runs.
pub const IDEAL_MAGIC_VOLUME: f64 = 1.0e5;

pub const IDEAL_LABEL: &str = "ideal";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagicEntry {
    pub label: String,
    pub infidelity: f64,
    #[serde(rename = "volume_qubit_cycles")]
    pub volume: f64,
}

/// Available magic states, as (infidelity, volume) points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCatalog", into = "RawCatalog")]
pub struct MagicCatalog {
    entries: Vec<MagicEntry>,
    placeholder: bool,
    note: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCatalog {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    note: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    placeholder: bool,
    entries: Vec<MagicEntry>,
}

impl TryFrom<RawCatalog> for MagicCatalog {
    type Error = Error;
    fn try_from(raw: RawCatalog) -> Result<Self> {
        let mut c = MagicCatalog::new(raw.entries)?;
        c.placeholder = raw.placeholder;
        c.note = raw.note;
        Ok(c)
    }
}

impl From<MagicCatalog> for RawCatalog {
    fn from(c: MagicCatalog) -> Self {
        RawCatalog {
            note: c.note,
            placeholder: c.placeholder,
            entries: c.entries,
        }
    }
}

impl MagicCatalog {
    pub fn new(entries: Vec<MagicEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("magic catalog has no entries"));
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.label.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate catalog label `{}`",
                    e.label
                )));
            }
            if !(e.infidelity == 0.0 || (e.infidelity > 0.0 && e.infidelity < 1.0)) {
                return Err(Error::Probability(format!(
                    "catalog entry `{}` infidelity {} not in (0,1) or 0",
                    e.label, e.infidelity
                )));
            }
            if !(e.volume.is_finite() && e.volume >= 0.0) {
                return Err(Error::invalid(format!(
                    "catalog entry `{}` volume {} must be finite and >= 0",
                    e.label, e.volume
                )));
            }
        }
        Ok(MagicCatalog {
            entries,
            placeholder: false,
            note: None,
        })
    }

    /// A single noiseless magic state of volume `volume`.
    pub fn ideal(volume: f64) -> Result<Self> {
        MagicCatalog::new(vec![MagicEntry {
            label: IDEAL_LABEL.into(),
            infidelity: 0.0,
            volume,
        }])
    }

    /// The shipped stand-in: one ideal entry, flagged as placeholder.
    pub fn placeholder() -> Self {
        let mut c = MagicCatalog::ideal(IDEAL_MAGIC_VOLUME).expect("valid constant");
        c.placeholder = true;
        c.note = Some("placeholder: replace with measured magic-state costs".into());
        c
    }

    pub fn is_placeholder(&self) -> bool {
        self.placeholder
    }

    pub fn entries(&self) -> &[MagicEntry] {
        &self.entries
    }

    pub fn get(&self, label: &str) -> Result<&MagicEntry> {
        self.entries
            .iter()
            .find(|e| e.label == label)
            .ok_or_else(|| Error::CatalogMiss(label.to_string()))
    }

    /// Lowest-infidelity entry; cheaper one on ties.
    pub fn cleanest(&self) -> &MagicEntry {
        self.entries
            .iter()
            .min_by(|a, b| {
                a.infidelity
                    .total_cmp(&b.infidelity)
                    .then(a.volume.total_cmp(&b.volume))
            })
            .expect("catalog is non-empty")
    }
}

/// Rotation target R_z(π/2^l), l ≥ 3.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CliffordTarget {
    pub l: u32,
    pub theta: Angle,
}

impl CliffordTarget {
    pub fn new(l: u32) -> Result<Self> {
        if l < 3 {
            return Err(Error::invalid(format!(
                "Clifford level {l} < 3 is a Clifford rotation"
            )));
        }
        Ok(CliffordTarget {
            l,
            theta: Angle::clifford(l),
        })
    }
}

fn check_accept(a: f64) -> Result<()> {
    if a > 0.0 && a <= 1.0 {
        Ok(())
    } else {
        Err(Error::Underflow(a))
    }
}

/// 2·d_z·d_x·2 / p_s.
pub fn v_level1(d_x: u32, d_z: u32, accept1: f64) -> Result<f64> {
    check_accept(accept1)?;
    Ok(4.0 * d_x as f64 * d_z as f64 / accept1)
}

/// V_T + 2·d_z·(d_x + d_z + 1)·(2·d_z + ⌊d_z/2⌋ + 2).
pub fn v_pump(d_x: u32, d_z: u32, v_magic: f64) -> Result<f64> {
    if d_z < 3 || d_x < 3 {
        return Err(Error::invalid(format!(
            "pump patch {d_x}x{d_z} below distance 3"
        )));
    }
    let (dx, dz) = (d_x as f64, d_z as f64);
    let cycles = (2 * d_z + d_z / 2 + 2) as f64;
    Ok(v_magic + 2.0 * dz * (dx + dz + 1.0) * cycles)
}

/// Surgery footprint of level r: 2·d_x·(k·d_z + k − 1)·(d_z + 2).
pub fn surgery_volume(k: u32, d_x: u32, d_z: u32) -> f64 {
    let (k, dx, dz) = (k as f64, d_x as f64, d_z as f64);
    2.0 * dx * (k * dz + k - 1.0) * (dz + 2.0)
}

/// [surgery + input]/p_s where input is k·prev (consume_k) or prev.
pub fn v_level_r(
    prev_total: f64,
    k: u32,
    d_x: u32,
    d_z: u32,
    accept: f64,
    consume_k: bool,
) -> Result<f64> {
    check_accept(accept)?;
    if k < 2 {
        return Err(Error::invalid(format!(
            "k = {k} at a level >= 2 (need k >= 2)"
        )));
    }
    let input = if consume_k {
        k as f64 * prev_total
    } else {
        prev_total
    };
    Ok((surgery_volume(k, d_x, d_z) + input) / accept)
}

/// Volume of one MLTI output by component. Components are the raw
/// qubit·cycles assuming every post-selection passes; `adjusted` repeats
/// the attempts the acceptance rates require.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VolumeReport {
    pub injection: f64,
    pub pumping: f64,
    pub magic_states: f64,
    pub surgery: f64,
    pub total: f64,
    pub adjusted: f64,
}

/// Geometry of one level as seen by the volume model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelVolumeInput {
    pub k: u32,
    pub d_x: u32,
    pub d_z: u32,
    pub accept: f64,
    /// Magic state volume for the pump feeding this level (levels ≥ 2).
    pub magic_volume: f64,
}

/// Component and adjusted volumes of a multi-level protocol.
pub fn protocol_volume(levels: &[LevelVolumeInput], consume_k: bool) -> Result<VolumeReport> {
    let Some(first) = levels.first() else {
        return Err(Error::invalid("plan has no levels"));
    };
    // Raw production count of each level per final output.
    let mut count = vec![1.0; levels.len()];
    for r in (0..levels.len() - 1).rev() {
        count[r] = if consume_k {
            count[r + 1] * levels[r + 1].k as f64
        } else {
            1.0
        };
    }
    let mut rep = VolumeReport {
        injection: count[0] * v_level1(first.d_x, first.d_z, 1.0)?,
        ..Default::default()
    };
    let mut adjusted = v_level1(first.d_x, first.d_z, first.accept)?;
    for r in 1..levels.len() {
        let (prev, lv) = (&levels[r - 1], &levels[r]);
        let pump = v_pump(prev.d_x, prev.d_z, lv.magic_volume)?;
        rep.pumping += count[r - 1] * (pump - lv.magic_volume);
        rep.magic_states += count[r - 1] * lv.magic_volume;
        rep.surgery += count[r] * surgery_volume(lv.k, lv.d_x, lv.d_z);
        adjusted = v_level_r(adjusted + pump, lv.k, lv.d_x, lv.d_z, lv.accept, consume_k)?;
    }
    rep.total = rep.injection + rep.pumping + rep.magic_states + rep.surgery;
    rep.adjusted = adjusted;
    Ok(rep)
}

/// One round of the four-qubit-code rotation-state distillation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillRound {
    pub p_fail: f64,
    pub eps_out: f64,
    /// Footprint volume per output state, retries included.
    pub volume: f64,
}

/// Failure probability, output error and per-output volume of one round at
/// distance d: p_fail = 92 P^z + 100 P^x + 8ε₃ + 2ε_l + η/2,
/// ε_out = P^z + 8ε₃² + ε_l² + η/4, volume = 16d²·20d/(1 − p_fail).
pub fn distill_cost(
    d: u32,
    noise: PhysicalNoise,
    eps3: f64,
    epsl: f64,
    eta: f64,
) -> Result<DistillRound> {
    if d < 3 || d % 2 == 0 {
        return Err(Error::invalid(format!(
            "distillation distance must be odd >= 3, got {d}"
        )));
    }
    for (name, v) in [("eps3", eps3), ("epsl", epsl), ("eta", eta)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::Probability(format!("{name} = {v}")));
        }
    }
    let pl = logical_rate_square(d, noise)?;
    let p_fail = 92.0 * pl.p_z + 100.0 * pl.p_x + 8.0 * eps3 + 2.0 * epsl + 0.5 * eta;
    if p_fail >= 1.0 {
        return Err(Error::Infeasible {
            reason: format!("distillation failure probability {p_fail} >= 1 at d = {d}"),
            best_infidelity: None,
        });
    }
    let eps_out = pl.p_z + 8.0 * eps3 * eps3 + epsl * epsl + 0.25 * eta;
    let df = d as f64;
    Ok(DistillRound {
        p_fail,
        eps_out,
        volume: 16.0 * df * df * 20.0 * df / (1.0 - p_fail),
    })
}

type C8 = SMatrix<Complex64, 8, 8>;

fn ry(theta: f64) -> Matrix2<Complex64> {
    // e^{iθY} with Y = [[0, -i], [i, 0]].
    let (s, c) = theta.sin_cos();
    Matrix2::new(c.into(), s.into(), (-s).into(), c.into())
}

fn kron2(a: &Matrix2<Complex64>, b: &Matrix2<Complex64>) -> Matrix4<Complex64> {
    let mut m = Matrix4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    m[(2 * i + k, 2 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    m
}

fn kron_1_3(a: &Matrix2<Complex64>, b: &Matrix4<Complex64>) -> C8 {
    let mut m = C8::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..4 {
                for l in 0..4 {
                    m[(4 * i + k, 4 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    m
}

/// |Y_l>, |Y_l^⊥> in the computational basis.
fn y_frame(l: u32) -> (Vector2<Complex64>, Vector2<Complex64>) {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let plus = Vector2::new(h.into(), h.into());
    let minus = Vector2::new(h.into(), (-h).into());
    let r = ry(PI / 2f64.powi(l as i32));
    (r * plus, r * minus)
}

/// Post-selected output infidelity of the basic distillation circuit at
/// level `l`: ancilla |+>, controlled (R_y(θ_{l-1})X)^{⊗2} on two inputs
/// (1-ε)|Y_l><Y_l| + ε|Y_l^⊥><Y_l^⊥| + b(|Y_l><Y_l^⊥| + h.c.), ancilla
/// measured in the X basis and kept on +1.
pub fn distill_oracle_at(l: u32, eps_in: f64, coherence: f64) -> Result<f64> {
    if l < 3 {
        return Err(Error::invalid(format!("distillation level {l} < 3")));
    }
    if !(0.0..0.5).contains(&eps_in) {
        return Err(Error::Probability(format!(
            "eps_in = {eps_in} outside [0, 0.5)"
        )));
    }
    if coherence * coherence > eps_in - eps_in * eps_in + 1e-15 {
        return Err(Error::NotPsd {
            det: eps_in - eps_in * eps_in - coherence * coherence,
        });
    }
    let (y, yp) = y_frame(l);
    let outer = |a: &Vector2<Complex64>, b: &Vector2<Complex64>| a * b.adjoint();
    let rho = outer(&y, &y) * Complex64::from(1.0 - eps_in)
        + outer(&yp, &yp) * Complex64::from(eps_in)
        + (outer(&y, &yp) + outer(&yp, &y)) * Complex64::from(coherence);
    let x = Matrix2::new(0.0.into(), 1.0.into(), 1.0.into(), 0.0.into());
    let refl = ry(PI / 2f64.powi(l as i32 - 1)) * x;
    let p0 = Matrix2::new(1.0.into(), 0.0.into(), 0.0.into(), 0.0.into());
    let p1 = Matrix2::new(0.0.into(), 0.0.into(), 0.0.into(), 1.0.into());
    let u = kron_1_3(&p0, &Matrix4::identity()) + kron_1_3(&p1, &kron2(&refl, &refl));
    let h = Complex64::from(0.5);
    let plus = Matrix2::new(h, h, h, h);
    let state = kron_1_3(&plus, &kron2(&rho, &rho));
    let evolved = u * state * u.adjoint();
    let kept =
        kron_1_3(&plus, &Matrix4::identity()) * evolved * kron_1_3(&plus, &Matrix4::identity());
    let norm = kept.trace().re;
    if !(norm > 1e-300) {
        return Err(Error::Underflow(norm));
    }
    // Marginal of the first input: trace out the ancilla and the second input.
    let mut out = Matrix2::<Complex64>::zeros();
    for a in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                for t in 0..2 {
                    out[(i, j)] += kept[(4 * a + 2 * i + t, 4 * a + 2 * j + t)];
                }
            }
        }
    }
    let fid = (y.adjoint() * out * y)[(0, 0)].re / norm;
    Ok((1.0 - fid).max(0.0))
}

/// [`distill_oracle_at`] for |Y_4>.
pub fn distill_oracle(eps_in: f64, coherence: f64) -> Result<f64> {
    distill_oracle_at(4, eps_in, coherence)
}

/// ε²/((1−ε)² + ε²), the dephased single-round output.
pub fn distill_closed_form(eps: f64) -> f64 {
    let e2 = eps * eps;
    e2 / ((1.0 - eps) * (1.0 - eps) + e2)
}

/// Chosen gate-synthesis parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisCost {
    pub n_t: u32,
    pub delta: f64,
    pub entry: String,
    pub volume: f64,
}

/// Upper end of the T-count scan; 2^{-2·600/3} is far below any target.
const MAX_T_COUNT: u32 = 600;

/// Cheapest entry and T count with n_T·ε_T + δ² ≤ 2·ε_target, where
/// n_T = ⌈3 log₂(1/δ)⌉ ≥ 3. δ is reported as the largest precision
/// compatible with both the budget and the chosen n_T.
pub fn synthesis_cost(eps_target: f64, catalog: &MagicCatalog) -> Result<SynthesisCost> {
    if !(eps_target > 0.0) {
        return Err(Error::invalid(format!(
            "eps_target = {eps_target} must be positive"
        )));
    }
    let budget = 2.0 * eps_target;
    let mut best: Option<SynthesisCost> = None;
    for e in catalog.entries() {
        let n = (3..=MAX_T_COUNT)
            .find(|&n| n as f64 * e.infidelity + 2f64.powf(-2.0 * n as f64 / 3.0) <= budget);
        let Some(n) = n else { continue };
        let slack = (budget - n as f64 * e.infidelity).sqrt();
        let delta = slack.min(2f64.powf(-(n as f64 - 1.0) / 3.0)).min(1.0);
        let cand = SynthesisCost {
            n_t: n,
            delta,
            entry: e.label.clone(),
            volume: n as f64 * e.volume,
        };
        let better = match &best {
            None => true,
            Some(b) => cand
                .volume
                .total_cmp(&b.volume)
                .then(cand.n_t.cmp(&b.n_t))
                .is_lt(),
        };
        if better {
            best = Some(cand);
        }
    }
    best.ok_or_else(|| Error::Infeasible {
        reason: format!("no catalog entry reaches synthesis error {eps_target:e}"),
        best_infidelity: None,
    })
}

/// Σ_{i=3}^{l} V_i / 2^{l−i}; `literal` uses V_l in every term.
pub fn gate_volume(l: u32, state_volumes: &BTreeMap<u32, f64>, literal: bool) -> Result<f64> {
    if l < 3 {
        return Err(Error::invalid(format!("Clifford level {l} < 3")));
    }
    let vl = *state_volumes
        .get(&l)
        .ok_or_else(|| Error::invalid(format!("missing state volume for level {l}")))?;
    let mut total = 0.0;
    for i in 3..=l {
        let v = if literal {
            vl
        } else {
            *state_volumes
                .get(&i)
                .ok_or_else(|| Error::invalid(format!("missing state volume for level {i}")))?
        };
        total += v / 2f64.powi((l - i) as i32);
    }
    Ok(total)
}

/// Best volume of each method for one Clifford level and target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostComparison {
    pub l: u32,
    pub target_infidelity: f64,
    pub mlti: Option<f64>,
    pub distill: Option<f64>,
    pub synth: Option<f64>,
}

/// A rotation state produced by two-round distillation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistilledState {
    pub l: u32,
    /// Distillation distance; 0 for level 3, which comes from the catalog.
    pub d: u32,
    pub magic_label: String,
    pub infidelity: f64,
    pub volume: f64,
}

/// Search bounds of the distillation state model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillSearch {
    pub max_d: u32,
}

impl Default for DistillSearch {
    fn default() -> Self {
        DistillSearch { max_d: 51 }
    }
}

/// Two-round distillation of |Y_l> for every l in 3..=max_l at a common
/// target. Level 3 is taken from the catalog (cheapest entry meeting the
/// target). Each higher level distils raw |Y_l> inputs (error p, volume
/// 2d³) with identical d and |Y_3> entry in both rounds; its R_y(θ_{l-1})
/// gate is teleported sequentially from the lower-level states.
///
/// Returns one result per level; levels above the first infeasible one are
/// infeasible too and are reported as errors.
pub fn distill_states(
    max_l: u32,
    eps_target: f64,
    noise: PhysicalNoise,
    catalog: &MagicCatalog,
    search: DistillSearch,
) -> Vec<Result<DistilledState>> {
    let mut out: Vec<Result<DistilledState>> = Vec::new();
    let level3 = catalog
        .entries()
        .iter()
        .filter(|e| e.infidelity <= eps_target)
        .min_by(|a, b| {
            a.volume
                .total_cmp(&b.volume)
                .then(a.infidelity.total_cmp(&b.infidelity))
        });
    let Some(t) = level3 else {
        let err = Error::Infeasible {
            reason: format!("no catalog magic state reaches {eps_target:e}"),
            best_infidelity: Some(catalog.cleanest().infidelity),
        };
        return (3..=max_l).map(|_| Err(err.clone())).collect();
    };
    out.push(Ok(DistilledState {
        l: 3,
        d: 0,
        magic_label: t.label.clone(),
        infidelity: t.infidelity,
        volume: t.volume,
    }));
    let p = noise.p_phy();
    for l in 4..=max_l {
        let lower: Option<Vec<&DistilledState>> = out.iter().map(|r| r.as_ref().ok()).collect();
        let Some(lower) = lower else {
            out.push(Err(Error::Infeasible {
                reason: format!("lower level unavailable for l = {l}"),
                best_infidelity: None,
            }));
            continue;
        };
        // Sequential teleportation of R_y(θ_{l-1}): level i used with
        // probability 2^{-(l-1-i)}.
        let (mut eta, mut v_gate) = (0.0, 0.0);
        for s in &lower {
            let w = 0.5f64.powi((l - 1 - s.l) as i32);
            eta += w * s.infidelity;
            v_gate += w * s.volume;
        }
        let mut best: Option<DistilledState> = None;
        let mut best_eps = f64::INFINITY;
        for d in (3..=search.max_d).step_by(2) {
            let df = d as f64;
            for e in catalog.entries() {
                let run = |eps_l: f64, v_in: f64| -> Result<(f64, f64)> {
                    let r = distill_cost(d, noise, e.infidelity, eps_l, eta)?;
                    let per_output =
                        r.volume + (v_in + 4.0 * e.volume + 0.5 * v_gate) / (1.0 - r.p_fail);
                    Ok((r.eps_out, per_output))
                };
                let Ok((eps1, v1)) = run(p, 2.0 * df * df * df) else {
                    continue;
                };
                let Ok((eps2, v2)) = run(eps1, v1) else {
                    continue;
                };
                best_eps = best_eps.min(eps2);
                if eps2 > eps_target {
                    continue;
                }
                let cand = DistilledState {
                    l,
                    d,
                    magic_label: e.label.clone(),
                    infidelity: eps2,
                    volume: v2,
                };
                if best.as_ref().map_or(true, |b| cand.volume < b.volume) {
                    best = Some(cand);
                }
            }
        }
        out.push(best.ok_or(Error::Infeasible {
            reason: format!("two-round distillation cannot reach {eps_target:e} at l = {l}"),
            best_infidelity: best_eps.is_finite().then_some(best_eps),
        }));
    }
    out
}
