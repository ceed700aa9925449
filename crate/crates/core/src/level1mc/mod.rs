//! Pauli-frame Monte Carlo of the level-1 injection circuit.
//!
//! Only Pauli errors are tracked: each shot propagates an X/Z frame through
//! the Clifford skeleton of [`GadgetCircuit`] (the non-Clifford rotations are
//! fault locations only). A shot is discarded when a gadget flag fires or the
//! post-selected detectors show anything but a group pattern. It contributes to the undetected group-Z rate when
//! both rounds show exactly the syndrome of a group pattern Z_S and the final
//! data error is stabilizer-equivalent to Z_S.

mod circuit;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use circuit::{
    build_gadget, build_gadget_with, Basis, Check, CheckKind, FaultClass, FaultKind, GadgetCircuit,
    GadgetModel, Op, GROUP_SIZE, SCHEDULE,
};

use crate::error::{check_probability, Error, Result};
use crate::exec::{map_reduce, Execution};
use crate::noise::PhysicalNoise;

/// Fault rates per location class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McNoise {
    pub data_init: f64,
    pub ancilla_init: f64,
    pub idle: f64,
    pub gate: f64,
    pub measure: f64,
    pub gadget: f64,
    /// Rate of the per-qubit Z probes after the gadget of `probe_group`.
    pub probe: f64,
    pub probe_group: Option<u32>,
}

impl McNoise {
    /// Every location at the physical error rate; probes off.
    pub fn circuit_level(noise: PhysicalNoise) -> Self {
        let p = noise.p_phy();
        McNoise {
            data_init: p,
            ancilla_init: p,
            idle: p,
            gate: p,
            measure: p,
            gadget: p,
            probe: 0.0,
            probe_group: None,
        }
    }

    /// Only independent Z errors of rate `q` on the qubits of one group.
    pub fn probe_only(group: u32, q: f64) -> Self {
        McNoise {
            data_init: 0.0,
            ancilla_init: 0.0,
            idle: 0.0,
            gate: 0.0,
            measure: 0.0,
            gadget: 0.0,
            probe: q,
            probe_group: Some(group),
        }
    }

    pub fn rate(&self, class: FaultClass) -> f64 {
        match class {
            FaultClass::DataInit => self.data_init,
            FaultClass::AncillaInit => self.ancilla_init,
            FaultClass::Idle => self.idle,
            FaultClass::Gate => self.gate,
            FaultClass::Measure => self.measure,
            FaultClass::Gadget => self.gadget,
            FaultClass::Probe(g) => {
                if self.probe_group == Some(g) {
                    self.probe
                } else {
                    0.0
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("data_init", self.data_init),
            ("ancilla_init", self.ancilla_init),
            ("idle", self.idle),
            ("gate", self.gate),
            ("measure", self.measure),
            ("gadget", self.gadget),
            ("probe", self.probe),
        ] {
            check_probability(name, p)?;
        }
        Ok(())
    }
}

/// A Monte Carlo estimate of a probability. The standard error always uses
/// the shot count, which is conservative for per-group rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub shots: u64,
    pub seed: u64,
}

impl McEstimate {
    fn from_counts(successes: u64, trials: u64, shots: u64, seed: u64) -> Self {
        let mean = successes as f64 / trials as f64;
        McEstimate {
            mean,
            std_error: (mean * (1.0 - mean) / shots as f64).sqrt(),
            shots,
            seed,
        }
    }

    /// |self - other| in units of the combined standard error.
    pub fn z_score(&self, other: &McEstimate) -> f64 {
        let s = self.std_error.hypot(other.std_error);
        if s == 0.0 {
            if self.mean == other.mean {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - other.mean).abs() / s
        }
    }
}

/// Both estimates from one batch of shots.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub discard: McEstimate,
    pub undetected_group_z: McEstimate,
}

/// Fault sampling compiled against a particular noise setting.
#[derive(Clone, Copy, Debug)]
enum COp {
    Cnot(u32, u32),
    Reset(u32),
    MeasX(u32, u32),
    MeasZ(u32, u32),
    Depol1(u32, f64),
    Depol2(u32, u32, f64),
    ZFlip(u32, f64),
    XFlip(u32, f64),
    RecFlip(u32, f64),
}

fn compile(circuit: &GadgetCircuit, noise: &McNoise) -> Vec<COp> {
    let mut out = Vec::with_capacity(circuit.ops.len());
    for op in &circuit.ops {
        let c = match *op {
            Op::Cnot { control, target } => COp::Cnot(control as u32, target as u32),
            Op::Reset(q) => COp::Reset(q as u32),
            Op::Measure {
                qubit,
                basis: Basis::X,
                record,
            } => COp::MeasX(qubit as u32, record as u32),
            Op::Measure {
                qubit,
                basis: Basis::Z,
                record,
            } => COp::MeasZ(qubit as u32, record as u32),
            Op::Fault { kind, class } => {
                let r = noise.rate(class);
                if r == 0.0 {
                    continue;
                }
                match kind {
                    FaultKind::Depol1(q) => COp::Depol1(q as u32, r),
                    FaultKind::Depol2(a, b) => COp::Depol2(a as u32, b as u32, r),
                    FaultKind::ZFlip(q) => COp::ZFlip(q as u32, r),
                    FaultKind::XFlip(q) => COp::XFlip(q as u32, r),
                    FaultKind::RecordFlip(m) => COp::RecFlip(m as u32, r),
                }
            }
        };
        out.push(c);
    }
    out
}

struct Frame {
    x: Vec<u8>,
    z: Vec<u8>,
    rec: Vec<u8>,
}

impl Frame {
    fn new(circuit: &GadgetCircuit) -> Self {
        Frame {
            x: vec![0; circuit.n_qubits],
            z: vec![0; circuit.n_qubits],
            rec: vec![0; circuit.n_records],
        }
    }

    fn clear(&mut self) {
        self.x.fill(0);
        self.z.fill(0);
        self.rec.fill(0);
    }

    /// Applies Pauli index 1..=3 (X, Y, Z) to qubit q.
    #[inline]
    fn pauli(&mut self, q: usize, p: usize) {
        self.x[q] ^= (p == 1 || p == 2) as u8;
        self.z[q] ^= (p == 2 || p == 3) as u8;
    }

    fn run(&mut self, ops: &[COp], rng: &mut ChaCha8Rng) {
        for op in ops {
            match *op {
                COp::Cnot(c, t) => {
                    let (c, t) = (c as usize, t as usize);
                    self.x[t] ^= self.x[c];
                    self.z[c] ^= self.z[t];
                }
                COp::Reset(q) => {
                    self.x[q as usize] = 0;
                    self.z[q as usize] = 0;
                }
                COp::MeasX(q, m) => self.rec[m as usize] = self.z[q as usize],
                COp::MeasZ(q, m) => self.rec[m as usize] = self.x[q as usize],
                COp::Depol1(q, r) => {
                    let u: f64 = rng.gen();
                    if u < r {
                        let k = ((u / r) * 3.0) as usize;
                        self.pauli(q as usize, k.min(2) + 1);
                    }
                }
                COp::Depol2(a, b, r) => {
                    let u: f64 = rng.gen();
                    if u < r {
                        let k = ((u / r) * 15.0) as usize;
                        let k = k.min(14) + 1;
                        self.pauli(a as usize, k / 4);
                        self.pauli(b as usize, k % 4);
                    }
                }
                COp::ZFlip(q, r) => {
                    if rng.gen::<f64>() < r {
                        self.z[q as usize] ^= 1;
                    }
                }
                COp::XFlip(q, r) => {
                    if rng.gen::<f64>() < r {
                        self.x[q as usize] ^= 1;
                    }
                }
                COp::RecFlip(m, r) => {
                    if rng.gen::<f64>() < r {
                        self.rec[m as usize] ^= 1;
                    }
                }
            }
        }
    }
}

/// Outcome of one shot given its final frame and records.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShotOutcome {
    pub discard: bool,
    /// Number of groups hit by an undetected equivalent Z (0 if none).
    pub groups_hit: u32,
}

/// Group pattern S read off the post-selected syndromes, if they form one:
/// both rounds agree and only checks between adjacent groups fire. Group 0
/// is never in S.
fn group_pattern(circuit: &GadgetCircuit, s1: &[u8], s2: &[u8]) -> Option<Vec<bool>> {
    if s1 != s2 {
        return None;
    }
    let on_boundary = |pos: usize| circuit.boundary_ps.contains(&pos);
    if s1
        .iter()
        .enumerate()
        .any(|(pos, &b)| b != 0 && !on_boundary(pos))
    {
        return None;
    }
    let groups = circuit.groups as usize;
    let mut in_s = vec![false; groups];
    for g in 0..groups - 1 {
        in_s[g + 1] = in_s[g] ^ (s1[circuit.boundary_ps[g]] != 0);
    }
    Some(in_s)
}

/// A shot is kept when no flag fires and the detectors show a group
/// pattern (possibly empty); the pattern is the injection outcome itself.
fn classify(circuit: &GadgetCircuit, rec: &[u8], data_z: &[u8]) -> ShotOutcome {
    let flags = circuit.flag_records.iter().any(|&m| rec[m] != 0);
    let s1: Vec<u8> = circuit.ps_records[0].iter().map(|&m| rec[m]).collect();
    let s2: Vec<u8> = circuit.ps_records[1].iter().map(|&m| rec[m]).collect();
    let pattern = if flags {
        None
    } else {
        group_pattern(circuit, &s1, &s2)
    };
    let Some(in_s) = pattern else {
        return ShotOutcome {
            discard: true,
            groups_hit: 0,
        };
    };
    let none = ShotOutcome {
        discard: false,
        groups_hit: 0,
    };
    let groups = circuit.groups as usize;
    let size = in_s.iter().filter(|&&b| b).count();
    // The final data error must be equivalent to Z_S: same syndrome on
    // every X check, so the two differ by a stabilizer or by Z_L.
    let mut pattern = vec![0u8; circuit.n_data];
    for (g, &hit) in in_s.iter().enumerate() {
        if hit {
            for q in circuit.group_qubits(g as u32) {
                pattern[q] = 1;
            }
        }
    }
    for check in circuit.x_checks() {
        let a = check.support().fold(0u8, |acc, q| acc ^ data_z[q]);
        let b = check.support().fold(0u8, |acc, q| acc ^ pattern[q]);
        if a != b {
            return none;
        }
    }
    ShotOutcome {
        discard: false,
        groups_hit: size.min(groups - size) as u32,
    }
}

fn shot_rng(seed: u64, shot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shot);
    rng
}

const CHUNK: u64 = 4096;

/// Runs `shots` shots and returns both estimates.
pub fn run(
    circuit: &GadgetCircuit,
    noise: &McNoise,
    shots: u64,
    seed: u64,
    exec: Execution,
) -> Result<McSummary> {
    if shots == 0 {
        return Err(Error::invalid("shots must be at least 1"));
    }
    noise.validate()?;
    let ops = compile(circuit, noise);
    let n_chunks = shots.div_ceil(CHUNK) as usize;
    let (discards, hits) = map_reduce(
        n_chunks,
        exec,
        (0u64, 0u64),
        |chunk| {
            let start = chunk as u64 * CHUNK;
            let end = (start + CHUNK).min(shots);
            let mut frame = Frame::new(circuit);
            let (mut d, mut h) = (0u64, 0u64);
            for shot in start..end {
                frame.clear();
                let mut rng = shot_rng(seed, shot);
                frame.run(&ops, &mut rng);
                let out = classify(circuit, &frame.rec, &frame.z[..circuit.n_data]);
                d += out.discard as u64;
                h += out.groups_hit as u64;
            }
            (d, h)
        },
        |a, b| (a.0 + b.0, a.1 + b.1),
    );
    let groups = circuit.groups as u64;
    Ok(McSummary {
        discard: McEstimate::from_counts(discards, shots, shots, seed),
        undetected_group_z: McEstimate::from_counts(hits, shots * groups, shots, seed),
    })
}

/// Fraction of shots discarded by the flags or the post-selected detectors.
pub fn estimate_discard(
    circuit: &GadgetCircuit,
    noise: PhysicalNoise,
    shots: u64,
    seed: u64,
) -> Result<McEstimate> {
    Ok(run(
        circuit,
        &McNoise::circuit_level(noise),
        shots,
        seed,
        Execution::default(),
    )?
    .discard)
}

/// Per-group probability of an undetected equivalent Z on a rotation group.
pub fn estimate_undetected_group_z(
    circuit: &GadgetCircuit,
    noise: PhysicalNoise,
    shots: u64,
    seed: u64,
) -> Result<McEstimate> {
    Ok(run(
        circuit,
        &McNoise::circuit_level(noise),
        shots,
        seed,
        Execution::default(),
    )?
    .undetected_group_z)
}

/// Deterministic evaluation of one explicit fault configuration: the faults
/// listed (by index into `circuit.ops`, with Pauli index 1..=15 for E2,
/// 1..=3 for E1, ignored for flips) are applied and everything else is
/// noiseless.
pub fn evaluate_faults(circuit: &GadgetCircuit, faults: &[(usize, usize)]) -> ShotOutcome {
    let mut frame = Frame::new(circuit);
    for (i, op) in circuit.ops.iter().enumerate() {
        match *op {
            Op::Cnot { control, target } => {
                frame.x[target] ^= frame.x[control];
                frame.z[control] ^= frame.z[target];
            }
            Op::Reset(q) => {
                frame.x[q] = 0;
                frame.z[q] = 0;
            }
            Op::Measure {
                qubit,
                basis,
                record,
            } => {
                frame.rec[record] = match basis {
                    Basis::X => frame.z[qubit],
                    Basis::Z => frame.x[qubit],
                }
            }
            Op::Fault { kind, .. } => {
                for &(_, p) in faults.iter().filter(|(j, _)| *j == i) {
                    match kind {
                        FaultKind::Depol1(q) => frame.pauli(q, p),
                        FaultKind::Depol2(a, b) => {
                            frame.pauli(a, p / 4);
                            frame.pauli(b, p % 4);
                        }
                        FaultKind::ZFlip(q) => frame.z[q] ^= 1,
                        FaultKind::XFlip(q) => frame.x[q] ^= 1,
                        FaultKind::RecordFlip(m) => frame.rec[m] ^= 1,
                    }
                }
            }
        }
    }
    classify(circuit, &frame.rec, &frame.z[..circuit.n_data])
}

/// For every fault location, the fraction of its Pauli outcomes that lead
/// to a discard on their own, aggregated by (class, numerator, denominator).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiscardProfile {
    entries: Vec<(FaultClass, u32, u32, u32)>,
}

impl DiscardProfile {
    /// Discard probability assuming independent fault locations:
    /// 1 - Π (1 - fraction · rate).
    pub fn probability(&self, noise: &McNoise) -> f64 {
        let mut log_keep = 0.0;
        for &(class, num, den, count) in &self.entries {
            let r = noise.rate(class) * num as f64 / den as f64;
            log_keep += count as f64 * (-r).ln_1p();
        }
        -log_keep.exp_m1()
    }

    pub fn location_count(&self) -> u32 {
        self.entries.iter().map(|e| e.3).sum()
    }
}

/// Detector-space image of a single Pauli generator inserted after op `i`.
fn propagate(
    circuit: &GadgetCircuit,
    det_index: &[Option<usize>],
    start: usize,
    q: usize,
    is_z: bool,
    words: usize,
) -> Vec<u64> {
    let mut x = vec![0u8; circuit.n_qubits];
    let mut z = vec![0u8; circuit.n_qubits];
    if is_z {
        z[q] = 1;
    } else {
        x[q] = 1;
    }
    let mut out = vec![0u64; words];
    for op in &circuit.ops[start + 1..] {
        match *op {
            Op::Cnot { control, target } => {
                x[target] ^= x[control];
                z[control] ^= z[target];
            }
            Op::Reset(r) => {
                x[r] = 0;
                z[r] = 0;
            }
            Op::Measure {
                qubit,
                basis,
                record,
            } => {
                let bit = match basis {
                    Basis::X => z[qubit],
                    Basis::Z => x[qubit],
                };
                if bit != 0 {
                    if let Some(d) = det_index[record] {
                        out[d / 64] ^= 1 << (d % 64);
                    }
                }
            }
            Op::Fault { .. } => {}
        }
    }
    out
}

fn xor(a: &[u64], b: &[u64]) -> Vec<u64> {
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

/// Whether a detector vector (round 1, round 2, flags) leads to a discard.
struct DiscardRule<'a> {
    circuit: &'a GadgetCircuit,
    n_ps: usize,
}

impl DiscardRule<'_> {
    fn discards(&self, v: &[u64]) -> bool {
        let bit = |d: usize| ((v[d / 64] >> (d % 64)) & 1) as u8;
        let n = self.n_ps;
        let flags = self.circuit.flag_records.len();
        if (2 * n..2 * n + flags).any(|d| bit(d) != 0) {
            return true;
        }
        let s1: Vec<u8> = (0..n).map(bit).collect();
        let s2: Vec<u8> = (n..2 * n).map(bit).collect();
        group_pattern(self.circuit, &s1, &s2).is_none()
    }
}

/// Builds the [`DiscardProfile`] of a circuit by propagating every single
/// Pauli generator from its location to the end.
pub fn discard_profile(circuit: &GadgetCircuit) -> DiscardProfile {
    let mut det_index = vec![None; circuit.n_records];
    let mut n_det = 0usize;
    for &m in circuit.ps_records[0]
        .iter()
        .chain(&circuit.ps_records[1])
        .chain(&circuit.flag_records)
    {
        det_index[m] = Some(n_det);
        n_det += 1;
    }
    let words = n_det.div_ceil(64).max(1);
    let rule = DiscardRule {
        circuit,
        n_ps: circuit.ps_records[0].len(),
    };
    let discards = |v: &[u64]| rule.discards(v);
    let mut counts: HashMap<(FaultClass, u32, u32), u32> = HashMap::new();
    for (i, op) in circuit.ops.iter().enumerate() {
        let Op::Fault { kind, class } = *op else {
            continue;
        };
        if matches!(class, FaultClass::Probe(_)) {
            continue;
        }
        let (num, den) = match kind {
            FaultKind::Depol1(q) => {
                let gx = propagate(circuit, &det_index, i, q, false, words);
                let gz = propagate(circuit, &det_index, i, q, true, words);
                let n = [discards(&gx), discards(&xor(&gx, &gz)), discards(&gz)]
                    .iter()
                    .filter(|&&b| b)
                    .count();
                (n as u32, 3)
            }
            FaultKind::Depol2(a, b) => {
                let g = [
                    propagate(circuit, &det_index, i, a, false, words),
                    propagate(circuit, &det_index, i, a, true, words),
                    propagate(circuit, &det_index, i, b, false, words),
                    propagate(circuit, &det_index, i, b, true, words),
                ];
                let single = |p: usize, gx: &Vec<u64>, gz: &Vec<u64>| -> Vec<u64> {
                    let mut v = vec![0u64; words];
                    if p == 1 || p == 2 {
                        v = xor(&v, gx);
                    }
                    if p == 2 || p == 3 {
                        v = xor(&v, gz);
                    }
                    v
                };
                let mut n = 0;
                for k in 1..16 {
                    let va = single(k / 4, &g[0], &g[1]);
                    let vb = single(k % 4, &g[2], &g[3]);
                    if discards(&xor(&va, &vb)) {
                        n += 1;
                    }
                }
                (n, 15)
            }
            FaultKind::ZFlip(q) => (
                discards(&propagate(circuit, &det_index, i, q, true, words)) as u32,
                1,
            ),
            FaultKind::XFlip(q) => (
                discards(&propagate(circuit, &det_index, i, q, false, words)) as u32,
                1,
            ),
            FaultKind::RecordFlip(m) => {
                let mut v = vec![0u64; words];
                if let Some(d) = det_index[m] {
                    v[d / 64] |= 1 << (d % 64);
                }
                (discards(&v) as u32, 1)
            }
        };
        if num > 0 {
            *counts.entry((class, num, den)).or_default() += 1;
        }
    }
    let mut entries: Vec<_> = counts
        .into_iter()
        .map(|((c, n, d), k)| (c, n, d, k))
        .collect();
    entries.sort_by_key(|e| (format!("{:?}", e.0), e.1, e.2));
    DiscardProfile { entries }
}

/// Rows below this cannot influence the post-selected detectors within two
/// rounds, so the discard profile is computed on a patch truncated to it.
pub const PROFILE_ROWS: u32 = 5;

type ProfileKey = (u32, u32, GadgetModel);

fn profile_cache() -> &'static Mutex<HashMap<ProfileKey, Arc<DiscardProfile>>> {
    static CACHE: OnceLock<Mutex<HashMap<ProfileKey, Arc<DiscardProfile>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Cached discard profile of the default gadget on a d_x × d_z patch.
pub fn cached_profile(d_x: u32, d_z: u32, model: GadgetModel) -> Result<Arc<DiscardProfile>> {
    let rows = d_x.min(PROFILE_ROWS);
    let key = (rows, d_z, model);
    if let Some(p) = profile_cache()
        .lock()
        .expect("profile cache poisoned")
        .get(&key)
    {
        return Ok(p.clone());
    }
    let circuit = build_gadget_with(rows, d_z, model)?;
    let profile = Arc::new(discard_profile(&circuit));
    profile_cache()
        .lock()
        .expect("profile cache poisoned")
        .insert(key, profile.clone());
    Ok(profile)
}

/// Level-1 discard probability under the independent-fault evaluation of
/// the default gadget circuit.
pub fn level1_discard_probability(d_x: u32, d_z: u32, noise: PhysicalNoise) -> Result<f64> {
    if noise.p_phy() == 0.0 {
        build_gadget(d_x.min(PROFILE_ROWS), d_z)?;
        return Ok(0.0);
    }
    let profile = cached_profile(d_x, d_z, GadgetModel::default())?;
    Ok(profile.probability(&McNoise::circuit_level(noise)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(p: f64) -> PhysicalNoise {
        PhysicalNoise::new(p).unwrap()
    }

    #[test]
    fn zero_noise_gives_zero() {
        let c = build_gadget(3, 9).unwrap();
        let s = run(
            &c,
            &McNoise::circuit_level(n(0.0)),
            2000,
            1,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(s.discard.mean, 0.0);
        assert_eq!(s.undetected_group_z.mean, 0.0);
        assert_eq!(level1_discard_probability(3, 9, n(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_and_strategy_independent() {
        let c = build_gadget(3, 9).unwrap();
        let noise = McNoise::circuit_level(n(2e-3));
        let a = run(&c, &noise, 20_000, 42, Execution::Parallel).unwrap();
        let b = run(&c, &noise, 20_000, 42, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        let again = run(&c, &noise, 20_000, 42, Execution::Parallel).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn single_gadget_faults_classified() {
        // The exposed E2 location of group 1: Z on the ancilla spreads to the
        // whole group and passes; X on the ancilla trips the flag.
        let c = build_gadget(3, 9).unwrap();
        let gadget_e2: Vec<usize> = c
            .ops
            .iter()
            .enumerate()
            .filter(|(_, op)| {
                matches!(
                    op,
                    Op::Fault {
                        kind: FaultKind::Depol2(..),
                        class: FaultClass::Gadget
                    }
                )
            })
            .map(|(i, _)| i)
            .collect();
        assert_eq!(gadget_e2.len(), 3);
        let loc = gadget_e2[1];
        let mut undetected = 0;
        for p in 1..16 {
            let out = evaluate_faults(&c, &[(loc, p)]);
            if out.groups_hit > 0 {
                assert_eq!(out.groups_hit, 1);
                undetected += 1;
            }
        }
        // (I, Z) and (X, Z).
        assert_eq!(undetected, 2);
    }

    #[test]
    fn single_data_z_is_always_detected() {
        let c = build_gadget(4, 9).unwrap();
        let probes: Vec<usize> = c
            .ops
            .iter()
            .enumerate()
            .filter(|(_, op)| {
                matches!(
                    op,
                    Op::Fault {
                        class: FaultClass::Probe(_),
                        ..
                    }
                )
            })
            .map(|(i, _)| i)
            .collect();
        for &loc in &probes {
            let out = evaluate_faults(&c, &[(loc, 0)]);
            assert!(out.discard && out.groups_hit == 0);
        }
    }

    #[test]
    fn no_other_single_fault_is_an_undetected_group_error() {
        let c = build_gadget(3, 6).unwrap();
        let mut total = 0;
        for (i, op) in c.ops.iter().enumerate() {
            let Op::Fault { kind, class } = *op else {
                continue;
            };
            if matches!(class, FaultClass::Probe(_)) {
                continue;
            }
            let paulis: Vec<usize> = match kind {
                FaultKind::Depol1(_) => (1..4).collect(),
                FaultKind::Depol2(..) => (1..16).collect(),
                _ => vec![0],
            };
            for p in paulis {
                let out = evaluate_faults(&c, &[(i, p)]);
                if out.groups_hit > 0 {
                    assert_eq!(class, FaultClass::Gadget);
                    total += 1;
                }
            }
        }
        assert_eq!(total, 2 * 2);
    }

    #[test]
    fn truncated_profile_matches_full_patch() {
        let noise = McNoise::circuit_level(n(1e-3));
        let full = discard_profile(&build_gadget(8, 9).unwrap()).probability(&noise);
        let cut = discard_profile(&build_gadget(PROFILE_ROWS, 9).unwrap()).probability(&noise);
        assert!((full - cut).abs() <= 1e-14 * full, "{full} vs {cut}");
    }

    #[test]
    fn independent_discard_matches_mc() {
        let c = build_gadget(3, 9).unwrap();
        let noise = McNoise::circuit_level(n(1e-3));
        let analytic = discard_profile(&c).probability(&noise);
        let mc = run(&c, &noise, 200_000, 9, Execution::Parallel)
            .unwrap()
            .discard;
        assert!(
            (mc.mean - analytic).abs() < 4.0 * mc.std_error,
            "{} vs {analytic}",
            mc.mean
        );
    }

    #[test]
    fn probe_enumeration_oracle() {
        // Exact: every one of the 2^3 probe subsets evaluated, weighted by
        // q^|A| (1-q)^(3-|A|). Only the full subset is an undetected group Z.
        let c = build_gadget(3, 9).unwrap();
        let g = 1u32;
        let probes: Vec<usize> = c
            .ops
            .iter()
            .enumerate()
            .filter(
                |(_, op)| matches!(op, Op::Fault { class: FaultClass::Probe(h), .. } if *h == g),
            )
            .map(|(i, _)| i)
            .collect();
        assert_eq!(probes.len(), 3);
        let q: f64 = 0.3;
        let (mut exact_hit, mut exact_discard) = (0.0, 0.0);
        for mask in 0u32..8 {
            let faults: Vec<(usize, usize)> = (0..3)
                .filter(|b| mask >> b & 1 == 1)
                .map(|b| (probes[b], 0))
                .collect();
            let w = q.powi(mask.count_ones() as i32) * (1.0 - q).powi(3 - mask.count_ones() as i32);
            let out = evaluate_faults(&c, &faults);
            exact_hit += w * out.groups_hit as f64;
            exact_discard += w * f64::from(u8::from(out.discard));
        }
        let k = c.groups as f64;
        assert!((exact_hit / k - q.powi(3) / k).abs() < 1e-15);
        assert!((exact_discard - (1.0 - (1.0 - q).powi(3) - q.powi(3))).abs() < 1e-15);
        assert!(!evaluate_faults(&c, &probes.iter().map(|&i| (i, 0)).collect::<Vec<_>>()).discard);
        let mc = run(
            &c,
            &McNoise::probe_only(g, q),
            100_000,
            3,
            Execution::Parallel,
        )
        .unwrap();
        assert!(
            (mc.undetected_group_z.mean - exact_hit / k).abs()
                < 4.0 * mc.undetected_group_z.std_error
        );
        assert!((mc.discard.mean - exact_discard).abs() < 4.0 * mc.discard.std_error);
    }

    #[test]
    fn discard_grows_with_noise_and_width() {
        let a = level1_discard_probability(3, 9, n(5e-4)).unwrap();
        let b = level1_discard_probability(3, 9, n(1e-3)).unwrap();
        let c = level1_discard_probability(3, 18, n(1e-3)).unwrap();
        assert!(0.0 < a && a < b && b < c && c < 1.0);
    }

    #[test]
    fn discard_monotone_and_seed_independent() {
        let c = build_gadget(3, 9).unwrap();
        let est = |p: f64, seed| estimate_discard(&c, n(p), 100_000, seed).unwrap();
        let (a, b, d) = (est(1e-4, 1), est(5e-4, 1), est(1e-3, 1));
        for (lo, hi) in [(a, b), (b, d)] {
            assert!(hi.mean >= lo.mean - 3.0 * lo.std_error.hypot(hi.std_error));
        }
        let other = est(1e-3, 7_777);
        assert!(d.z_score(&other) < 3.0, "{d:?} vs {other:?}");
    }
}
