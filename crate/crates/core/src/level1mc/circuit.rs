//! Rotated surface-code patch, rotation-group gadgets and the two-round
//! extraction circuit, flattened into a time-ordered list of operations.
//!
//! Layout: data qubit (r, c) for r in 0..d_x, c in 0..d_z, so logical Z runs
//! along row 0 (length d_z) and logical X down a column (length d_x).
//! Plaquette (i, j) for i in -1..d_x, j in -1..d_z covers the data qubits
//! (i, j), (i, j+1), (i+1, j), (i+1, j+1) that exist; it is X-type when
//! i + j is even. Top and bottom boundaries keep only X checks, left and
//! right only Z checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Qubits per rotation group.
pub const GROUP_SIZE: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CheckKind {
    X,
    Z,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub kind: CheckKind,
    pub ancilla: usize,
    /// Data qubits in corner order top-left, top-right, bottom-left, bottom-right.
    pub corners: [Option<usize>; 4],
    pub row: i32,
    pub col: i32,
    /// X checks touching data row 0.
    pub post_selected: bool,
}

impl Check {
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.corners.iter().flatten().copied()
    }

    pub fn weight(&self) -> usize {
        self.corners.iter().flatten().count()
    }
}

/// How faults inside the three-qubit rotation gadget are placed.
///
/// The gadget computes the group parity onto an ancilla with a CNOT ladder,
/// rotates the ancilla about Z, and uncomputes. The ancilla is measured in
/// the Z basis afterwards as a flag and the shot is discarded if it fires.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum GadgetModel {
    /// `multiplicity` E2 locations on (last group qubit, ancilla) while the
    /// ancilla holds the parity, plus ancilla preparation and measurement
    /// flips. Ladder CNOTs are otherwise noiseless.
    Exposed { multiplicity: u32 },
    /// E2 after every ladder CNOT, E1 on the ancilla at the rotation and on
    /// idle group qubits.
    FullLadder,
}

impl Default for GadgetModel {
    fn default() -> Self {
        GadgetModel::Exposed { multiplicity: 1 }
    }
}

/// Source of a fault location, used to set its rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaultClass {
    DataInit,
    AncillaInit,
    Idle,
    Gate,
    Measure,
    Gadget,
    /// Z on one data qubit of the given group right after the gadget;
    /// disabled unless explicitly enabled.
    Probe(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaultKind {
    Depol1(usize),
    Depol2(usize, usize),
    ZFlip(usize),
    XFlip(usize),
    /// Classical flip of a measurement record.
    RecordFlip(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Basis {
    X,
    Z,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Cnot {
        control: usize,
        target: usize,
    },
    /// Clears the frame of a qubit (fresh preparation).
    Reset(usize),
    Measure {
        qubit: usize,
        basis: Basis,
        record: usize,
    },
    Fault {
        kind: FaultKind,
        class: FaultClass,
    },
}

/// The level-1 injection circuit for one d_x × d_z patch.
#[derive(Clone, Debug)]
pub struct GadgetCircuit {
    pub d_x: u32,
    pub d_z: u32,
    pub model: GadgetModel,
    pub groups: u32,
    pub n_data: usize,
    pub n_qubits: usize,
    pub checks: Vec<Check>,
    pub ops: Vec<Op>,
    /// Indices into `checks` of the post-selected X checks.
    pub ps_checks: Vec<usize>,
    /// Measurement record of each post-selected check, per round.
    pub ps_records: [Vec<usize>; 2],
    /// Position in `ps_checks` of the check straddling groups g and g+1.
    pub boundary_ps: Vec<usize>,
    pub flag_records: Vec<usize>,
    pub n_records: usize,
    pub schedule: &'static str,
}

pub const SCHEDULE: &str =
    "X checks: TL, TR, BL, BR; Z checks: TL, BL, TR, BR; 4 CNOT layers per round, 2 rounds";

fn data_index(d_z: u32, r: i32, c: i32) -> usize {
    (r as usize) * d_z as usize + c as usize
}

fn layout(d_x: u32, d_z: u32, first_ancilla: usize) -> Vec<Check> {
    let (nx, nz) = (d_x as i32, d_z as i32);
    let inside = |r: i32, c: i32| r >= 0 && r < nx && c >= 0 && c < nz;
    let mut checks = Vec::new();
    for i in -1..nx {
        for j in -1..nz {
            let kind = if (i + j).rem_euclid(2) == 0 {
                CheckKind::X
            } else {
                CheckKind::Z
            };
            let top_or_bottom = i == -1 || i == nx - 1;
            let left_or_right = j == -1 || j == nz - 1;
            let keep = match (top_or_bottom, left_or_right) {
                (false, false) => true,
                (true, false) => kind == CheckKind::X,
                (false, true) => kind == CheckKind::Z,
                (true, true) => false,
            };
            if !keep {
                continue;
            }
            let corner = |r: i32, c: i32| inside(r, c).then(|| data_index(d_z, r, c));
            let corners = [
                corner(i, j),
                corner(i, j + 1),
                corner(i + 1, j),
                corner(i + 1, j + 1),
            ];
            let post_selected = kind == CheckKind::X && (i == -1 || i == 0);
            checks.push(Check {
                kind,
                ancilla: first_ancilla + checks.len(),
                corners,
                row: i,
                col: j,
                post_selected,
            });
        }
    }
    checks
}

/// Corner visited by a check at CNOT layer `step`.
fn corner_at(kind: CheckKind, step: usize) -> usize {
    match kind {
        CheckKind::X => [0, 1, 2, 3][step],
        CheckKind::Z => [0, 2, 1, 3][step],
    }
}

struct Builder {
    ops: Vec<Op>,
    n_records: usize,
}

impl Builder {
    fn fault(&mut self, kind: FaultKind, class: FaultClass) {
        self.ops.push(Op::Fault { kind, class });
    }

    fn cnot(&mut self, control: usize, target: usize, class: FaultClass, noisy: bool) {
        self.ops.push(Op::Cnot { control, target });
        if noisy {
            self.fault(FaultKind::Depol2(control, target), class);
        }
    }

    fn measure(&mut self, qubit: usize, basis: Basis, class: FaultClass) -> usize {
        let record = self.n_records;
        self.n_records += 1;
        self.ops.push(Op::Measure {
            qubit,
            basis,
            record,
        });
        self.fault(FaultKind::RecordFlip(record), class);
        record
    }
}

pub fn build_gadget(d_x: u32, d_z: u32) -> Result<GadgetCircuit> {
    build_gadget_with(d_x, d_z, GadgetModel::default())
}

pub fn build_gadget_with(d_x: u32, d_z: u32, model: GadgetModel) -> Result<GadgetCircuit> {
    if d_z == 0 || d_z % GROUP_SIZE != 0 {
        return Err(Error::invalid(format!(
            "level-1 d_z = {d_z} must be a positive multiple of {GROUP_SIZE}"
        )));
    }
    if d_x < 3 {
        return Err(Error::invalid(format!(
            "level-1 d_x = {d_x} must be at least 3"
        )));
    }
    if let GadgetModel::Exposed { multiplicity: 0 } = model {
        log::debug!("gadget multiplicity 0: rotation gadgets are noiseless");
    }
    let n_data = (d_x * d_z) as usize;
    let checks = layout(d_x, d_z, n_data);
    let groups = d_z / GROUP_SIZE;
    let first_gadget = n_data + checks.len();
    let n_qubits = first_gadget + groups as usize;
    let group_qubits = |g: u32| -> [usize; 3] {
        let c = (g * GROUP_SIZE) as i32;
        [
            data_index(d_z, 0, c),
            data_index(d_z, 0, c + 1),
            data_index(d_z, 0, c + 2),
        ]
    };

    let mut b = Builder {
        ops: Vec::new(),
        n_records: 0,
    };

    // Data preparation in |+>.
    for q in 0..n_data {
        b.ops.push(Op::Reset(q));
        b.fault(FaultKind::ZFlip(q), FaultClass::DataInit);
    }

    // Rotation gadgets, all groups in parallel.
    let mut flag_records = Vec::with_capacity(groups as usize);
    let gadget_noisy_ladder = model == GadgetModel::FullLadder;
    for g in 0..groups {
        let a = first_gadget + g as usize;
        b.ops.push(Op::Reset(a));
        b.fault(FaultKind::XFlip(a), FaultClass::Gadget);
    }
    let ladder: Vec<usize> = vec![0, 1, 2];
    for &idx in &ladder {
        for g in 0..groups {
            let a = first_gadget + g as usize;
            let qs = group_qubits(g);
            b.cnot(qs[idx], a, FaultClass::Gadget, gadget_noisy_ladder);
            if gadget_noisy_ladder {
                for (j, &q) in qs.iter().enumerate() {
                    if j != idx {
                        b.fault(FaultKind::Depol1(q), FaultClass::Gadget);
                    }
                }
            }
        }
    }
    for g in 0..groups {
        let a = first_gadget + g as usize;
        let qs = group_qubits(g);
        match model {
            GadgetModel::Exposed { multiplicity } => {
                for _ in 0..multiplicity {
                    b.fault(FaultKind::Depol2(qs[2], a), FaultClass::Gadget);
                }
            }
            GadgetModel::FullLadder => {
                b.fault(FaultKind::Depol1(a), FaultClass::Gadget);
            }
        }
    }
    for &idx in ladder.iter().rev() {
        for g in 0..groups {
            let a = first_gadget + g as usize;
            let qs = group_qubits(g);
            b.cnot(qs[idx], a, FaultClass::Gadget, gadget_noisy_ladder);
            if gadget_noisy_ladder {
                for (j, &q) in qs.iter().enumerate() {
                    if j != idx {
                        b.fault(FaultKind::Depol1(q), FaultClass::Gadget);
                    }
                }
            }
        }
    }
    for g in 0..groups {
        let a = first_gadget + g as usize;
        flag_records.push(b.measure(a, Basis::Z, FaultClass::Gadget));
    }
    for g in 0..groups {
        for q in group_qubits(g) {
            b.fault(FaultKind::ZFlip(q), FaultClass::Probe(g));
        }
    }

    // Two rounds of syndrome extraction.
    let n_patch = n_data + checks.len();
    let mut check_records: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for round in 0..2 {
        for c in &checks {
            b.ops.push(Op::Reset(c.ancilla));
            let flip = match c.kind {
                CheckKind::X => FaultKind::ZFlip(c.ancilla),
                CheckKind::Z => FaultKind::XFlip(c.ancilla),
            };
            b.fault(flip, FaultClass::AncillaInit);
        }
        for step in 0..4 {
            let mut busy = vec![false; n_patch];
            for c in &checks {
                if let Some(q) = c.corners[corner_at(c.kind, step)] {
                    let (control, target) = match c.kind {
                        CheckKind::X => (c.ancilla, q),
                        CheckKind::Z => (q, c.ancilla),
                    };
                    debug_assert!(!busy[q] && !busy[c.ancilla]);
                    busy[q] = true;
                    busy[c.ancilla] = true;
                    b.cnot(control, target, FaultClass::Gate, true);
                }
            }
            for (q, &used) in busy.iter().enumerate() {
                if !used {
                    b.fault(FaultKind::Depol1(q), FaultClass::Idle);
                }
            }
        }
        for q in 0..n_data {
            b.fault(FaultKind::Depol1(q), FaultClass::Idle);
        }
        for c in &checks {
            let basis = match c.kind {
                CheckKind::X => Basis::X,
                CheckKind::Z => Basis::Z,
            };
            check_records[round].push(b.measure(c.ancilla, basis, FaultClass::Measure));
        }
    }

    let ps_checks: Vec<usize> = (0..checks.len())
        .filter(|&i| checks[i].post_selected)
        .collect();
    let ps_records = [
        ps_checks.iter().map(|&i| check_records[0][i]).collect(),
        ps_checks.iter().map(|&i| check_records[1][i]).collect(),
    ];
    let mut boundary_ps = Vec::new();
    for g in 0..groups.saturating_sub(1) {
        let left = data_index(d_z, 0, (g * GROUP_SIZE + 2) as i32);
        let right = left + 1;
        let pos = ps_checks
            .iter()
            .position(|&i| {
                let s: Vec<usize> = checks[i].support().collect();
                s.contains(&left) && s.contains(&right)
            })
            .ok_or_else(|| Error::Invariant(format!("no check straddles groups {g}, {}", g + 1)))?;
        boundary_ps.push(pos);
    }

    Ok(GadgetCircuit {
        d_x,
        d_z,
        model,
        groups,
        n_data,
        n_qubits,
        checks,
        ops: b.ops,
        ps_checks,
        ps_records,
        boundary_ps,
        flag_records,
        n_records: b.n_records,
        schedule: SCHEDULE,
    })
}

impl GadgetCircuit {
    pub fn fault_location_count(&self) -> usize {
        self.ops
            .iter()
            .filter(|op| matches!(op, Op::Fault { .. }))
            .count()
    }

    /// Fault locations excluding the normally disabled probes.
    pub fn active_fault_location_count(&self) -> usize {
        self.ops
            .iter()
            .filter(|op| matches!(op, Op::Fault { class, .. } if !matches!(class, FaultClass::Probe(_))))
            .count()
    }

    /// Data qubits of rotation group `g` (row 0, columns 3g..3g+3).
    pub fn group_qubits(&self, g: u32) -> [usize; 3] {
        let c = (g * GROUP_SIZE) as usize;
        [c, c + 1, c + 2]
    }

    pub fn x_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.kind == CheckKind::X)
    }
}
