//! Physical and logical noise parameters.
//!
//! Logical error rates follow the phenomenological scaling
//! P_L(d) = 0.1 (100 p)^{(d+1)/2}, split evenly between X and Z, with
//! rectangular patches scaled by their area relative to the square patch of
//! the same distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest physical error rate for which the scaling formula is used.
pub const MAX_P_PHY: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PhysicalNoise {
    p_phy: f64,
}

impl PhysicalNoise {
    pub fn new(p_phy: f64) -> Result<Self> {
        if !(p_phy.is_finite() && (0.0..=MAX_P_PHY).contains(&p_phy)) {
            return Err(Error::Probability(format!(
                "p_phy = {p_phy} outside [0, {MAX_P_PHY}]"
            )));
        }
        Ok(PhysicalNoise { p_phy })
    }

    pub fn noiseless() -> Self {
        PhysicalNoise { p_phy: 0.0 }
    }

    pub fn p_phy(&self) -> f64 {
        self.p_phy
    }
}

impl TryFrom<f64> for PhysicalNoise {
    type Error = Error;
    fn try_from(p: f64) -> Result<Self> {
        PhysicalNoise::new(p)
    }
}

impl From<PhysicalNoise> for f64 {
    fn from(n: PhysicalNoise) -> f64 {
        n.p_phy
    }
}

/// Logical X and Z error probabilities (per cycle unless stated otherwise).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LogicalRates {
    pub p_x: f64,
    pub p_z: f64,
}

impl LogicalRates {
    pub const ZERO: LogicalRates = LogicalRates { p_x: 0.0, p_z: 0.0 };

    pub fn scaled(self, factor: f64) -> Self {
        LogicalRates {
            p_x: self.p_x * factor,
            p_z: self.p_z * factor,
        }
    }

    pub fn plus(self, other: LogicalRates) -> Self {
        LogicalRates {
            p_x: self.p_x + other.p_x,
            p_z: self.p_z + other.p_z,
        }
    }
}

/// Odd distances from 3 and even distances from 4 have a defined rate.
pub fn is_valid_distance(d: u32) -> bool {
    (d % 2 == 1 && d >= 3) || (d % 2 == 0 && d >= 4)
}

fn check_threshold(noise: PhysicalNoise) -> Result<f64> {
    let x = 100.0 * noise.p_phy;
    if x >= 1.0 {
        return Err(Error::invalid(format!(
            "100 p_phy = {x} is not below threshold"
        )));
    }
    Ok(x)
}

/// p_x = p_z = 0.05 (100 p)^{(d+1)/2} for an odd-distance square patch.
pub fn logical_rate_square(d: u32, noise: PhysicalNoise) -> Result<LogicalRates> {
    if d % 2 == 0 || d < 3 {
        return Err(Error::invalid(format!(
            "square-patch rate needs odd d >= 3, got {d} (use logical_rate_rect for even d)"
        )));
    }
    let x = check_threshold(noise)?;
    let p = 0.05 * x.powi(((d + 1) / 2) as i32);
    Ok(LogicalRates { p_x: p, p_z: p })
}

fn axis_rate(d_a: u32, area: f64, x: f64) -> f64 {
    let d = d_a as f64;
    if d_a % 2 == 1 {
        area / (d * d) * 0.05 * x.powi(((d_a + 1) / 2) as i32)
    } else {
        area / (2.0 * (d - 1.0) * (d - 1.0)) * 0.05 * x.powi((d_a / 2) as i32)
    }
}

/// Per-axis rates of a d_x × d_z patch. Each axis uses its own parity rule.
pub fn logical_rate_rect(d_x: u32, d_z: u32, noise: PhysicalNoise) -> Result<LogicalRates> {
    for (name, d) in [("d_x", d_x), ("d_z", d_z)] {
        if !is_valid_distance(d) {
            return Err(Error::invalid(format!(
                "{name} = {d} is not a supported distance (odd >= 3 or even >= 4)"
            )));
        }
    }
    let x = check_threshold(noise)?;
    let area = (d_x as f64) * (d_z as f64);
    Ok(LogicalRates {
        p_x: axis_rate(d_x, area, x),
        p_z: axis_rate(d_z, area, x),
    })
}

/// Probability per rotation group of an undetectable weight-3 Z error.
pub fn undetected_group_z_rate(noise: PhysicalNoise) -> f64 {
    2.0 / 15.0 * noise.p_phy
}

/// Single-qubit Pauli label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn has_x(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    pub fn has_z(self) -> bool {
        matches!(self, Pauli::Z | Pauli::Y)
    }
}

/// Sampling description of the circuit-level noise model: E1 after one-qubit
/// operations and idles, E2 after two-qubit gates, and classical flips of
/// initializations and measurements.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitNoise {
    /// (Pauli, probability) for each non-identity one-qubit Pauli.
    pub single: Vec<(Pauli, f64)>,
    /// ((P1, P2), probability) for each of the 15 non-identity two-qubit Paulis.
    pub two: Vec<((Pauli, Pauli), f64)>,
    pub measure_flip: f64,
    pub init_flip: f64,
}

impl CircuitNoise {
    pub fn single_total(&self) -> f64 {
        self.single.iter().map(|(_, p)| p).sum()
    }

    pub fn two_total(&self) -> f64 {
        self.two.iter().map(|(_, p)| p).sum()
    }
}

pub fn depolarizing_channels(noise: PhysicalNoise) -> CircuitNoise {
    let p = noise.p_phy;
    let single = [Pauli::X, Pauli::Y, Pauli::Z]
        .into_iter()
        .map(|q| (q, p / 3.0))
        .collect();
    let mut two = Vec::with_capacity(15);
    for a in Pauli::ALL {
        for b in Pauli::ALL {
            if (a, b) != (Pauli::I, Pauli::I) {
                two.push(((a, b), p / 15.0));
            }
        }
    }
    CircuitNoise {
        single,
        two,
        measure_flip: p,
        init_flip: p,
    }
}
