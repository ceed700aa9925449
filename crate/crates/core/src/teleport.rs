//! Gate teleportation of Z rotations on two-qubit density matrices, and the
//! randomized variant that removes the resource state's coherence.
//!
//! Internally everything is in the computational basis with the data qubit
//! first. [`DensityMatrix2`] values (in the {|+>, |->} basis) are converted
//! with a Hadamard on the way in and out.

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::qstate::{rz, Angle, DensityMatrix2, TOL};

type C = Complex64;

/// Two-qubit state, data ⊗ ancilla, computational basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoQubitDensity {
    matrix: Matrix4<C>,
}

fn hadamard() -> Matrix2<C> {
    let h = C::from(std::f64::consts::FRAC_1_SQRT_2);
    Matrix2::new(h, h, h, -h)
}

fn to_computational(rho: &DensityMatrix2) -> Matrix2<C> {
    let m = rho.matrix();
    let pm = Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1]);
    let h = hadamard();
    h * pm * h
}

fn from_computational(m: &Matrix2<C>) -> Result<DensityMatrix2> {
    let h = hadamard();
    let pm = h * m * h;
    DensityMatrix2::new(pm[(0, 0)].re, pm[(1, 1)].re, pm[(0, 1)])
}

fn kron(a: &Matrix2<C>, b: &Matrix2<C>) -> Matrix4<C> {
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

/// e^{iφZ} in the computational basis.
fn rz_comp(phi: f64) -> Matrix2<C> {
    Matrix2::new(
        C::from_polar(1.0, phi),
        C::from(0.0),
        C::from(0.0),
        C::from_polar(1.0, -phi),
    )
}

fn projector(bit: usize) -> Matrix2<C> {
    let mut p = Matrix2::zeros();
    p[(bit, bit)] = C::from(1.0);
    p
}

/// CNOT with the data qubit as control.
fn cnot() -> Matrix4<C> {
    let one = C::from(1.0);
    let zero = C::from(0.0);
    Matrix4::new(
        one, zero, zero, zero, //
        zero, one, zero, zero, //
        zero, zero, zero, one, //
        zero, zero, one, zero,
    )
}

impl TwoQubitDensity {
    pub fn new(matrix: Matrix4<C>) -> Result<Self> {
        let herm = (matrix - matrix.adjoint()).norm();
        if herm > TOL {
            return Err(Error::invalid(format!(
                "two-qubit matrix not Hermitian ({herm:e})"
            )));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TOL || tr.im.abs() > TOL {
            return Err(Error::invalid(format!("two-qubit trace {tr} != 1")));
        }
        let min = matrix.symmetric_eigenvalues().min();
        if min < -TOL {
            return Err(Error::NotPsd { det: min });
        }
        Ok(TwoQubitDensity { matrix })
    }

    pub fn product(data: &DensityMatrix2, ancilla: &DensityMatrix2) -> Self {
        TwoQubitDensity {
            matrix: kron(&to_computational(data), &to_computational(ancilla)),
        }
    }

    pub fn matrix(&self) -> &Matrix4<C> {
        &self.matrix
    }

    /// Reduced state of the data qubit.
    pub fn data_marginal(&self) -> Result<DensityMatrix2> {
        let mut m = Matrix2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                m[(i, j)] = self.matrix[(2 * i, 2 * j)] + self.matrix[(2 * i + 1, 2 * j + 1)];
            }
        }
        from_computational(&m)
    }

    /// Reduced state of the ancilla.
    pub fn ancilla_marginal(&self) -> Result<DensityMatrix2> {
        let mut m = Matrix2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                m[(i, j)] = self.matrix[(i, j)] + self.matrix[(2 + i, 2 + j)];
            }
        }
        from_computational(&m)
    }
}

/// CNOT, Z measurement of the ancilla, and R_z(2θ) on the data qubit in the
/// branch given by `feedback_on`. The measured ancilla stays as a classical
/// record.
fn teleport_channel(rho2: &TwoQubitDensity, theta: Angle, feedback_on: usize) -> TwoQubitDensity {
    let u = cnot();
    let evolved = u * rho2.matrix * u.adjoint();
    let mut out = Matrix4::zeros();
    for m in 0..2 {
        let fix = if m == feedback_on {
            rz_comp(2.0 * theta.radians())
        } else {
            Matrix2::identity()
        };
        let k = kron(&fix, &projector(m));
        out += k * evolved * k.adjoint();
    }
    TwoQubitDensity { matrix: out }
}

/// Teleports R_z(θ) with resource |θ>: corrects with R_z(2θ) on outcome 1.
pub fn channel_g(rho2: &TwoQubitDensity, theta: Angle) -> TwoQubitDensity {
    teleport_channel(rho2, theta, 1)
}

/// As [`channel_g`] with the feedback moved to outcome 0, for resource
/// X|θ> = |−θ>.
pub fn channel_g_prime(rho2: &TwoQubitDensity, theta: Angle) -> TwoQubitDensity {
    teleport_channel(rho2, theta, 0)
}

/// Uses the resource as is (channel G) or flipped by X (channel G′) with
/// probability 1/2 each and returns the data qubit.
pub fn randomized_teleport(
    rho_in: &DensityMatrix2,
    ancilla: &DensityMatrix2,
    theta: Angle,
) -> Result<DensityMatrix2> {
    let a = channel_g(&TwoQubitDensity::product(rho_in, ancilla), theta).data_marginal()?;
    let b = channel_g_prime(&TwoQubitDensity::product(rho_in, &ancilla.conj_x()), theta)
        .data_marginal()?;
    a.mix(&b, 0.5)
}

/// ½(ρ + R_z(2θ)X ρ X R_z(2θ)†): removes coherence in the {|θ>, Z|θ>} frame.
pub fn dephase_reference(rho: &DensityMatrix2, theta: Angle) -> Result<DensityMatrix2> {
    let flipped = rho.conj_x().apply_unitary(&rz(2.0 * theta.radians()))?;
    rho.mix(&flipped, 0.5)
}
