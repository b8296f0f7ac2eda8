//! Port-Hamiltonian mechanical systems in canonical coordinates.
//!
//! A mechanical system is described by its mass matrix `M(q)`, potential
//! `V(q)`, dissipation `D` and input matrix `B`. The state is the pair of
//! generalized positions and momenta `x = (q, p)` with `p = M(q) q̇`.

mod general;

pub use general::{check_general_invariants, output, GeneralPHSystem, MechanicalAsGeneral, QuadraticPHSystem};

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Canonical coordinates `(q, p)` of a mechanical system.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    q: Vector,
    p: Vector,
}

impl StateVector {
    pub fn new(q: Vector, p: Vector) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::DimensionMismatch {
                what: "momentum",
                expected: q.len(),
                got: p.len(),
            });
        }
        if !q.iter().chain(p.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { q, p })
    }

    pub fn from_slices(q: &[f64], p: &[f64]) -> Result<Self> {
        Self::new(Vector::from_column_slice(q), Vector::from_column_slice(p))
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            q: Vector::zeros(n),
            p: Vector::zeros(n),
        }
    }

    /// Splits a stacked `(q, p)` vector of even length.
    pub fn from_flat(x: &Vector) -> Result<Self> {
        if !x.len().is_multiple_of(2) {
            return Err(Error::DimensionMismatch {
                what: "stacked state (must be even)",
                expected: x.len() + 1,
                got: x.len(),
            });
        }
        let n = x.len() / 2;
        Self::new(x.rows(0, n).into_owned(), x.rows(n, n).into_owned())
    }

    pub fn to_flat(&self) -> Vector {
        let n = self.dof();
        let mut x = Vector::zeros(2 * n);
        x.rows_mut(0, n).copy_from(&self.q);
        x.rows_mut(n, n).copy_from(&self.p);
        x
    }

    pub fn q(&self) -> &Vector {
        &self.q
    }

    pub fn p(&self) -> &Vector {
        &self.p
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }
}

/// Partial derivatives `(∂φ/∂q, ∂φ/∂p)` of a scalar function on phase space.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGradient {
    pub dq: Vector,
    pub dp: Vector,
}

impl PhaseGradient {
    pub fn new(dq: Vector, dp: Vector) -> Self {
        assert_eq!(dq.len(), dp.len(), "phase gradient halves differ in length");
        Self { dq, dp }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(Vector::zeros(n), Vector::zeros(n))
    }

    pub fn dof(&self) -> usize {
        self.dq.len()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(&self.dq * s, &self.dp * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(&self.dq + &other.dq, &self.dp + &other.dp)
    }

    pub fn to_flat(&self) -> Vector {
        StateVector {
            q: self.dq.clone(),
            p: self.dp.clone(),
        }
        .to_flat()
    }

    /// Directional derivative along a phase-space velocity.
    pub fn dot(&self, v: &Tangent) -> f64 {
        self.dq.dot(&v.q_dot) + self.dp.dot(&v.p_dot)
    }
}

/// Time derivative `(q̇, ṗ)` of a state.
#[derive(Clone, Debug, PartialEq)]
pub struct Tangent {
    pub q_dot: Vector,
    pub p_dot: Vector,
}

impl Tangent {
    pub fn to_flat(&self) -> Vector {
        StateVector {
            q: self.q_dot.clone(),
            p: self.p_dot.clone(),
        }
        .to_flat()
    }
}

/// A mechanical port-Hamiltonian system
///
/// ```text
/// q̇ = ∂H/∂p
/// ṗ = -∂H/∂q - D ∂H/∂p + B u
/// y = Bᵀ q̇
/// ```
///
/// with `H = ½ pᵀ M⁻¹(q) p + V(q)`. Implementors supply the mass-matrix
/// derivative analytically.
pub trait MechanicalModel: Send + Sync + fmt::Debug {
    fn dof(&self) -> usize;

    fn mass_matrix(&self, q: &Vector) -> Matrix;

    /// `∂M/∂q_i` for every coordinate `i`.
    fn mass_matrix_grad(&self, q: &Vector) -> Vec<Matrix>;

    fn potential(&self, q: &Vector) -> f64;

    fn potential_grad(&self, q: &Vector) -> Vector;

    fn dissipation(&self) -> Matrix;

    /// `n × m` input routing matrix.
    fn input_matrix(&self) -> Matrix;

    fn inputs(&self) -> usize {
        self.input_matrix().ncols()
    }
}

fn check_dims(sys: &dyn MechanicalModel, x: &StateVector) -> Result<()> {
    if x.dof() != sys.dof() {
        return Err(Error::DimensionMismatch {
            what: "state",
            expected: sys.dof(),
            got: x.dof(),
        });
    }
    Ok(())
}

pub(crate) fn mass_cholesky(sys: &dyn MechanicalModel, q: &Vector) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(sys.mass_matrix(q)).ok_or_else(|| Error::SingularMass {
        q: q.iter().copied().collect(),
    })
}

/// Generalized velocity `q̇ = M(q)⁻¹ p`.
pub fn velocity(sys: &dyn MechanicalModel, x: &StateVector) -> Result<Vector> {
    check_dims(sys, x)?;
    Ok(mass_cholesky(sys, x.q())?.solve(x.p()))
}

pub fn kinetic_energy(sys: &dyn MechanicalModel, x: &StateVector) -> Result<f64> {
    let v = velocity(sys, x)?;
    Ok(0.5 * x.p().dot(&v))
}

/// Gradient of `K_e = ½ pᵀ M⁻¹(q) p`, using `∂M⁻¹/∂q_i = -M⁻¹ (∂M/∂q_i) M⁻¹`.
pub fn kinetic_energy_grad(sys: &dyn MechanicalModel, x: &StateVector) -> Result<PhaseGradient> {
    let v = velocity(sys, x)?;
    let dm = sys.mass_matrix_grad(x.q());
    let dq = Vector::from_iterator(sys.dof(), dm.iter().map(|mi| -0.5 * v.dot(&(mi * &v))));
    Ok(PhaseGradient::new(dq, v))
}

pub fn hamiltonian(sys: &dyn MechanicalModel, x: &StateVector) -> Result<f64> {
    Ok(kinetic_energy(sys, x)? + sys.potential(x.q()))
}

pub fn hamiltonian_grad(sys: &dyn MechanicalModel, x: &StateVector) -> Result<PhaseGradient> {
    let mut g = kinetic_energy_grad(sys, x)?;
    g.dq += sys.potential_grad(x.q());
    Ok(g)
}

/// Canonical dissipative flow generated by the gradient of a storage function:
/// `q̇ = ∂S/∂p`, `ṗ = -∂S/∂q - D ∂S/∂p`.
pub fn drift(sys: &dyn MechanicalModel, grad: &PhaseGradient) -> Result<Tangent> {
    drift_with_dissipation(&sys.dissipation(), grad)
}

pub fn drift_with_dissipation(dissipation: &Matrix, grad: &PhaseGradient) -> Result<Tangent> {
    let n = grad.dof();
    if dissipation.nrows() != n || dissipation.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "dissipation matrix",
            expected: n,
            got: dissipation.nrows(),
        });
    }
    Ok(Tangent {
        q_dot: grad.dp.clone(),
        p_dot: -&grad.dq - dissipation * &grad.dp,
    })
}

/// Canonical Poisson bracket `{φ, ξ} = φ_qᵀ ξ_p - φ_pᵀ ξ_q`.
///
/// Panics if the two gradients live on phase spaces of different dimension.
pub fn poisson_bracket(phi: &PhaseGradient, xi: &PhaseGradient) -> f64 {
    assert_eq!(phi.dof(), xi.dof(), "poisson bracket of mismatched gradients");
    phi.dq.dot(&xi.dp) - phi.dp.dot(&xi.dq)
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn min_eigenvalue(a: &Matrix) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

pub fn asymmetry(a: &Matrix) -> f64 {
    (a - a.transpose()).amax()
}

/// Checks `M(q)` is symmetric positive definite at `q`.
pub fn check_mass_matrix(sys: &dyn MechanicalModel, q: &Vector) -> Result<()> {
    let m = sys.mass_matrix(q);
    if asymmetry(&m) > 1e-12 * (1.0 + m.amax()) {
        return Err(Error::InvalidParameter(format!("mass matrix not symmetric at q = {q:?}")));
    }
    if min_eigenvalue(&m) <= 0.0 {
        return Err(Error::SingularMass {
            q: q.iter().copied().collect(),
        });
    }
    Ok(())
}

/// Checks `D` is symmetric positive semidefinite.
pub fn check_dissipation(d: &Matrix) -> Result<()> {
    if asymmetry(d) > 1e-12 * (1.0 + d.amax()) {
        return Err(Error::InvalidParameter("dissipation not symmetric".into()));
    }
    if min_eigenvalue(d) < -1e-12 {
        return Err(Error::InvalidParameter("dissipation not positive semidefinite".into()));
    }
    Ok(())
}
