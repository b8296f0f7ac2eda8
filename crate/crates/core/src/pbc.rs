//! Energy-balancing passivity-based control.
//!
//! A feedback `u = β(x) + ν` shapes the storage function to
//! `S_cl = H + V̄` while keeping the loop passive from `ν` to `y`.
//! Damping injection `ν = -D_i y` then adds dissipation along the output.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, SymmetricEigen};

use crate::error::{Error, Result};
use crate::ph::{
    self, check_dissipation, drift_with_dissipation, GeneralPHSystem, Matrix, MechanicalModel, PhaseGradient, StateVector,
    Tangent, Vector,
};

/// Added energy `V̄(q)`, a function of the configuration only.
pub trait AddedEnergy: Send + Sync + fmt::Debug {
    fn value(&self, q: &Vector) -> f64;
    fn gradient(&self, q: &Vector) -> Vector;
    /// A constant the model author guarantees `V̄(q) ≥ lower_bound()` against.
    fn lower_bound(&self) -> f64;
}

/// `V̄(q) = ½ (q - q*)ᵀ K (q - q*)` with `K` symmetric PSD.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticSpring {
    stiffness: Matrix,
    reference: Vector,
}

impl QuadraticSpring {
    pub fn new(stiffness: Matrix, reference: Vector) -> Result<Self> {
        if stiffness.nrows() != reference.len() || stiffness.ncols() != reference.len() {
            return Err(Error::DimensionMismatch {
                what: "spring stiffness",
                expected: reference.len(),
                got: stiffness.nrows(),
            });
        }
        check_dissipation(&stiffness).map_err(|_| Error::InvalidParameter("spring stiffness must be symmetric PSD".into()))?;
        Ok(Self { stiffness, reference })
    }

    /// A spring of stiffness `k` acting on coordinate `axis` towards `reference`.
    pub fn on_axis(dof: usize, axis: usize, k: f64, reference: f64) -> Result<Self> {
        if axis >= dof {
            return Err(Error::InvalidParameter(format!("spring axis {axis} out of range for {dof} DOF")));
        }
        if !(k >= 0.0 && k.is_finite()) || !reference.is_finite() {
            return Err(Error::InvalidParameter(format!("invalid spring k = {k}, reference = {reference}")));
        }
        let mut stiffness = Matrix::zeros(dof, dof);
        stiffness[(axis, axis)] = k;
        let mut r = Vector::zeros(dof);
        r[axis] = reference;
        Self::new(stiffness, r)
    }

    pub fn zero(dof: usize) -> Self {
        Self {
            stiffness: Matrix::zeros(dof, dof),
            reference: Vector::zeros(dof),
        }
    }
}

impl AddedEnergy for QuadraticSpring {
    fn value(&self, q: &Vector) -> f64 {
        let e = q - &self.reference;
        0.5 * e.dot(&(&self.stiffness * &e))
    }

    fn gradient(&self, q: &Vector) -> Vector {
        &self.stiffness * (q - &self.reference)
    }

    fn lower_bound(&self) -> f64 {
        0.0
    }
}

/// Left pseudo-inverse `(gᵀg)⁻¹gᵀ`; fails when `g` lacks full column rank.
pub fn left_pseudo_inverse(g: &Matrix) -> Result<Matrix> {
    let gram = g.transpose() * g;
    let scale = gram.amax().max(f64::MIN_POSITIVE);
    let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
    if eig.min() <= 1e-12 * scale {
        return Err(Error::RankDeficient);
    }
    let chol = Cholesky::new(gram).ok_or(Error::RankDeficient)?;
    Ok(chol.solve(&g.transpose()))
}

/// Rows form an orthonormal basis of the left null space of `g`, so `g⊥ g = 0`.
pub fn left_annihilator(g: &Matrix) -> Matrix {
    let dim = g.nrows();
    let gram = g.transpose() * g;
    // Projector onto range(g)ᗮ; its unit eigenvalues span the annihilator rows.
    let proj = match Cholesky::new(gram) {
        Some(chol) => Matrix::identity(dim, dim) - g * chol.solve(&g.transpose()),
        None => {
            let svd = g.clone().svd(true, false);
            let u = svd.u.expect("requested U");
            let tol = 1e-12 * svd.singular_values.amax().max(1.0);
            let mut p = Matrix::identity(dim, dim);
            for (k, s) in svd.singular_values.iter().enumerate() {
                if *s > tol {
                    let col = u.column(k);
                    p -= col * col.transpose();
                }
            }
            p
        }
    };
    let eig = SymmetricEigen::new((&proj + proj.transpose()) * 0.5);
    let rows: Vec<_> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, l)| **l > 0.5)
        .map(|(k, _)| eig.eigenvectors.column(k).transpose())
        .collect();
    if rows.is_empty() {
        Matrix::zeros(0, dim)
    } else {
        Matrix::from_rows(&rows)
    }
}

/// Closed-form energy-balancing feedback `β(x) = g⁺(x) (J(x) + R(x)) ∂V̄/∂x`.
pub fn eb_pbc_general(sys: &dyn GeneralPHSystem, x: &Vector, vbar_grad: &Vector) -> Result<Vector> {
    if vbar_grad.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            what: "added-energy gradient",
            expected: sys.dim(),
            got: vbar_grad.len(),
        });
    }
    let pinv = left_pseudo_inverse(&sys.input_map(x))?;
    Ok(pinv * (sys.interconnection(x) + sys.resistive(x)) * vbar_grad)
}

/// Stacked matching residual `[g⊥(-J + R); gᵀ] ∂V̄/∂x`. A vanishing residual
/// certifies the matching condition at `x`.
pub fn matching_residual(sys: &dyn GeneralPHSystem, x: &Vector, vbar_grad: &Vector) -> Result<Vector> {
    if vbar_grad.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            what: "added-energy gradient",
            expected: sys.dim(),
            got: vbar_grad.len(),
        });
    }
    let g = sys.input_map(x);
    let annihilator = left_annihilator(&g);
    let top = &annihilator * (sys.resistive(x) - sys.interconnection(x)) * vbar_grad;
    let bottom = g.transpose() * vbar_grad;
    let mut r = Vector::zeros(top.len() + bottom.len());
    r.rows_mut(0, top.len()).copy_from(&top);
    r.rows_mut(top.len(), bottom.len()).copy_from(&bottom);
    Ok(r)
}

/// Solves `B u = -∂V̄/∂q` for position-only added energy.
pub fn beta_mechanical(input_matrix: &Matrix, vbar_grad: &Vector) -> Result<Vector> {
    if input_matrix.nrows() != vbar_grad.len() {
        return Err(Error::DimensionMismatch {
            what: "added-energy gradient",
            expected: input_matrix.nrows(),
            got: vbar_grad.len(),
        });
    }
    let target = -vbar_grad;
    let u = left_pseudo_inverse(input_matrix)? * &target;
    let residual = (input_matrix * &u - &target).norm();
    if residual > 1e-9 * (1.0 + target.norm()) {
        return Err(Error::MatchingViolation { residual });
    }
    Ok(u)
}

/// Energy-balancing controller with optional damping injection.
#[derive(Clone, Debug)]
pub struct PassiveController {
    added: Arc<dyn AddedEnergy>,
    damping: Matrix,
}

impl PassiveController {
    pub fn new(added: Arc<dyn AddedEnergy>, damping: Matrix) -> Result<Self> {
        if damping.nrows() != damping.ncols() {
            return Err(Error::InvalidParameter("damping injection matrix must be square".into()));
        }
        check_dissipation(&damping)
            .map_err(|_| Error::InvalidParameter("damping injection matrix must be symmetric PSD".into()))?;
        Ok(Self { added, damping })
    }

    pub fn without_damping(added: Arc<dyn AddedEnergy>, inputs: usize) -> Self {
        Self {
            added,
            damping: Matrix::zeros(inputs, inputs),
        }
    }

    pub fn added_energy(&self) -> &dyn AddedEnergy {
        self.added.as_ref()
    }

    pub fn damping(&self) -> &Matrix {
        &self.damping
    }

    /// `ν = -D_i y`.
    pub fn damping_injection(&self, y: &Vector) -> Vector {
        -(&self.damping * y)
    }
}

/// Build the passive closed loop of a mechanical plant and an energy-balancing controller.
pub fn closed_loop(plant: Arc<dyn MechanicalModel>, controller: PassiveController) -> Result<ClosedLoop> {
    ClosedLoop::new(plant, controller)
}

/// Mechanical plant under `u = β(q) - D_i y + ν`:
///
/// ```text
/// q̇ = ∂S_cl/∂p
/// ṗ = -∂S_cl/∂q - (D + B D_i Bᵀ) ∂S_cl/∂p + B ν
/// ```
#[derive(Clone, Debug)]
pub struct ClosedLoop {
    plant: Arc<dyn MechanicalModel>,
    controller: PassiveController,
    dissipation: Matrix,
    input_matrix: Matrix,
}

impl ClosedLoop {
    pub fn new(plant: Arc<dyn MechanicalModel>, controller: PassiveController) -> Result<Self> {
        let n = plant.dof();
        let b = plant.input_matrix();
        if b.nrows() != n {
            return Err(Error::DimensionMismatch {
                what: "input matrix rows",
                expected: n,
                got: b.nrows(),
            });
        }
        if controller.damping.nrows() != b.ncols() {
            return Err(Error::DimensionMismatch {
                what: "damping injection",
                expected: b.ncols(),
                got: controller.damping.nrows(),
            });
        }
        let probe = controller.added.gradient(&Vector::zeros(n));
        if probe.len() != n {
            return Err(Error::DimensionMismatch {
                what: "added-energy gradient",
                expected: n,
                got: probe.len(),
            });
        }
        beta_mechanical(&b, &probe)?;
        let d = plant.dissipation();
        check_dissipation(&d)?;
        let dissipation = &d + &b * &controller.damping * b.transpose();
        Ok(Self {
            plant,
            controller,
            dissipation,
            input_matrix: b,
        })
    }

    pub fn plant(&self) -> &dyn MechanicalModel {
        self.plant.as_ref()
    }

    pub fn controller(&self) -> &PassiveController {
        &self.controller
    }

    pub fn dof(&self) -> usize {
        self.plant.dof()
    }

    pub fn input_matrix(&self) -> &Matrix {
        &self.input_matrix
    }

    /// Closed-loop dissipation `D + B D_i Bᵀ`.
    pub fn dissipation(&self) -> &Matrix {
        &self.dissipation
    }

    pub fn added_energy(&self, q: &Vector) -> f64 {
        self.controller.added.value(q)
    }

    /// `V^t = V + V̄`.
    pub fn total_potential(&self, q: &Vector) -> f64 {
        self.plant.potential(q) + self.controller.added.value(q)
    }

    pub fn total_potential_grad(&self, q: &Vector) -> Vector {
        self.plant.potential_grad(q) + self.controller.added.gradient(q)
    }

    pub fn kinetic_energy(&self, x: &StateVector) -> Result<f64> {
        ph::kinetic_energy(self.plant(), x)
    }

    pub fn hamiltonian(&self, x: &StateVector) -> Result<f64> {
        ph::hamiltonian(self.plant(), x)
    }

    /// `S_cl = H + V̄`.
    pub fn storage(&self, x: &StateVector) -> Result<f64> {
        Ok(self.hamiltonian(x)? + self.added_energy(x.q()))
    }

    pub fn storage_grad(&self, x: &StateVector) -> Result<PhaseGradient> {
        let mut g = ph::hamiltonian_grad(self.plant(), x)?;
        g.dq += self.controller.added.gradient(x.q());
        Ok(g)
    }

    /// Passive output `y = Bᵀ q̇`.
    pub fn output(&self, x: &StateVector) -> Result<Vector> {
        Ok(self.input_matrix.transpose() * ph::velocity(self.plant(), x)?)
    }

    pub fn beta(&self, x: &StateVector) -> Result<Vector> {
        beta_mechanical(&self.input_matrix, &self.controller.added.gradient(x.q()))
    }

    /// Passive feedback `β(q) - D_i y`; the desired input for safety filtering.
    pub fn nominal_input(&self, x: &StateVector) -> Result<Vector> {
        Ok(self.beta(x)? + self.controller.damping_injection(&self.output(x)?))
    }

    /// Closed-loop vector field with `ν = 0`.
    pub fn drift(&self, x: &StateVector) -> Result<Tangent> {
        drift_with_dissipation(&self.dissipation, &self.storage_grad(x)?)
    }

    /// Plant vector field under an arbitrary input `u`.
    pub fn plant_response(&self, x: &StateVector, u: &Vector) -> Result<Tangent> {
        let mut t = ph::drift(self.plant(), &ph::hamiltonian_grad(self.plant(), x)?)?;
        t.p_dot += &self.input_matrix * u;
        Ok(t)
    }

    /// `d_p = (∂S_cl/∂p)ᵀ (D + B D_i Bᵀ) (∂S_cl/∂p) = -L_f S_cl`.
    pub fn dissipation_rate(&self, x: &StateVector) -> Result<f64> {
        let v = ph::velocity(self.plant(), x)?;
        Ok(v.dot(&(&self.dissipation * &v)))
    }

    /// `L_g S_cl = (∂S_cl/∂p)ᵀ B = q̇ᵀ B`.
    pub fn lg_storage(&self, x: &StateVector) -> Result<Vector> {
        self.output(x)
    }
}
