use super::{asymmetry, hamiltonian, hamiltonian_grad, min_eigenvalue, Matrix, MechanicalModel, StateVector, Vector};
use crate::error::{Error, Result};

/// Input-state-output port-Hamiltonian system
/// `ẋ = (J(x) - R(x)) ∂H/∂x + g(x) u`, `y = g(x)ᵀ ∂H/∂x`.
pub trait GeneralPHSystem {
    fn dim(&self) -> usize;
    fn interconnection(&self, x: &Vector) -> Matrix;
    fn resistive(&self, x: &Vector) -> Matrix;
    fn hamiltonian(&self, x: &Vector) -> Result<f64>;
    fn hamiltonian_grad(&self, x: &Vector) -> Result<Vector>;
    fn input_map(&self, x: &Vector) -> Matrix;
}

/// Power-conjugate output `y = g(x)ᵀ ∂H/∂x`.
pub fn output(sys: &dyn GeneralPHSystem, x: &Vector) -> Result<Vector> {
    Ok(sys.input_map(x).transpose() * sys.hamiltonian_grad(x)?)
}

/// Views a mechanical system as a general one, with
/// `J = [[0, I], [-I, 0]]`, `R = diag(0, D)` and `g = [0; B]`.
pub struct MechanicalAsGeneral<'a> {
    pub sys: &'a dyn MechanicalModel,
}

impl<'a> MechanicalAsGeneral<'a> {
    pub fn new(sys: &'a dyn MechanicalModel) -> Self {
        Self { sys }
    }
}

impl GeneralPHSystem for MechanicalAsGeneral<'_> {
    fn dim(&self) -> usize {
        2 * self.sys.dof()
    }

    fn interconnection(&self, _x: &Vector) -> Matrix {
        let n = self.sys.dof();
        let mut j = Matrix::zeros(2 * n, 2 * n);
        j.view_mut((0, n), (n, n)).fill_with_identity();
        j.view_mut((n, 0), (n, n)).fill_with_identity();
        j.view_mut((n, 0), (n, n)).neg_mut();
        j
    }

    fn resistive(&self, _x: &Vector) -> Matrix {
        let n = self.sys.dof();
        let mut r = Matrix::zeros(2 * n, 2 * n);
        r.view_mut((n, n), (n, n)).copy_from(&self.sys.dissipation());
        r
    }

    fn hamiltonian(&self, x: &Vector) -> Result<f64> {
        hamiltonian(self.sys, &StateVector::from_flat(x)?)
    }

    fn hamiltonian_grad(&self, x: &Vector) -> Result<Vector> {
        Ok(hamiltonian_grad(self.sys, &StateVector::from_flat(x)?)?.to_flat())
    }

    fn input_map(&self, _x: &Vector) -> Matrix {
        let n = self.sys.dof();
        let b = self.sys.input_matrix();
        let mut g = Matrix::zeros(2 * n, b.ncols());
        g.view_mut((n, 0), (n, b.ncols())).copy_from(&b);
        g
    }
}

/// Constant-structure system with quadratic Hamiltonian `H = ½ xᵀ Q x`.
#[derive(Clone, Debug)]
pub struct QuadraticPHSystem {
    pub j: Matrix,
    pub r: Matrix,
    pub g: Matrix,
    pub q: Matrix,
}

impl GeneralPHSystem for QuadraticPHSystem {
    fn dim(&self) -> usize {
        self.j.nrows()
    }
    fn interconnection(&self, _x: &Vector) -> Matrix {
        self.j.clone()
    }
    fn resistive(&self, _x: &Vector) -> Matrix {
        self.r.clone()
    }
    fn hamiltonian(&self, x: &Vector) -> Result<f64> {
        Ok(0.5 * x.dot(&(&self.q * x)))
    }
    fn hamiltonian_grad(&self, x: &Vector) -> Result<Vector> {
        Ok((&self.q + self.q.transpose()) * x * 0.5)
    }
    fn input_map(&self, _x: &Vector) -> Matrix {
        self.g.clone()
    }
}

/// Checks skew-symmetry of `J`, positive semidefiniteness of `R` and
/// nonnegativity of `H` at each sample.
pub fn check_general_invariants(sys: &dyn GeneralPHSystem, samples: &[Vector]) -> Result<()> {
    for x in samples {
        let j = sys.interconnection(x);
        let skew = (&j + j.transpose()).amax();
        if skew > 1e-12 {
            return Err(Error::InvalidParameter(format!("J + Jᵀ = {skew:e} at {x:?}")));
        }
        let r = sys.resistive(x);
        if asymmetry(&r) > 1e-12 || min_eigenvalue(&r) < -1e-12 {
            return Err(Error::InvalidParameter(format!("R not symmetric PSD at {x:?}")));
        }
        let h = sys.hamiltonian(x)?;
        if h < 0.0 {
            return Err(Error::InvalidParameter(format!("H = {h} < 0 at {x:?}")));
        }
    }
    Ok(())
}
