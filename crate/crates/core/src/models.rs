//! Concrete mechanical models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ph::{Matrix, MechanicalModel, Vector};

/// Where the pole angle `q₂ = 0` sits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PoleZero {
    /// `q₂ = 0` is the stable, hanging configuration.
    #[default]
    Hanging,
    /// `q₂ = 0` is the unstable, upright configuration.
    Upright,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartPoleParams {
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_length: f64,
    pub gravity: f64,
    pub pole_zero: PoleZero,
    /// Viscous friction on the cart coordinate (0 for the frictionless plant).
    pub cart_friction: f64,
    /// Viscous friction on the pole joint.
    pub pole_friction: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            cart_mass: 1.0,
            pole_mass: 1.0,
            pole_length: 1.0,
            gravity: 1.0,
            pole_zero: PoleZero::Hanging,
            cart_friction: 0.0,
            pole_friction: 0.0,
        }
    }
}

/// Cart with a point-mass pendulum. `q = (cart position, pole angle)`;
/// the only input is a horizontal force on the cart.
///
/// The potential is shifted so that `V(0) = 0`:
/// `m_p g l (1 - cos q₂)` when hanging, `m_p g l (cos q₂ - 1)` when upright.
#[derive(Clone, Debug)]
pub struct CartPole {
    params: CartPoleParams,
}

impl CartPole {
    pub fn new(params: CartPoleParams) -> Result<Self> {
        let positive = [
            ("cart_mass", params.cart_mass),
            ("pole_mass", params.pole_mass),
            ("pole_length", params.pole_length),
            ("gravity", params.gravity),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("cart_friction", params.cart_friction), ("pole_friction", params.pole_friction)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &CartPoleParams {
        &self.params
    }

    fn sign(&self) -> f64 {
        match self.params.pole_zero {
            PoleZero::Hanging => 1.0,
            PoleZero::Upright => -1.0,
        }
    }
}

impl MechanicalModel for CartPole {
    fn dof(&self) -> usize {
        2
    }

    fn mass_matrix(&self, q: &Vector) -> Matrix {
        let CartPoleParams {
            cart_mass: mc,
            pole_mass: mp,
            pole_length: l,
            ..
        } = self.params;
        let off = mp * l * q[1].cos();
        Matrix::from_row_slice(2, 2, &[mc + mp, off, off, mp * l * l])
    }

    fn mass_matrix_grad(&self, q: &Vector) -> Vec<Matrix> {
        let d_off = -self.params.pole_mass * self.params.pole_length * q[1].sin();
        vec![
            Matrix::zeros(2, 2),
            Matrix::from_row_slice(2, 2, &[0.0, d_off, d_off, 0.0]),
        ]
    }

    fn potential(&self, q: &Vector) -> f64 {
        let p = &self.params;
        self.sign() * p.pole_mass * p.gravity * p.pole_length * (1.0 - q[1].cos())
    }

    fn potential_grad(&self, q: &Vector) -> Vector {
        let p = &self.params;
        Vector::from_vec(vec![0.0, self.sign() * p.pole_mass * p.gravity * p.pole_length * q[1].sin()])
    }

    fn dissipation(&self) -> Matrix {
        Matrix::from_diagonal(&Vector::from_vec(vec![self.params.cart_friction, self.params.pole_friction]))
    }

    fn input_matrix(&self) -> Matrix {
        Matrix::from_column_slice(2, 1, &[1.0, 0.0])
    }
}

/// Fully actuated 1-DOF mass on a linear spring, `V = ½ k q²`.
#[derive(Clone, Debug)]
pub struct PointMass {
    mass: f64,
    stiffness: f64,
    damping: f64,
}

impl PointMass {
    pub fn new(mass: f64, stiffness: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidParameter(format!("mass must be positive, got {mass}")));
        }
        if !(stiffness >= 0.0 && stiffness.is_finite()) {
            return Err(Error::InvalidParameter(format!("stiffness must be nonnegative, got {stiffness}")));
        }
        Ok(Self {
            mass,
            stiffness,
            damping: 0.0,
        })
    }

    pub fn with_damping(mut self, damping: f64) -> Result<Self> {
        if !(damping >= 0.0 && damping.is_finite()) {
            return Err(Error::InvalidParameter(format!("damping must be nonnegative, got {damping}")));
        }
        self.damping = damping;
        Ok(self)
    }
}

impl MechanicalModel for PointMass {
    fn dof(&self) -> usize {
        1
    }
    fn mass_matrix(&self, _q: &Vector) -> Matrix {
        Matrix::from_element(1, 1, self.mass)
    }
    fn mass_matrix_grad(&self, _q: &Vector) -> Vec<Matrix> {
        vec![Matrix::zeros(1, 1)]
    }
    fn potential(&self, q: &Vector) -> f64 {
        0.5 * self.stiffness * q[0] * q[0]
    }
    fn potential_grad(&self, q: &Vector) -> Vector {
        Vector::from_element(1, self.stiffness * q[0])
    }
    fn dissipation(&self) -> Matrix {
        Matrix::from_element(1, 1, self.damping)
    }
    fn input_matrix(&self) -> Matrix {
        Matrix::identity(1, 1)
    }
}
