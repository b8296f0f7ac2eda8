//! Control barrier functions on the phase space of a passive closed loop.
//!
//! The safe set is `{x : h(x) ≥ 0}`. The constraint functional
//! `Ψ(x; β) = L_f h + α(h)` evaluated on the closed-loop field decides
//! whether the safety filter has to act.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::pbc::ClosedLoop;
use crate::ph::{self, poisson_bracket, PhaseGradient, StateVector, Vector};

/// Extended class-K function `α`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtendedClassK {
    /// `α(h) = γ h`, `γ` in 1/s.
    Linear { gamma: f64 },
}

impl ExtendedClassK {
    pub fn linear(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("class-K rate must be positive, got {gamma}")));
        }
        Ok(Self::Linear { gamma })
    }

    pub fn eval(&self, h: f64) -> f64 {
        match *self {
            Self::Linear { gamma } => gamma * h,
        }
    }
}

/// A scalar function on phase space with its gradient. Evaluation gets the
/// closed loop so energies can be formed from the plant and controller.
pub trait BarrierFunction: Send + Sync + fmt::Debug {
    fn value(&self, cl: &ClosedLoop, x: &StateVector) -> Result<f64>;
    fn gradient(&self, cl: &ClosedLoop, x: &StateVector) -> Result<PhaseGradient>;
}

/// A smooth function of configuration only.
pub trait PositionFunction: Send + Sync + fmt::Debug {
    fn value(&self, q: &Vector) -> f64;
    fn gradient(&self, q: &Vector) -> Vector;
}

/// The position term `h̄(q)` of a generalized energy barrier.
#[derive(Clone, Debug)]
pub enum PositionTerm {
    Zero,
    /// `h̄ = bound - q[axis]`.
    UpperBound { axis: usize, bound: f64 },
    /// `h̄ = -V^t(q)`, so that `h = -S_cl + Ē` when `α_E = 1`.
    NegTotalPotential,
    Custom(Arc<dyn PositionFunction>),
}

/// `h(q, p) = -K_e(q, p) + α_E h̄(q) + Ē`.
#[derive(Clone, Debug)]
pub struct GeneralizedEnergyCBF {
    term: PositionTerm,
    alpha_e: f64,
    ebar: f64,
}

impl GeneralizedEnergyCBF {
    pub fn new(term: PositionTerm, alpha_e: f64, ebar: f64) -> Result<Self> {
        if !(ebar >= 0.0 && ebar.is_finite()) {
            return Err(Error::InvalidParameter(format!("energy offset must be nonnegative, got {ebar}")));
        }
        if !alpha_e.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha_E must be finite, got {alpha_e}")));
        }
        Ok(Self { term, alpha_e, ebar })
    }

    /// `h = -K_e + Ē`.
    pub fn kinetic_limit(ebar: f64) -> Result<Self> {
        Self::new(PositionTerm::Zero, 0.0, ebar)
    }

    /// `h = -K_e + α_E (q̄ - q[axis])`.
    pub fn kinematic(axis: usize, qbar: f64, alpha_e: f64) -> Result<Self> {
        Self::new(PositionTerm::UpperBound { axis, bound: qbar }, alpha_e, 0.0)
    }

    /// `h = -S_cl + Ē`.
    pub fn total_energy(ebar: f64) -> Result<Self> {
        Self::new(PositionTerm::NegTotalPotential, 1.0, ebar)
    }

    pub fn alpha_e(&self) -> f64 {
        self.alpha_e
    }

    pub fn ebar(&self) -> f64 {
        self.ebar
    }

    pub fn hbar(&self, cl: &ClosedLoop, q: &Vector) -> f64 {
        match &self.term {
            PositionTerm::Zero => 0.0,
            PositionTerm::UpperBound { axis, bound } => bound - q[*axis],
            PositionTerm::NegTotalPotential => -cl.total_potential(q),
            PositionTerm::Custom(f) => f.value(q),
        }
    }

    pub fn hbar_grad(&self, cl: &ClosedLoop, q: &Vector) -> Vector {
        match &self.term {
            PositionTerm::Zero => Vector::zeros(q.len()),
            PositionTerm::UpperBound { axis, .. } => {
                let mut g = Vector::zeros(q.len());
                g[*axis] = -1.0;
                g
            }
            PositionTerm::NegTotalPotential => -cl.total_potential_grad(q),
            PositionTerm::Custom(f) => f.gradient(q),
        }
    }

    /// `Ψ = {α_E h̄ + V^t, K_e} - d̄_p + α(h)`, assembled from the energy
    /// split without touching the closed-loop vector field.
    pub fn psi_bracket(&self, cl: &ClosedLoop, x: &StateVector, alpha: &ExtendedClassK) -> Result<f64> {
        let q = x.q();
        let potential = PhaseGradient::new(self.alpha_e * self.hbar_grad(cl, q) + cl.total_potential_grad(q), Vector::zeros(q.len()));
        let kinetic = ph::kinetic_energy_grad(cl.plant(), x)?;
        let h = self.value(cl, x)?;
        let dh_dp = -&kinetic.dp;
        let dbar = dh_dp.dot(&(cl.dissipation() * &kinetic.dp));
        Ok(poisson_bracket(&potential, &kinetic) - dbar + alpha.eval(h))
    }
}

impl BarrierFunction for GeneralizedEnergyCBF {
    fn value(&self, cl: &ClosedLoop, x: &StateVector) -> Result<f64> {
        Ok(-cl.kinetic_energy(x)? + self.alpha_e * self.hbar(cl, x.q()) + self.ebar)
    }

    fn gradient(&self, cl: &ClosedLoop, x: &StateVector) -> Result<PhaseGradient> {
        let mut g = ph::kinetic_energy_grad(cl.plant(), x)?.scale(-1.0);
        g.dq += self.alpha_e * self.hbar_grad(cl, x.q());
        Ok(g)
    }
}

/// `h = K_e - Ē`: the kinetic limit with its sign reversed. It is not of
/// generalized-energy form and its filter can inject energy.
#[derive(Clone, Debug)]
pub struct SignFlippedKinetic {
    pub ebar: f64,
}

impl BarrierFunction for SignFlippedKinetic {
    fn value(&self, cl: &ClosedLoop, x: &StateVector) -> Result<f64> {
        Ok(cl.kinetic_energy(x)? - self.ebar)
    }

    fn gradient(&self, cl: &ClosedLoop, x: &StateVector) -> Result<PhaseGradient> {
        ph::kinetic_energy_grad(cl.plant(), x)
    }
}

/// `h = c - ½ (x - x₀)ᵀ W (x - x₀) + wᵀ x` over the stacked state.
#[derive(Clone, Debug)]
pub struct QuadraticBarrier {
    pub center: Vector,
    pub weight: crate::ph::Matrix,
    pub linear: Vector,
    pub offset: f64,
}

impl QuadraticBarrier {
    fn split(&self, g: Vector) -> PhaseGradient {
        let n = g.len() / 2;
        PhaseGradient::new(g.rows(0, n).into_owned(), g.rows(n, n).into_owned())
    }
}

impl BarrierFunction for QuadraticBarrier {
    fn value(&self, _cl: &ClosedLoop, x: &StateVector) -> Result<f64> {
        let z = x.to_flat();
        let e = &z - &self.center;
        Ok(self.offset - 0.5 * e.dot(&(&self.weight * &e)) + self.linear.dot(&z))
    }

    fn gradient(&self, _cl: &ClosedLoop, x: &StateVector) -> Result<PhaseGradient> {
        let e = x.to_flat() - &self.center;
        let sym = (&self.weight + self.weight.transpose()) * 0.5;
        Ok(self.split(&self.linear - sym * e))
    }
}

/// `L_f h` and `L_g h` at a state.
#[derive(Clone, Debug, PartialEq)]
pub struct LieDerivatives {
    pub lf: f64,
    /// Row vector `L_g h ∈ ℝ^{1×m}`, stored as a column.
    pub lg: Vector,
}

/// A barrier function paired with its class-K function.
#[derive(Clone, Debug)]
pub struct BarrierSpec {
    function: Arc<dyn BarrierFunction>,
    alpha: ExtendedClassK,
}

impl BarrierSpec {
    pub fn new(function: Arc<dyn BarrierFunction>, alpha: ExtendedClassK) -> Self {
        Self { function, alpha }
    }

    pub fn alpha(&self) -> &ExtendedClassK {
        &self.alpha
    }

    pub fn function(&self) -> &dyn BarrierFunction {
        self.function.as_ref()
    }

    /// `h(x)`: positive inside, zero on the boundary, negative outside the safe set.
    pub fn evaluate(&self, cl: &ClosedLoop, x: &StateVector) -> Result<f64> {
        self.function.value(cl, x)
    }

    pub fn gradient(&self, cl: &ClosedLoop, x: &StateVector) -> Result<PhaseGradient> {
        self.function.gradient(cl, x)
    }

    /// Lie derivatives along the closed-loop field `f + gβ` (with damping
    /// injection folded in) and the input matrix.
    pub fn lie_derivatives(&self, cl: &ClosedLoop, x: &StateVector) -> Result<LieDerivatives> {
        let grad = self.gradient(cl, x)?;
        Ok(LieDerivatives {
            lf: grad.dot(&cl.drift(x)?),
            lg: cl.input_matrix().transpose() * &grad.dp,
        })
    }

    /// Lie derivatives along the bare plant field, for filtering an arbitrary desired input.
    pub fn lie_derivatives_open_loop(&self, cl: &ClosedLoop, x: &StateVector) -> Result<LieDerivatives> {
        let grad = self.gradient(cl, x)?;
        let open = cl.plant_response(x, &Vector::zeros(cl.input_matrix().ncols()))?;
        Ok(LieDerivatives {
            lf: grad.dot(&open),
            lg: cl.input_matrix().transpose() * &grad.dp,
        })
    }

    /// `Ψ(x; β) = L_f h + α(h)` on the closed loop.
    pub fn psi(&self, cl: &ClosedLoop, x: &StateVector) -> Result<f64> {
        let lie = self.lie_derivatives(cl, x)?;
        Ok(lie.lf + self.alpha.eval(self.evaluate(cl, x)?))
    }

    /// `d̄_p = (∂h/∂p)ᵀ (D + B D_i Bᵀ) (∂S_cl/∂p)`.
    pub fn cross_dissipation(&self, cl: &ClosedLoop, x: &StateVector) -> Result<f64> {
        let dh = self.gradient(cl, x)?;
        let ds = cl.storage_grad(x)?;
        Ok(dh.dp.dot(&(cl.dissipation() * &ds.dp)))
    }

    /// `Ψ = {h, S_cl} - d̄_p + α(h)`.
    pub fn psi_from_bracket(&self, cl: &ClosedLoop, x: &StateVector) -> Result<f64> {
        let dh = self.gradient(cl, x)?;
        let ds = cl.storage_grad(x)?;
        Ok(poisson_bracket(&dh, &ds) - self.cross_dissipation(cl, x)? + self.alpha.eval(self.evaluate(cl, x)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{CartPole, CartPoleParams, PointMass};
    use crate::numdiff::{central_gradient, relative_error, relative_error_scalar};
    use crate::pbc::{closed_loop, PassiveController, QuadraticSpring};
    use crate::ph::{Matrix, MechanicalModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cartpole_loop(k: f64, damping: f64, friction: f64) -> ClosedLoop {
        let plant: Arc<dyn MechanicalModel> = Arc::new(
            CartPole::new(CartPoleParams {
                cart_friction: friction,
                pole_friction: 0.5 * friction,
                ..Default::default()
            })
            .unwrap(),
        );
        let spring = Arc::new(QuadraticSpring::on_axis(2, 0, k, 1.0).unwrap());
        closed_loop(plant, PassiveController::new(spring, Matrix::from_element(1, 1, damping)).unwrap()).unwrap()
    }

    fn random_state(rng: &mut ChaCha8Rng) -> StateVector {
        StateVector::from_slices(
            &[rng.random_range(-2.0..2.0), rng.random_range(-3.5..3.5)],
            &[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)],
        )
        .unwrap()
    }

    #[derive(Debug)]
    struct Wavy;

    impl PositionFunction for Wavy {
        fn value(&self, q: &Vector) -> f64 {
            q[0].sin() * q[1].cos() + 0.3 * q[0] * q[0]
        }
        fn gradient(&self, q: &Vector) -> Vector {
            Vector::from_vec(vec![q[0].cos() * q[1].cos() + 0.6 * q[0], -q[0].sin() * q[1].sin()])
        }
    }

    fn barriers() -> Vec<GeneralizedEnergyCBF> {
        vec![
            GeneralizedEnergyCBF::kinetic_limit(1.0).unwrap(),
            GeneralizedEnergyCBF::kinematic(0, 0.6, 10.0).unwrap(),
            GeneralizedEnergyCBF::total_energy(2.0).unwrap(),
            GeneralizedEnergyCBF::new(PositionTerm::Custom(Arc::new(Wavy)), -1.7, 0.4).unwrap(),
        ]
    }

    #[test]
    fn class_k_linear() {
        let a = ExtendedClassK::linear(10.0).unwrap();
        assert_eq!(a.eval(0.0), 0.0);
        assert_eq!(a.eval(3.0 * 0.25), 3.0 * a.eval(0.25));
        assert!(a.eval(0.1) < a.eval(0.2));
        assert!(ExtendedClassK::linear(0.0).is_err());
        assert!(ExtendedClassK::linear(f64::INFINITY).is_err());
    }

    #[test]
    fn negative_energy_offset_rejected() {
        assert!(GeneralizedEnergyCBF::kinetic_limit(-0.1).is_err());
    }

    #[test]
    fn evaluation_examples() {
        let pm: Arc<dyn MechanicalModel> = Arc::new(PointMass::new(1.0, 1.0).unwrap());
        let cl = closed_loop(pm, PassiveController::without_damping(Arc::new(QuadraticSpring::zero(1)), 1)).unwrap();
        let h = GeneralizedEnergyCBF::kinetic_limit(2.0).unwrap();
        assert_eq!(h.value(&cl, &StateVector::from_slices(&[0.4], &[0.0]).unwrap()).unwrap(), 2.0);

        // K_e = 1.5 on the cart-pole at q₂ = π/2, where M is diagonal.
        let cl = cartpole_loop(6.0, 0.0, 0.0);
        let x = StateVector::from_slices(&[0.0, std::f64::consts::FRAC_PI_2], &[2.0, 1.0]).unwrap();
        assert!((cl.kinetic_energy(&x).unwrap() - 1.5).abs() < 1e-14);
        let h = GeneralizedEnergyCBF::kinetic_limit(1.0).unwrap();
        assert!((h.value(&cl, &x).unwrap() + 0.5).abs() < 1e-14);
    }

    #[test]
    fn kinematic_barrier_reimplementation() {
        let cl = cartpole_loop(12.0, 0.0, 0.0);
        let h = GeneralizedEnergyCBF::kinematic(0, 0.6, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let x = random_state(&mut rng);
            let (q1, q2, p1, p2) = (x.q()[0], x.q()[1], x.p()[0], x.p()[1]);
            // Inverse of [[2, c], [c, 1]] with unit parameters.
            let c = q2.cos();
            let det = 2.0 - c * c;
            let ke = 0.5 * (p1 * p1 - 2.0 * c * p1 * p2 + 2.0 * p2 * p2) / det;
            let expected = -ke + 10.0 * (0.6 - q1);
            assert!((h.value(&cl, &x).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn barrier_gradients_match_finite_differences() {
        let cl = cartpole_loop(6.0, 0.3, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut all: Vec<Arc<dyn BarrierFunction>> = barriers().into_iter().map(|b| Arc::new(b) as Arc<dyn BarrierFunction>).collect();
        all.push(Arc::new(SignFlippedKinetic { ebar: 1.0 }));
        all.push(Arc::new(QuadraticBarrier {
            center: Vector::from_vec(vec![0.1, 0.2, -0.3, 0.4]),
            weight: Matrix::from_fn(4, 4, |i, j| if i == j { 2.0 } else { 0.3 }),
            linear: Vector::from_vec(vec![0.5, -1.0, 0.2, 0.0]),
            offset: 1.0,
        }));
        for b in &all {
            for _ in 0..100 {
                let x = random_state(&mut rng);
                let g = b.gradient(&cl, &x).unwrap().to_flat();
                let fd = central_gradient(|v| b.value(&cl, &StateVector::from_flat(v).unwrap()).unwrap(), &x.to_flat(), 1e-6);
                assert!(relative_error(&g, &fd) <= 1e-6, "{b:?}");
            }
        }
    }

    #[test]
    fn energy_barriers_have_minus_velocity_momentum_gradient() {
        let cl = cartpole_loop(6.0, 0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for b in barriers() {
            for _ in 0..100 {
                let x = random_state(&mut rng);
                let g = b.gradient(&cl, &x).unwrap();
                let v = ph::velocity(cl.plant(), &x).unwrap();
                assert!((&g.dp + &v).amax() <= 1e-12);
                let spec = BarrierSpec::new(Arc::new(b.clone()), ExtendedClassK::linear(10.0).unwrap());
                let lie = spec.lie_derivatives(&cl, &x).unwrap();
                assert!((lie.lg[0] + v[0]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn kinematic_position_term_has_no_input_coupling() {
        let cl = cartpole_loop(6.0, 0.0, 0.0);
        let h = GeneralizedEnergyCBF::new(PositionTerm::UpperBound { axis: 0, bound: 1.0 }, 1.0, 0.0).unwrap();
        let x = StateVector::from_slices(&[0.1, 0.2], &[0.0, 0.0]).unwrap();
        // With p = 0 the kinetic term drops out and h behaves like h̄ alone.
        let spec = BarrierSpec::new(Arc::new(h), ExtendedClassK::linear(1.0).unwrap());
        assert_eq!(spec.lie_derivatives(&cl, &x).unwrap().lg, Vector::zeros(1));

        #[derive(Debug)]
        struct PositionOnly;
        impl BarrierFunction for PositionOnly {
            fn value(&self, _cl: &ClosedLoop, x: &StateVector) -> Result<f64> {
                Ok(0.8 - x.q()[0])
            }
            fn gradient(&self, _cl: &ClosedLoop, _x: &StateVector) -> Result<PhaseGradient> {
                Ok(PhaseGradient::new(Vector::from_vec(vec![-1.0, 0.0]), Vector::zeros(2)))
            }
        }
        let spec = BarrierSpec::new(Arc::new(PositionOnly), ExtendedClassK::linear(1.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..50 {
            assert_eq!(spec.lie_derivatives(&cl, &random_state(&mut rng)).unwrap().lg, Vector::zeros(1));
        }
    }

    #[test]
    fn closed_loop_lie_derivative_matches_directional_difference() {
        let cl = cartpole_loop(6.0, 0.4, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for b in barriers() {
            let spec = BarrierSpec::new(Arc::new(b), ExtendedClassK::linear(10.0).unwrap());
            for _ in 0..100 {
                let x = random_state(&mut rng);
                let f = cl.drift(&x).unwrap().to_flat();
                let z = x.to_flat();
                let eps = 1e-6;
                let hp = spec.evaluate(&cl, &StateVector::from_flat(&(&z + &f * eps)).unwrap()).unwrap();
                let hm = spec.evaluate(&cl, &StateVector::from_flat(&(&z - &f * eps)).unwrap()).unwrap();
                let fd = (hp - hm) / (2.0 * eps);
                let lf = spec.lie_derivatives(&cl, &x).unwrap().lf;
                assert!(relative_error_scalar(lf, fd) <= 1e-5, "{lf} vs {fd}");
            }
        }
    }

    #[test]
    fn psi_at_rest_on_storage_minimum() {
        let cl = cartpole_loop(6.0, 0.0, 0.0);
        let spec = BarrierSpec::new(
            Arc::new(GeneralizedEnergyCBF::kinetic_limit(0.7).unwrap()),
            ExtendedClassK::linear(10.0).unwrap(),
        );
        let x = StateVector::from_slices(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((spec.psi(&cl, &x).unwrap() - 7.0).abs() < 1e-14);
    }

    #[test]
    fn psi_dual_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        for (damping, friction) in [(0.0, 0.0), (0.6, 0.3)] {
            let cl = cartpole_loop(6.0, damping, friction);
            for b in barriers() {
                let alpha = ExtendedClassK::linear(10.0).unwrap();
                let spec = BarrierSpec::new(Arc::new(b.clone()), alpha);
                for _ in 0..250 {
                    let x = random_state(&mut rng);
                    let direct = spec.psi(&cl, &x).unwrap();
                    let bracket = spec.psi_from_bracket(&cl, &x).unwrap();
                    let energy = b.psi_bracket(&cl, &x, &alpha).unwrap();
                    assert!((direct - bracket).abs() <= 1e-10);
                    assert!((direct - energy).abs() <= 1e-10, "{direct} vs {energy}");
                }
            }
        }
    }

    #[test]
    fn lossless_psi_has_no_dissipative_term() {
        let cl = cartpole_loop(6.0, 0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let spec = BarrierSpec::new(
            Arc::new(GeneralizedEnergyCBF::kinematic(0, 0.5, 10.0).unwrap()),
            ExtendedClassK::linear(10.0).unwrap(),
        );
        for _ in 0..50 {
            let x = random_state(&mut rng);
            assert_eq!(spec.cross_dissipation(&cl, &x).unwrap(), 0.0);
            let dh = spec.gradient(&cl, &x).unwrap();
            let ds = cl.storage_grad(&x).unwrap();
            let expected = poisson_bracket(&dh, &ds) + 10.0 * spec.evaluate(&cl, &x).unwrap();
            assert!((spec.psi(&cl, &x).unwrap() - expected).abs() < 1e-10);
        }
    }
}
