//! Seeded property suites over the whole library, with a pass/fail report.
//!
//! Every suite draws its samples from one ChaCha stream, so a seed fully
//! determines the report.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cbf::{BarrierFunction, BarrierSpec, ExtendedClassK, GeneralizedEnergyCBF, PositionTerm, QuadraticBarrier, SignFlippedKinetic};
use crate::error::Error;
use crate::filter::{filter_closed_form, filter_qp_oracle, p_safe_ratio};
use crate::models::{CartPole, CartPoleParams, PointMass, PoleZero};
use crate::numdiff::{central_gradient, mass_matrix_grad_fd, relative_error, relative_error_scalar, STEP};
use crate::pbc::{beta_mechanical, closed_loop, eb_pbc_general, matching_residual, AddedEnergy, ClosedLoop, PassiveController, QuadraticSpring};
use crate::ph::{self, check_dissipation, check_general_invariants, MechanicalAsGeneral, QuadraticPHSystem, check_mass_matrix, poisson_bracket, Matrix, MechanicalModel, PhaseGradient, StateVector, Vector};
use crate::sim::{energy_audit, simulate, InputHold};

/// Deliberate defects for checking that the suites can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// The cart-pole potential gradient is scaled by `1 + 1e-3`.
    CorruptedGradient,
}

#[derive(Clone, Copy, Debug)]
pub struct ValidateOptions {
    pub seed: u64,
    pub fault: Fault,
    /// Random instances for the filter cross-check.
    pub filter_instances: usize,
    /// Random states per gradient check.
    pub gradient_states: usize,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            fault: Fault::None,
            filter_instances: 10_000,
            gradient_states: 128,
        }
    }
}

/// Outcome of one suite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub checks: usize,
    pub failures: usize,
    /// Worst observed value of the suite metric.
    pub worst: f64,
    pub tolerance: f64,
    pub metric: &'static str,
    pub first_failure: Option<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checks > 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub suites: Vec<SuiteReport>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.suites.iter().all(SuiteReport::passed)
    }

    pub fn suite(&self, name: &str) -> Option<&SuiteReport> {
        self.suites.iter().find(|s| s.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "validate seed={}", self.seed)?;
        for s in &self.suites {
            writeln!(
                f,
                "{} {:<16} checks={:<7} failures={:<4} {}={:.3e} tol={:.1e}",
                if s.passed() { "PASS" } else { "FAIL" },
                s.name,
                s.checks,
                s.failures,
                s.metric,
                s.worst,
                s.tolerance
            )?;
            if let Some(why) = &s.first_failure {
                writeln!(f, "     first failure: {why}")?;
            }
        }
        write!(f, "{}", if self.all_passed() { "all suites passed" } else { "some suites FAILED" })
    }
}

/// Accumulates `err ≤ tol` checks for one suite.
struct Tally {
    report: SuiteReport,
}

impl Tally {
    fn new(name: &'static str, tolerance: f64, metric: &'static str) -> Self {
        Self {
            report: SuiteReport {
                name,
                checks: 0,
                failures: 0,
                worst: 0.0,
                tolerance,
                metric,
                first_failure: None,
            },
        }
    }

    fn check(&mut self, err: f64, what: impl FnOnce() -> String) {
        let r = &mut self.report;
        r.checks += 1;
        if err.is_nan() || err > r.tolerance {
            r.failures += 1;
            if r.first_failure.is_none() {
                r.first_failure = Some(format!("{} (value {err:e})", what()));
            }
        }
        if err.is_nan() {
            r.worst = f64::NAN;
        } else if !r.worst.is_nan() {
            r.worst = r.worst.max(err);
        }
    }

    fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.check(if ok { 0.0 } else { f64::INFINITY }, what);
    }

    fn finish(self) -> SuiteReport {
        self.report
    }
}

/// Cart-pole whose potential gradient is slightly wrong.
#[derive(Debug)]
struct CorruptedGradient(CartPole);

impl MechanicalModel for CorruptedGradient {
    fn dof(&self) -> usize {
        self.0.dof()
    }
    fn mass_matrix(&self, q: &Vector) -> Matrix {
        self.0.mass_matrix(q)
    }
    fn mass_matrix_grad(&self, q: &Vector) -> Vec<Matrix> {
        self.0.mass_matrix_grad(q)
    }
    fn potential(&self, q: &Vector) -> f64 {
        self.0.potential(q)
    }
    fn potential_grad(&self, q: &Vector) -> Vector {
        self.0.potential_grad(q).map(|g| g * (1.0 + 1e-3) + 1e-3)
    }
    fn dissipation(&self) -> Matrix {
        self.0.dissipation()
    }
    fn input_matrix(&self) -> Matrix {
        self.0.input_matrix()
    }
}

/// Cart-pole with an independent actuator on every coordinate, so the filter
/// sees a two-dimensional input.
#[derive(Debug)]
struct FullyActuated(CartPole);

impl MechanicalModel for FullyActuated {
    fn dof(&self) -> usize {
        self.0.dof()
    }
    fn mass_matrix(&self, q: &Vector) -> Matrix {
        self.0.mass_matrix(q)
    }
    fn mass_matrix_grad(&self, q: &Vector) -> Vec<Matrix> {
        self.0.mass_matrix_grad(q)
    }
    fn potential(&self, q: &Vector) -> f64 {
        self.0.potential(q)
    }
    fn potential_grad(&self, q: &Vector) -> Vector {
        self.0.potential_grad(q)
    }
    fn dissipation(&self) -> Matrix {
        self.0.dissipation()
    }
    fn input_matrix(&self) -> Matrix {
        Matrix::identity(2, 2)
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-half_width..half_width))
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> StateVector {
    StateVector::new(uniform(rng, n, 2.0), uniform(rng, n, 2.0)).expect("finite sample")
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Matrix {
    let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() * scale
}

fn random_cartpole(rng: &mut ChaCha8Rng, friction: bool) -> CartPole {
    let f = |rng: &mut ChaCha8Rng| if friction { rng.random_range(0.0..1.0) } else { 0.0 };
    CartPole::new(CartPoleParams {
        cart_mass: rng.random_range(0.5..2.0),
        pole_mass: rng.random_range(0.2..2.0),
        pole_length: rng.random_range(0.3..2.0),
        gravity: rng.random_range(0.5..10.0),
        pole_zero: if rng.random_bool(0.5) { PoleZero::Hanging } else { PoleZero::Upright },
        cart_friction: f(rng),
        pole_friction: f(rng),
    })
    .expect("sampled parameters are valid")
}

fn plant_family(rng: &mut ChaCha8Rng, fault: Fault) -> Vec<(String, Arc<dyn MechanicalModel>)> {
    let cart: Arc<dyn MechanicalModel> = match fault {
        Fault::None => Arc::new(CartPole::new(CartPoleParams::default()).unwrap()),
        Fault::CorruptedGradient => Arc::new(CorruptedGradient(CartPole::new(CartPoleParams::default()).unwrap())),
    };
    vec![
        ("cart-pole".into(), cart),
        ("random cart-pole".into(), Arc::new(random_cartpole(rng, true))),
        ("random cart-pole".into(), Arc::new(random_cartpole(rng, true))),
        ("point mass".into(), Arc::new(PointMass::new(rng.random_range(0.5..3.0), rng.random_range(0.0..5.0)).unwrap())),
    ]
}

fn random_loop(rng: &mut ChaCha8Rng, plant: Arc<dyn MechanicalModel>) -> ClosedLoop {
    let n = plant.dof();
    let m = plant.inputs();
    let b = plant.input_matrix();
    // Springs on actuated directions only, so matching always holds.
    let stiffness = rng.random_range(0.0..10.0);
    let k = &b * random_psd(rng, m, stiffness) * b.transpose();
    let spring = QuadraticSpring::new((&k + k.transpose()) * 0.5, uniform(rng, n, 1.5)).unwrap();
    let scale = rng.random_range(0.0..1.0);
    let damping = random_psd(rng, m, scale);
    closed_loop(plant, PassiveController::new(Arc::new(spring), damping).unwrap()).unwrap()
}

fn barrier_family(rng: &mut ChaCha8Rng, n: usize) -> Vec<(&'static str, Arc<dyn BarrierFunction>)> {
    vec![
        ("kinetic limit", Arc::new(GeneralizedEnergyCBF::kinetic_limit(rng.random_range(0.0..3.0)).unwrap())),
        (
            "kinematic",
            Arc::new(GeneralizedEnergyCBF::kinematic(0, rng.random_range(-1.0..1.0), rng.random_range(0.0..20.0)).unwrap()),
        ),
        ("total energy", Arc::new(GeneralizedEnergyCBF::total_energy(rng.random_range(0.0..5.0)).unwrap())),
        ("sign flipped", Arc::new(SignFlippedKinetic { ebar: rng.random_range(0.0..2.0) })),
        ("quadratic", Arc::new(random_quadratic(rng, n))),
    ]
}

fn random_quadratic(rng: &mut ChaCha8Rng, n: usize) -> QuadraticBarrier {
    QuadraticBarrier {
        center: uniform(rng, 2 * n, 1.0),
        weight: random_psd(rng, 2 * n, 1.0),
        linear: uniform(rng, 2 * n, 1.0),
        offset: rng.random_range(-1.0..3.0),
    }
}

fn random_energy_barrier(rng: &mut ChaCha8Rng) -> GeneralizedEnergyCBF {
    let term = match rng.random_range(0..3) {
        0 => PositionTerm::Zero,
        1 => PositionTerm::UpperBound {
            axis: 0,
            bound: rng.random_range(-1.0..1.0),
        },
        _ => PositionTerm::NegTotalPotential,
    };
    GeneralizedEnergyCBF::new(term, rng.random_range(0.0..20.0), rng.random_range(0.0..3.0)).unwrap()
}

fn flat_phase_fd<F: Fn(&StateVector) -> f64>(f: F, x: &StateVector) -> Vector {
    central_gradient(|z| f(&StateVector::from_flat(z).expect("finite probe")), &x.to_flat(), STEP)
}

fn gradients(rng: &mut ChaCha8Rng, opts: &ValidateOptions) -> SuiteReport {
    let mut t = Tally::new("gradients", 1e-6, "max rel err");
    for (name, plant) in plant_family(rng, opts.fault) {
        let n = plant.dof();
        let cl = random_loop(rng, plant.clone());
        let barriers = barrier_family(rng, n);
        for _ in 0..opts.gradient_states {
            let x = random_state(rng, n);
            let q = x.q();

            let fd = central_gradient(|q| plant.potential(q), q, STEP);
            t.check(relative_error(&plant.potential_grad(q), &fd), || format!("{name}: ∇V at {q:?}"));

            let analytic = plant.mass_matrix_grad(q);
            for (i, fd_i) in mass_matrix_grad_fd(plant.as_ref(), q, STEP).iter().enumerate() {
                let err = (&analytic[i] - fd_i).norm() / fd_i.norm().max(1.0);
                t.check(err, || format!("{name}: ∂M/∂q{} at {q:?}", i + 1));
            }

            let fd = flat_phase_fd(|s| ph::kinetic_energy(plant.as_ref(), s).unwrap(), &x);
            t.check(relative_error(&ph::kinetic_energy_grad(plant.as_ref(), &x).unwrap().to_flat(), &fd), || {
                format!("{name}: ∇K_e at {x:?}")
            });

            let fd = flat_phase_fd(|s| ph::hamiltonian(plant.as_ref(), s).unwrap(), &x);
            t.check(relative_error(&ph::hamiltonian_grad(plant.as_ref(), &x).unwrap().to_flat(), &fd), || {
                format!("{name}: ∇H at {x:?}")
            });

            let added = cl.controller().added_energy();
            let fd = central_gradient(|q| added.value(q), q, STEP);
            t.check(relative_error(&added.gradient(q), &fd), || format!("{name}: ∇V̄ at {q:?}"));

            let fd = flat_phase_fd(|s| cl.storage(s).unwrap(), &x);
            t.check(relative_error(&cl.storage_grad(&x).unwrap().to_flat(), &fd), || format!("{name}: ∇S_cl at {x:?}"));

            for (bname, b) in &barriers {
                let fd = flat_phase_fd(|s| b.value(&cl, s).unwrap(), &x);
                t.check(relative_error(&b.gradient(&cl, &x).unwrap().to_flat(), &fd), || {
                    format!("{name}: ∇h ({bname}) at {x:?}")
                });
            }
        }
    }
    t.finish()
}

fn lie_derivatives(rng: &mut ChaCha8Rng, opts: &ValidateOptions) -> SuiteReport {
    let mut t = Tally::new("lie-derivatives", 1e-5, "max rel err");
    for _ in 0..opts.gradient_states {
        let plant = Arc::new(random_cartpole(rng, true));
        let cl = random_loop(rng, plant);
        let alpha = ExtendedClassK::linear(rng.random_range(0.1..20.0)).unwrap();
        for (bname, f) in barrier_family(rng, 2) {
            let b = BarrierSpec::new(f, alpha);
            let x = random_state(rng, 2);
            let lie = b.lie_derivatives(&cl, &x).unwrap();
            let dir = cl.drift(&x).unwrap().to_flat();
            let z = x.to_flat();
            let eps = STEP / dir.norm().max(1.0);
            let at = |s: f64| b.evaluate(&cl, &StateVector::from_flat(&(&z + &dir * s)).unwrap()).unwrap();
            let fd = (at(eps) - at(-eps)) / (2.0 * eps);
            t.check(relative_error_scalar(lie.lf, fd), || format!("L_f h ({bname}) at {x:?}"));

            let grad = b.gradient(&cl, &x).unwrap();
            let lg = cl.input_matrix().transpose() * &grad.dp;
            t.check((&lie.lg - lg).amax(), || format!("L_g h ({bname}) at {x:?}"));
        }
    }
    t.finish()
}

fn brackets(rng: &mut ChaCha8Rng, opts: &ValidateOptions) -> SuiteReport {
    let mut t = Tally::new("poisson-bracket", 1e-12, "max abs err");
    let g = |rng: &mut ChaCha8Rng, n| PhaseGradient::new(uniform(rng, n, 1.0), uniform(rng, n, 1.0));
    for _ in 0..opts.gradient_states * 8 {
        let n = rng.random_range(1..5);
        let (a, b, c) = (g(rng, n), g(rng, n), g(rng, n));
        let (s, r) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        t.check((poisson_bracket(&a, &b) + poisson_bracket(&b, &a)).abs(), || "antisymmetry".into());
        t.check(poisson_bracket(&a, &a).abs(), || "self bracket".into());
        let lhs = poisson_bracket(&a.scale(s).add(&b.scale(r)), &c);
        let rhs = s * poisson_bracket(&a, &c) + r * poisson_bracket(&b, &c);
        t.check((lhs - rhs).abs(), || "linearity in the first slot".into());
        let lhs = poisson_bracket(&c, &a.scale(s).add(&b.scale(r)));
        let rhs = s * poisson_bracket(&c, &a) + r * poisson_bracket(&c, &b);
        t.check((lhs - rhs).abs(), || "linearity in the second slot".into());
    }
    // {H, H} = 0 along a real system.
    let plant = Arc::new(random_cartpole(rng, false));
    let cl = random_loop(rng, plant);
    for _ in 0..opts.gradient_states {
        let x = random_state(rng, 2);
        let s = cl.storage_grad(&x).unwrap();
        t.check(poisson_bracket(&s, &s).abs(), || format!("{{S_cl, S_cl}} at {x:?}"));
    }
    t.finish()
}

fn filter_oracle(rng: &mut ChaCha8Rng, opts: &ValidateOptions) -> SuiteReport {
    let mut t = Tally::new("filter-oracle", 1e-8, "max |Δu*|");
    for i in 0..opts.filter_instances {
        let friction = rng.random_bool(0.5);
        let base = random_cartpole(rng, friction);
        let plant: Arc<dyn MechanicalModel> = if i % 2 == 0 { Arc::new(base) } else { Arc::new(FullyActuated(base)) };
        let cl = random_loop(rng, plant);
        let f: Arc<dyn BarrierFunction> = if rng.random_bool(0.5) {
            Arc::new(random_energy_barrier(rng))
        } else {
            Arc::new(random_quadratic(rng, 2))
        };
        let b = BarrierSpec::new(f, ExtendedClassK::linear(rng.random_range(0.1..20.0)).unwrap());
        let x = random_state(rng, 2);
        let u_des = if rng.random_bool(0.5) {
            cl.nominal_input(&x).unwrap()
        } else {
            uniform(rng, cl.input_matrix().ncols(), 5.0)
        };
        match (filter_closed_form(&b, &cl, &x, &u_des), filter_qp_oracle(&b, &cl, &x, &u_des)) {
            (Ok(closed), Ok(oracle)) => {
                let scale = 1.0 + oracle.norm();
                t.check((&closed.u_star - &oracle).norm() / scale, || format!("instance {i} at {x:?}"));
                let c = crate::filter::constraint_at(&b, &cl, &x).unwrap();
                t.check((-c.value(&closed.u_star)).max(0.0) / (1.0 + c.lf.abs() + c.alpha_h.abs()), || {
                    format!("instance {i}: infeasible u*")
                });
            }
            (Err(Error::ConstraintSingular { .. }), Err(Error::ConstraintSingular { .. })) => {}
            (a, o) => t.require(false, || format!("instance {i}: closed form {a:?} vs oracle {o:?}")),
        }
    }
    t.finish()
}

fn corollary(rng: &mut ChaCha8Rng, opts: &ValidateOptions) -> SuiteReport {
    let mut t = Tally::new("corollary", 1e-10, "max rel err");
    for _ in 0..1000.max(opts.gradient_states) {
        let friction = rng.random_bool(0.5);
        let plant = Arc::new(random_cartpole(rng, friction));
        let cl = random_loop(rng, plant);
        let energy = random_energy_barrier(rng);
        let alpha = ExtendedClassK::linear(rng.random_range(0.1..20.0)).unwrap();
        let b = BarrierSpec::new(Arc::new(energy.clone()), alpha);
        let x = random_state(rng, 2);

        let lie_path = b.psi(&cl, &x).unwrap();
        let scale = 1.0 + lie_path.abs();
        t.check((lie_path - b.psi_from_bracket(&cl, &x).unwrap()).abs() / scale, || format!("Ψ bracket form at {x:?}"));
        t.check((lie_path - energy.psi_bracket(&cl, &x, &alpha).unwrap()).abs() / scale, || {
            format!("Ψ energy split at {x:?}")
        });

        let dh = b.gradient(&cl, &x).unwrap().dp;
        let dk = ph::kinetic_energy_grad(cl.plant(), &x).unwrap().dp;
        t.check((dh + dk).amax() * 1e-2, || format!("∂h/∂p = -∂K_e/∂p at {x:?}"));

        let u_des = cl.nominal_input(&x).unwrap();
        let Ok(r) = filter_closed_form(&b, &cl, &x, &u_des) else { continue };
        if r.active {
            let scale = 1.0 + r.psi.abs();
            t.check((r.p_safe - r.psi).abs() / scale, || format!("P_safe = Ψ at {x:?}"));
            t.check(r.p_safe.max(0.0) / scale, || format!("P_safe ≤ 0 at {x:?}"));
            t.check((r.p_safe - p_safe_ratio(&b, &cl, &x, r.psi).unwrap()).abs() / scale, || {
                format!("P_safe ratio form at {x:?}")
            });
            t.require(r.passivity_ok, || format!("passivity monitor at {x:?}"));
        } else {
            t.check(r.u_safe.amax() + r.p_safe.abs(), || format!("inactive filter is silent at {x:?}"));
        }
    }
    t.finish()
}

fn matching(rng: &mut ChaCha8Rng, opts: &ValidateOptions) -> SuiteReport {
    let mut t = Tally::new("matching", 1e-9, "max residual");
    for _ in 0..opts.gradient_states {
        let plant = random_cartpole(rng, true);
        let q = uniform(rng, 2, 2.0);
        let x = StateVector::new(q.clone(), uniform(rng, 2, 2.0)).unwrap();
        let matched = QuadraticSpring::on_axis(2, 0, rng.random_range(0.0..20.0), rng.random_range(-2.0..2.0)).unwrap();
        let grad = matched.gradient(&q);
        let beta = beta_mechanical(&plant.input_matrix(), &grad).unwrap();
        t.check((&plant.input_matrix() * &beta + &grad).amax(), || format!("B β = -∇V̄ at {q:?}"));

        let general = MechanicalAsGeneral::new(&plant);
        let full_grad = Vector::from_iterator(4, grad.iter().copied().chain([0.0, 0.0]));
        let z = x.to_flat();
        t.check(matching_residual(&general, &z, &full_grad).unwrap().amax(), || format!("matching residual at {z:?}"));
        match eb_pbc_general(&general, &z, &full_grad) {
            Ok(b) => t.check((b - &beta).amax(), || format!("general and mechanical β at {z:?}")),
            Err(e) => t.require(false, || format!("general β failed: {e}")),
        }

        // A spring on the unactuated pole angle cannot be matched.
        let unmatched = QuadraticSpring::on_axis(2, 1, rng.random_range(1.0..20.0), 3.0).unwrap();
        let bad = beta_mechanical(&plant.input_matrix(), &unmatched.gradient(&q));
        t.require(matches!(bad, Err(Error::MatchingViolation { .. })), || format!("unmatched spring accepted at {q:?}"));
    }
    t.finish()
}

fn structure(rng: &mut ChaCha8Rng, opts: &ValidateOptions) -> SuiteReport {
    let mut t = Tally::new("structure", 1e-12, "max abs err");
    // H ≥ 0 only holds with the pole hanging.
    let mut family: Vec<(String, Arc<dyn MechanicalModel>)> = Vec::new();
    for _ in 0..3 {
        let params = CartPoleParams {
            pole_zero: PoleZero::Hanging,
            ..random_cartpole(rng, true).params().clone()
        };
        family.push(("hanging cart-pole".into(), Arc::new(CartPole::new(params).unwrap())));
    }
    family.push(("point mass".into(), Arc::new(PointMass::new(2.0, 3.0).unwrap().with_damping(0.5).unwrap())));
    for (name, plant) in family {
        let n = plant.dof();
        let cl = random_loop(rng, plant.clone());
        let mut samples = Vec::new();
        for _ in 0..opts.gradient_states {
            let x = random_state(rng, n);
            let h = ph::hamiltonian(plant.as_ref(), &x).unwrap();
            let split = ph::kinetic_energy(plant.as_ref(), &x).unwrap() + plant.potential(x.q());
            t.check((h - split).abs() / (1.0 + h.abs()), || format!("{name}: H = K_e + V at {x:?}"));
            let s = cl.storage(&x).unwrap();
            t.check((s - h - cl.added_energy(x.q())).abs() / (1.0 + s.abs()), || format!("{name}: S_cl = H + V̄ at {x:?}"));
            t.require(check_mass_matrix(plant.as_ref(), x.q()).is_ok(), || format!("{name}: M(q) not SPD at {x:?}"));
            t.require(cl.dissipation_rate(&x).unwrap() >= -1e-12, || format!("{name}: d_p < 0 at {x:?}"));
            samples.push(x.to_flat());
        }
        t.require(check_dissipation(cl.dissipation()).is_ok(), || format!("{name}: closed-loop damping not PSD"));
        let view = MechanicalAsGeneral::new(plant.as_ref());
        let ok = check_general_invariants(&view, &samples);
        t.require(ok.is_ok(), || format!("{name}: {ok:?}"));
    }
    for _ in 0..opts.gradient_states {
        let d = rng.random_range(1..6);
        let a = Matrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let sys = QuadraticPHSystem {
            j: &a - a.transpose(),
            r: random_psd(rng, d, 1.0),
            g: Matrix::from_fn(d, 1, |_, _| rng.random_range(-1.0..1.0)),
            q: random_psd(rng, d, 1.0),
        };
        let samples: Vec<Vector> = (0..4).map(|_| uniform(rng, d, 2.0)).collect();
        let ok = check_general_invariants(&sys, &samples);
        t.require(ok.is_ok(), || format!("quadratic system: {ok:?}"));
    }
    t.finish()
}

/// `‖∇h‖` on sampled boundary states of the kinetic-limit and kinematic
/// barriers; reported as `1e-6 / ‖∇h‖` so that values above 1 fail.
fn regularity(rng: &mut ChaCha8Rng, opts: &ValidateOptions) -> SuiteReport {
    let mut t = Tally::new("regularity", 1.0, "max 1e-6/|∇h|");
    let plant: Arc<dyn MechanicalModel> = Arc::new(CartPole::new(CartPoleParams::default()).unwrap());
    let cl = closed_loop(plant.clone(), PassiveController::without_damping(Arc::new(QuadraticSpring::on_axis(2, 0, 6.0, 1.0).unwrap()), 1)).unwrap();
    for _ in 0..opts.gradient_states {
        let q = uniform(rng, 2, 2.0);
        let dir = uniform(rng, 2, 1.0);
        let k_unit = ph::kinetic_energy(plant.as_ref(), &StateVector::new(q.clone(), dir.clone()).unwrap()).unwrap();
        for ebar in [0.5, 1.0, 2.0] {
            let p = &dir * (ebar / k_unit).sqrt();
            let x = StateVector::new(q.clone(), p).unwrap();
            let b = GeneralizedEnergyCBF::kinetic_limit(ebar).unwrap();
            t.check(1e-6 / b.gradient(&cl, &x).unwrap().to_flat().norm(), || format!("kinetic limit Ē={ebar} at {x:?}"));
        }
        for qbar in [0.4, 0.6, 0.8] {
            let b = GeneralizedEnergyCBF::kinematic(0, qbar, 10.0).unwrap();
            let probe = StateVector::new(q.clone(), dir.clone()).unwrap();
            let mut qb = q.clone();
            qb[0] = qbar - cl.kinetic_energy(&probe).unwrap() / 10.0;
            let x = StateVector::new(qb, dir.clone()).unwrap();
            t.check(b.value(&cl, &x).unwrap().abs() * 1e-3, || format!("boundary construction at {x:?}"));
            t.check(1e-6 / b.gradient(&cl, &x).unwrap().to_flat().norm(), || format!("kinematic q̄={qbar} at {x:?}"));
        }
    }
    t.finish()
}

/// Short simulations: lossless loops conserve `S_cl`, damped loops never gain it.
fn conservation(rng: &mut ChaCha8Rng, _opts: &ValidateOptions) -> SuiteReport {
    let mut t = Tally::new("conservation", 1e-6, "max rel drift");
    for run in 0..4 {
        let damped = run % 2 == 1;
        let params = CartPoleParams {
            cart_friction: if damped { rng.random_range(0.1..1.0) } else { 0.0 },
            ..CartPoleParams::default()
        };
        let plant: Arc<dyn MechanicalModel> = Arc::new(CartPole::new(params).unwrap());
        let damping = Matrix::from_element(1, 1, if damped { rng.random_range(0.0..1.0) } else { 0.0 });
        let spring = QuadraticSpring::on_axis(2, 0, rng.random_range(1.0..12.0), 1.0).unwrap();
        let cl = closed_loop(plant, PassiveController::new(Arc::new(spring), damping).unwrap()).unwrap();
        let x0 = StateVector::new(uniform(rng, 2, 1.0), uniform(rng, 2, 1.0)).unwrap();
        let traj = simulate(&cl, None, &x0, 1e-3, 2000, InputHold::SafetyComponent).unwrap();
        let audit = energy_audit(&traj);
        if damped {
            t.check(audit.max_storage_increase.max(0.0) * 1e3, || format!("damped run {run}: S_cl increased"));
        } else {
            let drift = traj.records.iter().map(|r| (r.s_cl - audit.s_cl_initial).abs()).fold(0.0, f64::max);
            t.check(drift / (1.0 + audit.s_cl_initial.abs()), || format!("lossless run {run}: S_cl drift"));
        }
        t.check(audit.max_balance_error, || format!("run {run}: energy balance"));
    }
    t.finish()
}

/// Runs every suite in a fixed order.
pub fn run_all(opts: &ValidateOptions) -> ValidationReport {
    type Suite = fn(&mut ChaCha8Rng, &ValidateOptions) -> SuiteReport;
    let suites: [Suite; 9] = [gradients, lie_derivatives, brackets, filter_oracle, corollary, matching, structure, regularity, conservation];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    ValidationReport {
        seed: opts.seed,
        suites: suites.iter().map(|suite| suite(&mut rng, opts)).collect(),
    }
}
