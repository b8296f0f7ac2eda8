//! Fixed-step simulation of the filtered closed loop with a per-step
//! energy audit.

mod audit;
pub mod config;

pub use audit::{energy_audit, AuditSummary};
pub use config::{parse_values, InputHold, Scenario, ScenarioConfig, SweepParam};

use crate::cbf::BarrierSpec;
use crate::error::{Error, Result};
use crate::filter::{filter_closed_form, passivity_verdict, FilterResult};
use crate::pbc::ClosedLoop;
use crate::ph::{StateVector, Vector};

/// One classical fourth-order Runge-Kutta step of `ẋ = f(x)`.
pub fn rk4_step<F>(mut f: F, x: &Vector, dt: f64) -> Result<Vector>
where
    F: FnMut(&Vector) -> Result<Vector>,
{
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    let k1 = f(x)?;
    let k2 = f(&(x + &k1 * (0.5 * dt)))?;
    let k3 = f(&(x + &k2 * (0.5 * dt)))?;
    let k4 = f(&(x + &k3 * dt))?;
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::NonFinite)
    }
}

/// Everything recorded at one sample time.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub q: Vector,
    pub p: Vector,
    pub u_des: Vector,
    pub u_safe: Vector,
    pub u_star: Vector,
    /// `None` when no barrier is configured.
    pub h: Option<f64>,
    pub psi: Option<f64>,
    pub p_safe: f64,
    pub d_p: f64,
    pub s_cl: f64,
    pub k_e: f64,
    pub hamiltonian: f64,
    pub passivity_ok: bool,
    pub singular_step: bool,
    /// Energy the safety correction injected over the step that starts here.
    pub step_injected: f64,
    /// Energy dissipated by `D + B D_i Bᵀ` over the same step.
    pub step_dissipated: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub records: Vec<StepRecord>,
}

fn unfiltered(cl: &ClosedLoop, x: &StateVector, u_des: Vector) -> Result<FilterResult> {
    let d_p = cl.dissipation_rate(x)?;
    Ok(FilterResult {
        u_safe: Vector::zeros(u_des.len()),
        u_star: u_des.clone(),
        u_des,
        h: f64::NAN,
        psi: f64::INFINITY,
        active: false,
        p_safe: 0.0,
        d_p,
        passivity_ok: true,
        margin: d_p,
    })
}

/// Filter at a sample. Returns the result and whether the constraint was singular.
fn sample_filter(cl: &ClosedLoop, barrier: Option<&BarrierSpec>, x: &StateVector) -> Result<(FilterResult, bool)> {
    let u_des = cl.nominal_input(x)?;
    let Some(b) = barrier else {
        return Ok((unfiltered(cl, x, u_des)?, false));
    };
    match filter_closed_form(b, cl, x, &u_des) {
        Ok(r) => Ok((r, false)),
        Err(Error::ConstraintSingular { psi, .. }) => {
            let mut r = unfiltered(cl, x, u_des)?;
            r.h = b.evaluate(cl, x)?;
            r.psi = psi;
            r.active = true;
            let v = passivity_verdict(psi, 0.0, r.d_p);
            r.passivity_ok = v.ok;
            r.margin = v.margin;
            Ok((r, true))
        }
        Err(e) => Err(e),
    }
}

/// Integrates the filtered closed loop for `steps` steps of size `dt`,
/// returning `steps + 1` records.
///
/// The state is augmented with the injected and dissipated energy so the
/// audit can compare `ΔS_cl` against what the filter and dampers did over
/// each step, integrated by the same RK4 stages.
pub fn simulate(
    cl: &ClosedLoop,
    barrier: Option<&BarrierSpec>,
    x0: &StateVector,
    dt: f64,
    steps: usize,
    hold: InputHold,
) -> Result<Trajectory> {
    if x0.dof() != cl.dof() {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: cl.dof(),
            got: x0.dof(),
        });
    }
    let n = cl.dof();
    let mut records = Vec::with_capacity(steps + 1);
    let mut x = x0.clone();
    for k in 0..=steps {
        let t = k as f64 * dt;
        let (r, singular) = sample_filter(cl, barrier, &x)?;
        let mut rec = StepRecord {
            t,
            q: x.q().clone(),
            p: x.p().clone(),
            u_des: r.u_des.clone(),
            u_safe: r.u_safe.clone(),
            u_star: r.u_star.clone(),
            h: barrier.map(|_| r.h),
            psi: barrier.map(|_| r.psi),
            p_safe: r.p_safe,
            d_p: r.d_p,
            s_cl: cl.storage(&x)?,
            k_e: cl.kinetic_energy(&x)?,
            hamiltonian: cl.hamiltonian(&x)?,
            passivity_ok: r.passivity_ok,
            singular_step: singular,
            step_injected: 0.0,
            step_dissipated: 0.0,
        };
        if k == steps {
            records.push(rec);
            break;
        }

        let mut z = Vector::zeros(2 * n + 2);
        z.rows_mut(0, 2 * n).copy_from(&x.to_flat());
        let field = |z: &Vector| -> Result<Vector> {
            let xs = StateVector::from_flat(&z.rows(0, 2 * n).into_owned())?;
            let nominal = cl.nominal_input(&xs)?;
            let u = match hold {
                InputHold::SafetyComponent => &nominal + &r.u_safe,
                InputHold::Full => r.u_star.clone(),
                InputHold::Continuous => &nominal + sample_filter(cl, barrier, &xs)?.0.u_safe,
            };
            let tangent = cl.plant_response(&xs, &u)?;
            let y = cl.output(&xs)?;
            let mut dz = Vector::zeros(2 * n + 2);
            dz.rows_mut(0, 2 * n).copy_from(&tangent.to_flat());
            dz[2 * n] = y.dot(&(u - nominal));
            dz[2 * n + 1] = cl.dissipation_rate(&xs)?;
            Ok(dz)
        };
        let next = rk4_step(field, &z, dt).map_err(|e| match e {
            Error::NonFinite | Error::SingularMass { .. } => Error::Divergence { t },
            other => other,
        })?;
        rec.step_injected = next[2 * n];
        rec.step_dissipated = next[2 * n + 1];
        records.push(rec);
        x = StateVector::from_flat(&next.rows(0, 2 * n).into_owned()).map_err(|_| Error::Divergence { t: t + dt })?;
        if x.to_flat().amax() > 1e12 {
            return Err(Error::Divergence { t: t + dt });
        }
    }
    Ok(Trajectory { dt, records })
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Trajectory> {
    let s = cfg.build()?;
    simulate(&s.closed_loop, s.barrier.as_ref(), &s.x0, s.dt, s.steps, s.hold)
}
