//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so every line is printed even when
//! output capture is on. Exits nonzero if any criterion fails.

use std::collections::HashMap;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use passive_cbf::cbf::{BarrierFunction, BarrierSpec, ExtendedClassK, GeneralizedEnergyCBF, PositionTerm, QuadraticBarrier};
use passive_cbf::filter::{filter_closed_form, filter_qp_oracle};
use passive_cbf::models::{CartPole, CartPoleParams};
use passive_cbf::pbc::{closed_loop, PassiveController, QuadraticSpring};
use passive_cbf::ph::{Matrix, MechanicalModel, StateVector, Vector};
use passive_cbf::sim::config::{BarrierConfig, BarrierKind, ControllerConfig, IntegratorConfig};
use passive_cbf::sim::{energy_audit, run_scenario, AuditSummary, ScenarioConfig, Trajectory};
use passive_cbf::validate::{run_all, ValidateOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DT: f64 = 1e-3;
const T_FINAL: f64 = 20.0;
const EBARS: [f64; 3] = [0.5, 1.0, 2.0];
const QBARS: [f64; 3] = [0.4, 0.6, 0.8];

#[derive(Clone, Copy, Debug, PartialEq)]
enum Case {
    Kinetic(f64),
    Kinematic(f64),
}

impl Case {
    fn all() -> Vec<Case> {
        EBARS.map(Case::Kinetic).into_iter().chain(QBARS.map(Case::Kinematic)).collect()
    }

    fn label(&self) -> String {
        match self {
            Case::Kinetic(e) => format!("Ē={e}"),
            Case::Kinematic(q) => format!("q̄={q}"),
        }
    }

    fn config(&self, dt: f64, t_final: f64) -> ScenarioConfig {
        let (k, barrier) = match *self {
            Case::Kinetic(ebar) => (
                6.0,
                BarrierConfig {
                    kind: BarrierKind::KineticLimit,
                    ebar,
                    ..BarrierConfig::default()
                },
            ),
            Case::Kinematic(qbar) => (
                12.0,
                BarrierConfig {
                    kind: BarrierKind::Kinematic,
                    ebar: 0.0,
                    alpha_e: 10.0,
                    qbar,
                    axis: 0,
                },
            ),
        };
        scenario(k, barrier, dt, t_final)
    }
}

fn scenario(k: f64, barrier: BarrierConfig, dt: f64, t_final: f64) -> ScenarioConfig {
    ScenarioConfig {
        name: "acceptance".into(),
        model: Default::default(),
        controller: ControllerConfig {
            k,
            ..ControllerConfig::default()
        },
        barrier,
        class_k: Default::default(),
        integrator: IntegratorConfig {
            dt,
            t_final,
            ..IntegratorConfig::default()
        },
        initial: Default::default(),
    }
}

type Run = Result<(Trajectory, AuditSummary), String>;

fn simulate(cfg: &ScenarioConfig) -> Run {
    let traj = run_scenario(cfg).map_err(|e| e.to_string())?;
    let audit = energy_audit(&traj);
    Ok((traj, audit))
}

/// Every campaign scenario at `dt` and `dt / 2`, simulated in parallel.
fn campaign_runs() -> HashMap<(String, u8), Run> {
    let jobs: Vec<(Case, u8)> = Case::all().into_iter().flat_map(|c| [(c, 1), (c, 2)]).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(case, div)| s.spawn(move || ((case.label(), div), simulate(&case.config(DT / div as f64, T_FINAL)))))
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread")).collect()
    })
}

struct Outcome {
    id: u8,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn report(id: u8, title: &'static str, pass: bool, detail: String) -> Outcome {
    println!("{} criterion {id} ({title}): {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { id, title, pass, detail }
}

fn initial_storage() -> Outcome {
    let start = Instant::now();
    let mut errs = Vec::new();
    for (k, expected) in [(6.0, 3.0), (12.0, 6.0)] {
        let built = scenario(k, BarrierConfig::default(), DT, T_FINAL).build().unwrap();
        let s0 = built.closed_loop.storage(&built.x0).unwrap();
        errs.push((k, s0, (s0 - expected).abs()));
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = errs.iter().all(|e| e.2 <= 1e-9) && elapsed < 1.0;
    let detail = errs
        .iter()
        .map(|(k, s, e)| format!("k={k}: S_cl(0)={s} (err {e:.1e})"))
        .collect::<Vec<_>>()
        .join(", ");
    report(1, "initial storage", pass, format!("{detail}; {elapsed:.3} s"))
}

fn random_barrier(rng: &mut ChaCha8Rng) -> Arc<dyn BarrierFunction> {
    if rng.random_bool(0.5) {
        let term = match rng.random_range(0..3) {
            0 => PositionTerm::Zero,
            1 => PositionTerm::UpperBound {
                axis: 0,
                bound: rng.random_range(-1.0..1.0),
            },
            _ => PositionTerm::NegTotalPotential,
        };
        Arc::new(GeneralizedEnergyCBF::new(term, rng.random_range(0.0..20.0), rng.random_range(0.0..3.0)).unwrap())
    } else {
        let v = |rng: &mut ChaCha8Rng, n| Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let a = Matrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        Arc::new(QuadraticBarrier {
            center: v(rng, 4),
            weight: &a * a.transpose(),
            linear: v(rng, 4),
            offset: rng.random_range(-1.0..3.0),
        })
    }
}

fn filter_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst, mut compared, mut singular, mut mismatched) = (0.0f64, 0usize, 0usize, 0usize);
    for _ in 0..10_000 {
        let plant: Arc<dyn MechanicalModel> = Arc::new(
            CartPole::new(CartPoleParams {
                cart_mass: rng.random_range(0.5..2.0),
                pole_mass: rng.random_range(0.2..2.0),
                pole_length: rng.random_range(0.3..2.0),
                ..CartPoleParams::default()
            })
            .unwrap(),
        );
        let spring = QuadraticSpring::on_axis(2, 0, rng.random_range(0.0..20.0), rng.random_range(-1.0..1.0)).unwrap();
        let cl = closed_loop(plant, PassiveController::without_damping(Arc::new(spring), 1)).unwrap();
        let b = BarrierSpec::new(random_barrier(&mut rng), ExtendedClassK::linear(rng.random_range(0.1..20.0)).unwrap());
        let x = StateVector::from_slices(
            &[rng.random_range(-2.0..2.0), rng.random_range(-3.2..3.2)],
            &[rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
        )
        .unwrap();
        let u_des = if rng.random_bool(0.5) {
            cl.nominal_input(&x).unwrap()
        } else {
            Vector::from_element(1, rng.random_range(-10.0..10.0))
        };
        match (filter_closed_form(&b, &cl, &x, &u_des), filter_qp_oracle(&b, &cl, &x, &u_des)) {
            (Ok(c), Ok(o)) => {
                worst = worst.max((&c.u_star - &o).norm());
                compared += 1;
            }
            (Err(_), Err(_)) => singular += 1,
            _ => mismatched += 1,
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-8 && mismatched == 0 && elapsed < 5.0;
    report(
        2,
        "closed form vs QP oracle",
        pass,
        format!("max ‖Δu*‖={worst:.2e} over {compared} instances ({singular} singular in both, {mismatched} disagreements); {elapsed:.2} s"),
    )
}

fn injected_power(runs: &HashMap<(String, u8), Run>) -> Outcome {
    let (mut worst, mut max_p, mut active, mut exceptions) = (0.0f64, f64::NEG_INFINITY, 0usize, 0usize);
    let mut missing = Vec::new();
    for case in Case::all() {
        match &runs[&(case.label(), 1)] {
            Ok((traj, _)) => {
                for r in &traj.records {
                    let Some(psi) = r.psi.filter(|p| *p < 0.0) else { continue };
                    active += 1;
                    let err = (r.p_safe - psi).abs();
                    worst = worst.max(err);
                    max_p = max_p.max(r.p_safe);
                    exceptions += usize::from(err > 1e-10 || r.p_safe > 0.0);
                }
            }
            Err(e) => missing.push(format!("{}: {e}", case.label())),
        }
    }
    let pass = exceptions == 0 && missing.is_empty() && active > 0;
    report(
        3,
        "injected power equals Ψ when active",
        pass,
        format!("{active} active steps, max |P_safe-Ψ|={worst:.2e}, max P_safe={max_p:.3e}, exceptions={exceptions}{}", fmt_missing(&missing)),
    )
}

fn fmt_missing(missing: &[String]) -> String {
    if missing.is_empty() {
        String::new()
    } else {
        format!("; not simulated: {}", missing.join("; "))
    }
}

fn passivity_monitor(runs: &HashMap<(String, u8), Run>) -> Outcome {
    let mut failures = 0;
    let mut samples = 0;
    let mut missing = Vec::new();
    for case in Case::all() {
        match &runs[&(case.label(), 1)] {
            Ok((traj, audit)) => {
                failures += audit.passivity_failures;
                samples += traj.records.len();
            }
            Err(e) => missing.push(format!("{}: {e}", case.label())),
        }
    }
    let total = scenario(
        6.0,
        BarrierConfig {
            kind: BarrierKind::TotalEnergy,
            ebar: 4.0,
            ..BarrierConfig::default()
        },
        DT,
        T_FINAL,
    );
    match simulate(&total) {
        Ok((t, a)) => {
            failures += a.passivity_failures;
            samples += t.records.len();
        }
        Err(e) => missing.push(format!("total energy: {e}")),
    }
    let flipped = scenario(
        6.0,
        BarrierConfig {
            kind: BarrierKind::SignFlipped,
            ebar: 1.0,
            ..BarrierConfig::default()
        },
        DT,
        10.0,
    );
    let flagged = simulate(&flipped).map(|(_, a)| a.passivity_failures).unwrap_or(0);
    let pass = failures == 0 && missing.is_empty() && flagged >= 1;
    report(
        4,
        "passivity monitor",
        pass,
        format!(
            "energy barriers: {failures} flagged of {samples} samples; sign-flipped barrier: {flagged} flagged in 10 s{}",
            fmt_missing(&missing)
        ),
    )
}

fn forward_invariance(runs: &HashMap<(String, u8), Run>) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for case in Case::all() {
        let full = &runs[&(case.label(), 1)];
        let half = &runs[&(case.label(), 2)];
        match (full, half) {
            (Ok((_, a)), Ok((_, b))) => {
                let (v1, v2) = (a.max_h_violation, b.max_h_violation);
                let ok = a.min_h.unwrap() >= -1e-3 && v2 <= 0.5 * v1;
                pass &= ok;
                parts.push(format!("{} min h={:.2e} viol {v1:.2e}→{v2:.2e}{}", case.label(), a.min_h.unwrap(), if ok { "" } else { " ✗" }));
            }
            (f, h) => {
                pass = false;
                let why = f.as_ref().err().or(h.as_ref().err()).unwrap();
                parts.push(format!("{} {why} ✗", case.label()));
            }
        }
    }
    report(5, "forward invariance", pass, parts.join("; "))
}

/// Peak-to-peak of `q₁` over the last five seconds.
fn tail_amplitude(traj: &Trajectory) -> f64 {
    let window = (5.0 / traj.dt).round() as usize;
    let tail = &traj.records[traj.records.len().saturating_sub(window + 1)..];
    let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.q[0]), hi.max(r.q[0])));
    hi - lo
}

fn kinetic_limiting(runs: &HashMap<(String, u8), Run>) -> Outcome {
    let mut pass = true;
    let mut amps = Vec::new();
    let mut parts = Vec::new();
    for e in EBARS {
        match &runs[&(Case::Kinetic(e).label(), 1)] {
            Ok((traj, a)) => {
                let amp = tail_amplitude(traj);
                let ok = a.max_kinetic_energy <= e + 1e-3;
                pass &= ok;
                amps.push(amp);
                parts.push(format!("Ē={e}: max K_e={:.5} amplitude={amp:.4}", a.max_kinetic_energy));
            }
            Err(err) => {
                pass = false;
                parts.push(format!("Ē={e}: {err}"));
            }
        }
    }
    let ordered = amps.len() == EBARS.len() && amps.windows(2).all(|w| w[0] < w[1]);
    pass &= ordered;
    report(
        6,
        "kinetic energy limiting",
        pass,
        format!("{}; amplitude strictly increasing in Ē: {ordered}", parts.join(", ")),
    )
}

fn kinematic_constraint(runs: &HashMap<(String, u8), Run>) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for q in QBARS {
        match &runs[&(Case::Kinematic(q).label(), 1)] {
            Ok((_, a)) => {
                let ok = a.max_q[0] <= q + 0.05;
                pass &= ok;
                parts.push(format!("q̄={q}: max q₁={:.4}{}", a.max_q[0], if ok { "" } else { " ✗" }));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("q̄={q}: {e} ✗"));
            }
        }
    }
    report(7, "kinematic constraint", pass, parts.join(", "))
}

fn bookkeeping(runs: &HashMap<(String, u8), Run>) -> Outcome {
    let free = scenario(
        6.0,
        BarrierConfig {
            kind: BarrierKind::None,
            ..BarrierConfig::default()
        },
        DT,
        10.0,
    );
    let drift = match simulate(&free) {
        Ok((traj, a)) => traj.records.iter().map(|r| (r.s_cl - a.s_cl_initial).abs()).fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    };
    let mut pass = drift <= 1e-6;
    let mut parts = vec![format!("no barrier: max |S_cl(t)-S_cl(0)|={drift:.2e}")];
    for case in Case::all() {
        match &runs[&(case.label(), 1)] {
            Ok((_, a)) => {
                let ok = a.max_balance_error <= 1e-6;
                pass &= ok;
                parts.push(format!(
                    "{}: {:.2e} (sampled-rate form {:.2e}){}",
                    case.label(),
                    a.max_balance_error,
                    a.max_sampled_balance_error,
                    if ok { "" } else { " ✗" }
                ));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{}: {e} ✗", case.label()));
            }
        }
    }
    report(8, "lossless bookkeeping", pass, format!("per-step |ΔS_cl - E_safe|/(1+S_cl): {}", parts.join(", ")))
}

fn hygiene() -> Outcome {
    let start = Instant::now();
    let r = run_all(&ValidateOptions::default());
    let elapsed = start.elapsed().as_secs_f64();
    let g = r.suite("gradients").unwrap();
    let b = r.suite("poisson-bracket").unwrap();
    let states = ValidateOptions::default().gradient_states;
    let pass = r.all_passed() && states >= 100 && g.worst <= 1e-6 && b.worst <= 1e-12 && elapsed < 30.0;
    let failed: Vec<&str> = r.suites.iter().filter(|s| !s.passed()).map(|s| s.name).collect();
    report(
        9,
        "numerical hygiene",
        pass,
        format!(
            "gradient rel err {:.2e} over {states} states per check, bracket err {:.2e}, failed suites {failed:?}, validate {elapsed:.2} s",
            g.worst, b.worst
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut outcomes = vec![initial_storage(), filter_oracle()];
    let runs = campaign_runs();
    outcomes.push(injected_power(&runs));
    outcomes.push(passivity_monitor(&runs));
    outcomes.push(forward_invariance(&runs));
    outcomes.push(kinetic_limiting(&runs));
    outcomes.push(kinematic_constraint(&runs));
    outcomes.push(bookkeeping(&runs));
    outcomes.push(hygiene());

    let failed: Vec<&Outcome> = outcomes.iter().filter(|o| !o.pass).collect();
    println!(
        "acceptance: {} of {} criteria passed in {:.1} s",
        outcomes.len() - failed.len(),
        outcomes.len(),
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        for o in failed {
            eprintln!("failed criterion {} ({}): {}", o.id, o.title, o.detail);
        }
        ExitCode::FAILURE
    }
}
