use serde::Serialize;

use super::Trajectory;

/// Energy bookkeeping over a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditSummary {
    pub steps: usize,
    pub s_cl_initial: f64,
    pub s_cl_final: f64,
    /// `max_k |ΔS_cl - (E_inj - E_diss)| / (1 + |S_cl|)` with the step energies
    /// integrated along the RK4 stages.
    pub max_balance_error: f64,
    /// Same balance with the sampled rates, `(P_safe - d_p) dt`.
    pub max_sampled_balance_error: f64,
    /// Energy taken out of `S_cl` by the safety filter (positive when it damps).
    pub filter_energy_removed: f64,
    pub dissipated_energy: f64,
    pub active_steps: usize,
    /// `max(0, -min_k h)`; zero without a barrier.
    pub max_h_violation: f64,
    pub min_h: Option<f64>,
    /// Active samples where `P_safe > 0`.
    pub positive_injection_steps: usize,
    pub passivity_failures: usize,
    pub singular_steps: usize,
    pub max_kinetic_energy: f64,
    /// Per-coordinate maximum of `q`.
    pub max_q: Vec<f64>,
    /// `max_k (S_cl[k+1] - S_cl[k]) / (1 + |S_cl[k]|)`.
    pub max_storage_increase: f64,
}

/// Summarizes the energy audit channels of a trajectory. Panics on an empty trajectory.
pub fn energy_audit(traj: &Trajectory) -> AuditSummary {
    let recs = &traj.records;
    assert!(!recs.is_empty(), "energy audit of an empty trajectory");
    let mut summary = AuditSummary {
        steps: recs.len() - 1,
        s_cl_initial: recs[0].s_cl,
        s_cl_final: recs[recs.len() - 1].s_cl,
        max_balance_error: 0.0,
        max_sampled_balance_error: 0.0,
        filter_energy_removed: 0.0,
        dissipated_energy: 0.0,
        active_steps: 0,
        max_h_violation: 0.0,
        min_h: None,
        positive_injection_steps: 0,
        passivity_failures: 0,
        singular_steps: 0,
        max_kinetic_energy: f64::NEG_INFINITY,
        max_q: vec![f64::NEG_INFINITY; recs[0].q.len()],
        max_storage_increase: f64::NEG_INFINITY,
    };
    for (k, r) in recs.iter().enumerate() {
        if let Some(h) = r.h {
            summary.min_h = Some(summary.min_h.map_or(h, |m: f64| m.min(h)));
        }
        if r.psi.is_some_and(|p| p < 0.0) {
            summary.active_steps += 1;
            if r.p_safe > 0.0 {
                summary.positive_injection_steps += 1;
            }
        }
        summary.passivity_failures += usize::from(!r.passivity_ok);
        summary.singular_steps += usize::from(r.singular_step);
        summary.max_kinetic_energy = summary.max_kinetic_energy.max(r.k_e);
        for (m, q) in summary.max_q.iter_mut().zip(r.q.iter()) {
            *m = m.max(*q);
        }
        if let Some(next) = recs.get(k + 1) {
            let ds = next.s_cl - r.s_cl;
            let scale = 1.0 + r.s_cl.abs();
            let integrated = (ds - (r.step_injected - r.step_dissipated)).abs() / scale;
            let sampled = (ds - (r.p_safe - r.d_p) * traj.dt).abs() / scale;
            summary.max_balance_error = summary.max_balance_error.max(integrated);
            summary.max_sampled_balance_error = summary.max_sampled_balance_error.max(sampled);
            summary.max_storage_increase = summary.max_storage_increase.max(ds / scale);
            summary.filter_energy_removed -= r.step_injected;
            summary.dissipated_energy += r.step_dissipated;
        }
    }
    if summary.steps == 0 {
        summary.max_storage_increase = 0.0;
    }
    summary.max_h_violation = summary.min_h.map_or(0.0, |m| (-m).max(0.0));
    summary
}
