//! Single-constraint CBF safety filter and passivity monitor.
//!
//! The filter solves `min ‖u - u_des‖²  s.t.  L_f h + L_g h u ≥ -α(h)` in
//! closed form and reports the power its correction injects into the
//! passive closed loop.

use nalgebra::LU;

use crate::cbf::BarrierSpec;
use crate::error::{Error, Result};
use crate::pbc::ClosedLoop;
use crate::ph::{Matrix, StateVector, Vector};

/// Below this `‖L_g h‖` no finite input can move `h`.
pub const SINGULARITY_THRESHOLD: f64 = 1e-9;

/// Affine constraint `lf + lg·u + alpha_h ≥ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct CbfConstraint {
    pub lf: f64,
    pub lg: Vector,
    pub alpha_h: f64,
}

impl CbfConstraint {
    /// Constraint value at `u`; this is `Ψ(x; u)`.
    pub fn value(&self, u: &Vector) -> f64 {
        self.lf + self.lg.dot(u) + self.alpha_h
    }
}

/// Closed-form correction `u_safe` and `Ψ(x; u_des)`.
pub fn safety_component(c: &CbfConstraint, u_des: &Vector) -> Result<(Vector, f64)> {
    let psi = c.value(u_des);
    if psi >= 0.0 {
        return Ok((Vector::zeros(u_des.len()), psi));
    }
    let norm2 = c.lg.norm_squared();
    if norm2.sqrt() <= SINGULARITY_THRESHOLD {
        return Err(Error::ConstraintSingular {
            lg_norm: norm2.sqrt(),
            psi,
        });
    }
    Ok((&c.lg * (-psi / norm2), psi))
}

/// Reference solution of the filter QP through its KKT system, solved by LU.
/// Shares no algebra with [`safety_component`] beyond the problem data.
pub fn qp_oracle(c: &CbfConstraint, u_des: &Vector) -> Result<Vector> {
    let m = u_des.len();
    // a·u ≥ b
    let b = -c.lf - c.alpha_h;
    if c.lg.dot(u_des) >= b {
        return Ok(u_des.clone());
    }
    if c.lg.norm() <= SINGULARITY_THRESHOLD {
        return Err(Error::ConstraintSingular {
            lg_norm: c.lg.norm(),
            psi: c.value(u_des),
        });
    }
    // Stationarity 2(u - u_des) - λ a = 0 with the constraint active.
    let mut kkt = Matrix::zeros(m + 1, m + 1);
    kkt.view_mut((0, 0), (m, m)).fill_with_identity();
    kkt.view_mut((0, 0), (m, m)).scale_mut(2.0);
    for i in 0..m {
        kkt[(i, m)] = -c.lg[i];
        kkt[(m, i)] = c.lg[i];
    }
    let mut rhs = Vector::zeros(m + 1);
    rhs.rows_mut(0, m).copy_from(&(u_des * 2.0));
    rhs[m] = b;
    let sol = LU::new(kkt).solve(&rhs).ok_or(Error::ConstraintSingular {
        lg_norm: c.lg.norm(),
        psi: c.value(u_des),
    })?;
    debug_assert!(sol[m] >= 0.0, "active constraint with negative multiplier");
    Ok(sol.rows(0, m).into_owned())
}

/// One evaluation of the safety filter at a state.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterResult {
    pub u_des: Vector,
    pub u_safe: Vector,
    pub u_star: Vector,
    pub h: f64,
    pub psi: f64,
    pub active: bool,
    pub p_safe: f64,
    pub d_p: f64,
    pub passivity_ok: bool,
    pub margin: f64,
}

/// Passivity verdict `P_safe ≤ d_p`, with margin `d_p - P_safe`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PassivityVerdict {
    pub ok: bool,
    pub margin: f64,
}

pub fn passivity_verdict(psi: f64, p_safe: f64, d_p: f64) -> PassivityVerdict {
    let margin = d_p - p_safe;
    let ok = psi >= 0.0 || margin >= -1e-12 * (1.0 + d_p.abs());
    PassivityVerdict { ok, margin }
}

/// Constraint data at `x` for filtering an arbitrary desired input.
pub fn constraint_at(b: &BarrierSpec, cl: &ClosedLoop, x: &StateVector) -> Result<CbfConstraint> {
    let lie = b.lie_derivatives_open_loop(cl, x)?;
    Ok(CbfConstraint {
        lf: lie.lf,
        lg: lie.lg,
        alpha_h: b.alpha().eval(b.evaluate(cl, x)?),
    })
}

/// Filters `u_des` through the barrier in closed form. With `u_des` equal
/// to the passive feedback `β - D_i y`, `psi` is the closed-loop `Ψ(x; β)`.
pub fn filter_closed_form(b: &BarrierSpec, cl: &ClosedLoop, x: &StateVector, u_des: &Vector) -> Result<FilterResult> {
    let h = b.evaluate(cl, x)?;
    let c = constraint_at(b, cl, x)?;
    let (u_safe, psi) = safety_component(&c, u_des)?;
    let p_safe = p_safe(cl, x, &u_safe)?;
    let d_p = cl.dissipation_rate(x)?;
    let verdict = passivity_verdict(psi, p_safe, d_p);
    Ok(FilterResult {
        u_star: u_des + &u_safe,
        u_des: u_des.clone(),
        u_safe,
        h,
        psi,
        active: psi < 0.0,
        p_safe,
        d_p,
        passivity_ok: verdict.ok,
        margin: verdict.margin,
    })
}

/// The filtered input `u*` from the KKT reference solver.
pub fn filter_qp_oracle(b: &BarrierSpec, cl: &ClosedLoop, x: &StateVector, u_des: &Vector) -> Result<Vector> {
    qp_oracle(&constraint_at(b, cl, x)?, u_des)
}

/// Power the safety component injects: `P_safe = L_g S_cl · u_safe`.
pub fn p_safe(cl: &ClosedLoop, x: &StateVector, u_safe: &Vector) -> Result<f64> {
    Ok(cl.lg_storage(x)?.dot(u_safe))
}

/// `P_safe` from the mechanical ratio
/// `-(q̇ᵀ B Bᵀ ∂h/∂p) / (∂h/∂pᵀ B Bᵀ ∂h/∂p) Ψ` when `Ψ < 0`, else 0.
pub fn p_safe_ratio(b: &BarrierSpec, cl: &ClosedLoop, x: &StateVector, psi: f64) -> Result<f64> {
    if psi >= 0.0 {
        return Ok(0.0);
    }
    let v = crate::ph::velocity(cl.plant(), x)?;
    let dh = b.gradient(cl, x)?.dp;
    let bb = cl.input_matrix() * cl.input_matrix().transpose();
    let num = v.dot(&(&bb * &dh));
    let den = dh.dot(&(&bb * &dh));
    Ok(-num / den * psi)
}

/// Theorem-style passivity monitor for a filter result computed at `x`.
pub fn passivity_check(cl: &ClosedLoop, x: &StateVector, result: &FilterResult) -> Result<PassivityVerdict> {
    Ok(passivity_verdict(result.psi, result.p_safe, cl.dissipation_rate(x)?))
}
