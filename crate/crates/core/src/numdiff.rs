//! Central finite differences used to certify analytic gradients.

use crate::ph::{Matrix, MechanicalModel, Vector};

/// Default step for central differences.
pub const STEP: f64 = 1e-6;

pub fn central_gradient<F: Fn(&Vector) -> f64>(f: F, x: &Vector, step: f64) -> Vector {
    let mut g = Vector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let xi = x[i];
        xp[i] = xi + step;
        let fp = f(&xp);
        xp[i] = xi - step;
        let fm = f(&xp);
        xp[i] = xi;
        g[i] = (fp - fm) / (2.0 * step);
    }
    g
}

/// Finite-difference `∂M/∂q_i`. Only meant for cross-checking analytic model derivatives.
pub fn mass_matrix_grad_fd(sys: &dyn MechanicalModel, q: &Vector, step: f64) -> Vec<Matrix> {
    (0..q.len())
        .map(|i| {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += step;
            qm[i] -= step;
            (sys.mass_matrix(&qp) - sys.mass_matrix(&qm)) / (2.0 * step)
        })
        .collect()
}

/// `‖a - b‖ / max(‖b‖, 1)`: relative error with a unit floor so that
/// vanishing gradients are compared absolutely.
pub fn relative_error(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

pub fn relative_error_scalar(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}
