//! Scenario configuration, read from TOML.
//!
//! ```toml
//! name = "kinetic_limit"
//!
//! [model]
//! kind = "cart-pole"        # or "point-mass"
//!
//! [controller]
//! k = 6.0
//! q_ref = 1.0
//!
//! [barrier]
//! kind = "kinetic-limit"    # none | kinetic-limit | kinematic | total-energy | sign-flipped
//! ebar = 1.0
//!
//! [class_k]
//! gamma = 10.0
//!
//! [integrator]
//! dt = 1e-3
//! t_final = 20.0
//! ```
//!
//! Every table is optional and falls back to the defaults shown in the
//! field docs. Unknown keys are rejected.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cbf::{BarrierSpec, ExtendedClassK, GeneralizedEnergyCBF, SignFlippedKinetic};
use crate::error::{Error, Result};
use crate::models::{CartPole, CartPoleParams, PointMass};
use crate::pbc::{ClosedLoop, PassiveController, QuadraticSpring};
use crate::ph::{Matrix, MechanicalModel, StateVector, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub barrier: BarrierConfig,
    #[serde(default)]
    pub class_k: ClassKConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub initial: InitialState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelConfig {
    CartPole(CartPoleParams),
    PointMass(PointMassParams),
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::CartPole(CartPoleParams::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointMassParams {
    pub mass: f64,
    pub stiffness: f64,
    pub damping: f64,
}

impl Default for PointMassParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            stiffness: 0.0,
            damping: 0.0,
        }
    }
}

/// Spring `½ k (q[axis] - q_ref)²` plus damping injection `D_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub k: f64,
    pub q_ref: f64,
    pub axis: usize,
    /// Rows of the `m × m` damping injection matrix; empty means zero.
    pub damping: Vec<Vec<f64>>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            k: 6.0,
            q_ref: 1.0,
            axis: 0,
            damping: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BarrierKind {
    None,
    /// `h = -K_e + Ē`
    #[default]
    KineticLimit,
    /// `h = -K_e + α_E (q̄ - q[axis])`
    Kinematic,
    /// `h = -S_cl + Ē`
    TotalEnergy,
    /// `h = K_e - Ē`
    SignFlipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierConfig {
    pub kind: BarrierKind,
    pub ebar: f64,
    pub alpha_e: f64,
    pub qbar: f64,
    pub axis: usize,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self {
            kind: BarrierKind::KineticLimit,
            ebar: 1.0,
            alpha_e: 10.0,
            qbar: 0.6,
            axis: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassKConfig {
    pub gamma: f64,
}

impl Default for ClassKConfig {
    fn default() -> Self {
        Self { gamma: 10.0 }
    }
}

/// Which part of the input is frozen over an integration step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InputHold {
    /// The safety correction is sampled once per step; the passive
    /// feedback is evaluated at every stage.
    #[default]
    SafetyComponent,
    /// The whole filtered input is sampled once per step.
    Full,
    /// Nothing is held; the filter is re-evaluated at every RK4 stage.
    Continuous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_final: f64,
    pub hold: InputHold,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 20.0,
            hold: InputHold::SafetyComponent,
        }
    }
}

/// Initial `(q, p)`; empty vectors mean zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct InitialState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

/// A validated scenario ready to simulate.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub closed_loop: ClosedLoop,
    pub barrier: Option<BarrierSpec>,
    pub x0: StateVector,
    pub dt: f64,
    pub steps: usize,
    pub hold: InputHold,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical TOML rendering; identical configs render identically.
    pub fn to_canonical_toml(&self) -> String {
        toml::to_string(self).expect("scenario config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return bad("name", format!("must be non-empty and use [A-Za-z0-9._-], got {:?}", self.name));
        }
        let IntegratorConfig { dt, t_final, .. } = self.integrator;
        if !(dt > 0.0 && dt.is_finite()) {
            return bad("integrator.dt", format!("must be positive, got {dt}"));
        }
        if !(t_final >= dt && t_final.is_finite()) {
            return bad("integrator.t_final", format!("must be at least dt, got {t_final}"));
        }
        if (t_final / dt) > 1e8 {
            return bad("integrator.t_final", "more than 1e8 steps".into());
        }
        if !(self.class_k.gamma > 0.0 && self.class_k.gamma.is_finite()) {
            return bad("class_k.gamma", format!("must be positive, got {}", self.class_k.gamma));
        }
        for (field, v) in [
            ("barrier.ebar", self.barrier.ebar),
            ("barrier.alpha_e", self.barrier.alpha_e),
            ("barrier.qbar", self.barrier.qbar),
            ("controller.k", self.controller.k),
            ("controller.q_ref", self.controller.q_ref),
        ] {
            if !v.is_finite() {
                return bad(field, format!("must be finite, got {v}"));
            }
        }
        if self.barrier.ebar < 0.0 {
            return bad("barrier.ebar", format!("must be nonnegative, got {}", self.barrier.ebar));
        }
        if self.controller.k < 0.0 {
            return bad("controller.k", format!("must be nonnegative, got {}", self.controller.k));
        }
        self.build().map(|_| ())
    }

    fn plant(&self) -> Result<Arc<dyn MechanicalModel>> {
        let plant: Arc<dyn MechanicalModel> = match &self.model {
            ModelConfig::CartPole(p) => Arc::new(CartPole::new(p.clone())?),
            ModelConfig::PointMass(p) => Arc::new(PointMass::new(p.mass, p.stiffness)?.with_damping(p.damping)?),
        };
        Ok(plant)
    }

    pub fn build(&self) -> Result<Scenario> {
        let ctx = |field: &'static str| move |e: Error| Error::Config(format!("{field}: {e}"));
        let plant = self.plant().map_err(ctx("model"))?;
        let n = plant.dof();
        let m = plant.inputs();

        let c = &self.controller;
        let spring = QuadraticSpring::on_axis(n, c.axis, c.k, c.q_ref).map_err(ctx("controller"))?;
        let damping = if c.damping.is_empty() {
            Matrix::zeros(m, m)
        } else {
            if c.damping.len() != m || c.damping.iter().any(|r| r.len() != m) {
                return Err(Error::Config(format!("controller.damping: expected a {m}x{m} matrix")));
            }
            if c.damping.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Config("controller.damping: entries must be finite".into()));
            }
            Matrix::from_row_iterator(m, m, c.damping.iter().flatten().copied())
        };
        let controller = PassiveController::new(Arc::new(spring), damping).map_err(ctx("controller.damping"))?;
        let closed_loop = ClosedLoop::new(plant, controller).map_err(ctx("controller"))?;

        let alpha = ExtendedClassK::linear(self.class_k.gamma).map_err(ctx("class_k.gamma"))?;
        let b = &self.barrier;
        if b.kind == BarrierKind::Kinematic && b.axis >= n {
            return Err(Error::Config(format!("barrier.axis: {} out of range for {n} DOF", b.axis)));
        }
        let barrier = match b.kind {
            BarrierKind::None => None,
            BarrierKind::KineticLimit => Some(BarrierSpec::new(
                Arc::new(GeneralizedEnergyCBF::kinetic_limit(b.ebar).map_err(ctx("barrier"))?),
                alpha,
            )),
            BarrierKind::Kinematic => Some(BarrierSpec::new(
                Arc::new(GeneralizedEnergyCBF::kinematic(b.axis, b.qbar, b.alpha_e).map_err(ctx("barrier"))?),
                alpha,
            )),
            BarrierKind::TotalEnergy => Some(BarrierSpec::new(
                Arc::new(GeneralizedEnergyCBF::total_energy(b.ebar).map_err(ctx("barrier"))?),
                alpha,
            )),
            BarrierKind::SignFlipped => Some(BarrierSpec::new(Arc::new(SignFlippedKinetic { ebar: b.ebar }), alpha)),
        };

        let vec_or_zero = |field: &str, v: &[f64]| -> Result<Vector> {
            match v.len() {
                0 => Ok(Vector::zeros(n)),
                l if l == n => Ok(Vector::from_column_slice(v)),
                l => Err(Error::Config(format!("{field}: expected {n} entries, got {l}"))),
            }
        };
        let x0 = StateVector::new(
            vec_or_zero("initial.q", &self.initial.q)?,
            vec_or_zero("initial.p", &self.initial.p)?,
        )
        .map_err(ctx("initial"))?;

        let IntegratorConfig { dt, t_final, hold } = self.integrator;
        let steps = (t_final / dt).round() as usize;
        Ok(Scenario {
            closed_loop,
            barrier,
            x0,
            dt,
            steps,
            hold,
        })
    }

    /// Sets one sweepable parameter.
    pub fn set(&mut self, param: SweepParam, value: f64) {
        match param {
            SweepParam::Ebar => self.barrier.ebar = value,
            SweepParam::Qbar => self.barrier.qbar = value,
            SweepParam::K => self.controller.k = value,
            SweepParam::Gamma => self.class_k.gamma = value,
            SweepParam::AlphaE => self.barrier.alpha_e = value,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SweepParam {
    Ebar,
    Qbar,
    K,
    Gamma,
    AlphaE,
}

impl SweepParam {
    pub const ALL: [SweepParam; 5] = [Self::Ebar, Self::Qbar, Self::K, Self::Gamma, Self::AlphaE];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Ebar => "Ebar",
            Self::Qbar => "qbar",
            Self::K => "k",
            Self::Gamma => "gamma",
            Self::AlphaE => "alpha_E",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown sweep parameter {s:?}; expected one of Ebar, qbar, k, gamma, alpha_E")))
    }
}

/// Parses a comma-separated list of finite numbers, e.g. `0.5,1,2`.
pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    let values = text
        .split(',')
        .map(str::trim)
        .map(|tok| {
            tok.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Config(format!("--values: {tok:?} is not a finite number")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() {
        return Err(Error::Config("--values: empty list".into()));
    }
    Ok(values)
}
