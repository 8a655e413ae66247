//! Deterministic quasi-static model of the DLO-clip interaction at a fixed
//! 1 kHz step: elastic clip force from displacement, friction-projected
//! contact force, lumped DLO dynamics, tension-angle transmission, and a
//! seeded sensor with acceleration-induced measurement error.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

/// Fixed control-loop step, seconds.
pub const DT: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("clip geometry must satisfy 0 <= x_contact < x_in < x_rear, got {0}, {1}, {2}")]
    BadGeometry(f64, f64, f64),
    #[error("clip parameter out of range: {0}")]
    BadParameter(&'static str),
}

/// Geometry, stiffness and friction parameters of one elastic clip fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipModel {
    /// Opening stiffness, N/m.
    pub k_clip: f64,
    /// Peak deformation at the end of the opening ramp, m.
    pub h_max: f64,
    /// Displacement where contact begins, m.
    pub x_contact: f64,
    /// Displacement where insertion completes and contact detaches, m.
    pub x_in: f64,
    /// Displacement where rear-wall contact begins, m.
    pub x_rear: f64,
    /// Friction coefficient.
    pub mu: f64,
    /// Contact surface angle, rad.
    pub psi: f64,
    /// Rear-wall stiffness, N/m.
    pub k_rear: f64,
}

impl ClipModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0 <= self.x_contact && self.x_contact < self.x_in && self.x_in < self.x_rear) {
            return Err(ModelError::BadGeometry(self.x_contact, self.x_in, self.x_rear));
        }
        if self.k_clip <= 0.0 {
            return Err(ModelError::BadParameter("k_clip must be > 0"));
        }
        if self.h_max <= 0.0 {
            return Err(ModelError::BadParameter("h_max must be > 0"));
        }
        if !(0.0..1.0).contains(&self.mu) {
            return Err(ModelError::BadParameter("mu must be in [0, 1)"));
        }
        if !(self.psi > 0.0 && self.psi <= std::f64::consts::FRAC_PI_2) {
            return Err(ModelError::BadParameter("psi must be in (0, pi/2]"));
        }
        if self.k_rear < 0.0 {
            return Err(ModelError::BadParameter("k_rear must be >= 0"));
        }
        Ok(())
    }

    /// Piecewise-linear deformation profile: zero before contact, a ramp to
    /// `h_max` over the opening, and an abrupt drop to zero at `x_in`.
    pub fn deformation(&self, x: f64) -> f64 {
        if x < self.x_contact || x >= self.x_in {
            0.0
        } else {
            self.h_max * (x - self.x_contact) / (self.x_in - self.x_contact)
        }
    }

    /// Elastic force `k_clip * h(x)`, plus the stiff rear-wall spring for
    /// overforce re-contact past `x_rear`.
    pub fn elastic_force(&self, x: f64) -> f64 {
        let mut f = self.k_clip * self.deformation(x);
        if x >= self.x_rear {
            f += self.k_rear * (x - self.x_rear);
        }
        f
    }

    /// y-component of the total clip contact force on the object.
    pub fn contact_force(&self, x: f64) -> f64 {
        contact_force_y(self.elastic_force(x), self.mu, self.psi)
    }

    /// Peak contact force of the opening ramp, the bound in
    /// `f_push < max f_c(t)`.
    pub fn peak_contact_force(&self) -> f64 {
        contact_force_y(self.k_clip * self.h_max, self.mu, self.psi)
    }

    /// Scale stiffness (and thereby every contact force) by `k`, keeping
    /// geometry fixed. Used for clip-size / cable-radius presets.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            k_clip: self.k_clip * k,
            k_rear: self.k_rear * k,
            ..self.clone()
        }
    }
}

impl Default for ClipModel {
    fn default() -> Self {
        Self {
            k_clip: 2000.0,
            h_max: 4e-3,
            x_contact: 5e-3,
            x_in: 10e-3,
            x_rear: 18e-3,
            mu: 0.3,
            psi: 1.2,
            k_rear: 5.0 * 2000.0,
        }
    }
}

/// Aggregate y-projection of the clip contact force:
/// `f_d * (2*mu*cos(psi) + (1 - mu^2)*sin(psi))`.
pub fn contact_force_y(f_d: f64, mu: f64, psi: f64) -> f64 {
    f_d * (2.0 * mu * psi.cos() + (1.0 - mu * mu) * psi.sin())
}

/// Lateral force transmitted by cable tension: `2 * f_s * sin(theta)`.
pub fn tension_transmission(f_s: f64, theta: f64) -> f64 {
    2.0 * f_s * theta.sin()
}

/// What the object can touch along the insertion axis.
#[derive(Debug, Clone)]
pub enum Obstacle {
    /// Nothing in the path (missed-contact geometry).
    Free,
    /// Properly aligned clip.
    Clip(ClipModel),
    /// Fixture base blocking the path below the opening: a stiff wall the
    /// object cannot pass.
    Wall { x_wall: f64, k_wall: f64 },
}

impl Obstacle {
    pub fn contact_force(&self, x: f64) -> f64 {
        match self {
            Obstacle::Free => 0.0,
            Obstacle::Clip(clip) => clip.contact_force(x),
            Obstacle::Wall { x_wall, k_wall } => k_wall * (x - x_wall).max(0.0),
        }
    }
}

/// Lumped state of the grasped DLO segment along the insertion axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DloState {
    /// Displacement along the insertion axis, m.
    pub x: f64,
    /// Velocity, m/s.
    pub v: f64,
    /// Lumped grasped-segment mass, kg.
    pub m: f64,
    /// Effective error mass seen by the force sensor, kg.
    pub m_e: f64,
    /// Linear viscous damping, N*s/m.
    pub damping: f64,
    /// Tension deflection angle, rad (frozen at contact establishment).
    pub theta: f64,
    /// Per-arm stretch force magnitude, N.
    pub f_s: f64,
}

impl Default for DloState {
    fn default() -> Self {
        Self {
            x: 0.0,
            v: 0.0,
            m: 0.5,
            m_e: 0.1,
            // the two grasping arms hold the segment near-critically damped
            damping: 50.0,
            theta: 0.0,
            f_s: 0.0,
        }
    }
}

/// Per-tick outputs of [`step_dynamics`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// True contact force at the pre-step displacement, N.
    pub f_c: f64,
    /// Acceleration applied this tick, m/s^2.
    pub accel: f64,
}

/// One semi-implicit Euler step of `(m + m_e)*x'' = f_push - f_c(x) - c*v`;
/// the error mass rides between the sensor and the contact, so it is
/// accelerated along with the grasped segment.
///
/// Backward velocity is only admitted while the obstacle is actually pushing
/// back (elastic relaxation); otherwise the grasp holds the object in place.
pub fn step_dynamics(state: &mut DloState, obstacle: &Obstacle, f_push: f64, dt: f64) -> StepInfo {
    let f_c = obstacle.contact_force(state.x);
    let accel = (f_push - f_c - state.damping * state.v) / (state.m + state.m_e);
    let mut v = state.v + accel * dt;
    if f_c <= 0.0 && v < 0.0 {
        v = 0.0;
    }
    state.v = v;
    state.x = (state.x + v * dt).max(0.0);
    StepInfo { f_c, accel }
}

/// Sensor parameters for the measured contact force stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    /// Gaussian noise standard deviation, N.
    pub noise_sigma: f64,
    /// Constant offset, N.
    pub bias: f64,
    /// RNG seed; identical seed and scenario give bit-identical traces.
    pub seed: u64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            noise_sigma: 0.05,
            bias: 0.0,
            seed: 0,
        }
    }
}

/// Seeded measurement stream realizing `f_c_ext = f_c + m_e * a + bias + noise`.
#[derive(Debug, Clone)]
pub struct Sensor {
    bias: f64,
    normal: Normal<f64>,
    rng: ChaCha8Rng,
}

impl Sensor {
    pub fn new(model: &SensorModel) -> Self {
        Self {
            bias: model.bias,
            normal: Normal::new(0.0, model.noise_sigma).expect("noise_sigma must be finite and >= 0"),
            rng: ChaCha8Rng::seed_from_u64(model.seed),
        }
    }

    /// Measured external force for this tick.
    pub fn measure(&mut self, f_c: f64, accel: f64, m_e: f64) -> f64 {
        f_c + m_e * accel + self.bias + self.normal.sample(&mut self.rng)
    }
}

/// Time profile of the commanded feedforward push force.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PushShape {
    Constant,
    Linear,
    Log,
    Exp,
}

impl PushShape {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "constant" => Some(Self::Constant),
            "linear" => Some(Self::Linear),
            "log" => Some(Self::Log),
            "exp" => Some(Self::Exp),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Constant => "constant",
            Self::Linear => "linear",
            Self::Log => "log",
            Self::Exp => "exp",
        }
    }
}

/// Feedforward push force `f_push(t)`: constant, or rising from zero to
/// `f_max` over `t_rise_ms` and saturating there.
#[derive(Debug, Clone, PartialEq)]
pub struct PushProfile {
    pub shape: PushShape,
    /// Target force F_push, N.
    pub f_max: f64,
    /// Rise duration T_push, ms.
    pub t_rise_ms: f64,
    /// Constant level for the contact MP, N.
    pub f_const: f64,
}

impl PushProfile {
    /// Curvature of the log rising pattern, 1/ms.
    pub const LOG_BETA: f64 = 1e-2;
    /// Curvature of the exp rising pattern, 1/ms.
    pub const EXP_GAMMA: f64 = 1.5e-3;

    pub fn constant(f_const: f64) -> Self {
        Self {
            shape: PushShape::Constant,
            f_max: f_const,
            t_rise_ms: 0.0,
            f_const,
        }
    }

    pub fn rising(shape: PushShape, f_max: f64, t_rise_ms: f64) -> Self {
        Self {
            shape,
            f_max,
            t_rise_ms,
            f_const: 0.0,
        }
    }

    pub fn eval(&self, t_ms: f64) -> f64 {
        match self.shape {
            PushShape::Constant => self.f_const,
            _ if t_ms >= self.t_rise_ms => self.f_max,
            PushShape::Linear => self.f_max * t_ms / self.t_rise_ms,
            PushShape::Log => {
                let b = Self::LOG_BETA;
                self.f_max * (b * t_ms).ln_1p() / (b * self.t_rise_ms).ln_1p()
            }
            PushShape::Exp => {
                let g = Self::EXP_GAMMA;
                self.f_max * (g * t_ms).exp_m1() / (g * self.t_rise_ms).exp_m1()
            }
        }
    }
}
