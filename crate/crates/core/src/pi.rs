//! Discrete PI baseline, `u_k = kp e_k + ki Ts Σ_{j≤k} e_j`.

use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiConfig {
    pub kp: f64,
    pub ki: f64,
    pub ts: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Hold the sum while the output is saturated in the direction of the error.
    pub clamp: bool,
}

impl Default for PiConfig {
    /// Tuned on the nominal motor at 1 ms for a 20 rad/s step: about 4%
    /// overshoot, settles within 20 ms.
    fn default() -> Self {
        PiConfig {
            kp: 0.28,
            ki: 55.5,
            ts: 1e-3,
            u_min: 0.0,
            u_max: 24.0,
            clamp: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PiConfigError {
    SampleTime(f64),
    Limits { u_min: f64, u_max: f64 },
    NonFinite(&'static str),
}

impl fmt::Display for PiConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PiConfigError::SampleTime(ts) => write!(f, "PI sample time must be positive, got {ts}"),
            PiConfigError::Limits { u_min, u_max } => write!(f, "PI limits out of order: [{u_min}, {u_max}]"),
            PiConfigError::NonFinite(name) => write!(f, "PI parameter {name} is not finite"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for PiConfigError {}

impl PiConfig {
    pub fn validate(&self) -> Result<(), PiConfigError> {
        for (name, v) in [("kp", self.kp), ("ki", self.ki)] {
            if !v.is_finite() {
                return Err(PiConfigError::NonFinite(name));
            }
        }
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            return Err(PiConfigError::SampleTime(self.ts));
        }
        if !(self.u_min <= self.u_max) {
            return Err(PiConfigError::Limits {
                u_min: self.u_min,
                u_max: self.u_max,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PiState {
    /// Accumulated error, in rad/s · samples.
    pub sum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiOutput {
    pub u: f64,
    pub raw: f64,
    pub saturated: bool,
}

pub fn pi_step(cfg: &PiConfig, state: &mut PiState, error: f64) -> PiOutput {
    let sum = state.sum + error;
    let raw = cfg.kp * error + cfg.ki * cfg.ts * sum;
    let u = raw.clamp(cfg.u_min, cfg.u_max);
    let high = raw > cfg.u_max && error > 0.0;
    let low = raw < cfg.u_min && error < 0.0;
    if !(cfg.clamp && (high || low)) {
        state.sum = sum;
    }
    PiOutput {
        u,
        raw,
        saturated: raw != u,
    }
}
