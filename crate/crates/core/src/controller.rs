//! Proportional assist controller `P(P_l, P_r)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::networks::Action;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PGains {
    /// Linear gain, 1/s.
    pub linear: f64,
    /// Rotational gain, rad/(s·m).
    pub rotational: f64,
}

impl PGains {
    pub const SLOW: PGains = PGains { linear: 0.1, rotational: 1.0 };
    pub const MODERATE: PGains = PGains { linear: 1.0, rotational: 1.0 };
    pub const FAST: PGains = PGains { linear: 10.0, rotational: 1.0 };

    pub fn new(linear: f64, rotational: f64) -> Result<Self> {
        let g = Self { linear, rotational };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.linear > 0.0 && self.rotational > 0.0 && self.linear.is_finite() && self.rotational.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("controller gains must be positive, got {self:?}")))
        }
    }

    /// Named study settings: `P(0.1,1)`, `P(1,1)`, `P(10,1)`.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "P(0.1,1)" | "slow" => Some(Self::SLOW),
            "P(1,1)" | "moderate" => Some(Self::MODERATE),
            "P(10,1)" | "fast" => Some(Self::FAST),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        format!("P({},{})", self.linear, self.rotational)
    }
}

/// `v = P_l·x_local`, `ω = P_r·y_local`, saturated to the actor's action box.
/// A target behind the robot yields `v = 0`, never reverse.
pub fn p_control(target_local: [f64; 2], gains: PGains, v_max: f64, omega_max: f64) -> Action {
    Action {
        v: (gains.linear * target_local[0]).clamp(0.0, v_max),
        omega: (gains.rotational * target_local[1]).clamp(-omega_max, omega_max),
    }
}
