use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::Rng;

pub const DEFAULT_ETA0: f64 = 0.002;
pub const DEFAULT_GAMMA: f64 = 0.000001025;
pub const DEFAULT_PERIOD: usize = 50;
/// Step schedule: three orders of magnitude per period.
pub const STEP_FACTOR: f64 = 0.001;
/// Stochastic schedule: annealing factor per period.
pub const ANNEAL_FACTOR: f64 = 0.01;
pub const ETA_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrScheduleKind {
    Step,
    Stochastic,
}

impl fmt::Display for LrScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LrScheduleKind::Step => "step",
            LrScheduleKind::Stochastic => "stochastic",
        })
    }
}

impl FromStr for LrScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step" => Ok(LrScheduleKind::Step),
            "stochastic" | "annealed-stochastic" => Ok(LrScheduleKind::Stochastic),
            other => Err(Error::Config(format!("unknown learning-rate schedule '{other}'"))),
        }
    }
}

/// Learning-rate schedule with its per-epoch history.
///
/// `history[t]` is the rate after epoch `t` (`history[0] = eta0`); epoch `t`
/// trains with `history[t - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub kind: LrScheduleKind,
    pub eta0: f64,
    pub gamma: f64,
    pub period: usize,
    /// Read `gamma^t` as a standard deviation instead of a variance.
    pub noise_is_std: bool,
    pub history: Vec<f64>,
}

impl LrSchedule {
    pub fn new(kind: LrScheduleKind, eta0: f64) -> Self {
        LrSchedule {
            kind,
            eta0,
            gamma: DEFAULT_GAMMA,
            period: DEFAULT_PERIOD,
            noise_is_std: false,
            history: vec![eta0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0) || !self.eta0.is_finite() {
            return Err(Error::Config(format!("initial learning rate must be positive, got {}", self.eta0)));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Config(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if self.period == 0 {
            return Err(Error::Config("schedule period must be positive".into()));
        }
        Ok(())
    }

    /// Rate used while training epoch `t` (1-based).
    pub fn rate_for_epoch(&self, t: usize) -> f64 {
        self.history
            .get(t.saturating_sub(1))
            .copied()
            .unwrap_or(*self.history.last().expect("history starts with eta0"))
    }

    /// Standard deviation of the stochastic perturbation at epoch `t`.
    pub fn noise_std(&self, t: usize) -> f64 {
        let g = self.gamma.powi(t as i32);
        if self.noise_is_std {
            g
        } else {
            g.sqrt()
        }
    }

    /// Computes and records `eta_t`, drawing the perturbation from `rng`.
    pub fn next_lr(&mut self, t: usize, rng: &mut Rng) -> Result<f64> {
        let z = match self.kind {
            LrScheduleKind::Step => 0.0,
            LrScheduleKind::Stochastic => rng.standard_normal(),
        };
        self.next_lr_with_draw(t, z)
    }

    /// As [`next_lr`](Self::next_lr) with an explicit standard-normal draw `z`.
    pub fn next_lr_with_draw(&mut self, t: usize, z: f64) -> Result<f64> {
        if t < 1 {
            return Err(Error::Param("schedule epochs start at 1".into()));
        }
        let eta = match self.kind {
            LrScheduleKind::Step => self.eta0 * STEP_FACTOR.powi((t / self.period) as i32),
            LrScheduleKind::Stochastic => {
                let prev = self.history.get(t - 1).copied().unwrap_or(*self.history.last().expect("non-empty"));
                let mut eta = prev + self.noise_std(t) * z;
                if t.is_multiple_of(self.period) {
                    eta *= ANNEAL_FACTOR;
                }
                eta
            }
        };
        let eta = eta.max(ETA_FLOOR);
        self.history.truncate(t);
        self.history.push(eta);
        Ok(eta)
    }
}
