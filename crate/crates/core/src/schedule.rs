//! Power-law step-size and exploration schedules.
//!
//! Every player runs γ_i(t) = (t+R_i)^{-a}, σ_i(t) = (t+R_i)^{-b} and the
//! combined step β_i(t) = γ_i(t)·σ_i(t)²; the dual step is
//! β_0(t) = (t+N_0)^{-(a+2b)}. All players share the exponents (a, b) and
//! differ only in the integer offsets R_i, which keeps the β_i of different
//! players summable against each other (their difference is O(t^{-(a+2b+1)})).
//!
//! Only power laws are supported: they are the one family for which the
//! admissibility conditions reduce to closed-form inequalities on (a, b).

use crate::error::{Error, Result};
use crate::game::Agent;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Whether the run prices a coupling constraint (dual player present).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingMode {
    Coupled,
    Uncoupled,
}

/// Default exponents: a = 0.6, b = 0.2. This puts a+2b exactly at the upper
/// boundary 1, the fastest admissible decay of β, while satisfying 2a > 1 and
/// a + 3b > 1 strictly.
pub const DEFAULT_EXPONENT_A: f64 = 0.6;
pub const DEFAULT_EXPONENT_B: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    exponent_a: f64,
    exponent_b: f64,
    /// R_i per player; a single entry is shared by every player.
    offsets: Vec<u64>,
    /// N_0 for the dual step.
    dual_offset: u64,
}

/// Step sizes for one agent at one iteration. The dual player has no
/// exploration variance or primal step of its own.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSizes {
    Player { gamma: f64, sigma: f64, beta: f64 },
    Dual { beta: f64 },
}

/// One unsatisfied admissibility condition, e.g. `2a>1` with the actual
/// value of the left-hand side.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleViolation {
    pub condition: &'static str,
    pub value: f64,
}

impl fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violated (got {})", self.condition, self.value)
    }
}

impl Schedule {
    pub fn new(a: f64, b: f64, offsets: Vec<u64>, dual_offset: u64) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(
                "schedule exponents must be finite".into(),
            ));
        }
        if offsets.is_empty() {
            return Err(Error::InvalidParameter(
                "schedule needs at least one offset".into(),
            ));
        }
        if offsets.contains(&0) || dual_offset == 0 {
            return Err(Error::InvalidParameter(
                "schedule offsets must be positive integers".into(),
            ));
        }
        Ok(Schedule {
            exponent_a: a,
            exponent_b: b,
            offsets,
            dual_offset,
        })
    }

    pub fn defaults(players: usize) -> Self {
        Schedule {
            exponent_a: DEFAULT_EXPONENT_A,
            exponent_b: DEFAULT_EXPONENT_B,
            offsets: vec![1; players.max(1)],
            dual_offset: 1,
        }
    }

    pub fn exponent_a(&self) -> f64 {
        self.exponent_a
    }

    pub fn exponent_b(&self) -> f64 {
        self.exponent_b
    }

    pub fn offsets(&self) -> &[u64] {
        &self.offsets
    }

    pub fn dual_offset(&self) -> u64 {
        self.dual_offset
    }

    /// Checks that the offset list can serve `players` players (one shared
    /// entry or exactly one per player).
    pub fn check_players(&self, players: usize) -> Result<()> {
        if self.offsets.len() != 1 && self.offsets.len() != players {
            return Err(Error::InvalidParameter(format!(
                "schedule has {} offsets for {} players (need 1 or {})",
                self.offsets.len(),
                players,
                players
            )));
        }
        Ok(())
    }

    fn offset(&self, i: usize) -> f64 {
        if self.offsets.len() == 1 {
            self.offsets[0] as f64
        } else {
            self.offsets[i] as f64
        }
    }

    pub fn gamma(&self, t: u64, i: usize) -> f64 {
        (t as f64 + self.offset(i)).powf(-self.exponent_a)
    }

    pub fn sigma(&self, t: u64, i: usize) -> f64 {
        (t as f64 + self.offset(i)).powf(-self.exponent_b)
    }

    pub fn beta(&self, t: u64, i: usize) -> f64 {
        let s = self.sigma(t, i);
        self.gamma(t, i) * s * s
    }

    pub fn beta_dual(&self, t: u64) -> f64 {
        (t as f64 + self.dual_offset as f64).powf(-(self.exponent_a + 2.0 * self.exponent_b))
    }

    pub fn step_sizes(&self, t: u64, who: Agent) -> StepSizes {
        match who {
            Agent::Player(i) => StepSizes::Player {
                gamma: self.gamma(t, i),
                sigma: self.sigma(t, i),
                beta: self.beta(t, i),
            },
            Agent::Dual => StepSizes::Dual {
                beta: self.beta_dual(t),
            },
        }
    }

    /// (min, max) of the combined steps over all `players` and the dual.
    pub fn beta_range(&self, t: u64, players: usize) -> (f64, f64) {
        let mut lo = self.beta_dual(t);
        let mut hi = lo;
        for i in 0..players {
            let b = self.beta(t, i);
            lo = lo.min(b);
            hi = hi.max(b);
        }
        (lo, hi)
    }

    pub fn gamma_max(&self, t: u64, players: usize) -> f64 {
        (0..players).fold(f64::MIN, |m, i| m.max(self.gamma(t, i)))
    }

    pub fn sigma_max(&self, t: u64, players: usize) -> f64 {
        (0..players).fold(f64::MIN, |m, i| m.max(self.sigma(t, i)))
    }

    /// Admissibility of the exponents. Coupled runs need
    /// a+2b ∈ (0.5, 1], 2a > 1 and a+3b > 1; uncoupled runs replace the
    /// second condition with 2(a+b) > 1 (the step–variance product must stay
    /// square-summable once the dual smoothing is gone). Violations are
    /// returned, never thrown: exploratory runs may ignore them on purpose.
    pub fn validate(&self, mode: CouplingMode) -> Vec<ScheduleViolation> {
        let (a, b) = (self.exponent_a, self.exponent_b);
        let mut out = Vec::new();
        let s = a + 2.0 * b;
        if !(s > 0.5 && s <= 1.0) {
            out.push(ScheduleViolation {
                condition: "a+2b in (0.5,1]",
                value: s,
            });
        }
        match mode {
            CouplingMode::Coupled => {
                if 2.0 * a <= 1.0 {
                    out.push(ScheduleViolation {
                        condition: "2a>1",
                        value: 2.0 * a,
                    });
                }
            }
            CouplingMode::Uncoupled => {
                if 2.0 * (a + b) <= 1.0 {
                    out.push(ScheduleViolation {
                        condition: "2(a+b)>1",
                        value: 2.0 * (a + b),
                    });
                }
            }
        }
        if a + 3.0 * b <= 1.0 {
            out.push(ScheduleViolation {
                condition: "a+3b>1",
                value: a + 3.0 * b,
            });
        }
        out
    }
}
