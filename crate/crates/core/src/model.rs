//! Deterministic definitions of the two-road intersection: thresholds, cycle
//! bounds, the hybrid state, the quasi-dynamic controller and its reset
//! (light switch) predicate. Nothing here owns time or randomness.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Absolute tolerance used for every guard comparison on clocks, in seconds.
pub const GUARD_TOL: f64 = 1e-9;

/// One of the two perpendicular roads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Road {
    One,
    Two,
}

impl Road {
    pub const BOTH: [Road; 2] = [Road::One, Road::Two];

    pub fn index(self) -> usize {
        match self {
            Road::One => 0,
            Road::Two => 1,
        }
    }

    /// The perpendicular road.
    pub fn other(self) -> Road {
        match self {
            Road::One => Road::Two,
            Road::Two => Road::One,
        }
    }

    /// 1-based label as used in logs and configs.
    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<Road> {
        match n {
            1 => Some(Road::One),
            2 => Some(Road::Two),
            _ => None,
        }
    }
}

/// Queue-content thresholds `[s1, s2]`, the controllable parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdVector {
    pub s1: f64,
    pub s2: f64,
}

impl ThresholdVector {
    pub fn new(s1: f64, s2: f64) -> Result<Self, ModelError> {
        let s = ThresholdVector { s1, s2 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (i, v) in [self.s1, self.s2].into_iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::InvalidThreshold { road: i as u8 + 1, value: v });
            }
        }
        Ok(())
    }

    pub fn get(&self, road: Road) -> f64 {
        match road {
            Road::One => self.s1,
            Road::Two => self.s2,
        }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.s1, self.s2]
    }

    /// Unchecked construction from an array, for perturbation arithmetic.
    pub fn from_array(a: [f64; 2]) -> Self {
        ThresholdVector { s1: a[0], s2: a[1] }
    }
}

/// Minimum and maximum GREEN lengths per road, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleConfig {
    pub theta_min: [f64; 2],
    pub theta_max: [f64; 2],
}

impl CycleConfig {
    pub fn new(theta_min: [f64; 2], theta_max: [f64; 2]) -> Result<Self, ModelError> {
        let c = CycleConfig { theta_min, theta_max };
        c.validate()?;
        Ok(c)
    }

    /// Same bounds on both roads.
    pub fn symmetric(theta_min: f64, theta_max: f64) -> Result<Self, ModelError> {
        Self::new([theta_min; 2], [theta_max; 2])
    }

    /// From the flat `[θ1min, θ1max, θ2min, θ2max]` layout used in tables.
    pub fn from_flat(theta: [f64; 4]) -> Result<Self, ModelError> {
        Self::new([theta[0], theta[2]], [theta[1], theta[3]])
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for n in 0..2 {
            let (lo, hi) = (self.theta_min[n], self.theta_max[n]);
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
                return Err(ModelError::InvalidCycle { road: n as u8 + 1, theta_min: lo, theta_max: hi });
            }
        }
        Ok(())
    }

    pub fn min(&self, road: Road) -> f64 {
        self.theta_min[road.index()]
    }

    pub fn max(&self, road: Road) -> f64 {
        self.theta_max[road.index()]
    }
}

/// Aggregate queue region: which queues sit at or above their threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    /// Both below.
    X0,
    /// Road 1 below, road 2 at or above.
    X1,
    /// Road 1 at or above, road 2 below.
    X2,
    /// Both at or above.
    X3,
}

impl Region {
    pub fn from_sides(above: [bool; 2]) -> Region {
        match above {
            [false, false] => Region::X0,
            [false, true] => Region::X1,
            [true, false] => Region::X2,
            [true, true] => Region::X3,
        }
    }

    pub fn is_above(self, road: Road) -> bool {
        let (a1, a2) = match self {
            Region::X0 => (false, false),
            Region::X1 => (false, true),
            Region::X2 => (true, false),
            Region::X3 => (true, true),
        };
        match road {
            Road::One => a1,
            Road::Two => a2,
        }
    }
}

/// Classify queue contents against thresholds; `x = s` counts as at-or-above.
pub fn region_of(x: [f64; 2], s: &ThresholdVector) -> Region {
    Region::from_sides([x[0] >= s.s1, x[1] >= s.s2])
}

/// Queue contents and clocks, plus the road holding GREEN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridState {
    pub x: [f64; 2],
    pub z: [f64; 2],
    /// Road currently holding GREEN.
    pub u: Road,
}

impl HybridState {
    /// Fresh state at a switch instant: the green road's clock sits at `0+`.
    pub fn at_switch(x: [f64; 2], green: Road) -> Self {
        HybridState { x, z: [0.0; 2], u: green }
    }

    pub fn validate(&self, cycles: &CycleConfig) -> Result<(), ModelError> {
        for n in Road::BOTH {
            let i = n.index();
            if !(self.x[i] >= 0.0) {
                return Err(ModelError::NegativeQueue { road: n.number(), value: self.x[i] });
            }
            if self.z[i] < 0.0 || self.z[i] > cycles.max(n) + GUARD_TOL {
                return Err(ModelError::ClockOutOfRange { road: n.number(), value: self.z[i] });
            }
        }
        check_clocks(self.z, self.u)
    }
}

fn check_clocks(z: [f64; 2], green: Road) -> Result<(), ModelError> {
    if z[0] > 0.0 && z[1] > 0.0 {
        return Err(ModelError::BothClocksRunning { z });
    }
    if z[green.other().index()] > 0.0 {
        return Err(ModelError::RedClockRunning { road: green.other().number(), z });
    }
    Ok(())
}

/// Quasi-dynamic controller. Returns the road that should hold GREEN given
/// the aggregate region and the clocks; `green` is the road currently green
/// (needed at the `0+` instant right after a switch when both clocks read 0).
///
/// The green road keeps the light while its clock is below `θ_min`, always
/// yields at `θ_max`, and in between yields only when its own queue is below
/// threshold and the perpendicular queue is at or above.
pub fn control_decision(
    region: Region,
    z: [f64; 2],
    green: Road,
    cfg: &CycleConfig,
) -> Result<Road, ModelError> {
    check_clocks(z, green)?;
    let clock = z[green.index()];
    if clock >= cfg.max(green) - GUARD_TOL {
        return Ok(green.other());
    }
    if clock < cfg.min(green) - GUARD_TOL {
        return Ok(green);
    }
    let yields = !region.is_above(green) && region.is_above(green.other());
    Ok(if yields { green.other() } else { green })
}

/// Arrival and departure-capacity rates in effect for both roads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowRates {
    pub alpha: [f64; 2],
    pub h: [f64; 2],
}

/// Queue slope `dx_n/dt` under the fluid dynamics.
pub fn flow_rate(road: Road, state: &HybridState, rates: &FlowRates) -> f64 {
    let i = road.index();
    let (alpha, h) = (rates.alpha[i], rates.h[i]);
    if state.u != road {
        alpha
    } else if state.x[i] <= 0.0 && alpha <= h {
        0.0
    } else {
        alpha - h
    }
}

/// Departure rate `β_n`: full capacity while green and backlogged, the
/// arrival rate while green and empty, zero on red.
pub fn departure_rate(road: Road, state: &HybridState, rates: &FlowRates) -> f64 {
    let i = road.index();
    if state.u != road {
        0.0
    } else if state.x[i] > 0.0 {
        rates.h[i]
    } else {
        rates.alpha[i]
    }
}

/// Guard that induced a light switch. The road is the one on which the
/// guard is satisfied, which for `Zeta` is the road turning GREEN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SwitchTrigger {
    /// Red queue reaches its threshold from below.
    Zeta(Road),
    /// Green queue drops through its threshold from above.
    Gamma(Road),
    /// Green clock reaches `θ_min` with the switching region already in force.
    Lambda(Road),
    /// Green clock reaches `θ_max`.
    Mu(Road),
}

impl SwitchTrigger {
    pub fn road(self) -> Road {
        match self {
            SwitchTrigger::Zeta(r)
            | SwitchTrigger::Gamma(r)
            | SwitchTrigger::Lambda(r)
            | SwitchTrigger::Mu(r) => r,
        }
    }

    /// Tie-break rank among simultaneous guards, lowest fires first.
    pub fn priority(self) -> u8 {
        let kind = match self {
            SwitchTrigger::Mu(_) => 0,
            SwitchTrigger::Gamma(_) => 2,
            SwitchTrigger::Lambda(_) => 4,
            SwitchTrigger::Zeta(_) => 6,
        };
        kind + self.road().index() as u8
    }

    /// The road whose GREEN ends because of this guard.
    pub fn road_to_red(self) -> Road {
        match self {
            SwitchTrigger::Zeta(r) => r.other(),
            other => other.road(),
        }
    }

    pub fn rule(self) -> ResetRule {
        match self {
            SwitchTrigger::Zeta(_) => ResetRule::PerpendicularRise,
            SwitchTrigger::Gamma(_) => ResetRule::OwnDrop,
            SwitchTrigger::Lambda(_) => ResetRule::MinGreenExpiry,
            SwitchTrigger::Mu(_) => ResetRule::MaxGreen,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SwitchTrigger::Zeta(_) => "zeta",
            SwitchTrigger::Gamma(_) => "gamma",
            SwitchTrigger::Lambda(_) => "lambda",
            SwitchTrigger::Mu(_) => "mu",
        }
    }
}

/// Which of the four controller rules reset the green clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResetRule {
    /// The red queue rose to its threshold.
    PerpendicularRise,
    /// The green queue fell through its threshold.
    OwnDrop,
    /// Minimum green reached in the yielding region.
    MinGreenExpiry,
    /// Maximum green reached.
    MaxGreen,
}

/// Guard events beyond the switch-inducing ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GuardEventKind {
    Switch(SwitchTrigger),
    /// Queue empties (`e5`), inducing the end of a non-empty period.
    Empties(Road),
    /// `α - h` turns positive on a green empty road (`e6`).
    NetInflowStarts(Road),
    /// `α` turns positive on a red empty road (`e7`).
    InflowStarts(Road),
}

/// Decide whether the green road's clock resets at this instant and under
/// which rule. `before`/`after` are the aggregate regions on either side of
/// the instant; `clock` is the green road's clock. Simultaneous guards are
/// resolved with priority `μ > γ > λ > ζ`.
pub fn reset_rule(
    green: Road,
    clock: f64,
    before: Region,
    after: Region,
    cfg: &CycleConfig,
) -> Option<SwitchTrigger> {
    let red = green.other();
    if clock >= cfg.max(green) - GUARD_TOL {
        return Some(SwitchTrigger::Mu(green));
    }
    let past_min = clock > cfg.min(green) + GUARD_TOL;
    let at_min = (clock - cfg.min(green)).abs() <= GUARD_TOL;
    if past_min && before.is_above(green) && !after.is_above(green) && after.is_above(red) {
        return Some(SwitchTrigger::Gamma(green));
    }
    if at_min && !after.is_above(green) && after.is_above(red) {
        return Some(SwitchTrigger::Lambda(green));
    }
    if past_min && !after.is_above(green) && !before.is_above(red) && after.is_above(red) {
        return Some(SwitchTrigger::Zeta(red));
    }
    None
}

/// Whether the GREEN road `road` switches to RED at this instant, reported
/// with the inducing guard. `x_after` is the queue content just after the
/// instant; `state_before` supplies the clocks and the pre-instant queues.
pub fn clock_reset_due(
    road: Road,
    state_before: &HybridState,
    x_after: [f64; 2],
    s: &ThresholdVector,
    cfg: &CycleConfig,
) -> Option<SwitchTrigger> {
    if state_before.u != road {
        return None;
    }
    reset_rule(
        road,
        state_before.z[road.index()],
        region_of(state_before.x, s),
        region_of(x_after, s),
        cfg,
    )
}
