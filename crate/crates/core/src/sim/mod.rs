//! Sample-path generation for the controlled intersection.
//!
//! Two engines share one event-log representation:
//!
//! * [`discrete`]: vehicle-granular simulation with Poisson arrivals and
//!   fixed departure headways `1/H`, matching the experimental protocol.
//! * [`fluid`]: piecewise-linear queue contents under piecewise-constant
//!   arrival rates, with every guard time found by exact root finding. Used
//!   as the oracle when checking gradient estimates against finite
//!   differences.

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::model::{CycleConfig, FlowRates, Road, SwitchTrigger, ThresholdVector};

pub mod cost;
pub mod discrete;
pub mod eventlog;
pub mod fluid;
pub mod rate;

pub use cost::sample_cost;
pub use rate::estimate_rate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Discrete,
    Fluid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopRule {
    /// Stop at the N-th light switch.
    Switches(u64),
    /// Stop at a fixed time horizon, in seconds.
    Horizon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Headway {
    /// Constant `1/H` between departures.
    #[default]
    Deterministic,
    /// Exponential with mean `1/H`; for sensitivity runs.
    Exponential,
}

/// Piecewise-constant arrival rates for the fluid engine. Each road's
/// segments are `(start_time, rate)` sorted by start time; the first segment
/// must start at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSchedule {
    pub road1: Vec<(f64, f64)>,
    pub road2: Vec<(f64, f64)>,
}

impl RateSchedule {
    pub fn constant(alpha: [f64; 2]) -> Self {
        RateSchedule { road1: vec![(0.0, alpha[0])], road2: vec![(0.0, alpha[1])] }
    }

    pub fn segments(&self, road: Road) -> &[(f64, f64)] {
        match road {
            Road::One => &self.road1,
            Road::Two => &self.road2,
        }
    }

    /// Rate in effect at `t` (right-continuous).
    pub fn rate_at(&self, road: Road, t: f64) -> f64 {
        let segs = self.segments(road);
        let k = segs.partition_point(|&(start, _)| start <= t);
        segs[k.saturating_sub(1)].1
    }

    /// First breakpoint strictly after `t`, over both roads.
    pub fn next_change_after(&self, t: f64) -> Option<f64> {
        Road::BOTH
            .iter()
            .filter_map(|&r| {
                let segs = self.segments(r);
                let k = segs.partition_point(|&(start, _)| start <= t);
                segs.get(k).map(|s| s.0)
            })
            .min_by(f64::total_cmp)
    }

    fn validate(&self) -> Result<(), SimError> {
        for r in Road::BOTH {
            let segs = self.segments(r);
            if segs.first().map(|s| s.0) != Some(0.0) {
                return Err(SimError::InvalidConfig(format!(
                    "rate schedule for road {} must start at t = 0",
                    r.number()
                )));
            }
            if segs.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                return Err(SimError::InvalidConfig(format!(
                    "rate schedule for road {} is not strictly increasing in time",
                    r.number()
                )));
            }
            if segs.iter().any(|s| !(s.1 >= 0.0 && s.1.is_finite())) {
                return Err(SimError::InvalidConfig(format!(
                    "rate schedule for road {} has a negative or non-finite rate",
                    r.number()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Mean interarrival time per road, seconds; `inf` disables arrivals.
    pub mean_interarrival: [f64; 2],
    /// Departure capacity `H`, vehicles per second.
    pub departure_rate: f64,
    pub thresholds: ThresholdVector,
    pub cycles: CycleConfig,
    pub weights: [f64; 2],
    pub stop: StopRule,
    pub seed: u64,
    pub mode: Mode,
    /// Fluid mode only; defaults to constant `1/mean_interarrival`.
    pub rate_schedule: Option<RateSchedule>,
    pub initial_green: Road,
    pub initial_queue: [f64; 2],
    /// Width of the centred arrival-rate window, seconds.
    pub rate_window: f64,
    pub headway: Headway,
}

impl SimConfig {
    /// Poisson-arrival discrete configuration with the experimental defaults:
    /// `H = 1`, unit weights, `N = 5000` switches, road 1 green first.
    pub fn discrete(mean_interarrival: [f64; 2], cycles: CycleConfig, thresholds: ThresholdVector) -> Self {
        SimConfig {
            mean_interarrival,
            departure_rate: 1.0,
            thresholds,
            cycles,
            weights: [1.0, 1.0],
            stop: StopRule::Switches(5000),
            seed: 0,
            mode: Mode::Discrete,
            rate_schedule: None,
            initial_green: Road::One,
            initial_queue: [0.0, 0.0],
            rate_window: 100.0,
            headway: Headway::Deterministic,
        }
    }

    /// Fluid configuration driven by an explicit rate schedule.
    pub fn fluid(schedule: RateSchedule, cycles: CycleConfig, thresholds: ThresholdVector, horizon: f64) -> Self {
        SimConfig {
            mean_interarrival: [f64::INFINITY; 2],
            departure_rate: 1.0,
            thresholds,
            cycles,
            weights: [1.0, 1.0],
            stop: StopRule::Horizon(horizon),
            seed: 0,
            mode: Mode::Fluid,
            rate_schedule: Some(schedule),
            initial_green: Road::One,
            initial_queue: [0.0, 0.0],
            rate_window: 100.0,
            headway: Headway::Deterministic,
        }
    }

    pub fn with_thresholds(&self, s: ThresholdVector) -> Self {
        SimConfig { thresholds: s, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SimConfig { seed, ..self.clone() }
    }

    /// Long-run arrival rate `ᾱ_n`.
    pub fn arrival_rate(&self, road: Road) -> f64 {
        let m = self.mean_interarrival[road.index()];
        if m.is_infinite() {
            0.0
        } else {
            1.0 / m
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.thresholds.validate()?;
        self.cycles.validate()?;
        if self.mean_interarrival.iter().any(|&m| !(m > 0.0)) {
            return Err(SimError::InvalidConfig("mean interarrival times must be positive (inf disables arrivals)".into()));
        }
        if !(self.departure_rate > 0.0 && self.departure_rate.is_finite()) {
            return Err(SimError::InvalidConfig(format!("departure rate H must be positive, got {}", self.departure_rate)));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(SimError::InvalidConfig("weights must be non-negative".into()));
        }
        if !(self.rate_window > 0.0) {
            return Err(SimError::InvalidConfig(format!("rate window must be positive, got {}", self.rate_window)));
        }
        if self.initial_queue.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(SimError::InvalidConfig("initial queues must be non-negative".into()));
        }
        match self.stop {
            StopRule::Switches(0) => return Err(SimError::EmptyHorizon),
            StopRule::Horizon(t) if !(t > 0.0 && t.is_finite()) => return Err(SimError::EmptyHorizon),
            _ => {}
        }
        match self.mode {
            Mode::Discrete => {
                if self.initial_queue.iter().any(|x| x.fract() != 0.0) {
                    return Err(SimError::InvalidConfig("discrete mode needs integer initial queues".into()));
                }
            }
            Mode::Fluid => {
                if let Some(s) = &self.rate_schedule {
                    s.validate()?;
                }
            }
        }
        Ok(())
    }
}

/// Why a non-empty period began.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NepCause {
    /// Queue non-empty at time 0.
    Initial,
    /// A vehicle arrived to an empty queue (discrete engine).
    Arrival,
    /// GREEN ended on an empty queue with positive inflow.
    SwitchToRed,
    /// Net inflow `α - h` turned positive on a green empty road.
    NetInflow,
    /// Inflow `α` turned positive on a red empty road.
    Inflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Start,
    Arrival,
    Departure,
    /// Queue reached its threshold from below without a switch.
    ThresholdUp,
    /// Queue fell through its threshold without a switch.
    ThresholdDown,
    /// Light switch; the event road is the road that goes RED.
    Switch(SwitchTrigger),
    NepStart(NepCause),
    NepEnd,
    RateChange,
    End,
}

impl EventKind {
    pub fn label(&self) -> String {
        match self {
            EventKind::Start => "start".into(),
            EventKind::Arrival => "arrival".into(),
            EventKind::Departure => "departure".into(),
            EventKind::ThresholdUp => "threshold_up".into(),
            EventKind::ThresholdDown => "threshold_down".into(),
            EventKind::Switch(t) => format!("switch_{}{}", t.label(), t.road().number()),
            EventKind::NepStart(c) => match c {
                NepCause::Initial => "nep_start_initial".into(),
                NepCause::Arrival => "nep_start_arrival".into(),
                NepCause::SwitchToRed => "nep_start_g2r".into(),
                NepCause::NetInflow => "nep_start_e6".into(),
                NepCause::Inflow => "nep_start_e7".into(),
            },
            EventKind::NepEnd => "nep_end".into(),
            EventKind::RateChange => "rate_change".into(),
            EventKind::End => "end".into(),
        }
    }
}

/// One row of the event log. `x`, `z` and `u` are the values just after the
/// event. `rates` is filled for switches and non-empty-period boundaries, and
/// for every fluid event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub road: Road,
    pub x: [f64; 2],
    pub z: [f64; 2],
    pub u: Road,
    pub rates: Option<FlowRates>,
}

/// A maximal interval `[start, end)` on which a queue is non-empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nep {
    pub start: f64,
    pub end: f64,
    /// False when the horizon cut the period short.
    pub closed: bool,
    pub cause: NepCause,
    /// Light switches strictly inside the period.
    pub switch_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub mode: Mode,
    pub events: Vec<EventRecord>,
    pub neps: [Vec<Nep>; 2],
    pub switch_count: u64,
    pub horizon: f64,
    /// Arrival epochs per road (discrete engine), sorted.
    pub arrivals: [Vec<f64>; 2],
}

impl SamplePath {
    pub fn switches(&self) -> impl Iterator<Item = (&EventRecord, SwitchTrigger)> {
        self.events.iter().filter_map(|e| match e.kind {
            EventKind::Switch(t) => Some((e, t)),
            _ => None,
        })
    }
}

/// Run one sample path.
pub fn simulate(config: &SimConfig) -> Result<SamplePath, SimError> {
    config.validate()?;
    let mut path = match config.mode {
        Mode::Discrete => discrete::run(config)?,
        Mode::Fluid => fluid::run(config)?,
    };
    path.neps = collect_neps(&path.events, path.horizon);
    Ok(path)
}

fn collect_neps(events: &[EventRecord], horizon: f64) -> [Vec<Nep>; 2] {
    let mut out: [Vec<Nep>; 2] = [Vec::new(), Vec::new()];
    let mut open: [Option<Nep>; 2] = [None, None];
    for e in events {
        match e.kind {
            EventKind::NepStart(cause) => {
                let i = e.road.index();
                debug_assert!(open[i].is_none(), "nested NEP on road {}", e.road.number());
                open[i] = Some(Nep { start: e.time, end: e.time, closed: false, cause, switch_times: Vec::new() });
            }
            EventKind::NepEnd => {
                if let Some(mut nep) = open[e.road.index()].take() {
                    // a switch logged at the closing instant is not internal
                    nep.switch_times.retain(|&t| t < e.time);
                    nep.end = e.time;
                    nep.closed = true;
                    out[e.road.index()].push(nep);
                }
            }
            EventKind::Switch(_) => {
                for nep in open.iter_mut().flatten() {
                    if e.time > nep.start {
                        nep.switch_times.push(e.time);
                    }
                }
            }
            _ => {}
        }
    }
    for (i, slot) in open.iter_mut().enumerate() {
        if let Some(mut nep) = slot.take() {
            nep.switch_times.retain(|&t| t < horizon);
            nep.end = horizon;
            out[i].push(nep);
        }
    }
    out
}

/// Consecutive near-simultaneous events tolerated before declaring a stall.
pub(crate) const STALL_LIMIT: usize = 256;
pub(crate) const STALL_GAP: f64 = 1e-12;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_lookup() {
        let s = RateSchedule { road1: vec![(0.0, 0.2), (5.0, 0.0), (9.0, 0.4)], road2: vec![(0.0, 0.1)] };
        assert_eq!(s.rate_at(Road::One, 0.0), 0.2);
        assert_eq!(s.rate_at(Road::One, 5.0), 0.0);
        assert_eq!(s.rate_at(Road::One, 8.9), 0.0);
        assert_eq!(s.rate_at(Road::One, 100.0), 0.4);
        assert_eq!(s.next_change_after(0.0), Some(5.0));
        assert_eq!(s.next_change_after(5.0), Some(9.0));
        assert_eq!(s.next_change_after(9.0), None);
    }

    #[test]
    fn config_validation() {
        let c = SimConfig::discrete(
            [2.0, 6.0],
            CycleConfig::symmetric(10.0, 30.0).unwrap(),
            ThresholdVector::new(1.0, 4.0).unwrap(),
        );
        assert!(c.validate().is_ok());
        let mut bad = c.clone();
        bad.stop = StopRule::Switches(0);
        assert_eq!(bad.validate(), Err(SimError::EmptyHorizon));
        let mut bad = c.clone();
        bad.departure_rate = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = c.clone();
        bad.initial_queue = [1.5, 0.0];
        assert!(bad.validate().is_err());
        let mut bad = c;
        bad.mode = Mode::Fluid;
        bad.rate_schedule = Some(RateSchedule { road1: vec![(1.0, 0.1)], road2: vec![(0.0, 0.1)] });
        assert!(bad.validate().is_err());
    }
}
