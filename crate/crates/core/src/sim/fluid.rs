use super::{EventKind, EventRecord, Mode, NepCause, RateSchedule, SamplePath, SimConfig, StopRule, STALL_GAP, STALL_LIMIT};
use crate::error::SimError;
use crate::model::{flow_rate, reset_rule, FlowRates, HybridState, Region, Road, SwitchTrigger};

/// Candidate next events, in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Next {
    MaxGreen,
    CrossDown(Road),
    MinGreen,
    CrossUp(Road),
    Empties(Road),
    RateChange,
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    schedule: RateSchedule,
    t: f64,
    x: [f64; 2],
    /// Threshold side per road, tracked explicitly so a queue sitting exactly
    /// on its threshold after a downward crossing reads as below.
    above: [bool; 2],
    green: Road,
    green_since: f64,
    min_pending: bool,
    alpha: [f64; 2],
    events: Vec<EventRecord>,
    switches: u64,
}

impl<'a> Engine<'a> {
    fn h(&self) -> f64 {
        self.cfg.departure_rate
    }

    fn rates(&self) -> FlowRates {
        FlowRates { alpha: self.alpha, h: [self.h(); 2] }
    }

    fn state(&self) -> HybridState {
        let mut z = [0.0; 2];
        z[self.green.index()] = self.t - self.green_since;
        HybridState { x: self.x, z, u: self.green }
    }

    fn region(&self) -> Region {
        Region::from_sides(self.above)
    }

    fn slope(&self, road: Road) -> f64 {
        flow_rate(road, &self.state(), &self.rates())
    }

    fn log(&mut self, kind: EventKind, road: Road) {
        let st = self.state();
        let rates = Some(self.rates());
        self.events.push(EventRecord { time: self.t, kind, road, x: st.x, z: st.z, u: st.u, rates });
    }

    fn next_event(&self) -> (Next, f64) {
        let cycles = &self.cfg.cycles;
        let mut best = (Next::MaxGreen, self.green_since + cycles.max(self.green));
        let mut consider = |n, t: f64| {
            if t < best.1 {
                best = (n, t);
            }
        };
        for r in Road::BOTH {
            let i = r.index();
            let slope = self.slope(r);
            let s = self.cfg.thresholds.get(r);
            if self.above[i] && slope < 0.0 {
                consider(Next::CrossDown(r), self.t + ((self.x[i] - s) / -slope).max(0.0));
            }
        }
        if self.min_pending {
            consider(Next::MinGreen, self.green_since + cycles.min(self.green));
        }
        for r in Road::BOTH {
            let i = r.index();
            let slope = self.slope(r);
            let s = self.cfg.thresholds.get(r);
            if !self.above[i] && slope > 0.0 {
                consider(Next::CrossUp(r), self.t + ((s - self.x[i]) / slope).max(0.0));
            }
        }
        for r in Road::BOTH {
            let i = r.index();
            let slope = self.slope(r);
            if self.x[i] > 0.0 && slope < 0.0 {
                consider(Next::Empties(r), self.t + self.x[i] / -slope);
            }
        }
        if let Some(tc) = self.schedule.next_change_after(self.t) {
            consider(Next::RateChange, tc);
        }
        best
    }

    /// Move to `t`. `emptying` is the road whose empty-hit is the event at
    /// `t`; it is logged by the step itself.
    fn advance_to(&mut self, t: f64, emptying: Option<Road>) {
        let dt = t - self.t;
        if dt > 0.0 {
            let slopes = [self.slope(Road::One), self.slope(Road::Two)];
            let mut emptied = [false; 2];
            for i in 0..2 {
                let next = self.x[i] + slopes[i] * dt;
                emptied[i] = self.x[i] > 0.0 && next <= 0.0;
                self.x[i] = next.max(0.0);
            }
            self.t = t;
            // rounding can land another event on the emptying instant
            for r in Road::BOTH {
                if emptied[r.index()] && emptying != Some(r) {
                    self.log(EventKind::NepEnd, r);
                }
            }
        }
        self.t = t;
    }

    fn cross(&mut self, road: Road, up: bool) -> Option<SwitchTrigger> {
        let before = self.region();
        self.x[road.index()] = self.cfg.thresholds.get(road);
        self.above[road.index()] = up;
        let after = self.region();
        let clock = self.t - self.green_since;
        let trig = reset_rule(self.green, clock, before, after, &self.cfg.cycles);
        if trig.is_none() {
            self.log(if up { EventKind::ThresholdUp } else { EventKind::ThresholdDown }, road);
        }
        trig
    }

    fn step(&mut self, next: Next) -> Option<SwitchTrigger> {
        match next {
            Next::MaxGreen => Some(SwitchTrigger::Mu(self.green)),
            Next::MinGreen => {
                self.min_pending = false;
                let r = self.region();
                reset_rule(self.green, self.cfg.cycles.min(self.green), r, r, &self.cfg.cycles)
            }
            Next::CrossDown(r) => self.cross(r, false),
            Next::CrossUp(r) => self.cross(r, true),
            Next::Empties(r) => {
                self.x[r.index()] = 0.0;
                self.log(EventKind::NepEnd, r);
                None
            }
            Next::RateChange => {
                let old = self.alpha;
                for r in Road::BOTH {
                    self.alpha[r.index()] = self.schedule.rate_at(r, self.t);
                }
                self.log(EventKind::RateChange, self.green);
                let h = self.h();
                for r in Road::BOTH {
                    let i = r.index();
                    if self.x[i] > 0.0 {
                        continue;
                    }
                    if r == self.green && old[i] <= h && self.alpha[i] > h {
                        self.log(EventKind::NepStart(NepCause::NetInflow), r);
                    } else if r != self.green && old[i] == 0.0 && self.alpha[i] > 0.0 {
                        self.log(EventKind::NepStart(NepCause::Inflow), r);
                    }
                }
                None
            }
        }
    }

    fn switch(&mut self, trigger: SwitchTrigger) {
        let to_red = trigger.road_to_red();
        debug_assert_eq!(to_red, self.green);
        self.green = to_red.other();
        self.green_since = self.t;
        self.min_pending = true;
        self.switches += 1;
        self.log(EventKind::Switch(trigger), to_red);
        if self.x[to_red.index()] == 0.0 && self.alpha[to_red.index()] > 0.0 {
            self.log(EventKind::NepStart(NepCause::SwitchToRed), to_red);
        }
    }
}

pub(super) fn run(cfg: &SimConfig) -> Result<SamplePath, SimError> {
    let schedule = cfg.rate_schedule.clone().unwrap_or_else(|| {
        RateSchedule::constant([cfg.arrival_rate(Road::One), cfg.arrival_rate(Road::Two)])
    });
    let alpha = [schedule.rate_at(Road::One, 0.0), schedule.rate_at(Road::Two, 0.0)];
    let x0 = cfg.initial_queue;
    let s = cfg.thresholds.as_array();
    let mut eng = Engine {
        cfg,
        schedule,
        t: 0.0,
        x: x0,
        above: [x0[0] >= s[0], x0[1] >= s[1]],
        green: cfg.initial_green,
        green_since: 0.0,
        min_pending: true,
        alpha,
        events: Vec::new(),
        switches: 0,
    };
    eng.log(EventKind::Start, cfg.initial_green);
    for r in Road::BOTH {
        if x0[r.index()] > 0.0 || eng.slope(r) > 0.0 {
            eng.log(EventKind::NepStart(NepCause::Initial), r);
        }
    }

    let (max_switches, horizon) = match cfg.stop {
        StopRule::Switches(n) => (n, f64::INFINITY),
        StopRule::Horizon(t) => (u64::MAX, t),
    };
    let mut stalls = 0usize;
    loop {
        let (next, t) = eng.next_event();
        if t > horizon {
            eng.advance_to(horizon, None);
            break;
        }
        if t - eng.t < STALL_GAP {
            stalls += 1;
            if stalls > STALL_LIMIT {
                let st = eng.state();
                return Err(SimError::Stalled { time: t, count: stalls, x: st.x, z: st.z, green: st.u.number() });
            }
        } else {
            stalls = 0;
        }
        let emptying = match next {
            Next::Empties(r) => Some(r),
            _ => None,
        };
        eng.advance_to(t, emptying);
        if let Some(trigger) = eng.step(next) {
            eng.switch(trigger);
            if eng.switches >= max_switches {
                break;
            }
        }
    }
    let g = eng.green;
    eng.log(EventKind::End, g);
    Ok(SamplePath {
        mode: Mode::Fluid,
        horizon: eng.t,
        events: eng.events,
        neps: [Vec::new(), Vec::new()],
        switch_count: eng.switches,
        arrivals: [Vec::new(), Vec::new()],
    })
}
