use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::{
    rate, EventKind, EventRecord, Headway, Mode, NepCause, SamplePath, SimConfig, StopRule, STALL_GAP,
    STALL_LIMIT,
};
use crate::error::SimError;
use crate::model::{region_of, reset_rule, FlowRates, Road, SwitchTrigger};

/// Independent random streams per purpose, so the arrival sequence of a road
/// depends only on the seed (common random numbers across thresholds).
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

struct Arrivals {
    rng: ChaCha8Rng,
    exp: Option<Exp<f64>>,
    next: f64,
}

impl Arrivals {
    fn new(seed: u64, road: Road, rate: f64) -> Self {
        let mut rng = stream(seed, road.index() as u64);
        let exp = (rate > 0.0).then(|| Exp::new(rate).expect("positive rate"));
        let next = exp.map_or(f64::INFINITY, |e| e.sample(&mut rng));
        Arrivals { rng, exp, next }
    }

    fn advance(&mut self) {
        if let Some(e) = self.exp {
            self.next += e.sample(&mut self.rng);
        }
    }
}

struct Departures {
    rng: ChaCha8Rng,
    headway: Headway,
    rate: f64,
}

impl Departures {
    fn service(&mut self) -> f64 {
        match self.headway {
            Headway::Deterministic => 1.0 / self.rate,
            Headway::Exponential => Exp::new(self.rate).expect("positive rate").sample(&mut self.rng),
        }
    }
}

/// Timer slots in tie-break order: maximum green, departure (may fire γ),
/// minimum green (λ), arrivals on road 1 then road 2 (may fire ζ).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    MaxGreen,
    Departure,
    MinGreen,
    Arrival(Road),
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    t: f64,
    x: [u64; 2],
    green: Road,
    green_since: f64,
    min_pending: bool,
    next_departure: Option<f64>,
    arrivals: [Arrivals; 2],
    departures: Departures,
    events: Vec<EventRecord>,
    arrival_log: [Vec<f64>; 2],
    switches: u64,
}

impl<'a> Engine<'a> {
    fn xf(&self) -> [f64; 2] {
        [self.x[0] as f64, self.x[1] as f64]
    }

    fn clocks(&self) -> [f64; 2] {
        let mut z = [0.0; 2];
        z[self.green.index()] = self.t - self.green_since;
        z
    }

    fn log(&mut self, kind: EventKind, road: Road) {
        let rec = EventRecord { time: self.t, kind, road, x: self.xf(), z: self.clocks(), u: self.green, rates: None };
        self.events.push(rec);
    }

    fn next_slot(&self) -> (Slot, f64) {
        let mut best = (Slot::MaxGreen, self.green_since + self.cfg.cycles.max(self.green));
        let mut consider = |slot, t: f64| {
            if t < best.1 {
                best = (slot, t);
            }
        };
        if let Some(d) = self.next_departure {
            consider(Slot::Departure, d);
        }
        if self.min_pending {
            consider(Slot::MinGreen, self.green_since + self.cfg.cycles.min(self.green));
        }
        consider(Slot::Arrival(Road::One), self.arrivals[0].next);
        consider(Slot::Arrival(Road::Two), self.arrivals[1].next);
        best
    }

    fn switch(&mut self, trigger: SwitchTrigger) {
        let to_red = trigger.road_to_red();
        debug_assert_eq!(to_red, self.green);
        let to_green = to_red.other();
        self.green = to_green;
        self.green_since = self.t;
        self.min_pending = true;
        // service of a partly served vehicle restarts at the next GREEN
        self.next_departure = (self.x[to_green.index()] > 0).then(|| self.t + self.departures.service());
        self.switches += 1;
        self.log(EventKind::Switch(trigger), to_red);
    }

    /// Apply the controller after a queue change on `road`; log the threshold
    /// crossing when no switch follows.
    fn after_queue_change(&mut self, road: Road, before: [f64; 2]) -> Option<SwitchTrigger> {
        let s = &self.cfg.thresholds;
        let (rb, ra) = (region_of(before, s), region_of(self.xf(), s));
        if rb == ra {
            return None;
        }
        let clock = self.t - self.green_since;
        match reset_rule(self.green, clock, rb, ra, &self.cfg.cycles) {
            Some(trigger) => Some(trigger),
            None => {
                let kind = if ra.is_above(road) { EventKind::ThresholdUp } else { EventKind::ThresholdDown };
                self.log(kind, road);
                None
            }
        }
    }

    fn step(&mut self, slot: Slot) -> Option<SwitchTrigger> {
        match slot {
            Slot::MaxGreen => Some(SwitchTrigger::Mu(self.green)),
            Slot::MinGreen => {
                self.min_pending = false;
                let r = region_of(self.xf(), &self.cfg.thresholds);
                reset_rule(self.green, self.cfg.cycles.min(self.green), r, r, &self.cfg.cycles)
            }
            Slot::Departure => {
                let g = self.green;
                let before = self.xf();
                self.x[g.index()] -= 1;
                self.log(EventKind::Departure, g);
                if self.x[g.index()] == 0 {
                    self.next_departure = None;
                    self.log(EventKind::NepEnd, g);
                } else {
                    self.next_departure = Some(self.t + self.departures.service());
                }
                self.after_queue_change(g, before)
            }
            Slot::Arrival(n) => {
                let before = self.xf();
                let i = n.index();
                self.x[i] += 1;
                self.arrival_log[i].push(self.t);
                self.arrivals[i].advance();
                self.log(EventKind::Arrival, n);
                if self.x[i] == 1 {
                    self.log(EventKind::NepStart(NepCause::Arrival), n);
                    if n == self.green {
                        self.next_departure = Some(self.t + self.departures.service());
                    }
                }
                self.after_queue_change(n, before)
            }
        }
    }
}

pub(super) fn run(cfg: &SimConfig) -> Result<SamplePath, SimError> {
    let x0 = [cfg.initial_queue[0] as u64, cfg.initial_queue[1] as u64];
    let mut eng = Engine {
        cfg,
        t: 0.0,
        x: x0,
        green: cfg.initial_green,
        green_since: 0.0,
        min_pending: true,
        next_departure: None,
        arrivals: [
            Arrivals::new(cfg.seed, Road::One, cfg.arrival_rate(Road::One)),
            Arrivals::new(cfg.seed, Road::Two, cfg.arrival_rate(Road::Two)),
        ],
        departures: Departures { rng: stream(cfg.seed, 2), headway: cfg.headway, rate: cfg.departure_rate },
        events: Vec::new(),
        arrival_log: [Vec::new(), Vec::new()],
        switches: 0,
    };
    eng.log(EventKind::Start, cfg.initial_green);
    for n in Road::BOTH {
        if x0[n.index()] > 0 {
            eng.log(EventKind::NepStart(NepCause::Initial), n);
        }
    }
    if x0[cfg.initial_green.index()] > 0 {
        eng.next_departure = Some(eng.departures.service());
    }

    let (max_switches, horizon) = match cfg.stop {
        StopRule::Switches(n) => (n, f64::INFINITY),
        StopRule::Horizon(t) => (u64::MAX, t),
    };
    let mut stalls = 0usize;
    loop {
        let (slot, t) = eng.next_slot();
        if t > horizon {
            eng.t = horizon;
            break;
        }
        if t - eng.t < STALL_GAP {
            stalls += 1;
            if stalls > STALL_LIMIT {
                return Err(SimError::Stalled {
                    time: t,
                    count: stalls,
                    x: eng.xf(),
                    z: eng.clocks(),
                    green: eng.green.number(),
                });
            }
        } else {
            stalls = 0;
        }
        eng.t = t;
        if let Some(trigger) = eng.step(slot) {
            eng.switch(trigger);
            if eng.switches >= max_switches {
                break;
            }
        }
    }
    let end_road = eng.green;
    eng.log(EventKind::End, end_road);

    let horizon = eng.t;
    let arrivals = eng.arrival_log;
    let mut events = eng.events;
    let h = [cfg.departure_rate; 2];
    for e in events.iter_mut() {
        if matches!(e.kind, EventKind::Switch(_) | EventKind::NepStart(_) | EventKind::NepEnd) {
            let alpha = [
                rate::window_rate(&arrivals[0], e.time, cfg.rate_window, horizon),
                rate::window_rate(&arrivals[1], e.time, cfg.rate_window, horizon),
            ];
            e.rates = Some(FlowRates { alpha, h });
        }
    }
    Ok(SamplePath {
        mode: Mode::Discrete,
        events,
        neps: [Vec::new(), Vec::new()],
        switch_count: eng.switches,
        horizon,
        arrivals,
    })
}
