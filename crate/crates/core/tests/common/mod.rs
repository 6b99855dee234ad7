//! Helpers shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use rand::Rng;
use tlc_core::ipa::{estimate, Estimator};
use tlc_core::model::{CycleConfig, Road, SwitchTrigger, ThresholdVector, GUARD_TOL};
use tlc_core::sim::{sample_cost, simulate, EventKind, Headway, RateSchedule, SamplePath, SimConfig, StopRule};

pub const FD_DELTA: f64 = 1e-6;
pub const FD_REL_TOL: f64 = 1e-4;

/// Random piecewise-constant fluid configuration stopped at a fixed horizon.
pub fn random_fluid_config<R: Rng>(rng: &mut R) -> SimConfig {
    let mut road1 = vec![(0.0, rng.gen_range(0.1..0.6))];
    let mut road2 = vec![(0.0, rng.gen_range(0.1..0.5))];
    if rng.gen_bool(0.6) {
        road1.push((rng.gen_range(50.0..150.0), rng.gen_range(0.0..0.8)));
        road2.push((rng.gen_range(50.0..150.0), rng.gen_range(0.0..0.6)));
    }
    let theta = [rng.gen_range(3.0..10.0), rng.gen_range(15.0..40.0), rng.gen_range(3.0..10.0), rng.gen_range(15.0..40.0)];
    let s = ThresholdVector::new(rng.gen_range(1.0..8.0), rng.gen_range(1.0..8.0)).unwrap();
    let mut cfg = SimConfig::fluid(RateSchedule { road1, road2 }, CycleConfig::from_flat(theta).unwrap(), s, 300.0);
    cfg.departure_rate = rng.gen_range(0.8..1.5);
    cfg
}

fn event_signature(path: &SamplePath) -> Vec<(EventKind, Road)> {
    path.events.iter().map(|e| (e.kind, e.road)).collect()
}

pub struct FluidCheck {
    pub fd: [f64; 2],
    pub propagated: [f64; 2],
    pub regrouped: [f64; 2],
    /// Event sequence identical at `s ± Δ` in both components.
    pub order_unchanged: bool,
    pub mid_nep_switch: bool,
    pub clock_switch: bool,
}

impl FluidCheck {
    pub fn worst_relative_error(&self) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-3);
        (0..2).map(|i| rel(self.propagated[i], self.fd[i]).max(rel(self.regrouped[i], self.fd[i]))).fold(0.0, f64::max)
    }
}

pub fn fluid_check(cfg: &SimConfig) -> FluidCheck {
    let w = cfg.weights;
    let path = simulate(cfg).unwrap();
    let propagated = estimate(&path, w, path.horizon, Estimator::Propagated).unwrap().dl_ds;
    let regrouped = estimate(&path, w, path.horizon, Estimator::Regrouped).unwrap().dl_ds;
    let base_sig = event_signature(&path);
    let s = cfg.thresholds.as_array();
    let mut fd = [0.0; 2];
    let mut order_unchanged = true;
    for i in 0..2 {
        let (mut up, mut down) = (s, s);
        up[i] += FD_DELTA;
        down[i] -= FD_DELTA;
        let pu = simulate(&cfg.with_thresholds(ThresholdVector::from_array(up))).unwrap();
        let pd = simulate(&cfg.with_thresholds(ThresholdVector::from_array(down))).unwrap();
        order_unchanged &= event_signature(&pu) == base_sig && event_signature(&pd) == base_sig;
        fd[i] = (sample_cost(&pu, w, pu.horizon) - sample_cost(&pd, w, pd.horizon)) / (2.0 * FD_DELTA);
    }
    let mid_nep_switch = path.neps.iter().flatten().any(|n| !n.switch_times.is_empty());
    let clock_switch = path.switches().any(|(_, t)| matches!(t, SwitchTrigger::Lambda(_) | SwitchTrigger::Mu(_)));
    FluidCheck {
        fd,
        propagated,
        regrouped,
        order_unchanged,
        mid_nep_switch,
        clock_switch,
    }
}

/// Random discrete configuration covering both headway models, either
/// initial green road, integer initial queues and occasionally a silent road.
pub fn random_discrete_config<R: Rng>(rng: &mut R) -> SimConfig {
    let mut mean = [rng.gen_range(1.0..12.0), rng.gen_range(1.0..12.0)];
    if rng.gen_bool(0.1) {
        mean[rng.gen_range(0..2)] = f64::INFINITY;
    }
    let min = [rng.gen_range(1.0..15.0), rng.gen_range(1.0..15.0)];
    let max = [min[0] + rng.gen_range(1.0..40.0), min[1] + rng.gen_range(1.0..40.0)];
    let s = ThresholdVector::new(rng.gen_range(0.1..15.0), rng.gen_range(0.1..15.0)).unwrap();
    let mut cfg = SimConfig::discrete(mean, CycleConfig::new(min, max).unwrap(), s);
    cfg.departure_rate = rng.gen_range(0.5..2.0);
    cfg.stop = StopRule::Switches(rng.gen_range(100..400));
    cfg.seed = rng.gen();
    cfg.initial_green = if rng.gen_bool(0.5) { Road::One } else { Road::Two };
    cfg.initial_queue = [rng.gen_range(0..6) as f64, rng.gen_range(0..6) as f64];
    cfg.headway = if rng.gen_bool(0.3) { Headway::Exponential } else { Headway::Deterministic };
    cfg
}

/// Every violation of the hybrid-system invariants found on `path`.
pub fn invariant_violations(cfg: &SimConfig, path: &SamplePath) -> Vec<String> {
    let mut out = Vec::new();
    let tol = 1e-6;
    if let Some(w) = path.events.windows(2).find(|w| w[1].time < w[0].time) {
        out.push(format!("events out of order at t={} then t={}", w[0].time, w[1].time));
    }
    for (k, e) in path.events.iter().enumerate() {
        if e.x.iter().any(|&v| !(v >= 0.0)) {
            out.push(format!("event {k} at t={}: negative queue {:?}", e.time, e.x));
        }
        let red = e.u.other().index();
        if e.z[red] != 0.0 || (e.z[0] > 0.0 && e.z[1] > 0.0) {
            out.push(format!("event {k} at t={}: clocks {:?} with road {} green", e.time, e.z, e.u.number()));
        }
        if e.z[e.u.index()] > cfg.cycles.max(e.u) + GUARD_TOL {
            out.push(format!("event {k} at t={}: clock {} past max green", e.time, e.z[e.u.index()]));
        }
    }

    let mut green = cfg.initial_green;
    let mut since = 0.0;
    for (e, trigger) in path.switches() {
        if e.road != green || trigger.road_to_red() != green || e.u != green.other() {
            out.push(format!("switch at t={} does not hand the light from road {}", e.time, green.number()));
        }
        let d = e.time - since;
        if d < cfg.cycles.min(green) - tol || d > cfg.cycles.max(green) + tol {
            out.push(format!("green interval of road {} lasted {d} s", green.number()));
        }
        let at_max = (d - cfg.cycles.max(green)).abs() <= tol;
        if matches!(trigger, SwitchTrigger::Mu(_)) != at_max {
            out.push(format!("{} switch after a green of {d} s on road {}", trigger.label(), green.number()));
        }
        green = green.other();
        since = e.time;
    }
    if path.horizon - since > cfg.cycles.max(green) + tol {
        out.push(format!("final green of road {} overran max green", green.number()));
    }

    for n in Road::BOTH {
        let i = n.index();
        let neps = &path.neps[i];
        for (k, p) in neps.iter().enumerate() {
            if !(p.start < p.end || (!p.closed && p.start <= p.end)) || p.end > path.horizon + tol {
                out.push(format!("road {} period {k} = [{}, {}]", n.number(), p.start, p.end));
            }
            if let Some(next) = neps.get(k + 1) {
                if next.start < p.end {
                    out.push(format!("road {} periods {k} and {} overlap", n.number(), k + 1));
                }
            }
            if p.switch_times.iter().any(|&t| !(p.start < t && t < p.end)) {
                out.push(format!("road {} period {k} lists a switch outside ({}, {})", n.number(), p.start, p.end));
            }
            if !p.closed && k + 1 != neps.len() {
                out.push(format!("road {} period {k} is open but not last", n.number()));
            }
        }
        for e in &path.events {
            if e.x[i] > 0.0 && !neps.iter().any(|p| p.start <= e.time && e.time <= p.end) {
                out.push(format!("road {} holds {} vehicles at t={} outside every period", n.number(), e.x[i], e.time));
            }
        }
        let mut open = false;
        for e in path.events.iter().filter(|e| e.road == n) {
            match e.kind {
                EventKind::NepStart(_) if open => out.push(format!("road {} period reopened at t={}", n.number(), e.time)),
                EventKind::NepStart(_) => open = true,
                EventKind::NepEnd if !open => out.push(format!("road {} period closed twice at t={}", n.number(), e.time)),
                EventKind::NepEnd => open = false,
                _ => {}
            }
        }
    }
    out
}

/// Like [`random_fluid_config`] but always with a mid-run rate change.
pub fn random_piecewise_fluid_config<R: Rng>(rng: &mut R) -> SimConfig {
    loop {
        let cfg = random_fluid_config(rng);
        let sched = cfg.rate_schedule.as_ref().unwrap();
        if sched.road1.len() > 1 && sched.road2.len() > 1 {
            return cfg;
        }
    }
}

/// Green intervals `(start, end, road)` read off the switch events.
pub fn green_intervals(cfg: &SimConfig, path: &SamplePath) -> Vec<(f64, f64, Road)> {
    let mut out = Vec::new();
    let (mut since, mut green) = (0.0, cfg.initial_green);
    for (e, _) in path.switches() {
        out.push((since, e.time, green));
        since = e.time;
        green = green.other();
    }
    out.push((since, path.horizon, green));
    out
}

/// Integral of a piecewise-constant rate over `[a, b)`.
pub fn integrate_rate(segments: &[(f64, f64)], a: f64, b: f64) -> f64 {
    segments
        .iter()
        .enumerate()
        .map(|(k, &(start, rate))| {
            let end = segments.get(k + 1).map_or(f64::INFINITY, |s| s.0);
            rate * (end.min(b) - start.max(a)).max(0.0)
        })
        .sum()
}
