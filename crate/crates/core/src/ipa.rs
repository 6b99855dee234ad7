//! Infinitesimal perturbation analysis of the sample cost with respect to
//! the thresholds `s = [s1, s2]`.
//!
//! The queue dynamics do not depend on `x` or `s` between events, so the
//! state derivatives `x'_{n,i} = ∂x_n/∂s_i` are piecewise constant and only
//! jump at light switches and at the boundaries of non-empty periods. The
//! estimator streams a sample path once, keeps a [`DerivativeState`], and
//! integrates `x'` over every non-empty period.
//!
//! On vehicle-level paths the switch-time derivative `σ'` drifts without
//! bound (every threshold switch adds to it and clock switches inherit it),
//! and the propagated `x'` carries that drift. [`estimate_gradient_regrouped`]
//! evaluates the same quantity with the rigid time-shift part of `x'` summed
//! analytically, so only the jumps of `σ'` enter.

use serde::{Deserialize, Serialize};

use crate::error::IpaError;
use crate::model::{FlowRates, Road, SwitchTrigger};
use crate::sim::{sample_cost, EventKind, EventRecord, Mode, NepCause, SamplePath};

/// Below this magnitude a switch-time denominator counts as zero.
const DENOM_EPS: f64 = 1e-12;

/// Event as seen by the estimator: only switches and period boundaries
/// move the derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IpaEvent {
    Switch { trigger: SwitchTrigger, x: [f64; 2], rates: FlowRates },
    NepStart { road: Road, cause: NepCause },
    NepEnd { road: Road },
}

impl IpaEvent {
    /// Project an event-log record; `None` for events that leave the
    /// derivatives untouched.
    pub fn from_record(e: &EventRecord) -> Option<IpaEvent> {
        match e.kind {
            EventKind::Switch(trigger) => Some(IpaEvent::Switch {
                trigger,
                x: e.x,
                rates: e.rates.expect("switch events carry rates"),
            }),
            EventKind::NepStart(cause) => Some(IpaEvent::NepStart { road: e.road, cause }),
            EventKind::NepEnd => Some(IpaEvent::NepEnd { road: e.road }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DerivativeState {
    /// `x_prime[n][i] = ∂x_n/∂s_i` in effect right now.
    pub x_prime: [[f64; 2]; 2],
    /// Left limit of `x_prime` at the current instant, i.e. the value before
    /// any event sharing this timestamp was applied.
    pub x_prime_left: [[f64; 2]; 2],
    /// `∂σ_j/∂s_i` for the most recent light switch.
    pub sigma_prime: [f64; 2],
    pub switch_index: u64,
    pub in_nep: [bool; 2],
}

impl DerivativeState {
    /// Mark that time has moved past the previous instant.
    pub fn new_instant(&mut self) {
        self.x_prime_left = self.x_prime;
    }
}

fn indicator(road: Road, i: usize) -> f64 {
    if road.index() == i {
        1.0
    } else {
        0.0
    }
}

/// Derivative of a light-switch time with respect to `s`.
///
/// Threshold-induced switches move with the threshold: for `ζ_n` the red
/// queue climbs at `α_n`, for `γ_n` the green queue drains at `α_n - h_n`.
/// Clock-induced switches sit a fixed `θ` after the previous switch and
/// inherit its derivative.
pub fn switch_time_derivative(
    trigger: SwitchTrigger,
    alpha_n: f64,
    h_n: f64,
    x_prime_before: [f64; 2],
    sigma_prime_prev: [f64; 2],
) -> Result<[f64; 2], IpaError> {
    let (label, denominator) = match trigger {
        SwitchTrigger::Zeta(_) => ("zeta", alpha_n),
        SwitchTrigger::Gamma(_) => ("gamma", alpha_n - h_n),
        SwitchTrigger::Lambda(_) | SwitchTrigger::Mu(_) => return Ok(sigma_prime_prev),
    };
    let road = trigger.road();
    if denominator.abs() < DENOM_EPS {
        return Err(IpaError::ZeroDenominator { trigger: label, road: road.number(), denominator });
    }
    Ok([0, 1].map(|i| (indicator(road, i) - x_prime_before[i]) / denominator))
}

/// Apply one event's derivative update, returning the new state.
pub fn apply_event(state: &DerivativeState, event: &IpaEvent) -> Result<DerivativeState, IpaError> {
    let mut next = *state;
    match *event {
        IpaEvent::Switch { trigger, x, rates } => {
            let n = trigger.road().index();
            let sigma = switch_time_derivative(
                trigger,
                rates.alpha[n],
                rates.h[n],
                state.x_prime_left[n],
                state.sigma_prime,
            )?;
            next.sigma_prime = sigma;
            next.switch_index += 1;

            let red = trigger.road_to_red();
            let g = red.index();
            if state.in_nep[g] {
                let rate = if x[g] > 0.0 { rates.h[g] } else { rates.alpha[g] };
                for i in 0..2 {
                    next.x_prime[g][i] -= rate * sigma[i];
                }
            } else if rates.alpha[g] > 0.0 {
                // GREEN ends on an empty queue that immediately starts to fill
                next.in_nep[g] = true;
                next.x_prime[g] = [0, 1].map(|i| -rates.alpha[g] * sigma[i]);
            }

            let r = red.other().index();
            if state.in_nep[r] {
                let (a, h) = (rates.alpha[r], rates.h[r]);
                let rate = if x[r] == 0.0 && a > 0.0 && a <= h { a } else { h };
                for i in 0..2 {
                    next.x_prime[r][i] += rate * sigma[i];
                }
                if x[r] == 0.0 {
                    // empty at the start of GREEN: the period closes here
                    next.in_nep[r] = false;
                    next.x_prime[r] = [0.0; 2];
                }
            }
        }
        IpaEvent::NepStart { road, cause } => {
            let n = road.index();
            if !state.in_nep[n] {
                if cause == NepCause::SwitchToRed {
                    return Err(IpaError::OrphanInducedStart { road: road.number(), time: f64::NAN });
                }
                // exogenous start: the start time does not move with s
                next.in_nep[n] = true;
                next.x_prime[n] = [0.0; 2];
            }
        }
        IpaEvent::NepEnd { road } => {
            let n = road.index();
            if !state.in_nep[n] {
                return Err(IpaError::UnopenedPeriod { road: road.number(), time: f64::NAN });
            }
            next.in_nep[n] = false;
            next.x_prime[n] = [0.0; 2];
        }
    }
    Ok(next)
}

/// Piecewise-constant `x'` over one non-empty period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NepAccumulator {
    pub road: Road,
    pub start: f64,
    /// `(duration, x'_{n,·})` per segment; consecutive equal values merged.
    pub segments: Vec<(f64, [f64; 2])>,
}

impl NepAccumulator {
    pub fn new(road: Road, start: f64) -> Self {
        NepAccumulator { road, start, segments: Vec::new() }
    }

    pub fn push(&mut self, duration: f64, x_prime: [f64; 2]) {
        if duration <= 0.0 {
            return;
        }
        match self.segments.last_mut() {
            Some(last) if last.1 == x_prime => last.0 += duration,
            _ => self.segments.push((duration, x_prime)),
        }
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.0).sum()
    }
}

/// `dL_{n,m}/ds` for one period: segment values times segment lengths.
pub fn nep_cost_derivative(acc: &NepAccumulator) -> [f64; 2] {
    acc.segments
        .iter()
        .fold([0.0; 2], |d, &(dur, xp)| [d[0] + dur * xp[0], d[1] + dur * xp[1]])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NepContribution {
    pub road: Road,
    pub start: f64,
    pub end: f64,
    pub closed: bool,
    pub d_ds: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub dl_ds: [f64; 2],
    pub horizon: f64,
    pub weights: [f64; 2],
    pub contributions: Vec<NepContribution>,
    /// Weighted switch-shift terms of the regrouped form, before the `1/T`
    /// factor; zero for the propagated form.
    pub shift_term: [f64; 2],
}

impl GradientEstimate {
    /// Recompute `dl_ds` from the per-period contributions.
    pub fn from_contributions(&self) -> [f64; 2] {
        let mut d = self.shift_term;
        for c in &self.contributions {
            let w = self.weights[c.road.index()];
            for i in 0..2 {
                d[i] += w * c.d_ds[i];
            }
        }
        d.map(|v| v / self.horizon)
    }
}

/// Single pass over the path that carries the derivative state through every
/// event. Returns `(1/T) Σ_n w_n Σ_m dL_{n,m}/ds`.
pub fn estimate_gradient(path: &SamplePath, weights: [f64; 2], horizon: f64) -> Result<GradientEstimate, IpaError> {
    if !(horizon > 0.0) {
        return Err(IpaError::BadHorizon(horizon));
    }
    let mut state = DerivativeState::default();
    let mut open: [Option<NepAccumulator>; 2] = [None, None];
    let mut contributions = Vec::new();
    let mut now = 0.0;

    let flush = |open: &mut [Option<NepAccumulator>; 2], state: &DerivativeState, until: f64, now: f64| {
        for (n, acc) in open.iter_mut().enumerate() {
            if let Some(acc) = acc {
                acc.push(until - now, state.x_prime[n]);
            }
        }
    };

    for (index, e) in path.events.iter().enumerate() {
        if e.time > horizon {
            break;
        }
        if e.time > now {
            flush(&mut open, &state, e.time, now);
            now = e.time;
            state.new_instant();
        }
        let Some(ev) = IpaEvent::from_record(e) else { continue };
        let next = apply_event(&state, &ev).map_err(|err| IpaError::AtEvent {
            index,
            source: Box::new(match err {
                IpaError::UnopenedPeriod { road, .. } => IpaError::UnopenedPeriod { road, time: e.time },
                IpaError::OrphanInducedStart { road, .. } => IpaError::OrphanInducedStart { road, time: e.time },
                other => other,
            }),
        })?;
        for road in Road::BOTH {
            let n = road.index();
            match (state.in_nep[n], next.in_nep[n]) {
                (false, true) => open[n] = Some(NepAccumulator::new(road, e.time)),
                (true, false) => {
                    if let Some(acc) = open[n].take() {
                        contributions.push(NepContribution {
                            road,
                            start: acc.start,
                            end: e.time,
                            closed: true,
                            d_ds: nep_cost_derivative(&acc),
                        });
                    }
                }
                _ => {}
            }
            debug_assert!(next.in_nep[n] || next.x_prime[n] == [0.0; 2]);
        }
        state = next;
    }
    if horizon > now {
        flush(&mut open, &state, horizon, now);
    }
    // truncated final periods: segment terms only, the horizon is fixed
    for acc in open.iter_mut().filter_map(Option::take) {
        contributions.push(NepContribution {
            road: acc.road,
            start: acc.start,
            end: horizon,
            closed: false,
            d_ds: nep_cost_derivative(&acc),
        });
    }

    let mut per_road = [[0.0; 2]; 2];
    for c in &contributions {
        for i in 0..2 {
            per_road[c.road.index()][i] += c.d_ds[i];
        }
    }
    let dl_ds = [0, 1].map(|i| (weights[0] * per_road[0][i] + weights[1] * per_road[1][i]) / horizon);
    Ok(GradientEstimate { dl_ds, horizon, weights, contributions, shift_term: [0.0; 2] })
}

/// Which algebraic form of the estimator to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Carry `x'` and `σ'` event by event and integrate `x'`.
    Propagated,
    /// Split `x' = y - ẋ σ'` and carry only `y` and the per-switch jumps of
    /// `σ'`. Same value on fluid paths; bounded on vehicle-level paths.
    Regrouped,
}

impl Estimator {
    pub fn for_mode(mode: Mode) -> Self {
        match mode {
            Mode::Fluid => Estimator::Propagated,
            Mode::Discrete => Estimator::Regrouped,
        }
    }
}

/// Gradient of the sample cost with the estimator form suited to the path.
pub fn estimate(path: &SamplePath, weights: [f64; 2], horizon: f64, form: Estimator) -> Result<GradientEstimate, IpaError> {
    match form {
        Estimator::Propagated => estimate_gradient(path, weights, horizon),
        Estimator::Regrouped => estimate_gradient_regrouped(path, weights, horizon),
    }
}

/// State of the regrouped form. `y[n]` is the part of `x'_n` that is not a
/// rigid time shift of the path: `x'_n = y_n - ẋ_n σ'`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ShiftFreeState {
    pub y: [[f64; 2]; 2],
    pub y_left: [[f64; 2]; 2],
    /// Running `σ'`, the sum of all jumps so far.
    pub sigma_prime: [f64; 2],
    pub in_nep: [bool; 2],
    /// Arrival-driven period on the green road that the estimator treats as
    /// part of the surrounding empty period.
    pub absorbed: [bool; 2],
}

/// Jump `σ'_j - σ'_{j-1}` of a switch-time derivative. Clock guards do not
/// jump; threshold guards depend only on the shift-free part of `x'`.
pub fn switch_time_jump(trigger: SwitchTrigger, alpha_n: f64, h_n: f64, y_before: [f64; 2]) -> Result<[f64; 2], IpaError> {
    switch_time_derivative(trigger, alpha_n, h_n, y_before, [0.0; 2])
}

fn slope_while_open(road: Road, u: Road, rates: &FlowRates) -> f64 {
    let n = road.index();
    if road == u {
        rates.alpha[n] - rates.h[n]
    } else {
        rates.alpha[n]
    }
}

impl ShiftFreeState {
    /// Apply one record; returns the switch jump when the record is a switch.
    fn apply(&mut self, e: &EventRecord, prev_rates: Option<FlowRates>) -> Result<[f64; 2], IpaError> {
        let mut jump = [0.0; 2];
        match e.kind {
            EventKind::Switch(trigger) => {
                let rates = e.rates.expect("switch events carry rates");
                let n = trigger.road().index();
                jump = switch_time_jump(trigger, rates.alpha[n], rates.h[n], self.y_left[n])?;
                for i in 0..2 {
                    self.sigma_prime[i] += jump[i];
                }
                let g = trigger.road_to_red().index();
                if self.in_nep[g] {
                    for i in 0..2 {
                        self.y[g][i] += (rates.alpha[g] - rates.h[g]) * jump[i];
                    }
                } else if rates.alpha[g] > 0.0 {
                    self.absorbed[g] = false;
                    self.in_nep[g] = true;
                    self.y[g] = [0.0; 2];
                }
                let r = 1 - g;
                if self.in_nep[r] {
                    if e.x[r] == 0.0 {
                        self.in_nep[r] = false;
                        self.y[r] = [0.0; 2];
                    } else {
                        for i in 0..2 {
                            self.y[r][i] += rates.alpha[r] * jump[i];
                        }
                    }
                }
            }
            EventKind::NepStart(cause) => {
                let n = e.road.index();
                if self.in_nep[n] {
                    return Ok(jump);
                }
                match cause {
                    NepCause::SwitchToRed => {
                        return Err(IpaError::OrphanInducedStart { road: e.road.number(), time: e.time })
                    }
                    NepCause::Arrival if e.u == e.road => self.absorbed[n] = true,
                    // vehicle arrivals are stationary: they move with a shift
                    NepCause::Arrival | NepCause::Initial => {
                        self.in_nep[n] = true;
                        self.y[n] = [0.0; 2];
                    }
                    NepCause::NetInflow | NepCause::Inflow => {
                        let rates = e.rates.expect("period starts carry rates");
                        let slope = slope_while_open(e.road, e.u, &rates);
                        self.in_nep[n] = true;
                        self.y[n] = self.sigma_prime.map(|sp| slope * sp);
                    }
                }
            }
            EventKind::NepEnd => {
                let n = e.road.index();
                if self.in_nep[n] {
                    self.in_nep[n] = false;
                    self.y[n] = [0.0; 2];
                } else if self.absorbed[n] {
                    self.absorbed[n] = false;
                } else {
                    return Err(IpaError::UnopenedPeriod { road: e.road.number(), time: e.time });
                }
            }
            EventKind::RateChange => {
                if let (Some(before), Some(after)) = (prev_rates, e.rates) {
                    for road in Road::BOTH {
                        let n = road.index();
                        if self.in_nep[n] {
                            let d = slope_while_open(road, e.u, &after) - slope_while_open(road, e.u, &before);
                            for i in 0..2 {
                                self.y[n][i] += d * self.sigma_prime[i];
                            }
                        }
                    }
                }
            }
            _ => {}
        }
        Ok(jump)
    }
}

/// Regrouped form of the estimator.
///
/// Writing `x' = y - ẋ σ'` and summing `-∫ ẋ σ' dt` by parts leaves
/// `∫ y dt` over the periods plus one term per threshold-driven switch,
/// `Δσ'_j · Σ_n w_n x_n(σ_j)`. When the horizon is the last switch time it
/// moves with `s` too, which turns that term into
/// `Δσ'_j · (Σ_n w_n x_n(σ_j) - L)`; for a fixed horizon the boundary term
/// `-σ' Σ_n w_n x_n(T)` is kept instead.
pub fn estimate_gradient_regrouped(path: &SamplePath, weights: [f64; 2], horizon: f64) -> Result<GradientEstimate, IpaError> {
    if !(horizon > 0.0) {
        return Err(IpaError::BadHorizon(horizon));
    }
    let moving = path.switches().last().map(|(e, _)| e.time) == Some(horizon);
    let level = if moving { sample_cost(path, weights, horizon) } else { 0.0 };
    let mut state = ShiftFreeState::default();
    let mut open: [Option<NepAccumulator>; 2] = [None, None];
    let mut contributions = Vec::new();
    let mut shift_term = [0.0; 2];
    let mut prev_rates = None;
    let mut now = 0.0;
    let mut last_x = [0.0; 2];

    for (index, e) in path.events.iter().enumerate() {
        if e.time > horizon {
            break;
        }
        if e.time > now {
            for (n, acc) in open.iter_mut().enumerate() {
                if let Some(acc) = acc {
                    acc.push(e.time - now, state.y[n]);
                }
            }
            now = e.time;
            state.y_left = state.y;
        }
        let was_open = state.in_nep;
        let jump = state.apply(e, prev_rates).map_err(|err| IpaError::AtEvent { index, source: Box::new(err) })?;
        if matches!(e.kind, EventKind::Switch(_)) {
            let wx = weights[0] * e.x[0] + weights[1] * e.x[1];
            for i in 0..2 {
                shift_term[i] += jump[i] * (wx - level);
            }
        }
        for road in Road::BOTH {
            let n = road.index();
            match (was_open[n], state.in_nep[n]) {
                (false, true) => open[n] = Some(NepAccumulator::new(road, e.time)),
                (true, false) => {
                    if let Some(acc) = open[n].take() {
                        contributions.push(NepContribution {
                            road,
                            start: acc.start,
                            end: e.time,
                            closed: true,
                            d_ds: nep_cost_derivative(&acc),
                        });
                    }
                }
                _ => {}
            }
        }
        if e.rates.is_some() {
            prev_rates = e.rates;
        }
        last_x = e.x;
    }
    if horizon > now {
        for (n, acc) in open.iter_mut().enumerate() {
            if let Some(acc) = acc {
                acc.push(horizon - now, state.y[n]);
            }
        }
    }
    for acc in open.iter_mut().filter_map(Option::take) {
        contributions.push(NepContribution {
            road: acc.road,
            start: acc.start,
            end: horizon,
            closed: false,
            d_ds: nep_cost_derivative(&acc),
        });
    }
    if !moving {
        let wx = weights[0] * last_x[0] + weights[1] * last_x[1];
        for i in 0..2 {
            shift_term[i] -= state.sigma_prime[i] * wx;
        }
    }
    let mut est = GradientEstimate { dl_ds: [0.0; 2], horizon, weights, contributions, shift_term };
    est.dl_ds = est.from_contributions();
    Ok(est)
}
