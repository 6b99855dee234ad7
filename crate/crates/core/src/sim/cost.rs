use super::{Mode, SamplePath};

/// Weighted time-average queue content `(1/T) Σ_n ∫_0^T w_n x_n dt`.
///
/// Queue contents are piecewise constant between events in discrete mode
/// (each snapshot holds until the next event) and piecewise linear in fluid
/// mode (trapezoids between consecutive snapshots are exact).
pub fn sample_cost(path: &SamplePath, weights: [f64; 2], horizon: f64) -> f64 {
    if !(horizon > 0.0) {
        return 0.0;
    }
    let area = match path.mode {
        Mode::Discrete => path
            .events
            .windows(2)
            .map(|w| {
                let dt = w[1].time.min(horizon) - w[0].time.min(horizon);
                dt * (weights[0] * w[0].x[0] + weights[1] * w[0].x[1])
            })
            .sum::<f64>(),
        Mode::Fluid => path
            .events
            .windows(2)
            .map(|w| {
                let (a, b) = (&w[0], &w[1]);
                let dt = b.time.min(horizon) - a.time.min(horizon);
                0.5 * dt * (weights[0] * (a.x[0] + b.x[0]) + weights[1] * (a.x[1] + b.x[1]))
            })
            .sum::<f64>(),
    };
    area / horizon
}
