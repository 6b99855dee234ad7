use super::SamplePath;
use crate::model::Road;

/// Arrival-rate estimate `N_a / t_w` for `road` from the arrivals recorded
/// on `path`, counting over a window of width `window` centred at `t`. The
/// window is clipped to `[0, horizon]` and the divisor shrinks with it.
pub fn estimate_rate(path: &SamplePath, road: Road, t: f64, window: f64) -> f64 {
    window_rate(&path.arrivals[road.index()], t, window, path.horizon)
}

/// Same estimate over a sorted slice of arrival epochs.
pub fn window_rate(arrivals: &[f64], t: f64, window: f64, horizon: f64) -> f64 {
    let lo = (t - 0.5 * window).max(0.0);
    let hi = (t + 0.5 * window).min(horizon);
    let width = hi - lo;
    if !(width > 0.0) {
        return 0.0;
    }
    // half-open (lo, hi]
    let a = arrivals.partition_point(|&s| s <= lo);
    let b = arrivals.partition_point(|&s| s <= hi);
    (b - a) as f64 / width
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_in_window() {
        let arr = [1.0, 2.0, 3.0, 4.0, 5.0, 30.0];
        assert_eq!(window_rate(&arr, 5.0, 10.0, 100.0), 0.5);
        assert_eq!(window_rate(&arr, 50.0, 10.0, 100.0), 0.0);
        assert_eq!(window_rate(&[], 50.0, 10.0, 100.0), 0.0);
    }

    #[test]
    fn clipped_at_boundaries() {
        let arr = [1.0, 2.0];
        // window [0, 3] has width 3
        assert!((window_rate(&arr, 0.5, 5.0, 100.0) - 2.0 / 3.0).abs() < 1e-15);
        // window [97, 100]
        assert!((window_rate(&[99.0], 100.0, 6.0, 100.0) - 1.0 / 3.0).abs() < 1e-15);
    }
}
