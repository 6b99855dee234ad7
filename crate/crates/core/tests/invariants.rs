mod common;

use common::{green_intervals, integrate_rate, invariant_violations, random_discrete_config, random_fluid_config};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tlc_core::model::{region_of, Region, Road};
use tlc_core::model::{CycleConfig, ThresholdVector};
use tlc_core::sim::{sample_cost, simulate, EventKind, RateSchedule, SimConfig, StopRule};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn discrete_paths_keep_hybrid_invariants(seed in any::<u64>()) {
        let cfg = random_discrete_config(&mut ChaCha8Rng::seed_from_u64(seed));
        let path = simulate(&cfg).unwrap();
        let v = invariant_violations(&cfg, &path);
        prop_assert!(v.is_empty(), "{:?}", &v[..v.len().min(5)]);
    }

    #[test]
    fn fluid_paths_keep_hybrid_invariants(seed in any::<u64>()) {
        let cfg = random_fluid_config(&mut ChaCha8Rng::seed_from_u64(seed));
        let path = simulate(&cfg).unwrap();
        let v = invariant_violations(&cfg, &path);
        prop_assert!(v.is_empty(), "{:?}", &v[..v.len().min(5)]);
    }

    // Inflow over a closed period equals capacity times its green time.
    #[test]
    fn fluid_periods_conserve_flow(seed in any::<u64>()) {
        let cfg = random_fluid_config(&mut ChaCha8Rng::seed_from_u64(seed));
        let path = simulate(&cfg).unwrap();
        let sched = cfg.rate_schedule.as_ref().unwrap();
        let greens = green_intervals(&cfg, &path);
        for n in Road::BOTH {
            for p in path.neps[n.index()].iter().filter(|p| p.closed) {
                let inflow = integrate_rate(sched.segments(n), p.start, p.end);
                let green: f64 = greens
                    .iter()
                    .filter(|g| g.2 == n)
                    .map(|g| (g.1.min(p.end) - g.0.max(p.start)).max(0.0))
                    .sum();
                let residual = inflow - cfg.departure_rate * green;
                prop_assert!(residual.abs() <= 1e-9, "road {} period [{}, {}]: {residual}", n.number(), p.start, p.end);
            }
        }
    }

    // Between events strictly inside a fluid period the queue is positive.
    #[test]
    fn fluid_queue_positive_inside_periods(seed in any::<u64>()) {
        let cfg = random_fluid_config(&mut ChaCha8Rng::seed_from_u64(seed));
        let path = simulate(&cfg).unwrap();
        for n in Road::BOTH {
            for p in &path.neps[n.index()] {
                for e in path.events.iter().filter(|e| p.start < e.time && e.time < p.end) {
                    prop_assert!(e.x[n.index()] > 0.0, "road {} empty at t={} inside [{}, {}]", n.number(), e.time, p.start, p.end);
                }
            }
        }
    }

    #[test]
    fn region_is_a_function_of_queue_and_threshold(x1 in 0.0..20.0f64, x2 in 0.0..20.0f64, s1 in 0.1..20.0f64, s2 in 0.1..20.0f64) {
        let s = tlc_core::model::ThresholdVector::new(s1, s2).unwrap();
        let r = region_of([x1, x2], &s);
        prop_assert_eq!(r.is_above(Road::One), x1 >= s1);
        prop_assert_eq!(r.is_above(Road::Two), x2 >= s2);
        prop_assert_eq!(r == Region::X0, x1 < s1 && x2 < s2);
        prop_assert_eq!(region_of([s1, s2], &s), Region::X3);
    }

    #[test]
    fn discrete_runs_are_deterministic(seed in any::<u64>()) {
        let cfg = random_discrete_config(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
    }
}

#[test]
fn switch_count_matches_stop_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let cfg = random_discrete_config(&mut rng);
        let path = simulate(&cfg).unwrap();
        let n = path.switches().count() as u64;
        assert_eq!(n, path.switch_count);
        assert_eq!(tlc_core::sim::StopRule::Switches(n), cfg.stop);
        assert_eq!(path.events.last().unwrap().time, path.horizon);
        assert!(matches!(path.events.first().unwrap().kind, EventKind::Start));
    }
}

#[test]
fn checker_flags_corrupted_paths() {
    let cfg = random_discrete_config(&mut ChaCha8Rng::seed_from_u64(9));
    let path = simulate(&cfg).unwrap();
    assert!(invariant_violations(&cfg, &path).is_empty());

    let mut bad = path.clone();
    bad.events[3].x[0] = -1.0;
    assert!(!invariant_violations(&cfg, &bad).is_empty());

    let mut bad = path.clone();
    let k = bad.events.len() / 2;
    bad.events[k].z = [1.0, 1.0];
    assert!(!invariant_violations(&cfg, &bad).is_empty());

    let mut bad = path.clone();
    let k = bad.events.iter().position(|e| matches!(e.kind, EventKind::Switch(_))).unwrap();
    bad.events[k].time -= cfg.cycles.min(cfg.initial_green) + 1.0;
    assert!(!invariant_violations(&cfg, &bad).is_empty());

    let mut bad = path;
    let road = (0..2).find(|&i| bad.neps[i].len() >= 2).unwrap();
    bad.neps[road][1].start = bad.neps[road][0].start;
    assert!(!invariant_violations(&cfg, &bad).is_empty());
}

// Each discrete vehicle counts as 1/k of a fluid unit: rates, capacity and
// thresholds scale by k and the cost by 1/k.
#[test]
fn finer_vehicles_approach_the_fluid_cost() {
    let cycles = CycleConfig::symmetric(10.0, 30.0).unwrap();
    let k = 10.0;
    for (alpha, s) in [([0.5, 1.0 / 6.0], [3.0, 4.0]), ([0.5, 1.0 / 3.0], [5.0, 6.0]), ([0.3, 0.2], [2.0, 2.0])] {
        let fluid = SimConfig::fluid(RateSchedule::constant(alpha), cycles, ThresholdVector::from_array(s), 20_000.0);
        let pf = simulate(&fluid).unwrap();
        let jf = sample_cost(&pf, [1.0, 1.0], pf.horizon);
        let mut d = SimConfig::discrete([1.0 / (k * alpha[0]), 1.0 / (k * alpha[1])], cycles, ThresholdVector::from_array(s.map(|v| k * v)));
        d.departure_rate = k;
        d.stop = StopRule::Horizon(20_000.0);
        let jd = (0..3)
            .map(|seed| {
                let p = simulate(&d.with_seed(seed)).unwrap();
                sample_cost(&p, [1.0, 1.0], p.horizon) / k
            })
            .sum::<f64>()
            / 3.0;
        assert!((jd - jf).abs() <= 0.1 * jf, "alpha {alpha:?} s {s:?}: fluid {jf} discrete {jd}");
    }
}
