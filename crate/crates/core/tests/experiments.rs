use proptest::prelude::*;
use tlc_core::config::RunConfig;
use tlc_core::experiments::{brute_force_surface, cost_reduction, GridSpec};
use tlc_core::model::ThresholdVector;
use tlc_core::optimizer::{eval_seed_base, evaluate_cost, mean_se, optimize, StepRule};
use tlc_core::sim::{SimConfig, StopRule};

fn template(name: &str) -> SimConfig {
    RunConfig::load(name).unwrap().sim_config().unwrap()
}

fn within(measured: f64, reference: f64, rel: f64) -> bool {
    (measured - reference).abs() <= rel * reference
}

#[test]
fn scenario_a_cost_at_published_optimum() {
    let (j, se) = evaluate_cost(&template("scenarioA"), ThresholdVector::new(1.0, 4.0).unwrap(), 10, 0).unwrap();
    assert!(within(j, 4.4, 0.15), "{j} ± {se}");
}

#[test]
fn scenario_b_far_corner_cost_and_reduction() {
    let t = template("scenarioB");
    let s0 = ThresholdVector::new(15.0, 15.0).unwrap();
    let (j0, _) = evaluate_cost(&t, s0, 10, eval_seed_base(0)).unwrap();
    assert!(within(j0, 13.1, 0.15), "{j0}");
    let run = optimize(&t, &StepRule::default(), s0, 0).unwrap();
    assert_eq!(run.j0, j0);
    let r = cost_reduction(run.j0, run.j_star).unwrap();
    assert!((r - 40.0).abs() <= 15.0, "R = {r}");
}

#[test]
fn reduction_matches_published_rounding() {
    assert_eq!(cost_reduction(12.8, 4.3).unwrap().round(), 66.0);
    assert_eq!(cost_reduction(14.4, 7.1).unwrap().round(), 51.0);
    assert_eq!(cost_reduction(23.9, 14.9).unwrap().round(), 38.0);
}

#[test]
fn cycle_only_reductions_follow_from_stored_costs() {
    for (name, published) in [("table2_row1", 42.0), ("table2_row2", 30.0)] {
        let r = RunConfig::load(name).unwrap().reference.unwrap();
        assert_eq!(r.r_cycles_only, Some(published));
        assert_eq!(r.cycles_only_reduction().unwrap().round(), published, "{name}");
    }
}

// The trailing 50-iteration average of J_l never climbs more than one
// standard error above its value 50 iterations earlier.
#[test]
fn scenario_a_trailing_average_does_not_climb() {
    let t = template("scenarioA");
    for s0 in [[10.0, 1.0], [9.0, 10.0]] {
        let run = optimize(&t, &StepRule::default(), ThresholdVector::from_array(s0), 0).unwrap();
        let costs: Vec<f64> = run.iterations.iter().map(|i| i.cost).collect();
        assert!(costs.len() >= 100, "{}", costs.len());
        for l in 100..=costs.len() {
            let (now, se_now) = mean_se(&costs[l - 50..l]);
            let (before, se_before) = mean_se(&costs[l - 100..l - 50]);
            let se = se_now.hypot(se_before);
            assert!(now <= before + se, "s0 {s0:?}, l = {l}: trailing mean {now} vs {before} + {se}");
        }
    }
}

#[test]
fn ipa_optimum_lies_in_brute_force_basin() {
    let mut t = template("scenarioA");
    t.stop = StopRule::Switches(1000);
    let run = optimize(&t, &StepRule::default(), ThresholdVector::new(10.0, 1.0).unwrap(), 0).unwrap();
    let surface = brute_force_surface(&t, &GridSpec::default(), 10, eval_seed_base(0)).unwrap();
    let rounded = ThresholdVector::from_array(run.s_star.as_array().map(|v| v.round().max(1.0)));
    assert!(surface.nearest(rounded) <= 1.05 * surface.min, "{rounded:?}: {} vs {}", surface.nearest(rounded), surface.min);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    // Descending from a poor corner, late iterates cost less than early ones.
    #[test]
    fn descent_lowers_cost(seed0 in 0u64..1_000_000) {
        let mut t = template("scenarioA");
        t.stop = StopRule::Switches(1000);
        let rule = StepRule { max_iterations: 120, ..StepRule::default() };
        let run = optimize(&t, &rule, ThresholdVector::new(10.0, 1.0).unwrap(), seed0).unwrap();
        let mean = |xs: &[tlc_core::optimizer::OptIteration]| xs.iter().map(|i| i.cost).sum::<f64>() / xs.len() as f64;
        let n = run.iterations.len();
        prop_assert!(mean(&run.iterations[n - 20..]) < mean(&run.iterations[..20]));
        prop_assert!(run.j_star < run.j0);
        prop_assert!(run.iterations.iter().all(|i| i.s.s1 >= rule.s_min && i.s.s2 >= rule.s_min));
    }
}
