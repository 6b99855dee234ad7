mod common;

use common::{fluid_check, random_discrete_config, random_fluid_config, FD_REL_TOL};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tlc_core::ipa::{estimate, Estimator};
use tlc_core::model::{CycleConfig, ThresholdVector};
use tlc_core::optimizer::finite_difference_oracle;
use tlc_core::sim::{simulate, RateSchedule, SimConfig};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ipa_matches_central_difference(seed in any::<u64>()) {
        let check = fluid_check(&random_fluid_config(&mut ChaCha8Rng::seed_from_u64(seed)));
        prop_assume!(check.order_unchanged);
        prop_assert!(check.worst_relative_error() < FD_REL_TOL,
            "fd {:?} propagated {:?} regrouped {:?}", check.fd, check.propagated, check.regrouped);
    }

    #[test]
    fn gradient_is_sum_of_period_contributions(seed in any::<u64>(), fluid in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = if fluid { random_fluid_config(&mut rng) } else { random_discrete_config(&mut rng) };
        let path = simulate(&cfg).unwrap();
        let est = estimate(&path, cfg.weights, path.horizon, Estimator::for_mode(cfg.mode)).unwrap();
        let sum = est.from_contributions();
        for i in 0..2 {
            prop_assert!((est.dl_ds[i] - sum[i]).abs() <= 1e-9 * (1.0 + sum[i].abs()));
            prop_assert!(est.dl_ds[i].is_finite());
        }
        for c in &est.contributions {
            prop_assert!(c.start <= c.end && c.end <= path.horizon);
        }
    }
}

#[test]
fn mid_period_switch_example() {
    // Road 1 stays backlogged through several switches; road 2 drains and refills.
    let sched = RateSchedule { road1: vec![(0.0, 0.55)], road2: vec![(0.0, 0.27), (120.0, 0.1)] };
    let cfg = SimConfig::fluid(sched, CycleConfig::symmetric(5.0, 25.0).unwrap(), ThresholdVector::new(4.3, 2.7).unwrap(), 240.0);
    let check = fluid_check(&cfg);
    assert!(check.order_unchanged);
    assert!(check.mid_nep_switch);
    assert!(simulate(&cfg).unwrap().neps.iter().map(Vec::len).sum::<usize>() >= 2);
    assert!(check.worst_relative_error() < FD_REL_TOL, "{:?} {:?}", check.fd, check.propagated);
}

#[test]
fn oracle_agrees_with_estimator_on_fluid_paths() {
    let cfg = random_fluid_config(&mut ChaCha8Rng::seed_from_u64(3));
    let path = simulate(&cfg).unwrap();
    let ipa = estimate(&path, cfg.weights, path.horizon, Estimator::for_mode(cfg.mode)).unwrap().dl_ds;
    let fd = finite_difference_oracle(&cfg, cfg.thresholds, 1e-6, 1, 0, 0.1).unwrap();
    for i in 0..2 {
        assert!((ipa[i] - fd[i]).abs() <= FD_REL_TOL * fd[i].abs().max(1e-3), "{ipa:?} {fd:?}");
    }
}
