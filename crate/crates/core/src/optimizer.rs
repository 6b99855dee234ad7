//! Stochastic-approximation descent on the thresholds.
//!
//! Each iteration draws one fresh sample path at the current thresholds,
//! estimates the gradient on it and takes a projected step.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OptError, SimError};
use crate::ipa::{estimate, Estimator};
use crate::model::ThresholdVector;
use crate::sim::{sample_cost, simulate, SimConfig};

/// Paths averaged for a final cost estimate.
pub const EVAL_REPLICATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum Decay {
    Constant,
    /// `ρ_l = ρ0 / (1 + l/κ)`.
    Harmonic { kappa: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRule {
    pub rho0: f64,
    pub decay: Decay,
    pub s_min: f64,
    pub max_iterations: usize,
    /// Converged once `|s_{l+1} - s_l|∞` stays below this ...
    pub tolerance: f64,
    /// ... for this many consecutive iterations.
    pub window: usize,
    /// Sample paths averaged per gradient estimate.
    pub replications: usize,
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule {
            rho0: 2.0,
            decay: Decay::Harmonic { kappa: 50.0 },
            s_min: 0.1,
            max_iterations: 500,
            tolerance: 0.05,
            window: 20,
            replications: 1,
        }
    }
}

impl StepRule {
    pub fn validate(&self) -> Result<(), OptError> {
        if !(self.rho0 > 0.0 && self.rho0.is_finite()) {
            return Err(OptError::InvalidRule(format!("rho0 must be positive, got {}", self.rho0)));
        }
        if !(self.s_min > 0.0) {
            return Err(OptError::InvalidRule(format!("s_min must be positive, got {}", self.s_min)));
        }
        if let Decay::Harmonic { kappa } = self.decay {
            if !(kappa > 0.0) {
                return Err(OptError::InvalidRule(format!("kappa must be positive, got {kappa}")));
            }
        }
        if self.max_iterations == 0 || self.window == 0 || self.replications == 0 {
            return Err(OptError::InvalidRule("iteration counts must be at least 1".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(OptError::InvalidRule(format!("tolerance must be non-negative, got {}", self.tolerance)));
        }
        Ok(())
    }

    pub fn step_size(&self, l: usize) -> f64 {
        match self.decay {
            Decay::Constant => self.rho0,
            Decay::Harmonic { kappa } => self.rho0 / (1.0 + l as f64 / kappa),
        }
    }
}

/// `s - ρH`, clamped below at `s_min`.
pub fn gradient_step(s: ThresholdVector, h: [f64; 2], rho: f64, s_min: f64) -> ThresholdVector {
    debug_assert!(rho >= 0.0);
    let a = s.as_array();
    ThresholdVector::from_array([0, 1].map(|i| (a[i] - rho * h[i]).max(s_min)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptIteration {
    pub l: usize,
    pub s: ThresholdVector,
    pub gradient: [f64; 2],
    pub cost: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptRunRecord {
    pub s0: ThresholdVector,
    pub iterations: Vec<OptIteration>,
    /// Iterate after the last step.
    pub s_last: ThresholdVector,
    /// Mean of the iterates over the trailing convergence window.
    pub s_star: ThresholdVector,
    pub converged: bool,
    /// Replication means at `s0` and `s*` over the evaluation seeds.
    pub j0: f64,
    pub j_star: f64,
    pub j_star_se: f64,
    pub reduction: f64,
}

impl OptRunRecord {
    /// Trajectory as comma-separated rows `l,s1,s2,H1,H2,J,seed`.
    pub fn write_csv<W: Write>(&self, comments: &[String], mut out: W) -> io::Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "l,s1,s2,H1,H2,J,seed")?;
        for it in &self.iterations {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                it.l, it.s.s1, it.s.s2, it.gradient[0], it.gradient[1], it.cost, it.seed
            )?;
        }
        Ok(())
    }
}

/// Mean and standard error of a sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Sample costs at `s` on seeds `seed_base .. seed_base + replications`.
pub fn cost_samples(template: &SimConfig, s: ThresholdVector, replications: usize, seed_base: u64) -> Result<Vec<f64>, SimError> {
    (0..replications as u64)
        .into_par_iter()
        .map(|k| {
            let cfg = template.with_thresholds(s).with_seed(seed_base + k);
            let path = simulate(&cfg)?;
            Ok(sample_cost(&path, cfg.weights, path.horizon))
        })
        .collect()
}

/// Replication mean and standard error of the cost at `s`.
pub fn evaluate_cost(template: &SimConfig, s: ThresholdVector, replications: usize, seed_base: u64) -> Result<(f64, f64), SimError> {
    Ok(mean_se(&cost_samples(template, s, replications, seed_base)?))
}

/// Seed base for final cost estimates; disjoint from the descent seeds of
/// any run shorter than a million iterations.
pub fn eval_seed_base(seed0: u64) -> u64 {
    seed0.wrapping_add(1_000_000)
}

fn gradient_at(template: &SimConfig, s: ThresholdVector, seeds: &[u64], l: usize) -> Result<([f64; 2], f64), OptError> {
    let form = Estimator::for_mode(template.mode);
    let per_path: Vec<([f64; 2], f64)> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = template.with_thresholds(s).with_seed(seed);
            let path = simulate(&cfg).map_err(|source| OptError::Sim { iteration: l, source })?;
            let g = estimate(&path, cfg.weights, path.horizon, form)
                .map_err(|source| OptError::Estimator { iteration: l, source })?;
            Ok((g.dl_ds, sample_cost(&path, cfg.weights, path.horizon)))
        })
        .collect::<Result<_, OptError>>()?;
    let n = per_path.len() as f64;
    let g = [0, 1].map(|i| per_path.iter().map(|p| p.0[i]).sum::<f64>() / n);
    let j = per_path.iter().map(|p| p.1).sum::<f64>() / n;
    Ok((g, j))
}

/// Run the descent from `s0`. Iteration `l` uses seed `seed0 + l` (or a
/// block of `replications` consecutive seeds starting there).
pub fn optimize(template: &SimConfig, rule: &StepRule, s0: ThresholdVector, seed0: u64) -> Result<OptRunRecord, OptError> {
    rule.validate()?;
    s0.validate()?;
    template.validate()?;
    let mut s = s0;
    let mut iterations = Vec::new();
    let mut calm = 0;
    let mut converged = false;
    for l in 0..rule.max_iterations {
        let seed = seed0.wrapping_add((l * rule.replications) as u64);
        let seeds: Vec<u64> = (0..rule.replications as u64).map(|k| seed.wrapping_add(k)).collect();
        let (g, j) = gradient_at(template, s, &seeds, l)?;
        iterations.push(OptIteration { l, s, gradient: g, cost: j, seed });
        let next = gradient_step(s, g, rule.step_size(l), rule.s_min);
        let moved = (next.s1 - s.s1).abs().max((next.s2 - s.s2).abs());
        s = next;
        calm = if moved < rule.tolerance { calm + 1 } else { 0 };
        if calm >= rule.window {
            converged = true;
            break;
        }
    }
    let s_star = trailing_mean(&iterations, s, rule.window);
    let eval = eval_seed_base(seed0);
    let (j0, _) = evaluate_cost(template, s0, EVAL_REPLICATIONS, eval)?;
    let (j_star, j_star_se) = evaluate_cost(template, s_star, EVAL_REPLICATIONS, eval)?;
    let reduction = crate::experiments::cost_reduction(j0, j_star).unwrap_or(f64::NAN);
    Ok(OptRunRecord { s0, iterations, s_last: s, s_star, converged, j0, j_star, j_star_se, reduction })
}

/// Average of the last `window` iterates, counting the final one.
fn trailing_mean(iterations: &[OptIteration], last: ThresholdVector, window: usize) -> ThresholdVector {
    let tail: Vec<[f64; 2]> = iterations
        .iter()
        .skip(1)
        .map(|it| it.s.as_array())
        .chain(std::iter::once(last.as_array()))
        .rev()
        .take(window)
        .collect();
    let n = tail.len() as f64;
    ThresholdVector::from_array([0, 1].map(|i| tail.iter().map(|s| s[i]).sum::<f64>() / n))
}

/// Per-replication central differences `[J(s+δe_i) - J(s-δe_i)]/(2δ)` with
/// common random numbers on both sides.
pub fn finite_difference_samples(
    template: &SimConfig,
    s: ThresholdVector,
    delta: f64,
    replications: usize,
    seed_base: u64,
    s_min: f64,
) -> Result<Vec<[f64; 2]>, OptError> {
    if !(delta > 0.0) || s.s1 - delta < s_min || s.s2 - delta < s_min {
        return Err(OptError::InvalidRule(format!("finite difference needs delta > 0 and s - delta >= {s_min}")));
    }
    (0..replications as u64)
        .into_par_iter()
        .map(|k| {
            let cfg = template.with_seed(seed_base + k);
            let mut d = [0.0; 2];
            for (i, di) in d.iter_mut().enumerate() {
                let mut up = s.as_array();
                let mut down = s.as_array();
                up[i] += delta;
                down[i] -= delta;
                let cost = |a: [f64; 2]| -> Result<f64, SimError> {
                    let c = cfg.with_thresholds(ThresholdVector::from_array(a));
                    let p = simulate(&c)?;
                    Ok(sample_cost(&p, c.weights, p.horizon))
                };
                *di = (cost(up)? - cost(down)?) / (2.0 * delta);
            }
            Ok(d)
        })
        .collect()
}

/// Replication-averaged central finite difference of the cost.
pub fn finite_difference_oracle(
    template: &SimConfig,
    s: ThresholdVector,
    delta: f64,
    replications: usize,
    seed_base: u64,
    s_min: f64,
) -> Result<[f64; 2], OptError> {
    let d = finite_difference_samples(template, s, delta, replications, seed_base, s_min)?;
    let n = d.len() as f64;
    Ok([0, 1].map(|i| d.iter().map(|x| x[i]).sum::<f64>() / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CycleConfig;
    use crate::sim::StopRule;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn scenario_a() -> SimConfig {
        let mut c = SimConfig::discrete([2.0, 6.0], CycleConfig::symmetric(10.0, 30.0).unwrap(), ThresholdVector::new(5.0, 5.0).unwrap());
        c.stop = StopRule::Switches(400);
        c
    }

    #[test]
    fn step_examples() {
        let s = gradient_step(ThresholdVector::new(10.0, 1.0).unwrap(), [2.0, -1.0], 0.5, 0.1);
        assert_eq!(s.as_array(), [9.0, 1.5]);
        let s = gradient_step(ThresholdVector::new(0.2, 5.0).unwrap(), [10.0, 0.0], 0.05, 0.1);
        assert_relative_eq!(s.s1, 0.1);
        assert_eq!(s.s2, 5.0);
        let s0 = ThresholdVector::new(3.0, 4.0).unwrap();
        assert_eq!(gradient_step(s0, [7.0, -7.0], 0.0, 0.1), s0);
    }

    #[test]
    fn harmonic_schedule() {
        let r = StepRule::default();
        assert_eq!(r.step_size(0), 2.0);
        assert_relative_eq!(r.step_size(50), 1.0);
        let c = StepRule { decay: Decay::Constant, ..r };
        assert_eq!(c.step_size(400), 2.0);
    }

    #[test]
    fn rule_validation() {
        assert!(StepRule::default().validate().is_ok());
        assert!(StepRule { rho0: 0.0, ..Default::default() }.validate().is_err());
        assert!(StepRule { s_min: 0.0, ..Default::default() }.validate().is_err());
        assert!(StepRule { decay: Decay::Harmonic { kappa: 0.0 }, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn zero_arrivals_give_zero_difference() {
        let mut c = scenario_a();
        c.mean_interarrival = [f64::INFINITY; 2];
        let d = finite_difference_oracle(&c, ThresholdVector::new(3.0, 3.0).unwrap(), 0.5, 3, 0, 0.1).unwrap();
        assert_eq!(d, [0.0, 0.0]);
    }

    #[test]
    fn difference_rejects_bad_delta() {
        let c = scenario_a();
        assert!(finite_difference_oracle(&c, ThresholdVector::new(0.5, 3.0).unwrap(), 0.5, 1, 0, 0.1).is_err());
        assert!(finite_difference_oracle(&c, ThresholdVector::new(3.0, 3.0).unwrap(), 0.0, 1, 0, 0.1).is_err());
    }

    #[test]
    fn run_is_reproducible_and_projected() {
        let c = scenario_a();
        let rule = StepRule { max_iterations: 40, ..Default::default() };
        let s0 = ThresholdVector::new(10.0, 1.0).unwrap();
        let a = optimize(&c, &rule, s0, 3).unwrap();
        let b = optimize(&c, &rule, s0, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.iterations.iter().all(|it| it.s.s1 >= rule.s_min && it.s.s2 >= rule.s_min));
        assert!(a.s_star.s1 >= rule.s_min && a.s_star.s2 >= rule.s_min);
        assert_eq!(a.iterations[0].s, s0);
        assert_eq!(a.iterations[5].seed, 8);
        assert!(a.j_star < a.j0);
    }

    #[test]
    fn trajectory_csv() {
        let c = scenario_a();
        let rule = StepRule { max_iterations: 2, ..Default::default() };
        let rec = optimize(&c, &rule, ThresholdVector::new(4.0, 4.0).unwrap(), 0).unwrap();
        let mut buf = Vec::new();
        rec.write_csv(&["seed=0".into()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[1], "l,s1,s2,H1,H2,J,seed");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("0,4,4,"));
    }

    proptest! {
        #[test]
        fn step_never_below_floor(s1 in 0.1f64..20.0, s2 in 0.1f64..20.0, h1 in -50.0f64..50.0, h2 in -50.0f64..50.0, rho in 0.0f64..5.0) {
            let s = gradient_step(ThresholdVector::new(s1, s2).unwrap(), [h1, h2], rho, 0.1);
            prop_assert!(s.s1 >= 0.1 && s.s2 >= 0.1);
        }
    }
}
