//! Brute-force cost surfaces and scenario runs with their reports.

use std::fmt::Write as _;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OptError, SimError};
use crate::model::{CycleConfig, ThresholdVector};
use crate::optimizer::{eval_seed_base, mean_se, optimize, OptRunRecord, StepRule};
use crate::sim::{sample_cost, simulate, SimConfig};

/// `100 (J_initial - J_final) / J_initial`.
pub fn cost_reduction(j_initial: f64, j_final: f64) -> Result<f64, OptError> {
    if !(j_initial > 0.0) {
        return Err(OptError::NonPositiveCost(j_initial));
    }
    Ok(100.0 * (j_initial - j_final) / j_initial)
}

/// Evenly spaced axis `start, start + step, ..` up to and including `stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if !(self.step > 0.0) || self.stop < self.start {
            return Vec::new();
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub s1: Axis,
    pub s2: Axis,
}

impl Default for GridSpec {
    fn default() -> Self {
        let axis = Axis { start: 1.0, stop: 15.0, step: 1.0 };
        GridSpec { s1: axis, s2: axis }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSurface {
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    /// `mean[i][j]` is the replication mean at `(s1[i], s2[j])`.
    pub mean: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    pub replications: usize,
    pub argmin: ThresholdVector,
    pub min: f64,
}

impl CostSurface {
    /// Mean cost at the grid point nearest to `s`.
    pub fn nearest(&self, s: ThresholdVector) -> f64 {
        let pick = |axis: &[f64], v: f64| {
            (0..axis.len()).min_by(|&a, &b| (axis[a] - v).abs().total_cmp(&(axis[b] - v).abs())).unwrap_or(0)
        };
        self.mean[pick(&self.s1, s.s1)][pick(&self.s2, s.s2)]
    }

    /// Matrix file: first row holds the `s2` values, first column the `s1`
    /// values, cells the mean cost.
    pub fn write_matrix<W: Write>(&self, comments: &[String], mut out: W) -> io::Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        let header: Vec<String> = self.s2.iter().map(|v| v.to_string()).collect();
        writeln!(out, "s1\\s2,{}", header.join(","))?;
        for (i, row) in self.mean.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(out, "{},{}", self.s1[i], cells.join(","))?;
        }
        Ok(())
    }
}

/// Mean cost over `replications` paths at every grid point. Seeds
/// `seed_base ..` are reused at every point.
pub fn brute_force_surface(
    template: &SimConfig,
    grid: &GridSpec,
    replications: usize,
    seed_base: u64,
) -> Result<CostSurface, SimError> {
    let (a1, a2) = (grid.s1.values(), grid.s2.values());
    if a1.is_empty() || a2.is_empty() || replications == 0 {
        return Err(SimError::InvalidConfig("empty surface grid".into()));
    }
    let points: Vec<(usize, usize, u64)> = (0..a1.len())
        .flat_map(|i| (0..a2.len()).flat_map(move |j| (0..replications as u64).map(move |k| (i, j, k))))
        .collect();
    let costs: Vec<f64> = points
        .par_iter()
        .map(|&(i, j, k)| {
            let s = ThresholdVector::new(a1[i], a2[j])?;
            let cfg = template.with_thresholds(s).with_seed(seed_base + k);
            let path = simulate(&cfg)?;
            Ok(sample_cost(&path, cfg.weights, path.horizon))
        })
        .collect::<Result<_, SimError>>()?;
    let mut mean = vec![vec![0.0; a2.len()]; a1.len()];
    let mut se = mean.clone();
    for (cell, chunk) in costs.chunks(replications).enumerate() {
        let (i, j) = (cell / a2.len(), cell % a2.len());
        let (m, e) = mean_se(chunk);
        mean[i][j] = m;
        se[i][j] = e;
    }
    let mut best = (0, 0);
    for i in 0..a1.len() {
        for j in 0..a2.len() {
            if mean[i][j] < mean[best.0][best.1] {
                best = (i, j);
            }
        }
    }
    let argmin = ThresholdVector::from_array([a1[best.0], a2[best.1]]);
    let min = mean[best.0][best.1];
    Ok(CostSurface { s1: a1, s2: a2, mean, se, replications, argmin, min })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleMode {
    FixedCycles,
    GivenOptimalCycles,
}

/// Published result for one starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub s0: [f64; 2],
    pub j0: Option<f64>,
    pub s_ipa: [f64; 2],
    pub j_ipa: f64,
    pub reduction: f64,
}

/// Published values for a scenario, each group labelled with its table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub source: String,
    pub rows: Vec<ReferenceRow>,
    pub s_bf: [f64; 2],
    pub j_bf: f64,
    /// Cost under the static cycle controller and under cycle-only control.
    pub comparison_source: Option<String>,
    pub j_static: Option<f64>,
    pub j_cycles_only: Option<f64>,
    /// Published reduction of cycle-only control against static control.
    pub r_cycles_only: Option<f64>,
    pub r_threshold: Option<f64>,
}

impl Reference {
    /// Reduction of cycle-only control against static control, recomputed
    /// from the stored costs.
    pub fn cycles_only_reduction(&self) -> Option<f64> {
        cost_reduction(self.j_static?, self.j_cycles_only?).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub mean_interarrival: [f64; 2],
    pub cycles: CycleConfig,
    pub cycle_mode: CycleMode,
    pub s0: Vec<ThresholdVector>,
    pub reference: Option<Reference>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        self.cycles.validate()?;
        if self.s0.is_empty() {
            return Err(SimError::InvalidConfig(format!("scenario {} has no starting point", self.name)));
        }
        for s in &self.s0 {
            s.validate()?;
        }
        if self.mean_interarrival.iter().any(|&m| !(m > 0.0)) {
            return Err(SimError::InvalidConfig("mean interarrival times must be positive".into()));
        }
        Ok(())
    }

    /// Simulation template: `base` with this scenario's rates and cycles.
    pub fn template(&self, base: &SimConfig) -> SimConfig {
        SimConfig { mean_interarrival: self.mean_interarrival, cycles: self.cycles, ..base.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub spec: ScenarioSpec,
    pub runs: Vec<OptRunRecord>,
    pub surface: Option<CostSurface>,
    /// Reduction of the first run's `J*` against the static-controller cost.
    pub r_threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOptions {
    pub seed: u64,
    pub replications: usize,
    pub with_surface: bool,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        ScenarioOptions { seed: 0, replications: 10, with_surface: true }
    }
}

/// Optimize from every starting point and, optionally, build the
/// brute-force surface on the same evaluation seeds as the final costs.
pub fn run_scenario(
    spec: &ScenarioSpec,
    base: &SimConfig,
    rule: &StepRule,
    grid: &GridSpec,
    opts: &ScenarioOptions,
) -> Result<ScenarioReport, OptError> {
    spec.validate()?;
    let template = spec.template(base);
    let runs = spec
        .s0
        .iter()
        .map(|&s0| optimize(&template, rule, s0, opts.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let surface = if opts.with_surface {
        Some(brute_force_surface(&template, grid, opts.replications, eval_seed_base(opts.seed))?)
    } else {
        None
    };
    let r_threshold = match (spec.reference.as_ref().and_then(|r| r.j_static), runs.first()) {
        (Some(j1), Some(run)) => Some(cost_reduction(j1, run.j_star)?),
        _ => None,
    };
    Ok(ScenarioReport { spec: spec.clone(), runs, surface, r_threshold })
}

fn pair(s: [f64; 2]) -> String {
    format!("[{:.1}, {:.1}]", s[0], s[1])
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.prec$}"))
}

impl ScenarioReport {
    /// Aligned-column text, measured values beside the published ones.
    pub fn to_text(&self) -> String {
        let spec = &self.spec;
        let mut out = String::new();
        let title = match spec.cycle_mode {
            CycleMode::FixedCycles => "fixed cycle lengths",
            CycleMode::GivenOptimalCycles => "given optimal cycle lengths",
        };
        let th = spec.cycles;
        let _ = writeln!(
            out,
            "scenario {} ({title}): 1/alpha = {}, theta = [{}, {}, {}, {}]",
            spec.name,
            pair(spec.mean_interarrival),
            th.theta_min[0],
            th.theta_max[0],
            th.theta_min[1],
            th.theta_max[1]
        );
        let r = spec.reference.as_ref();
        if let Some(r) = r {
            let _ = writeln!(out, "reference: {}", r.source);
        }
        let _ = writeln!(
            out,
            "{:<14} {:>8} {:>8} {:<14} {:<14} {:>7} {:>7} {:>6} {:>6} {:>5} {:>5}",
            "s0", "J0", "J0_ref", "s*_IPA", "s*_ref", "J*", "J*_ref", "R%", "R_ref", "iter", "conv"
        );
        for (k, run) in self.runs.iter().enumerate() {
            let row = r.and_then(|r| r.rows.get(k));
            let _ = writeln!(
                out,
                "{:<14} {:>8.2} {:>8} {:<14} {:<14} {:>7.2} {:>7} {:>6.1} {:>6} {:>5} {:>5}",
                pair(run.s0.as_array()),
                run.j0,
                opt(row.and_then(|r| r.j0), 1),
                pair(run.s_star.as_array()),
                row.map_or_else(|| "-".into(), |r| pair(r.s_ipa)),
                run.j_star,
                opt(row.map(|r| r.j_ipa), 1),
                run.reduction,
                opt(row.map(|r| r.reduction), 0),
                run.iterations.len(),
                run.converged,
            );
        }
        if let Some(s) = &self.surface {
            let _ = writeln!(
                out,
                "brute force ({} paths/point): s*_BF = {} J*_BF = {:.2}   reference s*_BF = {} J*_BF = {}",
                s.replications,
                pair(s.argmin.as_array()),
                s.min,
                r.map_or_else(|| "-".into(), |r| pair(r.s_bf)),
                opt(r.map(|r| r.j_bf), 1)
            );
        }
        if let (Some(r3), Some(r)) = (self.r_threshold, r) {
            let _ = writeln!(
                out,
                "against static control ({}): J1* = {} J2* = {} R2 = {}% (reference {}%) R3 = {:.1}% (reference {}%)",
                r.comparison_source.as_deref().unwrap_or("-"),
                opt(r.j_static, 1),
                opt(r.j_cycles_only, 1),
                opt(r.cycles_only_reduction(), 1),
                opt(r.r_cycles_only, 0),
                r3,
                opt(r.r_threshold, 0)
            );
        }
        out
    }

    /// One record per quantity: `scenario,quantity,measured,reference,source`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,quantity,measured,reference,source\n");
        let name = &self.spec.name;
        let r = self.spec.reference.as_ref();
        let src = r.map_or("", |r| r.source.as_str());
        let mut rec = |q: String, m: f64, refv: Option<f64>, source: &str| {
            let _ = writeln!(out, "{name},{q},{m},{},{source}", refv.map_or_else(String::new, |v| v.to_string()));
        };
        for (k, run) in self.runs.iter().enumerate() {
            let row = r.and_then(|r| r.rows.get(k));
            rec(format!("run{k}.J0"), run.j0, row.and_then(|r| r.j0), src);
            rec(format!("run{k}.s1*"), run.s_star.s1, row.map(|r| r.s_ipa[0]), src);
            rec(format!("run{k}.s2*"), run.s_star.s2, row.map(|r| r.s_ipa[1]), src);
            rec(format!("run{k}.J*"), run.j_star, row.map(|r| r.j_ipa), src);
            rec(format!("run{k}.R"), run.reduction, row.map(|r| r.reduction), src);
        }
        if let Some(s) = &self.surface {
            rec("bf.s1*".into(), s.argmin.s1, r.map(|r| r.s_bf[0]), src);
            rec("bf.s2*".into(), s.argmin.s2, r.map(|r| r.s_bf[1]), src);
            rec("bf.J*".into(), s.min, r.map(|r| r.j_bf), src);
        }
        if let Some(r3) = self.r_threshold {
            let csrc = r.and_then(|r| r.comparison_source.as_deref()).unwrap_or("");
            if let Some(r2) = r.and_then(Reference::cycles_only_reduction) {
                rec("R2_cycles_only_vs_static".into(), r2, r.and_then(|r| r.r_cycles_only), csrc);
            }
            rec("R_vs_static".into(), r3, r.and_then(|r| r.r_threshold), csrc);
        }
        out
    }
}
