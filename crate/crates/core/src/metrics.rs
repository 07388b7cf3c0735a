//! Regret, maximum average regret and Monte Carlo aggregation over runs.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::estimator::{run_trajectory, RunOptions, Scenario, TrajectoryRecord};
use crate::history::HistoryCut;
use crate::matrix::{lambda_min, solve};
use crate::regression::RegressionProcess;

/// Runs simulated concurrently before their records are folded, in order.
/// Fixed so that results never depend on the worker count.
pub const RUN_CHUNK: usize = 16;

/// Simulates runs `0..runs` in parallel and hands each record to `visit` in
/// run order.
pub fn run_batch<F>(scenario: &Scenario, master_seed: u64, runs: usize, opts: RunOptions, mut visit: F) -> Result<()>
where
    F: FnMut(u64, TrajectoryRecord) -> Result<()>,
{
    scenario.validate()?;
    let ids: Vec<u64> = (0..runs as u64).collect();
    for chunk in ids.chunks(RUN_CHUNK) {
        let records: Vec<Result<TrajectoryRecord>> = chunk
            .par_iter()
            .map(|&r| run_trajectory(scenario, master_seed, r, opts))
            .collect();
        for (&r, rec) in chunk.iter().zip(records) {
            visit(r, rec?)?;
        }
    }
    Ok(())
}

/// Running sum and sum of squares.
#[derive(Debug, Clone, Default, PartialEq)]
struct Moments {
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Moments {
    fn add(&mut self, values: &[f64]) {
        if self.sum.is_empty() {
            self.sum = vec![0.0; values.len()];
            self.sq = vec![0.0; values.len()];
        }
        for ((s, q), v) in self.sum.iter_mut().zip(&mut self.sq).zip(values) {
            *s += v;
            *q += v * v;
        }
    }

    fn mean(&self, idx: usize, count: usize) -> f64 {
        self.sum[idx] / count as f64
    }

    /// Standard error of the mean.
    fn se(&self, idx: usize, count: usize) -> f64 {
        if count < 2 {
            return 0.0;
        }
        let c = count as f64;
        let mean = self.sum[idx] / c;
        let var = ((self.sq[idx] - c * mean * mean) / (c - 1.0)).max(0.0);
        (var / c).sqrt()
    }
}

/// Streaming Monte Carlo summary of runs sharing one configuration. Memory
/// is proportional to the number of recorded rows, not the number of runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunAggregate {
    pub nodes: usize,
    pub steps: Vec<usize>,
    pub runs: usize,
    v: Moments,
    cum_v: Moments,
    global_norm: Moments,
    node_errors: Moments,
    estimate_norms: Moments,
    cum_regret: Moments,
    /// `Σ_runs cum_regret_i · cum_v` per row and node.
    regret_cum_v: Vec<f64>,
}

impl RunAggregate {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, r: &TrajectoryRecord) -> Result<()> {
        if self.runs == 0 {
            self.nodes = r.nodes;
            self.steps = r.steps.clone();
            self.regret_cum_v = vec![0.0; r.cum_regret.len()];
        } else if self.steps != r.steps || self.nodes != r.nodes {
            return Err(invalid("runs recorded different steps and cannot be aggregated"));
        }
        self.v.add(&r.v);
        self.cum_v.add(&r.cum_v);
        self.global_norm.add(&r.global_norm);
        self.node_errors.add(&r.node_errors);
        self.estimate_norms.add(&r.estimate_norms);
        self.cum_regret.add(&r.cum_regret);
        for (row, &s) in r.cum_v.iter().enumerate() {
            for i in 0..self.nodes {
                let idx = row * self.nodes + i;
                self.regret_cum_v[idx] += r.cum_regret[idx] * s;
            }
        }
        self.runs += 1;
        Ok(())
    }

    fn check(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(invalid("no runs to aggregate"));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.steps.len()
    }

    pub fn row_of(&self, step: usize) -> Result<usize> {
        self.steps
            .binary_search(&step)
            .map_err(|_| invalid(format!("step {step} was not recorded")))
    }

    pub fn mean_v(&self, row: usize) -> f64 {
        self.v.mean(row, self.runs)
    }

    pub fn se_v(&self, row: usize) -> f64 {
        self.v.se(row, self.runs)
    }

    /// Mean of `Σ_{t≤k} V(t)`.
    pub fn mean_cum_v(&self, row: usize) -> f64 {
        self.cum_v.mean(row, self.runs)
    }

    pub fn mean_global_norm(&self, row: usize) -> f64 {
        self.global_norm.mean(row, self.runs)
    }

    pub fn se_global_norm(&self, row: usize) -> f64 {
        self.global_norm.se(row, self.runs)
    }

    pub fn mean_node_error(&self, row: usize, node: usize) -> f64 {
        self.node_errors.mean(row * self.nodes + node, self.runs)
    }

    pub fn mean_estimate_norm(&self, row: usize, node: usize) -> f64 {
        self.estimate_norms.mean(row * self.nodes + node, self.runs)
    }

    /// Monte Carlo estimate of `Regret(i, T)` at a recorded row.
    pub fn mean_regret(&self, row: usize, node: usize) -> f64 {
        self.cum_regret.mean(row * self.nodes + node, self.runs)
    }

    pub fn se_regret(&self, row: usize, node: usize) -> f64 {
        self.cum_regret.se(row * self.nodes + node, self.runs)
    }

    /// `max_i Regret(i, T) / (T^(1−τ) ln T)` at a recorded row.
    pub fn mar(&self, row: usize, tau: f64) -> Result<f64> {
        self.check()?;
        let t = self.steps[row];
        let max = (0..self.nodes).map(|i| self.mean_regret(row, i)).fold(f64::NEG_INFINITY, f64::max);
        mar_from_regret(max, t, tau)
    }

    /// Mean and standard error of `Regret(i,T) − c Σ_{t≤T} V(t)` across runs.
    fn bound_gap(&self, row: usize, node: usize, c: f64) -> (f64, f64) {
        let n = self.runs as f64;
        let idx = row * self.nodes + node;
        let (sr, qr) = (self.cum_regret.sum[idx], self.cum_regret.sq[idx]);
        let (ss, qs) = (self.cum_v.sum[row], self.cum_v.sq[row]);
        let x = self.regret_cum_v[idx];
        let mean = (sr - c * ss) / n;
        if self.runs < 2 {
            return (mean, 0.0);
        }
        let sum_sq = qr - 2.0 * c * x + c * c * qs;
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (mean, (var / n).sqrt())
    }
}

/// `regret / (T^(1−τ) ln T)`.
pub fn mar_from_regret(regret: f64, t: usize, tau: f64) -> Result<f64> {
    if t < 2 {
        return Err(invalid(format!("maximum average regret needs T >= 2, got {t}")));
    }
    let t = t as f64;
    Ok(regret / (t.powf(1.0 - tau) * t.ln()))
}

/// `argmin_x Σ_{t≤T} Σ_j ½ E‖H_j(t) x − y_j(t)‖²` from the normal equations
/// with the closed-form grams. With zero-mean noise the right-hand side is
/// `G x0`.
pub fn oracle_parameter(regression: &RegressionProcess, x0: &[f64], horizon: usize) -> Result<Vec<f64>> {
    if x0.len() != regression.dim() {
        return Err(invalid("x0 does not match the regression dimension"));
    }
    let g = regression.spatio_temporal_gram(0..horizon + 1, &HistoryCut::start())?;
    let lmin = lambda_min(&g)?;
    if lmin <= crate::excitation::RANK_TOL * g.max_abs().max(1.0) {
        return Err(Error::UnobservableHorizon { lambda_min: lmin });
    }
    let rhs = g.mul_vec(x0);
    solve(&g, &rhs)
}

/// Monte Carlo estimate of `Regret(node, T)` over complete run records.
pub fn empirical_regret(runs: &[TrajectoryRecord], node: usize, t: usize) -> Result<f64> {
    if runs.is_empty() {
        return Err(invalid("no runs given"));
    }
    let mut total = 0.0;
    for r in runs {
        if node >= r.nodes {
            return Err(invalid(format!("node {node} out of range")));
        }
        let row = r.row_of(t).ok_or_else(|| invalid(format!("step {t} was not recorded")))?;
        total += r.cum_regret_at(row)[node];
    }
    Ok(total / runs.len() as f64)
}

/// `max_i Regret(i, T) / (T^(1−τ) ln T)` over complete run records.
pub fn mar(runs: &[TrajectoryRecord], t: usize, tau: f64) -> Result<f64> {
    if t < 2 {
        return Err(invalid(format!("maximum average regret needs T >= 2, got {t}")));
    }
    let nodes = runs.first().ok_or_else(|| invalid("no runs given"))?.nodes;
    let mut max = f64::NEG_INFINITY;
    for i in 0..nodes {
        max = max.max(empirical_regret(runs, i, t)?);
    }
    mar_from_regret(max, t, tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegretBoundViolation {
    pub step: usize,
    pub node: usize,
    pub gap: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretBoundReport {
    pub rho0: f64,
    pub runs: usize,
    pub rows_checked: usize,
    /// Largest `mean gap / max(se, tiny)` seen, positive when the regret
    /// exceeded the bound on average somewhere.
    pub worst_gap: f64,
    pub violations: Vec<RegretBoundViolation>,
}

impl RegretBoundReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `Regret(i,T) ≤ ½ N ρ₀ Σ_{t≤T} E V(t)` at every recorded row and
/// node, allowing two standard errors of the per-run gap.
pub fn lemma_regret_bound_check(agg: &RunAggregate, rho0: f64) -> Result<RegretBoundReport> {
    agg.check()?;
    let c = 0.5 * agg.nodes as f64 * rho0;
    let mut violations = Vec::new();
    let mut worst_gap = f64::NEG_INFINITY;
    for row in 0..agg.rows() {
        for i in 0..agg.nodes {
            let (gap, se) = agg.bound_gap(row, i, c);
            worst_gap = worst_gap.max(gap);
            let slack = 1e-12 * (c * agg.mean_cum_v(row)).abs();
            if gap > 2.0 * se + slack {
                violations.push(RegretBoundViolation {
                    step: agg.steps[row],
                    node: i,
                    gap,
                    se,
                });
            }
        }
    }
    Ok(RegretBoundReport {
        rho0,
        runs: agg.runs,
        rows_checked: agg.rows(),
        worst_gap,
        violations,
    })
}

/// Mean regret and related series across runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretSeries {
    pub runs: usize,
    pub tau: f64,
    pub oracle: Option<Vec<f64>>,
    pub steps: Vec<usize>,
    pub mean_v: Vec<f64>,
    /// `regret[row][node]`.
    pub regret: Vec<Vec<f64>>,
    /// Absent for `T < 2`.
    pub mar: Vec<Option<f64>>,
}

impl RunAggregate {
    pub fn regret_series(&self, tau: f64, oracle: Option<Vec<f64>>) -> Result<RegretSeries> {
        self.check()?;
        Ok(RegretSeries {
            runs: self.runs,
            tau,
            oracle,
            steps: self.steps.clone(),
            mean_v: (0..self.rows()).map(|r| self.mean_v(r)).collect(),
            regret: (0..self.rows())
                .map(|r| (0..self.nodes).map(|i| self.mean_regret(r, i)).collect())
                .collect(),
            mar: (0..self.rows()).map(|r| self.mar(r, tau).ok()).collect(),
        })
    }
}

/// Convenience: aggregate `runs` runs of a scenario.
pub fn aggregate_runs(scenario: &Scenario, master_seed: u64, runs: usize, opts: RunOptions) -> Result<RunAggregate> {
    let mut agg = RunAggregate::new();
    run_batch(scenario, master_seed, runs, opts, |_, rec| agg.add(&rec))?;
    Ok(agg)
}
